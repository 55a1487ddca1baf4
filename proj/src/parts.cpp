#include "densecorr/parts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "densecorr/parallel.hpp"

namespace densecorr {

void DetectorConfig::validate() const {
  if (!(c > 0.0)) throw InvalidArgument("c must be > 0");
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in [0, 1]");
  if (!(sigma > 0.0)) throw InvalidArgument("sigma must be > 0");
  if (neighborhood < 1 || neighborhood % 2 == 0) throw InvalidArgument("neighborhood must be odd and positive");
  if (positives_per_keypoint < 1 || canonical_box < 1 || hnm_rounds < 0 || hnm_batch < 1)
    throw InvalidArgument("detector counts must be positive");
}

std::vector<float> stack_neighborhood(const FeatureGrid& grid, Cell cell, int n) {
  if (n < 1 || n % 2 == 0) throw InvalidArgument("neighborhood must be odd and positive");
  const int half = n / 2;
  std::vector<float> out(static_cast<std::size_t>(n) * n * grid.dim(), 0.0f);
  auto dst = out.begin();
  for (int di = -half; di <= half; ++di)
    for (int dj = -half; dj <= half; ++dj) {
      const Cell c{cell.row + di, cell.col + dj};
      if (grid.contains(c)) std::copy(grid.at(c).begin(), grid.at(c).end(), dst);
      dst += grid.dim();
    }
  return out;
}

GridGeometry stacked_geometry(const GridGeometry& geometry, int n) {
  GridGeometry g = geometry;
  g.rf_size += (n - 1) * geometry.stride;
  return g;
}

namespace {

double squared_distance(Point a, Point b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy;
}

const Keypoint* visible_keypoint(const AnnotatedGrid& item, const std::string& name) {
  auto it = item.keypoints->points.find(name);
  return (it != item.keypoints->points.end() && it->second.visible) ? &it->second : nullptr;
}

}  // namespace

TrainingSet build_training_set(std::span<const AnnotatedGrid> data, const std::string& keypoint,
                               const DetectorConfig& config) {
  config.validate();
  TrainingSet set;
  bool seen = false;
  for (std::size_t img = 0; img < data.size(); ++img) {
    const Keypoint* kp = visible_keypoint(data[img], keypoint);
    if (!kp) continue;
    seen = true;
    const FeatureGrid& grid = *data[img].grid;
    const Point target{kp->x, kp->y};
    const GridGeometry stacked = stacked_geometry(grid.geometry(), config.neighborhood);
    const double half_rf = 0.5 * stacked.rf_size;

    std::vector<Cell> cells;
    for (int i = 0; i < grid.height(); ++i)
      for (int j = 0; j < grid.width(); ++j) cells.push_back({i, j});
    std::stable_sort(cells.begin(), cells.end(), [&](Cell a, Cell b) {
      return squared_distance(rf_center(grid.geometry(), a), target) <
             squared_distance(rf_center(grid.geometry(), b), target);
    });
    const std::size_t npos = std::min<std::size_t>(cells.size(), static_cast<std::size_t>(config.positives_per_keypoint));
    std::set<Cell> positive(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(npos));
    for (std::size_t r = 0; r < npos; ++r) {
      set.positives.add(stack_neighborhood(grid, cells[r], config.neighborhood));
      set.positive_origin.push_back({img, cells[r]});
    }
    for (int i = 0; i < grid.height(); ++i)
      for (int j = 0; j < grid.width(); ++j) {
        const Point c = rf_center(grid.geometry(), {i, j});
        const bool contains = std::abs(c.x - target.x) <= half_rf && std::abs(c.y - target.y) <= half_rf;
        if (contains || positive.count({i, j})) continue;
        set.negatives.add(stack_neighborhood(grid, {i, j}, config.neighborhood));
        set.negative_origin.push_back({img, {i, j}});
      }
  }
  if (!seen) throw InvalidArgument("keypoint '" + keypoint + "' is not visible in any training image");
  return set;
}

TrainingSet build_training_set_by_distance(std::span<const AnnotatedGrid> data, const std::string& keypoint,
                                           double positive_radius, double negative_radius, int neighborhood) {
  if (!(positive_radius >= 0.0 && negative_radius > positive_radius))
    throw InvalidArgument("need 0 <= positive_radius < negative_radius");
  TrainingSet set;
  bool seen = false;
  for (std::size_t img = 0; img < data.size(); ++img) {
    const Keypoint* kp = visible_keypoint(data[img], keypoint);
    if (!kp) continue;
    seen = true;
    const FeatureGrid& grid = *data[img].grid;
    for (int i = 0; i < grid.height(); ++i)
      for (int j = 0; j < grid.width(); ++j) {
        const double d = std::sqrt(squared_distance(rf_center(grid.geometry(), {i, j}), {kp->x, kp->y}));
        if (d <= positive_radius) {
          set.positives.add(stack_neighborhood(grid, {i, j}, neighborhood));
          set.positive_origin.push_back({img, {i, j}});
        } else if (d >= negative_radius) {
          set.negatives.add(stack_neighborhood(grid, {i, j}, neighborhood));
          set.negative_origin.push_back({img, {i, j}});
        }
      }
  }
  if (!seen) throw InvalidArgument("keypoint '" + keypoint + "' is not visible in any training image");
  return set;
}

namespace {

SampleMatrix gather(const SampleMatrix& pool, const std::vector<std::size_t>& rows) {
  SampleMatrix out(pool.dim());
  for (std::size_t r : rows) out.add(pool.row(r));
  return out;
}

LinearModel fit(const SampleMatrix& positives, const SampleMatrix& negatives, const std::string& label,
                const DetectorConfig& config) {
  SvmOptions opts;
  opts.c = config.c;
  opts.seed = config.seed;
  LinearModel m = train_svm(positives, negatives, opts).model;
  m.class_label = label;
  return m;
}

}  // namespace

MiningResult mine_hard_negatives(const LinearModel& initial, const SampleMatrix& positives, const SampleMatrix& pool,
                                 std::vector<std::size_t> active, const DetectorConfig& config) {
  MiningResult result{initial, std::move(active), 0, {initial}};
  std::vector<char> in_active(pool.size(), 0);
  for (std::size_t r : result.active) in_active.at(r) = 1;

  std::vector<double> scores(pool.size());
  for (int round = 0; round < config.hnm_rounds; ++round) {
    ++result.scans;
    parallel_for(pool.size(), config.threads, [&](std::size_t r) {
      scores[r] = in_active[r] ? 0.0 : result.model.score(pool.row(r));
    });
    std::vector<std::size_t> violators;
    for (std::size_t r = 0; r < pool.size(); ++r)
      if (!in_active[r] && scores[r] > -1.0) violators.push_back(r);
    if (violators.empty()) break;
    std::stable_sort(violators.begin(), violators.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    if (violators.size() > static_cast<std::size_t>(config.hnm_batch)) violators.resize(config.hnm_batch);
    for (std::size_t r : violators) {
      in_active[r] = 1;
      result.active.push_back(r);
    }
    result.model = fit(positives, gather(pool, result.active), initial.class_label, config);
    result.history.push_back(result.model);
  }
  return result;
}

MiningResult train_detector(const TrainingSet& set, const std::string& label, const DetectorConfig& config) {
  config.validate();
  if (set.positives.empty() || set.negatives.empty()) throw InvalidArgument("detector training needs both classes");
  std::vector<std::size_t> order(set.negatives.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);
  std::shuffle(order.begin(), order.end(), rng);
  if (order.size() > static_cast<std::size_t>(config.hnm_batch)) order.resize(config.hnm_batch);
  std::sort(order.begin(), order.end());
  const LinearModel initial = fit(set.positives, gather(set.negatives, order), label, config);
  return mine_hard_negatives(initial, set.positives, set.negatives, std::move(order), config);
}

Classification classify_keypoint(std::span<const LinearModel> models, std::span<const float> feature) {
  if (models.empty()) throw InvalidArgument("classify_keypoint needs at least one model");
  Classification out;
  std::size_t best = 0;
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (models[m].dim() != static_cast<int>(feature.size()))
      throw InvalidArgument("model '" + models[m].class_label + "' does not match the feature dimension");
    out.scores.push_back(models[m].score(feature));
    if (out.scores[m] > out.scores[best] ||
        (out.scores[m] == out.scores[best] && models[m].class_label < models[best].class_label))
      best = m;
  }
  out.label = models[best].class_label;
  return out;
}

double prior_score(Point candidate, Point mu, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("prior sigma must be > 0");
  return std::exp(-squared_distance(candidate, mu) / (2.0 * sigma * sigma));
}

double squash(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

double fuse_scores(double s, double p, double eta) {
  if (!(s > 0.0 && s <= 1.0 && p > 0.0 && p <= 1.0)) throw InvalidArgument("fused scores must lie in (0, 1]");
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in [0, 1]");
  return std::pow(s, 1.0 - eta) * std::pow(p, eta);
}

double fuse_log_scores(double log_s, double log_p, double eta) {
  double f = 0.0;
  if (eta < 1.0) f += (1.0 - eta) * log_s;
  if (eta > 0.0) f += eta * log_p;
  return f;
}

Cell argmax_cell(std::span<const double> values, int rows, int cols) {
  if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * cols)
    throw InvalidArgument("argmax_cell: bad map shape");
  // max_element returns the first maximum, i.e. the smallest row-major index.
  const auto at = static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
  return {at / cols, at % cols};
}

KeypointPrediction predict_keypoint(const FeatureGrid& grid, const LinearModel& model, std::optional<Point> prior_mu,
                                    const DetectorConfig& config) {
  config.validate();
  const int rows = grid.height(), cols = grid.width();
  if (rows < 1 || cols < 1) throw InvalidArgument("predict_keypoint on an empty grid");
  ScoreMap map{rows, cols, std::vector<double>(static_cast<std::size_t>(rows) * cols),
               std::vector<double>(static_cast<std::size_t>(rows) * cols)};
  parallel_for(static_cast<std::size_t>(rows), config.threads, [&](std::size_t i) {
    for (int j = 0; j < cols; ++j) {
      const Cell c{static_cast<int>(i), j};
      const std::size_t at = i * cols + j;
      const double m = model.score(stack_neighborhood(grid, c, config.neighborhood));
      // log of the logistic, stable for large |m|.
      const double log_s = m >= 0 ? -std::log1p(std::exp(-m)) : m - std::log1p(std::exp(m));
      double log_p = 0.0;
      if (prior_mu) log_p = -squared_distance(rf_center(grid.geometry(), c), *prior_mu) / (2.0 * config.sigma * config.sigma);
      map.margin[at] = m;
      map.log_fused[at] = fuse_log_scores(log_s, log_p, config.eta);
    }
  });
  const Cell best = argmax_cell(map.log_fused, rows, cols);
  return {rf_center(grid.geometry(), best), best, std::move(map)};
}

}  // namespace densecorr
