#include "densecorr/svm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "densecorr/binary_io.hpp"
#include "densecorr/types.hpp"

namespace densecorr {

void SampleMatrix::add(std::span<const float> row) {
  if (dim_ == 0 && data_.empty()) dim_ = static_cast<int>(row.size());
  if (static_cast<int>(row.size()) != dim_) throw InvalidArgument("sample dimension mismatch");
  data_.insert(data_.end(), row.begin(), row.end());
}

double LinearModel::score(std::span<const float> x) const {
  if (x.size() != weights.size()) throw InvalidArgument("model and feature dimensions differ");
  double s = bias;
  for (std::size_t k = 0; k < x.size(); ++k) s += weights[k] * x[k];
  return s;
}

namespace {

struct Problem {
  std::vector<std::span<const float>> x;
  std::vector<double> y;
  std::vector<double> sq_norm;
  int dim = 0;
  double c = 0.0;
};

double dot(const std::vector<double>& w, std::span<const float> x) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += w[k] * x[k];
  return s;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

// Dual state at a fixed bias b: w = sum alpha_i y_i x_i.
struct DualState {
  std::vector<double> alpha;
  std::vector<double> w;
  double balance = 0.0;  // sum alpha_i y_i
};

// max_a sum a_i (1 - y_i b) - 1/2 |sum a_i y_i x_i|^2 over 0 <= a <= c, by
// cyclic coordinate descent; warm-started from `state`.
void solve_fixed_bias(const Problem& pb, double b, const std::vector<std::size_t>& order, DualState& state) {
  constexpr double kEps = 1e-6;
  constexpr int kMaxEpochs = 500;
  for (int epoch = 0; epoch < kMaxEpochs; ++epoch) {
    double pg_max = -1e300, pg_min = 1e300;
    for (std::size_t i : order) {
      const double yi = pb.y[i];
      const double margin_target = 1.0 - yi * b;
      const double g = yi * dot(state.w, pb.x[i]) - margin_target;
      double& a = state.alpha[i];
      double pg = g;
      if (a <= 0.0) pg = std::min(g, 0.0);
      else if (a >= pb.c) pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg == 0.0) continue;
      const double old = a;
      a = pb.sq_norm[i] > 0.0 ? std::clamp(a - g / pb.sq_norm[i], 0.0, pb.c) : (g < 0.0 ? pb.c : 0.0);
      const double delta = (a - old) * yi;
      if (delta != 0.0)
        for (std::size_t k = 0; k < pb.x[i].size(); ++k) state.w[k] += delta * pb.x[i][k];
    }
    if (pg_max - pg_min <= kEps) break;
  }
  state.balance = 0.0;
  for (std::size_t i = 0; i < state.alpha.size(); ++i) state.balance += state.alpha[i] * pb.y[i];
}

// Exact minimizer over b of sum max(0, 1 - y_i (s_i + b)); the middle of the
// optimal interval when it is not a single point.
double best_bias(const std::vector<double>& s, const std::vector<double>& y) {
  std::vector<double> knots(s.size());
  std::size_t positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    knots[i] = y[i] - s[i];
    if (y[i] > 0) ++positives;
  }
  std::vector<std::size_t> idx(s.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return knots[a] < knots[b]; });
  // Left of every knot the slope is -positives; crossing a positive knot adds
  // one, crossing a negative knot adds one.
  long slope = -static_cast<long>(positives);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    slope += 1;
    if (slope > 0) return knots[idx[r]];
    if (slope == 0) return r + 1 < idx.size() ? 0.5 * (knots[idx[r]] + knots[idx[r + 1]]) : knots[idx[r]];
  }
  return idx.empty() ? 0.0 : knots[idx.back()];
}

double primal(const Problem& pb, const std::vector<double>& w, const std::vector<double>& s, double b) {
  double reg = 0.0;
  for (double v : w) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) loss += std::max(0.0, 1.0 - pb.y[i] * (s[i] + b));
  return 0.5 * reg + pb.c * loss;
}

// SMO on the full dual (with sum alpha_i y_i = 0) using second-order
// working-set selection. Used when bias bisection stalls because
// near-duplicate coordinates make the fixed-bias sweeps crawl.
struct Polished {
  std::vector<double> alpha;
  std::vector<double> w;
};

Polished smo_polish(const Problem& pb, std::vector<double> alpha, double tolerance, std::size_t max_steps) {
  const std::size_t n = alpha.size();
  // Restore feasibility: clip to the box, then shrink the heavier class.
  double pos = 0.0, neg = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    alpha[k] = std::clamp(alpha[k], 0.0, pb.c);
    (pb.y[k] > 0 ? pos : neg) += alpha[k];
  }
  if (pos > neg || neg > pos) {
    const bool shrink_pos = pos > neg;
    const double f = shrink_pos ? neg / pos : pos / neg;
    for (std::size_t k = 0; k < n; ++k)
      if ((pb.y[k] > 0) == shrink_pos) alpha[k] *= f;
  }
  std::vector<double> w(pb.dim, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (int d = 0; d < pb.dim; ++d) w[d] += alpha[k] * pb.y[k] * pb.x[k][d];
  std::vector<double> grad(n);  // y_i w.x_i - 1
  for (std::size_t k = 0; k < n; ++k) grad[k] = pb.y[k] * dot(w, pb.x[k]) - 1.0;
  std::vector<double> s(n), kernel(n), delta(pb.dim);
  for (std::size_t step = 0; step < max_steps; ++step) {
    double m = -1e300, big_m = 1e300;
    std::size_t i = n;
    for (std::size_t k = 0; k < n; ++k) {
      const double v = -pb.y[k] * grad[k];
      const bool up = pb.y[k] > 0 ? alpha[k] < pb.c : alpha[k] > 0.0;
      const bool low = pb.y[k] > 0 ? alpha[k] > 0.0 : alpha[k] < pb.c;
      if (up && v > m) m = v, i = k;
      if (low && v < big_m) big_m = v;
    }
    if (i == n || m - big_m <= 1e-13) break;
    if (step % 16 == 0) {
      for (std::size_t k = 0; k < n; ++k) s[k] = pb.y[k] * (grad[k] + 1.0);
      double reg = 0.0, sum = 0.0;
      for (double v : w) reg += v * v;
      for (double a : alpha) sum += a;
      const double p = primal(pb, w, s, best_bias(s, pb.y));
      const double d = sum - 0.5 * reg;
      if ((p - d) / std::max(std::abs(p), 1e-300) <= tolerance) break;
    }
    std::size_t j = n;
    double best_gain = 0.0, best_curv = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool low = pb.y[k] > 0 ? alpha[k] > 0.0 : alpha[k] < pb.c;
      const double v = -pb.y[k] * grad[k];
      if (!low || v >= m) continue;
      kernel[k] = dot(pb.x[i], pb.x[k]);
      double curv = pb.sq_norm[i] + pb.sq_norm[k] - 2.0 * kernel[k];
      if (curv <= 0.0) curv = 1e-12;
      const double gain = (m - v) * (m - v) / curv;
      if (j == n || gain > best_gain) j = k, best_gain = gain, best_curv = curv;
    }
    if (j == n) break;
    const double viol = m + pb.y[j] * grad[j];
    double t = viol / best_curv;
    t = std::min(t, pb.y[i] > 0 ? pb.c - alpha[i] : alpha[i]);
    t = std::min(t, pb.y[j] > 0 ? alpha[j] : pb.c - alpha[j]);
    alpha[i] = std::clamp(alpha[i] + pb.y[i] * t, 0.0, pb.c);
    alpha[j] = std::clamp(alpha[j] - pb.y[j] * t, 0.0, pb.c);
    for (int k = 0; k < pb.dim; ++k) {
      delta[k] = t * (static_cast<double>(pb.x[i][k]) - pb.x[j][k]);
      w[k] += delta[k];
    }
    for (std::size_t k = 0; k < n; ++k) grad[k] += pb.y[k] * dot(delta, pb.x[k]);
  }
  return {std::move(alpha), std::move(w)};
}

}  // namespace

double svm_objective(const LinearModel& model, const SampleMatrix& positives, const SampleMatrix& negatives, double c) {
  double reg = 0.0;
  for (double v : model.weights) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) loss += std::max(0.0, 1.0 - model.score(positives.row(i)));
  for (std::size_t i = 0; i < negatives.size(); ++i) loss += std::max(0.0, 1.0 + model.score(negatives.row(i)));
  return 0.5 * reg + c * loss;
}

SvmResult train_svm(const SampleMatrix& positives, const SampleMatrix& negatives, const SvmOptions& options) {
  if (positives.empty() || negatives.empty()) throw InvalidArgument("train_svm needs samples of both classes");
  if (positives.dim() != negatives.dim()) throw InvalidArgument("positive and negative dimensions differ");
  if (!(options.c > 0.0)) throw InvalidArgument("SVM parameter c must be > 0");

  Problem pb;
  pb.dim = positives.dim();
  pb.c = options.c;
  double max_sq = 0.0;
  auto push = [&](std::span<const float> x, double y) {
    pb.x.push_back(x);
    pb.y.push_back(y);
    double n = 0.0;
    for (float v : x) n += static_cast<double>(v) * v;
    pb.sq_norm.push_back(n);
    max_sq = std::max(max_sq, n);
  };
  for (std::size_t i = 0; i < positives.size(); ++i) push(positives.row(i), 1.0);
  for (std::size_t i = 0; i < negatives.size(); ++i) push(negatives.row(i), -1.0);
  const std::size_t n = pb.x.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  // |w| <= c * n * max|x|, so at |b| >= 1 + c * n * max|x|^2 one class is
  // entirely inside its margin and the balance has a definite sign.
  const double bound = 1.0 + options.c * static_cast<double>(n) * max_sq;
  auto fresh = [&] { return DualState{std::vector<double>(n, 0.0), std::vector<double>(pb.dim, 0.0), 0.0}; };
  DualState lo = fresh(), hi = fresh();
  double b_lo = -bound, b_hi = bound;
  solve_fixed_bias(pb, b_lo, order, lo);  // balance >= 0
  solve_fixed_bias(pb, b_hi, order, hi);  // balance <= 0

  SvmResult best;
  std::vector<double> best_alpha;
  best.relative_gap = std::numeric_limits<double>::infinity();
  std::vector<double> s(n);
  for (int it = 0; it <= options.max_outer_iterations; ++it) {
    // Convex combination of the bracket ends that satisfies sum alpha y = 0.
    const double span = lo.balance - hi.balance;
    const double t = span > 0.0 ? lo.balance / span : 0.5;  // weight on hi
    std::vector<double> w(pb.dim);
    for (int k = 0; k < pb.dim; ++k) w[k] = (1.0 - t) * lo.w[k] + t * hi.w[k];
    double alpha_sum = 0.0, reg = 0.0;
    std::vector<double> alpha(n);
    for (std::size_t i = 0; i < n; ++i) {
      alpha[i] = (1.0 - t) * lo.alpha[i] + t * hi.alpha[i];
      alpha_sum += alpha[i];
    }
    for (double v : w) reg += v * v;
    for (std::size_t i = 0; i < n; ++i) s[i] = dot(w, pb.x[i]);
    const double b = best_bias(s, pb.y);
    const double p = primal(pb, w, s, b);
    const double d = alpha_sum - 0.5 * reg;
    const double gap = (p - d) / std::max(std::abs(p), 1e-300);
    if (gap < best.relative_gap) {
      best.model.weights = std::move(w);
      best.model.bias = b;
      best.objective = p;
      best.dual = d;
      best.relative_gap = gap;
      best_alpha = std::move(alpha);
    }
    if (best.relative_gap <= options.tolerance || it == options.max_outer_iterations) break;

    const double b_mid = 0.5 * (b_lo + b_hi);
    if (b_mid <= b_lo || b_mid >= b_hi) break;
    DualState mid = std::abs(lo.balance) < std::abs(hi.balance) ? lo : hi;
    solve_fixed_bias(pb, b_mid, order, mid);
    if (mid.balance >= 0.0) {
      lo = std::move(mid);
      b_lo = b_mid;
    } else {
      hi = std::move(mid);
      b_hi = b_mid;
    }
  }

  if (best.relative_gap > options.tolerance) {
    auto [alpha, w] = smo_polish(pb, best_alpha, options.tolerance, 50 * n + 1000);
    double alpha_sum = 0.0, reg = 0.0;
    for (double a : alpha) alpha_sum += a;
    for (double v : w) reg += v * v;
    for (std::size_t i = 0; i < n; ++i) s[i] = dot(w, pb.x[i]);
    const double b = best_bias(s, pb.y);
    const double p = primal(pb, w, s, b);
    const double d = alpha_sum - 0.5 * reg;
    const double gap = (p - d) / std::max(std::abs(p), 1e-300);
    if (gap < best.relative_gap) {
      best.model.weights = std::move(w);
      best.model.bias = b;
      best.objective = p;
      best.dual = d;
      best.relative_gap = gap;
    }
  }
  return best;
}

void write_model(const LinearModel& model, const std::filesystem::path& path) {
  if (model.class_label.find_first_of(" \t\n") != std::string::npos)
    throw InvalidArgument("model label may not contain whitespace");
  std::ostringstream out(std::ios::binary);
  char bias[64];
  auto [end, ec] = std::to_chars(bias, bias + sizeof bias, model.bias);
  out << "DCLM " << model.class_label << ' ' << model.weights.size() << ' ' << std::string(bias, end) << '\n';
  for (double w : model.weights) io::put_f64(out, w);
  io::write_file_atomic(path, out.str());
}

LinearModel read_model(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw std::runtime_error("model file has no header: " + path.string());
  std::istringstream header(bytes.substr(0, nl));
  std::string magic, bias_text;
  LinearModel m;
  std::size_t dim = 0;
  if (!(header >> magic >> m.class_label >> dim >> bias_text) || magic != "DCLM")
    throw std::runtime_error("bad model header: " + path.string());
  auto [ptr, ec] = std::from_chars(bias_text.data(), bias_text.data() + bias_text.size(), m.bias);
  if (ec != std::errc()) throw std::runtime_error("bad model bias: " + path.string());
  if (bytes.size() - nl - 1 != dim * 8) throw std::runtime_error("model payload size mismatch: " + path.string());
  std::istringstream in(bytes.substr(nl + 1), std::ios::binary);
  m.weights.resize(dim);
  for (auto& w : m.weights) io::get_f64(in, w);
  return m;
}

}  // namespace densecorr
