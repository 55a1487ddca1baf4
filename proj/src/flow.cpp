#include "densecorr/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "densecorr/binary_io.hpp"
#include "densecorr/distance_transform.hpp"
#include "densecorr/parallel.hpp"

namespace densecorr {

FlowField::FlowField(int height, int width, int label_radius)
    : height_(height), width_(width), label_radius_(label_radius) {
  if (height < 0 || width < 0 || label_radius < 0) throw InvalidArgument("bad flow field dimensions");
  w_.assign(static_cast<std::size_t>(height) * width, Displacement{});
}

bool FlowField::valid() const {
  for (int i = 0; i < height_; ++i)
    for (int j = 0; j < width_; ++j) {
      const auto d = at({i, j});
      if (std::abs(d.dy) > label_radius_ || std::abs(d.dx) > label_radius_) return false;
      if (i + d.dy < 0 || i + d.dy >= height_ || j + d.dx < 0 || j + d.dx >= width_) return false;
    }
  return true;
}

void FlowConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidArgument("beta must be finite and >= 0");
  if (label_radius < 0) throw InvalidArgument("label_radius must be >= 0");
  if (bp_iterations < 1) throw InvalidArgument("bp_iterations must be >= 1");
  if (!(damping >= 0.0 && damping < 1.0)) throw InvalidArgument("damping must lie in [0, 1)");
}

namespace {

void require_same_shape(const FeatureGrid& a, const FeatureGrid& b) {
  if (a.height() != b.height() || a.width() != b.width() || a.dim() != b.dim())
    throw InvalidArgument("feature grids differ in shape: " + std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + "x" + std::to_string(a.dim()) + " vs " +
                          std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                          std::to_string(b.dim()));
}

double feature_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

double squared_difference(Displacement a, Displacement b) {
  const double dy = a.dy - b.dy;
  const double dx = a.dx - b.dx;
  return dy * dy + dx * dx;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Incoming message slots, named by the neighbor the message comes from.
enum Slot { kFromUp = 0, kFromDown, kFromLeft, kFromRight, kSlots };
constexpr std::array<Cell, kSlots> kNeighborOffset{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
// A message sent towards the neighbor in slot s arrives in that neighbor's
// slot kOpposite[s].
constexpr std::array<int, kSlots> kOpposite{kFromDown, kFromUp, kFromRight, kFromLeft};

class GridBP {
 public:
  GridBP(const FeatureGrid& src, const FeatureGrid& tgt, const FlowConfig& config)
      : rows_(src.height()), cols_(src.width()), radius_(config.label_radius), side_(2 * config.label_radius + 1),
        labels_(side_ * side_), config_(config) {
    const std::size_t cells = static_cast<std::size_t>(rows_) * cols_;
    unary_.assign(cells * labels_, kInf);
    parallel_for(static_cast<std::size_t>(rows_), config.threads, [&](std::size_t i) {
      for (int j = 0; j < cols_; ++j) {
        const Cell p{static_cast<int>(i), j};
        double* d = unary(p);
        for (int l = 0; l < labels_; ++l) {
          const Displacement w = label(l);
          const Cell q{p.row + w.dy, p.col + w.dx};
          if (tgt.contains(q)) d[l] = feature_distance(src.at(p), tgt.at(q));
        }
      }
    });
    messages_.assign(cells * kSlots * labels_, 0.0);
    next_ = messages_;

    decode_order_.resize(static_cast<std::size_t>(labels_));
    std::iota(decode_order_.begin(), decode_order_.end(), 0);
    std::stable_sort(decode_order_.begin(), decode_order_.end(), [&](int a, int b) {
      const Displacement wa = label(a), wb = label(b);
      const int na = wa.dy * wa.dy + wa.dx * wa.dx, nb = wb.dy * wb.dy + wb.dx * wb.dx;
      return na < nb;  // equal norms stay in lexicographic (dy, dx) order
    });
  }

  void run() {
    std::vector<double> row_change(static_cast<std::size_t>(rows_));
    for (int it = 0; it < config_.bp_iterations; ++it) {
      parallel_for(static_cast<std::size_t>(rows_), config_.threads, [&](std::size_t i) {
        std::vector<double> h(static_cast<std::size_t>(labels_));
        std::vector<double> m(static_cast<std::size_t>(labels_));
        QuadraticEnvelope env;
        double change = 0.0;
        for (int j = 0; j < cols_; ++j) change = std::max(change, send_all({static_cast<int>(i), j}, h, m, env));
        row_change[i] = change;
      });
      std::swap(messages_, next_);
      if (*std::max_element(row_change.begin(), row_change.end()) <= 1e-12) break;
    }
  }

  // Each cell takes its belief minimizer. Where a belief has several
  // minimizers (up to rounding), independent tie breaking can combine labels
  // from different optimal labelings, so connected groups of tied cells are
  // resolved jointly: every combination of their tied labels is scored with
  // the exact energy terms that involve them, and the cheapest is kept.
  FlowField decode() const {
    FlowField flow(rows_, cols_, radius_);
    std::vector<std::vector<int>> ties(static_cast<std::size_t>(rows_) * cols_);
    std::vector<double> b(static_cast<std::size_t>(labels_));
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) {
        const Cell p{i, j};
        double best = kInf;
        int best_label = center_label();
        for (int l : decode_order_) {
          b[l] = belief(p, l);
          if (b[l] < best) {
            best = b[l];
            best_label = l;
          }
        }
        flow.at(p) = label(best_label);
        if (!std::isfinite(best)) continue;
        const double slack = 1e-9 * std::max(1.0, std::abs(best));
        auto& t = ties[cell_index(p)];
        for (int l : decode_order_)
          if (b[l] <= best + slack) t.push_back(l);
        if (t.size() < 2) t.clear();
      }
    resolve_ties(ties, flow);
    return flow;
  }

 private:
  void resolve_ties(const std::vector<std::vector<int>>& ties, FlowField& flow) const {
    constexpr double kMaxCombinations = 4096;
    std::vector<char> seen(ties.size(), 0);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) {
        if (ties[cell_index({i, j})].empty() || seen[cell_index({i, j})]) continue;
        // Flood fill one group of tied cells.
        std::vector<Cell> group{{i, j}};
        seen[cell_index({i, j})] = 1;
        double combinations = 1;
        for (std::size_t k = 0; k < group.size(); ++k) {
          combinations *= static_cast<double>(ties[cell_index(group[k])].size());
          for (const Cell& o : kNeighborOffset) {
            const Cell q{group[k].row + o.row, group[k].col + o.col};
            if (inside(q) && !ties[cell_index(q)].empty() && !seen[cell_index(q)]) {
              seen[cell_index(q)] = 1;
              group.push_back(q);
            }
          }
        }
        if (combinations > kMaxCombinations) continue;  // keep the per-cell choice

        std::vector<std::size_t> pick(group.size(), 0);
        std::vector<std::size_t> best_pick = pick;
        double best = kInf;
        while (true) {
          for (std::size_t k = 0; k < group.size(); ++k) flow.at(group[k]) = label(ties[cell_index(group[k])][pick[k]]);
          const double e = local_energy(group, flow);
          if (e < best) {
            best = e;
            best_pick = pick;
          }
          std::size_t k = 0;
          while (k < group.size() && ++pick[k] == ties[cell_index(group[k])].size()) pick[k++] = 0;
          if (k == group.size()) break;
        }
        for (std::size_t k = 0; k < group.size(); ++k)
          flow.at(group[k]) = label(ties[cell_index(group[k])][best_pick[k]]);
      }
  }

  // Unary terms of `group` plus every pairwise term touching it, each edge once.
  double local_energy(const std::vector<Cell>& group, const FlowField& flow) const {
    double e = 0.0;
    for (const Cell& p : group) {
      const Displacement w = flow.at(p);
      e += unary(p)[(w.dy + radius_) * side_ + (w.dx + radius_)];
      for (const Cell& o : kNeighborOffset) {
        const Cell q{p.row + o.row, p.col + o.col};
        if (!inside(q)) continue;
        const bool q_in_group = std::find(group.begin(), group.end(), q) != group.end();
        if (q_in_group && cell_index(q) < cell_index(p)) continue;
        const Displacement v = flow.at(q);
        e += config_.beta * ((w.dy - v.dy) * (w.dy - v.dy) + (w.dx - v.dx) * (w.dx - v.dx));
      }
    }
    return e;
  }

  Displacement label(int l) const { return {l / side_ - radius_, l % side_ - radius_}; }
  int center_label() const { return radius_ * side_ + radius_; }

  std::size_t cell_index(Cell p) const { return static_cast<std::size_t>(p.row) * cols_ + p.col; }
  double* unary(Cell p) { return unary_.data() + cell_index(p) * labels_; }
  const double* unary(Cell p) const { return unary_.data() + cell_index(p) * labels_; }
  const double* incoming(Cell p, int slot) const {
    return messages_.data() + (cell_index(p) * kSlots + slot) * labels_;
  }
  double* outgoing_slot(Cell q, int slot) { return next_.data() + (cell_index(q) * kSlots + slot) * labels_; }

  double belief(Cell p, int l) const {
    double b = unary(p)[l];
    for (int s = 0; s < kSlots; ++s) b += incoming(p, s)[l];
    return b;
  }

  bool inside(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < rows_ && c.col < cols_; }

  // Computes every message p sends; returns the largest damped change.
  double send_all(Cell p, std::vector<double>& h, std::vector<double>& m, QuadraticEnvelope& env) {
    double change = 0.0;
    const double* d = unary(p);
    std::array<const double*, kSlots> in;
    for (int t = 0; t < kSlots; ++t) in[t] = incoming(p, t);
    for (int s = 0; s < kSlots; ++s) {
      const Cell q{p.row + kNeighborOffset[s].row, p.col + kNeighborOffset[s].col};
      if (!inside(q)) continue;
      std::copy(d, d + labels_, h.begin());
      for (int t = 0; t < kSlots; ++t) {
        if (t == s) continue;
        const double* src = in[t];
        for (int l = 0; l < labels_; ++l) h[l] += src[l];
      }
      // Rows of the label lattice are dy, columns dx.
      for (int r = 0; r < side_; ++r) env.transform(h.data() + r * side_, side_, 1, config_.beta, m.data() + r * side_, nullptr);
      for (int c = 0; c < side_; ++c) env.transform(m.data() + c, side_, side_, config_.beta, h.data() + c, nullptr);
      const double lo = *std::min_element(h.begin(), h.end());
      const int slot = kOpposite[s];
      const double* old = messages_.data() + (cell_index(q) * kSlots + slot) * labels_;
      double* out = outgoing_slot(q, slot);
      for (int l = 0; l < labels_; ++l) {
        const double fresh = std::isfinite(lo) ? h[l] - lo : 0.0;
        const double damped = (1.0 - config_.damping) * fresh + config_.damping * old[l];
        change = std::max(change, std::abs(damped - old[l]));
        out[l] = damped;
      }
    }
    return change;
  }

  int rows_, cols_, radius_, side_, labels_;
  FlowConfig config_;
  std::vector<double> unary_;
  std::vector<double> messages_;
  std::vector<double> next_;
  std::vector<int> decode_order_;
};

}  // namespace

EnergyBreakdown flow_energy(const FeatureGrid& src, const FeatureGrid& tgt, const FlowField& flow, double beta) {
  require_same_shape(src, tgt);
  if (flow.height() != src.height() || flow.width() != src.width())
    throw InvalidArgument("flow field does not match the grid dimensions");
  if (!flow.valid()) throw InvalidArgument("flow field leaves the grid or exceeds its label radius");
  EnergyBreakdown e;
  for (int i = 0; i < src.height(); ++i)
    for (int j = 0; j < src.width(); ++j) {
      const Cell p{i, j};
      const Displacement w = flow.at(p);
      e.data_term += feature_distance(src.at(p), tgt.at({i + w.dy, j + w.dx}));
      if (i + 1 < src.height()) e.smoothness_term += squared_difference(w, flow.at({i + 1, j}));
      if (j + 1 < src.width()) e.smoothness_term += squared_difference(w, flow.at({i, j + 1}));
    }
  e.total = e.data_term + beta * e.smoothness_term;
  return e;
}

Alignment bp_align(const FeatureGrid& src, const FeatureGrid& tgt, const FlowConfig& config) {
  config.validate();
  require_same_shape(src, tgt);
  GridBP bp(src, tgt, config);
  bp.run();
  Alignment result{bp.decode(), {}};
  result.energy = flow_energy(src, tgt, result.flow, config.beta);

  FlowField zero(src.height(), src.width(), config.label_radius);
  const EnergyBreakdown zero_energy = flow_energy(src, tgt, zero, config.beta);
  if (zero_energy.total < result.energy.total) return {std::move(zero), zero_energy};
  return result;
}

std::vector<std::size_t> rank_by_deformation(std::span<const Alignment> results) {
  if (results.empty()) throw InvalidArgument("rank_by_deformation needs at least one result");
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return results[a].energy.smoothness_term < results[b].energy.smoothness_term;
  });
  return order;
}

Point pixel_flow(const FlowField& flow, const GridGeometry& geometry, Point pixel) {
  if (flow.height() < 1 || flow.width() < 1) return {};
  auto axis = [&](double coord, int count, int& i0, int& i1, double& t) {
    double u = std::clamp((coord - geometry.center_offset()) / geometry.stride, 0.0, static_cast<double>(count - 1));
    i0 = std::min(static_cast<int>(std::floor(u)), std::max(count - 2, 0));
    i1 = std::min(i0 + 1, count - 1);
    t = u - i0;
  };
  int r0, r1, c0, c1;
  double ty, tx;
  axis(pixel.y, flow.height(), r0, r1, ty);
  axis(pixel.x, flow.width(), c0, c1, tx);
  auto lerp2 = [&](auto get) {
    const double top = (1.0 - tx) * get(flow.at({r0, c0})) + tx * get(flow.at({r0, c1}));
    const double bottom = (1.0 - tx) * get(flow.at({r1, c0})) + tx * get(flow.at({r1, c1}));
    return (1.0 - ty) * top + ty * bottom;
  };
  const double dx = lerp2([](Displacement d) { return static_cast<double>(d.dx); });
  const double dy = lerp2([](Displacement d) { return static_cast<double>(d.dy); });
  return {dx * geometry.stride, dy * geometry.stride};
}

Image warp_image(const Image& target, const FlowField& flow, const GridGeometry& geometry) {
  Image out(target.width, target.height, target.channels);
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      const Point w = pixel_flow(flow, geometry, {static_cast<double>(x), static_cast<double>(y)});
      for (int c = 0; c < target.channels; ++c) out.at(x, y, c) = sample_bicubic(target, x + w.x, y + w.y, c);
    }
  return out;
}

KeypointSet transfer_keypoints(const KeypointSet& keypoints, const FlowField& flow, const GridGeometry& geometry) {
  KeypointSet out = keypoints;
  for (auto& [name, kp] : out.points) {
    const Point w = pixel_flow(flow, geometry, {kp.x, kp.y});
    kp.x += w.x;
    kp.y += w.y;
  }
  return out;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

KeypointSet aggregate_median(std::span<const KeypointSet> predictions, std::size_t top_n) {
  if (predictions.empty()) throw InvalidArgument("aggregate_median needs at least one prediction");
  KeypointSet out;
  out.image_id = predictions.front().image_id;
  out.bbox = predictions.front().bbox;
  for (const auto& set : predictions)
    for (const auto& [name, kp] : set.points) out.points.try_emplace(name, Keypoint{});

  for (auto& [name, result] : out.points) {
    std::vector<double> xs, ys;
    for (const auto& set : predictions) {
      if (xs.size() >= top_n) break;
      auto it = set.points.find(name);
      if (it == set.points.end() || !it->second.visible) continue;
      xs.push_back(it->second.x);
      ys.push_back(it->second.y);
    }
    if (xs.empty()) continue;
    result = {median(xs), median(ys), true};
  }
  return out;
}

namespace {
constexpr char kFlowMagic[4] = {'D', 'C', 'F', 'W'};
constexpr std::uint32_t kFlowVersion = 1;
}  // namespace

std::string encode_flow(const Alignment& alignment) {
  const FlowField& f = alignment.flow;
  std::ostringstream out(std::ios::binary);
  out.write(kFlowMagic, 4);
  io::put_u32(out, kFlowVersion);
  io::put_u32(out, static_cast<std::uint32_t>(f.height()));
  io::put_u32(out, static_cast<std::uint32_t>(f.width()));
  io::put_u32(out, static_cast<std::uint32_t>(f.label_radius()));
  for (const auto& d : f.displacements()) {
    io::put_i16(out, static_cast<std::int16_t>(d.dy));
    io::put_i16(out, static_cast<std::int16_t>(d.dx));
  }
  io::put_f64(out, alignment.energy.data_term);
  io::put_f64(out, alignment.energy.smoothness_term);
  io::put_f64(out, alignment.energy.total);
  return out.str();
}

Alignment decode_flow(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kFlowMagic, 4))
    throw FlowFileError("not a DCFW flow file");
  std::uint32_t version, h, w, radius;
  if (!io::get_u32(in, version) || version != kFlowVersion) throw FlowFileError("unsupported DCFW version");
  if (!io::get_u32(in, h) || !io::get_u32(in, w) || !io::get_u32(in, radius)) throw FlowFileError("truncated DCFW header");
  if (h > (1u << 15) || w > (1u << 15) || radius > (1u << 15)) throw FlowFileError("DCFW dimensions out of range");
  if (bytes.size() < 20 + std::size_t{h} * w * 4 + 24) throw FlowFileError("truncated DCFW payload");
  Alignment a{FlowField(static_cast<int>(h), static_cast<int>(w), static_cast<int>(radius)), {}};
  for (int i = 0; i < static_cast<int>(h); ++i)
    for (int j = 0; j < static_cast<int>(w); ++j) {
      std::int16_t dy, dx;
      io::get_i16(in, dy);
      io::get_i16(in, dx);
      a.flow.at({i, j}) = {dy, dx};
    }
  io::get_f64(in, a.energy.data_term);
  io::get_f64(in, a.energy.smoothness_term);
  io::get_f64(in, a.energy.total);
  if (!a.flow.valid()) throw FlowFileError("DCFW flow leaves the grid or exceeds its label radius");
  return a;
}

void write_flow(const Alignment& alignment, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_flow(alignment));
}

Alignment read_flow(const std::filesystem::path& path) { return decode_flow(io::read_file(path)); }

}  // namespace densecorr
