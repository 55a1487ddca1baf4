#include "densecorr/pck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace densecorr {

PckReport pck(std::span<const KeypointSet> predictions, std::span<const KeypointSet> truths, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  std::map<std::string, const KeypointSet*> by_id;
  for (const auto& p : predictions)
    if (!by_id.emplace(p.image_id, &p).second) throw InvalidArgument("duplicate prediction for image " + p.image_id);
  if (by_id.size() != truths.size())
    throw InvalidArgument("predictions and ground truth cover different images");

  std::map<std::string, int> correct;
  PckReport report;
  report.alpha = alpha;
  for (const auto& truth : truths) {
    auto it = by_id.find(truth.image_id);
    if (it == by_id.end()) throw InvalidArgument("no prediction for image " + truth.image_id);
    const double threshold = alpha * std::max(truth.bbox.w, truth.bbox.h);
    for (const auto& [name, gt] : truth.points) {
      if (!gt.visible) continue;
      ++report.visible_count[name];
      int& hits = correct[name];
      auto pred = it->second->points.find(name);
      if (pred == it->second->points.end() || !pred->second.visible) continue;
      if (std::hypot(pred->second.x - gt.x, pred->second.y - gt.y) < threshold) ++hits;
    }
  }
  double sum = 0.0;
  for (const auto& [name, n] : report.visible_count) {
    report.per_type[name] = static_cast<double>(correct[name]) / n;
    sum += report.per_type[name];
  }
  report.mean = report.per_type.empty() ? 0.0 : sum / static_cast<double>(report.per_type.size());
  return report;
}

std::string format_pck_table(const std::vector<std::string>& columns,
                             const std::vector<std::pair<std::string, std::vector<double>>>& rows) {
  std::string out = "method";
  for (const auto& c : columns) out += "," + c;
  out += ",mean\n";
  for (const auto& [method, values] : rows) {
    if (values.size() != columns.size()) throw InvalidArgument("PCK row width does not match the columns");
    out += method;
    double sum = 0.0;
    char buf[32];
    for (double v : values) {
      std::snprintf(buf, sizeof buf, ",%.1f", 100.0 * v);
      out += buf;
      sum += v;
    }
    std::snprintf(buf, sizeof buf, ",%.1f\n", values.empty() ? 0.0 : 100.0 * sum / values.size());
    out += buf;
  }
  return out;
}

void ResponseHistogram::add(const std::function<double(int, int)>& score) {
  int best_dx = -kHalf, best_dy = -kHalf;
  double best = score(best_dx, best_dy);
  for (int dy = -kHalf; dy <= kHalf; ++dy)
    for (int dx = -kHalf; dx <= kHalf; ++dx) {
      const double s = score(dx, dy);
      if (s > best) {
        best = s;
        best_dx = dx;
        best_dy = dy;
      }
    }
  if (std::abs(best_dx) == kHalf || std::abs(best_dy) == kHalf)
    ++excluded_;
  else
    ++counts_[(best_dy + kHalf) * kSide + (best_dx + kHalf)];
}

int ResponseHistogram::total() const {
  int t = 0;
  for (int c : counts_) t += c;
  return t;
}

}  // namespace densecorr
