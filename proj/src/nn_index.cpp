#include "densecorr/nn_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "densecorr/types.hpp"

namespace densecorr {

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

}  // namespace

Cosine cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine of vectors with different lengths");
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  return {std::clamp(dot(a, b) / (na * nb), -1.0, 1.0), false};
}

bool normalize(std::span<float> v) {
  const double n = std::sqrt(dot(v, v));
  if (n == 0.0) return false;
  for (auto& x : v) x = static_cast<float>(x / n);
  return true;
}

void NNIndex::add(std::string id, std::span<const float> vector) {
  if (ids_.empty() && dim_ == 0) dim_ = static_cast<int>(vector.size());
  if (static_cast<int>(vector.size()) != dim_) throw InvalidArgument("index vector dimension mismatch");
  const auto start = vectors_.size();
  vectors_.insert(vectors_.end(), vector.begin(), vector.end());
  if (!normalize(std::span<float>(vectors_).subspan(start))) {
    vectors_.resize(start);
    throw InvalidArgument("cannot index a zero vector: " + id);
  }
  ids_.push_back(std::move(id));
}

std::span<const float> NNIndex::vector(std::size_t i) const {
  return std::span<const float>(vectors_).subspan(i * dim_, dim_);
}

std::vector<Neighbor> NNIndex::knn(std::span<const float> query, std::size_t k) const {
  if (ids_.empty()) throw InvalidArgument("knn on an empty index");
  if (k > ids_.size()) throw InvalidArgument("knn: k exceeds index size");
  if (static_cast<int>(query.size()) != dim_) throw InvalidArgument("knn query dimension mismatch");
  const double qn = std::sqrt(dot(query, query));
  std::vector<double> scores(ids_.size(), 0.0);
  if (qn > 0.0)
    for (std::size_t i = 0; i < ids_.size(); ++i) scores[i] = dot(query, vector(i)) / qn;

  std::vector<std::size_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  std::vector<Neighbor> out;
  out.reserve(k);
  for (std::size_t r = 0; r < k; ++r) out.push_back({ids_[order[r]], order[r], scores[order[r]]});
  return out;
}

}  // namespace densecorr
