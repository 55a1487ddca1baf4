#pragma once

#include <span>
#include <string>
#include <vector>

namespace densecorr {

struct Cosine {
  double value = 0.0;
  bool degenerate = false;  // one of the inputs had zero norm; value is 0
};

Cosine cosine(std::span<const float> a, std::span<const float> b);

/// Returns false when the vector has zero norm (it is left unchanged).
bool normalize(std::span<float> v);

struct Neighbor {
  std::string id;
  std::size_t index = 0;  // insertion position
  double score = 0.0;
};

/// Exhaustive cosine-similarity index over unit vectors.
class NNIndex {
 public:
  NNIndex() = default;
  explicit NNIndex(int dim) : dim_(dim) {}

  /// Normalizes and stores `vector`. Throws InvalidArgument for a zero vector
  /// or a dimension mismatch.
  void add(std::string id, std::span<const float> vector);

  std::size_t size() const { return ids_.size(); }
  int dim() const { return dim_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  std::span<const float> vector(std::size_t i) const;

  /// Top k by descending cosine, ties in insertion order.
  std::vector<Neighbor> knn(std::span<const float> query, std::size_t k) const;

 private:
  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> vectors_;
};

}  // namespace densecorr
