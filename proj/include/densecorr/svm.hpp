#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace densecorr {

/// Row-major sample storage with a fixed dimension.
class SampleMatrix {
 public:
  SampleMatrix() = default;
  explicit SampleMatrix(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return data_.empty(); }

  void add(std::span<const float> row);
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, static_cast<std::size_t>(dim_)}; }

 private:
  int dim_ = 0;
  std::vector<float> data_;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::string class_label;

  int dim() const { return static_cast<int>(weights.size()); }
  double score(std::span<const float> x) const;
};

struct SvmOptions {
  double c = 1e-6;
  double tolerance = 1e-6;  // relative duality gap
  std::uint64_t seed = 0;   // permutes the coordinate sweep order
  int max_outer_iterations = 200;
};

struct SvmResult {
  LinearModel model;
  double objective = 0.0;  // primal value at the returned model
  double dual = 0.0;       // dual value of a feasible dual point
  double relative_gap = 0.0;
};

/// Primal objective 1/2 |w|^2 + c * sum hinge(y (w.x + b)).
double svm_objective(const LinearModel& model, const SampleMatrix& positives, const SampleMatrix& negatives, double c);

/// Minimizes the primal above with an unregularized bias. The bias enters the
/// dual as the multiplier of sum alpha_i y_i = 0; it is located by bisection
/// on that constraint with dual coordinate descent at fixed bias, and the run
/// stops once the relative duality gap drops below `tolerance`.
SvmResult train_svm(const SampleMatrix& positives, const SampleMatrix& negatives, const SvmOptions& options);

/// Model file: one text line `DCLM <label> <dim> <bias>` followed by dim
/// little-endian f64 weights.
void write_model(const LinearModel& model, const std::filesystem::path& path);
LinearModel read_model(const std::filesystem::path& path);

}  // namespace densecorr
