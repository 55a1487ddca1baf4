#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

namespace oracle {

using densecorr::Displacement;
using densecorr::FeatureGrid;

namespace {

std::set<long> back_project(const std::vector<densecorr::LayerSpec>& layers, long cell) {
  std::set<long> current{cell};
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    std::set<long> inputs;
    for (long o : current)
      for (long t = 0; t < it->kernel; ++t) inputs.insert(o * it->stride - it->pad + t);
    current = std::move(inputs);
  }
  return current;
}

}  // namespace

RfExtent enumerate_rf(const std::vector<densecorr::LayerSpec>& layers, long cell) {
  const auto s = back_project(layers, cell);
  return {*s.begin(), *s.rbegin(), s.size()};
}

std::vector<long> enumerate_rf_bounded(const std::vector<densecorr::LayerSpec>& layers, long cell, long input) {
  std::vector<long> out;
  for (long v : back_project(layers, cell))
    if (v >= 0 && v < input) out.push_back(v);
  return out;
}

std::vector<double> min_convolution_1d(const std::vector<double>& costs, double w) {
  const int n = static_cast<int>(costs.size());
  std::vector<double> out(n, std::numeric_limits<double>::infinity());
  for (int q = 0; q < n; ++q)
    for (int p = 0; p < n; ++p) out[q] = std::min(out[q], costs[p] + w * double(q - p) * double(q - p));
  return out;
}

std::vector<double> min_convolution_2d(const std::vector<double>& costs, int rows, int cols, double w) {
  std::vector<double> out(costs.size(), std::numeric_limits<double>::infinity());
  for (int qi = 0; qi < rows; ++qi)
    for (int qj = 0; qj < cols; ++qj)
      for (int pi = 0; pi < rows; ++pi)
        for (int pj = 0; pj < cols; ++pj) {
          const double d2 = double(qi - pi) * (qi - pi) + double(qj - pj) * (qj - pj);
          double& o = out[qi * cols + qj];
          o = std::min(o, costs[pi * cols + pj] + w * d2);
        }
  return out;
}

namespace {

double unary(const FeatureGrid& src, const FeatureGrid& tgt, int i, int j, Displacement w) {
  const auto a = src.at({i, j});
  const auto b = tgt.at({i + w.dy, j + w.dx});
  double s = 0.0;
  for (int k = 0; k < src.dim(); ++k) s += (double(a[k]) - b[k]) * (double(a[k]) - b[k]);
  return std::sqrt(s);
}

double pair_cost(Displacement a, Displacement b) {
  return double(a.dy - b.dy) * (a.dy - b.dy) + double(a.dx - b.dx) * (a.dx - b.dx);
}

}  // namespace

double naive_energy(const FeatureGrid& src, const FeatureGrid& tgt, const std::vector<Displacement>& w, double beta) {
  const int rows = src.height(), cols = src.width();
  double data = 0.0;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) data += unary(src, tgt, i, j, w[i * cols + j]);
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < rows * cols; ++a)
    for (int b = a + 1; b < rows * cols; ++b) {
      const int di = std::abs(a / cols - b / cols), dj = std::abs(a % cols - b % cols);
      if (di + dj == 1) edges.emplace_back(a, b);
    }
  double smooth = 0.0;
  for (auto [a, b] : edges) smooth += pair_cost(w[a], w[b]);
  return data + beta * smooth;
}

Optimum chain_dp(const FeatureGrid& src, const FeatureGrid& tgt, int radius, double beta) {
  const int n = src.width();
  std::vector<std::vector<Displacement>> labels(n);
  for (int j = 0; j < n; ++j)
    for (int dx = -radius; dx <= radius; ++dx)
      if (j + dx >= 0 && j + dx < n) labels[j].push_back({0, dx});
  std::vector<std::vector<double>> cost(n);
  std::vector<std::vector<int>> back(n);
  for (std::size_t l = 0; l < labels[0].size(); ++l) cost[0].push_back(unary(src, tgt, 0, 0, labels[0][l]));
  for (int j = 1; j < n; ++j) {
    for (std::size_t l = 0; l < labels[j].size(); ++l) {
      double best = std::numeric_limits<double>::infinity();
      int arg = -1;
      for (std::size_t m = 0; m < labels[j - 1].size(); ++m) {
        const double c = cost[j - 1][m] + beta * pair_cost(labels[j - 1][m], labels[j][l]);
        if (c < best) {
          best = c;
          arg = static_cast<int>(m);
        }
      }
      cost[j].push_back(best + unary(src, tgt, 0, j, labels[j][l]));
      back[j].push_back(arg);
    }
  }
  Optimum out;
  auto it = std::min_element(cost[n - 1].begin(), cost[n - 1].end());
  out.energy = *it;
  int l = static_cast<int>(it - cost[n - 1].begin());
  out.labels.resize(n);
  for (int j = n - 1; j >= 0; --j) {
    out.labels[j] = labels[j][l];
    if (j > 0) l = back[j][l];
  }
  return out;
}

Optimum exhaustive(const FeatureGrid& src, const FeatureGrid& tgt, int radius, double beta) {
  const int rows = src.height(), cols = src.width(), cells = rows * cols;
  std::vector<std::vector<Displacement>> labels(cells);
  for (int c = 0; c < cells; ++c)
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const int i = c / cols + dy, j = c % cols + dx;
        if (i >= 0 && i < rows && j >= 0 && j < cols) labels[c].push_back({dy, dx});
      }
  Optimum best;
  best.energy = std::numeric_limits<double>::infinity();
  std::vector<Displacement> current(cells);
  std::function<void(int)> recurse = [&](int c) {
    if (c == cells) {
      const double e = naive_energy(src, tgt, current, beta);
      if (e < best.energy) best = {e, current};
      return;
    }
    for (const auto& l : labels[c]) {
      current[c] = l;
      recurse(c + 1);
    }
  };
  recurse(0);
  return best;
}

FeatureGrid random_grid(std::mt19937_64& rng, int rows, int cols, int dim, densecorr::GridGeometry geometry) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(rows) * cols * dim);
  for (auto& v : data) v = u(rng);
  return FeatureGrid(rows, cols, dim, geometry, std::move(data));
}

}  // namespace oracle
