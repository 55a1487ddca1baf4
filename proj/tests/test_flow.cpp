#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "doctest.h"
#include "densecorr/distance_transform.hpp"
#include "densecorr/flow.hpp"
#include "oracles.hpp"

using namespace densecorr;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

FlowField to_field(const std::vector<Displacement>& w, int rows, int cols, int radius) {
  FlowField f(rows, cols, radius);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) f.at({i, j}) = w[i * cols + j];
  return f;
}

std::vector<Displacement> labels_of(const FlowField& f) {
  return {f.displacements().begin(), f.displacements().end()};
}

FeatureGrid transpose(const FeatureGrid& g) {
  FeatureGrid t(g.width(), g.height(), g.dim(), g.geometry());
  for (int i = 0; i < g.height(); ++i)
    for (int j = 0; j < g.width(); ++j) std::copy_n(g.at({i, j}).begin(), g.dim(), t.at({j, i}).begin());
  return t;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Random in-bounds flow with |w|_inf <= radius.
FlowField random_flow(std::mt19937_64& rng, int rows, int cols, int radius) {
  FlowField f(rows, cols, radius);
  std::uniform_int_distribution<int> d(-radius, radius);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      Displacement w;
      do w = {d(rng), d(rng)};
      while (i + w.dy < 0 || i + w.dy >= rows || j + w.dx < 0 || j + w.dx >= cols);
      f.at({i, j}) = w;
    }
  return f;
}

Image smooth_image(int w, int h) {
  Image img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = static_cast<float>(128 + 60 * std::sin(0.21 * x + 0.1 * y) + 40 * std::cos(0.13 * y - 0.07 * x));
  return img;
}

}  // namespace

TEST_CASE("flow_energy examples") {
  std::mt19937_64 rng(31);
  const auto g = oracle::random_grid(rng, 4, 5, 3);
  const auto zero = flow_energy(g, g, FlowField(4, 5, 2), 3e-3);
  CHECK(zero.total == 0.0);
  CHECK(zero.data_term == 0.0);
  CHECK(zero.smoothness_term == 0.0);

  // 1x2 grid with swapped orthonormal features.
  const FeatureGrid s(1, 2, 2, {}, std::vector<float>{1, 0, 0, 1});
  const FeatureGrid t(1, 2, 2, {}, std::vector<float>{0, 1, 1, 0});
  FlowField w(1, 2, 1);
  w.at({0, 0}) = {0, 1};
  w.at({0, 1}) = {0, -1};
  const double beta = 0.25;
  const auto e = flow_energy(s, t, w, beta);
  CHECK(e.data_term == 0.0);
  CHECK(e.smoothness_term == 4.0);
  CHECK(e.total == 4.0 * beta);

  CHECK_THROWS_AS(flow_energy(g, oracle::random_grid(rng, 4, 4, 3), FlowField(4, 5, 1), 1.0), InvalidArgument);
}

TEST_CASE("flow_energy matches the naive evaluator and is transpose symmetric") {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 200; ++t) {
    std::uniform_int_distribution<int> size(1, 6), dim(1, 5), rad(0, 3);
    const int rows = size(rng), cols = size(rng), d = dim(rng), r = rad(rng);
    const auto a = oracle::random_grid(rng, rows, cols, d);
    const auto b = oracle::random_grid(rng, rows, cols, d);
    const auto f = random_flow(rng, rows, cols, r);
    const double beta = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
    const auto e = flow_energy(a, b, f, beta);
    CHECK(relative_error(e.total, oracle::naive_energy(a, b, labels_of(f), beta)) <= 1e-12);
    CHECK(e.total == e.data_term + beta * e.smoothness_term);

    FlowField ft(cols, rows, r);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) ft.at({j, i}) = {f.at({i, j}).dx, f.at({i, j}).dy};
    const auto et = flow_energy(transpose(a), transpose(b), ft, beta);
    CHECK(relative_error(et.total, e.total) <= 1e-12);
    CHECK(et.smoothness_term == e.smoothness_term);
  }
}

TEST_CASE("dt1d_quadratic examples") {
  const double M = 1e9;
  auto r = dt1d_quadratic(std::vector<double>{0, M, M}, 1.0);
  CHECK(r.values == std::vector<double>{0, 1, 4});
  CHECK(r.argmin == std::vector<int>{0, 0, 0});

  r = dt1d_quadratic(std::vector<double>{5, 0, 5}, 1.0);
  CHECK(r.values == std::vector<double>{1, 0, 1});
  CHECK(r.argmin == std::vector<int>{1, 1, 1});

  const std::vector<double> distinct{3, 1, 4, 1.5, 9, 2.6};
  r = dt1d_quadratic(distinct, 1e12);
  CHECK(r.values == distinct);

  // Ties resolve to the smallest p.
  r = dt1d_quadratic(std::vector<double>{1, 1}, 0.0);
  CHECK(r.argmin == std::vector<int>{0, 0});
  r = dt1d_quadratic(std::vector<double>{0, kInf, 0}, 1.0);
  CHECK(r.values == std::vector<double>{0, 1, 0});
  CHECK(r.argmin == std::vector<int>{0, 0, 2});

  r = dt1d_quadratic(std::vector<double>{kInf, kInf}, 1.0);
  CHECK(std::isinf(r.values[0]));
  CHECK(r.argmin[1] == -1);
}

TEST_CASE("dt2d_quadratic examples") {
  const double M = 1e9;
  std::vector<double> c(20, M);
  c[0] = 0;
  auto r = dt2d_quadratic(c, 4, 5, 0.5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) CHECK(r.values[i * 5 + j] == 0.5 * (i * i + j * j));

  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-10, 10);
  std::vector<double> rnd(35);
  for (auto& v : rnd) v = u(rng);
  r = dt2d_quadratic(rnd, 7, 5, 0.7);
  const auto brute = oracle::min_convolution_2d(rnd, 7, 5, 0.7);
  for (std::size_t k = 0; k < rnd.size(); ++k) {
    CHECK(relative_error(r.values[k], brute[k]) <= 1e-12);
    const int pi = r.argmin_row[k], pj = r.argmin_col[k];
    const int qi = static_cast<int>(k) / 5, qj = static_cast<int>(k) % 5;
    CHECK(relative_error(rnd[pi * 5 + pj] + 0.7 * ((qi - pi) * (qi - pi) + (qj - pj) * (qj - pj)), brute[k]) <= 1e-12);
  }

  r = dt2d_quadratic(rnd, 7, 5, 0.0);
  const double lo = *std::min_element(rnd.begin(), rnd.end());
  for (double v : r.values) CHECK(v == lo);
}

TEST_CASE("distance transforms match brute-force min-convolution") {
  std::mt19937_64 rng(34);
  std::uniform_real_distribution<double> logw(-3, 3), cost(-100, 100);
  for (int t = 0; t < 300; ++t) {
    const double w = std::pow(10.0, logw(rng));
    const int n = std::uniform_int_distribution<int>(1, 64)(rng);
    std::vector<double> c(n);
    for (auto& v : c) v = cost(rng);
    const auto r = dt1d_quadratic(c, w);
    const auto b = oracle::min_convolution_1d(c, w);
    for (int q = 0; q < n; ++q) {
      CHECK(relative_error(r.values[q], b[q]) <= 1e-9);
      const int p = r.argmin[q];
      CHECK(relative_error(c[p] + w * double(q - p) * (q - p), b[q]) <= 1e-9);
    }

    const int rows = std::uniform_int_distribution<int>(1, 8)(rng), cols = std::uniform_int_distribution<int>(1, 8)(rng);
    std::vector<double> c2(rows * cols);
    for (auto& v : c2) v = cost(rng);
    const auto r2 = dt2d_quadratic(c2, rows, cols, w);
    const auto b2 = oracle::min_convolution_2d(c2, rows, cols, w);
    for (std::size_t k = 0; k < c2.size(); ++k) CHECK(relative_error(r2.values[k], b2[k]) <= 1e-9);
  }
}

TEST_CASE("bp_align on identical grids returns the zero flow") {
  std::mt19937_64 rng(35);
  for (int t = 0; t < 10; ++t) {
    const auto g = oracle::random_grid(rng, 6, 7, 8);
    FlowConfig cfg;
    cfg.label_radius = 3;
    const auto a = bp_align(g, g, cfg);
    CHECK(a.flow == FlowField(6, 7, 3));
    CHECK(a.energy.total == 0.0);
  }
}

TEST_CASE("bp_align is exact on chains") {
  std::mt19937_64 rng(36);
  for (int t = 0; t < 40; ++t) {
    const int n = std::uniform_int_distribution<int>(2, 12)(rng);
    const int radius = std::uniform_int_distribution<int>(0, 2)(rng);
    const int d = std::uniform_int_distribution<int>(1, 8)(rng);
    const auto a = oracle::random_grid(rng, 1, n, d);
    const auto b = oracle::random_grid(rng, 1, n, d);
    FlowConfig cfg;
    cfg.label_radius = radius;
    cfg.beta = std::pow(10.0, std::uniform_real_distribution<double>(-3, 0)(rng));
    const auto got = bp_align(a, b, cfg);
    const auto best = oracle::chain_dp(a, b, radius, cfg.beta);
    CHECK(relative_error(got.energy.total, best.energy) <= 1e-9);
  }
}

TEST_CASE("bp_align matches exhaustive search on 2x2 grids") {
  std::mt19937_64 rng(37);
  for (int t = 0; t < 30; ++t) {
    const auto a = oracle::random_grid(rng, 2, 2, 4);
    const auto b = oracle::random_grid(rng, 2, 2, 4);
    FlowConfig cfg;
    cfg.label_radius = 1;
    const auto got = bp_align(a, b, cfg);
    const auto best = oracle::exhaustive(a, b, 1, cfg.beta);
    CHECK(relative_error(got.energy.total, best.energy) <= 1e-9);
  }
}

TEST_CASE("bp_align invariants") {
  std::mt19937_64 rng(38);
  for (int t = 0; t < 10; ++t) {
    const auto a = oracle::random_grid(rng, 3, 3, 4);
    const auto b = oracle::random_grid(rng, 3, 3, 4);
    FlowConfig cfg;
    cfg.label_radius = 1;
    cfg.beta = 0.05;
    const auto got = bp_align(a, b, cfg);
    CHECK(got.flow.valid());
    const auto again = flow_energy(a, b, got.flow, cfg.beta);
    CHECK(again.total == got.energy.total);
    CHECK(again.data_term == got.energy.data_term);
    CHECK(got.energy.total <= flow_energy(a, b, FlowField(3, 3, 1), cfg.beta).total);
  }

  SUBCASE("thread count does not change the result") {
    const auto a = oracle::random_grid(rng, 9, 11, 6);
    const auto b = oracle::random_grid(rng, 9, 11, 6);
    FlowConfig cfg;
    cfg.label_radius = 2;
    cfg.beta = 0.1;
    const auto one = bp_align(a, b, cfg);
    cfg.threads = 4;
    const auto four = bp_align(a, b, cfg);
    CHECK(one.flow == four.flow);
    CHECK(encode_flow(one) == encode_flow(four));
  }

  SUBCASE("bad inputs") {
    const auto a = oracle::random_grid(rng, 2, 2, 4);
    const auto b = oracle::random_grid(rng, 2, 3, 4);
    CHECK_THROWS_AS(bp_align(a, b, {}), InvalidArgument);
    FlowConfig cfg;
    cfg.bp_iterations = 0;
    CHECK_THROWS_AS(bp_align(a, a, cfg), InvalidArgument);
  }
}

TEST_CASE("bp_align recovers a translation and transfers keypoints") {
  // tgt(i, j) = world(i, j) and src(i, j) = world(i, j + 1): every source
  // cell except the last column matches one cell to the right.
  std::mt19937_64 rng(39);
  const int rows = 6, cols = 8, dim = 16;
  const GridGeometry geom{8, 17, 16};
  const auto world = oracle::random_grid(rng, rows, cols + 1, dim, geom);
  FeatureGrid src(rows, cols, dim, geom), tgt(rows, cols, dim, geom);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      std::copy_n(world.at({i, j + 1}).begin(), dim, src.at({i, j}).begin());
      std::copy_n(world.at({i, j}).begin(), dim, tgt.at({i, j}).begin());
    }
  FlowConfig cfg;
  cfg.label_radius = 2;
  const auto a = bp_align(src, tgt, cfg);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j + 1 < cols; ++j) CHECK(a.flow.at({i, j}) == Displacement{0, 1});

  KeypointSet kps;
  kps.points["a"] = {20.0, 30.0, true};
  kps.points["b"] = {55.5, 12.0, true};
  kps.points["c"] = {40.0, 50.0, false};
  const auto moved = transfer_keypoints(kps, a.flow, geom);
  for (const auto& [name, kp] : kps.points) {
    CHECK(std::abs(moved.points.at(name).x - (kp.x + geom.stride)) <= 0.5 * geom.stride);
    CHECK(moved.points.at(name).y == doctest::Approx(kp.y));
    CHECK(moved.points.at(name).visible == kp.visible);
  }
}

TEST_CASE("transfer_keypoints with zero and constant flow") {
  const GridGeometry geom{16, 131, 128};
  KeypointSet kps;
  kps.points["x"] = {70.0, 90.0, true};
  kps.points["y"] = {-3.0, 400.0, true};
  FlowField f(8, 8, 2);
  CHECK(transfer_keypoints(kps, f, geom) == kps);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) f.at({i, j}) = {1, -1};
  const auto moved = transfer_keypoints(kps, f, geom);
  for (const auto& [name, kp] : kps.points) {
    CHECK(moved.points.at(name).x == kp.x - 16);
    CHECK(moved.points.at(name).y == kp.y + 16);
  }
}

TEST_CASE("warp_image") {
  const GridGeometry geom{4, 4, 3};  // centers at 1.5 + 4k
  const Image target = smooth_image(40, 32);

  SUBCASE("zero flow is the identity") {
    CHECK(warp_image(target, FlowField(8, 10, 2), geom) == target);
  }

  SUBCASE("constant one-cell flow undoes a translation") {
    // source(x) = target(x + 4)
    Image source(40, 32, 1);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 40; ++x) source.at(x, y) = target.clamped(x + 4, y);
    FlowField f(8, 10, 1);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 10; ++j) f.at({i, j}) = {0, 1};
    const Image warped = warp_image(target, f, geom);
    double mse = 0.0;
    int n = 0;
    for (int y = 4; y < 28; ++y)
      for (int x = 4; x < 32; ++x) {
        const double d = warped.at(x, y) - source.at(x, y);
        mse += d * d;
        ++n;
      }
    mse /= n;
    const double psnr = mse == 0.0 ? kInf : 10.0 * std::log10(255.0 * 255.0 / mse);
    CHECK(psnr > 30.0);
  }

  SUBCASE("horizontal flow shifts vertical stripes by the stride") {
    Image stripes(40, 16, 1);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 40; ++x) stripes.at(x, y) = (x / 3) % 2 ? 200.0f : 20.0f;
    FlowField f(4, 10, 1);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 10; ++j) f.at({i, j}) = {0, 1};
    const Image warped = warp_image(stripes, f, geom);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x + 4 < 40; ++x) CHECK(warped.at(x, y) == stripes.at(x + 4, y));
  }
}

TEST_CASE("rank_by_deformation") {
  std::vector<Alignment> r(3);
  r[0].energy.smoothness_term = 2.0;
  r[1].energy.smoothness_term = 1.0;
  r[2].energy.smoothness_term = 0.0;
  CHECK(rank_by_deformation(r) == std::vector<std::size_t>{2, 1, 0});

  std::mt19937_64 rng(40);
  std::vector<Alignment> many(50);
  for (auto& a : many) a.energy.smoothness_term = std::uniform_int_distribution<int>(0, 9)(rng);
  std::vector<std::size_t> expect(50);
  for (std::size_t i = 0; i < 50; ++i) expect[i] = i;
  std::stable_sort(expect.begin(), expect.end(), [&](auto a, auto b) {
    return many[a].energy.smoothness_term < many[b].energy.smoothness_term;
  });
  CHECK(rank_by_deformation(many) == expect);
  CHECK_THROWS_AS(rank_by_deformation({}), InvalidArgument);
}

TEST_CASE("aggregate_median") {
  auto with_x = [](std::initializer_list<double> xs) {
    std::vector<KeypointSet> out;
    for (double x : xs) {
      KeypointSet s;
      s.image_id = "t";
      s.points["nose"] = {x, 2 * x, true};
      s.points["tail"] = {0, 0, false};
      out.push_back(s);
    }
    return out;
  };
  auto five = with_x({0, 1, 2, 4, 10});
  auto m = aggregate_median(five);
  CHECK(m.points["nose"].x == 2.0);
  CHECK(m.points["nose"].y == 4.0);
  CHECK_FALSE(m.points["tail"].visible);

  auto four = with_x({1, 2, 3, 10});
  CHECK(aggregate_median(four).points["nose"].x == 2.5);

  // Only the first top_n visible instances count.
  auto six = with_x({1, 2, 3, 4, 5, 1000});
  CHECK(aggregate_median(six, 5).points["nose"].x == 3.0);
  six[1].points["nose"].visible = false;
  CHECK(aggregate_median(six, 5).points["nose"].x == 4.0);

  auto same = with_x({7, 7, 7});
  CHECK(aggregate_median(same) == same[0]);
  CHECK_THROWS_AS(aggregate_median({}), InvalidArgument);
}

TEST_CASE("flow file round trip") {
  std::mt19937_64 rng(41);
  Alignment a{random_flow(rng, 5, 6, 3), {1.25, 7.0, 1.25 + 0.003 * 7.0}};
  const auto path = std::filesystem::temp_directory_path() / "densecorr_flow_rt.dcfw";
  write_flow(a, path);
  const auto back = read_flow(path);
  CHECK(back.flow == a.flow);
  CHECK(back.energy.total == a.energy.total);
  std::filesystem::remove(path);

  std::string bytes = encode_flow(a);
  bytes[2] = 'X';
  CHECK_THROWS_AS(decode_flow(bytes), FlowFileError);
  CHECK_THROWS_AS(decode_flow(encode_flow(a).substr(0, 30)), FlowFileError);
}
