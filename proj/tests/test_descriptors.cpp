#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "densecorr/descriptors.hpp"
#include "densecorr/nn_index.hpp"

using namespace densecorr;

namespace {

Image random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<float> u(0.0f, 255.0f);
  Image img(w, h, 1);
  for (auto& p : img.pixels) p = u(rng);
  return img;
}

double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += double(x) * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("descriptor geometry and dimensions") {
  std::mt19937_64 rng(21);
  const DenseDescriptorConfig cfg;  // stride 8, radius 8, 4x4x8
  CHECK(cfg.dim() == 128);
  const Image img = random_image(rng, 60, 45);
  const auto g = dense_descriptors(img, cfg);
  CHECK(g.dim() == 128);
  CHECK(g.geometry().stride == 8);
  CHECK(g.geometry().rf_size == 17);
  CHECK(g.geometry().center_offset() == 8.0);
  CHECK(g.width() == (60 - 17) / 8 + 1);
  CHECK(g.height() == (45 - 17) / 8 + 1);
  for (int i = 0; i < g.height(); ++i)
    for (int j = 0; j < g.width(); ++j) {
      const auto r = rf_rect(g.geometry(), {i, j});
      CHECK(r.x0 >= 0);
      CHECK(r.y0 >= 0);
      CHECK(r.x1 <= img.width);
      CHECK(r.y1 <= img.height);
      CHECK(norm(g.at({i, j})) == doctest::Approx(1.0).epsilon(1e-6));
    }

  CHECK_THROWS_AS(dense_descriptors(Image(16, 40, 1), cfg), InvalidArgument);
  DenseDescriptorConfig bad;
  bad.radius = 2;
  CHECK_THROWS_AS(dense_descriptors(img, bad), InvalidArgument);
}

TEST_CASE("constant image gives zero descriptors") {
  const auto g = dense_descriptors(Image(40, 40, 1, 77.0f), {});
  for (float v : g.data()) CHECK(v == 0.0f);
}

TEST_CASE("adding a constant leaves descriptors unchanged") {
  std::mt19937_64 rng(22);
  Image a = random_image(rng, 50, 50);
  Image b = a;
  for (auto& p : b.pixels) p += 64.0f;
  const auto ga = dense_descriptors(a, {});
  const auto gb = dense_descriptors(b, {});
  REQUIRE(ga.data().size() == gb.data().size());
  for (std::size_t k = 0; k < ga.data().size(); ++k) CHECK(ga.data()[k] == doctest::Approx(gb.data()[k]).epsilon(1e-4));
}

TEST_CASE("vertical step edge puts all energy in the horizontal-gradient bins") {
  Image img(41, 41, 1);
  for (int y = 0; y < 41; ++y)
    for (int x = 0; x < 41; ++x) img.at(x, y) = x < 20 ? 10.0f : 200.0f;
  DenseDescriptorConfig cfg;
  cfg.grid_stride = 4;
  const auto g = dense_descriptors(img, cfg);
  const int nb = cfg.orientation_bins;
  double in_bins = 0.0, total = 0.0;
  for (int i = 0; i < g.height(); ++i)
    for (int j = 0; j < g.width(); ++j) {
      const auto d = g.at({i, j});
      for (std::size_t k = 0; k < d.size(); ++k) {
        const int o = static_cast<int>(k) % nb;
        total += double(d[k]) * d[k];
        if (o == 0 || o == nb / 2) in_bins += double(d[k]) * d[k];
      }
    }
  REQUIRE(total > 0.0);
  CHECK(in_bins / total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rotating the image by 90 degrees permutes descriptor bins") {
  // J(x, y) = I(y, N - 1 - x) turns gradients by +90 degrees. With
  // N = 2r + 1 + (cols - 1) * stride the lattice maps onto itself:
  // J cell (i, j) sees the same pixels as I cell (cols - 1 - j, i).
  std::mt19937_64 rng(23);
  DenseDescriptorConfig cfg;
  const int cols = 5;
  const int n = 2 * cfg.radius + 1 + (cols - 1) * cfg.grid_stride;
  const Image I = random_image(rng, n, n);
  Image J(n, n, 1);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) J.at(x, y) = I.at(y, n - 1 - x);

  const auto gi = dense_descriptors(I, cfg);
  const auto gj = dense_descriptors(J, cfg);
  REQUIRE(gi.width() == cols);
  REQUIRE(gi.height() == cols);
  const int sb = cfg.spatial_bins, nb = cfg.orientation_bins;
  REQUIRE(nb % 4 == 0);
  double worst = 0.0;
  for (int i = 0; i < cols; ++i)
    for (int j = 0; j < cols; ++j) {
      const auto dj = gj.at({i, j});
      const auto di = gi.at({cols - 1 - j, i});
      for (int by = 0; by < sb; ++by)
        for (int bx = 0; bx < sb; ++bx)
          for (int o = 0; o < nb; ++o) {
            const int ibx = by, iby = sb - 1 - bx;
            const int io = (o - nb / 4 + nb) % nb;
            worst = std::max(worst, std::abs(double(dj[(by * sb + bx) * nb + o]) - di[(iby * sb + ibx) * nb + io]));
          }
    }
  CHECK(worst < 1e-5);
}

TEST_CASE("global descriptor is unit norm") {
  std::mt19937_64 rng(24);
  const auto g = dense_descriptors(random_image(rng, 40, 40), {});
  CHECK(norm(global_descriptor(g)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("cosine") {
  const std::vector<float> v{1, 2, 3}, neg{-1, -2, -3}, e0{1, 0, 0}, e1{0, 1, 0}, zero{0, 0, 0};
  CHECK(cosine(v, v).value == doctest::Approx(1.0));
  CHECK(cosine(e0, e1).value == 0.0);
  CHECK(cosine(v, neg).value == doctest::Approx(-1.0));
  const auto z = cosine(v, zero);
  CHECK(z.value == 0.0);
  CHECK(z.degenerate);
  CHECK_FALSE(cosine(v, e0).degenerate);
}

TEST_CASE("knn") {
  std::mt19937_64 rng(25);
  std::normal_distribution<float> gauss;
  const int dim = 16, count = 100;
  NNIndex index(dim);
  std::vector<std::vector<float>> raw;
  for (int i = 0; i < count; ++i) {
    std::vector<float> v(dim);
    for (auto& x : v) x = gauss(rng);
    index.add("v" + std::to_string(i), v);
    raw.push_back(v);
  }

  SUBCASE("query equal to a stored vector ranks it first") {
    const auto r = index.knn(raw[37], 1);
    CHECK(r[0].id == "v37");
    CHECK(r[0].score == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("k = size is a permutation") {
    const auto r = index.knn(raw[0], count);
    std::vector<std::size_t> idx;
    for (const auto& n : r) idx.push_back(n.index);
    std::sort(idx.begin(), idx.end());
    std::vector<std::size_t> all(count);
    std::iota(all.begin(), all.end(), 0);
    CHECK(idx == all);
  }

  SUBCASE("matches a brute-force sort and is scale invariant") {
    for (int t = 0; t < 20; ++t) {
      std::vector<float> q(dim);
      for (auto& x : q) x = gauss(rng);
      std::vector<std::pair<double, int>> brute;
      for (int i = 0; i < count; ++i) brute.emplace_back(-cosine(q, raw[i]).value, i);
      std::stable_sort(brute.begin(), brute.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      const auto r = index.knn(q, 5);
      for (int k = 0; k < 5; ++k) CHECK(r[k].index == static_cast<std::size_t>(brute[k].second));

      std::vector<float> scaled = q;
      for (auto& x : scaled) x *= 4.0f;
      const auto rs = index.knn(scaled, 5);
      for (int k = 0; k < 5; ++k) CHECK(rs[k].index == r[k].index);
    }
  }

  SUBCASE("ties keep insertion order") {
    NNIndex dup(2);
    dup.add("a", std::vector<float>{1, 0});
    dup.add("b", std::vector<float>{2, 0});
    dup.add("c", std::vector<float>{0, 1});
    const auto r = dup.knn(std::vector<float>{1, 0}, 3);
    CHECK(r[0].id == "a");
    CHECK(r[1].id == "b");
    CHECK(r[2].id == "c");
  }

  SUBCASE("errors") {
    NNIndex empty(3);
    CHECK_THROWS_AS(empty.knn(std::vector<float>{1, 0, 0}, 1), InvalidArgument);
    CHECK_THROWS_AS(index.knn(raw[0], count + 1), InvalidArgument);
    CHECK_THROWS_AS(index.add("zero", std::vector<float>(dim, 0.0f)), InvalidArgument);
    CHECK_THROWS_AS(index.add("short", std::vector<float>(3, 1.0f)), InvalidArgument);
  }
}
