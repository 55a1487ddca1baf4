#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "doctest.h"
#include "densecorr/feature_grid.hpp"
#include "densecorr/geometry.hpp"
#include "oracles.hpp"

using namespace densecorr;

namespace {

std::vector<LayerSpec> random_stack(std::mt19937_64& rng, int max_layers) {
  std::uniform_int_distribution<int> count(1, max_layers), kernel(1, 7), stride(1, 3), pad(0, 3);
  std::vector<LayerSpec> out(count(rng));
  for (auto& l : out) l = {kernel(rng), stride(rng), pad(rng)};
  return out;
}

// Output length of a stack on an input of n pixels; 0 if it collapses.
long output_size(const std::vector<LayerSpec>& layers, long n) {
  for (const auto& l : layers) {
    const long padded = n + 2L * l.pad;
    if (padded < l.kernel) return 0;
    n = (padded - l.kernel) / l.stride + 1;
  }
  return n;
}

std::string le32(std::uint32_t v) {
  std::string s(4, '\0');
  for (int i = 0; i < 4; ++i) s[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("densecorr_gridgeom_" + name);
}

}  // namespace

TEST_CASE("compose_geometry reproduces the reference rf table") {
  const auto arch = reference_architecture();
  const std::pair<const char*, std::pair<int, int>> rows[] = {
      {"conv1", {11, 4}}, {"conv2", {51, 8}},  {"conv3", {99, 16}},
      {"conv4", {131, 16}}, {"conv5", {163, 16}}, {"pool5", {195, 32}}};
  for (const auto& [name, expect] : rows) {
    CAPTURE(name);
    const auto g = geometry_at(arch, name);
    CHECK(g.rf_size == expect.first);
    CHECK(g.stride == expect.second);
  }
}

TEST_CASE("compose_geometry small stacks") {
  const std::vector<LayerSpec> identity{{1, 1, 0}};
  const auto id = compose_geometry(identity);
  CHECK(id.stride == 1);
  CHECK(id.rf_size == 1);
  CHECK(id.center_offset() == 0.0);

  const std::vector<LayerSpec> conv1{{11, 4, 0}};
  CHECK(compose_geometry(conv1).stride == 4);
  CHECK(compose_geometry(conv1).rf_size == 11);

  const std::vector<LayerSpec> two{{3, 1, 0}, {2, 2, 0}};
  const auto g = compose_geometry(two);
  CHECK(g.stride == 2);
  CHECK(g.rf_size == 4);
  CHECK(g.center_offset() == 1.5);
  // Brute force agrees: cell 0 sees pixels 0..3.
  const auto rf = oracle::enumerate_rf(two, 0);
  CHECK(rf.min == 0);
  CHECK(rf.max == 3);
  CHECK(rf_center(g, {1, 1}) == Point{3.5, 3.5});

  CHECK_THROWS_AS(compose_geometry(std::span<const LayerSpec>{}), InvalidArgument);
}

TEST_CASE("compose_geometry matches brute-force rf enumeration on random stacks") {
  std::mt19937_64 rng(11);
  int checked = 0;
  while (checked < 500) {
    const auto stack = random_stack(rng, 5);
    const long out = output_size(stack, 64);
    if (out < 1) continue;
    const auto g = compose_geometry(stack);
    for (long c = 0; c < out; ++c) {
      const auto rf = oracle::enumerate_rf(stack, c);
      CHECK(rf.max - rf.min + 1 == g.rf_size);
      CHECK(rf.min + rf.max == g.center_offset_x2 + 2 * c * g.stride);
    }
    ++checked;
  }
}

TEST_CASE("compose_geometry is associative over concatenation") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 500; ++t) {
    auto a = random_stack(rng, 4);
    const auto b = random_stack(rng, 4);
    GridGeometry folded = compose_geometry(a);
    for (const auto& l : b) folded = compose_geometry(folded, l);
    a.insert(a.end(), b.begin(), b.end());
    CHECK(compose_geometry(a) == folded);
  }
}

TEST_CASE("rf_center uses the (row, col) <-> (y, x) convention") {
  const GridGeometry g{16, 163, 162};
  CHECK(rf_center(g, {0, 0}) == Point{81, 81});
  CHECK(rf_center(g, {2, 1}) == Point{97, 113});
}

TEST_CASE("nearest_cell") {
  const GridGeometry g{16, 163, 162};
  CHECK(nearest_cell(g, 13, 13, {81, 81}) == Cell{0, 0});
  CHECK(nearest_cell(g, 13, 13, {90, 90}) == Cell{1, 1});
  CHECK(nearest_cell(g, 13, 13, {-500, 10000}) == Cell{12, 0});
  // Half-way between centers 81 and 97 goes to the smaller index.
  CHECK(nearest_cell(g, 13, 13, {89, 89}) == Cell{0, 0});

  SUBCASE("rf centers map back to their cell") {
    for (int i = 0; i < 13; ++i)
      for (int j = 0; j < 9; ++j) CHECK(nearest_cell(g, 13, 9, rf_center(g, {i, j})) == Cell{i, j});
  }

  SUBCASE("matches an exhaustive scan") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> coord(-40.0, 300.0);
    const GridGeometry h{6, 19, 5};
    for (int t = 0; t < 2000; ++t) {
      // Snap to quarter pixels so exact ties occur.
      const Point p{std::round(coord(rng) * 4) / 4, std::round(coord(rng) * 4) / 4};
      Cell best{0, 0};
      double best_d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 17; ++i)
        for (int j = 0; j < 23; ++j) {
          const Point c = rf_center(h, {i, j});
          const double d = std::hypot(c.x - p.x, c.y - p.y);
          if (d < best_d) {
            best_d = d;
            best = {i, j};
          }
        }
      CHECK(nearest_cell(h, 17, 23, p) == best);
    }
  }
}

TEST_CASE("center_patch_rect") {
  CHECK(center_patch_rect(GridGeometry{16, 163, 162}, {0, 0}) == PixelRect{73, 73, 89, 89});
  CHECK(center_patch_rect(GridGeometry{4, 11, 10}, {0, 0}) == PixelRect{3, 3, 7, 7});
  CHECK(center_patch_rect(GridGeometry{2, 4, 3}, {0, 0}) == PixelRect{0, 0, 2, 2});
  CHECK(rf_rect(GridGeometry{16, 163, 162}, {0, 0}) == PixelRect{0, 0, 163, 163});
}

TEST_CASE("architecture file parsing") {
  const auto layers = parse_architecture("# demo\nconv1 11 4 0\n\npool1 3 2 0  # trailing comment\n");
  REQUIRE(layers.size() == 2);
  CHECK(layers[1].name == "pool1");
  CHECK(layers[1].spec.kernel == 3);
  CHECK(geometry_at(layers, "pool1") == compose_geometry(GridGeometry{4, 11, 10}, LayerSpec{3, 2, 0}));
  CHECK_THROWS_AS(geometry_at(layers, "conv9"), InvalidArgument);
  CHECK_THROWS_AS(parse_architecture("conv1 11 4\n"), InvalidArgument);
  CHECK_THROWS_AS(parse_architecture("conv1 0 1 0\n"), InvalidArgument);
}

TEST_CASE("grid file round trip is bit exact") {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 20; ++t) {
    std::uniform_int_distribution<int> dimd(1, 9);
    const auto g = oracle::random_grid(rng, dimd(rng), dimd(rng), dimd(rng), GridGeometry{16, 131, 129});
    const auto path = temp_path("rt.dcfg");
    write_grid(g, path);
    auto back = read_grid(path);
    CHECK(back.source_id() == "densecorr_gridgeom_rt");
    back.set_source_id({});
    CHECK(back == g);
    std::filesystem::remove(path);
  }
}

TEST_CASE("grid decode errors are distinct") {
  std::mt19937_64 rng(15);
  const auto g = oracle::random_grid(rng, 2, 3, 4, GridGeometry{8, 17, 16});
  const std::string good = encode_grid(g);
  CHECK(decode_grid(good) == g);

  auto kind_of = [](const std::string& bytes) {
    try {
      decode_grid(bytes);
    } catch (const GridFileError& e) {
      return e.kind();
    }
    FAIL("decode accepted a corrupt file");
    return GridFileError::Kind::io;
  };

  std::string bad = good;
  bad[0] = 'X';
  CHECK(kind_of(bad) == GridFileError::Kind::bad_magic);

  bad = good;
  bad[4] = 2;
  CHECK(kind_of(bad) == GridFileError::Kind::bad_version);

  CHECK(kind_of(good.substr(0, good.size() - 1)) == GridFileError::Kind::truncated);
  CHECK(kind_of(good.substr(0, 10)) == GridFileError::Kind::truncated);

  bad = good;
  // h = w = d = 2^20 overflows any payload size.
  for (int field = 0; field < 3; ++field) bad.replace(8 + 4 * field, 4, le32(1u << 20));
  CHECK(kind_of(bad) == GridFileError::Kind::dimension_overflow);

  bad = good;
  bad.replace(20, 4, le32(0));  // stride 0
  CHECK(kind_of(bad) == GridFileError::Kind::bad_geometry);

  bad = good;
  bad.replace(bad.size() - 4, 4, le32(0x7fc00000u));  // quiet NaN
  CHECK(kind_of(bad) == GridFileError::Kind::non_finite);

  try {
    read_grid(temp_path("missing.dcfg"));
    FAIL("expected an error");
  } catch (const GridFileError& e) {
    CHECK(e.kind() == GridFileError::Kind::io);
  }
}
