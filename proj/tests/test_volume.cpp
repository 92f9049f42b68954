#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "swaptest/error.hpp"
#include "swaptest/stats.hpp"
#include "swaptest/volume.hpp"

using namespace swaptest;

namespace {

std::vector<double> as_double(std::span<const float> v) { return {v.begin(), v.end()}; }

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

}  // namespace

TEST_CASE("volume layout is x fastest") {
  Volume v({3, 4, 5});
  CHECK(v.size() == 60);
  CHECK(v.index(1, 0, 0) == 1);
  CHECK(v.index(0, 1, 0) == 3);
  CHECK(v.index(0, 0, 1) == 12);
  CHECK_THROWS_AS(Volume({3, 4, 5}, std::vector<float>(59), false), ShapeError);
  CHECK_THROWS_AS(Volume({0, 4, 5}), ShapeError);
}

TEST_CASE("standardize: constant volume maps to zero") {
  Volume v({4, 4, 4}, 7.0f);
  const Volume s = standardize(v);
  CHECK(s.standardized());
  for (float x : s.values()) CHECK(x == 0.0f);
}

TEST_CASE("standardize: 0..999 against sorted interpolation oracle") {
  Volume v({10, 10, 10});
  std::vector<double> raw;
  for (std::size_t i = 0; i < v.size(); ++i) {
    // shuffled order so the implementation cannot rely on sorted input
    const float val = static_cast<float>((i * 7919) % 1000);
    v.values()[i] = val;
    raw.push_back(val);
  }
  const double lo = oracle::percentile(raw, 0.2), hi = oracle::percentile(raw, 99.8);
  CHECK(lo == doctest::Approx(1.998).epsilon(1e-12));
  CHECK(hi == doctest::Approx(997.002).epsilon(1e-12));
  const Volume s = standardize(v);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double expect = std::clamp((raw[i] - lo) / (hi - lo), 0.0, 1.0);
    CHECK(s.values()[i] == doctest::Approx(expect).epsilon(1e-6));
  }
  CHECK(*std::min_element(s.values().begin(), s.values().end()) == 0.0f);
  CHECK(*std::max_element(s.values().begin(), s.values().end()) == 1.0f);
}

TEST_CASE("standardize rejects a second pass and bad percentiles") {
  Volume v = oracle::random_volume({4, 4, 4}, 1, false);
  CHECK_THROWS_AS(standardize(standardize(v)), ConfigError);
  CHECK_THROWS_AS(standardize(v, 50.0, 50.0), ConfigError);
  CHECK_THROWS_AS(standardize(v, -1.0, 50.0), ConfigError);
}

TEST_CASE("standardize is monotone") {
  Volume v = oracle::random_volume({8, 8, 8}, 3, false);
  for (auto& x : v.values()) x = x * 40.0f - 3.0f;
  const Volume s = standardize(v);
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const float a = v.values()[i], b = v.values()[i + 1];
    if (a < b) CHECK(s.values()[i] <= s.values()[i + 1]);
    if (a > b) CHECK(s.values()[i] >= s.values()[i + 1]);
  }
}

TEST_CASE("percentile matches the sort-and-interpolate oracle") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-3.0f, 9.0f);
  for (int n : {1, 2, 3, 17, 250}) {
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = u(rng);
    for (double p : {0.0, 0.2, 12.5, 50.0, 99.8, 100.0})
      CHECK(percentile(v, p) == doctest::Approx(oracle::percentile(as_double(v), p)).epsilon(1e-9));
  }
}

TEST_CASE("center_crop") {
  Volume v = oracle::random_volume({10, 10, 10}, 2);
  CHECK(center_crop(v, {10, 10, 10}) == v);
  CHECK(center_crop_offset({6, 6, 6}, {4, 4, 4}) == Vec3i{1, 1, 1});
  // odd remainder: extra voxel on the high side
  CHECK(center_crop_offset({7, 8, 9}, {4, 4, 4}) == Vec3i{1, 2, 2});
  const Volume c = center_crop(v, {4, 5, 6});
  const Vec3i off = center_crop_offset({10, 10, 10}, {4, 5, 6});
  for (int z = 0; z < 6; ++z)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 4; ++x) CHECK(c.at(x, y, z) == v.at(x + off.x, y + off.y, z + off.z));
  CHECK(center_crop_offset({100, 120, 110}, {100, 100, 100}) == Vec3i{0, 10, 5});
  try {
    center_crop(v, {4, 11, 4});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("axis y") != std::string::npos);
  }
}

TEST_CASE("patch grid origins") {
  CHECK(build_patch_grid({100, 100, 100}, 20, 20).size() == 125);
  const auto g = build_patch_grid({32, 32, 32}, 8, 4);
  CHECK(axis_origins(32, 8, 4) == std::vector<int>{0, 4, 8, 12, 16, 20, 24});
  CHECK(g.size() == 343);
  CHECK(axis_origins(10, 4, 3) == std::vector<int>{0, 3, 6});
  CHECK(axis_origins(10, 4, 4) == std::vector<int>{0, 4, 6});
  CHECK_THROWS_AS(build_patch_grid({10, 10, 3}, 4, 4), ShapeError);
  CHECK_THROWS_AS(build_patch_grid({10, 10, 10}, 4, 5), ShapeError);
  CHECK_THROWS_AS(build_patch_grid({10, 10, 10}, 4, 0), ShapeError);
}

TEST_CASE("patch grid covers every voxel and matches the oracle enumeration") {
  for (Vec3i d : {Vec3i{7, 9, 11}, Vec3i{10, 10, 10}, Vec3i{5, 6, 13}})
    for (int s : {1, 3, 4})
      for (int t = 1; t <= s; ++t) {
        const auto g = build_patch_grid(d, s, t);
        CHECK(g.origins == oracle::grid(d, s, t));
        std::vector<char> covered(d.product(), 0);
        Volume idx(d);
        for (Vec3i o : g.origins) {
          CHECK(patch_in_bounds(d, o, s));
          for (int z = o.z; z < o.z + s; ++z)
            for (int y = o.y; y < o.y + s; ++y)
              for (int x = o.x; x < o.x + s; ++x) covered[idx.index(x, y, z)] = 1;
        }
        CHECK(std::count(covered.begin(), covered.end(), 1) == static_cast<long>(d.product()));
      }
}

TEST_CASE("copy_patch against the triple-loop oracle") {
  const Volume src = oracle::random_volume({8, 8, 8}, 10);
  const Volume dst = oracle::random_volume({8, 8, 8}, 11);
  const Volume dst_before = dst;
  const Volume out = copy_patch(src, dst, {2, 2, 2}, 3);
  CHECK(out == oracle::copy_patch(src, dst, {2, 2, 2}, 3));
  CHECK(dst == dst_before);
  CHECK(copy_patch(dst, dst, {1, 2, 3}, 4) == dst);
  CHECK(copy_patch(src, dst, {0, 0, 0}, 8).values()[0] == src.values()[0]);
  CHECK(copy_patch(src, dst, {0, 0, 0}, 8) == src);
  CHECK_THROWS_AS(copy_patch(src, oracle::random_volume({8, 8, 7}, 1), {0, 0, 0}, 2), ShapeError);
  CHECK_THROWS_AS(copy_patch(src, dst, {6, 0, 0}, 3), ShapeError);
}

TEST_CASE("copy_patch region read-back, exhaustive over origins") {
  const Volume src = oracle::random_volume({5, 5, 5}, 12);
  const Volume dst = oracle::random_volume({5, 5, 5}, 13);
  for (int s = 1; s <= 3; ++s)
    for (Vec3i o : oracle::grid({5, 5, 5}, s, 1)) {
      const Volume out = copy_patch(src, dst, o, s);
      for (int z = 0; z < 5; ++z)
        for (int y = 0; y < 5; ++y)
          for (int x = 0; x < 5; ++x)
            REQUIRE(out.at(x, y, z) ==
                    (patch_contains(o, s, x, y, z) ? src.at(x, y, z) : dst.at(x, y, z)));
    }
}

TEST_CASE("fill_patch") {
  const Volume v = oracle::random_volume({8, 8, 8}, 14);
  CHECK(fill_patch(v, {2, 2, 2}, 3, 0.5f) == oracle::fill_patch(v, {2, 2, 2}, 3, 0.5f));
  const Volume zero = fill_patch(v, {0, 0, 0}, 8, 0.0f);
  for (float x : zero.values()) CHECK(x == 0.0f);
  const Volume c({6, 6, 6}, 0.25f, true);
  CHECK(fill_patch(c, {1, 1, 1}, 4, 0.25f) == c);
  CHECK_THROWS_AS(fill_patch(v, {-1, 0, 0}, 2, 0.0f), ShapeError);
}

TEST_CASE("lp_distance") {
  CHECK(lp_distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}, Norm::L2) == 5.0);
  CHECK(lp_distance(std::vector<double>{0, 0}, std::vector<double>{3, -4}, Norm::L1) == 7.0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = random_vec(100, seed), b = random_vec(100, seed + 100);
    for (Norm n : {Norm::L1, Norm::L2}) {
      const int p = static_cast<int>(n);
      CHECK(lp_distance(a, b, n) == doctest::Approx(oracle::lp(a, b, p)).epsilon(1e-6));
      CHECK(lp_distance(a, b, n) == lp_distance(b, a, n));
      CHECK(lp_distance(a, a, n) == 0.0);
      CHECK(lp_distance(a, b, n) > 0.0);
    }
  }
  std::vector<float> fa{1.f, 2.f}, fb{1.f, 2.f};
  CHECK(lp_distance(fa, fb, Norm::L2) == 0.0);
  CHECK_THROWS(lp_distance(std::vector<double>{1}, std::vector<double>{1, 2}, Norm::L2));
}

TEST_CASE("pearson") {
  const auto a = random_vec(50, 21), b = random_vec(50, 22);
  std::vector<double> affine, neg;
  for (double x : a) {
    affine.push_back(2 * x + 1);
    neg.push_back(-x);
  }
  CHECK(pearson(a, affine) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(a, neg) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(pearson(a, b) - oracle::pearson(a, b)) < 1e-9);
  CHECK(pearson(a, b) == doctest::Approx(pearson(b, a)).epsilon(1e-14));

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> scale(0.1, 10.0), shift(-5.0, 5.0);
  for (int k = 0; k < 10; ++k) {
    const double sa = scale(rng), ta = shift(rng), sb = scale(rng), tb = shift(rng);
    std::vector<double> a2, b2;
    for (double x : a) a2.push_back(sa * x + ta);
    for (double x : b) b2.push_back(sb * x + tb);
    CHECK(std::abs(pearson(a2, b2) - pearson(a, b)) < 1e-9);
  }
  CHECK_THROWS_AS(pearson(a, std::vector<double>(50, 3.0)), StatsError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), StatsError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{2, 3, 4}), StatsError);
}

TEST_CASE("mean and standard error") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(mean(v) == 2.5);
  // sample sd = sqrt(5/3); se = sd / 2
  CHECK(standard_error(v) == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK(standard_error(std::vector<double>{7}) == 0.0);
}
