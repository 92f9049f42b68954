#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "swaptest/axioms.hpp"
#include "swaptest/error.hpp"
#include "swaptest/seeding.hpp"

using namespace swaptest;

namespace {

// p = sigmoid(k * (weighted mean - 0.5)) with a voxel weight ramp along x, so
// patches matter unequally.
class RampPredictor final : public Predictor {
 public:
  double predict_proba(const Volume& v, const Covariates& cov) const override {
    double s = 0, w = 0;
    const Vec3i d = v.dims();
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x; ++x) {
          const double wx = 1.0 + x;
          s += wx * v.at(x, y, z);
          w += wx;
        }
    return 1.0 / (1.0 + std::exp(-12.0 * (s / w - 0.5) - 0.01 * (cov.age - 70.0)));
  }
  using Predictor::predict_proba;
};

Volume shifted_volume(Vec3i d, std::uint64_t seed, float offset) {
  Volume v = oracle::random_volume(d, seed);
  std::vector<float> vals(v.values().begin(), v.values().end());
  for (auto& x : vals) x = 0.5f * x + offset;
  return Volume(d, std::move(vals), true);
}

// 12 scans whose labels agree with the predictor, so both reference pools exist.
std::vector<Scan> labelled_set(const Predictor& m) {
  std::vector<Scan> out;
  for (int i = 0; i < 12; ++i) {
    Scan s = oracle::make_scan(i, Label::CN, shifted_volume({8, 8, 8}, 500 + i, 0.1f + 0.05f * (i % 8)),
                               60.0 + i);
    s.label = m.predict_label(s);
    out.push_back(std::move(s));
  }
  return out;
}

Heatmap identity_map(const Scan& s) {
  Heatmap h;
  h.grid = build_patch_grid(s.volume.dims(), 1, 1);
  h.cells.assign(s.volume.values().begin(), s.volume.values().end());
  return h;
}

Heatmap const_map(float c) {
  Heatmap h;
  h.grid = build_patch_grid({4, 4, 4}, 2, 2);
  h.cells.assign(h.grid.size(), c);
  return h;
}

}  // namespace

TEST_CASE("perturb") {
  const Volume v = oracle::random_volume({8, 8, 8}, 3);
  CHECK(perturb(v, 0.05, 9) == perturb(v, 0.05, 9));
  CHECK_FALSE(perturb(v, 0.05, 9) == perturb(v, 0.05, 10));
  const Volume tiny = perturb(v, 1e-12, 9);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(tiny.values()[i] == doctest::Approx(v.values()[i]));
  const Volume big = perturb(v, 5.0, 1);
  for (float x : big.values()) CHECK((x >= 0.0f && x <= 1.0f));

  // interior values, so clamping never bites at sigma = 0.02
  const Volume mid({32, 32, 32}, 0.5f, true);
  const Volume p = perturb(mid, 0.02, 4);
  double s = 0, s2 = 0;
  for (float x : p.values()) {
    s += x - 0.5;
    s2 += (x - 0.5) * (x - 0.5);
  }
  const double n = static_cast<double>(p.size());
  const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
  CHECK(std::abs(sd - 0.02) < 0.002);
  CHECK(std::abs(s / n) < 0.001);
}

TEST_CASE("continuity") {
  const Scan x = oracle::make_scan(0, Label::AD, oracle::random_volume({6, 6, 6}, 8));
  AxiomConfig cfg;
  cfg.n_perturbations = 4;
  cfg.sigma = 0.05;

  const auto flat = continuity([](const Scan&) { return const_map(0.3f); }, x, cfg);
  CHECK(flat.ratio == 0.0);
  CHECK(flat.distance == 0.0);
  CHECK(flat.used == 4);

  // identity explainer: ratio is 1 up to float rounding
  const auto id = continuity(identity_map, x, cfg);
  CHECK(id.ratio == doctest::Approx(1.0).epsilon(1e-5));

  cfg.n_perturbations = 1;
  const std::uint64_t key = 17;
  const auto half = [](const Scan& s) {
    Heatmap h;
    h.grid = build_patch_grid(s.volume.dims(), 3, 3);
    for (const Vec3i& o : h.grid.origins) h.cells.push_back(0.5f * s.volume.at(o.x, o.y, o.z));
    return h;
  };
  const auto one = continuity(half, x, cfg, key);
  Scan xp = x;
  xp.volume = perturb(x.volume, cfg.sigma, derive_seed(cfg.seed, {key, 0}));
  const Heatmap a = half(x), b = half(xp);
  std::vector<double> da(a.cells.begin(), a.cells.end()), db(b.cells.begin(), b.cells.end());
  std::vector<double> va(x.volume.values().begin(), x.volume.values().end()),
      vb(xp.volume.values().begin(), xp.volume.values().end());
  const double expect = oracle::lp(da, db, 2) / oracle::lp(va, vb, 2);
  CHECK(one.ratio == doctest::Approx(expect).epsilon(1e-6));
  CHECK(one.distance == doctest::Approx(oracle::lp(da, db, 2)).epsilon(1e-6));
  cfg.norm = Norm::L1;
  CHECK(continuity(half, x, cfg, key).distance == doctest::Approx(oracle::lp(da, db, 1)).epsilon(1e-6));

  // a perturbation that cannot move anything: every voxel at 0 and sigma tiny -> skipped
  Scan zero = x;
  zero.volume = Volume({6, 6, 6}, 0.0f, true);
  cfg.sigma = 1e-60;
  CHECK_THROWS_AS(continuity(identity_map, zero, cfg), StatsError);
}

TEST_CASE("heatmap baseline") {
  std::vector<Heatmap> hs{const_map(0.0f), const_map(0.5f), const_map(1.0f)};
  const double n = static_cast<double>(hs[0].cells.size());
  // pairwise L2: 0.5 sqrt(n), 1.0 sqrt(n), 0.5 sqrt(n)
  CHECK(heatmap_baseline(hs) == doctest::Approx(2.0 / 3.0 * std::sqrt(n)));
  CHECK(heatmap_baseline(hs, Norm::L1) == doctest::Approx(2.0 / 3.0 * n));
  std::vector<Heatmap> same{const_map(0.4f), const_map(0.4f), const_map(0.4f)};
  CHECK(heatmap_baseline(same) == 0.0);
  CHECK_THROWS_AS(heatmap_baseline(std::vector<Heatmap>{const_map(0.1f)}), StatsError);
}

TEST_CASE("selectivity") {
  Heatmap a = const_map(0.0f), b = const_map(0.0f);
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    a.cells[i] = 0.1f * static_cast<float>(i);
    b.cells[i] = 0.5f + 0.02f * static_cast<float>(i);
  }
  CHECK(*selectivity(a, b) == doctest::Approx(1.0));
  Heatmap c = b;
  for (auto& v : c.cells) v = 1.0f - v;
  CHECK(*selectivity(a, c) == doctest::Approx(-1.0));
  CHECK(*selectivity(a, c) == doctest::Approx(*selectivity(c, a)));
  CHECK_FALSE(selectivity(a, const_map(0.2f)).has_value());

  const Classifier m = oracle::tiny_classifier({8, 8, 8}, 31);
  const Scan in = oracle::make_scan(0, Label::AD, oracle::random_volume({8, 8, 8}, 40), 77.0, 1);
  const std::vector<Scan> refs{oracle::make_scan(1, Label::CN, oracle::random_volume({8, 8, 8}, 41)),
                               oracle::make_scan(2, Label::CN, oracle::random_volume({8, 8, 8}, 42))};
  ExplainConfig ec;
  ec.patch_size = 4;
  ec.stride = 2;
  const auto got = selectivity(swap_heatmap(m, in, refs, ec), reversed_heatmap(m, in, refs, Method::Swap, ec));
  const double want = oracle::pearson(oracle::swap_cells(m, in, refs, 4, 2),
                                      oracle::reversed_swap_cells(m, in, refs, 4, 2));
  REQUIRE(got.has_value());
  CHECK(*got == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("sample_images") {
  const auto a = sample_images(20, 5, 3);
  CHECK(a == sample_images(20, 5, 3));
  CHECK(a.size() == 5);
  std::vector<std::size_t> s = a;
  std::sort(s.begin(), s.end());
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK_THROWS_AS(sample_images(4, 5, 3), ConfigError);
}

TEST_CASE("evaluate_axioms on a small labelled set") {
  const RampPredictor m;
  const auto test = labelled_set(m);
  int n_ad = 0;
  for (const auto& s : test) n_ad += s.label == Label::AD;
  REQUIRE(n_ad >= 3);
  REQUIRE(12 - n_ad >= 3);

  AxiomConfig cfg;
  cfg.n_images = 4;
  cfg.n_perturbations = 3;
  ExplainConfig ec;
  ec.patch_size = 4;
  ec.n_references = 2;
  const std::vector<Method> both{Method::Swap, Method::Occlusion};

  const AxiomReport r = evaluate_axioms(m, test, both, cfg, ec);
  const AxiomReport again = evaluate_axioms(m, test, both, cfg, ec);
  REQUIRE(r.methods.size() == 2);
  for (Method meth : both) {
    const MethodReport& mr = r.get(meth);
    const MethodReport& mr2 = again.get(meth);
    REQUIRE(mr.images.size() == 4);
    double sum = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(mr.images[i].continuity == mr2.images[i].continuity);
      CHECK(mr.images[i].selectivity == mr2.images[i].selectivity);
      CHECK(mr.images[i].test_index == sample_images(12, 4, cfg.seed)[i]);
      CHECK(mr.images[i].continuity > 0.0);
      CHECK(mr.images[i].perturbed_distance <= mr.images[i].continuity * 1e9);
      sum += mr.images[i].continuity;
    }
    CHECK(mr.mean_continuity == doctest::Approx(sum / 4));
    CHECK(mr.baseline > 0.0);
  }

  // one image: the report reproduces the single-image pipeline
  cfg.n_images = 1;
  const AxiomReport single = evaluate_axioms(m, test, both, cfg, ec);
  const std::size_t idx = sample_images(12, 1, cfg.seed)[0];
  const Scan& x = test[idx];
  ExplainConfig sc = ec;
  const Explainer occ = [&](const Scan& s) { return occlusion_heatmap(m, s, sc); };
  const Heatmap h = occ(x);
  const auto c = continuity(occ, x, cfg, idx);
  CHECK(single.get(Method::Occlusion).images[0].continuity == c.ratio);
  CHECK(single.get(Method::Occlusion).images[0].selectivity ==
        selectivity(h, reversed_heatmap(m, x, {}, Method::Occlusion, sc)));
  CHECK(single.get(Method::Occlusion).baseline == 0.0);
}

TEST_CASE("larger sigma gives larger input distances and smaller ratios stay finite") {
  const Scan x = oracle::make_scan(0, Label::AD, shifted_volume({8, 8, 8}, 12, 0.25f));
  AxiomConfig a;
  a.n_perturbations = 1;
  AxiomConfig b = a;
  b.sigma = 2 * a.sigma;
  const auto ra = continuity(identity_map, x, a);
  const auto rb = continuity(identity_map, x, b);
  CHECK(rb.distance > 1.5 * ra.distance);
  CHECK(std::isfinite(ra.ratio));
}

TEST_CASE("aggregate") {
  MethodReport mr;
  for (int i = 0; i < 4; ++i) {
    ImageRecord r;
    r.continuity = i;
    r.perturbed_distance = 2 * i;
    if (i != 2) r.selectivity = 0.1 * i;
    mr.images.push_back(r);
  }
  mr.aggregate();
  CHECK(mr.mean_continuity == doctest::Approx(1.5));
  CHECK(mr.mean_perturbed_distance == doctest::Approx(3.0));
  CHECK(mr.selectivity_excluded == 1);
  CHECK(*mr.mean_selectivity == doctest::Approx(0.4 / 3));
  // sample sd of {0,1,2,3} is sqrt(5/3); se = sd / 2
  CHECK(mr.se_continuity == doctest::Approx(std::sqrt(5.0 / 3.0) / 2));
}
