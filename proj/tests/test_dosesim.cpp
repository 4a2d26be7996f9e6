#include <doctest.h>

#include <cmath>

#include "ldmr/dosesim.hpp"
#include "ldmr/phantom.hpp"
#include "ldmr/rng.hpp"
#include "testutil.hpp"

using namespace ldmr;

namespace {

NoiseFreeImage flat_scene(int w, int h, double level) {
  PhantomSpec spec = PhantomSpec::defaults(w, h, 9);
  spec.background.blob_count = 0;
  spec.mc_clusters.clear();
  spec.base_level = level;
  spec.semi_axis_col = 10.0 * w;  // support covers the whole frame
  spec.semi_axis_row = 10.0 * h;
  return generate_phantom(spec).image;
}

NoiseParams strong_params() {
  NoiseParams p;
  p.lambda = 5.0;
  p.sigma_e2 = 4.0;
  p.tau = 50.0;
  return p;
}

}  // namespace

TEST_CASE("direct mode at gamma near one returns the rounded input scaling") {
  auto scene = flat_scene(32, 32, 1050.0);
  NoiseParams p = strong_params();
  RawImage fd = acquire(scene, p, 1.0, 1);
  DoseSimConfig cfg;
  cfg.gamma = 1.0 - 1e-9;
  cfg.params = p;
  cfg.seed = 2;
  RawImage ld = simulate_low_dose(fd, cfg);
  for (std::size_t i = 0; i < fd.size(); ++i)
    CHECK(ld.pixels[i] == fd.pixels[i]);
}

TEST_CASE("direct mode reproduces the low-dose variance") {
  auto scene = flat_scene(100, 100, 1050.0);
  NoiseParams p = strong_params();
  DoseSimConfig cfg;
  cfg.gamma = 0.5;
  cfg.params = p;

  std::vector<double> out;
  out.reserve(10000);
  RawImage fd = acquire(scene, p, 1.0, 11);
  cfg.seed = 12;
  RawImage ld = simulate_low_dose(fd, cfg);
  for (uint16_t px : ld.pixels) out.push_back(px);
  CHECK(testutil::mean(out) == doctest::Approx(550.0).epsilon(0.005));
  CHECK(testutil::variance(out) == doctest::Approx(2504.0).epsilon(0.03));
}

TEST_CASE("direct-mode mean is exact in expectation") {
  auto scene = flat_scene(100, 100, 1050.0);
  NoiseParams p = strong_params();
  RawImage fd = acquire(scene, p, 1.0, 21);
  DoseSimConfig cfg;
  cfg.gamma = 0.75;
  cfg.params = p;
  cfg.seed = 22;
  RawImage ld = simulate_low_dose(fd, cfg);
  double target = 0;
  for (uint16_t px : fd.pixels) target += 0.75 * (px - 50.0) + 50.0;
  target /= static_cast<double>(fd.size());
  std::vector<double> out(ld.pixels.begin(), ld.pixels.end());
  CHECK(testutil::mean(out) == doctest::Approx(target).epsilon(0.001));
}

TEST_CASE("simulated and directly acquired populations are KS-indistinguishable") {
  // n = 1e5 pixels per side, 1% level
  auto scene = flat_scene(400, 250, 1050.0);
  const double thresh = testutil::ks_critical(1e5, 1e5);

  auto ks = [&](const NoiseParams& p, DoseSimDomain domain, uint64_t seed) {
    RawImage fd = acquire(scene, p, 1.0, seed);
    DoseSimConfig cfg;
    cfg.gamma = 0.5;
    cfg.params = p;
    cfg.domain = domain;
    cfg.seed = seed + 1;
    RawImage sim = simulate_low_dose(fd, cfg);
    RawImage ref = acquire(scene, p, 0.5, seed + 2);
    std::vector<double> a(sim.pixels.begin(), sim.pixels.end());
    std::vector<double> b(ref.pixels.begin(), ref.pixels.end());
    return testutil::ks_statistic(a, b);
  };

  SUBCASE("detector-scale noise parameters, both modes") {
    NoiseParams p;  // lambda 0.1, sigma_e2 3, tau 50
    double dd = ks(p, DoseSimDomain::direct, 31);
    double dv = ks(p, DoseSimDomain::vst, 61);
    INFO("direct KS=", dd, " vst KS=", dv, " thresh=", thresh);
    CHECK(dd < thresh);
    CHECK(dv < thresh);
  }
  SUBCASE("high quantum gain, vst mode") {
    // the direct mode's observed-signal variance proxy leaves a skew of
    // ~0.075 here, putting its KS distance at the critical value itself;
    // the stabilized-domain injection is proxy-free and stays clean
    double dv = ks(strong_params(), DoseSimDomain::vst, 91);
    INFO("vst KS=", dv, " thresh=", thresh);
    CHECK(dv < thresh);
  }
}

TEST_CASE("chained dose reductions compose") {
  // quantum-dominated regime
  auto scene = flat_scene(120, 120, 1050.0);
  NoiseParams p = strong_params();
  p.sigma_e2 = 0.01;

  std::vector<double> chained, single;
  for (int rep = 0; rep < 6; ++rep) {
    RawImage fd = acquire(scene, p, 1.0, 100 + rep);
    DoseSimConfig c1;
    c1.gamma = 0.75;
    c1.params = p;
    c1.seed = 200 + rep;
    RawImage mid = simulate_low_dose(fd, c1);
    mid.meta.gamma = 1.0;  // relabel as the new reference dose
    DoseSimConfig c2;
    c2.gamma = 0.5 / 0.75;
    c2.params = p;
    c2.seed = 300 + rep;
    RawImage two = simulate_low_dose(mid, c2);
    for (uint16_t px : two.pixels) chained.push_back(px);

    DoseSimConfig cs;
    cs.gamma = 0.5;
    cs.params = p;
    cs.seed = 400 + rep;
    RawImage one = simulate_low_dose(fd, cs);
    for (uint16_t px : one.pixels) single.push_back(px);
  }
  double vc = testutil::variance(chained);
  double vs = testutil::variance(single);
  CHECK(vc == doctest::Approx(vs).epsilon(0.05));
}

TEST_CASE("simulate_low_dose is deterministic and validates inputs") {
  auto scene = flat_scene(32, 32, 800.0);
  NoiseParams p = strong_params();
  RawImage fd = acquire(scene, p, 1.0, 51);
  DoseSimConfig cfg;
  cfg.gamma = 0.5;
  cfg.params = p;
  cfg.seed = 52;
  RawImage a = simulate_low_dose(fd, cfg);
  RawImage b = simulate_low_dose(fd, cfg);
  CHECK(a.pixels == b.pixels);

  SUBCASE("gamma bounds") {
    cfg.gamma = 1.0;
    CHECK_THROWS_AS(simulate_low_dose(fd, cfg), Error);
    cfg.gamma = 0.0;
    CHECK_THROWS_AS(simulate_low_dose(fd, cfg), Error);
  }
  SUBCASE("input must be full dose") {
    RawImage ld = a;
    cfg.gamma = 0.5;
    CHECK_THROWS_AS(simulate_low_dose(ld, cfg), Error);
  }
  SUBCASE("vst mode needs a positive quantum gain") {
    cfg.params.lambda = -1.0;
    cfg.domain = DoseSimDomain::vst;
    CHECK_THROWS_AS(simulate_low_dose(fd, cfg), Error);
  }
}

TEST_CASE("noise parameter estimation closes the loop") {
  NoiseParams p = strong_params();
  std::vector<FlatGroup> flats;

  FlatGroup dark;
  dark.exposure = 0.0;
  {
    auto scene = flat_scene(128, 128, p.tau + 1e-9);
    NoiseParams pd = p;
    for (int i = 0; i < 20; ++i)
      dark.images.push_back(acquire(scene, pd, 1.0, 900 + i));
  }
  flats.push_back(dark);

  int gi = 0;
  for (double s : {200.0, 800.0, 3200.0}) {
    FlatGroup grp;
    grp.exposure = s;
    auto scene = flat_scene(128, 128, p.tau + s);
    for (int i = 0; i < 50; ++i)
      grp.images.push_back(acquire(scene, p, 1.0, 1000 + 100 * gi + i));
    flats.push_back(grp);
    ++gi;
  }

  NoiseParams est = estimate_noise_params(flats);
  CHECK(est.lambda == doctest::Approx(5.0).epsilon(0.03));
  CHECK(est.sigma_e2 == doctest::Approx(4.0).epsilon(0.15));
  CHECK(est.tau == doctest::Approx(50.0).epsilon(0.01));
}

TEST_CASE("degenerate flat sets are rejected") {
  NoiseParams weak;
  weak.lambda = 1e-9;
  weak.sigma_e2 = 0.0;
  weak.tau = 50.0;

  SUBCASE("noiseless flats give a singular fit") {
    std::vector<FlatGroup> flats;
    int gi = 0;
    for (double s : {200.2, 800.2, 3200.2}) {
      FlatGroup grp;
      grp.exposure = s;
      auto scene = flat_scene(16, 16, weak.tau + s);
      for (int i = 0; i < 3; ++i)
        grp.images.push_back(acquire(scene, weak, 1.0, 100 * gi + i));
      flats.push_back(grp);
      ++gi;
    }
    try {
      estimate_noise_params(flats);
      FAIL("expected singular_fit");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::singular_fit);
    }
  }
  SUBCASE("two exposure levels only") {
    NoiseParams p = strong_params();
    std::vector<FlatGroup> flats;
    int gi = 0;
    for (double s : {200.0, 800.0}) {
      FlatGroup grp;
      grp.exposure = s;
      auto scene = flat_scene(16, 16, p.tau + s);
      for (int i = 0; i < 3; ++i)
        grp.images.push_back(acquire(scene, p, 1.0, 100 * gi + i));
      flats.push_back(grp);
      ++gi;
    }
    try {
      estimate_noise_params(flats);
      FAIL("expected precondition");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::precondition);
    }
  }
}
