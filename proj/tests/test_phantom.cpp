#include <doctest.h>

#include <cmath>

#include "ldmr/image.hpp"
#include "ldmr/phantom.hpp"
#include "ldmr/rng.hpp"
#include "testutil.hpp"

using namespace ldmr;

namespace {

NoiseFreeImage constant_scene(int w, int h, double level, double air = -1) {
  PhantomSpec spec = PhantomSpec::defaults(w, h, 9);
  spec.background.blob_count = 0;
  spec.mc_clusters.clear();
  spec.base_level = level;
  spec.semi_axis_col = 10.0 * w;  // support covers the whole frame
  spec.semi_axis_row = 10.0 * h;
  if (air > 0) spec.air_level = air;
  return generate_phantom(spec).image;
}

}  // namespace

TEST_CASE("phantom with no blobs or clusters is flat inside the support") {
  PhantomSpec spec = PhantomSpec::defaults(64, 64, 5);
  spec.background.blob_count = 0;
  spec.mc_clusters.clear();
  auto ph = generate_phantom(spec);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      if (ph.image.support.at(r, c))
        CHECK(ph.image.at(r, c) == doctest::Approx(spec.base_level));
      else
        CHECK(ph.image.at(r, c) == doctest::Approx(spec.air_level));
    }
}

TEST_CASE("phantom generation is deterministic") {
  PhantomSpec spec = PhantomSpec::defaults(96, 96, 123);
  auto a = generate_phantom(spec);
  auto b = generate_phantom(spec);
  CHECK(a.image.values == b.image.values);
  CHECK(a.specks.bits == b.specks.bits);
}

TEST_CASE("bright outliers in the default phantom live only in speck discs") {
  PhantomSpec spec = PhantomSpec::defaults(512, 512, 1);
  auto ph = generate_phantom(spec);
  const double amp_mean =
      0.5 * (spec.background.amp_min + spec.background.amp_max);
  const double thr = spec.base_level + 3.0 * amp_mean;
  std::size_t above = 0, above_outside = 0;
  for (std::size_t i = 0; i < ph.image.values.size(); ++i) {
    if (!ph.image.support.bits[i]) continue;
    if (ph.image.values[i] > thr) {
      ++above;
      if (!ph.specks.bits[i]) ++above_outside;
    }
  }
  CHECK(above_outside == 0);
  CHECK(above >= ph.specks.count() / 50);  // at least 2% of the disc pixels
  CHECK(ph.specks.count() > 0);
}

TEST_CASE("noise-free values respect the support invariants") {
  PhantomSpec spec = PhantomSpec::defaults(128, 128, 77);
  NoiseParams params;
  auto ph = generate_phantom(spec, params);
  for (std::size_t i = 0; i < ph.image.values.size(); ++i) {
    if (ph.image.support.bits[i])
      CHECK(ph.image.values[i] >= params.tau);
    else
      CHECK(ph.image.values[i] == doctest::Approx(spec.air_level));
  }
}

TEST_CASE("acquire reduces to deterministic scaling when noise vanishes") {
  auto scene = constant_scene(16, 16, 837.0);
  NoiseParams params;
  params.lambda = 1e-12;
  params.sigma_e2 = 0.0;
  params.tau = 50.0;
  RawImage img = acquire(scene, params, 0.75, 42);
  // gamma*(Y-tau)+tau = 0.75*787+50 = 640.25 -> 640
  for (uint16_t p : img.pixels) CHECK(p == 640);
}

TEST_CASE("acquire matches the analytic mean and variance") {
  // constant scene: every pixel is an independent draw
  auto scene = constant_scene(100, 100, 1050.0, 2500.0);
  // restrict to the support: build a big constant region from the support
  NoiseParams params;
  params.lambda = 5.0;
  params.sigma_e2 = 4.0;
  params.tau = 50.0;

  auto collect = [&](double gamma, uint64_t seed) {
    std::vector<double> v;
    RawImage img = acquire(scene, params, gamma, seed);
    for (std::size_t i = 0; i < img.size(); ++i)
      if (scene.support.bits[i]) v.push_back(img.pixels[i]);
    return v;
  };

  SUBCASE("full dose") {
    auto v = collect(1.0, 7);
    CHECK(testutil::mean(v) == doctest::Approx(1050.0).epsilon(0.002));
    CHECK(testutil::variance(v) == doctest::Approx(5004.0).epsilon(0.02));
  }
  SUBCASE("half dose") {
    auto v = collect(0.5, 8);
    CHECK(testutil::mean(v) == doctest::Approx(550.0).epsilon(0.002));
    CHECK(testutil::variance(v) == doctest::Approx(2504.0).epsilon(0.02));
  }
}

TEST_CASE("acquire variance is affine in gamma") {
  auto scene = constant_scene(160, 160, 1050.0, 2500.0);
  NoiseParams params;
  params.lambda = 5.0;
  params.sigma_e2 = 4.0;
  params.tau = 50.0;

  std::vector<double> gammas = {0.25, 0.5, 0.75, 1.0};
  std::vector<double> vars;
  for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
    std::vector<double> v;
    for (int rep = 0; rep < 120; ++rep) {
      RawImage img = acquire(scene, params, gammas[gi], 1000 + 10 * gi + rep);
      for (std::size_t i = 0; i < img.size(); ++i)
        if (scene.support.bits[i]) v.push_back(img.pixels[i]);
    }
    vars.push_back(testutil::variance(v));
  }
  // least squares var = a*gamma + b
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(gammas.size());
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    sx += gammas[i];
    sy += vars[i];
    sxx += gammas[i] * gammas[i];
    sxy += gammas[i] * vars[i];
  }
  double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  double b = (sy - a * sx) / n;
  double ssres = 0, sstot = 0;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    double fit = a * gammas[i] + b;
    ssres += (vars[i] - fit) * (vars[i] - fit);
    sstot += (vars[i] - sy / n) * (vars[i] - sy / n);
  }
  CHECK(1.0 - ssres / sstot > 0.999);
  CHECK(a == doctest::Approx(5000.0).epsilon(0.02));  // lambda*(Y-tau)
  CHECK(b == doctest::Approx(4.0).epsilon(3.0));      // sigma_e2, noisy
}

TEST_CASE("quantization bias is negligible at working signal levels") {
  auto scene = constant_scene(200, 200, 200.0, 900.0);
  NoiseParams params;
  params.lambda = 0.1;  // sigma ~ 3.9 DN at Y-tau=150
  params.sigma_e2 = 0.0;
  params.tau = 50.0;
  double acc = 0;
  std::size_t n = 0;
  for (int rep = 0; rep < 400; ++rep) {
    RawImage img = acquire(scene, params, 1.0, 5000 + rep);
    for (std::size_t i = 0; i < img.size(); ++i)
      if (scene.support.bits[i]) {
        acc += img.pixels[i];
        ++n;
      }
  }
  CHECK(std::abs(acc / n - 200.0) < 0.01);
}

TEST_CASE("acquire is reproducible for a fixed seed") {
  PhantomSpec spec = PhantomSpec::defaults(64, 64, 3);
  auto ph = generate_phantom(spec);
  NoiseParams params;
  RawImage a = acquire(ph.image, params, 0.5, 99);
  RawImage b = acquire(ph.image, params, 0.5, 99);
  CHECK(a.pixels == b.pixels);
  RawImage c = acquire(ph.image, params, 0.5, 100);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("segmentation recovers the analytic support") {
  PhantomSpec spec = PhantomSpec::defaults(256, 256, 21);
  NoiseParams params;
  auto ph = generate_phantom(spec, params);

  auto agreement = [&](const RawImage& img) {
    BreastMask mask = segment_breast(img, 300.0);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < mask.bits.size(); ++i)
      agree += mask.bits[i] == ph.image.support.bits[i];
    return static_cast<double>(agree) / static_cast<double>(mask.bits.size());
  };

  SUBCASE("noise-free render") {
    ImageF f;
    f.width = ph.image.width;
    f.height = ph.image.height;
    f.values.assign(ph.image.values.begin(), ph.image.values.end());
    CHECK(agreement(to_raw(f)) >= 0.99);
  }
  SUBCASE("full-dose acquisition") {
    CHECK(agreement(acquire(ph.image, params, 1.0, 11)) >= 0.99);
  }
}

TEST_CASE("normalized LD and FD patches agree in expectation") {
  PhantomSpec spec = PhantomSpec::defaults(256, 256, 31);
  NoiseParams params;
  auto ph = generate_phantom(spec, params);
  RawImage fd = acquire(ph.image, params, 1.0, 500);
  RawImage ld = acquire(ph.image, params, 0.5, 501);
  auto fdn = normalize_for_net(fd);
  auto ldn = normalize_for_net(ld);
  double sum_fd = 0, sum_ld = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < fdn.size(); ++i) {
    if (!ph.image.support.bits[i]) continue;
    sum_fd += fdn[i];
    sum_ld += ldn[i];
    ++n;
  }
  CHECK(sum_ld / n == doctest::Approx(sum_fd / n).epsilon(0.005));
}
