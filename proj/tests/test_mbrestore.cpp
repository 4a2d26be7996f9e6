#include <doctest.h>

#include <cmath>

#include "ldmr/gat.hpp"
#include "ldmr/mbrestore.hpp"
#include "ldmr/phantom.hpp"
#include "ldmr/rng.hpp"
#include "testutil.hpp"

using namespace ldmr;

TEST_CASE("patch_dct leaves constant input untouched") {
  const int w = 40, h = 32;
  std::vector<float> img(static_cast<std::size_t>(w) * h, 7.5f);
  DenoiserSpec spec;
  auto out = denoise_stabilized(img, w, h, spec);
  for (float v : out) CHECK(v == doctest::Approx(7.5).epsilon(1e-6));
}

TEST_CASE("patch_dct removes most unit noise from a flat field") {
  const int w = 96, h = 96;
  std::vector<float> img(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(100.0 + counter_normal(5, i));
  DenoiserSpec spec;  // patch_dct, strength 1
  auto out = denoise_stabilized(img, w, h, spec);
  CHECK(testutil::variance(out) <= 0.15);
  CHECK(testutil::mean(out) == doctest::Approx(100.0).epsilon(0.001));
}

TEST_CASE("patch_dct keeps a step edge in place") {
  const int w = 64, h = 64;
  std::vector<float> img(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      img[static_cast<std::size_t>(r) * w + c] =
          static_cast<float>((c >= 32 ? 10.0 : 0.0) +
                             counter_normal(6, static_cast<std::size_t>(r) * w + c));
  DenoiserSpec spec;
  auto out = denoise_stabilized(img, w, h, spec);
  // half-max crossing per row must stay within 1 pixel of the true edge
  for (int r = 4; r < h - 4; ++r) {
    int cross = -1;
    for (int c = 1; c < w; ++c) {
      double a = out[static_cast<std::size_t>(r) * w + c - 1];
      double b = out[static_cast<std::size_t>(r) * w + c];
      if (a < 5.0 && b >= 5.0) {
        cross = c;
        break;
      }
    }
    CHECK(cross >= 31);
    CHECK(cross <= 33);
  }
}

TEST_CASE("gaussian blur denoiser smooths but preserves the mean") {
  const int w = 64, h = 64;
  std::vector<float> img(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<float>(50.0 + counter_normal(7, i));
  DenoiserSpec spec;
  spec.kind = DenoiserKind::gaussian_blur;
  spec.window = 9;
  auto out = denoise_stabilized(img, w, h, spec);
  CHECK(testutil::mean(out) == doctest::Approx(50.0).epsilon(0.001));
  CHECK(testutil::variance(out) < 0.5 * testutil::variance(img));
}

TEST_CASE("external denoiser reads the container and validates shape") {
  testutil::TempDir tmp;
  ImageF f;
  f.width = 8;
  f.height = 8;
  f.values.assign(64, 3.25f);
  std::string path = tmp.file("den.f32");
  save_float(f, path);
  DenoiserSpec spec;
  spec.kind = DenoiserKind::external;
  spec.path = path;
  std::vector<float> ignored(64, 0.0f);
  auto out = denoise_stabilized(ignored, 8, 8, spec);
  REQUIRE(out.size() == f.values.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(f.values[i]));

  SUBCASE("missing file") {
    spec.path = tmp.file("absent.f32");
    CHECK_THROWS_AS(denoise_stabilized(ignored, 8, 8, spec), Error);
  }
  SUBCASE("wrong dimensions") {
    std::vector<float> other(32, 0.0f);
    CHECK_THROWS_AS(denoise_stabilized(other, 8, 4, spec), Error);
  }
}

TEST_CASE("mb_restore with zero blend returns the rescaled input") {
  PhantomSpec pspec = PhantomSpec::defaults(96, 96, 17);
  NoiseParams params;
  auto ph = generate_phantom(pspec, params);
  RawImage ld = acquire(ph.image, params, 0.5, 3);
  MbConfig cfg;
  cfg.params = params;
  cfg.gamma = 0.5;
  cfg.blend_weight = 0.0;
  ImageF out = mb_restore(ld, cfg);
  for (std::size_t i = 0; i < ld.size(); ++i) {
    double scaled = (ld.pixels[i] - params.tau) / 0.5 + params.tau;
    CHECK(out.values[i] == doctest::Approx(scaled).epsilon(1e-6));
  }
}

TEST_CASE("mb_restore with a perfect denoiser removes the noise") {
  testutil::TempDir tmp;
  PhantomSpec pspec = PhantomSpec::defaults(96, 96, 18);
  NoiseParams params;
  auto ph = generate_phantom(pspec, params);
  RawImage ld = acquire(ph.image, params, 0.5, 4);

  // stub: the stabilized noise-free reference under the effective parameters
  NoiseParams eff = params;
  eff.lambda = params.lambda / 0.5;
  eff.sigma_e2 = params.sigma_e2 / 0.25;
  ImageF ref;
  ref.width = ph.image.width;
  ref.height = ph.image.height;
  auto stab = gat_forward(ph.image.values, eff);
  ref.values.assign(stab.begin(), stab.end());
  std::string path = tmp.file("perfect.f32");
  save_float(ref, path);

  MbConfig cfg;
  cfg.params = params;
  cfg.gamma = 0.5;
  cfg.blend_weight = 1.0;
  cfg.denoiser.kind = DenoiserKind::external;
  cfg.denoiser.path = path;
  ImageF out = mb_restore(ld, cfg);

  // residual vs the noise-free scene is only the inverse's small bias
  double worst = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!ph.image.support.bits[i]) continue;
    worst = std::max(
        worst, static_cast<double>(std::abs(out.values[i] -
                                            ph.image.values[i])) /
                   ph.image.values[i]);
  }
  CHECK(worst < 0.005);
}

TEST_CASE("auto blend weight follows 1 - sqrt(gamma)") {
  MbConfig cfg;
  cfg.gamma = 0.25;
  CHECK(cfg.effective_blend() == doctest::Approx(0.5));
  cfg.gamma = 0.5;
  CHECK(cfg.effective_blend() == doctest::Approx(1.0 - std::sqrt(0.5)));
  cfg.blend_weight = 0.3;
  CHECK(cfg.effective_blend() == doctest::Approx(0.3));
}

TEST_CASE("mb_restore keeps the full-dose mean over the support") {
  PhantomSpec pspec = PhantomSpec::defaults(128, 128, 19);
  NoiseParams params;
  params.sigma_e2 = 0.0;  // quantum-limited
  auto ph = generate_phantom(pspec, params);
  RawImage ld = acquire(ph.image, params, 0.5, 5);
  MbConfig cfg;
  cfg.params = params;
  cfg.gamma = 0.5;
  ImageF out = mb_restore(ld, cfg);
  double mo = 0, mref = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!ph.image.support.bits[i]) continue;
    mo += out.values[i];
    mref += ph.image.values[i];
    ++n;
  }
  CHECK(mo / n == doctest::Approx(mref / n).epsilon(0.005));
}

TEST_CASE("mb_restore validates gamma consistency") {
  PhantomSpec pspec = PhantomSpec::defaults(32, 32, 20);
  NoiseParams params;
  auto ph = generate_phantom(pspec, params);
  RawImage ld = acquire(ph.image, params, 0.5, 6);
  MbConfig cfg;
  cfg.params = params;
  cfg.gamma = 0.75;
  CHECK_THROWS_AS(mb_restore(ld, cfg), Error);
}
