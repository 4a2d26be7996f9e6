#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ldmr/image.hpp"
#include "ldmr/parallel.hpp"
#include "ldmr/rng.hpp"
#include "testutil.hpp"

using namespace ldmr;
namespace fs = std::filesystem;

namespace {

RawImage make_test_image(int w, int h, uint64_t seed, double gamma = 1.0) {
  RawImage img;
  img.width = w;
  img.height = h;
  img.meta.gamma = gamma;
  img.meta.seed = seed;
  img.meta.tag = "test";
  img.pixels.resize(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<uint16_t>(counter_bits(seed, i) % 16384);
  return img;
}

}  // namespace

TEST_CASE("save_raw writes little-endian u16 payload") {
  testutil::TempDir tmp;
  RawImage img;
  img.width = 2;
  img.height = 2;
  img.pixels = {0, 1, 2, 3};
  img.meta.tag = "tiny";
  std::string path = tmp.file("img.raw");
  save_raw(img, path);

  std::ifstream f(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  const std::vector<unsigned char> want = {0, 0, 1, 0, 2, 0, 3, 0};
  CHECK(bytes == want);
}

TEST_CASE("save/load round-trip is bit-exact") {
  testutil::TempDir tmp;
  RawImage img = make_test_image(64, 64, 42, 0.75);
  img.meta.noise.lambda = 3.5;
  img.meta.noise.sigma_e2 = 1.25;
  img.meta.noise.tau = 48.0;
  std::string path = tmp.file("rt.raw");
  save_raw(img, path);
  RawImage back = load_raw(path);
  CHECK(back.pixels == img.pixels);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.meta.gamma == img.meta.gamma);
  CHECK(back.meta.seed == img.meta.seed);
  CHECK(back.meta.tag == img.meta.tag);
  CHECK(back.meta.noise.lambda == img.meta.noise.lambda);
  CHECK(back.meta.noise.sigma_e2 == img.meta.noise.sigma_e2);
  CHECK(back.meta.noise.tau == img.meta.noise.tau);
}

TEST_CASE("round-trip property over random images") {
  testutil::TempDir tmp;
  for (int trial = 0; trial < 20; ++trial) {
    int w = 1 + static_cast<int>(counter_bits(900 + trial, 0) % 40);
    int h = 1 + static_cast<int>(counter_bits(900 + trial, 1) % 40);
    RawImage img = make_test_image(w, h, 1000 + trial);
    std::string path = tmp.file("p" + std::to_string(trial) + ".raw");
    save_raw(img, path);
    RawImage back = load_raw(path);
    CHECK(back.pixels == img.pixels);
  }
}

TEST_CASE("full-size payload length") {
  testutil::TempDir tmp;
  RawImage img;
  img.width = 4096;
  img.height = 3328;
  img.pixels.assign(static_cast<std::size_t>(4096) * 3328, 137);
  std::string path = tmp.file("full.raw");
  save_raw(img, path);
  CHECK(fs::file_size(path) == 27262976u);
}

TEST_CASE("load_raw distinguishes error causes") {
  testutil::TempDir tmp;
  RawImage img = make_test_image(10, 10, 7);
  std::string path = tmp.file("e.raw");
  save_raw(img, path);

  SUBCASE("truncated payload") {
    fs::resize_file(path, 100);  // 50 pixels
    try {
      load_raw(path);
      FAIL("expected truncated_payload");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::truncated_payload);
    }
  }
  SUBCASE("malformed header") {
    std::ofstream(path + ".json") << "{ not json";
    try {
      load_raw(path);
      FAIL("expected malformed_header");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::malformed_header);
    }
  }
  SUBCASE("invariant violation: gamma out of range") {
    RawImage bad = img;
    bad.meta.gamma = 1.5;
    // bypass save-side validation by writing the header manually
    std::ofstream h(path + ".json");
    h << R"({"width":10,"height":10,"dtype":"u16","meta":{"gamma":1.5,)"
      << R"("saturation_dn":16383,"seed":7,"tag":"test","noise":)"
      << R"({"lambda":0.1,"sigma_e2":3.0,"tau":50.0}}})";
    h.close();
    try {
      load_raw(path);
      FAIL("expected invariant_violation");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::invariant_violation);
    }
  }
}

TEST_CASE("segment_breast keeps the largest component") {
  RawImage img;
  img.width = 64;
  img.height = 64;
  img.pixels.assign(64 * 64, 2000);  // bright air
  // large blob (radius 12) and small blob (radius 3), dark
  auto put_disc = [&](int cr, int cc, int rad) {
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c)
        if ((r - cr) * (r - cr) + (c - cc) * (c - cc) <= rad * rad)
          img.pixels[static_cast<std::size_t>(r) * 64 + c] = 500;
  };
  put_disc(30, 30, 12);
  put_disc(8, 55, 3);
  BreastMask mask = segment_breast(img, 500);
  CHECK(mask.at(30, 30));
  CHECK(!mask.at(8, 55));
  // area close to the large disc alone
  CHECK(mask.count() > 400);
  CHECK(mask.count() < 500);
}

TEST_CASE("segment_breast rejects air-only frames") {
  RawImage img;
  img.width = 32;
  img.height = 32;
  img.pixels.assign(32 * 32, 1500);
  try {
    segment_breast(img, 300);
    FAIL("expected empty_mask");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_mask);
  }
}

TEST_CASE("normalize_for_net") {
  RawImage img;
  img.width = 3;
  img.height = 1;
  img.meta.noise.tau = 50.0;
  img.meta.saturation_dn = 16383;

  SUBCASE("full dose: plain division") {
    img.meta.gamma = 1.0;
    img.pixels = {16383, 50, 0};
    auto v = normalize_for_net(img);
    CHECK(v[0] == doctest::Approx(1.0));
    CHECK(v[1] == doctest::Approx(50.0 / 16383.0));
    CHECK(v[2] == doctest::Approx(0.0));
  }
  SUBCASE("low dose: rescale then divide") {
    img.meta.gamma = 0.5;
    img.pixels = {550, 50, 40};
    auto v = normalize_for_net(img);
    CHECK(v[0] == doctest::Approx(1050.0 / 16383.0).epsilon(1e-9));
    // tau is the fixed point of the rescaling
    CHECK(v[1] == doctest::Approx(50.0 / 16383.0));
    // clamped at zero below tau overshoot
    CHECK(v[2] == doctest::Approx(30.0 / 16383.0));
  }
}

TEST_CASE("extract_patches contracts") {
  RawImage ld = make_test_image(128, 128, 11, 0.5);
  RawImage fd = make_test_image(128, 128, 12, 1.0);
  BreastMask mask;
  mask.width = 128;
  mask.height = 128;
  mask.bits.assign(128 * 128, 0);
  for (int r = 0; r < 128; ++r)
    for (int c = 0; c < 128; ++c)
      if ((r - 64) * (r - 64) + (c - 64) * (c - 64) <= 40 * 40)
        mask.set(r, c, true);

  SUBCASE("count zero gives an empty list") {
    CHECK(extract_patches(ld, fd, mask, 0, 32, 5).empty());
  }
  SUBCASE("determinism: same seed twice, any thread count") {
    auto a = extract_patches(ld, fd, mask, 50, 32, 5);
    set_thread_count(4);
    auto b = extract_patches(ld, fd, mask, 50, 32, 5);
    set_thread_count(0);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].row == b[i].row);
      CHECK(a[i].col == b[i].col);
      CHECK(a[i].ld == b[i].ld);
      CHECK(a[i].fd == b[i].fd);
    }
  }
  SUBCASE("all centers verified inside mask by an independent scan") {
    const int size = 32;
    auto patches = extract_patches(ld, fd, mask, 1000, size, 99);
    REQUIRE(patches.size() == 1000);
    for (const auto& p : patches) {
      CHECK(p.row >= 0);
      CHECK(p.col >= 0);
      CHECK(p.row + size <= 128);
      CHECK(p.col + size <= 128);
      CHECK(mask.at(p.row + size / 2, p.col + size / 2));
    }
  }
  SUBCASE("no valid center is an error") {
    BreastMask edge;
    edge.width = 128;
    edge.height = 128;
    edge.bits.assign(128 * 128, 0);
    edge.set(0, 0, true);  // patch around it would leave the frame
    CHECK_THROWS_AS(extract_patches(ld, fd, edge, 5, 64, 1), Error);
  }
}

TEST_CASE("png export writes a decodable signature") {
  testutil::TempDir tmp;
  RawImage img = make_test_image(32, 16, 3);
  std::string path = tmp.file("i.png");
  export_png(img, path, 0, 16383);
  std::ifstream f(path, std::ios::binary);
  unsigned char sig[8];
  f.read(reinterpret_cast<char*>(sig), 8);
  CHECK(sig[0] == 0x89);
  CHECK(sig[1] == 'P');
  CHECK(sig[2] == 'N');
  CHECK(sig[3] == 'G');
}
