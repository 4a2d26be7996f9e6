#include "ldmr/image.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <queue>
#include <random>

#include <json.hpp>

#include "ldmr/rng.hpp"

namespace ldmr {

using nlohmann::json;

void NoiseParams::validate() const {
  require(lambda > 0.0, ErrorCode::invariant_violation, "lambda must be > 0");
  require(sigma_e2 >= 0.0, ErrorCode::invariant_violation,
          "sigma_e2 must be >= 0");
  require(tau >= 0.0, ErrorCode::invariant_violation, "tau must be >= 0");
}

void AcqMeta::validate() const {
  noise.validate();
  require(gamma > 0.0 && gamma <= 1.0, ErrorCode::invariant_violation,
          "gamma must be in (0,1]");
  require(saturation_dn > 0.0, ErrorCode::invariant_violation,
          "saturation_dn must be > 0");
}

void RawImage::validate() const {
  meta.validate();
  require(width > 0 && height > 0, ErrorCode::invariant_violation,
          "empty image");
  require(pixels.size() == static_cast<std::size_t>(width) * height,
          ErrorCode::invariant_violation, "pixel count != width*height");
  auto sat = static_cast<uint16_t>(meta.saturation_dn);
  for (uint16_t p : pixels)
    require(p <= sat, ErrorCode::invariant_violation,
            "pixel above saturation");
}

ImageF to_float(const RawImage& img) {
  ImageF out;
  out.width = img.width;
  out.height = img.height;
  out.meta = img.meta;
  out.values.resize(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    out.values[i] = static_cast<double>(img.pixels[i]);
  return out;
}

RawImage to_raw(const ImageF& img) {
  RawImage out;
  out.width = img.width;
  out.height = img.height;
  out.meta = img.meta;
  out.pixels.resize(img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i)
    out.pixels[i] = quantize_u16(img.values[i], img.meta.saturation_dn);
  return out;
}

std::size_t BreastMask::count() const {
  std::size_t n = 0;
  for (uint8_t b : bits) n += b != 0;
  return n;
}

// --------------------------------------------------------------------------
// container I/O

namespace {

json meta_to_json(const AcqMeta& m) {
  return json{{"gamma", m.gamma},
              {"saturation_dn", m.saturation_dn},
              {"seed", m.seed},
              {"tag", m.tag},
              {"noise",
               {{"lambda", m.noise.lambda},
                {"sigma_e2", m.noise.sigma_e2},
                {"tau", m.noise.tau}}}};
}

AcqMeta meta_from_json(const json& j) {
  AcqMeta m;
  m.gamma = j.at("gamma").get<double>();
  m.saturation_dn = j.at("saturation_dn").get<double>();
  m.seed = j.at("seed").get<uint64_t>();
  m.tag = j.at("tag").get<std::string>();
  const auto& n = j.at("noise");
  m.noise.lambda = n.at("lambda").get<double>();
  m.noise.sigma_e2 = n.at("sigma_e2").get<double>();
  m.noise.tau = n.at("tau").get<double>();
  return m;
}

void write_header(const std::string& path, int width, int height,
                  const char* dtype, const AcqMeta& meta) {
  json j{{"width", width}, {"height", height}, {"dtype", dtype}};
  j["meta"] = meta_to_json(meta);
  std::ofstream f(path + ".json");
  require(f.good(), ErrorCode::io_failure, "cannot write " + path + ".json");
  f << j.dump(2) << "\n";
  require(f.good(), ErrorCode::io_failure, "write failed: " + path + ".json");
}

json read_header(const std::string& path, int& width, int& height,
                 std::string& dtype) {
  std::ifstream f(path + ".json");
  require(f.good(), ErrorCode::io_failure, "cannot open " + path + ".json");
  json j;
  try {
    f >> j;
    width = j.at("width").get<int>();
    height = j.at("height").get<int>();
    dtype = j.at("dtype").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::malformed_header,
         "malformed header " + path + ".json: " + e.what());
  }
  return j;
}

template <typename T>
void write_payload(const std::string& path, const std::vector<T>& data) {
  static_assert(sizeof(T) == 2 || sizeof(T) == 4);
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::io_failure, "cannot write " + path);
  // little-endian layout; byte-swap would go here on a BE host
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(T)));
  require(f.good(), ErrorCode::io_failure, "write failed: " + path);
}

template <typename T>
std::vector<T> read_payload(const std::string& path, std::size_t n_expected) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  require(f.good(), ErrorCode::io_failure, "cannot open " + path);
  auto bytes = static_cast<std::size_t>(f.tellg());
  require(bytes == n_expected * sizeof(T), ErrorCode::truncated_payload,
          "payload size mismatch for " + path + ": got " +
              std::to_string(bytes) + " bytes, expected " +
              std::to_string(n_expected * sizeof(T)));
  f.seekg(0);
  std::vector<T> data(n_expected);
  f.read(reinterpret_cast<char*>(data.data()),
         static_cast<std::streamsize>(bytes));
  require(f.good(), ErrorCode::io_failure, "read failed: " + path);
  return data;
}

AcqMeta parse_meta(const json& j, const std::string& path) {
  try {
    return meta_from_json(j.at("meta"));
  } catch (const json::exception& e) {
    fail(ErrorCode::malformed_header,
         "malformed header " + path + ".json: " + e.what());
  }
}

}  // namespace

void save_raw(const RawImage& image, const std::string& path) {
  image.validate();
  write_header(path, image.width, image.height, "u16", image.meta);
  write_payload(path, image.pixels);
}

RawImage load_raw(const std::string& path) {
  int w, h;
  std::string dtype;
  json j = read_header(path, w, h, dtype);
  require(dtype == "u16", ErrorCode::malformed_header,
          "expected u16 payload in " + path);
  RawImage img;
  img.width = w;
  img.height = h;
  img.meta = parse_meta(j, path);
  img.pixels =
      read_payload<uint16_t>(path, static_cast<std::size_t>(w) * h);
  img.validate();
  return img;
}

void save_float(const ImageF& image, const std::string& path) {
  write_header(path, image.width, image.height, "f32", image.meta);
  std::vector<float> payload(image.values.begin(), image.values.end());
  write_payload(path, payload);
}

ImageF load_float(const std::string& path) {
  int w, h;
  std::string dtype;
  json j = read_header(path, w, h, dtype);
  require(dtype == "f32", ErrorCode::malformed_header,
          "expected f32 payload in " + path);
  ImageF img;
  img.width = w;
  img.height = h;
  img.meta = parse_meta(j, path);
  auto payload = read_payload<float>(path, static_cast<std::size_t>(w) * h);
  img.values.assign(payload.begin(), payload.end());
  return img;
}

void save_mask(const BreastMask& mask, const std::string& path) {
  RawImage img;
  img.width = mask.width;
  img.height = mask.height;
  img.meta.tag = "mask";
  img.meta.saturation_dn = 1;
  img.pixels.assign(mask.bits.begin(), mask.bits.end());
  write_header(path, img.width, img.height, "u16", img.meta);
  write_payload(path, img.pixels);
}

BreastMask load_mask(const std::string& path) {
  int w, h;
  std::string dtype;
  json j = read_header(path, w, h, dtype);
  require(dtype == "u16", ErrorCode::malformed_header,
          "expected u16 mask payload in " + path);
  auto pix = read_payload<uint16_t>(path, static_cast<std::size_t>(w) * h);
  BreastMask m;
  m.width = w;
  m.height = h;
  m.bits.resize(pix.size());
  for (std::size_t i = 0; i < pix.size(); ++i) m.bits[i] = pix[i] ? 1 : 0;
  return m;
}

// --------------------------------------------------------------------------
// segmentation

namespace {

double border_median(const RawImage& img) {
  int strip = std::max(2, std::min(img.width, img.height) / 64);
  std::vector<uint16_t> border;
  border.reserve(static_cast<std::size_t>(2 * strip) *
                 (img.width + img.height));
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      bool edge = r < strip || r >= img.height - strip || c < strip ||
                  c >= img.width - strip;
      if (edge) border.push_back(img.at(r, c));
    }
  std::nth_element(border.begin(), border.begin() + border.size() / 2,
                   border.end());
  return border[border.size() / 2];
}

}  // namespace

BreastMask segment_breast(const RawImage& image, double threshold_dn,
                          bool air_bright) {
  require(threshold_dn < image.meta.saturation_dn, ErrorCode::precondition,
          "threshold must be below saturation");
  double air = border_median(image);
  BreastMask cand;
  cand.width = image.width;
  cand.height = image.height;
  cand.bits.assign(image.size(), 0);
  for (std::size_t i = 0; i < image.size(); ++i) {
    double p = image.pixels[i];
    bool inside = air_bright ? (p < air - threshold_dn)
                             : (p > air + threshold_dn);
    cand.bits[i] = inside ? 1 : 0;
  }

  // largest 4-connected component
  std::vector<int32_t> label(image.size(), -1);
  int32_t best_label = -1;
  std::size_t best_size = 0;
  int32_t next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < image.size(); ++start) {
    if (!cand.bits[start] || label[start] >= 0) continue;
    std::size_t comp = 0;
    stack.clear();
    stack.push_back(start);
    label[start] = next;
    while (!stack.empty()) {
      std::size_t i = stack.back();
      stack.pop_back();
      ++comp;
      int r = static_cast<int>(i) / image.width;
      int c = static_cast<int>(i) % image.width;
      const int dr[4] = {-1, 1, 0, 0};
      const int dc[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        int rr = r + dr[k], cc = c + dc[k];
        if (rr < 0 || rr >= image.height || cc < 0 || cc >= image.width)
          continue;
        std::size_t jj = static_cast<std::size_t>(rr) * image.width + cc;
        if (cand.bits[jj] && label[jj] < 0) {
          label[jj] = next;
          stack.push_back(jj);
        }
      }
    }
    if (comp > best_size) {
      best_size = comp;
      best_label = next;
    }
    ++next;
  }
  require(best_size > 0, ErrorCode::empty_mask, "no breast region found");

  BreastMask mask;
  mask.width = image.width;
  mask.height = image.height;
  mask.bits.assign(image.size(), 0);
  for (std::size_t i = 0; i < image.size(); ++i)
    mask.bits[i] = (label[i] == best_label) ? 1 : 0;
  return mask;
}

// --------------------------------------------------------------------------
// normalization and patch sampling

std::vector<float> normalize_for_net(const RawImage& image) {
  const double tau = image.meta.noise.tau;
  const double gamma = image.meta.gamma;
  const double sat = image.meta.saturation_dn;
  std::vector<float> out(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    double v = ((static_cast<double>(image.pixels[i]) - tau) / gamma + tau) /
               sat;
    out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return out;
}

std::vector<PatchPair> extract_patches(const RawImage& ld, const RawImage& fd,
                                       const BreastMask& mask, int count,
                                       int size, uint64_t seed) {
  require(ld.width == fd.width && ld.height == fd.height,
          ErrorCode::precondition, "LD/FD dimensions differ");
  require(mask.width == ld.width && mask.height == ld.height,
          ErrorCode::precondition, "mask dimensions differ");
  require(size > 0 && size <= std::min(ld.width, ld.height),
          ErrorCode::precondition, "patch size exceeds image");
  require(count >= 0, ErrorCode::precondition, "negative patch count");
  require(mask.count() > 0, ErrorCode::precondition, "mask is empty");

  // Valid top-left origins: patch inside the frame, center inside the mask.
  const int half = size / 2;
  std::vector<int32_t> origins;
  for (int r0 = 0; r0 + size <= ld.height; ++r0)
    for (int c0 = 0; c0 + size <= ld.width; ++c0)
      if (mask.at(r0 + half, c0 + half))
        origins.push_back(r0 * ld.width + c0);
  require(!origins.empty(), ErrorCode::precondition,
          "no valid patch center inside mask");

  std::vector<float> ld_norm = normalize_for_net(ld);
  std::vector<float> fd_norm = normalize_for_net(fd);

  std::mt19937_64 rng(mix64(seed));
  std::uniform_int_distribution<std::size_t> pick(0, origins.size() - 1);

  std::vector<PatchPair> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    int32_t o = origins[pick(rng)];
    PatchPair p;
    p.row = o / ld.width;
    p.col = o % ld.width;
    p.ld.resize(static_cast<std::size_t>(size) * size);
    p.fd.resize(p.ld.size());
    for (int r = 0; r < size; ++r) {
      const float* lsrc = ld_norm.data() +
                          static_cast<std::size_t>(p.row + r) * ld.width +
                          p.col;
      const float* fsrc = fd_norm.data() +
                          static_cast<std::size_t>(p.row + r) * ld.width +
                          p.col;
      std::copy(lsrc, lsrc + size, p.ld.data() + static_cast<std::size_t>(r) * size);
      std::copy(fsrc, fsrc + size, p.fd.data() + static_cast<std::size_t>(r) * size);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ldmr
