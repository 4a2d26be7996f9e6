#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "ldmr/image.hpp"

namespace ldmr {

namespace {

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  uint32_t crc = crc32(0, out.data() + crc_start, out.size() - crc_start);
  put_u32(out, crc);
}

void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<uint8_t>& gray) {
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (width + 1));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter: none
    const uint8_t* row = gray.data() + static_cast<std::size_t>(r) * width;
    raw.insert(raw.end(), row, row + width);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> zdata(zlen);
  int rc = compress2(zdata.data(), &zlen, raw.data(),
                     static_cast<uLong>(raw.size()), 6);
  require(rc == Z_OK, ErrorCode::io_failure, "zlib compression failed");
  zdata.resize(zlen);

  std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(width));
  put_u32(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", zdata);
  put_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::io_failure, "cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  require(f.good(), ErrorCode::io_failure, "write failed: " + path);
}

std::vector<uint8_t> window_to_gray(const double* v, std::size_t n, double lo,
                                    double hi) {
  std::vector<uint8_t> gray(n);
  double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = (static_cast<double>(v[i]) - lo) / span;
    gray[i] = static_cast<uint8_t>(std::clamp(t, 0.0, 1.0) * 255.0 + 0.5);
  }
  return gray;
}

}  // namespace

void export_png(const ImageF& image, const std::string& path, double lo,
                double hi) {
  auto gray = window_to_gray(image.values.data(), image.size(), lo, hi);
  write_png_gray8(path, image.width, image.height, gray);
}

void export_png(const RawImage& image, const std::string& path, double lo,
                double hi) {
  export_png(to_float(image), path, lo, hi);
}

}  // namespace ldmr
