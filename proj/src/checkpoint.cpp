#include "ldmr/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ldmr/common.hpp"

namespace ldmr {

using nlohmann::json;

namespace {
constexpr char kMagic[] = "LDMRCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;
}  // namespace

const CkptTensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  fail(ErrorCode::malformed_header, "checkpoint tensor missing: " + name);
}

bool Checkpoint::has(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return true;
  return false;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json hdr;
  hdr["dtype"] = "f32";
  hdr["extra"] = ckpt.extra;
  json tl = json::array();
  uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    tl.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.data.size();
  }
  hdr["tensors"] = tl;
  std::string hs = hdr.dump();

  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::io_failure, "cannot write " + path);
  f.write(kMagic, static_cast<std::streamsize>(kMagicLen));
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& t : ckpt.tensors)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  require(f.good(), ErrorCode::io_failure, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), ErrorCode::io_failure, "cannot open " + path);
  char magic[kMagicLen];
  f.read(magic, static_cast<std::streamsize>(kMagicLen));
  require(f.good() && std::memcmp(magic, kMagic, kMagicLen) == 0,
          ErrorCode::malformed_header, "not a checkpoint file: " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  require(f.good() && hlen < (1u << 26), ErrorCode::malformed_header,
          "bad checkpoint header length");
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  require(f.good(), ErrorCode::malformed_header, "truncated header");

  Checkpoint ckpt;
  json hdr;
  try {
    hdr = json::parse(hs);
    ckpt.extra = hdr.value("extra", json::object());
    for (const auto& tj : hdr.at("tensors")) {
      CkptTensor t;
      t.name = tj.at("name").get<std::string>();
      t.shape = tj.at("shape").get<std::vector<int>>();
      std::size_t n = 1;
      for (int d : t.shape) n *= static_cast<std::size_t>(d);
      t.data.resize(n);
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::malformed_header,
         std::string("malformed checkpoint header: ") + e.what());
  }
  for (auto& t : ckpt.tensors) {
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    require(f.good(), ErrorCode::truncated_payload,
            "truncated checkpoint payload at tensor " + t.name);
  }
  return ckpt;
}

}  // namespace ldmr
