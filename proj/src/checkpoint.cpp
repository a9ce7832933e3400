#include "tact/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tact {

std::string content_hash(const std::string& canonical) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ostringstream blob(std::ios::binary);
  nlohmann::json manifest;
  manifest["config_hash"] = ckpt.config_hash;
  manifest["seed"] = ckpt.seed;
  nlohmann::json offsets;
  for (const auto& [name, t] : ckpt.tensors) {
    offsets[name] = static_cast<uint64_t>(blob.tellp());
    write_tensor(blob, t);
  }
  manifest["tensors"] = offsets;
  const std::string mstr = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  check(f.is_open(), "cannot open " + path + " for writing");
  const uint32_t len = static_cast<uint32_t>(mstr.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  const std::string b = blob.str();
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.is_open(), "cannot open " + path);
  uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  check(static_cast<bool>(f), "truncated checkpoint manifest length");
  std::string mstr(len, '\0');
  f.read(mstr.data(), len);
  check(static_cast<bool>(f), "truncated checkpoint manifest");
  nlohmann::json manifest = nlohmann::json::parse(mstr);
  Checkpoint ckpt;
  ckpt.config_hash = manifest.at("config_hash").get<std::string>();
  ckpt.seed = manifest.at("seed").get<uint64_t>();
  const std::streampos blob_start = f.tellg();
  for (const auto& [name, off] : manifest.at("tensors").items()) {
    f.seekg(blob_start + static_cast<std::streamoff>(off.get<uint64_t>()));
    ckpt.tensors[name] = read_tensor(f);
  }
  return ckpt;
}

}  // namespace tact
