#pragma once

// Run manifests: one JSON document written next to every CLI output.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <string>

#include <openssl/evp.h>

#include <json.hpp>

#include "migproj/csv.hpp"
#include "migproj/error.hpp"

namespace migproj {

inline constexpr const char* kVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

inline std::string file_sha256(const std::filesystem::path& p) { return sha256_hex(csv::read_file(p)); }

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> flags;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::map<std::string, std::string> output_digests;
  std::string version = kVersion;
  std::string started_at;
  std::string finished_at;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["flags"] = flags;
    if (has_seed) j["seed"] = seed;
    j["inputs"] = input_digests;
    j["outputs"] = output_digests;
    j["version"] = version;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    return j;
  }

  void write(const std::filesystem::path& path) const { csv::write_file_atomic(path, to_json().dump(2) + "\n"); }
};

}  // namespace migproj
