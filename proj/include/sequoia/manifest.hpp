#pragma once

// Run manifests: every CLI command writes one next to its outputs, carrying
// the command, final parameter values, seed, input-file digests, and tool
// version. Manifests contain no timestamps or hidden entropy, so re-running
// one reproduces the outputs (and the manifest) byte for byte.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sequoia/errors.hpp"
#include "sequoia/version.hpp"

namespace sequoia {

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << bytes;
}

inline std::string file_digest(const std::string& path) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(read_file(path))));
  return std::string(buf);
}

struct RunManifest {
  std::string command;
  // Final flag values, keyed by flag name ("--acceptance": "p.json"); a
  // manifest doubles as a --config file for exact replay.
  std::map<std::string, std::string> parameters;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> input_digests;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["parameters"] = parameters;
    j["seed"] = seed.has_value() ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["inputs"] = input_digests;
    j["version"] = kVersion;
    return j;
  }

  void write(const std::string& path) const { write_file(path, to_json().dump(2) + "\n"); }
};

}  // namespace sequoia
