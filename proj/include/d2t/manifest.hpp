#pragma once

// Run manifests: a JSON sidecar written beside every CLI output with enough
// information to re-run the command reproducibly (full config snapshot,
// input file hashes, seed, tool version). Wall-clock is the only field that
// varies between identical runs.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "d2t/common.hpp"

namespace d2t {

inline std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  return sha256_hex(data);
}

struct RunManifest {
  std::string command;
  nlohmann::json config;  // full flag/config snapshot
  std::map<std::string, std::string> input_hashes;
  uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config;
    j["input_hashes"] = input_hashes;
    j["seed"] = seed;
    j["tool_version"] = kToolVersion;
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    j["wall_clock"] = buf;
    return j;
  }
};

// Writes `<output_path>.manifest.json` next to an output file.
inline void write_run_manifest(const std::string& output_path, const RunManifest& m) {
  const std::string path = output_path + ".manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest: " + path);
  out << m.to_json().dump(2) << "\n";
}

}  // namespace d2t
