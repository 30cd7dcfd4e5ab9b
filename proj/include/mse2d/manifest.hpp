#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace mse2d {

inline constexpr const char* kToolVersion = "0.1.0";

// SHA-256 of a byte buffer, lowercase hex.
std::string sha256_hex(const void* data, size_t bytes);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

// Provenance record written alongside every produced artifact. Rerunning the
// recorded command with the same inputs reproduces the artifact byte for byte.
struct RunManifest {
  std::string command_line;
  nlohmann::json resolved_config;
  uint64_t seed = 0;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::string tool_version = kToolVersion;

  std::string to_json_string() const;
};

RunManifest make_manifest(const std::vector<std::string>& argv, const nlohmann::json& config,
                          uint64_t seed, const std::vector<std::string>& input_paths);

// Written next to the artifact as <artifact>.manifest.json.
void write_manifest(const RunManifest& manifest, const std::string& artifact_path);

}  // namespace mse2d
