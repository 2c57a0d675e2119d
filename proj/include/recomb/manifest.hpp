#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace recomb {

/// Record of one CLI invocation, written as JSON next to its outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> flags;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_digests;  // path -> fnv1a64 hex
  std::vector<std::string> outputs;
  double wall_seconds = 0.0;
  bool include_timing = true;

  void add_input(const std::filesystem::path& path);
  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// FNV-1a 64 of the file contents as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

/// `<output>.manifest.json`
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

}  // namespace recomb
