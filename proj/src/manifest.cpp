#include "recomb/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "recomb/random.hpp"

namespace recomb {

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(buf.str())));
  return hex;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  return output.string() + ".manifest.json";
}

void RunManifest::add_input(const std::filesystem::path& path) { input_digests[path.string()] = file_digest(path); }

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["flags"] = flags;
  j["seed"] = seed;
  j["input_digests"] = input_digests;
  j["outputs"] = outputs;
  // Timing is the only nondeterministic field; it can be zeroed for reruns.
  j["wall_seconds"] = include_timing ? wall_seconds : 0.0;
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json();
}

}  // namespace recomb
