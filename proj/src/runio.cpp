#include "analearn/runio.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace analearn {

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

void fnv1a_update(std::uint64_t& h, const char* data, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= kFnvPrime;
  }
}

void fnv1a_update_file(std::uint64_t& h, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash input: " + path.string());
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    fnv1a_update(h, buf, static_cast<std::size_t>(in.gcount()));
  }
}

}  // namespace

std::uint64_t fnv1a_file(const std::string& path) {
  std::uint64_t h = kFnvOffset;
  fnv1a_update_file(h, path);
  return h;
}

std::uint64_t fnv1a_path(const std::string& path) {
  if (!fs::is_directory(path)) return fnv1a_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = kFnvOffset;
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, path).string();
    fnv1a_update(h, rel.data(), rel.size());
    fnv1a_update_file(h, f);
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ensure_output_dir(const std::string& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) {
      throw std::invalid_argument("output path exists and is not a directory: " + dir);
    }
    if (!force && !fs::is_empty(dir)) {
      throw std::invalid_argument("output directory not empty (use --force): " + dir);
    }
  }
  fs::create_directories(dir);
}

void write_manifest(const std::string& dir, const std::string& command,
                    const nlohmann::json& config,
                    const std::vector<std::string>& inputs) {
  nlohmann::json j;
  j["tool"] = "analearn";
  j["version"] = kToolVersion;
  j["command"] = command;
  j["config"] = config;
  nlohmann::json in = nlohmann::json::object();
  for (const auto& p : inputs) in[p] = hash_hex(fnv1a_path(p));
  j["inputs"] = in;
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << j.dump(2) << "\n";
}

}  // namespace analearn
