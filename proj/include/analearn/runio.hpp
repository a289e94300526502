#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace analearn {

inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a 64-bit content hash, used to fingerprint run inputs in manifests.
std::uint64_t fnv1a_file(const std::string& path);
/// Hash of a directory: regular files sorted by name, names mixed in.
std::uint64_t fnv1a_path(const std::string& path);
std::string hash_hex(std::uint64_t h);

/// Creates dir (parents included). A nonempty existing dir is rejected
/// unless force is set.
void ensure_output_dir(const std::string& dir, bool force);

/// manifest.json: tool version, command, resolved config, input hashes.
/// Deliberately timestamp-free so reruns are byte-identical.
void write_manifest(const std::string& dir, const std::string& command,
                    const nlohmann::json& config,
                    const std::vector<std::string>& inputs);

}  // namespace analearn
