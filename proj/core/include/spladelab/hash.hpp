#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace splade {

// FNV-1a, used for artifact manifests and config fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

}  // namespace splade
