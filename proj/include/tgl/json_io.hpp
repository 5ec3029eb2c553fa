#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace tgl {

// Canonical serialization: object keys sorted (nlohmann's default ordering),
// floating-point values at 17 significant digits. Reports written this way
// are byte-stable across runs.
std::string canonical_json(const nlohmann::json& j);

std::string format_double17(double v);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

uint64_t fnv1a64(const std::string& bytes);
std::string hex64(uint64_t v);

}  // namespace tgl
