#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace probcontour {

using json = nlohmann::json;

/// Shortest-width decimal with 17 significant digits; round-trips any finite
/// double bit-exactly. Throws NumericError on non-finite values.
std::string format_double_17(double v);

/// Serializes with format_double_17 for every floating-point scalar. Object
/// keys keep nlohmann's sorted order, so output is deterministic.
std::string dump_json(const json& j, int indent = 2);

json parse_json_file(const std::filesystem::path& path);
json parse_json_text(std::string_view text, const std::string& origin);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t fnv1a64(std::string_view s);
std::string to_hex(std::uint64_t h);
/// Content hash of a file on disk, as 16 hex digits.
std::string hash_file_hex(const std::filesystem::path& path);

}  // namespace probcontour
