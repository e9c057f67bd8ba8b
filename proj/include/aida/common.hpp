#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace aida {

using Bytes = std::vector<std::uint8_t>;
using Timestamp = std::chrono::sys_seconds;
using Clock = std::function<Timestamp()>;

Timestamp now_utc();
Clock system_clock();

// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_ts(Timestamp t);
// Strict inverse of format_ts. Throws Error(BadArgs) on anything else.
Timestamp parse_ts(std::string_view s);
bool is_timestamp(std::string_view s);

constexpr std::chrono::seconds days(int n) { return std::chrono::hours(24) * n; }

std::string to_hex(const std::uint8_t* data, std::size_t size);
std::string to_hex(const Bytes& bytes);
// Lowercase only, the form to_hex writes. Throws Error(BadArgs) on odd length
// or any other character.
Bytes from_hex(std::string_view hex);

std::string read_file(const std::filesystem::path& path);
// Write to a sibling temp file, fsync, rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace aida
