#pragma once

// Binary container shared by dataset (magic "NCLD") and weights ("NCLW") files.
//
//   offset  size  field
//   0       4     magic, ASCII
//   4       2     format version, u16 little-endian
//   6       4     header length H in bytes, u32 little-endian
//   10      H     header, UTF-8 JSON; carries "payload_doubles"
//   10+H    8·P   payload, IEEE-754 binary64 little-endian
//   end-4   4     CRC-32 (zlib polynomial) of bytes [6, 10+H+8·P), u32 LE

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ncl {

inline constexpr std::uint16_t kContainerVersion = 1;

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

std::vector<std::uint8_t> encode_container(std::string_view magic, nlohmann::json header,
                                           std::span<const double> payload);
/// Throws DataError on bad magic, unsupported version, truncation or checksum mismatch.
Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic);

/// Writes to a sibling temp file and renames it into place; on failure no file
/// is left at `path`. Throws IoError.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

void write_container(const std::filesystem::path& path, std::string_view magic, nlohmann::json header,
                     std::span<const double> payload);
Container read_container(const std::filesystem::path& path, std::string_view magic);

}  // namespace ncl
