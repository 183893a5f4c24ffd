#include "ncl/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

#include <unistd.h>
#include <zlib.h>

#include "ncl/errors.hpp"

namespace ncl {

namespace {

constexpr std::size_t kPrefix = 10;  // magic + version + header length

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>((bits >> s) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return std::bit_cast<double>(v);
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t len) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (len > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(len, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    len -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_container(std::string_view magic, nlohmann::json header,
                                           std::span<const double> payload) {
  if (magic.size() != 4) throw ConfigError("container magic must be 4 bytes");
  header["payload_doubles"] = payload.size();
  const std::string text = header.dump();
  std::vector<std::uint8_t> out;
  out.reserve(kPrefix + text.size() + 8 * payload.size() + 4);
  out.insert(out.end(), magic.begin(), magic.end());
  put_u16(out, kContainerVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (double v : payload) put_f64(out, v);
  put_u32(out, crc_of(out.data() + 6, out.size() - 6));
  return out;
}

Container decode_container(std::span<const std::uint8_t> bytes, std::string_view magic) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic.data(), 4) != 0) {
    throw DataError("bad magic: expected '" + std::string(magic) + "'");
  }
  if (bytes.size() < kPrefix) throw DataError("truncated file: incomplete prefix");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kContainerVersion) throw DataError("unsupported format version " + std::to_string(version));
  const std::size_t header_len = get_u32(bytes.data() + 6);
  if (bytes.size() < kPrefix + header_len) throw DataError("truncated file: incomplete header");

  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + static_cast<std::ptrdiff_t>(kPrefix + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed header: ") + e.what());
  }
  if (!c.header.contains("payload_doubles") || !c.header["payload_doubles"].is_number_unsigned()) {
    throw DataError("malformed header: missing payload_doubles");
  }
  const std::size_t count = c.header["payload_doubles"].get<std::size_t>();
  if (count > bytes.size() / 8) throw DataError("truncated file: payload shorter than declared");
  const std::size_t body_end = kPrefix + header_len + 8 * count;
  if (bytes.size() < body_end + 4) throw DataError("truncated file: expected " + std::to_string(body_end + 4) +
                                                   " bytes, found " + std::to_string(bytes.size()));
  if (bytes.size() > body_end + 4) throw DataError("trailing bytes after checksum");
  const std::uint32_t stored = get_u32(bytes.data() + body_end);
  if (stored != crc_of(bytes.data() + 6, body_end - 6)) throw DataError("checksum mismatch");

  c.payload.resize(count);
  const std::uint8_t* p = bytes.data() + kPrefix + header_len;
  for (std::size_t i = 0; i < count; ++i) c.payload[i] = get_f64(p + 8 * i);
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move temp file into " + path.string());
  }
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_container(const std::filesystem::path& path, std::string_view magic, nlohmann::json header,
                     std::span<const double> payload) {
  write_file_atomic(path, encode_container(magic, std::move(header), payload));
}

Container read_container(const std::filesystem::path& path, std::string_view magic) {
  const auto bytes = read_file(path);
  return decode_container(bytes, magic);
}

}  // namespace ncl
