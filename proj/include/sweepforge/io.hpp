#pragma once

#include <fcntl.h>
#include <openssl/evp.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "sweepforge/error.hpp"

namespace sweepforge {

inline std::string hex_encode(const unsigned char* data, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0xF];
  }
  return out;
}

/// Lowercase hex SHA-256 of `bytes`.
inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  return hex_encode(md, len);
}

/// IEEE CRC-32 (the zlib/PNG polynomial).
inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return ss.str();
}

/// Test seam: abort a write after this many bytes, as if the process died.
struct WriteFault {
  std::size_t fail_after_bytes = 0;
};

/// Writes `bytes` to `<path>.tmp`, fsyncs, then renames over `path`, so a
/// reader sees either the old file or the complete new one. `before_rename`
/// runs once the temporary file is durable.
inline void atomic_write(const std::filesystem::path& path, std::string_view bytes,
                         std::optional<WriteFault> fault = std::nullopt,
                         const std::function<void()>& before_rename = {}) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  auto fail = [&](const std::string& what) {
    throw IoError(what + " '" + tmp.string() + "': " + std::strerror(errno));
  };
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail("cannot create");
  std::size_t limit = fault ? std::min(fault->fail_after_bytes, bytes.size()) : bytes.size();
  std::size_t done = 0;
  while (done < limit) {
    ssize_t n = ::write(fd, bytes.data() + done, limit - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      fail("write failed for");
    }
    done += static_cast<std::size_t>(n);
  }
  if (fault) {
    ::close(fd);
    throw IoError("injected write fault after " + std::to_string(limit) + " bytes of '" + tmp.string() + "'");
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    fail("fsync failed for");
  }
  if (::close(fd) != 0) fail("close failed for");
  if (before_rename) before_rename();
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace sweepforge
