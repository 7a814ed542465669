#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

namespace celldet::io {

// Streaming SHA-256, used for the input digests in run manifests.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, size_t n);
  std::array<std::uint8_t, 32> digest();  // finalizes; call once

  static std::string hex(const std::array<std::uint8_t, 32>& d);

 private:
  void compress(const std::uint8_t* block);

  std::uint64_t total_ = 0;
  std::array<std::uint32_t, 8> state_;
  std::array<std::uint8_t, 64> buf_;
  size_t buflen_ = 0;
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_hex_file(const std::string& path);

}  // namespace celldet::io
