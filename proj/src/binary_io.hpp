#pragma once

// Little-endian byte streams shared by the PCB1, P2S1, SQF1 and MLP1 codecs.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "traverse/error.hpp"

namespace traverse::detail {

template <typename T>
T byteswap_if_needed(T value) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    return value;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

class ByteWriter {
 public:
  void magic(std::string_view tag) { buffer_.insert(buffer_.end(), tag.begin(), tag.end()); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto le = byteswap_if_needed(value);
    const auto* raw = reinterpret_cast<const char*>(&le);
    buffer_.insert(buffer_.end(), raw, raw + sizeof(T));
  }

  [[nodiscard]] const std::vector<char>& bytes() const { return buffer_; }

  /// Writes the buffer to disk, throwing IoError on failure.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<char> buffer_;
};

class ByteReader {
 public:
  /// Reads the whole file. Throws IoError if it cannot be opened.
  explicit ByteReader(const std::filesystem::path& path);

  /// Throws BadMagic naming offset 0 if the leading bytes differ from tag.
  void expect_magic(std::string_view tag);

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    ensure(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return byteswap_if_needed(value);
  }

  /// Throws TruncatedFile unless n more bytes are available.
  void ensure(std::size_t n) const;

  [[nodiscard]] std::size_t offset() const { return offset_; }
  [[nodiscard]] std::size_t remaining() const { return data_.size() - offset_; }
  [[nodiscard]] const std::string& name() const { return name_; }

 private:
  std::vector<char> data_;
  std::size_t offset_ = 0;
  std::string name_;
};

}  // namespace traverse::detail
