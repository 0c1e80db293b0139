#include "binary_io.hpp"

#include <fstream>
#include <iterator>

namespace traverse::detail {

void ByteWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + path.string());
}

ByteReader::ByteReader(const std::filesystem::path& path) : name_(path.string()) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + name_);
  data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void ByteReader::expect_magic(std::string_view tag) {
  if (data_.size() < tag.size() || std::string_view(data_.data(), tag.size()) != tag) {
    throw Error(ErrorCode::BadMagic,
                name_ + ": expected magic '" + std::string(tag) + "' at byte offset 0");
  }
  offset_ = tag.size();
}

void ByteReader::ensure(std::size_t n) const {
  if (remaining() < n) {
    throw Error(ErrorCode::TruncatedFile, name_ + ": needed " + std::to_string(n) +
                                              " bytes at byte offset " + std::to_string(offset_) +
                                              ", file has " + std::to_string(data_.size()));
  }
}

}  // namespace traverse::detail
