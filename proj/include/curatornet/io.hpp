#pragma once

// Little-endian binary containers and atomic file output.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace curatornet {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BinaryWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf_.append(raw, sizeof(T));
  }

  void put_bytes(std::string_view bytes) { buf_.append(bytes); }

  template <typename T>
  void put_array(std::span<const T> values) {
    buf_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  }

  /// u16 length prefix followed by the raw bytes.
  void put_short_string(std::string_view s);

  const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  BinaryReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  template <typename T>
  void get_array(std::span<T> out) {
    const auto raw = take(out.size_bytes());
    std::memcpy(out.data(), raw.data(), raw.size());
  }

  std::string_view take(std::size_t n);
  std::string get_short_string();
  void expect_magic(std::string_view magic);

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::string& source() const { return source_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string source_;
};

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never observe a
/// partially written artifact.
void atomic_write_file(const std::filesystem::path& path, std::string_view contents);

/// Named row-major float32 tensor.
struct TensorBlob {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;
};

/// Versioned tensor container: magic, u32 header length, text header (free
/// metadata lines plus one `tensor <name> <rows> <cols> <byte offset>` line
/// per tensor), then the little-endian float32 blobs.
struct TensorFile {
  std::vector<std::string> meta;  // header lines other than tensor lines
  std::vector<TensorBlob> tensors;

  const TensorBlob& tensor(const std::string& name) const;
  /// Value of the first meta line starting with `key `, if any.
  std::string meta_value(const std::string& key) const;
};

std::string encode_tensor_file(std::string_view magic, const TensorFile& file);
TensorFile decode_tensor_file(std::string_view magic, std::string_view bytes, const std::string& source);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace curatornet
