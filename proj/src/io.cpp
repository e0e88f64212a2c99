#include "curatornet/io.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <sstream>

namespace curatornet {

void BinaryWriter::put_short_string(std::string_view s) {
  if (s.size() > 0xFFFF) throw FormatError("string too long for u16 length prefix");
  put(static_cast<std::uint16_t>(s.size()));
  buf_.append(s);
}

std::string_view BinaryReader::take(std::size_t n) {
  if (n > data_.size() - pos_) {
    std::ostringstream msg;
    msg << source_ << ": truncated at byte " << pos_ << " (needed " << n << ", have " << (data_.size() - pos_)
        << ")";
    throw FormatError(msg.str());
  }
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string BinaryReader::get_short_string() {
  const auto len = get<std::uint16_t>();
  return std::string(take(len));
}

void BinaryReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() || data_.substr(pos_, magic.size()) != magic)
    throw FormatError(source_ + ": bad magic or unsupported version (expected \"" + std::string(magic) + "\")");
  pos_ += magic.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

const TensorBlob& TensorFile::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t;
  throw FormatError("missing tensor " + name);
}

std::string TensorFile::meta_value(const std::string& key) const {
  const std::string prefix = key + " ";
  for (const auto& line : meta)
    if (line.starts_with(prefix)) return line.substr(prefix.size());
  return {};
}

std::string encode_tensor_file(std::string_view magic, const TensorFile& file) {
  std::ostringstream header;
  for (const auto& line : file.meta) {
    if (line.find('\n') != std::string::npos || line.starts_with("tensor "))
      throw FormatError("invalid header line: " + line);
    header << line << '\n';
  }
  std::size_t offset = 0;
  for (const auto& t : file.tensors) {
    if (t.data.size() != t.rows * t.cols) throw FormatError("tensor " + t.name + ": data does not match shape");
    header << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << ' ' << offset << '\n';
    offset += t.data.size() * sizeof(float);
  }
  const std::string text = header.str();
  BinaryWriter w;
  w.put_bytes(magic);
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text);
  for (const auto& t : file.tensors) w.put_array(std::span<const float>(t.data));
  return w.take();
}

TensorFile decode_tensor_file(std::string_view magic, std::string_view bytes, const std::string& source) {
  BinaryReader r(bytes, source);
  r.expect_magic(magic);
  const auto header_len = r.get<std::uint32_t>();
  std::istringstream header{std::string(r.take(header_len))};
  TensorFile out;
  std::size_t expected_offset = 0;
  for (std::string line; std::getline(header, line);) {
    if (!line.starts_with("tensor ")) {
      out.meta.push_back(line);
      continue;
    }
    std::istringstream fields(line.substr(7));
    TensorBlob t;
    std::size_t offset = 0;
    if (!(fields >> t.name >> t.rows >> t.cols >> offset)) throw FormatError(source + ": malformed tensor line: " + line);
    if (offset != expected_offset) throw FormatError(source + ": tensor " + t.name + " has unexpected offset");
    if (t.cols != 0 && t.rows > bytes.size() / t.cols / sizeof(float))
      throw FormatError(source + ": truncated (tensor " + t.name + " larger than file)");
    t.data.resize(t.rows * t.cols);
    expected_offset += t.data.size() * sizeof(float);
    out.tensors.push_back(std::move(t));
  }
  if (r.remaining() != expected_offset) {
    std::ostringstream msg;
    msg << source << ": " << (r.remaining() < expected_offset ? "truncated" : "trailing data") << " (blob has "
        << r.remaining() << " bytes, header declares " << expected_offset << ")";
    throw FormatError(msg.str());
  }
  for (auto& t : out.tensors) r.get_array(std::span<float>(t.data));
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw std::runtime_error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace curatornet
