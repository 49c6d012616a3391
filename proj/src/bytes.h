#pragma once

// Little-endian byte buffers shared by the graph cache and checkpoints.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>
#include <vector>

#include "ctxgnn/error.h"

namespace ctxgnn::internal {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

class ByteWriter {
 public:
  template <typename T>
  void Put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  void PutString(const std::string& s) {
    Put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  template <typename T>
  void PutVector(const std::vector<T>& v) {
    Put<std::uint64_t>(v.size());
    PutRaw(v.data(), v.size() * sizeof(T));
  }

  void PutRaw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T Get() {
    T value;
    GetRaw(&value, sizeof(T));
    return value;
  }

  std::string GetString() {
    const auto n = Get<std::uint32_t>();
    Need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  template <typename T>
  std::vector<T> GetVector() {
    const auto n = Get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / (sizeof(T) == 0 ? 1 : sizeof(T))) {
      throw Error(ErrorKind::kTruncatedFile, "vector extends past end of data");
    }
    std::vector<T> v(n);
    GetRaw(v.data(), n * sizeof(T));
    return v;
  }

  void GetRaw(void* out, std::size_t n) {
    Need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool AtEnd() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(std::size_t n) const {
    if (n > bytes_.size() - pos_) {
      throw Error(ErrorKind::kTruncatedFile, "unexpected end of data");
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace ctxgnn::internal
