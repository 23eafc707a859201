#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "filmgrade/error.hpp"

namespace filmgrade {

struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t numel() const noexcept {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string dims_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

// Named tensor archive. Names are unique; iteration order is lexicographic,
// which fixes the on-disk order.
class WeightContainer {
 public:
  void set(const std::string& name, std::vector<std::uint32_t> dims, std::vector<float> values) {
    Tensor t{std::move(dims), std::move(values)};
    if (name.empty() || name.size() > 0xffff) throw InvalidArgument("tensor name length out of range");
    if (t.dims.size() > 0xff) throw InvalidArgument("tensor '" + name + "' has too many dimensions");
    if (t.numel() != t.values.size()) {
      throw InvalidArgument("tensor '" + name + "' dims " + dims_string(t.dims) + " need " +
                            std::to_string(t.numel()) + " values, got " + std::to_string(t.values.size()));
    }
    tensors_[name] = std::move(t);
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw MissingTensorError(name);
    return it->second;
  }

  // Like get(), but also checks the shape.
  const Tensor& get(const std::string& name, const std::vector<std::uint32_t>& dims) const {
    const Tensor& t = get(name);
    if (t.dims != dims) {
      throw FormatError("tensor '" + name + "' has dims " + dims_string(t.dims) + ", expected " +
                        dims_string(dims));
    }
    return t;
  }

  Tensor& mutable_tensor(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw MissingTensorError(name);
    return it->second;
  }

  void erase(const std::string& name) { tensors_.erase(name); }

  const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }
  std::size_t size() const noexcept { return tensors_.size(); }

  friend bool operator==(const WeightContainer&, const WeightContainer&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

// FGWC binary layout, all integers little-endian:
//   "FGWC" | version u32 | tensor count u32
//   per tensor: name length u16 | UTF-8 name | dtype u8 (0 = f32) | rank u8 |
//               dims u32 x rank | row-major f32 payload
namespace fgwc {

inline constexpr char kMagic[4] = {'F', 'G', 'W', 'C'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& in) : in_(in) {}

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string("truncated FGWC data at offset ") + std::to_string(pos_) + " while reading " +
                        what);
    }
  }
  template <class T>
  T le(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t offset() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == in_.size(); }

 private:
  const std::vector<unsigned char>& in_;
  std::size_t pos_ = 0;
};

}  // namespace fgwc

inline std::vector<unsigned char> encode_weights(const WeightContainer& wc) {
  fgwc::Writer w;
  w.bytes(fgwc::kMagic, 4);
  w.le<std::uint32_t>(fgwc::kVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(wc.size()));
  for (const auto& [name, t] : wc.tensors()) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(fgwc::kDtypeF32);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.le<std::uint32_t>(d);
    for (float v : t.values) w.f32(v);
  }
  return w.take();
}

inline WeightContainer decode_weights(const std::vector<unsigned char>& bytes) {
  fgwc::Reader r(bytes);
  if (r.str(4, "magic") != std::string(fgwc::kMagic, 4)) throw FormatError("bad magic: not an FGWC weight file");
  const auto version = r.le<std::uint32_t>("version");
  if (version != fgwc::kVersion) {
    throw FormatError("unsupported FGWC version " + std::to_string(version) + " (expected " +
                      std::to_string(fgwc::kVersion) + ")");
  }
  const auto count = r.le<std::uint32_t>("tensor count");
  WeightContainer wc;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint16_t>("name length");
    std::string name = r.str(len, "tensor name");
    const auto dtype = r.le<std::uint8_t>("dtype");
    if (dtype != fgwc::kDtypeF32) {
      throw FormatError("tensor '" + name + "' has unsupported dtype " + std::to_string(dtype));
    }
    const auto rank = r.le<std::uint8_t>("rank");
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.le<std::uint32_t>("dims");
    Tensor shape{dims, {}};
    const std::size_t n = shape.numel();
    r.need(n > bytes.size() ? bytes.size() + 1 : n * 4, "tensor payload");
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>("payload"));
    if (wc.contains(name)) throw FormatError("duplicate tensor '" + name + "'");
    wc.set(name, std::move(dims), std::move(values));
  }
  if (!r.done()) throw FormatError("trailing bytes after offset " + std::to_string(r.offset()));
  return wc;
}

inline void save_weights(const WeightContainer& wc, const std::string& path) {
  const auto bytes = encode_weights(wc);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline WeightContainer load_weights(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

}  // namespace filmgrade
