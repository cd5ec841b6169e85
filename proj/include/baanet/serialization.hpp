#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "baanet/graph.hpp"
#include "baanet/tensor.hpp"

namespace baanet {

/// File-system or format failure; the message names the path involved.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raw tensor:  "BAAT" | u16 version | u8 rank | u32 dims[rank] | f32 data[numel]
// Checkpoint:  "BAAC" | u16 version | u64 step | u32 count |
//              count x (u16 name length | UTF-8 name | raw tensor) |
//              u32 config length | config text (JSON)
// All integers and floats little-endian.
inline constexpr std::array<char, 4> kTensorMagic = {'B', 'A', 'A', 'T'};
inline constexpr std::array<char, 4> kCheckpointMagic = {'B', 'A', 'A', 'C'};
inline constexpr std::uint16_t kTensorFormatVersion = 1;
inline constexpr std::uint16_t kCheckpointFormatVersion = 1;

class ByteWriter {
 public:
  void bytes(std::span<const char> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  [[nodiscard]] const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const char> data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  std::span<const char> bytes(std::size_t n) {
    if (pos_ + n > data_.size()) throw IoError(origin_ + ": unexpected end of data");
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T uint() {
    auto b = bytes(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  [[nodiscard]] bool done() const { return pos_ == data_.size(); }
  [[nodiscard]] const std::string& origin() const { return origin_; }

 private:
  std::span<const char> data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

inline void write_tensor(ByteWriter& w, const Tensor& t) {
  w.bytes(kTensorMagic);
  w.uint<std::uint16_t>(kTensorFormatVersion);
  w.uint<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape().dims()) w.uint<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (double v : t.data()) w.f32(static_cast<float>(v));
}

inline Tensor read_tensor(ByteReader& r) {
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kTensorMagic.begin())) {
    throw IoError(r.origin() + ": bad tensor magic");
  }
  const auto version = r.uint<std::uint16_t>();
  if (version != kTensorFormatVersion) {
    throw IoError(r.origin() + ": tensor format version " + std::to_string(version) + " is not supported version " +
                  std::to_string(kTensorFormatVersion));
  }
  const auto rank = r.uint<std::uint8_t>();
  if (rank < 1 || rank > Shape::kMaxRank) throw IoError(r.origin() + ": invalid tensor rank " + std::to_string(rank));
  std::vector<std::size_t> dims(rank);
  for (auto& d : dims) d = r.uint<std::uint32_t>();
  Shape shape{std::span<const std::size_t>(dims)};
  std::vector<double> data(shape.numel());
  for (double& v : data) v = static_cast<double>(r.f32());
  return Tensor(shape, std::move(data));
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  ByteWriter w;
  write_tensor(w, t);
  write_file(path, w.buffer());
}

inline Tensor load_tensor(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes, path.string());
  Tensor t = read_tensor(r);
  if (!r.done()) throw IoError(path.string() + ": trailing bytes after tensor");
  return t;
}

struct Checkpoint {
  std::uint16_t version = kCheckpointFormatVersion;
  std::uint64_t step = 0;
  ParamStore params;
  std::string config;  // RunConfig snapshot as JSON text

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.version == b.version && a.step == b.step && a.params == b.params && a.config == b.config;
  }
};

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.uint<std::uint16_t>(ck.version);
  w.uint<std::uint64_t>(ck.step);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.params.size()));
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const std::string& name = ck.params.name(i);
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    write_tensor(w, ck.params.value(i));
  }
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(ck.config.size()));
  w.bytes(ck.config);
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::span<const char> bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic.begin())) {
    throw IoError(origin + ": not a checkpoint (bad magic)");
  }
  Checkpoint ck;
  ck.version = r.uint<std::uint16_t>();
  if (ck.version != kCheckpointFormatVersion) {
    throw IoError(origin + ": checkpoint format version " + std::to_string(ck.version) +
                  " does not match supported version " + std::to_string(kCheckpointFormatVersion));
  }
  ck.step = r.uint<std::uint64_t>();
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.uint<std::uint16_t>();
    auto name = r.bytes(len);
    ck.params.add(std::string(name.begin(), name.end()), read_tensor(r));
  }
  const auto cfg_len = r.uint<std::uint32_t>();
  auto cfg = r.bytes(cfg_len);
  ck.config.assign(cfg.begin(), cfg.end());
  if (!r.done()) throw IoError(origin + ": trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

/// Rounds every element to the nearest float, i.e. what a save/load cycle yields.
inline void round_to_storage_precision(ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i)
    for (double& v : params.value(i).data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace baanet
