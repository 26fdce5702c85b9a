#include "tfbench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tfbench/errors.hpp"

namespace tfbench {

namespace {

constexpr char kMagic[8] = {'T', 'F', 'B', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v), 8); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::string bytes;

 private:
  void uint(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
};

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string text() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void expect_magic() {
    need(sizeof kMagic);
    if (std::memcmp(data_.data(), kMagic, sizeof kMagic) != 0) throw ParseError(source_ + ": not a checkpoint file");
    pos_ += sizeof kMagic;
  }
  bool done() const { return pos_ == data_.size(); }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ParseError(source_ + ": truncated checkpoint");
  }

 private:
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::string& Checkpoint::meta(const std::string& key) const {
  const auto it = metadata.find(key);
  if (it == metadata.end()) throw ParseError("checkpoint is missing metadata '" + key + "'");
  return it->second;
}

const CheckpointArray& Checkpoint::array(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw ParseError("checkpoint is missing array '" + name + "'");
  return it->second;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes.append(kMagic, sizeof kMagic);
  w.u32(Checkpoint::kVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.text(k);
    w.text(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& [name, a] : ckpt.arrays) {
    std::uint64_t count = 1;
    for (auto d : a.shape) count *= d;
    if (count != a.values.size()) throw ContractError("checkpoint array '" + name + "' does not match its shape");
    w.text(name);
    w.u32(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.u64(d);
    for (double v : a.values) w.f64(v);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(w.bytes.data(), static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw ContractError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data, path.string());
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  for (std::uint32_t n = r.u32(), i = 0; i < n; ++i) {
    std::string k = r.text();
    ckpt.metadata[k] = r.text();
  }
  for (std::uint32_t n = r.u32(), i = 0; i < n; ++i) {
    const std::string name = r.text();
    CheckpointArray a;
    const std::uint32_t rank = r.u32();
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(r.u64());
      if (a.shape.back() != 0 && count > data.size() / a.shape.back()) {
        throw ParseError(path.string() + ": truncated checkpoint");
      }
      count *= a.shape.back();
    }
    if (count > data.size() / 8) throw ParseError(path.string() + ": truncated checkpoint");
    r.need(count * 8);
    a.values.resize(count);
    for (auto& v : a.values) v = r.f64();
    ckpt.arrays[name] = std::move(a);
  }
  if (!r.done()) throw ParseError(path.string() + ": trailing bytes after checkpoint");
  return ckpt;
}

}  // namespace tfbench
