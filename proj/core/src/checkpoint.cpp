#include "spgrpo/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "spgrpo/errors.hpp"

namespace spgrpo::numerics {
namespace {

constexpr std::string_view kMagic = "SPGRPOCK";

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void i64(std::int64_t v) { put(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }
  const std::string& buffer() const { return out_; }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(get(8)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(take(n));
  }
  std::string_view take(std::size_t n) {
    if (in_.size() - pos_ < n) throw IoError("checkpoint: truncated record");
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t get(int bytes) {
    auto s = take(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    }
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

// Guards against absurd sizes from corrupt input before allocating.
void check_count(std::uint64_t n, const Reader& r, std::size_t bytes_per_item) {
  if (bytes_per_item != 0 && n > r.remaining() / bytes_per_item) {
    throw IoError("checkpoint: declared size exceeds record length");
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  ck.net.validate();
  Writer w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ck.net.layer_sizes.size()));
  for (auto s : ck.net.layer_sizes) w.u64(s);
  for (std::size_t l = 0; l < ck.net.num_layers(); ++l) {
    for (double v : ck.net.weights[l].data()) w.f64(v);
    for (double v : ck.net.biases[l]) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(ck.attributes.size()));
  for (const auto& [name, value] : ck.attributes) {
    w.str(name);
    w.i64(value);
  }
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, m] : ck.tensors) {
    w.str(name);
    w.u64(m.rows());
    w.u64(m.cols());
    for (double v : m.data()) w.f64(v);
  }
  const std::uint64_t sum = fnv1a(w.buffer());
  w.u64(sum);
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw IoError("checkpoint: bad magic");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a(body)) throw IoError("checkpoint: checksum mismatch");

  Reader r(body);
  r.take(kMagic.size());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::uint32_t n_sizes = r.u32();
  check_count(n_sizes, r, 8);
  std::vector<std::size_t> sizes(n_sizes);
  for (auto& s : sizes) s = static_cast<std::size_t>(r.u64());
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    check_count(static_cast<std::uint64_t>(sizes[l]) * sizes[l + 1], r, 8);
  }
  ck.net = zeros_mlp(sizes);
  for (std::size_t l = 0; l < ck.net.num_layers(); ++l) {
    for (double& v : ck.net.weights[l].data()) v = r.f64();
    for (double& v : ck.net.biases[l]) v = r.f64();
  }
  const std::uint32_t n_attrs = r.u32();
  check_count(n_attrs, r, 12);
  for (std::uint32_t i = 0; i < n_attrs; ++i) {
    auto name = r.str();
    ck.attributes[name] = r.i64();
  }
  const std::uint32_t n_tensors = r.u32();
  check_count(n_tensors, r, 20);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = r.str();
    const auto rows = r.u64();
    const auto cols = r.u64();
    check_count(rows * cols, r, 8);
    std::vector<double> data(rows * cols);
    for (double& v : data) v = r.f64();
    ck.tensors.emplace(std::move(name), DenseMatrix(rows, cols, std::move(data)));
  }
  if (r.remaining() != 0) throw IoError("checkpoint: trailing bytes");
  ck.net.validate();
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = encode_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace spgrpo::numerics
