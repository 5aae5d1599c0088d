#include "cacl/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace cacl {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'C', 'L'};

class Writer {
 public:
  void byte(std::uint8_t b) { out_.push_back(b); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void size(std::size_t v) {
    if (v > 0xFFFFFFFFu) throw ArgumentError("encode_space: dimension exceeds 32 bits");
    u32(static_cast<std::uint32_t>(v));
  }
  void column_order(const Matrix& m) {
    for (std::size_t j = 0; j < m.cols(); ++j)
      for (std::size_t i = 0; i < m.rows(); ++i) f32(m(i, j));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw FormatError(std::string("truncated ") + what, pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::size_t dim(const char* what) {
    const std::size_t at = pos_;
    const std::uint32_t v = u32(what);
    if (v == 0) throw FormatError(std::string("zero ") + what, at);
    return v;
  }
  // Reals are checked against the remaining bytes before any allocation.
  Matrix column_order(std::size_t rows, std::size_t cols, const char* what) {
    need_reals(rows, cols, what);
    Matrix m(rows, cols);
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t i = 0; i < rows; ++i) m(i, j) = f32(what);
    return m;
  }
  Matrix row_order(std::size_t rows, std::size_t cols, const char* what) {
    need_reals(rows, cols, what);
    Matrix m(rows, cols);
    for (float& x : m.storage()) x = f32(what);
    return m;
  }

 private:
  void need_reals(std::size_t rows, std::size_t cols, const char* what) const {
    if (cols != 0 && rows > remaining() / 4 / cols) throw FormatError(std::string("truncated ") + what, pos_);
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_space(const SharedSpace& shared) {
  const NetworkSpec& spec = shared.spec();
  Writer body;
  for (char c : kMagic) body.byte(static_cast<std::uint8_t>(c));
  body.u32(kFormatVersion);
  body.size(shared.num_layers());
  body.size(shared.num_tasks());
  body.size(spec.input_channels);
  body.size(spec.input_height);
  body.size(spec.input_width);
  body.size(spec.classes);
  for (const LayerSpec& l : spec.layers) {
    body.size(l.shape.c);
    body.size(l.shape.n);
    body.size(l.shape.h);
    body.size(l.shape.w);
    body.size(l.stride);
    body.size(l.padding);
    body.f32(l.dropout);
  }
  for (const auto& row : shared.rank_table())
    for (std::uint32_t r : row) body.u32(r);
  for (const LayerFactors& f : shared.layers()) {
    body.column_order(f.u);
    for (float s : f.sigma) body.f32(s);
    body.column_order(f.v);
  }
  for (const TaskHead& h : shared.heads()) {
    body.size(h.weight.rows());
    body.size(h.weight.cols());
    for (float x : h.weight.storage()) body.f32(x);
    for (float x : h.bias.storage()) body.f32(x);
  }
  return body.take();
}

SharedSpace decode_space(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic (expected \"CACL\")", 0);
  r.u32("magic");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion)
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  const std::size_t layers = r.dim("layer count");
  const std::size_t tasks = r.u32("task count");

  NetworkSpec spec;
  spec.input_channels = r.dim("input channels");
  spec.input_height = r.dim("input height");
  spec.input_width = r.dim("input width");
  spec.classes = r.dim("class count");
  r.need(layers * 28, "layer metadata");
  for (std::size_t l = 0; l < layers; ++l) {
    LayerSpec ls;
    ls.shape.c = r.dim("layer output channels");
    ls.shape.n = r.dim("layer input channels");
    ls.shape.h = r.dim("kernel height");
    ls.shape.w = r.dim("kernel width");
    ls.stride = r.dim("stride");
    ls.padding = r.u32("padding");
    ls.dropout = r.f32("dropout");
    spec.layers.push_back(ls);
  }
  const std::size_t spec_end = r.offset();
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid network metadata: ") + e.what(), spec_end);
  }

  if (tasks != 0 && layers > r.remaining() / 4 / tasks) throw FormatError("truncated rank table", r.offset());
  std::vector<std::vector<std::uint32_t>> table(layers);
  for (auto& row : table)
    for (std::size_t t = 0; t < tasks; ++t) row.push_back(r.u32("rank table"));

  std::vector<LayerFactors> factors;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t rank = tasks == 0 ? 0 : table[l].back();
    const LayerShape& s = spec.layers[l].shape;
    LayerFactors f;
    f.u = r.column_order(s.rows(), rank, "factor U");
    r.need(4 * rank, "singular values");
    for (std::size_t k = 0; k < rank; ++k) f.sigma.push_back(r.f32("singular values"));
    f.v = r.column_order(s.cols(), rank, "factor V");
    factors.push_back(std::move(f));
  }

  std::vector<TaskHead> heads;
  for (std::size_t t = 0; t < tasks; ++t) {
    const std::size_t d = r.dim("head rows");
    const std::size_t k = r.dim("head cols");
    TaskHead h;
    h.weight = r.row_order(d, k, "head weight");
    h.bias = r.row_order(1, k, "head bias");
    heads.push_back(std::move(h));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last head", r.offset());

  try {
    return SharedSpace::from_parts(std::move(spec), std::move(factors), std::move(table), std::move(heads));
  } catch (const Error& e) {
    throw FormatError(std::string("inconsistent contents: ") + e.what(), spec_end);
  }
}

void save_space(const SharedSpace& shared, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_space(shared);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot move " + tmp + " to " + path);
  }
}

SharedSpace load_space(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_space(bytes);
}

}  // namespace cacl
