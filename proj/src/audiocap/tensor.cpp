#include "tensor.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "error.hpp"

namespace audiocap {

namespace {
constexpr std::string_view kMagic = "ACKP";
constexpr std::string_view kFooter = "END.";
}  // namespace

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(std::filesystem::exists(path) ? ErrorKind::Io : ErrorKind::MissingInput, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  require(!shape.empty(), ErrorKind::Contract, "tensor shape must have at least one dimension");
  for (auto d : shape) require(d > 0, ErrorKind::Contract, "tensor dimensions must be positive");
  require(values.size() == shape_product(shape), ErrorKind::Contract,
          "tensor value count does not match shape " + shape_string(shape));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_) {
  const auto n = shape_product(shape_);
  return Tensor(std::move(shape_), std::vector<double>(n, 0.0));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) {
  return Tensor({rows, cols}, std::vector<double>(rows * cols, fill));
}

std::size_t Tensor::rows() const {
  if (shape.size() == 1) return 1;
  return values.size() / shape.back();
}

std::size_t Tensor::cols() const { return shape.back(); }

bool Tensor::all_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) return false;
  return true;
}

void Checkpoint::add(const std::string& name, Tensor t) {
  require(!contains(name), ErrorKind::Contract, "duplicate parameter name '" + name + "'");
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
}

Tensor& Checkpoint::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::Contract, "missing parameter '" + name + "'");
  return entries_[it->second].second;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::Contract, "missing parameter '" + name + "'");
  return entries_[it->second].second;
}

const std::string& Checkpoint::attr(const std::string& key) const {
  auto it = attrs.find(key);
  if (it == attrs.end()) fail(ErrorKind::Contract, "checkpoint '" + arch + "' lacks attribute '" + key + "'");
  return it->second;
}

bool Checkpoint::same_layout(const Checkpoint& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.shape != other.entries_[i].second.shape) return false;
  }
  return true;
}

Checkpoint Checkpoint::zeros_like() const {
  Checkpoint out;
  out.arch = arch;
  out.attrs = attrs;
  for (const auto& [name, t] : entries_) out.add(name, Tensor::zeros(t.shape));
  return out;
}

std::size_t Checkpoint::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

// Layout: "ACKP" u32:version str:arch u32:n_attrs {str:key str:value}*
//         u32:n_entries {str:name u32:rank u64:dim* f64:value*}* "END."
// Strings are u32 length + bytes; all integers and doubles little-endian.
std::string serialize_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kMagic);
  w.u32(Checkpoint::kFormatVersion);
  w.str(ckpt.arch);
  w.u32(static_cast<std::uint32_t>(ckpt.attrs.size()));
  for (const auto& [k, v] : ckpt.attrs) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.size()));
  for (const auto& [name, t] : ckpt.entries()) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  w.raw(kFooter);
  return w.bytes();
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& context) {
  ByteReader r(bytes, context);
  if (bytes.size() < kMagic.size() || r.raw(kMagic.size()) != kMagic)
    fail(ErrorKind::CorruptFile, context + ": bad magic bytes");
  const auto version = r.u32();
  if (version != Checkpoint::kFormatVersion)
    fail(ErrorKind::UnknownVersion, context + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.arch = r.str();
  const auto n_attrs = r.u32();
  for (std::uint32_t i = 0; i < n_attrs; ++i) {
    auto k = r.str();
    ckpt.attrs[k] = r.str();
  }
  const auto n_entries = r.u32();
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    auto name = r.str();
    const auto rank = r.u32();
    if (rank == 0 || rank > 8) fail(ErrorKind::CorruptFile, context + ": bad rank for '" + name + "'");
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = r.u64();
      if (d == 0) fail(ErrorKind::CorruptFile, context + ": zero dimension in '" + name + "'");
      count *= d;
    }
    if (count > r.remaining() / 8) fail(ErrorKind::CorruptFile, context + ": truncated file");
    std::vector<double> values(count);
    for (auto& v : values) v = r.f64();
    if (ckpt.contains(name)) fail(ErrorKind::CorruptFile, context + ": duplicate entry '" + name + "'");
    ckpt.add(name, Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() < kFooter.size() || r.raw(kFooter.size()) != kFooter || !r.at_end())
    fail(ErrorKind::CorruptFile, context + ": missing or misplaced end marker");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file_bytes(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file_bytes(path), path); }

}  // namespace audiocap
