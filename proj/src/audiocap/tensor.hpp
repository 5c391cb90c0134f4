#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace audiocap {

/// Dense row-major array of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> values_);

  static Tensor zeros(std::vector<std::size_t> shape_);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t size() const { return values.size(); }
  // Matrix view: a rank-1 tensor is one row.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

/// Named parameter collection with an architecture tag and free-form string
/// attributes (vocabularies, hyperparameters). Entry order is insertion order.
class Checkpoint {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  std::string arch;
  std::map<std::string, std::string> attrs;

  void add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::string& attr(const std::string& key) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  /// Same names, in the same order, with the same shapes.
  bool same_layout(const Checkpoint& other) const;
  /// Zero tensors with this checkpoint's names and shapes.
  Checkpoint zeros_like() const;
  std::size_t parameter_count() const;

  bool operator==(const Checkpoint& other) const {
    return arch == other.arch && attrs == other.attrs && entries_ == other.entries_;
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& context = "checkpoint");
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace audiocap
