#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace audiocap {

/// Tape-based reverse-mode differentiation over matrices.
///
/// Every node holds a rows x cols matrix. Operations append to the tape;
/// backward() walks it in reverse and accumulates gradients of parameter
/// leaves into a gradient checkpoint with the same names. With recording
/// disabled the graph is a plain forward evaluator.
class Graph {
 public:
  struct Var {
    std::size_t id = 0;
  };

  explicit Graph(bool record = true) : record_(record) {}

  Var constant(Tensor value);
  Var param(const Checkpoint& params, const std::string& name);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value.values.at(0); }

  Var matmul(Var a, Var b);     // a (n x k) * b (k x m)
  Var matmul_nt(Var a, Var b);  // a (n x k) * b^T, b (m x k)
  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // row is 1 x cols, broadcast over rows
  Var mul_row(Var a, Var row);
  Var scale(Var a, double s);
  Var tanh(Var a);
  Var gather_rows(Var table, std::vector<std::size_t> ids);
  Var mean_rows(Var a);
  Var max_rows(Var a);  // ties go to the first row
  Var concat_rows(Var a, Var b);
  Var layer_norm(Var a, double eps = 1e-5);
  /// Row softmax; with causal set, row i only sees columns j <= i.
  Var softmax_rows(Var a, bool causal = false);
  Var log_softmax_rows(Var a);
  Var l2_normalize_rows(Var a);
  /// Sum of selected (row, col) entries as a 1 x 1 node.
  Var pick_sum(Var a, std::vector<std::pair<std::size_t, std::size_t>> cells);
  Var sum(Var a);

  using BackwardFn = std::function<void(const std::vector<double>& out_grad, std::vector<std::vector<double>*>& parent_grads)>;
  /// Escape hatch for fused operations with hand-written backward passes.
  Var custom(Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and accumulates into grads (same names as the
  /// parameter checkpoint). The loss must be 1 x 1.
  void backward(Var loss, Checkpoint& grads);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    std::string param_name;
  };

  Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn backward);
  const Node& node(Var v) const { return nodes_[v.id]; }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace audiocap
