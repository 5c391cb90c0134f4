#pragma once

#include <cstddef>
#include <vector>

#include "tensor.hpp"

namespace audiocap {

struct TransportPlan {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> plan;      // rows x cols
  std::vector<double> log_plan;  // same layout; exact even where plan underflows
  int iterations = 0;

  double at(std::size_t i, std::size_t j) const { return plan[i * cols + j]; }
  /// max |row_sum - 1/rows| and |col_sum - 1/cols|.
  double marginal_violation() const;
};

struct SinkhornOptions {
  double epsilon = 0.05;
  int max_iters = 500;
  double tol = 1e-8;
};

/// Entropic OT between uniform marginals, solved with log-domain Sinkhorn
/// iterations; stops once the marginal violation drops below tol.
TransportPlan sinkhorn(const Tensor& cost, const SinkhornOptions& opts = {});

struct MatchLoss {
  double loss = 0.0;
  TransportPlan plan;
  Tensor grad_audio;  // d loss / d audio rows
  Tensor grad_text;
};

/// Minibatch learning-to-match objective for n paired rows.
///
/// Cost C_ij = 1 - cos(audio_i, text_j); P* = sinkhorn(C). The loss is
/// KL(I/n || P*) = -(1/n) sum_i log P*_ii - log n, which is zero exactly when the
/// transport plan reproduces the ground-truth pairing. Its gradient with
/// respect to C is (I/n - P*) / epsilon with P* held fixed; that is what the
/// backward pass uses.
MatchLoss mltm_loss(const Tensor& audio, const Tensor& text, const SinkhornOptions& opts = {});

}  // namespace audiocap
