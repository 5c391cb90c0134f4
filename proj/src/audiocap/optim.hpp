#pragma once

#include <cstdint>

#include "tensor.hpp"

namespace audiocap {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates plus the step counter.
struct AdamState {
  Checkpoint m;
  Checkpoint v;
  std::uint64_t step = 0;
};

/// One Adam update in place. A fresh (empty) state is initialised to zeros.
/// params and grads must share names and shapes.
void optimizer_step(Checkpoint& params, const Checkpoint& grads, AdamState& state, double lr,
                    const AdamConfig& cfg = {});

}  // namespace audiocap
