#include "optim.hpp"

#include <cmath>

#include "error.hpp"

namespace audiocap {

void optimizer_step(Checkpoint& params, const Checkpoint& grads, AdamState& state, double lr,
                    const AdamConfig& cfg) {
  require(params.same_layout(grads), ErrorKind::Contract, "optimizer_step: params and grads differ in names/shapes");
  if (state.m.size() == 0) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
    state.step = 0;
  }
  require(params.same_layout(state.m), ErrorKind::Contract, "optimizer_step: optimizer state does not match params");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto& pe = params.entries();
  const auto& ge = grads.entries();
  auto& me = state.m.entries();
  auto& ve = state.v.entries();
  for (std::size_t e = 0; e < pe.size(); ++e) {
    auto& p = pe[e].second.values;
    const auto& g = ge[e].second.values;
    auto& m = me[e].second.values;
    auto& v = ve[e].second.values;
    for (std::size_t i = 0; i < p.size(); ++i) {
      require(std::isfinite(g[i]), ErrorKind::Numeric, "non-finite gradient for " + pe[e].first);
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace audiocap
