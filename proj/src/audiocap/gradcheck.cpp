#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace audiocap {

double grad_check(const ScalarFn& f, const Tensor& point, double epsilon) {
  require(epsilon >= 1e-8 && epsilon <= 1e-3, ErrorKind::InvalidArgument, "grad_check: epsilon outside [1e-8, 1e-3]");
  Tensor analytic = Tensor::zeros(point.shape);
  const double f0 = f(point, &analytic);
  require(std::isfinite(f0), ErrorKind::Numeric, "grad_check: non-finite function value");
  Tensor x = point;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.values[i];
    x.values[i] = orig + epsilon;
    const double fp = f(x, nullptr);
    x.values[i] = orig - epsilon;
    const double fm = f(x, nullptr);
    x.values[i] = orig;
    require(std::isfinite(fp) && std::isfinite(fm), ErrorKind::Numeric, "grad_check: non-finite function value");
    const double numeric = (fp - fm) / (2.0 * epsilon);
    const double a = analytic.values[i];
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

Tensor flatten(const Checkpoint& ckpt) {
  std::vector<double> all;
  all.reserve(ckpt.parameter_count());
  for (const auto& e : ckpt.entries()) all.insert(all.end(), e.second.values.begin(), e.second.values.end());
  if (all.empty()) all.push_back(0.0);
  const auto n = all.size();
  return Tensor({n}, std::move(all));
}

void unflatten(const Tensor& flat, Checkpoint& ckpt) {
  require(flat.size() == ckpt.parameter_count(), ErrorKind::Contract, "unflatten: size mismatch");
  std::size_t off = 0;
  for (auto& e : ckpt.entries()) {
    auto& v = e.second.values;
    std::copy_n(flat.values.begin() + static_cast<std::ptrdiff_t>(off), v.size(), v.begin());
    off += v.size();
  }
}

}  // namespace audiocap
