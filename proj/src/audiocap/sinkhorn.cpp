#include "sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"

namespace audiocap {

namespace {

double log_sum_exp(const double* x, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i * stride]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - mx);
  return mx + std::log(s);
}

}  // namespace

double TransportPlan::marginal_violation() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += plan[i * cols + j];
    worst = std::max(worst, std::abs(s - 1.0 / static_cast<double>(rows)));
  }
  for (std::size_t j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += plan[i * cols + j];
    worst = std::max(worst, std::abs(s - 1.0 / static_cast<double>(cols)));
  }
  return worst;
}

TransportPlan sinkhorn(const Tensor& cost, const SinkhornOptions& opts) {
  require(opts.epsilon > 0.0, ErrorKind::InvalidArgument, "sinkhorn: epsilon must be positive");
  require(opts.max_iters >= 1, ErrorKind::InvalidArgument, "sinkhorn: max_iters must be positive");
  require(cost.all_finite(), ErrorKind::Numeric, "sinkhorn: non-finite cost entries");
  const auto n = cost.rows(), m = cost.cols();
  const double eps = opts.epsilon;
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));

  // Potentials f, g; work matrix holds (f_i + g_j - C_ij) / eps.
  std::vector<double> f(n, 0.0), g(m, 0.0), work(n * m);
  TransportPlan out;
  out.rows = n;
  out.cols = m;
  out.plan.resize(n * m);
  out.log_plan.resize(n * m);

  auto refresh = [&] {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) work[i * m + j] = (f[i] + g[j] - cost.values[i * m + j]) / eps;
  };
  for (int it = 1; it <= opts.max_iters; ++it) {
    refresh();
    for (std::size_t i = 0; i < n; ++i) f[i] += eps * (log_a - log_sum_exp(&work[i * m], m, 1));
    refresh();
    for (std::size_t j = 0; j < m; ++j) g[j] += eps * (log_b - log_sum_exp(&work[j], n, m));
    out.iterations = it;

    // Columns are exact after the g update; only rows can be off.
    refresh();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp(work[i * m + j]);
      worst = std::max(worst, std::abs(s - 1.0 / static_cast<double>(n)));
    }
    if (worst < opts.tol) break;
  }
  refresh();
  for (std::size_t k = 0; k < n * m; ++k) {
    out.log_plan[k] = work[k];
    out.plan[k] = std::exp(work[k]);
  }
  return out;
}

MatchLoss mltm_loss(const Tensor& audio, const Tensor& text, const SinkhornOptions& opts) {
  const auto n = audio.rows(), d = audio.cols();
  require(n >= 2, ErrorKind::InvalidArgument, "mltm_loss: need at least two pairs");
  require(text.rows() == n && text.cols() == d, ErrorKind::InvalidArgument, "mltm_loss: audio/text shape mismatch");

  std::vector<double> na(n), nt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sa = 0.0, st = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      sa += audio.at(i, k) * audio.at(i, k);
      st += text.at(i, k) * text.at(i, k);
    }
    na[i] = std::max(std::sqrt(sa), 1e-12);
    nt[i] = std::max(std::sqrt(st), 1e-12);
  }
  Tensor cosine = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += audio.at(i, k) * text.at(j, k);
      cosine.at(i, j) = s / (na[i] * nt[j]);
    }
  Tensor cost = cosine;
  for (auto& v : cost.values) v = 1.0 - v;

  MatchLoss out;
  out.plan = sinkhorn(cost, opts);
  double loss = -std::log(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) loss -= out.plan.log_plan[i * n + i] / static_cast<double>(n);
  out.loss = loss;

  // dL/dC_ij = (delta_ij / n - P_ij) / eps, and dC/dcos = -1.
  out.grad_audio = Tensor::matrix(n, d);
  out.grad_text = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double g_cost = ((i == j ? 1.0 / static_cast<double>(n) : 0.0) - out.plan.at(i, j)) / opts.epsilon;
      const double g_cos = -g_cost;
      if (g_cos == 0.0) continue;
      const double c = cosine.at(i, j);
      for (std::size_t k = 0; k < d; ++k) {
        out.grad_audio.at(i, k) +=
            g_cos * (text.at(j, k) / (na[i] * nt[j]) - c * audio.at(i, k) / (na[i] * na[i]));
        out.grad_text.at(j, k) +=
            g_cos * (audio.at(i, k) / (na[i] * nt[j]) - c * text.at(j, k) / (nt[j] * nt[j]));
      }
    }
  return out;
}

}  // namespace audiocap
