#include <doctest.h>

#include <cmath>

#include "audiocap/error.hpp"
#include "audiocap/rng.hpp"
#include "audiocap/sinkhorn.hpp"
#include "oracles.hpp"

using namespace audiocap;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t = Tensor::matrix(r, c);
  for (auto& v : t.values) v = normal(rng);
  return t;
}

}  // namespace

TEST_CASE("constant cost gives the uniform plan") {
  const auto p = sinkhorn(Tensor::matrix(4, 4, 0.3));
  for (double v : p.plan) CHECK(v == doctest::Approx(1.0 / 16).epsilon(1e-12));
}

TEST_CASE("a single row spreads its mass over the columns") {
  const auto one = sinkhorn(Tensor::matrix(1, 1, 2.0));
  CHECK(one.plan[0] == doctest::Approx(1.0).epsilon(1e-12));
  Tensor c = Tensor::matrix(1, 5);
  for (std::size_t j = 0; j < 5; ++j) c.values[j] = 0.2 * static_cast<double>(j);
  const auto p = sinkhorn(c);
  for (double v : p.plan) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("2x2 anti-diagonal cost matches a matrix-scaling oracle") {
  Tensor c = Tensor::matrix(2, 2);
  c.at(0, 1) = c.at(1, 0) = 1.0;
  const auto oracle = oracle::scaling(c, 0.05, 10000);
  const auto p = sinkhorn(c, {0.05, 500, 1e-8});
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(p.plan[i] - oracle[i]) < 1e-3);
  CHECK(std::abs(p.at(0, 0) - 0.5) < 1e-3);
  CHECK(std::abs(p.at(0, 1)) < 1e-3);

  const auto wide = sinkhorn(c, {0.5, 500, 1e-12});
  const auto wide_oracle = oracle::scaling(c, 0.5, 10000);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(wide.plan[i] - wide_oracle[i]) < 1e-10);
  CHECK(wide.at(0, 1) == doctest::Approx(0.5 / (1.0 + std::exp(2.0))).epsilon(1e-10));
}

TEST_CASE("marginals hold on 100 random costs up to 64x64") {
  Rng rng(4);
  auto check_plan = [](const TransportPlan& p) {
    INFO("shape " << p.rows << "x" << p.cols << " iterations " << p.iterations);
    CHECK(p.marginal_violation() < 1e-6);
    for (std::size_t k = 0; k < p.plan.size(); ++k) {
      CHECK(p.plan[k] >= 0.0);
      CHECK(std::exp(p.log_plan[k]) == doctest::Approx(p.plan[k]));
    }
  };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 64), m = 1 + uniform_index(rng, 64);
    Tensor unit = Tensor::matrix(n, m);
    for (auto& v : unit.values) v = uniform01(rng);
    check_plan(sinkhorn(unit));

    // 1 - cosine of random 32-d vectors, the cost the embedder produces.
    const Tensor a = random_tensor(n, 32, rng), b = random_tensor(m, 32, rng);
    Tensor cos_cost = Tensor::matrix(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < 32; ++k) {
          s += a.at(i, k) * b.at(j, k);
          na += a.at(i, k) * a.at(i, k);
          nb += b.at(j, k) * b.at(j, k);
        }
        cos_cost.at(i, j) = 1.0 - s / std::sqrt(na * nb);
      }
    check_plan(sinkhorn(cos_cost));

  }
}

TEST_CASE("sinkhorn errors") {
  Tensor c = Tensor::matrix(2, 2);
  c.values[1] = std::nan("");
  CHECK_THROWS_AS(sinkhorn(c), Error);
  CHECK_THROWS_AS(sinkhorn(Tensor::matrix(2, 2), {0.0, 10, 1e-8}), Error);
}

TEST_CASE("m-LTM loss is non-negative and small for well-separated pairs") {
  Tensor a = Tensor::matrix(3, 3), t = Tensor::matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i) a.at(i, i) = t.at(i, i) = 1.0;
  const auto res = mltm_loss(a, t);
  CHECK(res.loss >= 0.0);
  CHECK(res.loss < 1e-6);
  Rng rng(5);
  const auto r = mltm_loss(random_tensor(5, 4, rng), random_tensor(5, 4, rng));
  CHECK(r.loss > 0.0);
}

TEST_CASE("m-LTM gradient matches finite differences (n=3, d=4)") {
  Rng rng(6);
  const Tensor a = random_tensor(3, 4, rng), t = random_tensor(3, 4, rng);
  const SinkhornOptions opts{0.5, 20000, 1e-14};
  const auto res = mltm_loss(a, t, opts);
  const double h = 1e-6;
  auto fd = [&](bool audio, std::size_t k) {
    Tensor ap = a, am = a, tp = t, tm = t;
    (audio ? ap : tp).values[k] += h;
    (audio ? am : tm).values[k] -= h;
    return (mltm_loss(ap, tp, opts).loss - mltm_loss(am, tm, opts).loss) / (2 * h);
  };
  for (std::size_t k = 0; k < 12; ++k) {
    CHECK(std::abs(fd(true, k) - res.grad_audio.values[k]) < 1e-6);
    CHECK(std::abs(fd(false, k) - res.grad_text.values[k]) < 1e-6);
  }
}

TEST_CASE("m-LTM errors") {
  CHECK_THROWS_AS(mltm_loss(Tensor::matrix(1, 3, 1.0), Tensor::matrix(1, 3, 1.0)), Error);
  CHECK_THROWS_AS(mltm_loss(Tensor::matrix(2, 3, 1.0), Tensor::matrix(2, 2, 1.0)), Error);
}
