#include <doctest.h>

#include <cmath>

#include "audiocap/ensemble.hpp"
#include "audiocap/error.hpp"

using namespace audiocap;

namespace {

CaptionModel model(std::uint64_t seed, double noise) {
  CaptionerConfig cfg;
  cfg.hidden = 8;
  cfg.ff = 12;
  cfg.max_len = 10;
  cfg.mcm_stages = 1;
  const std::vector<std::string> caps = {"a low tone", "a chirp then noise"};
  auto m = CaptionModel::init(cfg, Vocabulary::build(caps), 2, 5, 3, 1);
  Rng rng(seed);
  for (auto& e : m.params().entries())
    for (auto& x : e.second.values) x += normal(rng, 0.0, noise);
  m.params().get("out.b").values[Vocabulary::kEnd] += 3.0;
  return m;
}

CodeSequence codes() {
  CodeSequence c;
  c.sample_rate = 24000;
  c.hop = 320;
  c.num_frames = 3;
  c.num_stages = 2;
  c.num_samples = 900;
  c.codes = {0, 1, 2, 3, 4, 0};
  return c;
}

const std::vector<double> kEmb = {0.5, 0.5, -0.5};

std::string dump(const std::vector<CaptionCandidate>& cands) {
  std::string out;
  for (const auto& c : cands) {
    out += c.text + "|";
    out.append(reinterpret_cast<const char*>(&c.loglik), sizeof c.loglik);
    for (auto t : c.tokens) out += std::to_string(t) + ",";
    out += c.terminated ? "T\n" : "F\n";
  }
  return out;
}

}  // namespace

TEST_CASE("soup identities") {
  const auto m = model(1, 0.3).params();
  const std::vector<Checkpoint> one = {m}, two = {m, m};
  for (const auto* input : {&one, &two}) {
    const auto s = soup(*input);
    CHECK(s.entries() == m.entries());
    CHECK(s.arch == m.arch);
    CHECK(s.attr("soup_sources") == std::to_string(input->size()));
    CHECK(s.attr("vocab") == m.attr("vocab"));
  }
}

TEST_CASE("soup of 1.0 and 3.0 is 2.0; elementwise mean otherwise") {
  Checkpoint a, b;
  a.arch = b.arch = "toy";
  a.add("s", Tensor::scalar(1.0));
  b.add("s", Tensor::scalar(3.0));
  a.add("w", Tensor({3}, {0.1, -2.0, 5.5}));
  b.add("w", Tensor({3}, {0.3, 2.0, 5.5}));
  const std::vector<Checkpoint> ab = {a, b};
  const auto s = soup(ab);
  CHECK(s.get("s").values[0] == 2.0);
  CHECK(s.get("w").values[0] == (0.1 + 0.3) / 2);
  CHECK(s.get("w").values[1] == 0.0);
  CHECK(s.get("w").values[2] == 5.5);
}

TEST_CASE("soup is permutation-invariant") {
  const std::vector<Checkpoint> fwd = {model(1, 0.3).params(), model(2, 0.3).params(), model(3, 0.3).params()};
  const std::vector<Checkpoint> rev = {fwd[2], fwd[0], fwd[1]};
  CHECK(serialize_checkpoint(soup(fwd)) == serialize_checkpoint(soup(rev)));
  // Soups of soups are accepted.
  const std::vector<Checkpoint> nested = {soup(fwd), fwd[0]};
  CHECK(soup(nested).attr("soup_sources") == "2");
}

TEST_CASE("soup mismatches") {
  Checkpoint a, b;
  a.arch = b.arch = "toy";
  a.add("w", Tensor({2}, {1, 2}));
  b.add("w", Tensor({3}, {1, 2, 3}));
  std::vector<Checkpoint> v = {a, b};
  CHECK_THROWS_AS(soup(v), Error);
  Checkpoint c = a;
  c.arch = "other";
  v = {a, c};
  CHECK_THROWS_AS(soup(v), Error);
  Checkpoint d;
  d.arch = "toy";
  d.add("u", Tensor({2}, {1, 2}));
  v = {a, d};
  CHECK_THROWS_AS(soup(v), Error);
  Checkpoint e = a;
  e.attrs["vocab"] = "x";
  v = {a, e};
  CHECK_THROWS_AS(soup(v), Error);
  CHECK_THROWS_AS(soup(std::vector<Checkpoint>{}), Error);
}

TEST_CASE("ensemble of [0.8, 0.2]-style and [0.2, 0.8]-style members averages probabilities") {
  auto m1 = model(1, 0.0), m2 = model(1, 0.0);
  const std::size_t v = m1.vocab().size();
  REQUIRE(v == 9);
  // Zero output weights: the bias alone sets each distribution.
  for (auto* m : {&m1, &m2}) std::fill(m->params().get("out.w").values.begin(), m->params().get("out.w").values.end(), 0.0);
  std::vector<double> p1(v, 0.0), p2(v, 0.0);
  p1[3] = 0.8, p1[4] = 0.2;
  p2[3] = 0.2, p2[4] = 0.8;
  for (std::size_t i = 0; i < v; ++i) {
    m1.params().get("out.b").values[i] = p1[i] > 0 ? std::log(p1[i]) : -800.0;
    m2.params().get("out.b").values[i] = p2[i] > 0 ? std::log(p2[i]) : -800.0;
  }
  const std::vector<const CaptionModel*> both = {&m1, &m2};
  const auto lp = ensemble_next_token(both, codes(), kEmb, {Vocabulary::kStart});
  CHECK(std::exp(lp[3]) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::exp(lp[4]) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ensemble rows are normalized and reduce to the member for N copies") {
  const auto a = model(4, 0.4), b = model(5, 0.4);
  const std::vector<const CaptionModel*> pair = {&a, &b}, single = {&a}, copies = {&a, &a, &a};
  const std::vector<std::size_t> prefix = {Vocabulary::kStart, 3, 4};
  const auto lp = ensemble_next_token(pair, codes(), kEmb, prefix);
  double mass = 0.0;
  for (double x : lp) mass += std::exp(x);
  CHECK(std::abs(mass - 1.0) < 1e-9);
  const auto ra = a.next_token_logprobs(codes(), kEmb, prefix), rb = b.next_token_logprobs(codes(), kEmb, prefix);
  for (std::size_t i = 0; i < lp.size(); ++i)
    CHECK(std::exp(lp[i]) == doctest::Approx(0.5 * (std::exp(ra[i]) + std::exp(rb[i]))).epsilon(1e-12));
  CHECK(ensemble_next_token(single, codes(), kEmb, prefix) == ra);
  CHECK(ensemble_next_token(copies, codes(), kEmb, prefix) == ra);
}

TEST_CASE("identical members and identical-ingredient soups are behaviorally byte-identical") {
  const auto a = model(6, 0.5);
  GenerationConfig cfg;
  cfg.max_len = 10;
  cfg.seed = 21;
  const auto ref = dump(generate_candidates(a, codes(), kEmb, cfg));
  const std::vector<const CaptionModel*> copies = {&a, &a, &a};
  CHECK(dump(ensemble_generate(copies, codes(), kEmb, cfg)) == ref);
  const std::vector<Checkpoint> same = {a.params(), a.params(), a.params()};
  const auto souped = CaptionModel::from_checkpoint(soup(same));
  CHECK(dump(generate_candidates(souped, codes(), kEmb, cfg)) == ref);
}

TEST_CASE("vocabulary mismatch is rejected") {
  const auto a = model(1, 0.1);
  CaptionerConfig cfg;
  cfg.hidden = 8;
  cfg.ff = 12;
  cfg.max_len = 10;
  cfg.mcm_stages = 1;
  const std::vector<std::string> caps = {"something else"};
  const auto b = CaptionModel::init(cfg, Vocabulary::build(caps), 2, 5, 3, 1);
  const std::vector<const CaptionModel*> pair = {&a, &b};
  CHECK_THROWS_AS(ensemble_next_token(pair, codes(), kEmb, {Vocabulary::kStart}), Error);
}
