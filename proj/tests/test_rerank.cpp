#include <doctest.h>

#include <cmath>

#include "audiocap/error.hpp"
#include "audiocap/rerank.hpp"

using namespace audiocap;

namespace {

CaptionCandidate cand(const std::string& text, double loglik, bool terminated = true) {
  CaptionCandidate c;
  c.text = text;
  c.tokens.assign(tokenize(text).size(), 3);
  c.loglik = loglik;
  c.terminated = terminated;
  return c;
}

// Candidates whose raw decoder score (loglik / token_count) equals raw[i].
std::vector<CaptionCandidate> with_raw(const std::vector<double>& raw) {
  const std::vector<std::string> texts = {"a tone", "a chirp", "a click", "a burst", "a hum", "a buzz", "a beep"};
  std::vector<CaptionCandidate> out;
  for (std::size_t i = 0; i < raw.size(); ++i) out.push_back(cand(texts.at(i), raw[i] * 3.0));
  return out;
}

}  // namespace

TEST_CASE("defaults and validation") {
  RerankConfig cfg;
  CHECK(cfg.w_enc == 0.7);
  CHECK(cfg.w_dec == 0.3);
  cfg.w_enc = 0.8;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {-0.5, 1.5};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("fluency rules") {
  CHECK(rule_based_fluency(cand("a steady tone sounds", -3)));
  CHECK_FALSE(rule_based_fluency(cand("tone tone tone tone", -3)));
  CHECK_FALSE(rule_based_fluency(cand("a steady tone sounds", -3, false)));
  CHECK_FALSE(rule_based_fluency(cand("", -1)));
  CHECK_FALSE(rule_based_fluency(cand("a the the tone", -1)));
  CHECK_FALSE(rule_based_fluency(cand("a low tone and a low tone", -1)));
  CHECK(rule_based_fluency(cand("a low tone and a high tone", -1)));

  const auto split = fluency_filter({cand("a tone", -1), cand("tone tone", -1), cand("a chirp", -2)});
  REQUIRE(split.kept.size() == 2);
  REQUIRE(split.rejected.size() == 1);
  CHECK(split.kept[0].text == "a tone");
  CHECK(split.kept[1].text == "a chirp");
  CHECK(split.kept[0].fluent);
  CHECK_FALSE(split.rejected[0].fluent);

  const auto custom = fluency_filter({cand("a tone", -1), cand("a chirp", -1)},
                                     [](const CaptionCandidate& c) { return c.text == "a chirp"; });
  CHECK(custom.kept.size() == 1);
  CHECK(custom.kept[0].text == "a chirp");
}

TEST_CASE("hand-computed three-candidate example") {
  const std::vector<double> enc = {0.9, 0.5, 0.7};
  const auto out = rerank_with_scores(with_raw({-2.0, -1.0, -1.5}), enc, RerankConfig{});
  CHECK_FALSE(out.fallback);
  CHECK(out.chosen == 1);
  const std::vector<double> dec = {0.0, 1.0, 0.5}, fin = {0.63, 0.65, 0.64};
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.candidates[i].dec_score == doctest::Approx(dec[i]).epsilon(1e-12));
    CHECK(out.candidates[i].final_score == doctest::Approx(fin[i]).epsilon(1e-12));
    CHECK(out.candidates[i].enc_score == enc[i]);
  }
}

TEST_CASE("select_scored edge cases") {
  const std::vector<double> one = {0.1};
  CHECK(select_scored(one, std::vector<double>{-4.0}, std::vector<double>{-8.0}, RerankConfig{}) == 0);

  std::vector<double> dec;
  const std::vector<double> enc = {0.2, 0.2, 0.2};
  const std::vector<double> raw = {-1.0, -1.0, -1.0};
  CHECK(select_scored(enc, raw, std::vector<double>{-3.0, -2.0, -2.0}, RerankConfig{}, &dec) == 1);
  for (double d : dec) CHECK(d == 0.5);
  CHECK(select_scored(enc, raw, std::vector<double>{-2.0, -2.0, -2.0}, RerankConfig{}) == 0);
}

TEST_CASE("fallback when every candidate is rejected") {
  std::vector<CaptionCandidate> all_bad = {cand("tone tone", -5), cand("a chirp", -2, false), cand("", -1)};
  const auto out = rerank_with_scores(all_bad, std::vector<double>{0.9, 0.8, 0.7}, RerankConfig{});
  CHECK(out.fallback);
  CHECK(out.chosen == 2);
  CHECK_THROWS_AS(rerank_with_scores({}, std::vector<double>{}, RerankConfig{}), Error);
}

TEST_CASE("selection is invariant under positive affine rescaling of decoder scores") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 6);
    std::vector<double> raw(n), enc(n), scaled(n);
    for (std::size_t i = 0; i < n; ++i) {
      raw[i] = -uniform(rng, 0.5, 4.0);
      enc[i] = uniform(rng, -1.0, 1.0);
    }
    const double a = uniform(rng, 0.1, 10.0), b = uniform(rng, -3.0, 3.0);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = a * raw[i] + b;
    const auto base = rerank_with_scores(with_raw(raw), enc, RerankConfig{});
    const auto moved = rerank_with_scores(with_raw(scaled), enc, RerankConfig{});
    CHECK(base.chosen == moved.chosen);
    CHECK(base.chosen < n);
  }
}

TEST_CASE("w_dec = 0 picks the fluent candidate with the highest cosine") {
  const std::vector<std::string> caps = {"a low tone", "a rising chirp", "a burst of noise", "a click train"};
  std::vector<Waveform> waves = {Waveform{std::vector<double>(4000, 0.0), 16000}};
  for (std::size_t i = 0; i < 4000; ++i) waves[0].samples[i] = std::sin(0.05 * static_cast<double>(i));
  MelConfig mel;
  const auto [mean, sd] = feature_statistics(waves, mel);
  const auto embedder = JointEmbedder::init(EmbedderConfig{}, Vocabulary::build(caps), 16000, mean, sd, 9);
  const auto audio = embedder.embed_audio(waves[0]);

  std::vector<CaptionCandidate> cands;
  for (const auto& c : caps) cands.push_back(cand(c, -2.0 * static_cast<double>(cands.size() + 1)));
  cands.push_back(cand("a low low tone", 0.0));
  const auto out = rerank_select(cands, audio, embedder, RerankConfig{1.0, 0.0});
  std::size_t best = 0;
  for (std::size_t i = 1; i < caps.size(); ++i)
    if (cosine(audio, embedder.embed_text(caps[i])) > cosine(audio, embedder.embed_text(caps[best]))) best = i;
  CHECK(out.chosen == best);
  CHECK(out.selected().text == caps[best]);
  for (std::size_t i = 0; i < caps.size(); ++i)
    CHECK(out.candidates[i].enc_score == doctest::Approx(cosine(audio, embedder.embed_text(caps[i]))).epsilon(1e-12));

  // Any monotone rescaling of log-likelihoods leaves the choice unchanged.
  for (auto& c : cands) c.loglik = -std::exp(-c.loglik);
  CHECK(rerank_select(cands, audio, embedder, RerankConfig{1.0, 0.0}).chosen == best);

  const auto repeat = rerank_select(cands, audio, embedder, RerankConfig{});
  CHECK(rerank_select(cands, audio, embedder, RerankConfig{}).chosen == repeat.chosen);
}
