#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "audiocap/captioner.hpp"
#include "audiocap/error.hpp"
#include "audiocap/gradcheck.hpp"
#include "audiocap/rng.hpp"

using namespace audiocap;

namespace {

CodeSequence random_codes(std::size_t frames, std::size_t stages, std::size_t v, Rng& rng) {
  CodeSequence c;
  c.sample_rate = 24000;
  c.hop = 320;
  c.num_frames = frames;
  c.num_stages = stages;
  c.num_samples = frames * 320;
  c.codes.resize(frames * stages);
  for (auto& x : c.codes) x = static_cast<std::uint16_t>(uniform_index(rng, v));
  return c;
}

const std::vector<std::string> kCaptions = {"a low tone", "a rising chirp then silence", "a burst of noise",
                                            "a click train"};

Vocabulary test_vocab() { return Vocabulary::build(kCaptions); }

// Each clip repeats one class-specific frame pattern with a little noise.
std::vector<CaptionExample> class_examples(std::size_t n, std::size_t v, const Vocabulary& vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<CaptionExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = uniform_index(rng, kCaptions.size());
    CaptionExample ex;
    ex.id = "ex" + std::to_string(i);
    ex.codes = random_codes(6, 3, v, rng);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t s = 0; s < 3; ++s)
        if (!bernoulli(rng, 0.1)) ex.codes.at(t, s) = static_cast<std::uint16_t>((cls * 3 + s) % v);
    ex.seq_emb.assign(4, 0.0);
    ex.seq_emb[cls] = 1.0;
    ex.captions = {vocab.encode(kCaptions[cls])};
    out.push_back(std::move(ex));
  }
  return out;
}

CaptionModel small_model(std::size_t v = 8, std::uint64_t seed = 1) {
  CaptionerConfig cfg;
  cfg.hidden = 8;
  cfg.ff = 12;
  cfg.max_len = 10;
  cfg.mcm_stages = 2;
  return CaptionModel::init(cfg, test_vocab(), 3, v, 4, seed);
}

void randomize(Checkpoint& ckpt, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& e : ckpt.entries())
    for (auto& x : e.second.values) x += normal(rng, 0.0, scale);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST_CASE("mcm_mask: rate 0 and rate 1") {
  Rng rng(1);
  const auto codes = random_codes(10, 6, 16, rng);
  McmConfig cfg;
  cfg.mask_rate = 0.0;
  const auto none = mcm_mask(codes, cfg, 16, 3);
  CHECK(none.targets.empty());
  CHECK(none.codes == codes);

  cfg.mask_rate = 1.0;
  cfg.masked_stages = 4;
  const auto all = mcm_mask(codes, cfg, 16, 3);
  CHECK(all.frames.size() == 10);
  CHECK(all.targets.size() == 40);
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t s = 0; s < 6; ++s) CHECK(all.codes.at(t, s) == (s < 4 ? 16 : codes.at(t, s)));
  for (const auto& tg : all.targets) CHECK(tg.code == codes.at(tg.frame, tg.stage));

  cfg.masked_stages = 9;
  CHECK(mcm_mask(codes, cfg, 16, 3).targets.size() == 60);
  cfg.mask_rate = 1.5;
  CHECK_THROWS_AS(mcm_mask(codes, cfg, 16, 3), Error);
}

TEST_CASE("mcm_mask: T=75, rate 0.15, seed 11 matches a rerun of the seeded sampler") {
  Rng rng(2);
  const auto codes = random_codes(75, 8, 64, rng);
  McmConfig cfg;
  const auto masked = mcm_mask(codes, cfg, 64, 11);
  Rng oracle(11);
  std::vector<std::size_t> frames;
  for (std::size_t t = 0; t < 75; ++t)
    if (static_cast<double>(oracle() >> 11) * 0x1.0p-53 < 0.15) frames.push_back(t);
  CHECK(masked.frames == frames);
  CHECK(masked.targets.size() == frames.size() * 4);
  CHECK(mcm_mask(codes, cfg, 64, 11).codes == masked.codes);
}

TEST_CASE("zero-initialised output layer gives a uniform next-token distribution") {
  const auto model = small_model();
  Rng rng(3);
  const auto codes = random_codes(5, 3, 8, rng);
  const std::vector<double> emb = {0.3, -0.1, 0.5, 0.2};
  const auto lp = model.next_token_logprobs(codes, emb, {Vocabulary::kStart});
  REQUIRE(lp.size() == model.vocab().size());
  for (double x : lp) CHECK(x == doctest::Approx(-std::log(static_cast<double>(lp.size()))).epsilon(1e-12));
}

TEST_CASE("forward_loglik properties and replay through next_token_logprobs") {
  auto model = small_model();
  randomize(model.params(), 4, 0.3);
  Rng rng(5);
  const auto codes = random_codes(4, 3, 8, rng);
  const std::vector<double> emb = {0.1, 0.2, -0.4, 0.9};
  const auto audio = model.encode(codes, emb);

  const auto empty = model.forward_loglik(audio, {});
  REQUIRE(empty.per_token.size() == 1);
  CHECK(std::isfinite(empty.total));
  CHECK(empty.total == model.next_token_logprobs(audio, {Vocabulary::kStart})[Vocabulary::kEnd]);

  const auto body = model.vocab().encode("a rising chirp then silence");
  const auto ll = model.forward_loglik(audio, body);
  CHECK(ll.total <= 0.0);
  REQUIRE(ll.per_token.size() == body.size() + 1);
  double sum = 0.0;
  for (double x : ll.per_token) sum += x;
  CHECK(std::abs(sum - ll.total) < 1e-9);
  CHECK(model.forward_loglik(codes, emb, body).total == ll.total);

  std::vector<std::size_t> prefix{Vocabulary::kStart};
  for (std::size_t i = 0; i <= body.size(); ++i) {
    const auto row = model.next_token_logprobs(audio, prefix);
    double mass = 0.0;
    for (double x : row) mass += std::exp(x);
    CHECK(std::abs(mass - 1.0) < 1e-6);
    const auto next = i < body.size() ? body[i] : Vocabulary::kEnd;
    CHECK(std::abs(row[next] - ll.per_token[i]) < 1e-12);
    prefix.push_back(next);
  }
}

TEST_CASE("caption model errors") {
  const auto model = small_model();
  Rng rng(6);
  const auto codes = random_codes(4, 3, 8, rng);
  const std::vector<double> emb = {0, 0, 0, 1};
  CHECK_THROWS_AS(model.forward_loglik(codes, emb, {model.vocab().size()}), Error);
  std::vector<std::size_t> long_prefix(model.max_len() + 1, Vocabulary::kStart);
  CHECK_THROWS_AS(model.next_token_logprobs(codes, emb, long_prefix), Error);
  auto bad = codes;
  bad.codes[0] = 9;
  CHECK_THROWS_AS(model.encode(bad, emb), Error);
  bad.codes[0] = 8;  // mask token is only legal inside MCM
  CHECK_THROWS_AS(model.encode(bad, emb), Error);
  CHECK_THROWS_AS(model.encode(codes, std::vector<double>{1.0}), Error);
}

TEST_CASE("caption loss with MCM matches central differences (2 frames, 3 tokens)") {
  auto model = small_model();
  randomize(model.params(), 7, 0.2);
  Rng rng(8);
  CaptionExample ex;
  ex.codes = random_codes(2, 3, 8, rng);
  ex.seq_emb = {0.5, -0.2, 0.1, 0.3};
  const auto caption = model.vocab().encode("a low tone");
  REQUIRE(caption.size() == 3);
  McmConfig mcm;
  mcm.mask_rate = 1.0;
  mcm.masked_stages = 2;
  mcm.weight = 0.3;
  const Checkpoint base = model.params();
  ScalarFn f = [&](const Tensor& x, Tensor* grad) {
    CaptionModel m = model;
    unflatten(x, m.params());
    Graph g;
    CaptionLossParts parts;
    auto loss = caption_loss(g, m, ex, caption, mcm, 99, &parts);
    if (grad) {
      Checkpoint grads = m.params().zeros_like();
      g.backward(loss, grads);
      *grad = flatten(grads);
    }
    return g.scalar(loss);
  };
  CHECK(grad_check(f, flatten(base), 1e-6) < 1e-4);
}

TEST_CASE("caption loss parts: MCM term present only when enabled") {
  auto model = small_model();
  Rng rng(9);
  CaptionExample ex;
  ex.codes = random_codes(5, 3, 8, rng);
  ex.seq_emb = {1, 0, 0, 0};
  const auto caption = model.vocab().encode("a click train");
  McmConfig mcm;
  mcm.mask_rate = 1.0;
  mcm.masked_stages = 2;
  Graph g1;
  CaptionLossParts on;
  const double l_on = g1.scalar(caption_loss(g1, model, ex, caption, mcm, 1, &on));
  CHECK(on.mcm_targets == 10);
  CHECK(on.ce_mcm == doctest::Approx(std::log(8.0)).epsilon(0.5));
  CHECK(l_on == doctest::Approx(on.ce_caption + 0.3 * on.ce_mcm).epsilon(1e-12));
  mcm.enabled = false;
  Graph g2;
  CaptionLossParts off;
  const double l_off = g2.scalar(caption_loss(g2, model, ex, caption, mcm, 1, &off));
  CHECK(off.mcm_targets == 0);
  CHECK(l_off == off.ce_caption);
  CHECK(off.ce_caption == doctest::Approx(std::log(static_cast<double>(model.vocab().size()))).epsilon(1e-12));
}

TEST_CASE("weight 0 with MCM on follows the same trajectory as MCM off") {
  const auto vocab = test_vocab();
  const auto train = class_examples(6, 8, vocab, 10);
  const auto val = class_examples(3, 8, vocab, 11);
  CaptionTrainConfig cfg;
  cfg.model = {8, 12, 10, 2};
  CaptionStageConfig st;
  st.epochs = 2;
  st.batch_size = 3;
  st.mcm.weight = 0.0;
  st.mcm.masked_stages = 2;
  cfg.stages = {st};
  const auto with = train_captioner(train, val, vocab, 8, cfg, 4);
  cfg.stages[0].mcm.enabled = false;
  const auto without = train_captioner(train, val, vocab, 8, cfg, 4);
  CHECK(with.best == without.best);
  REQUIRE(with.log.size() == without.log.size());
  for (std::size_t i = 0; i < with.log.size(); ++i) {
    CHECK(with.log[i]["ce_caption"] == without.log[i]["ce_caption"]);
    CHECK(with.log[i]["val_loglik"] == without.log[i]["val_loglik"]);
    CHECK(with.log[i].contains("ce_mcm"));
    CHECK_FALSE(without.log[i].contains("ce_mcm"));
  }
  cfg.stages[0].mcm.enabled = true;
  cfg.stages[0].mcm.weight = -0.1;
  CHECK_THROWS_AS(train_captioner(train, val, vocab, 8, cfg, 4), Error);
}

TEST_CASE("two-stage training: finetune logs omit MCM, likelihood rises, MCM beats chance") {
  const auto vocab = test_vocab();
  const std::size_t v = 8;
  const auto train = class_examples(40, v, vocab, 20);
  const auto val = class_examples(12, v, vocab, 21);
  CaptionTrainConfig cfg = default_caption_schedule();
  cfg.model = {16, 32, 10, 2};
  cfg.stages[0].epochs = 8;
  cfg.stages[0].mcm.masked_stages = 2;
  cfg.stages[0].mcm.mask_rate = 0.3;
  cfg.stages[1].epochs = 3;

  const auto init = CaptionModel::init(cfg.model, vocab, 3, v, 4, derive_seed(7, "init"));
  std::vector<double> before;
  for (const auto& ex : val) before.push_back(init.forward_loglik(ex.codes, ex.seq_emb, ex.captions[0]).total);

  const auto result = train_captioner(train, val, vocab, v, cfg, 7);
  REQUIRE(result.log.size() == 11);
  for (const auto& e : result.log) {
    if (e["stage"] == "finetune")
      CHECK_FALSE(e.contains("ce_mcm"));
    else
      CHECK(e.contains("ce_mcm"));
  }
  const auto model = CaptionModel::from_checkpoint(result.best);
  std::vector<double> after;
  for (const auto& ex : val) after.push_back(model.forward_loglik(ex.codes, ex.seq_emb, ex.captions[0]).total);
  CHECK(median(after) > median(before));
  CHECK(result.log.back()["val_loglik"].get<double>() > result.log.front()["val_loglik"].get<double>());
  CHECK(result.final_mcm_ce < std::log(static_cast<double>(v)));
  CHECK(result.final_mcm_accuracy > 1.0 / static_cast<double>(v));

  const auto again = train_captioner(train, val, vocab, v, cfg, 7);
  CHECK(serialize_checkpoint(again.best) == serialize_checkpoint(result.best));
}
