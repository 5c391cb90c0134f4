#include "captioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace audiocap {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values) v = normal(rng, 0.0, scale);
  return t;
}

Tensor sinusoid_positions(std::size_t frames, std::size_t width) {
  Tensor pe = Tensor::matrix(frames, width);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(width));
      pe.at(t, i) = i % 2 == 0 ? std::sin(static_cast<double>(t) * rate) : std::cos(static_cast<double>(t) * rate);
    }
  return pe;
}

std::string stage_name(const char* base, std::size_t s) { return std::string(base) + "." + std::to_string(s); }

}  // namespace

MaskedCodes mcm_mask(const CodeSequence& codes, const McmConfig& cfg, std::size_t codebook_size, std::uint64_t seed) {
  require(cfg.mask_rate >= 0.0 && cfg.mask_rate <= 1.0, ErrorKind::InvalidArgument, "mask_rate must lie in [0, 1]");
  require(cfg.masked_stages >= 1, ErrorKind::InvalidArgument, "masked_stages must be at least 1");
  MaskedCodes out;
  out.codes = codes;
  const auto stages = std::min(static_cast<std::size_t>(cfg.masked_stages), codes.num_stages);
  Rng rng(seed);
  for (std::size_t t = 0; t < codes.num_frames; ++t) {
    if (!(uniform01(rng) < cfg.mask_rate)) continue;
    out.frames.push_back(t);
    for (std::size_t s = 0; s < stages; ++s) {
      out.targets.push_back({t, s, codes.at(t, s)});
      out.codes.at(t, s) = static_cast<std::uint16_t>(codebook_size);
    }
  }
  return out;
}

CaptionModel CaptionModel::init(const CaptionerConfig& cfg, Vocabulary vocab, std::size_t num_stages,
                                std::size_t codebook_size, std::size_t seq_dim, std::uint64_t seed) {
  require(cfg.hidden > 0 && cfg.ff > 0 && cfg.max_len >= 2 && cfg.mcm_stages >= 0, ErrorKind::InvalidArgument,
          "captioner dimensions must be positive and max_len >= 2");
  require(num_stages >= 1 && codebook_size >= 2 && codebook_size < 65535 && seq_dim >= 1, ErrorKind::InvalidArgument,
          "captioner needs K >= 1, 2 <= V < 65535 and a sequence embedding");
  Rng rng(seed);
  const auto h = static_cast<std::size_t>(cfg.hidden), f = static_cast<std::size_t>(cfg.ff);
  const double wh = 1.0 / std::sqrt(static_cast<double>(h));
  CaptionModel m;
  m.vocab_ = std::move(vocab);
  m.num_stages_ = num_stages;
  m.codebook_size_ = codebook_size;
  m.mcm_heads_ = std::min(static_cast<std::size_t>(cfg.mcm_stages), num_stages);
  m.max_len_ = static_cast<std::size_t>(cfg.max_len);
  m.hidden_ = h;
  const auto nv = m.vocab_.size();

  auto& p = m.params_;
  p.arch = kArch;
  p.attrs["vocab"] = m.vocab_.serialize();
  p.attrs["max_len"] = std::to_string(cfg.max_len);
  for (std::size_t s = 0; s < num_stages; ++s)
    p.add(stage_name("code.emb", s),
          random_matrix(codebook_size + 1, h, 1.0 / std::sqrt(static_cast<double>(num_stages)), rng));
  p.add("prefix.w", random_matrix(seq_dim, h, 1.0, rng));
  p.add("prefix.b", Tensor::zeros({h}));
  auto add_norm = [&](const std::string& name) {
    p.add(name + ".g", Tensor({h}, std::vector<double>(h, 1.0)));
    p.add(name + ".b", Tensor::zeros({h}));
  };
  auto add_attention = [&](const std::string& name) {
    for (const char* w : {".q", ".k", ".v", ".o"}) p.add(name + w, random_matrix(h, h, wh, rng));
  };
  auto add_ff = [&](const std::string& name) {
    p.add(name + ".w1", random_matrix(h, f, wh, rng));
    p.add(name + ".b1", Tensor::zeros({f}));
    p.add(name + ".w2", random_matrix(f, h, 1.0 / std::sqrt(static_cast<double>(f)), rng));
    p.add(name + ".b2", Tensor::zeros({h}));
  };
  add_norm("enc.ln1");
  add_attention("enc.attn");
  add_norm("enc.ln2");
  add_ff("enc.ff");
  add_norm("enc.lnf");
  p.add("dec.tok", random_matrix(nv, h, 0.5, rng));
  p.add("dec.pos", random_matrix(m.max_len_, h, 0.1, rng));
  add_norm("dec.ln1");
  add_attention("dec.self");
  add_norm("dec.ln2");
  add_attention("dec.cross");
  add_norm("dec.ln3");
  add_ff("dec.ff");
  add_norm("dec.lnf");
  p.add("out.w", Tensor::matrix(h, nv));
  p.add("out.b", Tensor::zeros({nv}));
  for (std::size_t s = 0; s < m.mcm_heads_; ++s) {
    p.add(stage_name("mcm", s) + ".w", random_matrix(h, codebook_size, wh, rng));
    p.add(stage_name("mcm", s) + ".b", Tensor::zeros({codebook_size}));
  }
  return m;
}

CaptionModel CaptionModel::from_checkpoint(Checkpoint ckpt) {
  require(ckpt.arch == kArch, ErrorKind::Contract, "checkpoint is not a captioner (arch '" + ckpt.arch + "')");
  CaptionModel m;
  m.vocab_ = Vocabulary::deserialize(ckpt.attr("vocab"));
  m.max_len_ = static_cast<std::size_t>(std::stoul(ckpt.attr("max_len")));
  while (ckpt.contains(stage_name("code.emb", m.num_stages_))) ++m.num_stages_;
  while (ckpt.contains(stage_name("mcm", m.mcm_heads_) + ".w")) ++m.mcm_heads_;
  require(m.num_stages_ >= 1, ErrorKind::Contract, "captioner checkpoint has no code embeddings");
  m.codebook_size_ = ckpt.get("code.emb.0").rows() - 1;
  m.hidden_ = ckpt.get("code.emb.0").cols();
  require(ckpt.get("out.w").cols() == m.vocab_.size(), ErrorKind::Contract,
          "captioner vocabulary does not match its output layer");
  require(ckpt.get("dec.pos").rows() == m.max_len_, ErrorKind::Contract, "captioner max_len does not match positions");
  m.params_ = std::move(ckpt);
  return m;
}

void CaptionModel::check_codes(const CodeSequence& codes, bool allow_mask) const {
  require(codes.num_stages == num_stages_, ErrorKind::Contract,
          "code sequence has " + std::to_string(codes.num_stages) + " stages, model expects " +
              std::to_string(num_stages_));
  require(codes.num_frames >= 1 && codes.codes.size() == codes.num_frames * codes.num_stages, ErrorKind::Contract,
          "code sequence is empty or malformed");
  const std::size_t limit = allow_mask ? codebook_size_ : codebook_size_ - 1;
  for (auto c : codes.codes)
    require(c <= limit, ErrorKind::Contract, "code " + std::to_string(c) + " out of range for the captioner");
}

Graph::Var CaptionModel::norm(Graph& g, Graph::Var x, const std::string& name) const {
  return g.add_row(g.mul_row(g.layer_norm(x), g.param(params_, name + ".g")), g.param(params_, name + ".b"));
}

Graph::Var CaptionModel::attention(Graph& g, Graph::Var queries, Graph::Var keys_values, const std::string& prefix,
                                   bool causal) const {
  auto q = g.matmul(queries, g.param(params_, prefix + ".q"));
  auto k = g.matmul(keys_values, g.param(params_, prefix + ".k"));
  auto v = g.matmul(keys_values, g.param(params_, prefix + ".v"));
  auto scores = g.scale(g.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(hidden_)));
  auto weights = g.softmax_rows(scores, causal);
  return g.matmul(g.matmul(weights, v), g.param(params_, prefix + ".o"));
}

Graph::Var CaptionModel::feed_forward(Graph& g, Graph::Var x, const std::string& prefix) const {
  auto h = g.tanh(g.add_row(g.matmul(x, g.param(params_, prefix + ".w1")), g.param(params_, prefix + ".b1")));
  return g.add_row(g.matmul(h, g.param(params_, prefix + ".w2")), g.param(params_, prefix + ".b2"));
}

Graph::Var CaptionModel::encoder(Graph& g, const CodeSequence& codes, std::span<const double> seq_emb) const {
  check_codes(codes, true);
  const auto seq_dim = params_.get("prefix.w").rows();
  require(seq_emb.size() == seq_dim, ErrorKind::Contract,
          "sequence embedding has dimension " + std::to_string(seq_emb.size()) + ", expected " +
              std::to_string(seq_dim));
  Graph::Var frames{};
  for (std::size_t s = 0; s < num_stages_; ++s) {
    std::vector<std::size_t> ids(codes.num_frames);
    for (std::size_t t = 0; t < codes.num_frames; ++t) ids[t] = codes.at(t, s);
    auto e = g.gather_rows(g.param(params_, stage_name("code.emb", s)), std::move(ids));
    frames = s == 0 ? e : g.add(frames, e);
  }
  frames = g.add(frames, g.constant(sinusoid_positions(codes.num_frames, hidden_)));
  auto seq = g.constant(Tensor({1, seq_dim}, std::vector<double>(seq_emb.begin(), seq_emb.end())));
  auto prefix = g.add_row(g.matmul(seq, g.param(params_, "prefix.w")), g.param(params_, "prefix.b"));
  auto x = g.concat_rows(prefix, frames);
  auto n1 = norm(g, x, "enc.ln1");
  x = g.add(x, attention(g, n1, n1, "enc.attn", false));
  x = g.add(x, feed_forward(g, norm(g, x, "enc.ln2"), "enc.ff"));
  return norm(g, x, "enc.lnf");
}

Graph::Var CaptionModel::decoder(Graph& g, Graph::Var encoder_states, const std::vector<std::size_t>& prefix) const {
  require(!prefix.empty() && prefix[0] == Vocabulary::kStart, ErrorKind::InvalidArgument,
          "decoder prefix must begin with the start token");
  require(prefix.size() <= max_len_, ErrorKind::InvalidArgument,
          "prefix of " + std::to_string(prefix.size()) + " tokens exceeds max length " + std::to_string(max_len_));
  for (auto id : prefix)
    require(id < vocab_.size(), ErrorKind::InvalidArgument, "out-of-vocabulary token id " + std::to_string(id));
  std::vector<std::size_t> positions(prefix.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  auto y = g.add(g.gather_rows(g.param(params_, "dec.tok"), prefix),
                 g.gather_rows(g.param(params_, "dec.pos"), std::move(positions)));
  auto n1 = norm(g, y, "dec.ln1");
  y = g.add(y, attention(g, n1, n1, "dec.self", true));
  y = g.add(y, attention(g, norm(g, y, "dec.ln2"), encoder_states, "dec.cross", false));
  y = g.add(y, feed_forward(g, norm(g, y, "dec.ln3"), "dec.ff"));
  auto logits = g.add_row(g.matmul(norm(g, y, "dec.lnf"), g.param(params_, "out.w")), g.param(params_, "out.b"));
  return g.log_softmax_rows(logits);
}

Graph::Var CaptionModel::mcm_logprobs(Graph& g, Graph::Var encoder_states, std::size_t stage,
                                      const std::vector<std::size_t>& frames) const {
  require(stage < mcm_heads_, ErrorKind::Contract, "no MCM head for stage " + std::to_string(stage));
  std::vector<std::size_t> rows(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) rows[i] = frames[i] + 1;  // row 0 is the prefix
  auto h = g.gather_rows(encoder_states, std::move(rows));
  const auto name = stage_name("mcm", stage);
  auto logits = g.add_row(g.matmul(h, g.param(params_, name + ".w")), g.param(params_, name + ".b"));
  return g.log_softmax_rows(logits);
}

EncodedAudio CaptionModel::encode(const CodeSequence& codes, std::span<const double> seq_emb) const {
  check_codes(codes, false);
  Graph g(false);
  return {g.value(encoder(g, codes, seq_emb))};
}

std::vector<double> CaptionModel::next_token_logprobs(const EncodedAudio& audio,
                                                      const std::vector<std::size_t>& prefix) const {
  Graph g(false);
  const auto& lp = g.value(decoder(g, g.constant(audio.states), prefix));
  const auto last = lp.rows() - 1;
  return std::vector<double>(lp.values.begin() + static_cast<std::ptrdiff_t>(last * lp.cols()), lp.values.end());
}

std::vector<double> CaptionModel::next_token_logprobs(const CodeSequence& codes, std::span<const double> seq_emb,
                                                      const std::vector<std::size_t>& prefix) const {
  return next_token_logprobs(encode(codes, seq_emb), prefix);
}

LogLikelihood CaptionModel::forward_loglik(const EncodedAudio& audio, const std::vector<std::size_t>& body) const {
  for (auto id : body)
    require(id < vocab_.size(), ErrorKind::InvalidArgument,
            "out-of-vocabulary token id " + std::to_string(id));
  std::vector<std::size_t> prefix{Vocabulary::kStart};
  prefix.insert(prefix.end(), body.begin(), body.end());
  Graph g(false);
  const auto& lp = g.value(decoder(g, g.constant(audio.states), prefix));
  LogLikelihood out;
  for (std::size_t i = 0; i <= body.size(); ++i) {
    const auto target = i < body.size() ? body[i] : Vocabulary::kEnd;
    out.per_token.push_back(lp.at(i, target));
    out.total += lp.at(i, target);
  }
  return out;
}

LogLikelihood CaptionModel::forward_loglik(const CodeSequence& codes, std::span<const double> seq_emb,
                                           const std::vector<std::size_t>& body) const {
  return forward_loglik(encode(codes, seq_emb), body);
}

Graph::Var caption_loss(Graph& g, const CaptionModel& model, const CaptionExample& ex,
                        const std::vector<std::size_t>& caption, const McmConfig& mcm, std::uint64_t mask_seed,
                        CaptionLossParts* parts) {
  std::vector<std::size_t> prefix{Vocabulary::kStart};
  prefix.insert(prefix.end(), caption.begin(), caption.end());
  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i <= caption.size(); ++i)
    cells.emplace_back(i, i < caption.size() ? caption[i] : Vocabulary::kEnd);
  const double n_tokens = static_cast<double>(cells.size());
  auto enc = model.encoder(g, ex.codes, ex.seq_emb);
  auto loss = g.scale(g.pick_sum(model.decoder(g, enc, prefix), std::move(cells)), -1.0 / n_tokens);
  if (parts) parts->ce_caption = g.scalar(loss);

  if (!mcm.enabled) return loss;
  auto masked = mcm_mask(ex.codes, mcm, model.codebook_size(), mask_seed);
  if (masked.targets.empty()) return loss;
  const auto stages = std::min(static_cast<std::size_t>(mcm.masked_stages), model.num_stages());
  require(stages <= model.mcm_heads(), ErrorKind::InvalidArgument,
          "masked_stages exceeds the model's MCM heads (" + std::to_string(model.mcm_heads()) + ")");
  auto enc_masked = model.encoder(g, masked.codes, ex.seq_emb);
  Graph::Var mcm_sum{};
  for (std::size_t s = 0; s < stages; ++s) {
    std::vector<std::pair<std::size_t, std::size_t>> picks;
    for (std::size_t r = 0; r < masked.frames.size(); ++r) picks.emplace_back(r, ex.codes.at(masked.frames[r], s));
    auto term = g.pick_sum(model.mcm_logprobs(g, enc_masked, s, masked.frames), std::move(picks));
    mcm_sum = s == 0 ? term : g.add(mcm_sum, term);
  }
  auto ce_mcm = g.scale(mcm_sum, -1.0 / static_cast<double>(masked.targets.size()));
  if (parts) {
    parts->ce_mcm = g.scalar(ce_mcm);
    parts->mcm_targets = masked.targets.size();
  }
  return g.add(loss, g.scale(ce_mcm, mcm.weight));
}

CaptionTrainConfig default_caption_schedule() {
  CaptionTrainConfig cfg;
  CaptionStageConfig pre;
  pre.name = "pretrain";
  pre.epochs = 20;
  pre.lr = 2e-3;
  pre.mcm.enabled = true;
  CaptionStageConfig fine;
  fine.name = "finetune";
  fine.epochs = 10;
  fine.lr = 1e-3;
  fine.mcm.enabled = false;
  cfg.stages = {pre, fine};
  return cfg;
}

double mean_val_loglik(const CaptionModel& model, std::span<const CaptionExample> val) {
  if (val.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : val) total += model.forward_loglik(ex.codes, ex.seq_emb, ex.captions.at(0)).total;
  return total / static_cast<double>(val.size());
}

std::pair<double, double> mcm_evaluate(const CaptionModel& model, std::span<const CaptionExample> data,
                                       const McmConfig& mcm, std::uint64_t seed) {
  const auto stages = std::min({static_cast<std::size_t>(mcm.masked_stages), model.num_stages(), model.mcm_heads()});
  double ce = 0.0, correct = 0.0, count = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& ex = data[i];
    auto masked = mcm_mask(ex.codes, mcm, model.codebook_size(), derive_seed(seed, i));
    if (masked.frames.empty()) continue;
    Graph g(false);
    auto enc = model.encoder(g, masked.codes, ex.seq_emb);
    for (std::size_t s = 0; s < stages; ++s) {
      const auto& lp = g.value(model.mcm_logprobs(g, enc, s, masked.frames));
      for (std::size_t r = 0; r < masked.frames.size(); ++r) {
        const auto target = ex.codes.at(masked.frames[r], s);
        ce -= lp.at(r, target);
        std::size_t best = 0;
        for (std::size_t c = 1; c < lp.cols(); ++c)
          if (lp.at(r, c) > lp.at(r, best)) best = c;
        correct += best == target ? 1.0 : 0.0;
        count += 1.0;
      }
    }
  }
  if (count == 0.0) return {0.0, 0.0};
  return {ce / count, correct / count};
}

CaptionTrainResult train_captioner_from(CaptionModel model, std::span<const CaptionExample> train,
                                        std::span<const CaptionExample> val, const CaptionTrainConfig& cfg,
                                        std::uint64_t seed) {
  require(!train.empty(), ErrorKind::Data, "train_captioner: empty training split");
  require(!val.empty(), ErrorKind::Data, "train_captioner: empty validation split");
  require(!cfg.stages.empty(), ErrorKind::InvalidArgument, "train_captioner: no training stages");
  for (const auto& st : cfg.stages) {
    require(st.epochs >= 1 && st.batch_size >= 1 && st.lr > 0.0, ErrorKind::InvalidArgument,
            "stage '" + st.name + "': epochs, batch_size and lr must be positive");
    if (st.mcm.enabled)
      require(std::isfinite(st.mcm.weight) && st.mcm.weight >= 0.0, ErrorKind::InvalidArgument,
              "stage '" + st.name + "': MCM enabled with a negative weight");
  }

  CaptionTrainResult result;
  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const auto& st = cfg.stages[si];
    const std::string tag = std::to_string(si) + ":" + st.name;
    Rng order_rng(derive_seed(seed, tag + "/order"));
    Rng caption_rng(derive_seed(seed, tag + "/captions"));
    const auto mask_base = derive_seed(seed, tag + "/mask");
    std::uint64_t mask_counter = 0;
    AdamState adam;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Checkpoint stage_best = model.params();
    double stage_best_val = -std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < st.epochs; ++epoch) {
      shuffle(order.begin(), order.end(), order_rng);
      double ce_cap = 0.0, ce_mcm = 0.0;
      std::size_t mcm_examples = 0;
      const auto bs = static_cast<std::size_t>(st.batch_size);
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const auto end = std::min(order.size(), start + bs);
        Checkpoint grads = model.params().zeros_like();
        for (std::size_t k = start; k < end; ++k) {
          const auto& ex = train[order[k]];
          const auto& caption = ex.captions[uniform_index(caption_rng, ex.captions.size())];
          Graph g;
          CaptionLossParts parts;
          auto loss = caption_loss(g, model, ex, caption, st.mcm, derive_seed(mask_base, mask_counter++), &parts);
          g.backward(loss, grads);
          ce_cap += parts.ce_caption;
          if (parts.mcm_targets > 0) {
            ce_mcm += parts.ce_mcm;
            ++mcm_examples;
          }
        }
        const double inv = 1.0 / static_cast<double>(end - start);
        for (auto& e : grads.entries())
          for (auto& v : e.second.values) v *= inv;
        optimizer_step(model.params(), grads, adam, st.lr);
      }
      const double vll = mean_val_loglik(model, val);
      require(std::isfinite(vll) && std::isfinite(ce_cap), ErrorKind::Numeric, "train_captioner: non-finite loss");
      nlohmann::json entry{{"stage", st.name},
                           {"epoch", epoch},
                           {"ce_caption", ce_cap / static_cast<double>(train.size())},
                           {"val_loglik", vll}};
      if (st.mcm.enabled) entry["ce_mcm"] = mcm_examples ? ce_mcm / static_cast<double>(mcm_examples) : 0.0;
      result.log.push_back(std::move(entry));
      if (vll > stage_best_val) {
        stage_best_val = vll;
        stage_best = model.params();
      }
    }
    model.params() = stage_best;
    result.best = stage_best;
    result.best_val_loglik = stage_best_val;
    if (st.mcm.enabled) {
      const auto [ce, acc] = mcm_evaluate(model, val, st.mcm, derive_seed(seed, tag + "/mcm-eval"));
      result.final_mcm_ce = ce;
      result.final_mcm_accuracy = acc;
    }
  }
  return result;
}

CaptionTrainResult train_captioner(std::span<const CaptionExample> train, std::span<const CaptionExample> val,
                                   const Vocabulary& vocab, std::size_t codebook_size, const CaptionTrainConfig& cfg,
                                   std::uint64_t seed) {
  require(!train.empty(), ErrorKind::Data, "train_captioner: empty training split");
  const auto& first = train[0];
  auto model = CaptionModel::init(cfg.model, vocab, first.codes.num_stages, codebook_size,
                                  first.seq_emb.size(), derive_seed(seed, "init"));
  return train_captioner_from(std::move(model), train, val, cfg, seed);
}

}  // namespace audiocap
