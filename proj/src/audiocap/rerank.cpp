#include "rerank.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "error.hpp"
#include "metrics.hpp"
#include "vocab.hpp"

namespace audiocap {

void RerankConfig::validate() const {
  require(std::isfinite(w_enc) && std::isfinite(w_dec) && w_enc >= 0.0 && w_dec >= 0.0, ErrorKind::InvalidArgument,
          "rerank weights must be finite and non-negative");
  require(std::abs(w_enc + w_dec - 1.0) < 1e-9, ErrorKind::InvalidArgument, "rerank weights must sum to 1");
}

bool rule_based_fluency(const CaptionCandidate& cand) {
  if (!cand.terminated) return false;
  const auto words = tokenize(cand.text);
  if (words.empty()) return false;
  for (std::size_t i = 1; i < words.size(); ++i)
    if (words[i] == words[i - 1]) return false;
  std::map<std::string, int> trigrams;
  for (std::size_t i = 0; i + 2 < words.size(); ++i)
    if (++trigrams[words[i] + ' ' + words[i + 1] + ' ' + words[i + 2]] >= 2) return false;
  return true;
}

FluencySplit fluency_filter(std::vector<CaptionCandidate> candidates, const FluencyPredicate& is_fluent) {
  FluencySplit out;
  for (auto& c : candidates) {
    c.fluent = is_fluent(c);
    (c.fluent ? out.kept : out.rejected).push_back(std::move(c));
  }
  return out;
}

std::size_t select_scored(std::span<const double> enc, std::span<const double> raw_dec, std::span<const double> loglik,
                          const RerankConfig& cfg, std::vector<double>* dec_norm, std::vector<double>* final_scores) {
  cfg.validate();
  const auto n = enc.size();
  require(n >= 1, ErrorKind::InvalidArgument, "rerank: no candidates");
  require(raw_dec.size() == n && loglik.size() == n, ErrorKind::InvalidArgument, "rerank: score lengths differ");
  const auto [lo, hi] = std::minmax_element(raw_dec.begin(), raw_dec.end());
  std::vector<double> dec(n), fin(n);
  for (std::size_t i = 0; i < n; ++i) {
    dec[i] = *hi > *lo ? (raw_dec[i] - *lo) / (*hi - *lo) : 0.5;
    fin[i] = cfg.w_enc * enc[i] + cfg.w_dec * dec[i];
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (fin[i] > fin[best] || (fin[i] == fin[best] && loglik[i] > loglik[best])) best = i;
  if (dec_norm) *dec_norm = std::move(dec);
  if (final_scores) *final_scores = std::move(fin);
  return best;
}

RerankOutcome rerank_with_scores(std::vector<CaptionCandidate> candidates, std::span<const double> enc_scores,
                                 const RerankConfig& cfg, const FluencyPredicate& is_fluent) {
  require(!candidates.empty(), ErrorKind::InvalidArgument, "rerank: empty candidate list");
  require(enc_scores.size() == candidates.size(), ErrorKind::InvalidArgument,
          "rerank: one encoder score per candidate required");
  cfg.validate();
  RerankOutcome out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& c = candidates[i];
    c.fluent = is_fluent(c);
    c.enc_score = enc_scores[i];
    c.dec_score = 0.0;
    c.final_score = 0.0;
    if (c.fluent) kept.push_back(i);
  }
  if (kept.empty()) {
    out.fallback = true;
    for (std::size_t i = 1; i < candidates.size(); ++i)
      if (candidates[i].loglik > candidates[out.chosen].loglik) out.chosen = i;
  } else {
    std::vector<double> enc, raw, ll, dec, fin;
    for (auto i : kept) {
      const auto& c = candidates[i];
      enc.push_back(c.enc_score);
      raw.push_back(c.loglik / static_cast<double>(std::max<std::size_t>(1, c.token_count())));
      ll.push_back(c.loglik);
    }
    const auto best = select_scored(enc, raw, ll, cfg, &dec, &fin);
    for (std::size_t k = 0; k < kept.size(); ++k) {
      candidates[kept[k]].dec_score = dec[k];
      candidates[kept[k]].final_score = fin[k];
    }
    out.chosen = kept[best];
  }
  out.candidates = std::move(candidates);
  return out;
}

RerankOutcome rerank_select(std::vector<CaptionCandidate> candidates, std::span<const double> audio_emb,
                            const JointEmbedder& embedder, const RerankConfig& cfg,
                            const FluencyPredicate& is_fluent) {
  require(!candidates.empty(), ErrorKind::InvalidArgument, "rerank: empty candidate list");
  std::vector<double> enc(candidates.size(), 0.0);
  std::map<std::string, double> cache;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!is_fluent(candidates[i])) continue;
    const auto& text = candidates[i].text;
    auto it = cache.find(text);
    if (it == cache.end()) it = cache.emplace(text, cosine(audio_emb, embedder.embed_text(text))).first;
    enc[i] = it->second;
  }
  return rerank_with_scores(std::move(candidates), enc, cfg, is_fluent);
}

}  // namespace audiocap
