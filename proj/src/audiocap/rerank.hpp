#pragma once

#include <functional>
#include <span>
#include <vector>

#include "decoding.hpp"
#include "embedder.hpp"

namespace audiocap {

struct RerankConfig {
  double w_enc = 0.7;
  double w_dec = 0.3;

  void validate() const;
};

/// Returns true when the candidate is fluent.
using FluencyPredicate = std::function<bool(const CaptionCandidate&)>;

/// Rule-based detector: rejects empty text, unterminated candidates, a repeated
/// word ("the the"), and any word 3-gram occurring twice or more.
bool rule_based_fluency(const CaptionCandidate& cand);

struct FluencySplit {
  std::vector<CaptionCandidate> kept;
  std::vector<CaptionCandidate> rejected;
};

/// Sets each candidate's `fluent` flag and partitions, preserving order.
FluencySplit fluency_filter(std::vector<CaptionCandidate> candidates,
                            const FluencyPredicate& is_fluent = rule_based_fluency);

struct RerankOutcome {
  std::vector<CaptionCandidate> candidates;  // input order, with scores
  std::size_t chosen = 0;
  bool fallback = false;  // every candidate was rejected
  const CaptionCandidate& selected() const { return candidates.at(chosen); }
};

/// Index of the best of `keep` given encoder scores and raw decoder scores
/// (loglik / token count). Decoder scores are min-max normalized over the kept
/// set; ties go to the higher loglik, then the lower index.
std::size_t select_scored(std::span<const double> enc, std::span<const double> raw_dec, std::span<const double> loglik,
                          const RerankConfig& cfg, std::vector<double>* dec_norm = nullptr,
                          std::vector<double>* final_scores = nullptr);

/// Filters, scores and selects with precomputed encoder scores per candidate.
RerankOutcome rerank_with_scores(std::vector<CaptionCandidate> candidates, std::span<const double> enc_scores,
                                 const RerankConfig& cfg, const FluencyPredicate& is_fluent = rule_based_fluency);

/// Full selection: enc_score = cos(audio_emb, embed_text(candidate)).
RerankOutcome rerank_select(std::vector<CaptionCandidate> candidates, std::span<const double> audio_emb,
                            const JointEmbedder& embedder, const RerankConfig& cfg,
                            const FluencyPredicate& is_fluent = rule_based_fluency);

}  // namespace audiocap
