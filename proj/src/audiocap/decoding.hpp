#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "captioner.hpp"
#include "rng.hpp"

namespace audiocap {

struct GenerationConfig {
  double top_p = 0.95;
  double temperature = 0.5;
  int num_candidates = 30;
  int max_len = 24;  // generated tokens, end token included
  std::uint64_t seed = 0;

  void validate() const;
};

/// A generated caption. `tokens` excludes the start and end markers; `loglik`
/// is the untempered model log-likelihood of tokens plus the end token when
/// `terminated`. Rerank fields are filled by the rerank module.
struct CaptionCandidate {
  std::string text;
  std::vector<std::size_t> tokens;
  double loglik = 0.0;
  bool terminated = false;
  bool fluent = false;
  double enc_score = 0.0;
  double dec_score = 0.0;
  double final_score = 0.0;  // meaningful only when fluent

  /// Scored positions: body tokens plus the end token when terminated.
  std::size_t token_count() const { return tokens.size() + (terminated ? 1 : 0); }
};

/// Log-probabilities over the vocabulary for the token after `prefix`.
using NextTokenFn = std::function<std::vector<double>(const std::vector<std::size_t>& prefix)>;

/// Temperature-scaled, top-p truncated distribution as (token id, probability)
/// pairs, most probable first (ties to the lower id).
std::vector<std::pair<std::size_t, double>> nucleus_distribution(const std::vector<double>& logprobs, double top_p,
                                                                 double temperature);
std::size_t nucleus_step(const std::vector<double>& logprobs, double top_p, double temperature, Rng& rng);

/// Samples num_candidates captions; candidate c uses its own stream derived from (seed, c).
std::vector<CaptionCandidate> generate_candidates(const NextTokenFn& next, const Vocabulary& vocab,
                                                  const GenerationConfig& cfg);
std::vector<CaptionCandidate> generate_candidates(const CaptionModel& model, const CodeSequence& codes,
                                                  std::span<const double> seq_emb, const GenerationConfig& cfg);

}  // namespace audiocap
