#include "decoding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"

namespace audiocap {

void GenerationConfig::validate() const {
  require(top_p > 0.0 && top_p <= 1.0, ErrorKind::InvalidArgument, "top_p must lie in (0, 1]");
  require(temperature > 0.0 && std::isfinite(temperature), ErrorKind::InvalidArgument, "temperature must be positive");
  require(num_candidates >= 1, ErrorKind::InvalidArgument, "num_candidates must be at least 1");
  require(max_len >= 1, ErrorKind::InvalidArgument, "max_len must be at least 1");
}

std::vector<std::pair<std::size_t, double>> nucleus_distribution(const std::vector<double>& logprobs, double top_p,
                                                                 double temperature) {
  require(!logprobs.empty(), ErrorKind::InvalidArgument, "nucleus: empty distribution");
  require(top_p > 0.0 && top_p <= 1.0, ErrorKind::InvalidArgument, "nucleus: top_p must lie in (0, 1]");
  require(temperature > 0.0, ErrorKind::InvalidArgument, "nucleus: temperature must be positive");
  for (double l : logprobs) require(std::isfinite(l), ErrorKind::Numeric, "nucleus: non-finite log-probability");

  const double peak = *std::max_element(logprobs.begin(), logprobs.end());
  std::vector<std::pair<std::size_t, double>> probs(logprobs.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    probs[i] = {i, std::exp((logprobs[i] - peak) / temperature)};
    z += probs[i].second;
  }
  for (auto& p : probs) p.second /= z;
  std::stable_sort(probs.begin(), probs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < probs.size()) {
    mass += probs[keep++].second;
    if (mass >= top_p) break;
  }
  probs.resize(keep);
  for (auto& p : probs) p.second /= mass;
  return probs;
}

std::size_t nucleus_step(const std::vector<double>& logprobs, double top_p, double temperature, Rng& rng) {
  const auto dist = nucleus_distribution(logprobs, top_p, temperature);
  const double u = uniform01(rng);
  double cum = 0.0;
  for (const auto& [id, p] : dist) {
    cum += p;
    if (u < cum) return id;
  }
  return dist.back().first;
}

std::vector<CaptionCandidate> generate_candidates(const NextTokenFn& next, const Vocabulary& vocab,
                                                  const GenerationConfig& cfg) {
  cfg.validate();
  std::vector<CaptionCandidate> out;
  out.reserve(static_cast<std::size_t>(cfg.num_candidates));
  for (int c = 0; c < cfg.num_candidates; ++c) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(c)));
    CaptionCandidate cand;
    std::vector<std::size_t> prefix{Vocabulary::kStart};
    for (int step = 0; step < cfg.max_len; ++step) {
      const auto lp = next(prefix);
      require(lp.size() == vocab.size(), ErrorKind::Contract, "next-token row does not match the vocabulary");
      const auto id = nucleus_step(lp, cfg.top_p, cfg.temperature, rng);
      cand.loglik += lp[id];
      if (id == Vocabulary::kEnd) {
        cand.terminated = true;
        break;
      }
      cand.tokens.push_back(id);
      prefix.push_back(id);
    }
    cand.text = vocab.decode(cand.tokens);
    out.push_back(std::move(cand));
  }
  return out;
}

std::vector<CaptionCandidate> generate_candidates(const CaptionModel& model, const CodeSequence& codes,
                                                  std::span<const double> seq_emb, const GenerationConfig& cfg) {
  require(static_cast<std::size_t>(cfg.max_len) <= model.max_len(), ErrorKind::InvalidArgument,
          "generation max_len exceeds the model's max length");
  const auto audio = model.encode(codes, seq_emb);
  return generate_candidates([&](const std::vector<std::size_t>& prefix) { return model.next_token_logprobs(audio, prefix); },
                             model.vocab(), cfg);
}

}  // namespace audiocap
