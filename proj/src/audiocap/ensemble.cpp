#include "ensemble.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace audiocap {

namespace {

constexpr const char* kSoupSources = "soup_sources";

std::map<std::string, std::string> plain_attrs(const Checkpoint& c) {
  auto attrs = c.attrs;
  attrs.erase(kSoupSources);
  return attrs;
}

}  // namespace

Checkpoint soup(std::span<const Checkpoint> checkpoints) {
  require(!checkpoints.empty(), ErrorKind::InvalidArgument, "soup: no checkpoints");
  const auto& first = checkpoints[0];
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    const auto& c = checkpoints[i];
    require(c.arch == first.arch, ErrorKind::Contract,
            "soup: architecture mismatch ('" + c.arch + "' vs '" + first.arch + "')");
    require(plain_attrs(c) == plain_attrs(first), ErrorKind::Contract, "soup: checkpoint attributes differ");
    require(c.size() == first.size(), ErrorKind::Contract, "soup: parameter counts differ");
    for (std::size_t e = 0; e < c.size(); ++e) {
      const auto& [name, t] = c.entries()[e];
      const auto& [name0, t0] = first.entries()[e];
      require(name == name0, ErrorKind::Contract, "soup: parameter name mismatch ('" + name + "' vs '" + name0 + "')");
      require(t.shape == t0.shape, ErrorKind::Contract, "soup: shape mismatch for '" + name + "'");
    }
  }

  Checkpoint out = first;
  out.attrs[kSoupSources] = std::to_string(checkpoints.size());
  const double n = static_cast<double>(checkpoints.size());
  std::vector<double> column(checkpoints.size());
  for (std::size_t e = 0; e < out.size(); ++e) {
    auto& values = out.entries()[e].second.values;
    for (std::size_t k = 0; k < values.size(); ++k) {
      for (std::size_t i = 0; i < checkpoints.size(); ++i) column[i] = checkpoints[i].entries()[e].second.values[k];
      const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
      if (*lo == *hi) {
        values[k] = *lo;
        continue;
      }
      std::sort(column.begin(), column.end());
      double sum = 0.0;
      for (double v : column) sum += v;
      values[k] = sum / n;
    }
  }
  return out;
}

std::vector<double> ensemble_next_token(std::span<const CaptionModel* const> models,
                                        std::span<const EncodedAudio> encoded, const std::vector<std::size_t>& prefix) {
  require(!models.empty(), ErrorKind::InvalidArgument, "ensemble: no models");
  require(encoded.size() == models.size(), ErrorKind::InvalidArgument, "ensemble: one encoding per model required");
  for (const auto* m : models)
    require(m->vocab() == models[0]->vocab(), ErrorKind::Contract, "ensemble: vocabulary mismatch");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < models.size(); ++i) rows.push_back(models[i]->next_token_logprobs(encoded[i], prefix));
  if (rows.size() == 1) return rows[0];
  const double n = static_cast<double>(rows.size());
  std::vector<double> out(rows[0].size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    double peak = rows[0][v];
    for (const auto& r : rows) peak = std::max(peak, r[v]);
    double acc = 0.0;
    for (const auto& r : rows) acc += std::exp(r[v] - peak);
    out[v] = peak + std::log(acc / n);
  }
  return out;
}

std::vector<double> ensemble_next_token(std::span<const CaptionModel* const> models, const CodeSequence& codes,
                                        std::span<const double> seq_emb, const std::vector<std::size_t>& prefix) {
  std::vector<EncodedAudio> enc;
  for (const auto* m : models) enc.push_back(m->encode(codes, seq_emb));
  return ensemble_next_token(models, enc, prefix);
}

std::vector<CaptionCandidate> ensemble_generate(std::span<const CaptionModel* const> models, const CodeSequence& codes,
                                                std::span<const double> seq_emb, const GenerationConfig& cfg) {
  require(!models.empty(), ErrorKind::InvalidArgument, "ensemble: no models");
  for (const auto* m : models)
    require(static_cast<std::size_t>(cfg.max_len) <= m->max_len(), ErrorKind::InvalidArgument,
            "generation max_len exceeds a member's max length");
  std::vector<EncodedAudio> enc;
  for (const auto* m : models) enc.push_back(m->encode(codes, seq_emb));
  return generate_candidates(
      [&](const std::vector<std::size_t>& prefix) { return ensemble_next_token(models, enc, prefix); },
      models[0]->vocab(), cfg);
}

}  // namespace audiocap
