#pragma once

#include <span>
#include <vector>

#include "captioner.hpp"
#include "decoding.hpp"
#include "tensor.hpp"

namespace audiocap {

/// Uniform elementwise mean of checkpoints sharing arch, attributes, names and
/// shapes. The result records the ingredient count in attrs["soup_sources"].
/// Exact for identical inputs and independent of input order.
Checkpoint soup(std::span<const Checkpoint> checkpoints);

/// Log of the uniform mean of the members' next-token probabilities.
std::vector<double> ensemble_next_token(std::span<const CaptionModel* const> models,
                                        std::span<const EncodedAudio> encoded, const std::vector<std::size_t>& prefix);
std::vector<double> ensemble_next_token(std::span<const CaptionModel* const> models, const CodeSequence& codes,
                                        std::span<const double> seq_emb, const std::vector<std::size_t>& prefix);

/// Candidate generation driven by the ensemble distribution.
std::vector<CaptionCandidate> ensemble_generate(std::span<const CaptionModel* const> models, const CodeSequence& codes,
                                                std::span<const double> seq_emb, const GenerationConfig& cfg);

}  // namespace audiocap
