#pragma once

#include <cstdint>
#include <string>

#include "captioner.hpp"
#include "decoding.hpp"
#include "embedder.hpp"
#include "rerank.hpp"
#include "synthdata.hpp"

namespace audiocap {

struct CodecSettings {
  int stages = 8;
  int codebook_size = 64;
  int iterations = 15;
  int max_train_frames = 20000;  // frames sampled from the training split
};

/// Everything a pipeline run needs. Loaded from an INI-style file:
///
///   [global]    seed, replica, out_dir, split
///   [synth]     train, val, test, clip_seconds, sample_rate, min_events, max_events
///   [codec]     stages, codebook_size, iterations, max_train_frames
///   [embedder]  dim, audio_hidden, text_width, text_hidden, epsilon, sinkhorn_iters,
///               sinkhorn_tol, epochs, batch_size, lr
///   [captioner] hidden, ff, max_len, mcm_stages
///   [captioner.pretrain], [captioner.finetune]
///               epochs, lr, batch_size, mcm, mask_rate, masked_stages, mcm_weight
///   [generation] top_p, temperature, num_candidates, max_len
///   [rerank]    w_enc, w_dec
///
/// A stage with epochs = 0 is skipped. `replica` separates independently seeded
/// runs (ensemble members) under one master seed.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::uint64_t replica = 0;
  std::string out_dir = "out";
  std::string split = "test";
  DatasetConfig synth;
  CodecSettings codec;
  EmbedderConfig embedder;
  CaptionTrainConfig captioner = default_caption_schedule();
  GenerationConfig generation;
  RerankConfig rerank;

  /// Sets one value; `key` is "section.name" (the last dot separates the name).
  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Seed for one pipeline stage, derived from the master seed and replica.
  std::uint64_t stage_seed(const std::string& stage) const;
};

PipelineConfig load_config(const std::string& path);
/// out_dir, placed under $AUDIOCAP_OUT_ROOT when relative and the variable is set.
std::string resolved_out_dir(const PipelineConfig& cfg);

}  // namespace audiocap
