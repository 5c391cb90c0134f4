#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autodiff.hpp"
#include "codec.hpp"
#include "metrics.hpp"
#include "tensor.hpp"
#include "vocab.hpp"

namespace audiocap {

struct CaptionerConfig {
  int hidden = 32;
  int ff = 64;
  int max_len = 24;     // generated tokens, end token included
  int mcm_stages = 4;   // MCM classifier heads (capped at K)
};

struct McmConfig {
  bool enabled = true;
  double mask_rate = 0.15;
  int masked_stages = 4;
  double weight = 0.3;
};

struct McmTarget {
  std::size_t frame = 0;
  std::size_t stage = 0;
  std::uint16_t code = 0;
};

struct MaskedCodes {
  CodeSequence codes;  // masked positions hold the mask token V
  std::vector<std::size_t> frames;
  std::vector<McmTarget> targets;
};

/// Masks whole frames independently with probability mask_rate; a masked frame
/// gets the mask token in stages 1..min(masked_stages, K). One uniform draw per
/// frame, in frame order.
MaskedCodes mcm_mask(const CodeSequence& codes, const McmConfig& cfg, std::size_t codebook_size, std::uint64_t seed);

struct LogLikelihood {
  double total = 0.0;
  std::vector<double> per_token;  // body tokens, then the end token
};

/// Encoder output for one clip, reusable across decoding steps.
struct EncodedAudio {
  Tensor states;  // (T + 1) x hidden; row 0 is the sequence-level prefix
};

/// Encoder-decoder caption model over codec frames.
///
/// Encoder input: one prefix row projected from the sequence-level embedding,
/// then one row per frame holding the sum of K per-stage code embeddings plus a
/// sinusoidal position code. One pre-norm self-attention block.
/// Decoder: token + learned position embeddings, one pre-norm block with causal
/// self-attention and cross-attention to the encoder, zero-initialised output
/// projection over the caption vocabulary.
class CaptionModel {
 public:
  static constexpr const char* kArch = "codec-captioner";

  static CaptionModel init(const CaptionerConfig& cfg, Vocabulary vocab, std::size_t num_stages,
                           std::size_t codebook_size, std::size_t seq_dim, std::uint64_t seed);
  static CaptionModel from_checkpoint(Checkpoint ckpt);

  const Checkpoint& params() const { return params_; }
  Checkpoint& params() { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t num_stages() const { return num_stages_; }
  std::size_t codebook_size() const { return codebook_size_; }
  std::size_t mcm_heads() const { return mcm_heads_; }
  std::size_t max_len() const { return max_len_; }
  std::size_t hidden() const { return hidden_; }

  /// Codes may contain the mask token V.
  Graph::Var encoder(Graph& g, const CodeSequence& codes, std::span<const double> seq_emb) const;
  /// L x |vocab| log-probabilities for predicting the token after each prefix position.
  Graph::Var decoder(Graph& g, Graph::Var encoder_states, const std::vector<std::size_t>& prefix) const;
  /// Log-probabilities over codes for the masked-stage heads, rows = frames.
  Graph::Var mcm_logprobs(Graph& g, Graph::Var encoder_states, std::size_t stage,
                          const std::vector<std::size_t>& frames) const;

  EncodedAudio encode(const CodeSequence& codes, std::span<const double> seq_emb) const;
  std::vector<double> next_token_logprobs(const EncodedAudio& audio, const std::vector<std::size_t>& prefix) const;
  std::vector<double> next_token_logprobs(const CodeSequence& codes, std::span<const double> seq_emb,
                                          const std::vector<std::size_t>& prefix) const;

  /// Teacher-forced log-likelihood of start + body + end.
  LogLikelihood forward_loglik(const EncodedAudio& audio, const std::vector<std::size_t>& body) const;
  LogLikelihood forward_loglik(const CodeSequence& codes, std::span<const double> seq_emb,
                               const std::vector<std::size_t>& body) const;

  void check_codes(const CodeSequence& codes, bool allow_mask) const;

 private:
  CaptionModel() = default;
  Graph::Var attention(Graph& g, Graph::Var queries, Graph::Var keys_values, const std::string& prefix,
                       bool causal) const;
  Graph::Var norm(Graph& g, Graph::Var x, const std::string& name) const;
  Graph::Var feed_forward(Graph& g, Graph::Var x, const std::string& prefix) const;

  Checkpoint params_;
  Vocabulary vocab_;
  std::size_t num_stages_ = 0;
  std::size_t codebook_size_ = 0;
  std::size_t mcm_heads_ = 0;
  std::size_t max_len_ = 0;
  std::size_t hidden_ = 0;
};

/// One training example: codes, sequence-level embedding and caption token ids (body only).
struct CaptionExample {
  std::string id;
  CodeSequence codes;
  Embedding seq_emb;
  std::vector<std::vector<std::size_t>> captions;
};

struct CaptionLossParts {
  double ce_caption = 0.0;
  double ce_mcm = 0.0;
  std::size_t mcm_targets = 0;
};

/// Adds one example's loss (mean token CE + weight * mean masked-code CE) to
/// the graph and returns the scalar node. The caption term sees unmasked codes;
/// the MCM term runs a separate encoder pass over the masked copy.
Graph::Var caption_loss(Graph& g, const CaptionModel& model, const CaptionExample& ex,
                        const std::vector<std::size_t>& caption, const McmConfig& mcm, std::uint64_t mask_seed,
                        CaptionLossParts* parts = nullptr);

struct CaptionStageConfig {
  std::string name = "pretrain";
  int epochs = 20;
  double lr = 2e-3;
  int batch_size = 8;
  McmConfig mcm;
};

struct CaptionTrainConfig {
  CaptionerConfig model;
  std::vector<CaptionStageConfig> stages;
};

/// Two-stage default: pretrain with MCM, then finetune without it.
CaptionTrainConfig default_caption_schedule();

struct CaptionTrainResult {
  Checkpoint best;
  double best_val_loglik = 0.0;
  std::vector<nlohmann::json> log;  // stage, epoch, ce_caption, [ce_mcm], val_loglik
  double final_mcm_ce = 0.0;        // masked-code CE on validation after the last MCM stage
  double final_mcm_accuracy = 0.0;
};

/// Mean teacher-forced log-likelihood of each example's first caption.
double mean_val_loglik(const CaptionModel& model, std::span<const CaptionExample> val);
/// Masked-code cross-entropy and accuracy on a split, with a fixed mask seed.
std::pair<double, double> mcm_evaluate(const CaptionModel& model, std::span<const CaptionExample> data,
                                       const McmConfig& mcm, std::uint64_t seed);

CaptionTrainResult train_captioner(std::span<const CaptionExample> train, std::span<const CaptionExample> val,
                                   const Vocabulary& vocab, std::size_t codebook_size, const CaptionTrainConfig& cfg,
                                   std::uint64_t seed);

/// Runs the stages starting from an existing model (used by train_captioner and tests).
CaptionTrainResult train_captioner_from(CaptionModel model, std::span<const CaptionExample> train,
                                        std::span<const CaptionExample> val, const CaptionTrainConfig& cfg,
                                        std::uint64_t seed);

}  // namespace audiocap
