#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autodiff.hpp"
#include "features.hpp"
#include "metrics.hpp"
#include "sinkhorn.hpp"
#include "synthdata.hpp"
#include "tensor.hpp"
#include "vocab.hpp"

namespace audiocap {

struct EmbedderConfig {
  int n_mels = 64;
  int audio_hidden = 64;
  int text_width = 32;
  int text_hidden = 64;
  int dim = 32;
  double epsilon = 0.05;
  int sinkhorn_iters = 500;
  double sinkhorn_tol = 1e-8;
  int epochs = 40;
  int batch_size = 32;
  double lr = 3e-3;
};

/// Audio tower (log-mel frames -> two tanh layers -> mean and max pools -> projection)
/// and text tower (token embeddings -> mean pool -> tanh layer -> projection),
/// both L2-normalised into one d-dimensional space.
///
/// Audio is peak-normalised before the log-mel front end and each mel bin is
/// standardised with training-set statistics stored alongside the weights.
/// Mean pooling makes the text tower blind to word order.
class JointEmbedder {
 public:
  static constexpr const char* kArch = "joint-embedder";

  static JointEmbedder init(const EmbedderConfig& cfg, Vocabulary vocab, int sample_rate, const Tensor& feat_mean,
                            const Tensor& feat_std, std::uint64_t seed);
  static JointEmbedder from_checkpoint(Checkpoint ckpt);

  const Checkpoint& params() const { return params_; }
  Checkpoint& params() { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t dim() const { return params_.get("audio.proj").cols(); }

  /// Standardised log-mel frames, the audio tower's input.
  Tensor audio_features(const Waveform& wav) const;
  std::vector<std::size_t> text_ids(const std::string& caption) const;

  /// 1 x d normalised embeddings inside a graph.
  Graph::Var audio_tower(Graph& g, const Tensor& features) const;
  Graph::Var text_tower(Graph& g, const std::vector<std::size_t>& ids) const;

  Embedding embed_features(const Tensor& features) const;
  Embedding embed_audio(const Waveform& wav) const;
  Embedding embed_text(const std::string& caption) const;

 private:
  JointEmbedder() = default;
  Checkpoint params_;
  Vocabulary vocab_;
  int sample_rate_ = 0;
  MelConfig mel_;
};

/// Per-bin mean and standard deviation of raw (peak-normalised) log-mel frames.
std::pair<Tensor, Tensor> feature_statistics(std::span<const Waveform> waves, const MelConfig& mel);

/// Graph node for mltm_loss over n x d audio and text rows.
Graph::Var mltm_loss_node(Graph& g, Graph::Var audio, Graph::Var text, const SinkhornOptions& opts);

struct EmbedderTrainResult {
  Checkpoint best;
  double best_val_map = 0.0;
  int best_epoch = -1;
  std::vector<nlohmann::json> log;  // one object per epoch: epoch, loss, val_map10
};

/// Similarity of first captions (queries) against clips (items) for one split.
/// A clip is relevant to a query when one of its captions equals the query text.
SimilarityMatrix embedder_similarity(const JointEmbedder& model, std::span<const Clip> clips);

/// Minibatch m-LTM training; keeps the checkpoint with the best validation mAP@10.
EmbedderTrainResult train_embedder(std::span<const Clip> train, std::span<const Clip> val, const EmbedderConfig& cfg,
                                   std::uint64_t seed);

}  // namespace audiocap
