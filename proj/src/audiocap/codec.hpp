#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"
#include "wav.hpp"

namespace audiocap {

/// Orthonormal DCT-II over one frame; inverse is the transpose.
class FrameTransform {
 public:
  explicit FrameTransform(std::size_t dim = 0);
  std::size_t dim() const { return dim_; }
  void forward(std::span<const double> in, std::span<double> out) const;
  void inverse(std::span<const double> in, std::span<double> out) const;

 private:
  std::size_t dim_;
  std::vector<double> basis_;  // dim x dim, row k = k-th basis function
};

/// Samples per frame for a 75 Hz code rate.
int codec_hop(int sample_rate);

/// T x K code matrix plus what decode needs to restore the exact length.
struct CodeSequence {
  int sample_rate = 0;
  int hop = 0;
  std::size_t num_samples = 0;
  std::size_t num_frames = 0;
  std::size_t num_stages = 0;
  std::vector<std::uint16_t> codes;  // row-major, frame-major

  std::uint16_t at(std::size_t t, std::size_t s) const { return codes[t * num_stages + s]; }
  std::uint16_t& at(std::size_t t, std::size_t s) { return codes[t * num_stages + s]; }
  bool operator==(const CodeSequence&) const = default;
};

// "ACCS" u32:version u32:sample_rate u32:hop u64:frames u32:stages u64:num_samples u16:code*
std::string serialize_codes(const CodeSequence& codes);
CodeSequence deserialize_codes(std::string_view bytes, const std::string& context = "codes");
void save_codes(const CodeSequence& codes, const std::string& path);
CodeSequence load_codes(const std::string& path);

class RvqCodec {
 public:
  RvqCodec() = default;
  RvqCodec(int sample_rate, std::vector<Tensor> codebooks);

  int sample_rate() const { return sample_rate_; }
  int hop() const { return static_cast<int>(transform_.dim()); }
  std::size_t dim() const { return transform_.dim(); }
  std::size_t num_stages() const { return codebooks_.size(); }
  std::size_t codebook_size() const { return codebooks_.empty() ? 0 : codebooks_[0].rows(); }
  const Tensor& codebook(std::size_t stage) const { return codebooks_.at(stage); }
  const FrameTransform& transform() const { return transform_; }

  /// Nearest entry of one stage (squared Euclidean; ties go to the lower index).
  std::size_t nearest(std::size_t stage, std::span<const double> residual) const;

  /// Quantizes one transformed frame through the first `stages` stages; the
  /// residual is updated in place. Returns the chosen codes.
  std::vector<std::uint16_t> quantize(std::span<double> residual, std::size_t stages) const;

  Checkpoint to_checkpoint() const;
  static RvqCodec from_checkpoint(const Checkpoint& ckpt);

 private:
  int sample_rate_ = 0;
  std::vector<Tensor> codebooks_;  // each V x D, row 0 is the zero vector
  FrameTransform transform_;
};

struct CodecTrainReport {
  /// Mean squared residual per dimension after each stage, on the training frames.
  std::vector<double> stage_distortion;
};

/// Stage-wise k-means on residuals; entry 0 of every codebook is pinned to zero.
RvqCodec train_codebooks(std::span<const std::vector<double>> frames, int num_stages, int codebook_size, int iters,
                         std::uint64_t seed, int sample_rate, CodecTrainReport* report = nullptr);

/// Transformed, zero-padded frames of a waveform.
std::vector<std::vector<double>> analysis_frames(const RvqCodec& codec, const Waveform& wav);
std::vector<std::vector<double>> analysis_frames(const FrameTransform& transform, std::span<const double> samples);

CodeSequence encode(const RvqCodec& codec, const Waveform& wav);
/// Uses the first `stages` stages (0 = all).
Waveform decode(const RvqCodec& codec, const CodeSequence& codes, std::size_t stages = 0);

/// Mean over frames of |residual after upto_stage stages|^2 / D; 0 for no frames.
double quantization_error(const RvqCodec& codec, std::span<const std::vector<double>> frames, std::size_t upto_stage);
/// |residual|^2 / D after each of the K stages, for one frame.
std::vector<double> residual_energies(const RvqCodec& codec, std::span<const double> frame);

}  // namespace audiocap
