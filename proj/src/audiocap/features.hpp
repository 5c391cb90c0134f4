#pragma once

#include "tensor.hpp"
#include "wav.hpp"

namespace audiocap {

struct MelConfig {
  int n_fft = 1024;
  int hop = 0;  // 0: sample_rate / 50
  int n_mels = 64;
  double fmin = 20.0;
  double fmax = 0.0;  // 0: Nyquist
  double floor = 1e-6;
};

/// Scales a waveform so its peak magnitude is 1 (silence is left alone).
Waveform peak_normalize(const Waveform& wav);

/// Hann-windowed power spectrum through an HTK-style triangular mel
/// filterbank, then log(mel + floor). Returns frames x n_mels with
/// ceil(N / hop) frames (at least one).
Tensor log_mel(const Waveform& wav, const MelConfig& cfg = {});

}  // namespace audiocap
