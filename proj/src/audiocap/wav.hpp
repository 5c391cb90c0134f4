#pragma once

#include <string>
#include <vector>

namespace audiocap {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 0;

  double duration_s() const { return sample_rate ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

/// RIFF PCM16 mono. Samples are clamped to [-1, 1] and rounded.
void write_wav(const std::string& path, const Waveform& wav);
/// Reads PCM16 files; multi-channel input is averaged down to mono.
Waveform read_wav(const std::string& path);

}  // namespace audiocap
