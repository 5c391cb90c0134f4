#include "features.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "error.hpp"

namespace audiocap {

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

Waveform peak_normalize(const Waveform& wav) {
  double peak = 0.0;
  for (double v : wav.samples) peak = std::max(peak, std::abs(v));
  Waveform out = wav;
  if (peak > 0.0)
    for (double& v : out.samples) v /= peak;
  return out;
}

Tensor log_mel(const Waveform& wav, const MelConfig& cfg) {
  require(!wav.samples.empty(), ErrorKind::InvalidArgument, "log_mel: empty waveform");
  require(wav.sample_rate > 0, ErrorKind::InvalidArgument, "log_mel: bad sample rate");
  const int n_fft = cfg.n_fft;
  const int hop = cfg.hop > 0 ? cfg.hop : wav.sample_rate / 50;
  const double fmax = cfg.fmax > 0.0 ? cfg.fmax : wav.sample_rate / 2.0;
  const int bins = n_fft / 2 + 1;
  const auto n = wav.samples.size();
  const std::size_t frames = std::max<std::size_t>(1, (n + static_cast<std::size_t>(hop) - 1) / static_cast<std::size_t>(hop));

  // Triangular filters.
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  const double mlo = hz_to_mel(cfg.fmin), mhi = hz_to_mel(fmax);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / static_cast<double>(edges.size() - 1));
  std::vector<double> fbank(static_cast<std::size_t>(cfg.n_mels) * bins, 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * wav.sample_rate / n_fft;
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fbank[static_cast<std::size_t>(m) * bins + k] = w;
    }
  }
  std::vector<double> window(static_cast<std::size_t>(n_fft));
  for (int i = 0; i < n_fft; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n_fft);

  std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * n_fft)));
  std::unique_ptr<fftw_complex, FftwFree> out(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n_fft, in.get(), out.get(), FFTW_ESTIMATE);
  }

  Tensor result = Tensor::matrix(frames, static_cast<std::size_t>(cfg.n_mels));
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t begin = t * static_cast<std::size_t>(hop);
    for (int i = 0; i < n_fft; ++i) {
      const std::size_t idx = begin + static_cast<std::size_t>(i);
      in.get()[i] = idx < n ? wav.samples[idx] * window[i] : 0.0;
    }
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) power[k] = out.get()[k][0] * out.get()[k][0] + out.get()[k][1] * out.get()[k][1];
    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      const double* w = &fbank[static_cast<std::size_t>(m) * bins];
      for (int k = 0; k < bins; ++k) e += w[k] * power[k];
      result.at(t, static_cast<std::size_t>(m)) = std::log(e + cfg.floor);
    }
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return result;
}

}  // namespace audiocap
