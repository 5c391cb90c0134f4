#include "wav.hpp"

#include <algorithm>
#include <cmath>

#include "binio.hpp"
#include "error.hpp"

namespace audiocap {

void write_wav(const std::string& path, const Waveform& wav) {
  require(wav.sample_rate > 0, ErrorKind::InvalidArgument, "write_wav: sample rate must be positive");
  const auto n = static_cast<std::uint32_t>(wav.samples.size());
  ByteWriter w;
  w.raw("RIFF");
  w.u32(36 + 2 * n);
  w.raw("WAVE");
  w.raw("fmt ");
  w.u32(16);
  w.u16(1);  // PCM
  w.u16(1);  // mono
  w.u32(static_cast<std::uint32_t>(wav.sample_rate));
  w.u32(static_cast<std::uint32_t>(wav.sample_rate) * 2);
  w.u16(2);
  w.u16(16);
  w.raw("data");
  w.u32(2 * n);
  for (double s : wav.samples) {
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
    w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  write_file_bytes(path, w.bytes());
}

Waveform read_wav(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  ByteReader r(bytes, path);
  if (bytes.size() < 12 || r.raw(4) != "RIFF") fail(ErrorKind::CorruptFile, path + ": not a RIFF file");
  r.u32();
  if (r.raw(4) != "WAVE") fail(ErrorKind::CorruptFile, path + ": not a WAVE file");
  int channels = 0, rate = 0, bits = 0;
  bool have_fmt = false;
  while (r.remaining() >= 8) {
    const auto id = std::string(r.raw(4));
    const auto size = r.u32();
    if (id == "fmt ") {
      if (size < 16) fail(ErrorKind::CorruptFile, path + ": short fmt chunk");
      const auto format = r.u16();
      channels = r.u16();
      rate = static_cast<int>(r.u32());
      r.u32();
      r.u16();
      bits = r.u16();
      if (size > 16) r.raw(size - 16);
      if (format != 1 || bits != 16 || channels < 1)
        fail(ErrorKind::CorruptFile, path + ": only PCM16 WAV is supported");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) fail(ErrorKind::CorruptFile, path + ": data chunk before fmt chunk");
      const std::size_t frames = size / (2u * static_cast<unsigned>(channels));
      Waveform wav;
      wav.sample_rate = rate;
      wav.samples.resize(frames);
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) acc += static_cast<std::int16_t>(r.u16()) / 32767.0;
        wav.samples[i] = acc / channels;
      }
      return wav;
    } else {
      r.raw(size + (size & 1u));
    }
  }
  fail(ErrorKind::CorruptFile, path + ": no data chunk");
}

}  // namespace audiocap
