#include "synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace audiocap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kFadeSeconds = 0.005;

const std::array<const char*, kNumEventKinds> kKindNames = {"pure_tone", "chirp",     "noise_burst",
                                                            "am_tone",   "click_train", "harmonic_stack"};

void validate_event(const SoundEventSpec& e, double clip_len_s, int sample_rate) {
  const double nyquist = sample_rate / 2.0;
  const std::string what = "event " + to_string(e.kind);
  require(e.start_s >= 0.0, ErrorKind::InvalidSpec, what + ": negative start");
  require(e.duration_s > 0.0, ErrorKind::InvalidSpec, what + ": non-positive duration");
  require(e.start_s + e.duration_s <= clip_len_s + 1e-9, ErrorKind::InvalidSpec, what + ": exceeds clip bounds");
  require(e.gain > 0.0 && e.gain <= 1.0, ErrorKind::InvalidSpec, what + ": gain outside (0, 1]");
  auto below_nyquist = [&](double f, const char* label) {
    require(f > 0.0 && f < nyquist, ErrorKind::InvalidSpec,
            what + ": " + label + " " + std::to_string(f) + " Hz violates (0, Nyquist)");
  };
  switch (e.kind) {
    case EventKind::PureTone:
    case EventKind::AmTone:
    case EventKind::HarmonicStack:
      below_nyquist(e.frequency, "frequency");
      break;
    case EventKind::Chirp:
      below_nyquist(e.frequency, "start frequency");
      below_nyquist(e.frequency + e.bandwidth, "end frequency");
      break;
    case EventKind::NoiseBurst:
      below_nyquist(e.frequency, "centre frequency");
      require(e.bandwidth > 0.0, ErrorKind::InvalidSpec, what + ": bandwidth must be positive");
      below_nyquist(e.frequency + e.bandwidth / 2.0, "upper band edge");
      break;
    case EventKind::ClickTrain:
      require(e.rate > 0.0, ErrorKind::InvalidSpec, what + ": rate must be positive");
      if (e.frequency != 0.0) below_nyquist(e.frequency, "click frequency");
      break;
  }
  if (e.kind == EventKind::AmTone) require(e.rate > 0.0, ErrorKind::InvalidSpec, what + ": rate must be positive");
}

// Unit-peak signal for one event, before gain and fades.
std::vector<double> render_event(const SoundEventSpec& e, std::size_t n, int sr, Rng& rng) {
  std::vector<double> x(n, 0.0);
  const double phase = uniform(rng, 0.0, kTwoPi);
  const double nyquist = sr / 2.0;
  switch (e.kind) {
    case EventKind::PureTone:
      for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(kTwoPi * e.frequency * i / sr + phase);
      break;
    case EventKind::Chirp: {
      const double sweep = e.bandwidth / e.duration_s;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        x[i] = std::sin(kTwoPi * (e.frequency * t + 0.5 * sweep * t * t) + phase);
      }
      break;
    }
    case EventKind::NoiseBurst: {
      // RBJ constant-peak band-pass biquad over white noise.
      const double w0 = kTwoPi * e.frequency / sr;
      const double q = std::max(0.3, e.frequency / e.bandwidth);
      const double alpha = std::sin(w0) / (2.0 * q);
      const double a0 = 1.0 + alpha;
      const double b0 = alpha / a0, b2 = -alpha / a0;
      const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
      double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double in = normal(rng);
        const double y = b0 * in + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = in;
        y2 = y1;
        y1 = y;
        x[i] = y;
      }
      double peak = 0.0;
      for (double v : x) peak = std::max(peak, std::abs(v));
      if (peak > 0.0)
        for (double& v : x) v /= peak;
      break;
    }
    case EventKind::AmTone:
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        x[i] = 0.5 * (1.0 - std::cos(kTwoPi * e.rate * t)) * std::sin(kTwoPi * e.frequency * t + phase);
      }
      break;
    case EventKind::ClickTrain: {
      const double ring = e.frequency > 0.0 ? e.frequency : 2500.0;
      const double period = 1.0 / e.rate;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double tau = std::fmod(t, period);
        if (tau < 0.008) x[i] = std::exp(-tau / 0.0015) * std::cos(kTwoPi * ring * tau);
      }
      break;
    }
    case EventKind::HarmonicStack: {
      double norm = 0.0;
      for (int k = 1; k <= 6 && k * e.frequency < nyquist; ++k) {
        const double ph = uniform(rng, 0.0, kTwoPi);
        norm += 1.0 / k;
        for (std::size_t i = 0; i < n; ++i) x[i] += std::sin(kTwoPi * k * e.frequency * i / sr + ph) / k;
      }
      for (double& v : x) v /= norm;
      break;
    }
  }
  return x;
}

}  // namespace

std::string to_string(EventKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

EventKind event_kind_from_string(const std::string& name) {
  for (std::size_t i = 0; i < kNumEventKinds; ++i)
    if (name == kKindNames[i]) return static_cast<EventKind>(i);
  fail(ErrorKind::InvalidArgument, "unknown event kind '" + name + "'");
}

std::string kind_keyword(EventKind kind) {
  switch (kind) {
    case EventKind::PureTone: return "steady";
    case EventKind::Chirp: return "chirp";
    case EventKind::NoiseBurst: return "noise";
    case EventKind::AmTone: return "pulsing";
    case EventKind::ClickTrain: return "clicks";
    case EventKind::HarmonicStack: return "hum";
  }
  return "";
}

std::string event_phrase(const SoundEventSpec& e) {
  switch (e.kind) {
    case EventKind::PureTone:
      if (e.frequency < 300.0) return "a deep steady tone";
      if (e.frequency > 1200.0) return "a shrill steady tone";
      return "a steady tone";
    case EventKind::Chirp: return e.bandwidth >= 0.0 ? "a rising chirp" : "a falling chirp";
    case EventKind::NoiseBurst:
      return e.frequency < 1000.0 ? "a rumbling burst of noise" : "a hissing burst of noise";
    case EventKind::AmTone: return e.rate < 6.0 ? "a slowly pulsing tone" : "a rapidly pulsing tone";
    case EventKind::ClickTrain: return e.rate < 8.0 ? "a slow train of clicks" : "a fast train of clicks";
    case EventKind::HarmonicStack: return e.frequency < 200.0 ? "a low buzzing hum" : "a high buzzing hum";
  }
  return "";
}

// <np> sounds | <np> is followed by <np> | <np> is followed by <np> and then <np> [and then <np>]*
std::string render_caption(std::span<const SoundEventSpec> events) {
  if (events.empty()) return "silence";
  if (events.size() == 1) return event_phrase(events[0]) + " sounds";
  std::string out = event_phrase(events[0]) + " is followed by " + event_phrase(events[1]);
  for (std::size_t i = 2; i < events.size(); ++i) out += " and then " + event_phrase(events[i]);
  return out;
}

SyntheticClip synth_clip(std::span<const SoundEventSpec> events, double clip_len_s, int sample_rate,
                         std::uint64_t seed) {
  require(sample_rate == 16000 || sample_rate == 24000, ErrorKind::InvalidSpec,
          "sample rate must be 16000 or 24000 Hz");
  require(clip_len_s > 0.0, ErrorKind::InvalidSpec, "clip length must be positive");
  for (std::size_t i = 0; i < events.size(); ++i) {
    validate_event(events[i], clip_len_s, sample_rate);
    if (i > 0)
      require(events[i].start_s >= events[i - 1].start_s + events[i - 1].duration_s - 1e-9, ErrorKind::InvalidSpec,
              "events must be time-ordered and non-overlapping");
  }

  SyntheticClip clip;
  clip.events.assign(events.begin(), events.end());
  clip.caption = render_caption(events);
  clip.waveform.sample_rate = sample_rate;
  const auto total = static_cast<std::size_t>(std::llround(clip_len_s * sample_rate));
  clip.waveform.samples.assign(total, 0.0);

  Rng rng(seed);
  for (const auto& e : events) {
    const auto begin = static_cast<std::size_t>(std::llround(e.start_s * sample_rate));
    const auto end = std::min(total, static_cast<std::size_t>(std::llround((e.start_s + e.duration_s) * sample_rate)));
    if (end <= begin) continue;
    const std::size_t n = end - begin;
    auto x = render_event(e, n, sample_rate, rng);
    const std::size_t fade =
        std::min(n / 4, static_cast<std::size_t>(std::llround(kFadeSeconds * sample_rate)));
    for (std::size_t i = 0; i < n; ++i) {
      double env = 1.0;
      if (fade > 0 && i < fade) env = 0.5 * (1.0 - std::cos(std::numbers::pi * i / fade));
      if (fade > 0 && n - 1 - i < fade) env = std::min(env, 0.5 * (1.0 - std::cos(std::numbers::pi * (n - 1 - i) / fade)));
      clip.waveform.samples[begin + i] += e.gain * env * x[i];
    }
  }
  double peak = 0.0;
  for (double v : clip.waveform.samples) peak = std::max(peak, std::abs(v));
  if (peak > 1.0)
    for (double& v : clip.waveform.samples) v /= peak;
  return clip;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  fail(ErrorKind::InvalidArgument, "unknown split '" + name + "'");
}

std::vector<SoundEventSpec> sample_events(const DatasetConfig& cfg, std::uint64_t seed) {
  require(cfg.min_events >= 0 && cfg.min_events <= cfg.max_events &&
              cfg.max_events <= static_cast<int>(kNumEventKinds),
          ErrorKind::InvalidArgument, "event count range must satisfy 0 <= min <= max <= 6");
  Rng rng(seed);
  const int n = cfg.min_events + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(cfg.max_events - cfg.min_events + 1)));

  // Distinct kinds, weighted sampling without replacement.
  auto weights = cfg.kind_weights;
  std::vector<EventKind> kinds;
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (double w : weights) total += w;
    require(total > 0.0, ErrorKind::InvalidArgument, "not enough event kinds with positive weight");
    double u = uniform01(rng) * total;
    std::size_t k = 0;
    for (; k + 1 < kNumEventKinds; ++k) {
      if (u < weights[k]) break;
      u -= weights[k];
    }
    while (weights[k] <= 0.0) --k;
    kinds.push_back(static_cast<EventKind>(k));
    weights[k] = 0.0;
  }

  std::vector<SoundEventSpec> events;
  const double slot = n > 0 ? cfg.clip_len_s / n : 0.0;
  for (int i = 0; i < n; ++i) {
    SoundEventSpec e;
    e.kind = kinds[static_cast<std::size_t>(i)];
    e.duration_s = slot * uniform(rng, 0.5, 0.9);
    e.start_s = slot * i + uniform(rng, 0.0, slot - e.duration_s);
    e.gain = uniform(rng, 0.3, 0.9);
    const bool alt = bernoulli(rng, 0.5);
    switch (e.kind) {
      case EventKind::PureTone: {
        const auto band = uniform_index(rng, 3);
        e.frequency = band == 0 ? uniform(rng, 150, 280) : band == 1 ? uniform(rng, 350, 700) : uniform(rng, 1400, 2800);
        break;
      }
      case EventKind::Chirp:
        if (alt) {
          e.frequency = uniform(rng, 400, 1200);
          e.bandwidth = uniform(rng, 800, 2000);
        } else {
          e.frequency = uniform(rng, 1600, 3000);
          e.bandwidth = -uniform(rng, 800, 1400);
        }
        break;
      case EventKind::NoiseBurst:
        e.frequency = alt ? uniform(rng, 200, 600) : uniform(rng, 3000, 6000);
        e.bandwidth = e.frequency * (alt ? 0.8 : 0.5);
        break;
      case EventKind::AmTone:
        e.frequency = uniform(rng, 500, 1500);
        e.rate = alt ? uniform(rng, 2, 4) : uniform(rng, 10, 16);
        break;
      case EventKind::ClickTrain:
        e.rate = alt ? uniform(rng, 3, 6) : uniform(rng, 12, 20);
        break;
      case EventKind::HarmonicStack:
        e.frequency = alt ? uniform(rng, 80, 160) : uniform(rng, 250, 450);
        break;
    }
    events.push_back(e);
  }
  return events;
}

std::string manifest_line(const ManifestEntry& entry) {
  json j;
  j["audio_path"] = entry.audio_path;
  j["captions"] = entry.captions;
  j["split"] = to_string(entry.split);
  return j.dump();
}

void write_manifest(const std::string& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write manifest " + path);
  for (const auto& e : entries) out << manifest_line(e) << '\n';
  if (!out) fail(ErrorKind::Io, "short write to " + path);
}

std::vector<ManifestEntry> build_dataset(const DatasetConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "audio", ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory " + out_dir + ": " + ec.message());

  std::vector<ManifestEntry> entries;
  const std::array<std::pair<Split, std::size_t>, 3> plan = {
      {{Split::Train, cfg.train}, {Split::Val, cfg.val}, {Split::Test, cfg.test}}};
  std::uint64_t index = 0;
  for (const auto& [split, count] : plan) {
    for (std::size_t i = 0; i < count; ++i, ++index) {
      const auto clip_seed = derive_seed(seed, index);
      const auto events = sample_events(cfg, derive_seed(clip_seed, "events"));
      const auto clip = synth_clip(events, cfg.clip_len_s, cfg.sample_rate, derive_seed(clip_seed, "render"));
      char name[64];
      std::snprintf(name, sizeof name, "%s_%04zu", to_string(split).c_str(), i);
      const std::string rel = std::string("audio/") + name + ".wav";
      write_wav((fs::path(out_dir) / rel).string(), clip.waveform);
      entries.push_back({rel, {clip.caption}, split});
    }
  }
  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), entries);
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    fail(std::filesystem::exists(path) ? ErrorKind::Io : ErrorKind::MissingInput, "cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + " line " + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& ex) {
      fail(ErrorKind::Data, where + ": malformed JSON (" + ex.what() + ")");
    }
    if (!j.is_object()) fail(ErrorKind::Data, where + ": expected a JSON object");
    if (!j.contains("audio_path") || !j["audio_path"].is_string())
      fail(ErrorKind::Data, where + ": missing string field 'audio_path'");
    if (!j.contains("captions") || !j["captions"].is_array())
      fail(ErrorKind::Data, where + ": missing array field 'captions'");
    if (!j.contains("split") || !j["split"].is_string()) fail(ErrorKind::Data, where + ": missing string field 'split'");
    ManifestEntry e;
    e.audio_path = j["audio_path"].get<std::string>();
    for (const auto& c : j["captions"]) {
      if (!c.is_string()) fail(ErrorKind::Data, where + ": captions must be strings");
      e.captions.push_back(c.get<std::string>());
    }
    if (e.captions.empty() || e.captions.size() > 5)
      fail(ErrorKind::Data, where + ": expected 1-5 captions, got " + std::to_string(e.captions.size()));
    try {
      e.split = split_from_string(j["split"].get<std::string>());
    } catch (const Error&) {
      fail(ErrorKind::Data, where + ": unknown split '" + j["split"].get<std::string>() + "'");
    }
    if (!fs::is_regular_file(resolve_audio_path(path, e)))
      fail(ErrorKind::Data, where + ": audio file not found: " + e.audio_path);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string resolve_audio_path(const std::string& manifest_path, const ManifestEntry& entry) {
  const fs::path p(entry.audio_path);
  if (p.is_absolute()) return p.string();
  return (fs::path(manifest_path).parent_path() / p).string();
}

std::string clip_id(const ManifestEntry& entry) { return fs::path(entry.audio_path).stem().string(); }

std::vector<ManifestEntry> select_split(std::span<const ManifestEntry> entries, Split split) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

std::vector<Clip> load_clips(const std::string& manifest_path) {
  std::vector<Clip> clips;
  for (const auto& e : load_manifest(manifest_path))
    clips.push_back({clip_id(e), read_wav(resolve_audio_path(manifest_path, e)), e.captions, e.split});
  return clips;
}

std::vector<Clip> clips_in_split(std::span<const Clip> clips, Split split) {
  std::vector<Clip> out;
  for (const auto& c : clips)
    if (c.split == split) out.push_back(c);
  return out;
}

}  // namespace audiocap
