#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wav.hpp"

namespace audiocap {

enum class EventKind { PureTone, Chirp, NoiseBurst, AmTone, ClickTrain, HarmonicStack };
inline constexpr std::size_t kNumEventKinds = 6;

std::string to_string(EventKind kind);
EventKind event_kind_from_string(const std::string& name);

/// One sound event. Which parameters matter depends on the kind:
///  - PureTone: frequency
///  - Chirp: frequency (start) and bandwidth (signed sweep, end = start + bandwidth)
///  - NoiseBurst: frequency (band centre) and bandwidth
///  - AmTone: frequency (carrier) and rate (modulation)
///  - ClickTrain: rate (clicks per second), frequency (click ring, 0 = 2500 Hz)
///  - HarmonicStack: frequency (fundamental)
struct SoundEventSpec {
  EventKind kind = EventKind::PureTone;
  double frequency = 0.0;
  double bandwidth = 0.0;
  double rate = 0.0;
  double start_s = 0.0;
  double duration_s = 0.0;
  double gain = 0.5;
};

struct SyntheticClip {
  Waveform waveform;
  std::vector<SoundEventSpec> events;
  std::string caption;
};

/// Noun phrase for one event ("a rising chirp").
std::string event_phrase(const SoundEventSpec& event);
/// Sentence for a time-ordered event list; "silence" when empty.
std::string render_caption(std::span<const SoundEventSpec> events);
/// Word that identifies an event kind inside a caption ("noise", "chirp", ...).
std::string kind_keyword(EventKind kind);

/// Renders events (time-ordered, non-overlapping) into a clip of
/// round(clip_len_s * sample_rate) samples. sample_rate must be 16000 or 24000.
SyntheticClip synth_clip(std::span<const SoundEventSpec> events, double clip_len_s, int sample_rate,
                         std::uint64_t seed);

enum class Split { Train, Val, Test };
std::string to_string(Split split);
Split split_from_string(const std::string& name);

struct ManifestEntry {
  std::string audio_path;  // as stored; relative paths are relative to the manifest directory
  std::vector<std::string> captions;
  Split split = Split::Train;
};

struct DatasetConfig {
  std::size_t train = 200;
  std::size_t val = 50;
  std::size_t test = 50;
  double clip_len_s = 2.0;
  int sample_rate = 24000;
  int min_events = 1;
  int max_events = 3;
  std::array<double, kNumEventKinds> kind_weights{1, 1, 1, 1, 1, 1};
};

/// Random event list following the dataset's sampling recipe.
std::vector<SoundEventSpec> sample_events(const DatasetConfig& cfg, std::uint64_t seed);

/// Writes audio/<id>.wav files and manifest.jsonl under out_dir; returns the entries.
std::vector<ManifestEntry> build_dataset(const DatasetConfig& cfg, std::uint64_t seed, const std::string& out_dir);

std::vector<ManifestEntry> load_manifest(const std::string& path);
void write_manifest(const std::string& path, std::span<const ManifestEntry> entries);
std::string manifest_line(const ManifestEntry& entry);

/// Absolute-or-manifest-relative resolution of an entry's audio file.
std::string resolve_audio_path(const std::string& manifest_path, const ManifestEntry& entry);
/// Clip identifier: the audio file's stem.
std::string clip_id(const ManifestEntry& entry);

std::vector<ManifestEntry> select_split(std::span<const ManifestEntry> entries, Split split);

/// A manifest entry with its audio in memory.
struct Clip {
  std::string id;
  Waveform waveform;
  std::vector<std::string> captions;
  Split split = Split::Train;
};

std::vector<Clip> load_clips(const std::string& manifest_path);
std::vector<Clip> clips_in_split(std::span<const Clip> clips, Split split);

}  // namespace audiocap
