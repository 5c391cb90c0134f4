#include "audiocap/audiocap.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <map>
#include <exception>
#include <string>
#include <vector>

#include "audiocap/codec.hpp"
#include "audiocap/config.hpp"
#include "audiocap/decoding.hpp"
#include "audiocap/embedder.hpp"
#include "audiocap/ensemble.hpp"
#include "audiocap/error.hpp"
#include "audiocap/metrics.hpp"
#include "audiocap/pipeline.hpp"
#include "audiocap/tensor.hpp"
#include "audiocap/wav.hpp"

struct ac_config {
  audiocap::PipelineConfig cfg;
};
struct ac_io {
  audiocap::StageIO io;
};
struct ac_checkpoint {
  audiocap::Checkpoint ckpt;
};
struct ac_codec {
  audiocap::RvqCodec codec;
};
struct ac_codes {
  audiocap::CodeSequence codes;
};
struct ac_embedder {
  audiocap::JointEmbedder model;
};

namespace {

thread_local std::string g_last_error;

ac_status status_for(audiocap::ErrorKind kind) {
  using audiocap::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return AC_ERR_INVALID_ARGUMENT;
    case ErrorKind::InvalidSpec: return AC_ERR_INVALID_SPEC;
    case ErrorKind::Io: return AC_ERR_IO;
    case ErrorKind::MissingInput: return AC_ERR_MISSING_INPUT;
    case ErrorKind::CorruptFile: return AC_ERR_CORRUPT_FILE;
    case ErrorKind::UnknownVersion: return AC_ERR_UNKNOWN_VERSION;
    case ErrorKind::Numeric: return AC_ERR_NUMERIC;
    case ErrorKind::Contract: return AC_ERR_CONTRACT;
    case ErrorKind::Data: return AC_ERR_DATA;
    case ErrorKind::Config: return AC_ERR_CONFIG;
  }
  return AC_ERR_INTERNAL;
}

template <typename F>
ac_status guarded(F&& body) {
  try {
    body();
    return AC_OK;
  } catch (const audiocap::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AC_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return AC_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) audiocap::fail(audiocap::ErrorKind::InvalidArgument, std::string("null argument: ") + what);
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

audiocap::SimilarityMatrix matrix_from(const double* sim, const unsigned char* relevant, size_t queries,
                                       size_t items) {
  need(sim, "sim");
  need(relevant, "relevant");
  audiocap::SimilarityMatrix m;
  m.values.assign(sim, sim + queries * items);
  for (size_t q = 0; q < queries; ++q) {
    m.query_ids.push_back(std::to_string(q));
    auto& rel = m.relevance.emplace_back();
    for (size_t i = 0; i < items; ++i)
      if (relevant[q * items + i]) rel.push_back(i);
  }
  for (size_t i = 0; i < items; ++i) m.item_ids.push_back(std::to_string(i));
  return m;
}

}  // namespace

extern "C" {

const char* ac_version(void) { return "0.1.0"; }

const char* ac_status_name(ac_status status) {
  switch (status) {
    case AC_OK: return "ok";
    case AC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case AC_ERR_INVALID_SPEC: return "invalid spec";
    case AC_ERR_IO: return "i/o error";
    case AC_ERR_MISSING_INPUT: return "missing input";
    case AC_ERR_CORRUPT_FILE: return "corrupt file";
    case AC_ERR_UNKNOWN_VERSION: return "unknown format version";
    case AC_ERR_NUMERIC: return "numeric error";
    case AC_ERR_CONTRACT: return "contract violation";
    case AC_ERR_DATA: return "data error";
    case AC_ERR_CONFIG: return "config error";
    case AC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* ac_last_error(void) { return g_last_error.c_str(); }

void ac_string_free(char* s) { std::free(s); }

ac_status ac_config_default(ac_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new ac_config{};
  });
}

ac_status ac_config_load(const char* path, ac_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ac_config{audiocap::load_config(path)};
  });
}

ac_status ac_config_set(ac_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

ac_status ac_config_validate(const ac_config* cfg) {
  return guarded([&] {
    need(cfg, "cfg");
    cfg->cfg.validate();
  });
}

void ac_config_free(ac_config* cfg) { delete cfg; }

ac_status ac_io_new(ac_io** out) {
  return guarded([&] {
    need(out, "out");
    *out = new ac_io{};
  });
}

ac_status ac_io_add(ac_io* io, const char* key, const char* path) {
  return guarded([&] {
    need(io, "io");
    need(key, "key");
    need(path, "path");
    io->io.add(key, path);
  });
}

void ac_io_free(ac_io* io) { delete io; }

size_t ac_stage_count(void) { return audiocap::stage_names().size(); }

const char* ac_stage_name(size_t index) {
  const auto& names = audiocap::stage_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

ac_status ac_run_stage(const ac_config* cfg, const char* stage, const ac_io* io, char** summary_json) {
  return guarded([&] {
    need(cfg, "cfg");
    need(stage, "stage");
    const audiocap::StageIO empty;
    const auto summary = audiocap::run_stage(stage, cfg->cfg, io ? io->io : empty);
    if (summary_json) *summary_json = dup_string(summary.dump(2));
  });
}

ac_status ac_checkpoint_load(const char* path, ac_checkpoint** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ac_checkpoint{audiocap::load_checkpoint(path)};
  });
}

ac_status ac_checkpoint_save(const ac_checkpoint* ckpt, const char* path) {
  return guarded([&] {
    need(ckpt, "ckpt");
    need(path, "path");
    audiocap::save_checkpoint(ckpt->ckpt, path);
  });
}

ac_status ac_checkpoint_arch(const ac_checkpoint* ckpt, const char** arch) {
  return guarded([&] {
    need(ckpt, "ckpt");
    need(arch, "arch");
    *arch = ckpt->ckpt.arch.c_str();
  });
}

ac_status ac_checkpoint_parameter_count(const ac_checkpoint* ckpt, size_t* count) {
  return guarded([&] {
    need(ckpt, "ckpt");
    need(count, "count");
    *count = ckpt->ckpt.parameter_count();
  });
}

ac_status ac_checkpoint_equal(const ac_checkpoint* a, const ac_checkpoint* b, int* equal) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(equal, "equal");
    *equal = a->ckpt == b->ckpt ? 1 : 0;
  });
}

ac_status ac_checkpoint_soup(const ac_checkpoint* const* items, size_t count, ac_checkpoint** out) {
  return guarded([&] {
    need(items, "items");
    need(out, "out");
    std::vector<audiocap::Checkpoint> ckpts;
    for (size_t i = 0; i < count; ++i) {
      need(items[i], "items[i]");
      ckpts.push_back(items[i]->ckpt);
    }
    *out = new ac_checkpoint{audiocap::soup(ckpts)};
  });
}

void ac_checkpoint_free(ac_checkpoint* ckpt) { delete ckpt; }

ac_status ac_codec_load(const char* path, ac_codec** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ac_codec{audiocap::RvqCodec::from_checkpoint(audiocap::load_checkpoint(path))};
  });
}

ac_status ac_codec_info(const ac_codec* codec, int* sample_rate, size_t* stages, size_t* codebook_size) {
  return guarded([&] {
    need(codec, "codec");
    if (sample_rate) *sample_rate = codec->codec.sample_rate();
    if (stages) *stages = codec->codec.num_stages();
    if (codebook_size) *codebook_size = codec->codec.codebook_size();
  });
}

ac_status ac_codec_encode_wav(const ac_codec* codec, const char* wav_path, ac_codes** out) {
  return guarded([&] {
    need(codec, "codec");
    need(wav_path, "wav_path");
    need(out, "out");
    *out = new ac_codes{audiocap::encode(codec->codec, audiocap::read_wav(wav_path))};
  });
}

ac_status ac_codec_encode(const ac_codec* codec, const double* samples, size_t count, ac_codes** out) {
  return guarded([&] {
    need(codec, "codec");
    need(samples, "samples");
    need(out, "out");
    audiocap::Waveform wav{std::vector<double>(samples, samples + count), codec->codec.sample_rate()};
    *out = new ac_codes{audiocap::encode(codec->codec, wav)};
  });
}

void ac_codec_free(ac_codec* codec) { delete codec; }

ac_status ac_codes_load(const char* path, ac_codes** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ac_codes{audiocap::load_codes(path)};
  });
}

ac_status ac_codes_save(const ac_codes* codes, const char* path) {
  return guarded([&] {
    need(codes, "codes");
    need(path, "path");
    audiocap::save_codes(codes->codes, path);
  });
}

ac_status ac_codes_shape(const ac_codes* codes, size_t* frames, size_t* stages) {
  return guarded([&] {
    need(codes, "codes");
    if (frames) *frames = codes->codes.num_frames;
    if (stages) *stages = codes->codes.num_stages;
  });
}

ac_status ac_codes_data(const ac_codes* codes, const uint16_t** data) {
  return guarded([&] {
    need(codes, "codes");
    need(data, "data");
    *data = codes->codes.codes.data();
  });
}

void ac_codes_free(ac_codes* codes) { delete codes; }

ac_status ac_embedder_load(const char* path, ac_embedder** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new ac_embedder{audiocap::JointEmbedder::from_checkpoint(audiocap::load_checkpoint(path))};
  });
}

ac_status ac_embedder_dim(const ac_embedder* emb, size_t* dim) {
  return guarded([&] {
    need(emb, "emb");
    need(dim, "dim");
    *dim = emb->model.dim();
  });
}

ac_status ac_embedder_embed_text(const ac_embedder* emb, const char* text, double* out) {
  return guarded([&] {
    need(emb, "emb");
    need(text, "text");
    need(out, "out");
    const auto v = emb->model.embed_text(text);
    std::copy(v.begin(), v.end(), out);
  });
}

ac_status ac_embedder_embed_wav(const ac_embedder* emb, const char* wav_path, double* out) {
  return guarded([&] {
    need(emb, "emb");
    need(wav_path, "wav_path");
    need(out, "out");
    const auto v = emb->model.embed_audio(audiocap::read_wav(wav_path));
    std::copy(v.begin(), v.end(), out);
  });
}

void ac_embedder_free(ac_embedder* emb) { delete emb; }

ac_status ac_map_at_10(const double* sim, const unsigned char* relevant, size_t queries, size_t items, double* out) {
  return guarded([&] {
    need(out, "out");
    *out = audiocap::map_at_10(matrix_from(sim, relevant, queries, items));
  });
}

ac_status ac_recall_at_k(const double* sim, const unsigned char* relevant, size_t queries, size_t items, size_t k,
                         double* out) {
  return guarded([&] {
    need(out, "out");
    *out = audiocap::recall_at_k(matrix_from(sim, relevant, queries, items), k);
  });
}

ac_status ac_cider_d(const char* const* candidates, size_t items, const char* const* refs, const size_t* ref_offsets,
                     double* out) {
  return guarded([&] {
    need(candidates, "candidates");
    need(refs, "refs");
    need(ref_offsets, "ref_offsets");
    need(out, "out");
    std::map<std::string, std::string> cands;
    std::map<std::string, std::vector<std::string>> references;
    for (size_t i = 0; i < items; ++i) {
      const auto id = std::to_string(i);
      need(candidates[i], "candidates[i]");
      cands[id] = candidates[i];
      auto& r = references[id];
      for (size_t k = ref_offsets[i]; k < ref_offsets[i + 1]; ++k) {
        need(refs[k], "refs[k]");
        r.emplace_back(refs[k]);
      }
    }
    *out = audiocap::cider_d(cands, references);
  });
}

ac_status ac_nucleus_sample(const double* logprobs, size_t vocab, double top_p, double temperature, uint64_t seed,
                            size_t draws, size_t* out) {
  return guarded([&] {
    need(logprobs, "logprobs");
    need(out, "out");
    const std::vector<double> row(logprobs, logprobs + vocab);
    audiocap::Rng rng(seed);
    for (size_t i = 0; i < draws; ++i) out[i] = audiocap::nucleus_step(row, top_p, temperature, rng);
  });
}

}  // extern "C"
