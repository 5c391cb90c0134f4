/* audiocap: codec-token audio captioning and audio-text retrieval.
 *
 * Every function returns an ac_status. On failure the thread's last error
 * message is available from ac_last_error() until the next failing call.
 * Handles are opaque; free each with its matching *_free function.
 * Strings returned through char** are owned by the caller (ac_string_free). */
#ifndef AUDIOCAP_AUDIOCAP_H
#define AUDIOCAP_AUDIOCAP_H

#include <stddef.h>
#include <stdint.h>

#if defined(AUDIOCAP_BUILDING)
#define AC_API __attribute__((visibility("default")))
#else
#define AC_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ac_status {
  AC_OK = 0,
  AC_ERR_INVALID_ARGUMENT = 1,
  AC_ERR_INVALID_SPEC = 2,
  AC_ERR_IO = 3,
  AC_ERR_MISSING_INPUT = 4,
  AC_ERR_CORRUPT_FILE = 5,
  AC_ERR_UNKNOWN_VERSION = 6,
  AC_ERR_NUMERIC = 7,
  AC_ERR_CONTRACT = 8,
  AC_ERR_DATA = 9,
  AC_ERR_CONFIG = 10,
  AC_ERR_INTERNAL = 11
} ac_status;

AC_API const char* ac_version(void);
AC_API const char* ac_status_name(ac_status status);
AC_API const char* ac_last_error(void);
AC_API void ac_string_free(char* s);

/* ---- configuration and pipeline stages ---- */

typedef struct ac_config ac_config;
typedef struct ac_io ac_io;

AC_API ac_status ac_config_default(ac_config** out);
/* AC_ERR_IO when the file cannot be read, AC_ERR_CONFIG for bad content. */
AC_API ac_status ac_config_load(const char* path, ac_config** out);
/* key is "section.name", e.g. "global.seed" or "captioner.pretrain.epochs". */
AC_API ac_status ac_config_set(ac_config* cfg, const char* key, const char* value);
AC_API ac_status ac_config_validate(const ac_config* cfg);
AC_API void ac_config_free(ac_config* cfg);

AC_API ac_status ac_io_new(ac_io** out);
/* Keys: manifest, codec, codes, embedder, captioner, candidates, captions,
 * similarity, checkpoint, output. embedder, captioner and checkpoint repeat. */
AC_API ac_status ac_io_add(ac_io* io, const char* key, const char* path);
AC_API void ac_io_free(ac_io* io);

AC_API size_t ac_stage_count(void);
AC_API const char* ac_stage_name(size_t index);
/* Runs one stage; *summary_json (optional) receives a JSON summary. */
AC_API ac_status ac_run_stage(const ac_config* cfg, const char* stage, const ac_io* io, char** summary_json);

/* ---- checkpoints ---- */

typedef struct ac_checkpoint ac_checkpoint;

AC_API ac_status ac_checkpoint_load(const char* path, ac_checkpoint** out);
AC_API ac_status ac_checkpoint_save(const ac_checkpoint* ckpt, const char* path);
AC_API ac_status ac_checkpoint_arch(const ac_checkpoint* ckpt, const char** arch);
AC_API ac_status ac_checkpoint_parameter_count(const ac_checkpoint* ckpt, size_t* count);
/* *equal = 1 when names, shapes, values and attributes all match. */
AC_API ac_status ac_checkpoint_equal(const ac_checkpoint* a, const ac_checkpoint* b, int* equal);
/* Uniform elementwise mean. */
AC_API ac_status ac_checkpoint_soup(const ac_checkpoint* const* items, size_t count, ac_checkpoint** out);
AC_API void ac_checkpoint_free(ac_checkpoint* ckpt);

/* ---- codec ---- */

typedef struct ac_codec ac_codec;
typedef struct ac_codes ac_codes;

AC_API ac_status ac_codec_load(const char* path, ac_codec** out);
AC_API ac_status ac_codec_info(const ac_codec* codec, int* sample_rate, size_t* stages, size_t* codebook_size);
AC_API ac_status ac_codec_encode_wav(const ac_codec* codec, const char* wav_path, ac_codes** out);
/* Encodes mono samples at the codec's sample rate. */
AC_API ac_status ac_codec_encode(const ac_codec* codec, const double* samples, size_t count, ac_codes** out);
AC_API void ac_codec_free(ac_codec* codec);

AC_API ac_status ac_codes_load(const char* path, ac_codes** out);
AC_API ac_status ac_codes_save(const ac_codes* codes, const char* path);
AC_API ac_status ac_codes_shape(const ac_codes* codes, size_t* frames, size_t* stages);
/* Row-major frames x stages; valid until the handle is freed. */
AC_API ac_status ac_codes_data(const ac_codes* codes, const uint16_t** data);
AC_API void ac_codes_free(ac_codes* codes);

/* ---- joint embedder ---- */

typedef struct ac_embedder ac_embedder;

AC_API ac_status ac_embedder_load(const char* path, ac_embedder** out);
AC_API ac_status ac_embedder_dim(const ac_embedder* emb, size_t* dim);
/* out must hold dim doubles. */
AC_API ac_status ac_embedder_embed_text(const ac_embedder* emb, const char* text, double* out);
AC_API ac_status ac_embedder_embed_wav(const ac_embedder* emb, const char* wav_path, double* out);
AC_API void ac_embedder_free(ac_embedder* emb);

/* ---- metrics and sampling ---- */

/* sim: queries x items row-major; relevant: same shape, nonzero = relevant. */
AC_API ac_status ac_map_at_10(const double* sim, const unsigned char* relevant, size_t queries, size_t items,
                              double* out);
AC_API ac_status ac_recall_at_k(const double* sim, const unsigned char* relevant, size_t queries, size_t items,
                                size_t k, double* out);
/* Item i has candidate candidates[i] and references refs[ref_offsets[i] .. ref_offsets[i+1]). */
AC_API ac_status ac_cider_d(const char* const* candidates, size_t items, const char* const* refs,
                            const size_t* ref_offsets, double* out);
/* Draws `draws` tokens from the temperature-scaled top-p nucleus of logprobs. */
AC_API ac_status ac_nucleus_sample(const double* logprobs, size_t vocab, double top_p, double temperature,
                                   uint64_t seed, size_t draws, size_t* out);

#ifdef __cplusplus
}
#endif

#endif /* AUDIOCAP_AUDIOCAP_H */
