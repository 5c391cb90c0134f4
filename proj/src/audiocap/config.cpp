#include "config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "error.hpp"
#include "rng.hpp"

namespace audiocap {

namespace {

template <typename T>
T parse(const std::string& key, const std::string& text) {
  boost::property_tree::ptree node;
  node.put_value(text);
  auto v = node.get_value_optional<T>();
  if (!v) fail(ErrorKind::Config, "config: bad value '" + text + "' for " + key);
  return *v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "on" || text == "1") return true;
  if (text == "false" || text == "off" || text == "0") return false;
  fail(ErrorKind::Config, "config: bad boolean '" + text + "' for " + key);
}

CaptionStageConfig& stage_named(CaptionTrainConfig& cfg, const std::string& name) {
  for (auto& s : cfg.stages)
    if (s.name == name) return s;
  fail(ErrorKind::Config, "config: unknown captioner stage '" + name + "'");
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
  const auto dot = key.rfind('.');
  if (dot == std::string::npos) fail(ErrorKind::Config, "config: key '" + key + "' has no section");
  const auto section = key.substr(0, dot);
  const auto name = key.substr(dot + 1);
  auto unknown = [&]() { fail(ErrorKind::Config, "config: unknown key '" + key + "'"); };
  auto as_int = [&]() { return parse<int>(key, value); };
  auto as_double = [&]() { return parse<double>(key, value); };

  if (section == "global") {
    if (name == "seed") seed = parse<std::uint64_t>(key, value);
    else if (name == "replica") replica = parse<std::uint64_t>(key, value);
    else if (name == "out_dir") out_dir = value;
    else if (name == "split") split = value;
    else unknown();
  } else if (section == "synth") {
    if (name == "train") synth.train = parse<std::size_t>(key, value);
    else if (name == "val") synth.val = parse<std::size_t>(key, value);
    else if (name == "test") synth.test = parse<std::size_t>(key, value);
    else if (name == "clip_seconds") synth.clip_len_s = as_double();
    else if (name == "sample_rate") synth.sample_rate = as_int();
    else if (name == "min_events") synth.min_events = as_int();
    else if (name == "max_events") synth.max_events = as_int();
    else unknown();
  } else if (section == "codec") {
    if (name == "stages") codec.stages = as_int();
    else if (name == "codebook_size") codec.codebook_size = as_int();
    else if (name == "iterations") codec.iterations = as_int();
    else if (name == "max_train_frames") codec.max_train_frames = as_int();
    else unknown();
  } else if (section == "embedder") {
    auto& e = embedder;
    if (name == "dim") e.dim = as_int();
    else if (name == "audio_hidden") e.audio_hidden = as_int();
    else if (name == "text_width") e.text_width = as_int();
    else if (name == "text_hidden") e.text_hidden = as_int();
    else if (name == "epsilon") e.epsilon = as_double();
    else if (name == "sinkhorn_iters") e.sinkhorn_iters = as_int();
    else if (name == "sinkhorn_tol") e.sinkhorn_tol = as_double();
    else if (name == "epochs") e.epochs = as_int();
    else if (name == "batch_size") e.batch_size = as_int();
    else if (name == "lr") e.lr = as_double();
    else unknown();
  } else if (section == "captioner") {
    auto& m = captioner.model;
    if (name == "hidden") m.hidden = as_int();
    else if (name == "ff") m.ff = as_int();
    else if (name == "max_len") m.max_len = as_int();
    else if (name == "mcm_stages") m.mcm_stages = as_int();
    else unknown();
  } else if (section.rfind("captioner.", 0) == 0) {
    auto& st = stage_named(captioner, section.substr(10));
    if (name == "epochs") st.epochs = as_int();
    else if (name == "lr") st.lr = as_double();
    else if (name == "batch_size") st.batch_size = as_int();
    else if (name == "mcm") st.mcm.enabled = parse_bool(key, value);
    else if (name == "mask_rate") st.mcm.mask_rate = as_double();
    else if (name == "masked_stages") st.mcm.masked_stages = as_int();
    else if (name == "mcm_weight") st.mcm.weight = as_double();
    else unknown();
  } else if (section == "generation") {
    if (name == "top_p") generation.top_p = as_double();
    else if (name == "temperature") generation.temperature = as_double();
    else if (name == "num_candidates") generation.num_candidates = as_int();
    else if (name == "max_len") generation.max_len = as_int();
    else unknown();
  } else if (section == "rerank") {
    if (name == "w_enc") rerank.w_enc = as_double();
    else if (name == "w_dec") rerank.w_dec = as_double();
    else unknown();
  } else {
    fail(ErrorKind::Config, "config: unknown section [" + section + "]");
  }
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::Config, "config: " + what); };
  check(split == "train" || split == "val" || split == "test", "global.split must be train, val or test");
  check(synth.sample_rate == 16000 || synth.sample_rate == 24000, "synth.sample_rate must be 16000 or 24000");
  check(synth.clip_len_s > 0.0, "synth.clip_seconds must be positive");
  check(synth.min_events >= 0 && synth.min_events <= synth.max_events, "synth event counts out of order");
  check(codec.stages >= 1 && codec.codebook_size >= 2 && codec.codebook_size <= 65535 && codec.iterations >= 1 &&
            codec.max_train_frames >= codec.codebook_size,
        "codec settings out of range");
  check(embedder.dim >= 1 && embedder.epochs >= 1 && embedder.batch_size >= 2 && embedder.lr > 0.0 &&
            embedder.epsilon > 0.0,
        "embedder settings out of range");
  check(captioner.model.hidden >= 1 && captioner.model.ff >= 1 && captioner.model.max_len >= 2 &&
            captioner.model.mcm_stages >= 0,
        "captioner settings out of range");
  for (const auto& st : captioner.stages) {
    check(st.epochs >= 0 && st.batch_size >= 1 && st.lr > 0.0, "captioner." + st.name + " settings out of range");
    if (st.mcm.enabled)
      check(st.mcm.weight >= 0.0 && st.mcm.mask_rate > 0.0 && st.mcm.mask_rate <= 1.0 && st.mcm.masked_stages >= 1,
            "captioner." + st.name + " MCM settings out of range");
  }
  check(generation.max_len <= captioner.model.max_len, "generation.max_len exceeds captioner.max_len");
  try {
    generation.validate();
    rerank.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("config: ") + e.what());
  }
}

std::uint64_t PipelineConfig::stage_seed(const std::string& stage) const {
  return derive_seed(derive_seed(seed, stage), replica);
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read config " + path);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    fail(ErrorKind::Config, "config " + path + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  PipelineConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(ErrorKind::Config, "config " + path + ": key '" + section + "' outside a section");
    for (const auto& [name, value] : body) cfg.set(section + "." + name, value.data());
  }
  cfg.validate();
  return cfg;
}

std::string resolved_out_dir(const PipelineConfig& cfg) {
  std::filesystem::path out(cfg.out_dir);
  if (out.is_relative())
    if (const char* root = std::getenv("AUDIOCAP_OUT_ROOT"); root && *root) out = std::filesystem::path(root) / out;
  return out.string();
}

}  // namespace audiocap
