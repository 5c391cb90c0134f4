// Command-line front end. Links only the C API.
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "audiocap/audiocap.h"

namespace {

enum Exit {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfigUnreadable = 3,
  kMissingInput = 4,
  kBadConfig = 5,
  kCorruptArtifact = 6,
  kIo = 7,
};

int exit_for(ac_status s) {
  switch (s) {
    case AC_OK: return kOk;
    case AC_ERR_MISSING_INPUT: return kMissingInput;
    case AC_ERR_CONFIG: return kBadConfig;
    case AC_ERR_CORRUPT_FILE:
    case AC_ERR_UNKNOWN_VERSION: return kCorruptArtifact;
    case AC_ERR_IO: return kIo;
    default: return kFailure;
  }
}

int report(ac_status s, const std::string& context) {
  std::fprintf(stderr, "audiocap: %s: %s: %s\n", context.c_str(), ac_status_name(s), ac_last_error());
  return exit_for(s);
}

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> scalar;             // config keys set by dedicated flags
  std::map<std::string, std::vector<std::string>> paths;  // artifact paths
};

void add_options(CLI::App* sub, Options& o) {
  sub->add_option("-c,--config", o.config, "Pipeline config file (INI sections)");
  sub->add_option("--set", o.sets, "Override a config value: section.key=value (repeatable)");
  auto scalar = [&](const char* flag, const char* key, const char* help) {
    sub->add_option_function<std::string>(
        flag, [&o, key](const std::string& v) { o.scalar[key] = v; }, help);
  };
  scalar("--seed", "global.seed", "Master seed");
  scalar("--replica", "global.replica", "Replica index for independently seeded runs");
  scalar("-o,--out", "global.out_dir", "Output directory (relative paths honour AUDIOCAP_OUT_ROOT)");
  scalar("--split", "global.split", "Evaluation split: train, val or test");
  auto path = [&](const char* flag, const char* key, const char* help) {
    sub->add_option_function<std::vector<std::string>>(
        flag, [&o, key](const std::vector<std::string>& v) { o.paths[key] = v; }, help);
  };
  path("--manifest", "manifest", "Manifest JSONL");
  path("--codec", "codec", "Codec checkpoint");
  path("--codes", "codes", "Directory of code sequences");
  path("--embedder", "embedder", "Embedder checkpoint (repeatable for retrieve)");
  path("--captioner", "captioner", "Captioner checkpoint (repeatable for ensemble-caption)");
  path("--candidates", "candidates", "Candidate dump JSONL");
  path("--captions", "captions", "Selected captions JSONL");
  path("--similarity", "similarity", "Similarity matrix JSON");
  path("--checkpoint", "checkpoint", "Input checkpoint (repeatable for soup)");
  path("--output", "output", "Output file or directory for this stage");
}

void add_generation_options(CLI::App* sub, Options& o) {
  auto scalar = [&](const char* flag, const char* key, const char* help) {
    sub->add_option_function<std::string>(
        flag, [&o, key](const std::string& v) { o.scalar[key] = v; }, help);
  };
  scalar("--top-p", "generation.top_p", "Nucleus probability threshold");
  scalar("--temperature", "generation.temperature", "Sampling temperature");
  scalar("--num-candidates", "generation.num_candidates", "Candidates per clip");
  scalar("--w-enc", "rerank.w_enc", "Encoder (cosine) rerank weight");
  scalar("--w-dec", "rerank.w_dec", "Decoder (log-likelihood) rerank weight");
}

int run(const std::string& stage, const Options& o) {
  ac_config* cfg = nullptr;
  ac_status s = o.config.empty() ? ac_config_default(&cfg) : ac_config_load(o.config.c_str(), &cfg);
  if (s != AC_OK) {
    if (s == AC_ERR_IO) {
      std::fprintf(stderr, "audiocap: cannot read config %s: %s\n", o.config.c_str(), ac_last_error());
      return kConfigUnreadable;
    }
    return report(s, "config");
  }
  for (const auto& [key, value] : o.scalar)
    if ((s = ac_config_set(cfg, key.c_str(), value.c_str())) != AC_OK) {
      ac_config_free(cfg);
      return report(s, "--" + key);
    }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "audiocap: --set expects section.key=value, got '%s'\n", kv.c_str());
      ac_config_free(cfg);
      return kUsage;
    }
    if ((s = ac_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != AC_OK) {
      ac_config_free(cfg);
      return report(s, "--set " + kv);
    }
  }
  if ((s = ac_config_validate(cfg)) != AC_OK) {
    ac_config_free(cfg);
    return report(s, "config");
  }

  ac_io* io = nullptr;
  ac_io_new(&io);
  for (const auto& [key, list] : o.paths)
    for (const auto& p : list) ac_io_add(io, key.c_str(), p.c_str());

  char* summary = nullptr;
  s = ac_run_stage(cfg, stage.c_str(), io, &summary);
  ac_io_free(io);
  ac_config_free(cfg);
  if (s != AC_OK) return report(s, stage);
  std::printf("%s\n", summary);
  ac_string_free(summary);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audiocap: synthetic-corpus audio captioning and retrieval pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ac_version());

  static const std::map<std::string, std::string> help = {
      {"synth", "Generate the synthetic corpus (WAV files + manifest)"},
      {"train-codec", "Train the residual vector quantizer"},
      {"encode", "Encode every manifest clip into code sequences"},
      {"train-embed", "Train the audio-text joint embedder"},
      {"train-captioner", "Train the captioner (pretrain with MCM, then finetune)"},
      {"caption", "Generate, filter and rerank captions for a split"},
      {"retrieve", "Text-to-audio similarity for a split (several embedders are ensembled)"},
      {"eval-captions", "CIDEr-D and vocabulary size of selected captions"},
      {"eval-retrieval", "mAP@10 and recall@k of a similarity matrix"},
      {"soup", "Average checkpoints into one"},
      {"ensemble-caption", "Caption with several captioners averaged per token"},
  };
  std::map<std::string, Options> opts;
  for (size_t i = 0; i < ac_stage_count(); ++i) {
    const std::string name = ac_stage_name(i);
    auto* sub = app.add_subcommand(name, help.at(name));
    add_options(sub, opts[name]);
    if (name == "caption" || name == "ensemble-caption") add_generation_options(sub, opts[name]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  const auto* sub = app.get_subcommands().front();
  return run(sub->get_name(), opts[sub->get_name()]);
}
