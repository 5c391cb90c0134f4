#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "config.hpp"

namespace audiocap {

/// Named artifact paths for one stage run. Unset inputs and outputs fall back
/// to the default layout under the output directory:
///
///   data/manifest.jsonl, data/audio/          synth
///   codec/codec.ckpt, codec/report.json       train-codec
///   codes/<id>.codes, codes/index.jsonl       encode
///   embedder/embedder.ckpt, train_log.jsonl   train-embed
///   captioner/captioner.ckpt, train_log.jsonl train-captioner
///   caption/{candidates,rerank,captions}.jsonl caption
///   ensemble-caption/ (same files)            ensemble-caption
///   retrieval/{embeddings.jsonl,similarity.json} retrieve
///   metrics/{captions,retrieval}.json         eval-captions, eval-retrieval
///   soup/soup.ckpt                            soup
///
/// data, codec and codes are shared. The embedder, captioner, caption,
/// retrieval and metrics directories get a "-r<replica>" suffix when replica != 0.
/// Keys: manifest, codec, codes, embedder, captioner, candidates, captions,
/// similarity, checkpoint, output. embedder, captioner and checkpoint may repeat.
struct StageIO {
  std::map<std::string, std::vector<std::string>> paths;

  void add(const std::string& key, const std::string& path) { paths[key].push_back(path); }
};

const std::vector<std::string>& stage_names();

/// Runs one stage and returns a JSON summary of what it produced.
nlohmann::json run_stage(const std::string& stage, const PipelineConfig& cfg, const StageIO& io);

/// Expected CIDEr-D of a uniformly drawn candidate, averaged over items.
double random_candidate_cider(const std::map<std::string, std::vector<std::string>>& candidates,
                              const std::map<std::string, std::vector<std::string>>& references);

}  // namespace audiocap
