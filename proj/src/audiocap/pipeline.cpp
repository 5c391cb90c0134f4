#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "codec.hpp"
#include "ensemble.hpp"
#include "error.hpp"
#include "metrics.hpp"
#include "rng.hpp"

namespace audiocap {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Layout {
  fs::path root;
  std::string suffix;  // replica tag for model directories

  fs::path model_dir(const std::string& name) const { return root / (name + suffix); }
};

Layout layout_for(const PipelineConfig& cfg) {
  Layout l{resolved_out_dir(cfg), ""};
  if (cfg.replica != 0) l.suffix = "-r" + std::to_string(cfg.replica);
  return l;
}

std::vector<std::string> inputs(const StageIO& io, const std::string& key) {
  auto it = io.paths.find(key);
  return it == io.paths.end() ? std::vector<std::string>{} : it->second;
}

std::string input_or(const StageIO& io, const std::string& key, const fs::path& fallback) {
  const auto v = inputs(io, key);
  require(v.size() <= 1, ErrorKind::InvalidArgument, "only one '" + key + "' path is accepted by this stage");
  return v.empty() ? fallback.string() : v[0];
}

std::string require_input(const StageIO& io, const std::string& key, const fs::path& fallback) {
  auto path = input_or(io, key, fallback);
  if (!fs::exists(path)) fail(ErrorKind::MissingInput, "missing input " + key + ": " + path);
  return path;
}

void ensure_parent(const fs::path& file) {
  std::error_code ec;
  if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory " + file.parent_path().string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  write_file_bytes(path.string(), text);
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::istringstream in(read_file_bytes(path));
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      fail(ErrorKind::CorruptFile, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

Split split_of(const PipelineConfig& cfg) { return split_from_string(cfg.split); }

fs::path codes_path(const fs::path& dir, const std::string& id) { return dir / (id + ".codes"); }

// ---- stages --------------------------------------------------------------

json stage_synth(const PipelineConfig& cfg, const StageIO& io, const Layout& l) {
  const fs::path dir = input_or(io, "output", l.root / "data");
  const auto entries = build_dataset(cfg.synth, cfg.stage_seed("synth"), dir.string());
  return {{"manifest", (dir / "manifest.jsonl").string()}, {"clips", entries.size()}};
}

json stage_train_codec(const PipelineConfig& cfg, const StageIO& io, const Layout& l) {
  const auto manifest = require_input(io, "manifest", l.root / "data/manifest.jsonl");
  const auto train = clips_in_split(load_clips(manifest), Split::Train);
  require(!train.empty(), ErrorKind::Data, "train-codec: no training clips in " + manifest);
  const auto sr = train[0].waveform.sample_rate;
  const FrameTransform transform(static_cast<std::size_t>(codec_hop(sr)));
  std::vector<std::vector<double>> frames;
  for (const auto& c : train) {
    require(c.waveform.sample_rate == sr, ErrorKind::Data, "train-codec: mixed sample rates");
    auto f = analysis_frames(transform, c.waveform.samples);
    frames.insert(frames.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  }
  const auto seed = cfg.stage_seed("codec");
  const auto limit = static_cast<std::size_t>(cfg.codec.max_train_frames);
  if (frames.size() > limit) {
    Rng rng(derive_seed(seed, "subsample"));
    shuffle(frames.begin(), frames.end(), rng);
    frames.resize(limit);
  }
  CodecTrainReport report;
  const auto codec = train_codebooks(frames, cfg.codec.stages, cfg.codec.codebook_size, cfg.codec.iterations,
                                     derive_seed(seed, "kmeans"), sr, &report);
  const fs::path out = input_or(io, "output", l.root / "codec/codec.ckpt");
  ensure_parent(out);
  save_checkpoint(codec.to_checkpoint(), out.string());
  json rep{{"frames", frames.size()}, {"stage_distortion", report.stage_distortion}};
  write_text(out.parent_path() / "report.json", rep.dump(2) + "\n");
  return {{"codec", out.string()}, {"frames", frames.size()}, {"stage_distortion", report.stage_distortion}};
}

json stage_encode(const PipelineConfig&, const StageIO& io, const Layout& l) {
  const auto manifest = require_input(io, "manifest", l.root / "data/manifest.jsonl");
  const auto codec = RvqCodec::from_checkpoint(load_checkpoint(require_input(io, "codec", l.root / "codec/codec.ckpt")));
  const fs::path dir = input_or(io, "output", l.root / "codes");
  std::vector<json> index;
  for (const auto& c : load_clips(manifest)) {
    const auto codes = encode(codec, c.waveform);
    const auto path = codes_path(dir, c.id);
    ensure_parent(path);
    save_codes(codes, path.string());
    index.push_back({{"id", c.id}, {"path", path.filename().string()}, {"frames", codes.num_frames},
                     {"stages", codes.num_stages}});
  }
  write_text(dir / "index.jsonl", jsonl(index));
  return {{"codes", dir.string()}, {"clips", index.size()}};
}

json stage_train_embed(const PipelineConfig& cfg, const StageIO& io, const Layout& l) {
  const auto manifest = require_input(io, "manifest", l.root / "data/manifest.jsonl");
  const auto clips = load_clips(manifest);
  const auto result = train_embedder(clips_in_split(clips, Split::Train), clips_in_split(clips, Split::Val),
                                     cfg.embedder, cfg.stage_seed("embedder"));
  const fs::path out = input_or(io, "output", l.model_dir("embedder") / "embedder.ckpt");
  ensure_parent(out);
  save_checkpoint(result.best, out.string());
  write_text(out.parent_path() / "train_log.jsonl", jsonl(result.log));
  return {{"embedder", out.string()}, {"best_val_map10", result.best_val_map}, {"best_epoch", result.best_epoch}};
}

std::vector<CaptionExample> caption_examples(std::span<const Clip> clips, const fs::path& codes_dir,
                                             const JointEmbedder& embedder, const Vocabulary& vocab) {
  std::vector<CaptionExample> out;
  for (const auto& c : clips) {
    const auto path = codes_path(codes_dir, c.id);
    if (!fs::exists(path)) fail(ErrorKind::MissingInput, "missing codes for " + c.id + ": " + path.string());
    CaptionExample ex{c.id, load_codes(path.string()), embedder.embed_audio(c.waveform), {}};
    for (const auto& cap : c.captions) ex.captions.push_back(vocab.encode(cap));
    out.push_back(std::move(ex));
  }
  return out;
}

json stage_train_captioner(const PipelineConfig& cfg, const StageIO& io, const Layout& l) {
  const auto manifest = require_input(io, "manifest", l.root / "data/manifest.jsonl");
  const auto codec = RvqCodec::from_checkpoint(load_checkpoint(require_input(io, "codec", l.root / "codec/codec.ckpt")));
  const fs::path codes_dir = require_input(io, "codes", l.root / "codes");
  const auto embedder = JointEmbedder::from_checkpoint(
      load_checkpoint(require_input(io, "embedder", l.model_dir("embedder") / "embedder.ckpt")));
  const auto clips = load_clips(manifest);
  const auto train_clips = clips_in_split(clips, Split::Train);
  const auto val_clips = clips_in_split(clips, Split::Val);
  std::vector<std::string> texts;
  for (const auto& c : train_clips) texts.insert(texts.end(), c.captions.begin(), c.captions.end());
  const auto vocab = Vocabulary::build(texts);
  const auto train = caption_examples(train_clips, codes_dir, embedder, vocab);
  const auto val = caption_examples(val_clips, codes_dir, embedder, vocab);

  CaptionTrainConfig tc = cfg.captioner;
  std::erase_if(tc.stages, [](const CaptionStageConfig& s) { return s.epochs == 0; });
  const auto result = train_captioner(train, val, vocab, codec.codebook_size(), tc, cfg.stage_seed("captioner"));

  const fs::path out = input_or(io, "output", l.model_dir("captioner") / "captioner.ckpt");
  ensure_parent(out);
  save_checkpoint(result.best, out.string());
  write_text(out.parent_path() / "train_log.jsonl", jsonl(result.log));
  json summary{{"captioner", out.string()}, {"best_val_loglik", result.best_val_loglik}};
  const bool any_mcm = std::any_of(tc.stages.begin(), tc.stages.end(), [](const auto& s) { return s.mcm.enabled; });
  if (any_mcm) {
    json mcm{{"masked_code_ce", result.final_mcm_ce},
             {"masked_code_accuracy", result.final_mcm_accuracy},
             {"chance_ce", std::log(static_cast<double>(codec.codebook_size()))}};
    write_text(out.parent_path() / "mcm.json", mcm.dump(2) + "\n");
    summary["mcm"] = mcm;
  }
  return summary;
}

json candidate_row(const CaptionCandidate& c, std::size_t rank) {
  return {{"rank", rank},          {"text", c.text},           {"loglik", c.loglik},
          {"fluent", c.fluent},    {"enc_score", c.enc_score}, {"dec_score", c.dec_score},
          {"final_score", c.final_score}};
}

json stage_caption(const PipelineConfig& cfg, const StageIO& io, const Layout& l, bool ensemble) {
  const auto manifest = require_input(io, "manifest", l.root / "data/manifest.jsonl");
  const fs::path codes_dir = require_input(io, "codes", l.root / "codes");
  const auto embedder = JointEmbedder::from_checkpoint(
      load_checkpoint(require_input(io, "embedder", l.model_dir("embedder") / "embedder.ckpt")));
  auto model_paths = inputs(io, "captioner");
  if (model_paths.empty()) model_paths.push_back((l.model_dir("captioner") / "captioner.ckpt").string());
  require(ensemble || model_paths.size() == 1, ErrorKind::InvalidArgument,
          "caption takes one captioner; use ensemble-caption for several");
  std::vector<CaptionModel> models;
  for (const auto& p : model_paths) {
    if (!fs::exists(p)) fail(ErrorKind::MissingInput, "missing input captioner: " + p);
    models.push_back(CaptionModel::from_checkpoint(load_checkpoint(p)));
  }
  std::vector<const CaptionModel*> members;
  for (const auto& m : models) members.push_back(&m);

  const auto clips = clips_in_split(load_clips(manifest), split_of(cfg));
  const auto seed = cfg.stage_seed("caption");
  std::vector<json> cand_rows, rerank_rows, caption_rows;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& c = clips[i];
    const auto path = codes_path(codes_dir, c.id);
    if (!fs::exists(path)) fail(ErrorKind::MissingInput, "missing codes for " + c.id + ": " + path.string());
    const auto codes = load_codes(path.string());
    const auto seq_emb = embedder.embed_audio(c.waveform);
    auto gen = cfg.generation;
    gen.seed = derive_seed(seed, i);
    auto cands = ensemble ? ensemble_generate(members, codes, seq_emb, gen)
                          : generate_candidates(models[0], codes, seq_emb, gen);
    for (std::size_t r = 0; r < cands.size(); ++r)
      cand_rows.push_back({{"audio_id", c.id}, {"rank", r}, {"text", cands[r].text}, {"loglik", cands[r].loglik}});
    const auto outcome = rerank_select(std::move(cands), seq_emb, embedder, cfg.rerank);
    json table = json::array();
    for (std::size_t r = 0; r < outcome.candidates.size(); ++r)
      table.push_back(candidate_row(outcome.candidates[r], r));
    rerank_rows.push_back({{"audio_id", c.id},
                           {"candidates", table},
                           {"selected", outcome.chosen},
                           {"fallback", outcome.fallback}});
    caption_rows.push_back({{"audio_id", c.id}, {"caption", outcome.selected().text}});
  }
  const fs::path dir = input_or(io, "output", ensemble ? l.root / "ensemble-caption" : l.model_dir("caption"));
  write_text(dir / "candidates.jsonl", jsonl(cand_rows));
  write_text(dir / "rerank.jsonl", jsonl(rerank_rows));
  write_text(dir / "captions.jsonl", jsonl(caption_rows));
  return {{"captions", (dir / "captions.jsonl").string()}, {"clips", clips.size()}, {"models", models.size()}};
}

json similarity_json(const SimilarityMatrix& sim) {
  json rows = json::array();
  for (std::size_t q = 0; q < sim.num_queries(); ++q)
    rows.push_back(std::vector<double>(sim.values.begin() + static_cast<std::ptrdiff_t>(q * sim.num_items()),
                                       sim.values.begin() + static_cast<std::ptrdiff_t>((q + 1) * sim.num_items())));
  return {{"query_ids", sim.query_ids}, {"item_ids", sim.item_ids}, {"values", rows}, {"relevance", sim.relevance}};
}

SimilarityMatrix similarity_from_json(const json& j, const std::string& path) {
  try {
    SimilarityMatrix sim;
    sim.query_ids = j.at("query_ids").get<std::vector<std::string>>();
    sim.item_ids = j.at("item_ids").get<std::vector<std::string>>();
    sim.relevance = j.at("relevance").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& row : j.at("values")) {
      const auto r = row.get<std::vector<double>>();
      require(r.size() == sim.item_ids.size(), ErrorKind::CorruptFile, path + ": ragged similarity row");
      sim.values.insert(sim.values.end(), r.begin(), r.end());
    }
    sim.validate();
    return sim;
  } catch (const json::exception& e) {
    fail(ErrorKind::CorruptFile, path + ": " + e.what());
  }
}

json stage_retrieve(const PipelineConfig& cfg, const StageIO& io, const Layout& l) {
  const auto manifest = require_input(io, "manifest", l.root / "data/manifest.jsonl");
  auto paths = inputs(io, "embedder");
  if (paths.empty()) paths.push_back((l.model_dir("embedder") / "embedder.ckpt").string());
  const auto clips = clips_in_split(load_clips(manifest), split_of(cfg));
  std::vector<SimilarityMatrix> sims;
  std::vector<json> dump;
  for (std::size_t m = 0; m < paths.size(); ++m) {
    if (!fs::exists(paths[m])) fail(ErrorKind::MissingInput, "missing input embedder: " + paths[m]);
    const auto model = JointEmbedder::from_checkpoint(load_checkpoint(paths[m]));
    sims.push_back(embedder_similarity(model, clips));
    if (m == 0)
      for (const auto& c : clips) {
        dump.push_back({{"id", c.id}, {"kind", "audio"}, {"vector", model.embed_audio(c.waveform)}});
        dump.push_back({{"id", c.id}, {"kind", "text"}, {"vector", model.embed_text(c.captions.at(0))}});
      }
  }
  const std::vector<double> weights(sims.size(), 1.0);
  const auto sim = sims.size() == 1 ? sims[0] : ensemble_sims(sims, weights);
  const fs::path dir = input_or(io, "output", l.model_dir("retrieval"));
  write_text(dir / "embeddings.jsonl", jsonl(dump));
  write_text(dir / "similarity.json", similarity_json(sim).dump() + "\n");
  return {{"similarity", (dir / "similarity.json").string()}, {"queries", sim.num_queries()}, {"models", sims.size()}};
}

json stage_eval_retrieval(const PipelineConfig&, const StageIO& io, const Layout& l) {
  const auto path = require_input(io, "similarity", l.model_dir("retrieval") / "similarity.json");
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::CorruptFile, path + ": " + e.what());
  }
  const auto sim = similarity_from_json(j, path);
  json per_query = json::object();
  const auto ap = per_query_ap10(sim);
  for (std::size_t q = 0; q < sim.num_queries(); ++q) per_query[sim.query_ids[q]] = ap[q];
  json report{{"map_at_10", map_at_10(sim)},
              {"recall_at_1", recall_at_k(sim, 1)},
              {"recall_at_5", recall_at_k(sim, 5)},
              {"recall_at_10", recall_at_k(sim, 10)},
              {"queries", sim.num_queries()},
              {"per_query_ap10", per_query}};
  const fs::path out = input_or(io, "output", l.model_dir("metrics") / "retrieval.json");
  write_text(out, report.dump(2) + "\n");
  report.erase("per_query_ap10");
  report["report"] = out.string();
  return report;
}

json stage_eval_captions(const PipelineConfig& cfg, const StageIO& io, const Layout& l) {
  const auto manifest = require_input(io, "manifest", l.root / "data/manifest.jsonl");
  const auto captions_path = require_input(io, "captions", l.model_dir("caption") / "captions.jsonl");
  std::map<std::string, std::vector<std::string>> refs;
  for (const auto& c : clips_in_split(load_clips(manifest), split_of(cfg))) refs[c.id] = c.captions;

  std::map<std::string, std::string> hyps;
  try {
    for (const auto& row : read_jsonl(captions_path))
      hyps[row.at("audio_id").get<std::string>()] = row.at("caption").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::CorruptFile, captions_path + ": " + e.what());
  }
  std::vector<std::string> texts;
  for (const auto& [id, t] : hyps) texts.push_back(t);
  json report{{"cider_d", cider_d(hyps, refs)}, {"vocab_size", vocabulary_size(texts)}, {"items", hyps.size()}};

  const auto cand_path = input_or(io, "candidates", fs::path(captions_path).parent_path() / "candidates.jsonl");
  if (fs::exists(cand_path)) {
    std::map<std::string, std::vector<std::string>> cands;
    try {
      for (const auto& row : read_jsonl(cand_path))
        cands[row.at("audio_id").get<std::string>()].push_back(row.at("text").get<std::string>());
    } catch (const json::exception& e) {
      fail(ErrorKind::CorruptFile, cand_path + ": " + e.what());
    }
    const double random = random_candidate_cider(cands, refs);
    report["random_candidate_cider_d"] = random;
    if (random > 0.0) report["relative_gain"] = report["cider_d"].get<double>() / random - 1.0;
  }
  const fs::path out = input_or(io, "output", l.model_dir("metrics") / "captions.json");
  write_text(out, report.dump(2) + "\n");
  report["report"] = out.string();
  return report;
}

json stage_soup(const PipelineConfig&, const StageIO& io, const Layout& l) {
  const auto paths = inputs(io, "checkpoint");
  require(!paths.empty(), ErrorKind::InvalidArgument, "soup: at least one --checkpoint is required");
  std::vector<Checkpoint> ckpts;
  for (const auto& p : paths) {
    if (!fs::exists(p)) fail(ErrorKind::MissingInput, "missing input checkpoint: " + p);
    ckpts.push_back(load_checkpoint(p));
  }
  const fs::path out = input_or(io, "output", l.root / "soup/soup.ckpt");
  ensure_parent(out);
  const auto result = soup(ckpts);
  save_checkpoint(result, out.string());
  return {{"soup", out.string()}, {"sources", ckpts.size()}, {"arch", result.arch}};
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth",         "train-codec",   "encode",  "train-embed",
                                                 "train-captioner", "caption",     "retrieve", "eval-captions",
                                                 "eval-retrieval", "soup",         "ensemble-caption"};
  return names;
}

json run_stage(const std::string& stage, const PipelineConfig& cfg, const StageIO& io) {
  cfg.validate();
  const auto l = layout_for(cfg);
  if (stage == "synth") return stage_synth(cfg, io, l);
  if (stage == "train-codec") return stage_train_codec(cfg, io, l);
  if (stage == "encode") return stage_encode(cfg, io, l);
  if (stage == "train-embed") return stage_train_embed(cfg, io, l);
  if (stage == "train-captioner") return stage_train_captioner(cfg, io, l);
  if (stage == "caption") return stage_caption(cfg, io, l, false);
  if (stage == "ensemble-caption") return stage_caption(cfg, io, l, true);
  if (stage == "retrieve") return stage_retrieve(cfg, io, l);
  if (stage == "eval-captions") return stage_eval_captions(cfg, io, l);
  if (stage == "eval-retrieval") return stage_eval_retrieval(cfg, io, l);
  if (stage == "soup") return stage_soup(cfg, io, l);
  fail(ErrorKind::InvalidArgument, "unknown stage '" + stage + "'");
}

double random_candidate_cider(const std::map<std::string, std::vector<std::string>>& candidates,
                              const std::map<std::string, std::vector<std::string>>& references) {
  if (candidates.empty()) return 0.0;
  std::map<std::string, std::vector<std::string>> used;
  for (const auto& [id, texts] : candidates) {
    auto it = references.find(id);
    require(it != references.end(), ErrorKind::InvalidArgument, "cider: no references for '" + id + "'");
    used[id] = it->second;
  }
  const CiderScorer scorer(used);
  double total = 0.0;
  for (const auto& [id, texts] : candidates) {
    require(!texts.empty(), ErrorKind::InvalidArgument, "cider: item '" + id + "' has no candidates");
    double item = 0.0;
    for (const auto& t : texts) item += scorer.score(id, t);
    total += item / static_cast<double>(texts.size());
  }
  return total / static_cast<double>(candidates.size());
}

}  // namespace audiocap
