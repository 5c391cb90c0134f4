#include "embedder.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"
#include "optim.hpp"
#include "rng.hpp"

namespace audiocap {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  for (auto& v : t.values) v = normal(rng, 0.0, scale);
  return t;
}

Embedding row_of(const Tensor& t) { return Embedding(t.values.begin(), t.values.end()); }

}  // namespace

JointEmbedder JointEmbedder::init(const EmbedderConfig& cfg, Vocabulary vocab, int sample_rate, const Tensor& feat_mean,
                                  const Tensor& feat_std, std::uint64_t seed) {
  require(cfg.dim > 0 && cfg.audio_hidden > 0 && cfg.text_hidden > 0 && cfg.text_width > 0 && cfg.n_mels > 0,
          ErrorKind::InvalidArgument, "embedder dimensions must be positive");
  require(feat_mean.size() == static_cast<std::size_t>(cfg.n_mels) && feat_std.size() == feat_mean.size(),
          ErrorKind::InvalidArgument, "feature statistics must have n_mels entries");
  Rng rng(seed);
  const auto m = static_cast<std::size_t>(cfg.n_mels), h = static_cast<std::size_t>(cfg.audio_hidden);
  const auto e = static_cast<std::size_t>(cfg.text_width), th = static_cast<std::size_t>(cfg.text_hidden);
  const auto d = static_cast<std::size_t>(cfg.dim);
  JointEmbedder model;
  model.vocab_ = std::move(vocab);
  model.sample_rate_ = sample_rate;
  model.mel_.n_mels = cfg.n_mels;
  auto& p = model.params_;
  p.arch = kArch;
  p.attrs["vocab"] = model.vocab_.serialize();
  p.attrs["sample_rate"] = std::to_string(sample_rate);
  p.add("audio.feat_mean", Tensor({m}, feat_mean.values));
  p.add("audio.feat_std", Tensor({m}, feat_std.values));
  p.add("audio.w1", random_matrix(m, h, 1.0 / std::sqrt(double(m)), rng));
  p.add("audio.b1", Tensor::zeros({h}));
  p.add("audio.w2", random_matrix(h, h, 1.0 / std::sqrt(double(h)), rng));
  p.add("audio.b2", Tensor::zeros({h}));
  p.add("audio.proj", random_matrix(h, d, 1.0 / std::sqrt(double(2 * h)), rng));
  p.add("audio.proj_max", random_matrix(h, d, 1.0 / std::sqrt(double(2 * h)), rng));
  p.add("audio.proj_b", Tensor::zeros({d}));
  p.add("text.emb", random_matrix(model.vocab_.size(), e, 1.0, rng));
  p.add("text.w1", random_matrix(e, th, 1.0 / std::sqrt(double(e)), rng));
  p.add("text.b1", Tensor::zeros({th}));
  p.add("text.proj", random_matrix(th, d, 1.0 / std::sqrt(double(th)), rng));
  p.add("text.proj_b", Tensor::zeros({d}));
  return model;
}

JointEmbedder JointEmbedder::from_checkpoint(Checkpoint ckpt) {
  require(ckpt.arch == kArch, ErrorKind::Contract, "checkpoint is not a joint embedder (arch '" + ckpt.arch + "')");
  JointEmbedder model;
  model.vocab_ = Vocabulary::deserialize(ckpt.attr("vocab"));
  model.sample_rate_ = std::stoi(ckpt.attr("sample_rate"));
  model.mel_.n_mels = static_cast<int>(ckpt.get("audio.feat_mean").size());
  require(ckpt.get("text.emb").rows() == model.vocab_.size(), ErrorKind::Contract,
          "embedder vocabulary does not match its token table");
  model.params_ = std::move(ckpt);
  return model;
}

Tensor JointEmbedder::audio_features(const Waveform& wav) const {
  require(!wav.samples.empty(), ErrorKind::InvalidArgument, "embed_audio: empty waveform");
  require(wav.sample_rate == sample_rate_, ErrorKind::InvalidArgument,
          "embed_audio: expected " + std::to_string(sample_rate_) + " Hz audio");
  Tensor feats = log_mel(peak_normalize(wav), mel_);
  const auto& mean = params_.get("audio.feat_mean").values;
  const auto& sd = params_.get("audio.feat_std").values;
  const auto cols = feats.cols();
  for (std::size_t i = 0; i < feats.size(); ++i) feats.values[i] = (feats.values[i] - mean[i % cols]) / sd[i % cols];
  return feats;
}

std::vector<std::size_t> JointEmbedder::text_ids(const std::string& caption) const {
  auto ids = vocab_.encode(caption);
  require(!ids.empty(), ErrorKind::InvalidArgument, "embed_text: empty caption");
  return ids;
}

Graph::Var JointEmbedder::audio_tower(Graph& g, const Tensor& features) const {
  auto x = g.constant(features);
  auto h1 = g.tanh(g.add_row(g.matmul(x, g.param(params_, "audio.w1")), g.param(params_, "audio.b1")));
  auto h2 = g.tanh(g.add_row(g.matmul(h1, g.param(params_, "audio.w2")), g.param(params_, "audio.b2")));
  auto proj = g.add(g.matmul(g.mean_rows(h2), g.param(params_, "audio.proj")),
                    g.matmul(g.max_rows(h2), g.param(params_, "audio.proj_max")));
  proj = g.add_row(proj, g.param(params_, "audio.proj_b"));
  return g.l2_normalize_rows(proj);
}

Graph::Var JointEmbedder::text_tower(Graph& g, const std::vector<std::size_t>& ids) const {
  auto sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  auto tokens = g.gather_rows(g.param(params_, "text.emb"), sorted);
  auto pooled = g.mean_rows(tokens);
  auto h = g.tanh(g.add_row(g.matmul(pooled, g.param(params_, "text.w1")), g.param(params_, "text.b1")));
  auto proj = g.add_row(g.matmul(h, g.param(params_, "text.proj")), g.param(params_, "text.proj_b"));
  return g.l2_normalize_rows(proj);
}

Embedding JointEmbedder::embed_features(const Tensor& features) const {
  Graph g(false);
  return row_of(g.value(audio_tower(g, features)));
}

Embedding JointEmbedder::embed_audio(const Waveform& wav) const { return embed_features(audio_features(wav)); }

Embedding JointEmbedder::embed_text(const std::string& caption) const {
  Graph g(false);
  return row_of(g.value(text_tower(g, text_ids(caption))));
}

std::pair<Tensor, Tensor> feature_statistics(std::span<const Waveform> waves, const MelConfig& mel) {
  require(!waves.empty(), ErrorKind::Data, "feature statistics need at least one clip");
  const auto m = static_cast<std::size_t>(mel.n_mels);
  std::vector<double> sum(m, 0.0), sq(m, 0.0);
  double count = 0.0;
  for (const auto& w : waves) {
    const Tensor f = log_mel(peak_normalize(w), mel);
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < m; ++c) {
        sum[c] += f.at(r, c);
        sq[c] += f.at(r, c) * f.at(r, c);
      }
    count += static_cast<double>(f.rows());
  }
  Tensor mean({m}, std::vector<double>(m)), sd({m}, std::vector<double>(m));
  for (std::size_t c = 0; c < m; ++c) {
    mean.values[c] = sum[c] / count;
    sd.values[c] = std::sqrt(std::max(sq[c] / count - mean.values[c] * mean.values[c], 0.0)) + 1e-3;
  }
  return {mean, sd};
}

Graph::Var mltm_loss_node(Graph& g, Graph::Var audio, Graph::Var text, const SinkhornOptions& opts) {
  auto res = mltm_loss(g.value(audio), g.value(text), opts);
  return g.custom(Tensor::scalar(res.loss), {audio, text},
                  [ga = std::move(res.grad_audio.values), gt = std::move(res.grad_text.values)](
                      const std::vector<double>& og, auto& pg) {
                    if (pg[0])
                      for (std::size_t i = 0; i < ga.size(); ++i) (*pg[0])[i] += og[0] * ga[i];
                    if (pg[1])
                      for (std::size_t i = 0; i < gt.size(); ++i) (*pg[1])[i] += og[0] * gt[i];
                  });
}

SimilarityMatrix embedder_similarity(const JointEmbedder& model, std::span<const Clip> clips) {
  std::vector<Embedding> audio, text;
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> rel;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    audio.push_back(model.embed_audio(clips[i].waveform));
    text.push_back(model.embed_text(clips[i].captions.at(0)));
    ids.push_back(clips[i].id);
  }
  for (const auto& query : clips) {
    auto& r = rel.emplace_back();
    for (std::size_t j = 0; j < clips.size(); ++j) {
      const auto& caps = clips[j].captions;
      if (std::find(caps.begin(), caps.end(), query.captions.at(0)) != caps.end()) r.push_back(j);
    }
  }
  return build_similarity(text, audio, ids, ids, std::move(rel));
}

EmbedderTrainResult train_embedder(std::span<const Clip> train, std::span<const Clip> val, const EmbedderConfig& cfg,
                                   std::uint64_t seed) {
  require(train.size() >= 2, ErrorKind::Data, "train_embedder: need at least two training clips");
  require(!val.empty(), ErrorKind::Data, "train_embedder: empty validation split");
  require(cfg.batch_size >= 2 && cfg.epochs >= 1 && cfg.lr > 0.0, ErrorKind::InvalidArgument,
          "train_embedder: batch_size >= 2, epochs >= 1 and lr > 0 required");

  std::vector<std::string> captions;
  std::vector<Waveform> waves;
  for (const auto& c : train) {
    captions.insert(captions.end(), c.captions.begin(), c.captions.end());
    waves.push_back(c.waveform);
  }
  MelConfig mel;
  mel.n_mels = cfg.n_mels;
  const auto [mean, sd] = feature_statistics(waves, mel);
  JointEmbedder model = JointEmbedder::init(cfg, Vocabulary::build(captions), train[0].waveform.sample_rate, mean, sd,
                                            derive_seed(seed, "init"));

  std::vector<Tensor> feats;
  for (const auto& c : train) feats.push_back(model.audio_features(c.waveform));
  std::vector<Tensor> val_feats;
  for (const auto& c : val) val_feats.push_back(model.audio_features(c.waveform));

  auto val_map = [&] {
    std::vector<Embedding> audio, text;
    std::vector<std::string> ids;
    std::vector<std::vector<std::size_t>> rel;
    for (std::size_t i = 0; i < val.size(); ++i) {
      audio.push_back(model.embed_features(val_feats[i]));
      text.push_back(model.embed_text(val[i].captions.at(0)));
      ids.push_back(val[i].id);
      rel.push_back({i});
    }
    return map_at_10(build_similarity(text, audio, ids, ids, std::move(rel)));
  };

  const SinkhornOptions ot{cfg.epsilon, cfg.sinkhorn_iters, cfg.sinkhorn_tol};
  Rng order_rng(derive_seed(seed, "order"));
  Rng caption_rng(derive_seed(seed, "captions"));
  AdamState adam;
  EmbedderTrainResult result;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    int batches = 0;
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::size_t end = std::min(order.size(), start + bs);
      if (end - start < 2) break;
      if (order.size() - end < 2) end = order.size();  // fold a tiny tail into this batch
      Graph g;
      Graph::Var audio{}, text{};
      for (std::size_t k = start; k < end; ++k) {
        const auto& clip = train[order[k]];
        const auto& cap = clip.captions[uniform_index(caption_rng, clip.captions.size())];
        auto a = model.audio_tower(g, feats[order[k]]);
        auto t = model.text_tower(g, model.text_ids(cap));
        audio = k == start ? a : g.concat_rows(audio, a);
        text = k == start ? t : g.concat_rows(text, t);
      }
      auto loss = mltm_loss_node(g, audio, text, ot);
      Checkpoint grads = model.params().zeros_like();
      g.backward(loss, grads);
      optimizer_step(model.params(), grads, adam, cfg.lr);
      loss_sum += g.scalar(loss);
      ++batches;
      if (end == order.size()) break;
    }
    const double vmap = val_map();
    const double mean_loss = batches ? loss_sum / batches : 0.0;
    require(std::isfinite(mean_loss), ErrorKind::Numeric, "train_embedder: loss became non-finite");
    result.log.push_back({{"epoch", epoch}, {"loss", mean_loss}, {"val_map10", vmap}});
    if (result.best_epoch < 0 || vmap > result.best_val_map) {
      result.best_val_map = vmap;
      result.best_epoch = epoch;
      result.best = model.params();
    }
  }
  return result;
}

}  // namespace audiocap
