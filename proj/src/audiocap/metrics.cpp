#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "error.hpp"
#include "vocab.hpp"

namespace audiocap {

namespace {

constexpr int kMaxN = 4;
constexpr double kSigma = 6.0;

std::vector<std::map<std::string, double>> ngram_counts(const std::vector<std::string>& words) {
  std::vector<std::map<std::string, double>> out(kMaxN);
  for (int n = 1; n <= kMaxN; ++n)
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= words.size(); ++i) {
      std::string g = words[i];
      for (int k = 1; k < n; ++k) g += ' ' + words[i + static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(n - 1)][g] += 1.0;
    }
  return out;
}

}  // namespace

void SimilarityMatrix::validate() const {
  require(values.size() == query_ids.size() * item_ids.size(), ErrorKind::Contract,
          "similarity matrix: value count does not match ids");
  require(relevance.size() == query_ids.size(), ErrorKind::Contract, "similarity matrix: relevance per query missing");
  for (double v : values) require(std::isfinite(v), ErrorKind::Numeric, "similarity matrix: non-finite entry");
  for (const auto& rel : relevance) {
    require(!rel.empty(), ErrorKind::Contract, "similarity matrix: query without relevant items");
    for (auto r : rel) require(r < item_ids.size(), ErrorKind::Contract, "similarity matrix: relevant index out of range");
  }
}

double cosine(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::InvalidArgument, "cosine: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

SimilarityMatrix build_similarity(std::span<const Embedding> queries, std::span<const Embedding> items,
                                  std::vector<std::string> query_ids, std::vector<std::string> item_ids,
                                  std::vector<std::vector<std::size_t>> relevance) {
  require(query_ids.size() == queries.size() && item_ids.size() == items.size(), ErrorKind::InvalidArgument,
          "build_similarity: id count mismatch");
  SimilarityMatrix sim;
  sim.query_ids = std::move(query_ids);
  sim.item_ids = std::move(item_ids);
  sim.relevance = std::move(relevance);
  sim.values.resize(queries.size() * items.size());
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (std::size_t i = 0; i < items.size(); ++i) {
      require(queries[q].size() == items[i].size(), ErrorKind::InvalidArgument, "build_similarity: dimension mismatch");
      sim.at(q, i) = cosine(queries[q], items[i]);
    }
  sim.validate();
  return sim;
}

std::vector<std::size_t> rank_items(const SimilarityMatrix& sim, std::size_t query) {
  std::vector<std::size_t> order(sim.num_items());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sim.at(query, a) > sim.at(query, b); });
  return order;
}

double recall_at_k(const SimilarityMatrix& sim, std::size_t k) {
  require(k >= 1, ErrorKind::InvalidArgument, "recall_at_k: k must be at least 1");
  sim.validate();
  if (sim.num_queries() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < sim.num_queries(); ++q) {
    const auto order = rank_items(sim, q);
    const std::set<std::size_t> rel(sim.relevance[q].begin(), sim.relevance[q].end());
    for (std::size_t r = 0; r < std::min(k, order.size()); ++r)
      if (rel.count(order[r])) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(sim.num_queries());
}

double average_precision_at_10(const SimilarityMatrix& sim, std::size_t query) {
  const auto order = rank_items(sim, query);
  const std::set<std::size_t> rel(sim.relevance[query].begin(), sim.relevance[query].end());
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < std::min<std::size_t>(10, order.size()); ++r)
    if (rel.count(order[r])) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(r + 1);
    }
  return sum / static_cast<double>(std::min<std::size_t>(10, rel.size()));
}

std::vector<double> per_query_ap10(const SimilarityMatrix& sim) {
  sim.validate();
  std::vector<double> out(sim.num_queries());
  for (std::size_t q = 0; q < out.size(); ++q) out[q] = average_precision_at_10(sim, q);
  return out;
}

double map_at_10(const SimilarityMatrix& sim) {
  const auto ap = per_query_ap10(sim);
  if (ap.empty()) return 0.0;
  return std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ap.size());
}

SimilarityMatrix ensemble_sims(std::span<const SimilarityMatrix> matrices, std::span<const double> weights) {
  require(!matrices.empty(), ErrorKind::InvalidArgument, "ensemble_sims: no matrices");
  require(weights.size() == matrices.size(), ErrorKind::InvalidArgument, "ensemble_sims: one weight per matrix");
  double total = 0.0;
  for (double w : weights) {
    require(w >= 0.0 && std::isfinite(w), ErrorKind::InvalidArgument, "ensemble_sims: weights must be non-negative");
    total += w;
  }
  require(total > 0.0, ErrorKind::InvalidArgument, "ensemble_sims: weights must not all be zero");
  const auto& first = matrices[0];
  SimilarityMatrix out = first;
  std::fill(out.values.begin(), out.values.end(), 0.0);
  for (std::size_t m = 0; m < matrices.size(); ++m) {
    const auto& s = matrices[m];
    require(s.query_ids == first.query_ids && s.item_ids == first.item_ids && s.relevance == first.relevance,
            ErrorKind::InvalidArgument, "ensemble_sims: matrices differ in shape, ids or relevance");
    const double w = weights[m] / total;
    for (std::size_t k = 0; k < out.values.size(); ++k) out.values[k] += w * s.values[k];
  }
  return out;
}

CiderScorer::CiderScorer(const std::map<std::string, std::vector<std::string>>& references) {
  // Document frequency: number of items whose reference set contains the n-gram.
  for (const auto& [id, texts] : references) {
    require(!texts.empty(), ErrorKind::InvalidArgument, "cider: item '" + id + "' has no references");
    std::set<std::string> seen;
    for (const auto& t : texts)
      for (const auto& level : ngram_counts(tokenize(t)))
        for (const auto& [g, c] : level) seen.insert(g);
    for (const auto& g : seen) doc_freq_[g] += 1.0;
  }
  log_corpus_ = std::log(static_cast<double>(std::max<std::size_t>(1, references.size())));
  for (const auto& [id, texts] : references) {
    auto& vecs = refs_[id];
    for (const auto& t : texts) vecs.push_back(vectorize(t));
  }
}

CiderScorer::Vec CiderScorer::vectorize(const std::string& text) const {
  const auto words = tokenize(text);
  auto counts = ngram_counts(words);
  Vec v;
  v.length = words.size();
  v.tfidf.resize(kMaxN);
  v.norm.assign(kMaxN, 0.0);
  for (int n = 0; n < kMaxN; ++n) {
    for (const auto& [g, tf] : counts[static_cast<std::size_t>(n)]) {
      auto it = doc_freq_.find(g);
      const double df = std::log(std::max(1.0, it == doc_freq_.end() ? 0.0 : it->second));
      const double w = tf * (log_corpus_ - df);
      v.tfidf[static_cast<std::size_t>(n)][g] = w;
      v.norm[static_cast<std::size_t>(n)] += w * w;
    }
    v.norm[static_cast<std::size_t>(n)] = std::sqrt(v.norm[static_cast<std::size_t>(n)]);
  }
  return v;
}

double CiderScorer::score(const std::string& id, const std::string& candidate) const {
  auto it = refs_.find(id);
  require(it != refs_.end(), ErrorKind::InvalidArgument, "cider: no references for '" + id + "'");
  const Vec hyp = vectorize(candidate);
  if (hyp.length == 0) return 0.0;
  double total = 0.0;
  for (const auto& ref : it->second) {
    const double delta = static_cast<double>(hyp.length) - static_cast<double>(ref.length);
    const double penalty = std::exp(-(delta * delta) / (2.0 * kSigma * kSigma));
    double per_n_sum = 0.0;
    for (int n = 0; n < kMaxN; ++n) {
      const auto& hv = hyp.tfidf[static_cast<std::size_t>(n)];
      const auto& rv = ref.tfidf[static_cast<std::size_t>(n)];
      double val = 0.0;
      for (const auto& [g, w] : hv) {
        auto rit = rv.find(g);
        if (rit != rv.end()) val += std::min(w, rit->second) * rit->second;
      }
      const double denom = hyp.norm[static_cast<std::size_t>(n)] * ref.norm[static_cast<std::size_t>(n)];
      if (denom != 0.0) val /= denom;
      per_n_sum += val * penalty;
    }
    total += per_n_sum / kMaxN;
  }
  return 10.0 * total / static_cast<double>(it->second.size());
}

double cider_d(const std::map<std::string, std::string>& candidates,
               const std::map<std::string, std::vector<std::string>>& references) {
  if (candidates.empty()) return 0.0;
  std::map<std::string, std::vector<std::string>> used;
  for (const auto& [id, text] : candidates) {
    auto it = references.find(id);
    require(it != references.end(), ErrorKind::InvalidArgument, "cider: no references for '" + id + "'");
    used[id] = it->second;
  }
  const CiderScorer scorer(used);
  double total = 0.0;
  for (const auto& [id, text] : candidates) total += scorer.score(id, text);
  return total / static_cast<double>(candidates.size());
}

std::size_t vocabulary_size(std::span<const std::string> texts) {
  std::set<std::string> words;
  for (const auto& t : texts)
    for (auto& w : tokenize(t)) words.insert(std::move(w));
  return words.size();
}

}  // namespace audiocap
