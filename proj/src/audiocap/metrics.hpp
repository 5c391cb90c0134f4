#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace audiocap {

using Embedding = std::vector<double>;

/// Query x item similarity scores with ground-truth relevance per query.
struct SimilarityMatrix {
  std::vector<std::string> query_ids;
  std::vector<std::string> item_ids;
  std::vector<double> values;  // queries x items, row-major
  std::vector<std::vector<std::size_t>> relevance;

  std::size_t num_queries() const { return query_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }
  double at(std::size_t q, std::size_t i) const { return values[q * item_ids.size() + i]; }
  double& at(std::size_t q, std::size_t i) { return values[q * item_ids.size() + i]; }
  /// Throws unless shapes agree, entries are finite and every query has a relevant item.
  void validate() const;
  bool operator==(const SimilarityMatrix&) const = default;
};

double cosine(std::span<const double> a, std::span<const double> b);

SimilarityMatrix build_similarity(std::span<const Embedding> queries, std::span<const Embedding> items,
                                  std::vector<std::string> query_ids, std::vector<std::string> item_ids,
                                  std::vector<std::vector<std::size_t>> relevance);

/// Item indices by descending score; equal scores keep the lower index first.
std::vector<std::size_t> rank_items(const SimilarityMatrix& sim, std::size_t query);

double recall_at_k(const SimilarityMatrix& sim, std::size_t k);
double average_precision_at_10(const SimilarityMatrix& sim, std::size_t query);
std::vector<double> per_query_ap10(const SimilarityMatrix& sim);
double map_at_10(const SimilarityMatrix& sim);

/// Weighted mean of identically-shaped matrices; weights are normalised to sum 1.
SimilarityMatrix ensemble_sims(std::span<const SimilarityMatrix> matrices, std::span<const double> weights);

/// CIDEr-D (n = 1..4, sigma = 6, clipped counts, x10). Document frequencies
/// come from the reference sets passed at construction.
class CiderScorer {
 public:
  explicit CiderScorer(const std::map<std::string, std::vector<std::string>>& references);
  double score(const std::string& id, const std::string& candidate) const;
  std::size_t corpus_size() const { return refs_.size(); }

 private:
  using Counts = std::map<std::string, double>;
  struct Vec {
    std::vector<Counts> tfidf;  // per n
    std::vector<double> norm;
    std::size_t length = 0;
  };
  Vec vectorize(const std::string& text) const;

  std::map<std::string, double> doc_freq_;
  double log_corpus_ = 0.0;
  std::map<std::string, std::vector<Vec>> refs_;
};

/// Corpus CIDEr-D: mean per-item score over the candidate ids.
double cider_d(const std::map<std::string, std::string>& candidates,
               const std::map<std::string, std::vector<std::string>>& references);

std::size_t vocabulary_size(std::span<const std::string> texts);

}  // namespace audiocap
