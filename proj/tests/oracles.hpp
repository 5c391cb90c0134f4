#pragma once

// Independent reference implementations shared by the unit tests and the
// acceptance run. They are written from the formulas, not from the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "audiocap/metrics.hpp"
#include "audiocap/tensor.hpp"

namespace oracle {

using audiocap::SimilarityMatrix;
using audiocap::Tensor;

// Plain-domain matrix scaling, run far past convergence.
inline std::vector<double> scaling(const Tensor& cost, double eps, int iters) {
  const auto n = cost.rows(), m = cost.cols();
  std::vector<double> k(n * m), u(n, 1.0), v(m, 1.0);
  for (std::size_t i = 0; i < n * m; ++i) k[i] = std::exp(-cost.values[i] / eps);
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < m; ++j) s += k[i * m + j] * v[j];
      u[i] = (1.0 / n) / s;
    }
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i * m + j] * u[i];
      v[j] = (1.0 / m) / s;
    }
  }
  std::vector<double> p(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) p[i * m + j] = u[i] * k[i * m + j] * v[j];
  return p;
}

// Rank of an item: items scoring higher, plus equal scores at lower indices, plus one.
inline std::size_t rank(const SimilarityMatrix& s, std::size_t q, std::size_t item) {
  std::size_t r = 1;
  for (std::size_t j = 0; j < s.num_items(); ++j)
    if (s.at(q, j) > s.at(q, item) || (s.at(q, j) == s.at(q, item) && j < item)) ++r;
  return r;
}

inline double map_at_10(const SimilarityMatrix& s) {
  double total = 0.0;
  for (std::size_t q = 0; q < s.num_queries(); ++q) {
    const auto& rel = s.relevance[q];
    // Precision terms are accumulated in rank order, as the definition reads.
    std::map<std::size_t, double> terms;
    for (auto item : rel) {
      const auto r = rank(s, q, item);
      if (r > 10) continue;
      std::size_t above = 0;
      for (auto other : rel)
        if (rank(s, q, other) <= r) ++above;
      terms[r] = static_cast<double>(above) / static_cast<double>(r);
    }
    double ap = 0.0;
    for (const auto& [r, p] : terms) ap += p;
    total += ap / static_cast<double>(std::min<std::size_t>(10, rel.size()));
  }
  return total / static_cast<double>(s.num_queries());
}

inline double recall_at_k(const SimilarityMatrix& s, std::size_t k) {
  double hits = 0.0;
  for (std::size_t q = 0; q < s.num_queries(); ++q) {
    bool hit = false;
    for (auto item : s.relevance[q]) hit = hit || rank(s, q, item) <= k;
    hits += hit ? 1.0 : 0.0;
  }
  return hits / static_cast<double>(s.num_queries());
}

// Straight transcription of the CIDEr-D formula, kept apart from the library code.
inline double cider_d(const std::map<std::string, std::string>& cands,
                    const std::map<std::string, std::vector<std::string>>& refs) {
  using Grams = std::map<std::vector<std::string>, double>;
  auto words = [](const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> w;
    for (std::string t; in >> t;) w.push_back(t);
    return w;
  };
  auto grams = [&](const std::string& s, std::size_t n) {
    Grams g;
    const auto w = words(s);
    for (std::size_t i = 0; i + n <= w.size(); ++i) g[std::vector<std::string>(w.begin() + i, w.begin() + i + n)] += 1;
    return g;
  };
  std::map<std::vector<std::string>, double> df;
  for (const auto& [id, rs] : refs) {
    std::set<std::vector<std::string>> seen;
    for (const auto& r : rs)
      for (std::size_t n = 1; n <= 4; ++n)
        for (const auto& [g, c] : grams(r, n)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1;
  }
  const double log_n = std::log(static_cast<double>(refs.size()));
  auto weigh = [&](const Grams& g) {
    Grams out;
    for (const auto& [k, c] : g) out[k] = c * (log_n - std::log(std::max(1.0, df[k])));
    return out;
  };
  auto l2 = [](const Grams& g) {
    double s = 0;
    for (const auto& [k, v] : g) s += v * v;
    return std::sqrt(s);
  };
  double total = 0.0;
  for (const auto& [id, cand] : cands) {
    const auto& rs = refs.at(id);
    double score = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hv = weigh(grams(cand, n));
      for (const auto& r : rs) {
        const auto rv = weigh(grams(r, n));
        double dot = 0.0;
        for (const auto& [k, v] : hv) {
          const auto it = rv.find(k);
          if (it != rv.end()) dot += std::min(v, it->second) * it->second;
        }
        const double nh = l2(hv), nr = l2(rv);
        if (nh > 0 && nr > 0) dot /= nh * nr;
        const double delta = static_cast<double>(words(cand).size()) - static_cast<double>(words(r).size());
        score += dot * std::exp(-delta * delta / 72.0);
      }
    }
    total += 10.0 * score / 4.0 / static_cast<double>(rs.size());
  }
  return total / static_cast<double>(cands.size());
}

}  // namespace oracle
