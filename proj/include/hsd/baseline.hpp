#pragma once

// tf-idf features and a linear SVM trained by dual coordinate descent.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hsd/random.hpp"

namespace hsd {

inline constexpr double kDefaultSvmC = 3.5938;

struct SparseVector {
  std::vector<std::pair<std::uint32_t, double>> entries;  // sorted by index

  double dot(const std::vector<double>& w) const {
    double s = 0;
    for (const auto& [i, v] : entries) s += w[i] * v;
    return s;
  }
  double squared_norm() const {
    double s = 0;
    for (const auto& [i, v] : entries) s += v * v;
    return s;
  }
};

/// Smoothed tf-idf: idf(t) = ln((1 + N) / (1 + df(t))) + 1, raw term counts,
/// rows scaled to unit L2 norm. Terms unseen during fit are dropped.
class TfidfVectorizer {
 public:
  void fit(const std::vector<std::vector<std::string>>& docs) {
    if (docs.empty()) throw std::invalid_argument("tfidf: empty corpus");
    std::map<std::string, std::size_t> df;
    for (const auto& doc : docs) {
      std::vector<std::string> uniq(doc);
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      for (const auto& t : uniq) ++df[t];
    }
    vocab_.clear();
    idf_.clear();
    const double n = static_cast<double>(docs.size());
    for (const auto& [term, count] : df) {
      vocab_.emplace(term, static_cast<std::uint32_t>(idf_.size()));
      idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
  }

  SparseVector transform(const std::vector<std::string>& doc) const {
    std::map<std::uint32_t, double> counts;
    for (const auto& t : doc) {
      auto it = vocab_.find(t);
      if (it != vocab_.end()) counts[it->second] += 1.0;
    }
    SparseVector v;
    double norm = 0;
    for (const auto& [i, c] : counts) {
      const double w = c * idf_[i];
      v.entries.emplace_back(i, w);
      norm += w * w;
    }
    norm = std::sqrt(norm);
    if (norm > 0)
      for (auto& e : v.entries) e.second /= norm;
    return v;
  }

  std::vector<SparseVector> transform(const std::vector<std::vector<std::string>>& docs) const {
    std::vector<SparseVector> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(transform(d));
    return out;
  }

  std::size_t vocabulary_size() const { return idf_.size(); }

  double idf(const std::string& term) const {
    auto it = vocab_.find(term);
    if (it == vocab_.end()) throw std::out_of_range("tfidf: '" + term + "' not in vocabulary");
    return idf_[it->second];
  }

  std::uint32_t index(const std::string& term) const { return vocab_.at(term); }

 private:
  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<double> idf_;
};

struct LinearSvm {
  std::vector<double> weights;
  double bias = 0;
  int tie_label = 0;  // majority training label, used when the decision value is exactly 0

  double decision(const SparseVector& x) const { return x.dot(weights) + bias; }
  int predict(const SparseVector& x) const {
    const double v = decision(x);
    return v > 0 ? 1 : v < 0 ? 0 : tie_label;
  }
};

struct SvmOptions {
  double C = kDefaultSvmC;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;  // stop when an epoch lowers the objective by less
  std::size_t max_epochs = 1000;
};

struct SvmResult {
  LinearSvm model;
  // Dual objective ½·αᵀQα − Σα after each epoch; never increases.
  std::vector<double> objective;
};

/// L2-regularized hinge-loss SVM, solved in the dual by coordinate descent
/// over a seeded permutation each epoch. The bias is learned as the weight
/// of a constant feature 1.
inline SvmResult svm_train(const std::vector<SparseVector>& x, const std::vector<int>& y, std::size_t dim,
                           const SvmOptions& opt = {}) {
  if (!(opt.C > 0)) throw std::invalid_argument("svm: C must be positive");
  if (x.size() != y.size() || x.empty()) throw std::invalid_argument("svm: need matching, nonempty inputs");
  const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (positives == 0 || positives == y.size()) throw std::invalid_argument("svm: training set has a single class");
  for (const auto& v : x)
    for (const auto& [i, _] : v.entries)
      if (i >= dim) throw std::invalid_argument("svm: feature index beyond dimension");

  const std::size_t n = x.size();
  std::vector<double> alpha(n, 0.0), sign(n), qii(n);
  for (std::size_t i = 0; i < n; ++i) {
    sign[i] = y[i] == 1 ? 1.0 : -1.0;
    qii[i] = x[i].squared_norm() + 1.0;
  }
  SvmResult result;
  LinearSvm& m = result.model;
  m.weights.assign(dim, 0.0);
  m.tie_label = positives * 2 >= n ? 1 : 0;

  auto objective = [&] {
    double ww = m.bias * m.bias, sa = 0;
    for (double w : m.weights) ww += w * w;
    for (double a : alpha) sa += a;
    return 0.5 * ww - sa;
  };

  Rng rng(opt.seed);
  double previous = objective();
  for (std::size_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    for (std::size_t i : permutation(n, rng)) {
      const double g = sign[i] * m.decision(x[i]) - 1.0;
      const double updated = std::clamp(alpha[i] - g / qii[i], 0.0, opt.C);
      const double delta = (updated - alpha[i]) * sign[i];
      if (delta == 0.0) continue;
      alpha[i] = updated;
      for (const auto& [k, v] : x[i].entries) m.weights[k] += delta * v;
      m.bias += delta;
    }
    const double current = objective();
    result.objective.push_back(current);
    if (previous - current < opt.tolerance) break;
    previous = current;
  }
  return result;
}

}  // namespace hsd
