#pragma once

// Synthetic data for demos and smoke tests.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hsd/experiment.hpp"
#include "hsd/textprep.hpp"

namespace hsd {

/// Two Gaussian clusters rendered as `len`×`dim` sequences: every value of a
/// label-1 example is drawn from N(+shift, 1), label 0 from N(-shift, 1).
/// Labels alternate, so classes are balanced.
inline Dataset gaussian_clusters(std::size_t n, std::size_t len, std::size_t dim, double shift, std::uint64_t seed,
                                 const std::string& prefix = "x") {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset out;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    Tensor<float> x(Shape{len, dim});
    for (auto& v : x.data()) v = static_cast<float>((label ? shift : -shift) + noise(rng));
    out.push_back({prefix + std::to_string(1000 + i), FeatureSequence(std::move(x)), label});
  }
  return out;
}

/// A small labeled "language": cleaned tweets with key phrases, a stratified
/// bundle and two-layer frozen features whose channels carry a label signal.
struct SyntheticLanguage {
  std::vector<RawTweet> corpus;
  SplitBundle bundle;
  FeatureFile features;
};

struct SyntheticOptions {
  std::string prefix = "en";
  Language language = Language::en;
  std::size_t size = 120;
  std::uint32_t dim = 8;
  double shift = 1.0;        // per-channel mean offset between the classes
  double lang_offset = 0.0;  // added to every channel for this language
  std::uint64_t seed = 1;
};

inline SyntheticLanguage synthetic_language(const SyntheticOptions& o) {
  static const std::vector<std::string> hateful{"go", "home", "invaders", "trash", "never", "out"};
  static const std::vector<std::string> neutral{"welcome", "friends", "great", "today", "love", "help"};
  static const std::vector<std::string> phrases{"build the wall", "illegal aliens", "bitch", "maga", ""};
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  SyntheticLanguage out;
  out.features.header.dim = o.dim;
  out.features.header.layers = 2;
  out.features.header.extractor = "synthetic";
  for (std::size_t i = 0; i < o.size; ++i) {
    const int label = static_cast<int>(rng() % 2);
    const auto& words = label ? hateful : neutral;
    std::string text = phrases[rng() % phrases.size()];
    const std::size_t extra = 1 + rng() % 4;
    for (std::size_t k = 0; k < extra; ++k) text += (text.empty() ? "" : " ") + words[rng() % words.size()];
    char id[32];
    std::snprintf(id, sizeof id, "%s%04zu", o.prefix.c_str(), i);
    out.corpus.push_back({id, text, label, o.language});

    FeatureRecord r;
    r.id = id;
    r.seq_len = static_cast<std::uint32_t>(2 + rng() % 4);
    for (std::uint32_t layer = 0; layer < 2; ++layer)
      for (std::uint32_t t = 0; t < r.seq_len; ++t)
        for (std::uint32_t j = 0; j < o.dim; ++j) {
          const double mean = (label ? o.shift : -o.shift) * (layer == 1 ? 1.0 : 0.5) + o.lang_offset;
          r.payload.push_back(static_cast<float>(mean + noise(rng)));
        }
    out.features.records.push_back(std::move(r));
  }
  out.bundle = stratified_resplit(out.corpus, {0.6, 0.2, 0.2}, o.seed, KeyPhraseSet::defaults());
  return out;
}

/// Writes corpus.tsv, splits.json, features.frzf and embeddings.txt under
/// `dir/<prefix>` and returns a reference using the FRZF features.
inline PartitionRef write_synthetic(const std::filesystem::path& dir, const SyntheticOptions& o,
                                    SyntheticLanguage* keep = nullptr) {
  const auto lang = synthetic_language(o);
  const auto root = dir / o.prefix;
  std::filesystem::create_directories(root);
  write_corpus_tsv(root / "corpus.tsv", lang.corpus);
  save_split_bundle(root / "splits.json", lang.bundle);
  write_feature_file(root / "features.frzf", lang.features);
  std::ofstream emb(root / "embeddings.txt");
  std::mt19937_64 rng(o.seed + 1);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (const auto* words : {"go home invaders trash never out", "welcome friends great today love help"}) {
    const bool hateful = words[0] == 'g';
    std::istringstream in(words);
    for (std::string w; in >> w;) {
      emb << w;
      for (std::uint32_t j = 0; j < o.dim; ++j) emb << ' ' << (hateful ? 1.0 : -1.0) + noise(rng);
      emb << '\n';
    }
  }
  if (keep) *keep = lang;
  return PartitionRef{root / "corpus.tsv", root / "splits.json", root / "features.frzf", std::nullopt};
}

}  // namespace hsd
