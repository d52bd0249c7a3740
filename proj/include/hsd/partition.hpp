#pragma once

// Key-phrase audit and category-stratified train/val/test splitting.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "hsd/features.hpp"
#include "hsd/random.hpp"
#include "hsd/textprep.hpp"

namespace hsd {

/// Corpus content inconsistent with a split bundle or another input.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Family { none, anti_immigration, anti_women };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::anti_immigration: return "anti_immigration";
    case Family::anti_women: return "anti_women";
    default: return "none";
  }
}

inline std::optional<Family> parse_family(std::string_view s) {
  if (s == "none") return Family::none;
  if (s == "anti_immigration") return Family::anti_immigration;
  if (s == "anti_women") return Family::anti_women;
  return std::nullopt;
}

struct Category {
  Family family = Family::none;
  bool hateful = false;

  /// 0..5, family-major.
  std::size_t index() const { return static_cast<std::size_t>(family) * 2 + (hateful ? 1 : 0); }
  static Category from_index(std::size_t i) { return {static_cast<Family>(i / 2), i % 2 == 1}; }
  bool operator==(const Category&) const = default;
};

inline constexpr std::size_t kCategoryCount = 6;

inline std::string to_string(const Category& c) {
  return to_string(c.family) + (c.hateful ? "/hateful" : "/not_hateful");
}

/// "build * wall" -> {"build the wall", "build that wall"}; '|' separates alternatives.
inline std::vector<std::string> expand_pattern(std::string_view pattern) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto bar = pattern.find('|', start);
    std::string alt = ascii_lower(pattern.substr(start, bar == std::string_view::npos ? bar : bar - start));
    alt = join(split_whitespace(alt));
    if (alt.empty()) throw std::invalid_argument("empty alternative in phrase pattern '" + std::string(pattern) + "'");
    if (const auto star = alt.find('*'); star != std::string::npos) {
      if (alt.find('*', star + 1) != std::string::npos) {
        throw std::invalid_argument("at most one '*' per phrase: '" + alt + "'");
      }
      for (const char* fill : {"the", "that"}) out.push_back(alt.substr(0, star) + fill + alt.substr(star + 1));
    } else {
      out.push_back(alt);
    }
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return out;
}

/// A named row of the audit table.
struct PhraseGroup {
  Family family = Family::none;
  std::string name;                   // pattern as written
  std::vector<std::string> variants;  // lowercase substrings
};

struct KeyPhraseSet {
  std::vector<PhraseGroup> groups;
  // Family assigned when texts match both families.
  Family precedence = Family::anti_immigration;

  void add(Family family, std::string_view pattern) {
    if (family == Family::none) throw std::invalid_argument("phrases need a family other than none");
    groups.push_back({family, std::string(pattern), expand_pattern(pattern)});
  }

  static KeyPhraseSet defaults() {
    KeyPhraseSet p;
    p.add(Family::anti_immigration, "build * wall");
    p.add(Family::anti_immigration, "maga|make america great again");
    p.add(Family::anti_immigration, "illegal aliens");
    p.add(Family::anti_women, "bitch");
    return p;
  }

  /// Reads family<TAB>pattern lines; '#' starts a comment line.
  static KeyPhraseSet load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open phrase file " + path.string());
    KeyPhraseSet p;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(lineno, "expected family<TAB>pattern");
      auto family = parse_family(line.substr(0, tab));
      if (!family || *family == Family::none) {
        throw ParseError(lineno, "family must be anti_immigration or anti_women");
      }
      try {
        p.add(*family, line.substr(tab + 1));
      } catch (const std::invalid_argument& e) {
        throw ParseError(lineno, e.what());
      }
    }
    p.validate();
    return p;
  }

  void validate() const {
    for (Family f : {Family::anti_immigration, Family::anti_women}) {
      if (std::none_of(groups.begin(), groups.end(), [f](const PhraseGroup& g) { return g.family == f; })) {
        throw FormatError("phrase set has no " + to_string(f) + " patterns");
      }
    }
  }
};

/// Case-insensitive substring match of any variant.
inline bool matches(const PhraseGroup& group, std::string_view text) {
  const std::string low = utf8::to_lower(text);
  return std::any_of(group.variants.begin(), group.variants.end(),
                     [&](const std::string& v) { return low.find(v) != std::string::npos; });
}

inline Family match_family(std::string_view text, const KeyPhraseSet& phrases) {
  bool imm = false, women = false;
  for (const auto& g : phrases.groups) {
    if (!matches(g, text)) continue;
    (g.family == Family::anti_immigration ? imm : women) = true;
  }
  if (imm && women) return phrases.precedence;
  if (imm) return Family::anti_immigration;
  if (women) return Family::anti_women;
  return Family::none;
}

inline Category categorize(std::string_view clean_text, int label, const KeyPhraseSet& phrases) {
  return {match_family(clean_text, phrases), label == 1};
}

enum class Split { train, val, test };
inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

using Ratios = std::array<double, 3>;

/// Proportions of the original English partition: 9000 / 1000 / 2971.
inline constexpr Ratios kDefaultRatios{9000.0 / 12971.0, 1000.0 / 12971.0, 2971.0 / 12971.0};
using Histogram = std::array<std::array<std::size_t, kCategoryCount>, 3>;

struct SplitBundle {
  std::string provenance;  // "original" or "resplit"
  std::optional<std::uint64_t> seed;
  std::optional<Ratios> ratios;
  std::array<std::vector<std::string>, 3> ids;
  Histogram histogram{};
  std::vector<std::string> warnings;

  const std::vector<std::string>& operator[](Split s) const { return ids[static_cast<std::size_t>(s)]; }
  std::vector<std::string>& operator[](Split s) { return ids[static_cast<std::size_t>(s)]; }

  std::size_t size() const { return ids[0].size() + ids[1].size() + ids[2].size(); }

  /// Split of every id; throws DataError on an id listed twice.
  std::unordered_map<std::string, Split> membership() const {
    std::unordered_map<std::string, Split> out;
    for (Split s : kSplits) {
      for (const auto& id : (*this)[s]) {
        if (!out.emplace(id, s).second) throw DataError("id '" + id + "' appears in more than one split");
      }
    }
    return out;
  }
};

inline Histogram category_histogram(const std::vector<RawTweet>& corpus, const SplitBundle& bundle,
                                    const KeyPhraseSet& phrases) {
  const auto where = bundle.membership();
  Histogram h{};
  for (const auto& t : corpus) {
    auto it = where.find(t.id);
    if (it == where.end()) continue;
    h[static_cast<std::size_t>(it->second)][categorize(t.text, t.label, phrases).index()]++;
  }
  return h;
}

/// Bundle from pre-existing partitions, e.g. the corpus's official train/dev/test files.
inline SplitBundle bundle_from_partitions(const std::vector<RawTweet>& train, const std::vector<RawTweet>& val,
                                          const std::vector<RawTweet>& test, const KeyPhraseSet& phrases) {
  SplitBundle b;
  b.provenance = "original";
  std::vector<RawTweet> all;
  for (Split s : kSplits) {
    const auto& part = s == Split::train ? train : s == Split::val ? val : test;
    for (const auto& t : part) b[s].push_back(t.id);
    all.insert(all.end(), part.begin(), part.end());
  }
  b.histogram = category_histogram(all, b, phrases);
  return b;
}

namespace detail {

inline void check_ratios(const Ratios& r) {
  double sum = 0;
  for (double x : r) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::invalid_argument("split ratios must be nonnegative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("split ratios must sum to 1");
}

}  // namespace detail

/// Splits each of the six categories by `ratios` after a seeded shuffle.
///
/// Every category receives floor(n·ratio) per split; its remaining units go
/// to the splits whose cumulative shortfall against the exact target, summed
/// over categories with the same label, is largest. Per-category sizes stay
/// within one of the exact target and per-label totals track the ratios.
inline SplitBundle stratified_resplit(const std::vector<RawTweet>& corpus, const Ratios& ratios, std::uint64_t seed,
                                      const KeyPhraseSet& phrases) {
  detail::check_ratios(ratios);
  std::vector<const RawTweet*> sorted;
  sorted.reserve(corpus.size());
  for (const auto& t : corpus) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](const RawTweet* a, const RawTweet* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->id == sorted[i - 1]->id) throw DataError("duplicate id '" + sorted[i]->id + "'");
  }

  std::array<std::vector<std::string>, kCategoryCount> by_category;
  for (const auto* t : sorted) by_category[categorize(t->text, t->label, phrases).index()].push_back(t->id);

  SplitBundle b;
  b.provenance = "resplit";
  b.seed = seed;
  b.ratios = ratios;
  Rng rng(seed);
  const auto active = static_cast<std::size_t>(std::count_if(ratios.begin(), ratios.end(), [](double r) { return r > 0; }));
  std::array<std::array<double, 3>, 2> deficit{};  // [label][split]

  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    auto& ids = by_category[c];
    shuffle(ids, rng);
    const std::size_t n = ids.size();
    const auto label = c % 2;
    if (n > 0 && n < active) {
      b.warnings.push_back("category " + to_string(Category::from_index(c)) + " has " + std::to_string(n) +
                           " examples for " + std::to_string(active) + " splits");
    }
    std::array<std::size_t, 3> count{};
    std::array<double, 3> exact{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      exact[s] = static_cast<double>(n) * ratios[s];
      count[s] = static_cast<std::size_t>(std::floor(exact[s] + 1e-9));
      count[s] = std::min(count[s], n - assigned);
      assigned += count[s];
    }
    std::array<bool, 3> bumped{};
    while (assigned < n) {
      std::size_t best = 3;
      double best_key = 0;
      for (std::size_t s = 0; s < 3; ++s) {
        if (bumped[s] || ratios[s] <= 0) continue;
        const double key = deficit[label][s] + exact[s] - static_cast<double>(count[s]);
        if (best == 3 || key > best_key + 1e-12) {
          best = s;
          best_key = key;
        }
      }
      if (best == 3) break;
      bumped[best] = true;
      ++count[best];
      ++assigned;
    }
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      deficit[label][s] += exact[s] - static_cast<double>(count[s]);
      b.histogram[s][c] = count[s];
      for (std::size_t k = 0; k < count[s]; ++k) b.ids[s].push_back(ids[pos++]);
    }
  }
  for (auto& split : b.ids) std::sort(split.begin(), split.end());
  return b;
}

/// Hateful count over total count for one phrase row and split group.
struct RatioCell {
  std::size_t hateful = 0;
  std::size_t total = 0;
  std::optional<double> ratio() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(hateful) / static_cast<double>(total);
  }
};

struct HateRatioRow {
  std::string name;
  Family family = Family::none;
  bool is_total = false;
  RatioCell train_val;
  RatioCell test;
  std::size_t test_false_positives = 0;  // filled when predictions are supplied
};

struct HateRatioTable {
  std::vector<HateRatioRow> rows;
  std::optional<std::size_t> false_positives;
  std::size_t test_size = 0;
};

/// Per-phrase hate ratios on train+val versus test, followed by one total row
/// per family. `predictions` (id -> predicted label) adds false-positive counts.
inline HateRatioTable hate_ratio_table(const std::vector<RawTweet>& corpus, const SplitBundle& bundle,
                                       const KeyPhraseSet& phrases,
                                       const std::unordered_map<std::string, int>* predictions = nullptr) {
  const auto where = bundle.membership();
  std::unordered_set<std::string> present;
  for (const auto& t : corpus) present.insert(t.id);
  for (const auto& [id, split] : where) {
    if (!present.count(id)) throw DataError("split id '" + id + "' is not in the corpus");
  }

  HateRatioTable table;
  for (const auto& g : phrases.groups) table.rows.push_back({g.name, g.family, false, {}, {}, 0});
  for (Family f : {Family::anti_immigration, Family::anti_women}) {
    table.rows.push_back({"total " + to_string(f), f, true, {}, {}, 0});
  }
  if (predictions) table.false_positives = 0;

  for (const auto& t : corpus) {
    auto it = where.find(t.id);
    if (it == where.end()) continue;
    const bool is_test = it->second == Split::test;
    bool false_positive = false;
    if (is_test) {
      ++table.test_size;
      if (predictions) {
        auto p = predictions->find(t.id);
        if (p == predictions->end()) throw DataError("no prediction for test id '" + t.id + "'");
        false_positive = p->second == 1 && t.label == 0;
        if (false_positive) ++*table.false_positives;
      }
    }
    std::array<bool, 3> family_hit{};
    for (std::size_t i = 0; i < phrases.groups.size(); ++i) {
      if (!matches(phrases.groups[i], t.text)) continue;
      family_hit[static_cast<std::size_t>(phrases.groups[i].family)] = true;
      auto& row = table.rows[i];
      auto& cell = is_test ? row.test : row.train_val;
      ++cell.total;
      cell.hateful += t.label == 1 ? 1 : 0;
      row.test_false_positives += false_positive ? 1 : 0;
    }
    for (std::size_t k = 0; k < 2; ++k) {
      if (!family_hit[k + 1]) continue;
      auto& row = table.rows[phrases.groups.size() + k];
      auto& cell = is_test ? row.test : row.train_val;
      ++cell.total;
      cell.hateful += t.label == 1 ? 1 : 0;
      row.test_false_positives += false_positive ? 1 : 0;
    }
  }
  return table;
}

/// Ratio as a rounded whole percentage, or "n/a".
inline std::string format_ratio(const RatioCell& c) {
  auto r = c.ratio();
  if (!r) return "n/a";
  return std::to_string(static_cast<int>(std::lround(*r * 100.0))) + "%";
}

/// Aligned text rendering: phrase, train+val ratio, test ratio and, with
/// predictions, test false positives.
inline std::string format_hate_ratio_table(const HateRatioTable& t) {
  std::size_t width = 6;
  for (const auto& r : t.rows) width = std::max(width, r.name.size());
  auto pad = [](std::string s, std::size_t w, bool left) {
    if (s.size() < w) s = left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
    return s;
  };
  std::string out = pad("phrase", width, true) + pad("train+val", 11, false) + pad("test", 7, false);
  if (t.false_positives) out += pad("test FP", 9, false);
  out += '\n';
  for (const auto& r : t.rows) {
    out += pad(r.name, width, true) + pad(format_ratio(r.train_val), 11, false) + pad(format_ratio(r.test), 7, false);
    if (t.false_positives) out += pad(std::to_string(r.test_false_positives), 9, false);
    out += '\n';
  }
  if (t.false_positives) {
    out += std::to_string(*t.false_positives) + " false positives in " + std::to_string(t.test_size) +
           " test samples\n";
  }
  return out;
}

// JSON forms.

inline nlohmann::json to_json(const HateRatioTable& t) {
  auto cell = [](const RatioCell& c) {
    const auto r = c.ratio();
    return nlohmann::json{{"hateful", c.hateful}, {"total", c.total},
                          {"ratio", r ? nlohmann::json(*r) : nlohmann::json(nullptr)}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row{{"name", r.name}, {"family", to_string(r.family)}, {"total_row", r.is_total},
                       {"train_val", cell(r.train_val)}, {"test", cell(r.test)}};
    if (t.false_positives) row["test_false_positives"] = r.test_false_positives;
    rows.push_back(row);
  }
  nlohmann::json j{{"rows", rows}, {"test_size", t.test_size}};
  if (t.false_positives) j["false_positives"] = *t.false_positives;
  return j;
}

inline nlohmann::json to_json(const SplitBundle& b) {
  nlohmann::json j;
  j["provenance"] = b.provenance;
  j["seed"] = b.seed ? nlohmann::json(*b.seed) : nlohmann::json(nullptr);
  j["ratios"] = b.ratios ? nlohmann::json(*b.ratios) : nlohmann::json(nullptr);
  nlohmann::json splits = nlohmann::json::object();
  nlohmann::json hist = nlohmann::json::object();
  for (Split s : kSplits) {
    splits[to_string(s)] = b[s];
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t c = 0; c < kCategoryCount; ++c) {
      row[to_string(Category::from_index(c))] = b.histogram[static_cast<std::size_t>(s)][c];
    }
    hist[to_string(s)] = row;
  }
  j["splits"] = splits;
  j["histogram"] = hist;
  j["warnings"] = b.warnings;
  return j;
}

inline SplitBundle split_bundle_from_json(const nlohmann::json& j) {
  SplitBundle b;
  try {
    b.provenance = j.at("provenance").get<std::string>();
    if (j.contains("seed") && !j["seed"].is_null()) b.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("ratios") && !j["ratios"].is_null()) b.ratios = j["ratios"].get<Ratios>();
    for (Split s : kSplits) b[s] = j.at("splits").at(to_string(s)).get<std::vector<std::string>>();
    if (j.contains("histogram")) {
      for (Split s : kSplits) {
        const auto& row = j["histogram"].at(to_string(s));
        for (std::size_t c = 0; c < kCategoryCount; ++c) {
          b.histogram[static_cast<std::size_t>(s)][c] = row.at(to_string(Category::from_index(c))).get<std::size_t>();
        }
      }
    }
    if (j.contains("warnings")) b.warnings = j["warnings"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid split bundle: ") + e.what());
  }
  b.membership();
  return b;
}

inline SplitBundle load_split_bundle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open split bundle " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return split_bundle_from_json(j);
}

inline void save_split_bundle(const std::filesystem::path& path, const SplitBundle& b) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << to_json(b).dump(2) << '\n';
}

/// Subset of a corpus in one split, in bundle order.
inline std::vector<RawTweet> select_split(const std::vector<RawTweet>& corpus, const SplitBundle& bundle, Split s) {
  std::unordered_map<std::string, const RawTweet*> by_id;
  for (const auto& t : corpus) by_id.emplace(t.id, &t);
  std::vector<RawTweet> out;
  for (const auto& id : bundle[s]) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("split id '" + id + "' is not in the corpus");
    out.push_back(*it->second);
  }
  return out;
}

}  // namespace hsd
