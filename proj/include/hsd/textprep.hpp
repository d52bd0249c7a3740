#pragma once

// Tweet cleaning and descriptive corpus statistics.
//
// clean() applies, in order:
//   1. strip @-mentions            6. ordinal numbers to words ("2nd" -> "second")
//   2. strip URLs                  7. abbreviation table ("MAGA" -> "make america ...")
//   3. drop genitive 's            8. camel-case split of hashtags and concatenations
//   4. contraction table, then     9. emoji table (codepoints -> names)
//      remaining apostrophes      10. lowercase, split punctuation, whitespace tokenize
//   5. en/em dashes to hyphen
//
// Ordinals and abbreviations are applied again after steps 8 and 9 so that
// words surfaced by splitting are expanded too; this keeps clean() idempotent.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "hsd/features.hpp"

namespace hsd {

enum class Language { en, es };

inline std::string to_string(Language l) { return l == Language::en ? "en" : "es"; }

inline std::optional<Language> parse_language(std::string_view s) {
  if (s == "en") return Language::en;
  if (s == "es") return Language::es;
  return std::nullopt;
}

struct RawTweet {
  std::string id;
  std::string text;
  int label = 0;  // 1 = hateful
  Language language = Language::en;
};

struct CleanTweet {
  std::string id;
  std::string text;
  std::vector<std::string> tokens;
};

namespace utf8 {

/// Appends the UTF-8 encoding of a codepoint.
inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

inline std::string encode(char32_t cp) {
  std::string s;
  append(s, cp);
  return s;
}

inline std::size_t length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

/// ASCII and Latin-1 Supplement uppercase letters to lowercase.
inline std::string to_lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      out += static_cast<char>(std::tolower(c));
    } else if (c == 0xC3 && i + 1 < s.size()) {
      auto next = static_cast<unsigned char>(s[i + 1]);
      // U+00C0..U+00DE map to U+00E0..U+00FE, except U+00D7 (multiplication sign).
      if (next >= 0x80 && next <= 0x9E && next != 0x97) next = static_cast<unsigned char>(next + 0x20);
      out += static_cast<char>(c);
      out += static_cast<char>(next);
      ++i;
    } else {
      out += static_cast<char>(c);
    }
  }
  return out;
}

}  // namespace utf8

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

/// Replacement tables driving the cleaning pipeline.
struct RuleSet {
  // Lowercase keys containing an apostrophe. Keys starting with '*' are
  // suffix rules: "*n't" -> " not" rewrites any word ending in "n't".
  std::vector<std::pair<std::string, std::string>> contractions;
  // Lowercase whole-word keys.
  std::unordered_map<std::string, std::string> abbreviations;
  // UTF-8 sequences to names.
  std::vector<std::pair<std::string, std::string>> emoji;

  /// Loads contractions.tsv, abbreviations.tsv and emoji.tsv from a directory.
  static RuleSet load(const std::filesystem::path& dir);
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> read_rule_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open rule table " + path.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError(lineno, path.filename().string() + ": expected key<TAB>value");
    }
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

// "U+1F602 U+FE0F" -> UTF-8 bytes. Keys without the U+ prefix are taken literally.
inline std::string decode_codepoints(const std::string& key) {
  if (key.rfind("U+", 0) != 0) return key;
  std::string out;
  for (const auto& part : split_whitespace(key)) {
    if (part.size() < 3 || part.rfind("U+", 0) != 0) throw std::invalid_argument("bad codepoint '" + part + "'");
    out += utf8::encode(static_cast<char32_t>(std::stoul(part.substr(2), nullptr, 16)));
  }
  return out;
}

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

// Rewrites maximal runs of characters satisfying `in_word` using `fn`.
template <class Pred, class Fn>
std::string map_runs(std::string_view text, Pred&& in_word, Fn&& fn) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (!in_word(text[i])) {
      out += text[i++];
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && in_word(text[j])) ++j;
    out += fn(std::string(text.substr(i, j - i)));
    i = j;
  }
  return out;
}

// Rewrites maximal runs of word bytes (plus `extra` characters) using `fn`.
template <class Fn>
std::string map_words(std::string_view text, std::string_view extra, Fn&& fn) {
  return map_runs(
      text,
      [&](char c) { return is_word_byte(static_cast<unsigned char>(c)) || extra.find(c) != std::string_view::npos; },
      fn);
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

inline std::string cardinal_words(int n) {
  static const char* ones[] = {"zero",    "one",     "two",       "three",    "four",    "five",    "six",
                               "seven",   "eight",   "nine",      "ten",      "eleven",  "twelve",  "thirteen",
                               "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
  static const char* tens[] = {"", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};
  std::string out;
  if (n >= 100) {
    out = std::string(ones[n / 100]) + " hundred";
    n %= 100;
    if (n == 0) return out;
    out += ' ';
  }
  if (n < 20) return out + ones[n];
  out += tens[n / 10];
  if (n % 10) out += std::string(" ") + ones[n % 10];
  return out;
}

inline std::string ordinal_words(int n) {
  std::string words = cardinal_words(n);
  const auto space = words.rfind(' ');
  std::string head = space == std::string::npos ? "" : words.substr(0, space + 1);
  std::string last = space == std::string::npos ? words : words.substr(space + 1);
  static const std::unordered_map<std::string, std::string> irregular{
      {"one", "first"}, {"two", "second"}, {"three", "third"}, {"five", "fifth"},
      {"eight", "eighth"}, {"nine", "ninth"}, {"twelve", "twelfth"}};
  if (auto it = irregular.find(last); it != irregular.end()) {
    last = it->second;
  } else if (last.back() == 'y') {
    last = last.substr(0, last.size() - 1) + "ieth";
  } else {
    last += "th";
  }
  return head + last;
}

inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

// "BuildTheWall" -> "Build The Wall", "HTMLParser" -> "HTML Parser".
inline std::string split_camel(const std::string& word) {
  std::string out;
  for (std::size_t i = 0; i < word.size(); ++i) {
    const char c = word[i];
    if (i > 0 && is_upper(c)) {
      const char prev = word[i - 1];
      const bool next_lower = i + 1 < word.size() && is_lower(word[i + 1]);
      if (is_lower(prev) || (is_upper(prev) && next_lower)) out += ' ';
    }
    out += c;
  }
  return out;
}

}  // namespace detail

inline RuleSet RuleSet::load(const std::filesystem::path& dir) {
  RuleSet rules;
  for (auto& [k, v] : detail::read_rule_table(dir / "contractions.tsv")) {
    if (k.find('\'') == std::string::npos) throw FormatError("contraction key without apostrophe: '" + k + "'");
    rules.contractions.emplace_back(ascii_lower(k), v);
  }
  // Longest keys first so "y'all'd've" wins over "y'all".
  std::stable_sort(rules.contractions.begin(), rules.contractions.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });

  for (auto& [k, v] : detail::read_rule_table(dir / "abbreviations.tsv")) rules.abbreviations[ascii_lower(k)] = v;
  for (const auto& [k, v] : rules.abbreviations) {
    for (const auto& w : split_whitespace(ascii_lower(v))) {
      if (rules.abbreviations.count(w)) {
        throw FormatError("abbreviation '" + k + "' expands to another abbreviation key '" + w + "'");
      }
    }
  }

  for (auto& [k, v] : detail::read_rule_table(dir / "emoji.tsv")) {
    rules.emoji.emplace_back(detail::decode_codepoints(k), v);
  }
  std::stable_sort(rules.emoji.begin(), rules.emoji.end(),
                   [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
  return rules;
}

/// Rule directory from $HSD_RULES_DIR, else the tables shipped with the source tree.
inline std::filesystem::path default_rules_dir() {
  if (const char* env = std::getenv("HSD_RULES_DIR"); env && *env) return env;
#ifdef HSD_DEFAULT_RULES_DIR
  return HSD_DEFAULT_RULES_DIR;
#else
  return "data/rules";
#endif
}

namespace clean_steps {

inline std::string normalize_quotes(std::string s) {
  for (char32_t cp : {U'\u2019', U'\u2018', U'\u02BC', U'\u2032'}) s = detail::replace_all(s, utf8::encode(cp), "'");
  s = detail::replace_all(s, "&amp;", "&");
  s = detail::replace_all(s, "&lt;", "<");
  s = detail::replace_all(s, "&gt;", ">");
  s = detail::replace_all(s, "&quot;", "\"");
  return s;
}

inline std::string strip_mentions(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size();) {
    if (s[i] == '@') {
      ++i;
      while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
      out += ' ';
    } else {
      out += s[i++];
    }
  }
  return out;
}

inline std::string strip_urls(std::string_view s) {
  std::vector<std::string> kept;
  for (auto& chunk : split_whitespace(s)) {
    const std::string low = ascii_lower(chunk);
    if (low.find("http") != std::string::npos || low.rfind("www.", 0) == 0) continue;
    kept.push_back(std::move(chunk));
  }
  return join(kept);
}

inline bool is_contraction_word(const RuleSet& rules, const std::string& lower) {
  for (const auto& [k, v] : rules.contractions) {
    if (k[0] == '*') {
      const std::string_view suffix(k.data() + 1, k.size() - 1);
      if (lower.size() > suffix.size() && lower.compare(lower.size() - suffix.size(), suffix.size(), suffix) == 0)
        return true;
    } else if (k == lower) {
      return true;
    }
  }
  return false;
}

inline std::string drop_genitives(std::string_view s, const RuleSet& rules) {
  return detail::map_words(s, "'", [&](std::string w) {
    const std::string low = ascii_lower(w);
    if (low.size() > 2 && low.compare(low.size() - 2, 2, "'s") == 0 && !is_contraction_word(rules, low)) {
      w.resize(w.size() - 2);
    }
    return w;
  });
}

inline std::string expand_contractions(std::string_view s, const RuleSet& rules) {
  std::string out = detail::map_words(s, "'", [&](std::string w) -> std::string {
    if (w.find('\'') == std::string::npos) return w;
    const std::string low = ascii_lower(w);
    for (const auto& [k, v] : rules.contractions) {
      if (k[0] != '*' && k == low) return v;
    }
    for (const auto& [k, v] : rules.contractions) {
      if (k[0] != '*') continue;
      const std::string_view suffix(k.data() + 1, k.size() - 1);
      if (low.size() > suffix.size() && low.compare(low.size() - suffix.size(), suffix.size(), suffix) == 0) {
        return w.substr(0, w.size() - suffix.size()) + v;
      }
    }
    return w;
  });
  out.erase(std::remove(out.begin(), out.end(), '\''), out.end());
  return out;
}

inline std::string normalize_dashes(std::string s) {
  for (char32_t cp : {U'\u2012', U'\u2013', U'\u2014', U'\u2015', U'\u2212'}) {
    s = detail::replace_all(s, utf8::encode(cp), "-");
  }
  // ASCII renderings "--" and "---".
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '-' && !out.empty() && out.back() == '-') continue;
    out += s[i];
  }
  return out;
}

inline std::string ordinals_to_words(std::string_view s) {
  auto ascii_alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
  return detail::map_runs(s, ascii_alnum, [](std::string w) -> std::string {
    std::size_t digits = 0;
    while (digits < w.size() && std::isdigit(static_cast<unsigned char>(w[digits]))) ++digits;
    if (digits == 0 || digits > 3 || w.size() != digits + 2) return w;
    const std::string suffix = ascii_lower(w.substr(digits));
    if (suffix != "st" && suffix != "nd" && suffix != "rd" && suffix != "th") return w;
    const int n = std::stoi(w.substr(0, digits));
    if (n == 0) return w;
    return detail::ordinal_words(n);
  });
}

inline std::string expand_abbreviations(std::string_view s, const RuleSet& rules) {
  return detail::map_words(s, "", [&](std::string w) -> std::string {
    auto it = rules.abbreviations.find(ascii_lower(w));
    return it == rules.abbreviations.end() ? w : it->second;
  });
}

inline std::string split_camel_case(std::string_view s) {
  std::string no_hash(s);
  std::replace(no_hash.begin(), no_hash.end(), '#', ' ');
  return detail::map_words(no_hash, "", [](const std::string& w) { return detail::split_camel(w); });
}

inline std::string replace_emoji(std::string s, const RuleSet& rules) {
  for (const auto& [k, name] : rules.emoji) s = detail::replace_all(s, k, " " + name + " ");
  // Leftover presentation selectors, joiners and skin-tone modifiers.
  for (char32_t cp : {U'\uFE0F', U'\uFE0E', U'\u200D', U'\U0001F3FB', U'\U0001F3FC', U'\U0001F3FD',
                      U'\U0001F3FE', U'\U0001F3FF'}) {
    s = detail::replace_all(s, utf8::encode(cp), " ");
  }
  return s;
}

inline std::vector<std::string> lowercase_tokenize(std::string_view s) {
  static constexpr std::string_view kSplit = "!?.,;:\"()[]{}*/\\|<>=+~^`";
  std::string spaced;
  spaced.reserve(s.size() * 2);
  for (char c : s) {
    if (kSplit.find(c) != std::string_view::npos) {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else {
      spaced += c;
    }
  }
  auto tokens = split_whitespace(utf8::to_lower(spaced));
  // Bare hyphens are dash remnants, not words.
  std::erase_if(tokens, [](const std::string& t) { return t.find_first_not_of('-') == std::string::npos; });
  return tokens;
}

}  // namespace clean_steps

inline CleanTweet clean(const RawTweet& raw, const RuleSet& rules) {
  using namespace clean_steps;
  std::string s = normalize_quotes(raw.text);
  s = strip_mentions(s);
  s = strip_urls(s);
  s = drop_genitives(s, rules);
  s = expand_contractions(s, rules);
  s = normalize_dashes(std::move(s));
  s = ordinals_to_words(s);
  s = expand_abbreviations(s, rules);
  s = split_camel_case(s);
  s = replace_emoji(std::move(s), rules);
  s = ordinals_to_words(s);
  s = expand_abbreviations(s, rules);

  CleanTweet out;
  out.id = raw.id;
  out.tokens = lowercase_tokenize(s);
  out.text = join(out.tokens);
  return out;
}

/// Statistics for one (split, label) group of raw tweets.
struct GroupStats {
  std::string split;
  int label = 0;
  std::size_t count = 0;
  double words_mean = 0, words_sd = 0;
  double chars_mean = 0, chars_sd = 0;
  double caps_mean = 0, caps_sd = 0;
  std::map<char, double> special_mean;  // per-tweet mean count of ! ? # . @
};

using CorpusStats = std::vector<GroupStats>;

inline constexpr std::string_view kSpecialChars = "!?#.@";

/// Word with at least two uppercase letters and no lowercase ones.
inline bool is_all_caps_word(std::string_view w) {
  std::size_t upper = 0;
  for (char c : w) {
    if (detail::is_lower(c)) return false;
    upper += detail::is_upper(c) ? 1 : 0;
  }
  return upper >= 2;
}

namespace detail {

inline void mean_sd(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0;
  for (double x : xs) var += (x - mean) * (x - mean);
  sd = std::sqrt(var / static_cast<double>(xs.size()));  // population sd
}

}  // namespace detail

/// Per split×label statistics; groups without tweets are omitted.
inline CorpusStats corpus_stats(const std::vector<std::pair<std::string, std::vector<RawTweet>>>& splits) {
  CorpusStats out;
  std::size_t total = 0;
  for (const auto& [name, tweets] : splits) {
    total += tweets.size();
    for (int label : {0, 1}) {
      std::vector<double> words, chars, caps;
      std::map<char, double> special;
      for (char c : kSpecialChars) special[c] = 0;
      for (const auto& t : tweets) {
        if (t.label != label) continue;
        const auto ws = split_whitespace(t.text);
        words.push_back(static_cast<double>(ws.size()));
        chars.push_back(static_cast<double>(utf8::length(t.text)));
        caps.push_back(static_cast<double>(std::count_if(ws.begin(), ws.end(), [](const std::string& w) {
          return is_all_caps_word(w);
        })));
        for (char c : t.text)
          if (auto it = special.find(c); it != special.end()) it->second += 1;
      }
      if (words.empty()) continue;
      GroupStats g;
      g.split = name;
      g.label = label;
      g.count = words.size();
      detail::mean_sd(words, g.words_mean, g.words_sd);
      detail::mean_sd(chars, g.chars_mean, g.chars_sd);
      detail::mean_sd(caps, g.caps_mean, g.caps_sd);
      for (auto& [c, n] : special) g.special_mean[c] = n / static_cast<double>(g.count);
      out.push_back(std::move(g));
    }
  }
  if (total == 0) throw std::invalid_argument("corpus_stats: empty corpus");
  return out;
}

inline CorpusStats corpus_stats(const std::vector<RawTweet>& corpus, const std::string& split = "all") {
  return corpus_stats({{split, corpus}});
}

inline nlohmann::json to_json(const CorpusStats& stats) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& g : stats) {
    nlohmann::json special;
    for (const auto& [c, v] : g.special_mean) special[std::string(1, c)] = v;
    arr.push_back({{"split", g.split},
                   {"label", g.label},
                   {"count", g.count},
                   {"words", {{"mean", g.words_mean}, {"sd", g.words_sd}}},
                   {"chars", {{"mean", g.chars_mean}, {"sd", g.chars_sd}}},
                   {"caps", {{"mean", g.caps_mean}, {"sd", g.caps_sd}}},
                   {"special_mean", special}});
  }
  return arr;
}

/// Ids of tweets with more than `max_words` whitespace-separated words.
inline std::vector<std::string> detect_outliers(const std::vector<RawTweet>& corpus, std::size_t max_words) {
  if (max_words == 0) throw std::invalid_argument("detect_outliers: max_words must be positive");
  std::vector<std::string> ids;
  for (const auto& t : corpus)
    if (split_whitespace(t.text).size() > max_words) ids.push_back(t.id);
  return ids;
}

/// Reads an id<TAB>text<TAB>HS<TAB>lang corpus. A first line starting with
/// "id<TAB>" is treated as a header.
inline std::vector<RawTweet> read_corpus_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open corpus " + path.string());
  std::vector<RawTweet> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("id\t", 0) == 0) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 4) {
      throw ParseError(lineno, "expected 4 tab-separated columns (id, text, HS, lang), found " +
                                   std::to_string(cols.size()));
    }
    RawTweet t;
    t.id = cols[0];
    t.text = cols[1];
    if (t.id.empty()) throw ParseError(lineno, "empty id");
    if (t.text.find_first_not_of(" \t") == std::string::npos) throw ParseError(lineno, "empty text");
    if (cols[2] != "0" && cols[2] != "1") throw ParseError(lineno, "HS label must be 0 or 1, got '" + cols[2] + "'");
    t.label = cols[2] == "1" ? 1 : 0;
    auto lang = parse_language(cols[3]);
    if (!lang) throw ParseError(lineno, "language must be en or es, got '" + cols[3] + "'");
    t.language = *lang;
    if (!ids.insert(t.id).second) throw ParseError(lineno, "duplicate id '" + t.id + "'");
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_corpus_tsv(const std::filesystem::path& path, const std::vector<RawTweet>& corpus) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << "id\ttext\tHS\tlang\n";
  for (const auto& t : corpus) {
    if (t.text.find_first_of("\t\n") != std::string::npos) {
      throw FormatError("tweet '" + t.id + "' contains a tab or newline");
    }
    out << t.id << '\t' << t.text << '\t' << t.label << '\t' << to_string(t.language) << '\n';
  }
}

}  // namespace hsd
