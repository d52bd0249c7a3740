#pragma once

// Frozen-extractor feature files (FRZF) and static word-embedding tables.
//
// FRZF layout, all integers and floats little-endian:
//
//   header   "FRZF" | version u16 | dim u32 | layers u32 | name_len u32 | name bytes
//   record*  id_len u32 | id bytes | seq_len u32 | layers*seq_len*dim f32
//
// Record payloads are layer-major: layer 0 rows first. Records run to end of
// file; there is no record count.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hsd/ops.hpp"
#include "hsd/tensor.hpp"

namespace hsd {

inline constexpr std::array<char, 4> kFeatureMagic{'F', 'R', 'Z', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;

/// Malformed or unreadable feature/embedding file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested layer view cannot be built from the stored layers.
class ViewError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Line-oriented parse failure; line numbers are 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class LayerView { final_layer, first_layer, concat_last4, first_token_final };

inline LayerView parse_layer_view(const std::string& s) {
  if (s == "final_layer") return LayerView::final_layer;
  if (s == "first_layer") return LayerView::first_layer;
  if (s == "concat_last4") return LayerView::concat_last4;
  if (s == "first_token_final") return LayerView::first_token_final;
  throw std::invalid_argument("unknown layer view '" + s + "'");
}

inline std::string to_string(LayerView v) {
  switch (v) {
    case LayerView::final_layer: return "final_layer";
    case LayerView::first_layer: return "first_layer";
    case LayerView::concat_last4: return "concat_last4";
    case LayerView::first_token_final: return "first_token_final";
  }
  return "?";
}

/// Token representations of one example: values[T×d] plus a validity mask.
struct FeatureSequence {
  Tensor<float> values;
  Mask mask;

  FeatureSequence() = default;
  explicit FeatureSequence(Tensor<float> v) : values(std::move(v)), mask(values.dim(0), true) {}
  FeatureSequence(Tensor<float> v, Mask m) : values(std::move(v)), mask(std::move(m)) {
    if (values.rank() != 2 || mask.size() != values.dim(0)) {
      throw DimensionError("feature sequence " + shape_str(values.shape()) + " with mask of length " +
                           std::to_string(mask.size()));
    }
  }

  std::size_t length() const { return values.dim(0); }
  std::size_t dim() const { return values.dim(1); }
};

struct FeatureHeader {
  std::uint16_t version = kFeatureVersion;
  std::uint32_t dim = 0;
  std::uint32_t layers = 0;
  std::string extractor;
};

/// One stored example: layers×seq_len×dim floats, layer-major.
struct FeatureRecord {
  std::string id;
  std::uint32_t seq_len = 0;
  std::vector<float> payload;
};

struct FeatureFile {
  FeatureHeader header;
  std::vector<FeatureRecord> records;
};

namespace detail {

template <class U>
void put_le(std::ostream& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <class U>
bool get_le(std::istream& in, U& value) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  std::memcpy(&value, bytes.data(), sizeof(U));
  return true;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, const std::string& what) {
  std::uint32_t len = 0;
  if (!get_le(in, len)) throw FormatError("truncated " + what + " length");
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) throw FormatError("truncated " + what);
  return s;
}

}  // namespace detail

inline void write_feature_file(const std::filesystem::path& path, const FeatureFile& file) {
  const auto& h = file.header;
  std::unordered_set<std::string> seen;
  for (const auto& r : file.records) {
    if (!seen.insert(r.id).second) throw FormatError("duplicate record id '" + r.id + "'");
    const std::size_t expect = static_cast<std::size_t>(h.layers) * r.seq_len * h.dim;
    if (r.seq_len == 0 || r.payload.size() != expect) {
      throw DimensionError("record '" + r.id + "' carries " + std::to_string(r.payload.size()) +
                           " floats, expected " + std::to_string(expect));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(kFeatureMagic.data(), kFeatureMagic.size());
  detail::put_le(out, h.version);
  detail::put_le(out, h.dim);
  detail::put_le(out, h.layers);
  detail::put_string(out, h.extractor);
  for (const auto& r : file.records) {
    detail::put_string(out, r.id);
    detail::put_le(out, r.seq_len);
    for (float v : r.payload) detail::put_le(out, v);
  }
  if (!out) throw FormatError("write failed for " + path.string());
}

inline void write_features(const std::filesystem::path& path, std::uint32_t dim, std::uint32_t layers,
                           std::vector<FeatureRecord> records, std::string extractor = {}) {
  FeatureFile f;
  f.header.dim = dim;
  f.header.layers = layers;
  f.header.extractor = std::move(extractor);
  f.records = std::move(records);
  write_feature_file(path, f);
}

/// Streams records from an FRZF file one at a time.
class FeatureReader {
 public:
  explicit FeatureReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw FormatError("cannot open feature file " + path.string());
    std::array<char, 4> magic{};
    if (!in_.read(magic.data(), magic.size()) || magic != kFeatureMagic) {
      throw FormatError(path.string() + ": bad magic, not an FRZF file");
    }
    if (!detail::get_le(in_, header_.version) || !detail::get_le(in_, header_.dim) ||
        !detail::get_le(in_, header_.layers)) {
      throw FormatError(path.string() + ": truncated header");
    }
    if (header_.version != kFeatureVersion) {
      throw FormatError(path.string() + ": unsupported format version " + std::to_string(header_.version));
    }
    if (header_.dim == 0 || header_.layers == 0) throw FormatError(path.string() + ": zero dim or layer count");
    header_.extractor = detail::get_string(in_, "extractor name");
  }

  const FeatureHeader& header() const { return header_; }

  /// Next record, or nothing at end of file.
  std::optional<FeatureRecord> next() {
    if (in_.peek() == std::char_traits<char>::eof()) return std::nullopt;
    FeatureRecord r;
    r.id = detail::get_string(in_, "record id");
    if (!detail::get_le(in_, r.seq_len)) throw FormatError("record '" + r.id + "': truncated length");
    if (r.seq_len == 0) throw FormatError("record '" + r.id + "': empty sequence");
    if (!seen_.insert(r.id).second) throw FormatError("duplicate record id '" + r.id + "'");
    const std::size_t count = static_cast<std::size_t>(header_.layers) * r.seq_len * header_.dim;
    r.payload.resize(count);
    if (!in_.read(reinterpret_cast<char*>(r.payload.data()), static_cast<std::streamsize>(count * sizeof(float)))) {
      throw FormatError("record '" + r.id + "': truncated payload");
    }
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& v : r.payload) {
        auto* b = reinterpret_cast<unsigned char*>(&v);
        std::reverse(b, b + sizeof(float));
      }
    }
    return r;
  }

 private:
  std::ifstream in_;
  FeatureHeader header_;
  std::unordered_set<std::string> seen_;
};

inline FeatureFile read_feature_file(const std::filesystem::path& path) {
  FeatureReader reader(path);
  FeatureFile f;
  f.header = reader.header();
  while (auto r = reader.next()) f.records.push_back(std::move(*r));
  return f;
}

/// Builds the requested view of one record. Stored layers are taken in file
/// order: the first stored layer is "first", the last stored layer "final".
inline FeatureSequence select_view(const FeatureHeader& h, const FeatureRecord& r, LayerView view) {
  const std::size_t d = h.dim, len = r.seq_len, layers = h.layers;
  auto layer_row = [&](std::size_t layer, std::size_t t) { return r.payload.data() + (layer * len + t) * d; };
  auto copy_layer = [&](std::size_t layer, std::size_t rows) {
    std::vector<float> out(rows * d);
    for (std::size_t t = 0; t < rows; ++t) std::copy_n(layer_row(layer, t), d, out.begin() + t * d);
    return FeatureSequence(Tensor<float>(Shape{rows, d}, std::move(out)));
  };
  switch (view) {
    case LayerView::final_layer: return copy_layer(layers - 1, len);
    case LayerView::first_layer: return copy_layer(0, len);
    case LayerView::first_token_final: return copy_layer(layers - 1, 1);
    case LayerView::concat_last4: {
      if (layers < 4) {
        throw ViewError("concat_last4 needs at least 4 stored layers, file has " + std::to_string(layers));
      }
      std::vector<float> out(len * 4 * d);
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t k = 0; k < 4; ++k) std::copy_n(layer_row(layers - 4 + k, t), d, out.begin() + (t * 4 + k) * d);
      return FeatureSequence(Tensor<float>(Shape{len, 4 * d}, std::move(out)));
    }
  }
  throw ViewError("unknown layer view");
}

/// Views of every record, or of the records in `only` when given.
inline std::map<std::string, FeatureSequence> load_features(const std::filesystem::path& path, LayerView view,
                                                            const std::unordered_set<std::string>* only = nullptr) {
  FeatureReader reader(path);
  const auto& h = reader.header();
  if (view == LayerView::concat_last4 && h.layers < 4) {
    throw ViewError(path.string() + ": concat_last4 needs at least 4 stored layers, file has " +
                    std::to_string(h.layers));
  }
  std::map<std::string, FeatureSequence> out;
  for (;;) {
    auto r = reader.next();
    if (!r) break;
    if (only && !only->count(r->id)) continue;
    out.emplace(r->id, select_view(h, *r, view));
  }
  return out;
}

/// Word → vector map with a total lookup: unknown words map to zeros.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 300) : dim_(dim), zeros_(dim, 0.0f) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }
  bool contains(const std::string& word) const { return vectors_.count(word) != 0; }

  void insert(std::string word, std::vector<float> vec) {
    if (vec.size() != dim_) {
      throw DimensionError("embedding for '" + word + "' has " + std::to_string(vec.size()) + " values, table dim is " +
                           std::to_string(dim_));
    }
    vectors_.insert_or_assign(std::move(word), std::move(vec));
  }

  const std::vector<float>& lookup(const std::string& word) const {
    auto it = vectors_.find(word);
    return it == vectors_.end() ? zeros_ : it->second;
  }

 private:
  std::size_t dim_;
  std::vector<float> zeros_;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

/// Reads "word v1 ... vD" lines. A leading "count dim" line is skipped.
/// The dimension is taken from the first vector line unless given.
inline EmbeddingTable load_embedding_table(const std::filesystem::path& path, std::size_t expected_dim = 0) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::pair<std::string, std::vector<float>>> rows;
  std::size_t dim = expected_dim;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<std::string> rest;
    for (std::string tok; fields >> tok;) rest.push_back(tok);

    if (lineno == 1 && rest.size() == 1) {
      auto is_count = [](const std::string& s) {
        return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
      };
      if (is_count(word) && is_count(rest[0])) continue;
    }
    std::vector<float> vec;
    vec.reserve(rest.size());
    for (const auto& tok : rest) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stof(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(lineno, "non-numeric embedding value '" + tok + "'");
      }
    }
    if (dim == 0) dim = vec.size();
    if (vec.size() != dim || dim == 0) {
      throw ParseError(lineno, "expected " + std::to_string(dim) + " values for '" + word + "', found " +
                                   std::to_string(vec.size()));
    }
    rows.emplace_back(std::move(word), std::move(vec));
  }
  EmbeddingTable table(dim == 0 ? 300 : dim);
  for (auto& [w, v] : rows) table.insert(std::move(w), std::move(v));
  return table;
}

struct CoverageReport {
  double unique_word_coverage = 0.0;  // percent of distinct words found in the table
  double full_text_coverage = 0.0;    // percent of token occurrences found in the table
  std::size_t unique_words = 0;
  std::size_t tokens = 0;
};

inline CoverageReport coverage_report(const std::vector<std::vector<std::string>>& corpus, const EmbeddingTable& table) {
  std::set<std::string> vocab;
  std::size_t total = 0, covered = 0;
  for (const auto& doc : corpus)
    for (const auto& tok : doc) {
      vocab.insert(tok);
      ++total;
      covered += table.contains(tok) ? 1 : 0;
    }
  if (total == 0) throw std::invalid_argument("coverage_report: corpus has no tokens");
  std::size_t known = 0;
  for (const auto& w : vocab) known += table.contains(w) ? 1 : 0;
  CoverageReport r;
  r.unique_words = vocab.size();
  r.tokens = total;
  r.unique_word_coverage = 100.0 * static_cast<double>(known) / static_cast<double>(vocab.size());
  r.full_text_coverage = 100.0 * static_cast<double>(covered) / static_cast<double>(total);
  return r;
}

inline FeatureSequence embed_sequence(const std::vector<std::string>& tokens, const EmbeddingTable& table) {
  if (tokens.empty()) throw EmptySequenceError("embed_sequence: empty token list");
  const std::size_t d = table.dim();
  std::vector<float> out(tokens.size() * d);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const auto& v = table.lookup(tokens[t]);
    std::copy(v.begin(), v.end(), out.begin() + t * d);
  }
  return FeatureSequence(Tensor<float>(Shape{tokens.size(), d}, std::move(out)));
}

}  // namespace hsd
