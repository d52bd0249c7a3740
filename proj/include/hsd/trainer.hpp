#pragma once

// Training loop (cross-entropy, Adam, early stopping on validation F1),
// classification metrics and few-shot sampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hsd/blocks.hpp"
#include "hsd/features.hpp"
#include "hsd/optim.hpp"
#include "hsd/random.hpp"

namespace hsd {

struct Example {
  std::string id;
  FeatureSequence x;
  int label = 0;
};

using Dataset = std::vector<Example>;

/// Hyperparameter preset: learning rate, batch size, RNN feature size and
/// RNN dropout. The RNN fields are empty for presets used with non-recurrent heads.
struct Preset {
  char letter;
  double learning_rate;
  std::size_t batch_size;
  std::optional<std::size_t> rnn_hidden;
  std::optional<double> rnn_dropout;
};

inline const std::array<Preset, 12>& presets() {
  static const std::array<Preset, 12> table{{
      {'A', 0.001, 32, 128, 0.0},
      {'B', 0.001, 32, 128, 0.2},
      {'C', 0.0005, 16, 128, 0.2},
      {'D', 0.00005, 64, 128, 0.0},
      {'E', 0.00005, 64, std::nullopt, std::nullopt},
      {'F', 0.0005, 64, std::nullopt, std::nullopt},
      {'G', 0.00001, 64, std::nullopt, std::nullopt},
      {'H', 0.0005, 32, 64, 0.2},
      {'I', 0.0005, 32, 128, 0.2},
      {'J', 0.0005, 64, 128, 0.2},
      {'K', 0.00005, 32, std::nullopt, std::nullopt},
      {'L', 0.00005, 32, 128, 0.0},
  }};
  return table;
}

inline const Preset& preset(char letter) {
  for (const auto& p : presets())
    if (p.letter == letter) return p;
  throw ConfigError(std::string("unknown preset '") + letter + "'; give learning_rate and batch_size explicitly");
}

struct TrainConfig {
  std::optional<char> preset_letter;
  double learning_rate = 0.0005;
  std::size_t batch_size = 64;
  std::optional<std::size_t> rnn_hidden;
  std::optional<double> rnn_dropout;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t max_len = 64;
  std::uint64_t seed = 0;

  static TrainConfig from_preset(char letter) {
    const Preset& p = preset(letter);
    TrainConfig c;
    c.preset_letter = letter;
    c.learning_rate = p.learning_rate;
    c.batch_size = p.batch_size;
    c.rnn_hidden = p.rnn_hidden;
    c.rnn_dropout = p.rnn_dropout;
    return c;
  }

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("train: max_epochs must be positive");
    if (max_len == 0) throw ConfigError("train: max_len must be positive");
  }

  /// Copies the preset's RNN size and dropout into a head config.
  void apply_to(BlockConfig& block) const {
    if (block.variant == Variant::lstm) {
      if (rnn_hidden) block.hidden = *rnn_hidden;
      if (rnn_dropout) block.dropout = *rnn_dropout;
    }
  }
};

/// Confusion counts and derived scores with hateful (label 1) as the
/// positive class. Scores are fractions in [0, 1].
struct MetricsReport {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  double f1_negative = 0;
  double macro_f1 = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

inline double f1_score(double precision, double recall) {
  return precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

inline MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  MetricsReport m{tp, fp, fn, tn};
  const auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
  if (m.total() == 0) throw std::invalid_argument("metrics: empty evaluation set");
  m.accuracy = ratio(tp + tn, m.total());
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = f1_score(m.precision, m.recall);
  m.f1_negative = f1_score(ratio(tn, tn + fn), ratio(tn, tn + fp));
  m.macro_f1 = 0.5 * (m.f1 + m.f1_negative);
  return m;
}

inline MetricsReport compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw DimensionError("metrics: predictions and labels differ in length");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1, y = labels[i] == 1;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
    tn += !p && !y;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

inline nlohmann::json to_json(const MetricsReport& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"f1_negative", m.f1_negative},
          {"macro_f1", m.macro_f1},
          {"confusion", {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}}}};
}

/// First `max_len` positions of a sequence.
inline FeatureSequence truncate(const FeatureSequence& s, std::size_t max_len) {
  if (s.length() <= max_len) return s;
  const std::size_t d = s.dim();
  std::vector<float> vals(s.values.values().begin(), s.values.values().begin() + static_cast<std::ptrdiff_t>(max_len * d));
  return FeatureSequence(Tensor<float>(Shape{max_len, d}, std::move(vals)),
                         Mask(s.mask.begin(), s.mask.begin() + static_cast<std::ptrdiff_t>(max_len)));
}

inline void check_dataset(const Dataset& data, std::size_t dim, const char* what) {
  if (data.empty()) throw std::invalid_argument(std::string(what) + " set is empty");
  for (const auto& e : data) {
    if (e.x.dim() != dim) {
      throw DimensionError(std::string(what) + " example '" + e.id + "' has feature dim " + std::to_string(e.x.dim()) +
                           ", head expects " + std::to_string(dim));
    }
    if (e.label != 0 && e.label != 1) throw LabelError(std::string(what) + " example '" + e.id + "' has label " +
                                                       std::to_string(e.label));
  }
}

inline int argmax2(const Tensor<float>& logits) { return logits[1] > logits[0] ? 1 : 0; }

template <std::floating_point T>
std::vector<int> predict(const Head<T>& head, const Dataset& data, std::size_t max_len = 64) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& e : data) {
    const auto x = truncate(e.x, max_len);
    const auto logits = head.forward(x.values.template cast<T>(), x.mask).value();
    out.push_back(logits[1] > logits[0] ? 1 : 0);
  }
  return out;
}

template <std::floating_point T>
MetricsReport evaluate(const Head<T>& head, const Dataset& data, std::size_t max_len = 64) {
  check_dataset(data, head.config().dim, "evaluation");
  const auto preds = predict(head, data, max_len);
  std::vector<int> labels;
  for (const auto& e : data) labels.push_back(e.label);
  return compute_metrics(preds, labels);
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;  // mean over batches
  MetricsReport val;
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1;
};

/// Mini-batch training with early stopping. The head ends with the
/// parameters of the epoch with the highest validation F1; later epochs
/// replace it only on strict improvement. Training stops once `patience`
/// epochs pass without improvement, so patience 0 runs a single epoch.
template <std::floating_point T>
TrainResult train(Head<T>& head, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config) {
  config.validate();
  check_dataset(train_set, head.config().dim, "training");
  check_dataset(val_set, head.config().dim, "validation");

  std::vector<FeatureSequence> inputs;
  inputs.reserve(train_set.size());
  for (const auto& e : train_set) inputs.push_back(truncate(e.x, config.max_len));

  Rng rng(config.seed);
  AdamState<T> adam(config.learning_rate);
  auto params = head.parameter_vars();
  TrainResult result;
  std::vector<Tensor<T>> best = head.snapshot();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto order = permutation(train_set.size(), rng);
    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Var<T>> logits;
      std::vector<int> labels;
      const ForwardContext ctx{true, &rng};
      for (std::size_t k = start; k < end; ++k) {
        const auto& x = inputs[order[k]];
        logits.push_back(head.forward(x.values.template cast<T>(), x.mask, ctx));
        labels.push_back(train_set[order[k]].label);
      }
      const Var<T> loss = cross_entropy(stack(logits), std::span<const int>(labels));
      const auto grads = backward(loss);
      adam_step(adam, std::span<Var<T>>(params), grads);
      loss_sum += static_cast<double>(loss.value().item());
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    rec.val = evaluate(head, val_set, config.max_len);
    rec.improved = rec.val.f1 > result.best_val_f1;
    if (rec.improved) {
      result.best_val_f1 = rec.val.f1;
      result.best_epoch = epoch;
      best = head.snapshot();
      since_best = 0;
    } else {
      ++since_best;
    }
    result.history.push_back(rec);
    if (since_best >= config.patience) break;
  }
  head.restore(best);
  return result;
}

/// Indices of the target examples injected at `pct` percent: a seeded
/// permutation of the id-sorted examples, cut at floor(pct/100 · n). Larger
/// percentages extend smaller ones.
inline std::vector<std::size_t> few_shot_indices(const std::vector<std::string>& target_ids, double pct,
                                                 std::uint64_t seed) {
  if (!(pct >= 0.0 && pct <= 100.0)) throw std::invalid_argument("few-shot percentage must lie in [0, 100]");
  std::vector<std::size_t> by_id(target_ids.size());
  for (std::size_t i = 0; i < by_id.size(); ++i) by_id[i] = i;
  std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) { return target_ids[a] < target_ids[b]; });
  Rng rng(seed);
  shuffle(by_id, rng);
  const auto count = static_cast<std::size_t>(std::floor(pct / 100.0 * static_cast<double>(target_ids.size()) + 1e-9));
  by_id.resize(std::min(count, by_id.size()));
  return by_id;
}

/// Source examples followed by the injected target sample.
template <class Item, class IdOf>
std::vector<Item> few_shot_mix(const std::vector<Item>& source, const std::vector<Item>& target, double pct,
                               std::uint64_t seed, IdOf id_of) {
  std::vector<std::string> ids;
  ids.reserve(target.size());
  for (const auto& t : target) ids.push_back(id_of(t));
  std::vector<Item> out = source;
  for (std::size_t i : few_shot_indices(ids, pct, seed)) out.push_back(target[i]);
  return out;
}

inline Dataset few_shot_mix(const Dataset& source, const Dataset& target, double pct, std::uint64_t seed) {
  return few_shot_mix(source, target, pct, seed, [](const Example& e) { return e.id; });
}

}  // namespace hsd
