#pragma once

// Classification heads over a frozen feature sequence H[T×d] with a padding
// mask. Every head maps (H, mask) to two logits.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hsd/lstm.hpp"
#include "hsd/ops.hpp"
#include "hsd/random.hpp"

namespace hsd {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Variant { dense_first_token, max_pool, avg_pool, lstm, attention, rcab, cbam, csar, ram, axel };

enum class Ablation { none, att_avg_fc, att_max_fc, att_avg_fc_max_fc, sum_fusion, tanh_act, var_fc };

inline constexpr std::pair<Variant, std::string_view> kVariantNames[] = {
    {Variant::dense_first_token, "dense_first_token"},
    {Variant::max_pool, "max_pool"},
    {Variant::avg_pool, "avg_pool"},
    {Variant::lstm, "lstm_head"},
    {Variant::attention, "attention"},
    {Variant::rcab, "rcab"},
    {Variant::cbam, "cbam"},
    {Variant::csar, "csar"},
    {Variant::ram, "ram"},
    {Variant::axel, "axel"},
};

inline constexpr std::pair<Ablation, std::string_view> kAblationNames[] = {
    {Ablation::none, "none"},
    {Ablation::att_avg_fc, "att_avg_fc"},
    {Ablation::att_max_fc, "att_max_fc"},
    {Ablation::att_avg_fc_max_fc, "att_avg_fc_max_fc"},
    {Ablation::sum_fusion, "sum_fusion"},
    {Ablation::tanh_act, "tanh_act"},
    {Ablation::var_fc, "var_fc"},
};

inline std::string to_string(Variant v) {
  for (const auto& [k, name] : kVariantNames)
    if (k == v) return std::string(name);
  return "?";
}

inline std::string to_string(Ablation a) {
  for (const auto& [k, name] : kAblationNames)
    if (k == a) return std::string(name);
  return "?";
}

struct BlockConfig {
  Variant variant = Variant::axel;
  Ablation ablation = Ablation::none;  // axel only
  std::size_t dim = 0;                 // feature dim d
  std::size_t hidden = 128;            // LSTM feature size
  std::size_t lstm_layers = 2;
  std::size_t reduction = 16;  // channel bottleneck ratio r
  double dropout = 0.0;        // before the output layer
  // Attention scores u·tanh(W h_t) instead of v·h_t.
  bool projected_attention = false;

  std::size_t bottleneck() const { return std::max<std::size_t>(1, dim / std::max<std::size_t>(1, reduction)); }

  /// Display name, e.g. "axel", "axel_ablation:var_fc", "lstm_head:2".
  std::string name() const {
    if (variant == Variant::axel && ablation != Ablation::none) return "axel_ablation:" + to_string(ablation);
    if (variant == Variant::lstm) return "lstm_head:" + std::to_string(lstm_layers);
    return to_string(variant);
  }

  void validate() const {
    if (dim == 0) throw ConfigError("block: feature dim must be at least 1");
    if (reduction == 0) throw ConfigError("block: reduction ratio must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("block: dropout must lie in [0, 1)");
    if (variant == Variant::lstm) {
      if (lstm_layers != 1 && lstm_layers != 2) throw ConfigError("block: lstm_head supports 1 or 2 layers");
      if (hidden == 0) throw ConfigError("block: hidden size must be at least 1");
    }
    if (variant != Variant::axel && ablation != Ablation::none) {
      throw ConfigError("block: ablations apply to axel only");
    }
  }
};

/// Every head configuration exercised by the test suites: the six naive,
/// recurrent and attention heads, four channel/spatial attention blocks,
/// AXEL and its six ablations.
inline std::vector<BlockConfig> all_head_configs(std::size_t dim, std::size_t hidden = 4) {
  std::vector<BlockConfig> out;
  auto add = [&](Variant v, Ablation a = Ablation::none, std::size_t layers = 2) {
    BlockConfig c;
    c.variant = v;
    c.ablation = a;
    c.dim = dim;
    c.hidden = hidden;
    c.lstm_layers = layers;
    c.reduction = 4;
    out.push_back(c);
  };
  add(Variant::dense_first_token);
  add(Variant::max_pool);
  add(Variant::avg_pool);
  add(Variant::lstm, Ablation::none, 1);
  add(Variant::lstm, Ablation::none, 2);
  add(Variant::attention);
  for (Variant v : {Variant::rcab, Variant::cbam, Variant::csar, Variant::ram}) add(v);
  for (const auto& [a, name] : kAblationNames) add(Variant::axel, a);
  return out;
}

inline nlohmann::json to_json(const BlockConfig& c) {
  nlohmann::json j;
  j["variant"] = c.variant == Variant::axel && c.ablation != Ablation::none ? "axel_ablation" : to_string(c.variant);
  if (c.variant == Variant::axel && c.ablation != Ablation::none) j["ablation"] = to_string(c.ablation);
  if (c.variant == Variant::lstm) {
    j["layers"] = c.lstm_layers;
    j["hidden"] = c.hidden;
  }
  j["reduction"] = c.reduction;
  j["dropout"] = c.dropout;
  j["projected_attention"] = c.projected_attention;
  if (c.dim) j["dim"] = c.dim;
  return j;
}

/// Parses {"variant", "ablation"?, "layers"?, "hidden"?, "reduction"?,
/// "dropout"?, "projected_attention"?, "dim"?}; unknown keys are rejected.
inline BlockConfig block_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("block: expected an object");
  static const char* known[] = {"variant", "ablation", "layers", "hidden", "reduction",
                                "dropout", "projected_attention", "dim"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known)) {
      throw ConfigError("block: unknown key '" + key + "'");
    }
  }
  BlockConfig c;
  try {
    const auto tag = j.at("variant").get<std::string>();
    bool found = false;
    if (tag == "axel_ablation") {
      c.variant = Variant::axel;
      found = true;
      if (!j.contains("ablation")) throw ConfigError("block: axel_ablation needs an 'ablation'");
    }
    for (const auto& [v, name] : kVariantNames) {
      if (tag == name) {
        c.variant = v;
        found = true;
      }
    }
    if (!found) throw ConfigError("block: unknown variant '" + tag + "'");
    if (j.contains("ablation")) {
      const auto sub = j["ablation"].get<std::string>();
      found = false;
      for (const auto& [a, name] : kAblationNames) {
        if (sub == name) {
          c.ablation = a;
          found = true;
        }
      }
      if (!found) throw ConfigError("block: unknown ablation '" + sub + "'");
      if (tag == "axel_ablation" && c.ablation == Ablation::none) {
        throw ConfigError("block: axel_ablation needs an ablation other than none");
      }
    }
    if (j.contains("layers")) c.lstm_layers = j["layers"].get<std::size_t>();
    if (j.contains("hidden")) c.hidden = j["hidden"].get<std::size_t>();
    if (j.contains("reduction")) c.reduction = j["reduction"].get<std::size_t>();
    if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
    if (j.contains("projected_attention")) c.projected_attention = j["projected_attention"].get<bool>();
    if (j.contains("dim")) c.dim = j["dim"].get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("block: ") + e.what());
  }
  if (c.variant != Variant::axel && c.ablation != Ablation::none) {
    throw ConfigError("block: ablations apply to axel only");
  }
  return c;
}

/// Closed-form trainable parameter count.
inline std::size_t expected_param_count(const BlockConfig& c) {
  const std::size_t d = c.dim, b = c.bottleneck();
  const std::size_t dense = 2 * d + 2;
  const std::size_t mlp = d * b + b + b * d + d;
  const std::size_t attention = c.projected_attention ? d * d + d : d;
  switch (c.variant) {
    case Variant::dense_first_token:
    case Variant::max_pool:
    case Variant::avg_pool: return dense;
    case Variant::lstm:
      return lstm_param_count(d, c.hidden, c.lstm_layers, Direction::bidirectional) + 2 * (2 * c.hidden) + 2;
    case Variant::attention: return attention + dense;
    case Variant::rcab: return mlp + dense;
    case Variant::cbam: return mlp + (2 * 7 + 1) + dense;
    case Variant::csar: return mlp + (3 * d + 1) + (2 * d * d + d) + dense;
    case Variant::ram: return mlp + (3 * d + 1) + dense;
    case Variant::axel: {
      const std::size_t shared = d * d + d;
      switch (c.ablation) {
        case Ablation::none:
        case Ablation::tanh_act: return attention + shared + 4 + dense;
        case Ablation::att_avg_fc:
        case Ablation::att_max_fc: return attention + shared + 3 + dense;
        case Ablation::att_avg_fc_max_fc: return attention + 2 * shared + 4 + dense;
        case Ablation::sum_fusion: return attention + shared + dense;
        case Ablation::var_fc: return attention + shared + 5 + dense;
      }
    }
  }
  return 0;
}

/// Mode and randomness for one forward pass.
struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

template <std::floating_point T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <std::floating_point T>
class Head {
 public:
  /// Glorot-uniform matrices and vectors, zero biases, drawn from `seed`.
  static Head build(const BlockConfig& config, std::uint64_t seed) {
    config.validate();
    Head h(config);
    Rng rng(seed);
    h.init(rng);
    return h;
  }

  const BlockConfig& config() const { return config_; }

  /// Logits[2] for H[T×d]. An empty mask means every position is valid.
  Var<T> forward(const Var<T>& x, const Mask& mask_in = {}, const ForwardContext& ctx = {}) const {
    if (x.rank() != 2 || x.dim(1) != config_.dim) {
      throw DimensionError("head " + config_.name() + ": input " + shape_str(x.shape()) + " for feature dim " +
                           std::to_string(config_.dim));
    }
    if (x.dim(0) == 0) throw EmptySequenceError("head: empty sequence");
    const Mask mask = mask_in.empty() ? Mask(x.dim(0), true) : mask_in;
    if (mask.size() != x.dim(0)) {
      throw DimensionError("head: mask length " + std::to_string(mask.size()) + " for sequence " +
                           shape_str(x.shape()));
    }
    switch (config_.variant) {
      case Variant::dense_first_token: return output(row(x, 0), ctx);
      case Variant::max_pool: return output(pool_axis(x, mask, PoolKind::max), ctx);
      case Variant::avg_pool: return output(pool_axis(x, mask, PoolKind::avg), ctx);
      case Variant::lstm: return forward_lstm(x, mask, ctx);
      case Variant::attention: return output(attention_context(x, mask), ctx);
      case Variant::rcab: return forward_rcab(x, mask, ctx);
      case Variant::cbam: return forward_cbam(x, mask, ctx);
      case Variant::csar: return forward_csar(x, mask, ctx);
      case Variant::ram: return forward_ram(x, mask, ctx);
      case Variant::axel: return output(axel_fused(x, mask), ctx);
    }
    throw ConfigError("head: unhandled variant");
  }

  Var<T> forward(const Tensor<T>& x, const Mask& mask = {}, const ForwardContext& ctx = {}) const {
    return forward(Var<T>::constant(x), mask, ctx);
  }

  /// AXEL branch outputs before fusion: attention, then the pooled branches
  /// in channel order.
  std::vector<Var<T>> axel_channels(const Var<T>& x, const Mask& mask) const {
    if (config_.variant != Variant::axel) throw ConfigError("axel_channels: not an axel head");
    const Activation act = config_.ablation == Ablation::tanh_act ? Activation::tanh : Activation::relu;
    const bool untied = config_.ablation == Ablation::att_avg_fc_max_fc;
    auto branch = [&](PoolKind kind, const char* w, const char* b) {
      return activation(linear(pool_axis(x, mask, kind), p(w), p(b)), act);
    };
    std::vector<Var<T>> ch{attention_context(x, mask)};
    if (config_.ablation != Ablation::att_avg_fc) {
      ch.push_back(untied ? branch(PoolKind::max, "fc_max.weight", "fc_max.bias")
                          : branch(PoolKind::max, "fc_shared.weight", "fc_shared.bias"));
    }
    if (config_.ablation != Ablation::att_max_fc) {
      ch.push_back(untied ? branch(PoolKind::avg, "fc_avg.weight", "fc_avg.bias")
                          : branch(PoolKind::avg, "fc_shared.weight", "fc_shared.bias"));
    }
    if (config_.ablation == Ablation::var_fc) ch.push_back(branch(PoolKind::var, "fc_shared.weight", "fc_shared.bias"));
    return ch;
  }

  std::vector<NamedParam<T>>& parameters() { return params_; }
  const std::vector<NamedParam<T>>& parameters() const { return params_; }

  std::vector<Var<T>> parameter_vars() const {
    std::vector<Var<T>> out;
    for (const auto& np : params_) out.push_back(np.var);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& np : params_) n += np.var.value().size();
    return n;
  }

  const Var<T>& param(const std::string& name) const { return p(name); }
  bool has_param(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Tensor<T>> snapshot() const {
    std::vector<Tensor<T>> out;
    for (const auto& np : params_) out.push_back(np.var.value());
    return out;
  }

  void restore(const std::vector<Tensor<T>>& values) {
    if (values.size() != params_.size()) throw DimensionError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].shape() != params_[i].var.shape()) throw DimensionError("restore: shape mismatch");
      params_[i].var.mutable_value() = values[i];
    }
  }

 private:
  explicit Head(BlockConfig config) : config_(std::move(config)) {}

  const Var<T>& p(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("head " + config_.name() + " has no parameter '" + name + "'");
    return params_[it->second].var;
  }

  void add_param(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out, Rng* rng) {
    Tensor<T> t(shape);
    if (rng) {
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (auto& v : t.data()) v = static_cast<T>((2.0 * uniform_unit(*rng) - 1.0) * limit);
    }
    index_[name] = params_.size();
    params_.push_back({name, Var<T>::parameter(std::move(t))});
  }
  void add_matrix(const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
    add_param(name, {out, in}, in, out, &rng);
  }
  void add_bias(const std::string& name, std::size_t n) { add_param(name, {n}, 0, 0, nullptr); }

  void add_attention(Rng& rng) {
    const std::size_t d = config_.dim;
    if (config_.projected_attention) {
      add_matrix("attention.proj", d, d, rng);
      add_param("attention.u", {d}, d, 1, &rng);
    } else {
      add_param("attention.v", {d}, d, 1, &rng);
    }
  }
  void add_channel_mlp(Rng& rng) {
    const std::size_t d = config_.dim, b = config_.bottleneck();
    add_matrix("channel.down.weight", b, d, rng);
    add_bias("channel.down.bias", b);
    add_matrix("channel.up.weight", d, b, rng);
    add_bias("channel.up.bias", d);
  }
  void add_conv(const std::string& name, std::size_t cout, std::size_t cin, std::size_t k, Rng& rng) {
    add_param(name + ".weight", {cout, cin, k}, cin * k, cout * k, &rng);
    add_bias(name + ".bias", cout);
  }

  void init(Rng& rng) {
    const std::size_t d = config_.dim;
    std::size_t out_in = d;
    switch (config_.variant) {
      case Variant::dense_first_token:
      case Variant::max_pool:
      case Variant::avg_pool: break;
      case Variant::lstm: {
        const std::size_t h = config_.hidden;
        std::size_t in = d;
        for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
          for (const char* dir : {"fwd", "bwd"}) {
            const std::string base = "lstm." + std::to_string(l) + "." + dir;
            add_matrix(base + ".w_input", 4 * h, in, rng);
            add_matrix(base + ".w_recurrent", 4 * h, h, rng);
            add_bias(base + ".bias", 4 * h);
          }
          in = 2 * h;
        }
        out_in = 2 * h;
        break;
      }
      case Variant::attention: add_attention(rng); break;
      case Variant::rcab: add_channel_mlp(rng); break;
      case Variant::cbam:
        add_channel_mlp(rng);
        add_conv("spatial", 1, 2, 7, rng);
        break;
      case Variant::csar:
        add_channel_mlp(rng);
        add_conv("spatial", 1, d, 3, rng);
        add_matrix("fuse.weight", d, 2 * d, rng);
        add_bias("fuse.bias", d);
        break;
      case Variant::ram:
        add_channel_mlp(rng);
        add_conv("spatial", 1, d, 3, rng);
        break;
      case Variant::axel: {
        add_attention(rng);
        if (config_.ablation == Ablation::att_avg_fc_max_fc) {
          add_matrix("fc_max.weight", d, d, rng);
          add_bias("fc_max.bias", d);
          add_matrix("fc_avg.weight", d, d, rng);
          add_bias("fc_avg.bias", d);
        } else {
          add_matrix("fc_shared.weight", d, d, rng);
          add_bias("fc_shared.bias", d);
        }
        if (config_.ablation != Ablation::sum_fusion) add_conv("fuse", 1, axel_channel_count(), 1, rng);
        break;
      }
    }
    add_matrix("out.weight", 2, out_in, rng);
    add_bias("out.bias", 2);
  }

  std::size_t axel_channel_count() const {
    switch (config_.ablation) {
      case Ablation::att_avg_fc:
      case Ablation::att_max_fc: return 2;
      case Ablation::var_fc: return 4;
      default: return 3;
    }
  }

  Var<T> output(const Var<T>& features, const ForwardContext& ctx) const {
    Var<T> f = features;
    if (ctx.training && config_.dropout > 0.0) {
      if (!ctx.rng) throw std::invalid_argument("head: training with dropout needs an rng");
      f = dropout(f, config_.dropout, true, *ctx.rng);
    }
    return linear(f, p("out.weight"), p("out.bias"));
  }

  // x[T×d] + b[d] in every row.
  static Var<T> add_row_bias(const Var<T>& x, const Var<T>& b) {
    return add(x, outer_sum(Var<T>::constant(Tensor<T>(Shape{x.dim(0)})), b));
  }

  static Var<T> select_rows(const Var<T>& x, const Mask& mask) {
    std::vector<Var<T>> rows;
    for (std::size_t t = 0; t < mask.size(); ++t)
      if (mask[t]) rows.push_back(row(x, t));
    if (rows.empty()) throw EmptySequenceError("head: every position is masked");
    return stack(rows);
  }

  Var<T> attention_context(const Var<T>& x, const Mask& mask) const {
    Var<T> scores = config_.projected_attention
                        ? matvec(hsd::tanh(matmul(x, transpose(p("attention.proj")))), p("attention.u"))
                        : matvec(x, p("attention.v"));
    const Var<T> alpha = masked_softmax(scores, mask);
    return matvec(transpose(x), alpha);
  }

  Var<T> channel_mlp(const Var<T>& s) const {
    const Var<T> z = relu(linear(s, p("channel.down.weight"), p("channel.down.bias")));
    return linear(z, p("channel.up.weight"), p("channel.up.bias"));
  }

  // Width-k conv over positions of x[T×d] with zero padding; masked rows
  // are zeroed first so trailing padding looks like the sequence edge.
  Var<T> spatial_logits(const Var<T>& x, const Mask& mask, std::size_t k) const {
    const std::size_t pad = k / 2;
    const Var<T> cols = pad_length(transpose(mask_rows(x, mask)), pad, pad);
    return reshape(conv1d(cols, p("spatial.weight"), p("spatial.bias")), {x.dim(0)});
  }

  Var<T> forward_lstm(const Var<T>& x, const Mask& mask, const ForwardContext& ctx) const {
    LstmParams<T> layers;
    for (std::size_t l = 0; l < config_.lstm_layers; ++l) {
      const std::string base = "lstm." + std::to_string(l) + ".";
      auto cell = [&](const std::string& dir) {
        return LstmCell<T>{p(base + dir + ".w_input"), p(base + dir + ".w_recurrent"), p(base + dir + ".bias")};
      };
      layers.push_back({cell("fwd"), {cell("bwd")}});
    }
    const Var<T> states = lstm_forward(select_rows(x, mask), layers);
    const std::size_t h = config_.hidden, len = states.dim(0);
    const Var<T> last = concat<T>({slice(row(states, len - 1), 0, h), slice(row(states, 0), h, h)});
    return output(last, ctx);
  }

  Var<T> forward_rcab(const Var<T>& x, const Mask& mask, const ForwardContext& ctx) const {
    const Var<T> gate = sigmoid(channel_mlp(pool_axis(x, mask, PoolKind::avg)));
    return output(pool_axis(gate_features(x, gate), mask, PoolKind::avg), ctx);
  }

  Var<T> forward_cbam(const Var<T>& x, const Mask& mask, const ForwardContext& ctx) const {
    const Var<T> channel_gate =
        sigmoid(add(channel_mlp(pool_axis(x, mask, PoolKind::max)), channel_mlp(pool_axis(x, mask, PoolKind::avg))));
    const Var<T> refined = mask_rows(gate_features(x, channel_gate), mask);
    // Per-position max and mean across features: [2×T].
    const Var<T> across = transpose(refined);
    const Mask all(config_.dim, true);
    const Var<T> stats = stack<T>({pool_axis(across, all, PoolKind::max), pool_axis(across, all, PoolKind::avg)});
    const Var<T> conv = conv1d(pad_length(stats, 3, 3), p("spatial.weight"), p("spatial.bias"));
    const Var<T> spatial_gate = sigmoid(reshape(conv, {x.dim(0)}));
    return output(pool_axis(gate_positions(refined, spatial_gate), mask, PoolKind::avg), ctx);
  }

  Var<T> forward_csar(const Var<T>& x, const Mask& mask, const ForwardContext& ctx) const {
    const Var<T> channel_gate = sigmoid(channel_mlp(pool_axis(x, mask, PoolKind::avg)));
    const Var<T> spatial_gate = sigmoid(spatial_logits(x, mask, 3));
    const Var<T> both = concat_features<T>({gate_features(x, channel_gate), gate_positions(x, spatial_gate)});
    const Var<T> fused = add_row_bias(matmul(both, transpose(p("fuse.weight"))), p("fuse.bias"));
    return output(pool_axis(fused, mask, PoolKind::avg), ctx);
  }

  Var<T> forward_ram(const Var<T>& x, const Mask& mask, const ForwardContext& ctx) const {
    const Var<T> channel = channel_mlp(pool_axis(x, mask, PoolKind::var));
    const Var<T> gate = sigmoid(outer_sum(spatial_logits(x, mask, 3), channel));
    return output(pool_axis(mul(x, gate), mask, PoolKind::avg), ctx);
  }

  Var<T> axel_fused(const Var<T>& x, const Mask& mask) const {
    const auto channels = axel_channels(x, mask);
    if (config_.ablation == Ablation::sum_fusion) {
      Var<T> total = channels[0];
      for (std::size_t i = 1; i < channels.size(); ++i) total = add(total, channels[i]);
      return total;
    }
    // 1×1 conv over the channel stack [C×d].
    return reshape(conv1d(stack(channels), p("fuse.weight"), p("fuse.bias")), {config_.dim});
  }

  BlockConfig config_;
  std::vector<NamedParam<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace hsd
