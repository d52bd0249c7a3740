#pragma once

// Experiment files, protocol wiring and run records.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "hsd/baseline.hpp"
#include "hsd/blocks.hpp"
#include "hsd/features.hpp"
#include "hsd/partition.hpp"
#include "hsd/textprep.hpp"
#include "hsd/trainer.hpp"

namespace hsd {

namespace fs = std::filesystem;

enum class Protocol { unilingual, zero_shot, few_shot, few_shot_only };

inline std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::unilingual: return "unilingual";
    case Protocol::zero_shot: return "zero_shot";
    case Protocol::few_shot: return "few_shot";
    default: return "few_shot_only";
  }
}

/// One language's data: labeled corpus, split bundle and either frozen
/// features or a word-embedding table.
struct PartitionRef {
  fs::path corpus;
  fs::path bundle;
  std::optional<fs::path> features;
  std::optional<fs::path> embeddings;
};

struct ExperimentSpec {
  std::string name;
  Protocol protocol = Protocol::unilingual;
  double pct = 0;
  PartitionRef source;
  std::optional<PartitionRef> target;
  LayerView view = LayerView::final_layer;
  std::optional<BlockConfig> block;
  std::optional<SvmOptions> baseline;
  TrainConfig train;
  std::uint64_t seed = 0;
  fs::path output_dir;

  /// zero_shot runs as few_shot with nothing injected.
  Protocol effective_protocol() const { return protocol == Protocol::zero_shot ? Protocol::few_shot : protocol; }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

inline PartitionRef partition_from_json(const nlohmann::json& j, const fs::path& base, const std::string& where) {
  reject_unknown(j, {"corpus", "bundle", "features", "embeddings"}, where);
  PartitionRef r;
  r.corpus = resolve(base, j.at("corpus").get<std::string>());
  r.bundle = resolve(base, j.at("bundle").get<std::string>());
  if (j.contains("features")) r.features = resolve(base, j["features"].get<std::string>());
  if (j.contains("embeddings")) r.embeddings = resolve(base, j["embeddings"].get<std::string>());
  if (r.features && r.embeddings) throw ConfigError(where + ": give either 'features' or 'embeddings', not both");
  return r;
}

inline nlohmann::json partition_to_json(const PartitionRef& r) {
  nlohmann::json j{{"corpus", r.corpus.generic_string()}, {"bundle", r.bundle.generic_string()}};
  if (r.features) j["features"] = r.features->generic_string();
  if (r.embeddings) j["embeddings"] = r.embeddings->generic_string();
  return j;
}

}  // namespace detail

/// Parses and validates an experiment document. Relative paths resolve
/// against `base`. Throws ConfigError on any schema violation.
inline ExperimentSpec experiment_from_json(const nlohmann::json& j, const fs::path& base = {}) {
  ExperimentSpec s;
  try {
    detail::reject_unknown(j,
                           {"name", "protocol", "pct", "source", "target", "view", "block", "baseline", "train", "seed",
                            "output_dir"},
                           "experiment");
    if (j.contains("name")) s.name = j["name"].get<std::string>();
    const auto protocol = j.at("protocol").get<std::string>();
    if (protocol == "unilingual") s.protocol = Protocol::unilingual;
    else if (protocol == "zero_shot") s.protocol = Protocol::zero_shot;
    else if (protocol == "few_shot") s.protocol = Protocol::few_shot;
    else if (protocol == "few_shot_only") s.protocol = Protocol::few_shot_only;
    else throw ConfigError("experiment: unknown protocol '" + protocol + "'");

    if (j.contains("pct")) s.pct = j["pct"].get<double>();
    if (!(s.pct >= 0 && s.pct <= 100)) throw ConfigError("experiment: pct must lie in [0, 100]");
    if ((s.protocol == Protocol::unilingual || s.protocol == Protocol::zero_shot) && s.pct != 0) {
      throw ConfigError("experiment: pct applies to few_shot protocols only");
    }
    if (s.protocol == Protocol::few_shot_only && s.pct == 0) {
      throw ConfigError("experiment: few_shot_only needs pct > 0");
    }

    s.source = detail::partition_from_json(j.at("source"), base, "source");
    if (j.contains("target")) s.target = detail::partition_from_json(j["target"], base, "target");
    if (s.protocol != Protocol::unilingual && !s.target) {
      throw ConfigError("experiment: protocol " + protocol + " needs a target partition");
    }
    if (j.contains("view")) {
      try {
        s.view = parse_layer_view(j["view"].get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("experiment: ") + e.what());
      }
    }

    if (j.contains("block") == j.contains("baseline")) {
      throw ConfigError("experiment: give exactly one of 'block' and 'baseline'");
    }
    if (j.contains("block")) {
      s.block = block_config_from_json(j["block"]);
      for (const PartitionRef* p : {&s.source, s.target ? &*s.target : nullptr}) {
        if (p && !p->features && !p->embeddings) {
          throw ConfigError("experiment: neural heads need 'features' or 'embeddings' for every partition");
        }
      }
    } else {
      const auto& b = j["baseline"];
      detail::reject_unknown(b, {"kind", "C", "tolerance", "max_epochs"}, "baseline");
      if (b.at("kind").get<std::string>() != "svm") throw ConfigError("baseline: only kind 'svm' is supported");
      SvmOptions o;
      if (b.contains("C")) o.C = b["C"].get<double>();
      if (b.contains("tolerance")) o.tolerance = b["tolerance"].get<double>();
      if (b.contains("max_epochs")) o.max_epochs = b["max_epochs"].get<std::size_t>();
      if (!(o.C > 0)) throw ConfigError("baseline: C must be positive");
      s.baseline = o;
    }

    if (j.contains("train")) {
      const auto& t = j["train"];
      detail::reject_unknown(t,
                             {"preset", "learning_rate", "batch_size", "rnn_hidden", "rnn_dropout", "max_epochs",
                              "patience", "max_len"},
                             "train");
      if (t.contains("preset")) {
        const auto letter = t["preset"].get<std::string>();
        if (letter.size() != 1) throw ConfigError("train: preset must be a single letter");
        s.train = TrainConfig::from_preset(letter[0]);
      }
      if (t.contains("learning_rate")) s.train.learning_rate = t["learning_rate"].get<double>();
      if (t.contains("batch_size")) s.train.batch_size = t["batch_size"].get<std::size_t>();
      if (t.contains("rnn_hidden")) s.train.rnn_hidden = t["rnn_hidden"].get<std::size_t>();
      if (t.contains("rnn_dropout")) s.train.rnn_dropout = t["rnn_dropout"].get<double>();
      if (t.contains("max_epochs")) s.train.max_epochs = t["max_epochs"].get<std::size_t>();
      if (t.contains("patience")) s.train.patience = t["patience"].get<std::size_t>();
      if (t.contains("max_len")) s.train.max_len = t["max_len"].get<std::size_t>();
    }
    s.train.validate();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    s.output_dir = detail::resolve(base, j.at("output_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  return s;
}

inline ExperimentSpec load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open experiment file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j, path.parent_path());
}

inline nlohmann::json to_json(const ExperimentSpec& s) {
  nlohmann::json j;
  if (!s.name.empty()) j["name"] = s.name;
  j["protocol"] = to_string(s.protocol);
  j["pct"] = s.pct;
  j["source"] = detail::partition_to_json(s.source);
  if (s.target) j["target"] = detail::partition_to_json(*s.target);
  j["view"] = to_string(s.view);
  if (s.block) j["block"] = to_json(*s.block);
  if (s.baseline) j["baseline"] = {{"kind", "svm"}, {"C", s.baseline->C}, {"tolerance", s.baseline->tolerance},
                                   {"max_epochs", s.baseline->max_epochs}};
  nlohmann::json t{{"learning_rate", s.train.learning_rate}, {"batch_size", s.train.batch_size},
                   {"max_epochs", s.train.max_epochs}, {"patience", s.train.patience}, {"max_len", s.train.max_len}};
  if (s.train.preset_letter) t["preset"] = std::string(1, *s.train.preset_letter);
  if (s.train.rnn_hidden) t["rnn_hidden"] = *s.train.rnn_hidden;
  if (s.train.rnn_dropout) t["rnn_dropout"] = *s.train.rnn_dropout;
  j["train"] = t;
  j["seed"] = s.seed;
  j["output_dir"] = s.output_dir.generic_string();
  return j;
}

/// A partition's labeled examples per split, holding both token lists and
/// (for neural heads) feature sequences.
struct PartitionData {
  struct Item {
    std::string id;
    std::vector<std::string> tokens;
    std::optional<FeatureSequence> x;
    int label = 0;
  };
  std::array<std::vector<Item>, 3> splits;
  std::size_t dim = 0;
  std::vector<std::string> warnings;

  const std::vector<Item>& operator[](Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

inline PartitionData load_partition(const PartitionRef& ref, LayerView view, bool need_features) {
  const auto corpus = read_corpus_tsv(ref.corpus);
  const auto bundle = load_split_bundle(ref.bundle);
  std::unordered_map<std::string, const RawTweet*> by_id;
  for (const auto& t : corpus) by_id.emplace(t.id, &t);
  std::unordered_set<std::string> wanted;
  for (Split s : kSplits)
    for (const auto& id : bundle[s]) {
      if (!by_id.count(id)) throw DataError(ref.bundle.string() + ": id '" + id + "' is not in " + ref.corpus.string());
      wanted.insert(id);
    }

  PartitionData data;
  std::map<std::string, FeatureSequence> features;
  std::optional<EmbeddingTable> table;
  if (need_features && ref.features) {
    features = load_features(*ref.features, view, &wanted);
  } else if (need_features && ref.embeddings) {
    table = load_embedding_table(*ref.embeddings);
    data.dim = table->dim();
  }

  std::size_t empty_docs = 0;
  for (Split s : kSplits) {
    for (const auto& id : bundle[s]) {
      const RawTweet& t = *by_id.at(id);
      PartitionData::Item item{id, split_whitespace(t.text), std::nullopt, t.label};
      if (need_features && ref.features) {
        auto it = features.find(id);
        if (it == features.end()) throw DataError(ref.features->string() + ": no features for id '" + id + "'");
        item.x = it->second;
      } else if (table) {
        if (item.tokens.empty()) {
          ++empty_docs;
          item.x = FeatureSequence(Tensor<float>(Shape{1, table->dim()}));
        } else {
          item.x = embed_sequence(item.tokens, *table);
        }
      }
      if (item.x) {
        if (data.dim == 0) data.dim = item.x->dim();
        if (item.x->dim() != data.dim) throw DataError("inconsistent feature dims in " + ref.corpus.string());
      }
      data.splits[static_cast<std::size_t>(s)].push_back(std::move(item));
    }
  }
  if (empty_docs) data.warnings.push_back(std::to_string(empty_docs) + " empty documents embedded as one zero row");
  return data;
}

/// Train, validation and test items for a protocol.
struct ProtocolSets {
  std::vector<PartitionData::Item> train, val, test;
  std::size_t injected = 0;
};

inline ProtocolSets assemble_protocol(const ExperimentSpec& spec, const PartitionData& source,
                                      const PartitionData* target, std::uint64_t sample_seed) {
  ProtocolSets sets;
  sets.val = source[Split::val];
  const auto id_of = [](const PartitionData::Item& i) { return i.id; };
  switch (spec.effective_protocol()) {
    case Protocol::unilingual:
      sets.train = source[Split::train];
      sets.test = source[Split::test];
      break;
    case Protocol::few_shot:
      sets.train = few_shot_mix(source[Split::train], (*target)[Split::train], spec.pct, sample_seed, id_of);
      sets.injected = sets.train.size() - source[Split::train].size();
      sets.test = (*target)[Split::test];
      break;
    case Protocol::few_shot_only:
      sets.train = few_shot_mix(std::vector<PartitionData::Item>{}, (*target)[Split::train], spec.pct, sample_seed, id_of);
      sets.injected = sets.train.size();
      sets.test = (*target)[Split::test];
      break;
    default: break;
  }
  if (sets.train.empty()) throw DataError("protocol " + to_string(spec.protocol) + " leaves the training set empty");
  if (sets.val.empty()) throw DataError("source partition has no validation examples");
  if (sets.test.empty()) throw DataError("protocol " + to_string(spec.protocol) + " has no test examples");
  return sets;
}

inline Dataset to_dataset(const std::vector<PartitionData::Item>& items) {
  Dataset out;
  out.reserve(items.size());
  for (const auto& i : items) out.push_back({i.id, *i.x, i.label});
  return out;
}

struct RunOutcome {
  nlohmann::json record;  // results only; deterministic for a given effective spec
  double wall_seconds = 0;
  MetricsReport test;
  std::vector<std::pair<std::string, int>> test_predictions;
};

/// Per-purpose seeds derived from the experiment seed.
struct SeedPlan {
  std::uint64_t init, train, sample, svm;
  explicit SeedPlan(std::uint64_t seed) {
    Rng rng(seed);
    init = rng();
    train = rng();
    sample = rng();
    svm = rng();
  }
};

inline RunOutcome run_experiment(const ExperimentSpec& spec) {
  const auto started = std::chrono::steady_clock::now();
  const bool neural = spec.block.has_value();
  const SeedPlan seeds(spec.seed);

  const PartitionData source = load_partition(spec.source, spec.view, neural);
  std::optional<PartitionData> target;
  if (spec.effective_protocol() != Protocol::unilingual) target = load_partition(*spec.target, spec.view, neural);
  if (neural && target && target->dim != source.dim) {
    throw DataError("source features have dim " + std::to_string(source.dim) + ", target features " +
                    std::to_string(target->dim));
  }
  const ProtocolSets sets = assemble_protocol(spec, source, target ? &*target : nullptr, seeds.sample);

  RunOutcome out;
  nlohmann::json& rec = out.record;
  rec["protocol"] = to_string(spec.effective_protocol());
  rec["pct"] = spec.pct;
  rec["seed"] = spec.seed;
  rec["view"] = to_string(spec.view);
  rec["train_size"] = sets.train.size();
  rec["val_size"] = sets.val.size();
  rec["test_size"] = sets.test.size();
  rec["injected"] = sets.injected;
  nlohmann::json warnings = nlohmann::json::array();
  for (const PartitionData* d : std::initializer_list<const PartitionData*>{&source, target ? &*target : nullptr})
    if (d)
      for (const auto& w : d->warnings) warnings.push_back(w);
  rec["warnings"] = warnings;

  std::vector<int> test_labels;
  for (const auto& i : sets.test) test_labels.push_back(i.label);
  std::vector<int> preds;

  if (neural) {
    BlockConfig block = *spec.block;
    if (block.dim != 0 && block.dim != source.dim) {
      throw DataError("block expects dim " + std::to_string(block.dim) + ", features have " +
                      std::to_string(source.dim));
    }
    block.dim = source.dim;
    spec.train.apply_to(block);
    TrainConfig train = spec.train;
    train.seed = seeds.train;
    auto head = Head<float>::build(block, seeds.init);
    const Dataset train_set = to_dataset(sets.train), val_set = to_dataset(sets.val), test_set = to_dataset(sets.test);
    const TrainResult result = hsd::train(head, train_set, val_set, train);
    preds = predict(head, test_set, train.max_len);

    rec["model"] = {{"block", to_json(block)}, {"name", block.name()}, {"param_count", head.param_count()}};
    nlohmann::json history = nlohmann::json::array();
    for (const auto& e : result.history) {
      history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_f1", e.val.f1},
                         {"val_macro_f1", e.val.macro_f1}, {"val_accuracy", e.val.accuracy}, {"improved", e.improved}});
    }
    rec["history"] = history;
    rec["best_epoch"] = result.best_epoch;
    rec["val"] = to_json(evaluate(head, val_set, train.max_len));
  } else {
    std::vector<std::vector<std::string>> train_docs;
    std::vector<int> train_labels;
    for (const auto& i : sets.train) {
      train_docs.push_back(i.tokens);
      train_labels.push_back(i.label);
    }
    TfidfVectorizer vec;
    vec.fit(train_docs);
    SvmOptions opt = *spec.baseline;
    opt.seed = seeds.svm;
    const SvmResult svm = svm_train(vec.transform(train_docs), train_labels, vec.vocabulary_size(), opt);
    auto predict_items = [&](const std::vector<PartitionData::Item>& items) {
      std::vector<int> p;
      for (const auto& i : items) p.push_back(svm.model.predict(vec.transform(i.tokens)));
      return p;
    };
    std::vector<int> val_labels;
    for (const auto& i : sets.val) val_labels.push_back(i.label);
    preds = predict_items(sets.test);
    rec["model"] = {{"baseline", "svm"}, {"C", opt.C}, {"vocabulary", vec.vocabulary_size()},
                    {"epochs", svm.objective.size()}, {"objective", svm.objective.back()}};
    rec["val"] = to_json(compute_metrics(predict_items(sets.val), val_labels));
  }

  out.test = compute_metrics(preds, test_labels);
  rec["test"] = to_json(out.test);
  for (std::size_t i = 0; i < sets.test.size(); ++i) out.test_predictions.emplace_back(sets.test[i].id, preds[i]);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

/// Writes run.json ({"experiment", "result"}, deterministic), timing.json
/// and predictions.tsv.
inline void write_run(const fs::path& dir, const ExperimentSpec& spec, const RunOutcome& run) {
  fs::create_directories(dir);
  const nlohmann::json doc{{"experiment", to_json(spec)}, {"result", run.record}};
  std::ofstream(dir / "run.json", std::ios::trunc) << doc.dump(2) << '\n';
  std::ofstream(dir / "timing.json", std::ios::trunc) << nlohmann::json{{"wall_seconds", run.wall_seconds}}.dump(2)
                                                      << '\n';
  std::ofstream preds(dir / "predictions.tsv", std::ios::trunc);
  preds << "id\tprediction\n";
  for (const auto& [id, p] : run.test_predictions) preds << id << '\t' << p << '\n';
}

inline std::string format_pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v * 100.0;
  return s.str();
}

struct SweepRow {
  double pct = 0;
  std::size_t injected = 0;
  MetricsReport test;
};

/// One run per percentage, each in `<output_dir>/pct_<p>`. Runs execute on
/// up to `jobs` threads; results are reported in input order.
inline std::vector<SweepRow> run_sweep(const ExperimentSpec& base, const std::vector<double>& pcts, std::size_t jobs,
                                       const std::function<void(const std::string&)>& log = {}) {
  if (base.protocol == Protocol::unilingual) throw ConfigError("sweep: needs a cross-lingual protocol");
  std::vector<ExperimentSpec> specs;
  for (double p : pcts) {
    ExperimentSpec s = base;
    s.protocol = base.protocol == Protocol::few_shot_only ? Protocol::few_shot_only : Protocol::few_shot;
    if (s.protocol == Protocol::few_shot_only && p == 0) throw ConfigError("sweep: few_shot_only needs pct > 0");
    s.pct = p;
    std::ostringstream dir;
    dir << "pct_" << p;
    s.output_dir = base.output_dir / dir.str();
    specs.push_back(std::move(s));
  }

  std::vector<std::optional<SweepRow>> rows(specs.size());
  std::vector<std::exception_ptr> errors(specs.size());
  std::mutex log_mutex;
  std::size_t next = 0;
  std::mutex next_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(next_mutex);
        if (next >= specs.size()) return;
        i = next++;
      }
      try {
        const auto run = run_experiment(specs[i]);
        write_run(specs[i].output_dir, specs[i], run);
        rows[i] = SweepRow{specs[i].pct, run.record["injected"].get<std::size_t>(), run.test};
        if (log) {
          std::lock_guard lock(log_mutex);
          std::ostringstream line;
          line << "pct " << specs[i].pct << ": F1 " << format_pct(run.test.f1);
          log(line.str());
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, specs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<SweepRow> out;
  for (auto& r : rows) out.push_back(*r);
  return out;
}

inline nlohmann::json sweep_summary_json(const std::vector<SweepRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"pct", r.pct}, {"injected", r.injected}, {"test", to_json(r.test)}});
  }
  return arr;
}

inline std::string sweep_summary_table(const std::vector<SweepRow>& rows) {
  std::ostringstream s;
  s << std::left << std::setw(8) << "pct" << std::right << std::setw(10) << "injected" << std::setw(9) << "F1"
    << std::setw(10) << "macroF1" << std::setw(9) << "ACC" << std::setw(9) << "PRC" << std::setw(9) << "REC" << '\n';
  for (const auto& r : rows) {
    std::ostringstream pct;
    pct << r.pct;
    s << std::left << std::setw(8) << pct.str() << std::right << std::setw(10) << r.injected << std::setw(9)
      << format_pct(r.test.f1) << std::setw(10) << format_pct(r.test.macro_f1) << std::setw(9)
      << format_pct(r.test.accuracy) << std::setw(9) << format_pct(r.test.precision) << std::setw(9)
      << format_pct(r.test.recall) << '\n';
  }
  return s.str();
}

}  // namespace hsd
