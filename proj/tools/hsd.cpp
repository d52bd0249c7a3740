// hsd: command-line front end. Exit codes: 0 success, 1 usage or schema
// error, 2 data error.

#include <cstdio>
#include <functional>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsd/experiment.hpp"
#include "hsd/partition.hpp"
#include "hsd/textprep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2 };

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw hsd::FormatError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw hsd::FormatError("cannot open " + path.string() + " for writing");
  out << text;
}

hsd::KeyPhraseSet phrases_from(const std::string& path) {
  return path.empty() ? hsd::KeyPhraseSet::defaults() : hsd::KeyPhraseSet::load(path);
}

hsd::RuleSet rules_from(const std::string& dir) { return hsd::RuleSet::load(dir.empty() ? hsd::default_rules_dir() : fs::path(dir)); }

// id<TAB>prediction lines; a first line starting with "id<TAB>" is a header.
std::unordered_map<std::string, int> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw hsd::FormatError("cannot open predictions " + path.string());
  std::unordered_map<std::string, int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("id\t", 0) == 0)) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw hsd::ParseError(lineno, "expected id<TAB>prediction");
    const auto value = line.substr(tab + 1);
    if (value != "0" && value != "1") throw hsd::ParseError(lineno, "prediction must be 0 or 1, got '" + value + "'");
    if (!out.emplace(line.substr(0, tab), value == "1").second) {
      throw hsd::ParseError(lineno, "duplicate id '" + line.substr(0, tab) + "'");
    }
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& list, const char* what) {
  std::vector<double> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw hsd::ConfigError(std::string(what) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw hsd::ConfigError(std::string(what) + ": empty list");
  return out;
}

std::string metrics_line(const hsd::MetricsReport& m) {
  return "F1 " + hsd::format_pct(m.f1) + "  macro-F1 " + hsd::format_pct(m.macro_f1) + "  ACC " +
         hsd::format_pct(m.accuracy) + "  PRC " + hsd::format_pct(m.precision) + "  REC " +
         hsd::format_pct(m.recall);
}

struct CleanArgs {
  std::string in, out, rules, stats;
  std::size_t max_words = 150;
};

int cmd_clean(const CleanArgs& a) {
  const auto rules = rules_from(a.rules);
  const auto raw = hsd::read_corpus_tsv(a.in);
  const fs::path stats_path = a.stats.empty() ? fs::path(a.out + ".stats.json") : fs::path(a.stats);
  if (raw.empty()) {
    warn(a.in + " holds no tweets; writing empty output");
    write_text(a.out, "");
    write_json(stats_path, {{"tweets", 0}, {"stats", json::array()}, {"outliers", json::array()},
                            {"empty_after_cleaning", json::array()}});
    return kOk;
  }
  std::vector<hsd::RawTweet> cleaned;
  json empty = json::array();
  for (const auto& t : raw) {
    const auto c = hsd::clean(t, rules);
    if (c.tokens.empty()) {
      empty.push_back(t.id);
      continue;
    }
    cleaned.push_back({t.id, c.text, t.label, t.language});
  }
  if (!empty.empty()) warn(std::to_string(empty.size()) + " tweets are empty after cleaning and were dropped");
  hsd::write_corpus_tsv(a.out, cleaned);
  write_json(stats_path, {{"tweets", raw.size()},
                          {"stats", hsd::to_json(hsd::corpus_stats(raw))},
                          {"outliers", hsd::detect_outliers(raw, a.max_words)},
                          {"max_words", a.max_words},
                          {"empty_after_cleaning", empty}});
  std::cout << "cleaned " << raw.size() << " tweets -> " << a.out << '\n';
  return kOk;
}

struct AuditArgs {
  std::string in, splits, phrases, predictions, json_out, rules;
  bool no_clean = false;
};

int cmd_audit(const AuditArgs& a) {
  auto corpus = hsd::read_corpus_tsv(a.in);
  if (!a.no_clean) {
    const auto rules = rules_from(a.rules);
    for (auto& t : corpus) t.text = hsd::clean(t, rules).text;
  }
  const auto bundle = hsd::load_split_bundle(a.splits);
  const auto phrases = phrases_from(a.phrases);
  std::unordered_map<std::string, int> preds;
  if (!a.predictions.empty()) preds = read_predictions(a.predictions);
  const auto table = hsd::hate_ratio_table(corpus, bundle, phrases, a.predictions.empty() ? nullptr : &preds);
  std::cout << hsd::format_hate_ratio_table(table);
  if (!a.json_out.empty()) write_json(a.json_out, hsd::to_json(table));
  return kOk;
}

struct ResplitArgs {
  std::string in, ratios, out, phrases;
  std::uint64_t seed = 0;
};

int cmd_resplit(const ResplitArgs& a) {
  std::vector<double> r(hsd::kDefaultRatios.begin(), hsd::kDefaultRatios.end());
  if (!a.ratios.empty()) r = parse_numbers(a.ratios, "--ratios");
  if (r.size() != 3) throw hsd::ConfigError("--ratios needs three values: train,val,test");
  const auto corpus = hsd::read_corpus_tsv(a.in);
  const auto bundle = hsd::stratified_resplit(corpus, {r[0], r[1], r[2]}, a.seed, phrases_from(a.phrases));
  for (const auto& w : bundle.warnings) warn(w);
  hsd::save_split_bundle(a.out, bundle);
  std::cout << "train " << bundle[hsd::Split::train].size() << "  val " << bundle[hsd::Split::val].size()
            << "  test " << bundle[hsd::Split::test].size() << " -> " << a.out << '\n';
  return kOk;
}

struct BundleArgs {
  std::string train, val, test, out, corpus_out, phrases;
};

int cmd_bundle(const BundleArgs& a) {
  const auto train = hsd::read_corpus_tsv(a.train), val = hsd::read_corpus_tsv(a.val), test = hsd::read_corpus_tsv(a.test);
  const auto bundle = hsd::bundle_from_partitions(train, val, test, phrases_from(a.phrases));
  hsd::save_split_bundle(a.out, bundle);
  if (!a.corpus_out.empty()) {
    std::vector<hsd::RawTweet> all(train);
    all.insert(all.end(), val.begin(), val.end());
    all.insert(all.end(), test.begin(), test.end());
    hsd::write_corpus_tsv(a.corpus_out, all);
  }
  std::cout << "train " << train.size() << "  val " << val.size() << "  test " << test.size() << " -> " << a.out
            << '\n';
  return kOk;
}

struct RunArgs {
  std::string experiment;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& a) {
  auto spec = hsd::load_experiment(a.experiment);
  if (a.seed) spec.seed = *a.seed;
  const auto run = hsd::run_experiment(spec);
  for (const auto& w : run.record["warnings"]) warn(w.get<std::string>());
  hsd::write_run(spec.output_dir, spec, run);
  std::cout << (spec.name.empty() ? std::string("run") : spec.name) << " [" << hsd::to_string(spec.protocol)
            << "] test " << metrics_line(run.test) << '\n'
            << "records in " << spec.output_dir.string() << '\n';
  return kOk;
}

struct SweepArgs {
  std::string experiment, pcts = "0,1,5,10,25,50,100";
  std::size_t jobs = 1;
  std::optional<std::uint64_t> seed;
};

int cmd_sweep(const SweepArgs& a) {
  auto spec = hsd::load_experiment(a.experiment);
  if (a.seed) spec.seed = *a.seed;
  const auto pcts = parse_numbers(a.pcts, "--pcts");
  for (double p : pcts)
    if (!(p >= 0 && p <= 100)) throw hsd::ConfigError("--pcts: values must lie in [0, 100]");
  const auto rows = hsd::run_sweep(spec, pcts, std::max<std::size_t>(1, a.jobs),
                                   [](const std::string& line) { std::cerr << line << '\n'; });
  const auto table = hsd::sweep_summary_table(rows);
  write_json(spec.output_dir / "summary.json", {{"experiment", hsd::to_json(spec)}, {"runs", hsd::sweep_summary_json(rows)}});
  write_text(spec.output_dir / "summary.txt", table);
  std::cout << table;
  return kOk;
}

struct CoverageArgs {
  std::string in, emb, json_out;
};

int cmd_coverage(const CoverageArgs& a) {
  const auto table = hsd::load_embedding_table(a.emb);
  const auto corpus = hsd::read_corpus_tsv(a.in);
  std::vector<std::vector<std::string>> docs;
  for (const auto& t : corpus) docs.push_back(hsd::split_whitespace(t.text));
  hsd::CoverageReport r;
  try {
    r = hsd::coverage_report(docs, table);
  } catch (const std::invalid_argument& e) {
    throw hsd::DataError(e.what());
  }
  std::cout << "unique-word coverage " << hsd::format_pct(r.unique_word_coverage / 100.0) << "% of " << r.unique_words
            << " words\nfull-text coverage   " << hsd::format_pct(r.full_text_coverage / 100.0) << "% of " << r.tokens
            << " tokens\n";
  if (!a.json_out.empty()) {
    write_json(a.json_out, {{"unique_word_coverage", r.unique_word_coverage},
                            {"full_text_coverage", r.full_text_coverage},
                            {"unique_words", r.unique_words},
                            {"tokens", r.tokens}});
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hate speech detection on frozen transformer features"};
  app.require_subcommand(1);
  std::function<int()> action;

  CleanArgs clean;
  auto* c = app.add_subcommand("clean", "Normalize a corpus TSV and write corpus statistics");
  c->add_option("--in", clean.in, "Input corpus (id, text, HS, lang)")->required();
  c->add_option("--out", clean.out, "Cleaned corpus")->required();
  c->add_option("--rules", clean.rules, "Rule table directory");
  c->add_option("--stats", clean.stats, "Statistics JSON (default: <out>.stats.json)");
  c->add_option("--max-words", clean.max_words, "Outlier threshold in words")->check(CLI::PositiveNumber);
  c->callback([&] { action = [&] { return cmd_clean(clean); }; });

  AuditArgs audit;
  auto* au = app.add_subcommand("audit", "Hate ratio per key phrase, train+val versus test");
  au->add_option("--in", audit.in, "Corpus TSV")->required();
  au->add_option("--splits", audit.splits, "Split bundle JSON")->required();
  au->add_option("--phrases", audit.phrases, "Key phrase file (family<TAB>pattern)");
  au->add_option("--predictions", audit.predictions, "Test predictions (id<TAB>0|1)");
  au->add_option("--json", audit.json_out, "Also write the table as JSON");
  au->add_option("--rules", audit.rules, "Rule table directory used to clean the text");
  au->add_flag("--no-clean", audit.no_clean, "Match phrases against the text as given");
  au->callback([&] { action = [&] { return cmd_audit(audit); }; });

  ResplitArgs resplit;
  auto* r = app.add_subcommand("resplit", "Stratified train/val/test split by key phrase and label");
  r->add_option("--in", resplit.in, "Corpus TSV")->required();
  r->add_option("--ratios", resplit.ratios, "train,val,test fractions (default 9000:1000:2971)");
  r->add_option("--seed", resplit.seed, "Shuffle seed");
  r->add_option("--out", resplit.out, "Split bundle JSON")->required();
  r->add_option("--phrases", resplit.phrases, "Key phrase file");
  r->callback([&] { action = [&] { return cmd_resplit(resplit); }; });

  BundleArgs bundle;
  auto* b = app.add_subcommand("bundle", "Split bundle from existing train/val/test files");
  b->add_option("--train", bundle.train, "Training corpus TSV")->required();
  b->add_option("--val", bundle.val, "Validation corpus TSV")->required();
  b->add_option("--test", bundle.test, "Test corpus TSV")->required();
  b->add_option("--out", bundle.out, "Split bundle JSON")->required();
  b->add_option("--corpus-out", bundle.corpus_out, "Write the merged corpus TSV");
  b->add_option("--phrases", bundle.phrases, "Key phrase file");
  b->callback([&] { action = [&] { return cmd_bundle(bundle); }; });

  RunArgs run;
  auto* ru = app.add_subcommand("run", "Run one experiment file");
  ru->add_option("--experiment", run.experiment, "Experiment JSON")->required();
  ru->add_option("--seed", run.seed, "Override the experiment seed");
  ru->callback([&] { action = [&] { return cmd_run(run); }; });

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep", "Few-shot percentage sweep");
  s->add_option("--experiment", sweep.experiment, "Experiment JSON")->required();
  s->add_option("--pcts", sweep.pcts, "Comma-separated percentages");
  s->add_option("--jobs", sweep.jobs, "Worker threads")->check(CLI::PositiveNumber);
  s->add_option("--seed", sweep.seed, "Override the experiment seed");
  s->callback([&] { action = [&] { return cmd_sweep(sweep); }; });

  CoverageArgs coverage;
  auto* co = app.add_subcommand("coverage", "Vocabulary coverage of an embedding table");
  co->add_option("--in", coverage.in, "Cleaned corpus TSV")->required();
  co->add_option("--emb", coverage.emb, "Embedding text file")->required();
  co->add_option("--json", coverage.json_out, "Also write the report as JSON");
  co->callback([&] { action = [&] { return cmd_coverage(coverage); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    return action();
  } catch (const hsd::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const hsd::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const hsd::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const hsd::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const hsd::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const hsd::EmptySequenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const hsd::LabelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}
