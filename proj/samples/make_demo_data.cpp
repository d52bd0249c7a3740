// Writes a small synthetic English/Spanish pair plus ready-to-run experiment
// files, so the hsd tool can be exercised without real corpora.
//
//   make_demo_data demo
//   hsd run --experiment demo/axel_en.json
//   hsd sweep --experiment demo/few_shot_en_es.json --pcts 0,5,25,100

#include <fstream>
#include <iostream>

#include "hsd/synthetic.hpp"

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

nlohmann::json partition(const std::string& lang, bool embeddings = false) {
  nlohmann::json p{{"corpus", lang + "/corpus.tsv"}, {"bundle", lang + "/splits.json"}};
  p[embeddings ? "embeddings" : "features"] = lang + (embeddings ? "/embeddings.txt" : "/features.frzf");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_demo_data <dir>\n";
    return 1;
  }
  const std::filesystem::path dir(argv[1]);
  try {
    hsd::write_synthetic(dir, {.prefix = "en", .size = 400, .dim = 16, .shift = 0.5, .seed = 1});
    hsd::write_synthetic(dir, {.prefix = "es",
                               .language = hsd::Language::es,
                               .size = 400,
                               .dim = 16,
                               .shift = 0.5,
                               .lang_offset = 0.4,
                               .seed = 2});
    const nlohmann::json train{{"preset", "F"}, {"max_epochs", 100}, {"patience", 20}};

    write_json(dir / "axel_en.json", {{"name", "axel_en"},
                                      {"protocol", "unilingual"},
                                      {"source", partition("en")},
                                      {"block", {{"variant", "axel"}, {"reduction", 4}}},
                                      {"train", train},
                                      {"seed", 1},
                                      {"output_dir", "runs/axel_en"}});
    write_json(dir / "lstm_en.json", {{"name", "lstm_en"},
                                      {"protocol", "unilingual"},
                                      {"source", partition("en")},
                                      {"block", {{"variant", "lstm_head"}, {"layers", 2}}},
                                      {"train", {{"preset", "D"}, {"max_epochs", 100}, {"patience", 20}}},
                                      {"seed", 1},
                                      {"output_dir", "runs/lstm_en"}});
    write_json(dir / "svm_en.json", {{"name", "svm_en"},
                                     {"protocol", "unilingual"},
                                     {"source", partition("en")},
                                     {"baseline", {{"kind", "svm"}, {"C", 1.0}}},
                                     {"seed", 1},
                                     {"output_dir", "runs/svm_en"}});
    write_json(dir / "embeddings_en.json", {{"name", "embeddings_en"},
                                            {"protocol", "unilingual"},
                                            {"source", partition("en", true)},
                                            {"block", {{"variant", "max_pool"}}},
                                            {"train", train},
                                            {"seed", 1},
                                            {"output_dir", "runs/embeddings_en"}});
    write_json(dir / "zero_shot_en_es.json", {{"name", "zero_shot_en_es"},
                                              {"protocol", "zero_shot"},
                                              {"source", partition("en")},
                                              {"target", partition("es")},
                                              {"block", {{"variant", "axel"}, {"reduction", 4}}},
                                              {"train", train},
                                              {"seed", 1},
                                              {"output_dir", "runs/zero_shot_en_es"}});
    write_json(dir / "few_shot_en_es.json", {{"name", "few_shot_en_es"},
                                             {"protocol", "few_shot"},
                                             {"pct", 10},
                                             {"source", partition("en")},
                                             {"target", partition("es")},
                                             {"block", {{"variant", "axel"}, {"reduction", 4}}},
                                             {"train", train},
                                             {"seed", 1},
                                             {"output_dir", "runs/few_shot_en_es"}});
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  std::cout << "wrote demo data and experiments to " << dir.string() << '\n';
  return 0;
}
