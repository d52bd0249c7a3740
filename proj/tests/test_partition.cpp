#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "hsd/partition.hpp"
#include "support/temp_dir.hpp"

namespace hsd {
namespace {

RawTweet tweet(std::string id, std::string text, int label) {
  return RawTweet{std::move(id), std::move(text), label, Language::en};
}

const KeyPhraseSet kPhrases = KeyPhraseSet::defaults();

// Corpus with n[c] examples of each category index c.
std::vector<RawTweet> category_corpus(const std::array<std::size_t, kCategoryCount>& n, unsigned tag = 0) {
  const char* text[] = {"nice weather today", "build the wall now", "you bitch"};
  std::vector<RawTweet> out;
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    const auto cat = Category::from_index(c);
    for (std::size_t i = 0; i < n[c]; ++i) {
      out.push_back(tweet("t" + std::to_string(tag) + "-" + std::to_string(c) + "-" + std::to_string(i),
                          text[static_cast<std::size_t>(cat.family)], cat.hateful ? 1 : 0));
    }
  }
  return out;
}

double hate_ratio(const std::vector<RawTweet>& corpus, const std::vector<std::string>& ids) {
  std::set<std::string> hateful;
  for (const auto& t : corpus)
    if (t.label == 1) hateful.insert(t.id);
  std::size_t h = 0;
  for (const auto& id : ids) h += hateful.count(id);
  return static_cast<double>(h) / static_cast<double>(ids.size());
}

TEST(ExpandPattern, WildcardAndAlternatives) {
  EXPECT_EQ(expand_pattern("build * wall"), (std::vector<std::string>{"build the wall", "build that wall"}));
  EXPECT_EQ(expand_pattern("MAGA|Make America  great again"),
            (std::vector<std::string>{"maga", "make america great again"}));
  EXPECT_THROW(expand_pattern("a * b * c"), std::invalid_argument);
  EXPECT_THROW(expand_pattern("a||b"), std::invalid_argument);
}

TEST(KeyPhrases, DefaultsCoverBothFamilies) {
  std::set<std::string> imm, women;
  for (const auto& g : kPhrases.groups)
    for (const auto& v : g.variants) (g.family == Family::anti_immigration ? imm : women).insert(v);
  EXPECT_EQ(imm, (std::set<std::string>{"build the wall", "build that wall", "maga", "make america great again",
                                        "illegal aliens"}));
  EXPECT_EQ(women, (std::set<std::string>{"bitch"}));
}

TEST(Categorize, Examples) {
  EXPECT_EQ(categorize("build the wall now", 1, kPhrases), (Category{Family::anti_immigration, true}));
  EXPECT_EQ(categorize("nice weather", 0, kPhrases), (Category{Family::none, false}));
  EXPECT_EQ(categorize("maga bitch", 1, kPhrases), (Category{Family::anti_immigration, true}));
  EXPECT_EQ(categorize("Build THAT Wall", 0, kPhrases), (Category{Family::anti_immigration, false}));
  EXPECT_EQ(categorize("stupid bitches", 0, kPhrases), (Category{Family::anti_women, false}));
}

TEST(Categorize, PrecedenceIsConfigurable) {
  auto p = KeyPhraseSet::defaults();
  p.precedence = Family::anti_women;
  EXPECT_EQ(categorize("maga bitch", 1, p).family, Family::anti_women);
}

TEST(Categorize, IndexRoundTrip) {
  for (std::size_t i = 0; i < kCategoryCount; ++i) EXPECT_EQ(Category::from_index(i).index(), i);
}

TEST(KeyPhrases, LoadFromFile) {
  TempDir dir;
  std::ofstream(dir / "p.tsv") << "# phrases\nanti_immigration\tbuild * wall\nanti_women\twhore|slut\n";
  auto p = KeyPhraseSet::load(dir / "p.tsv");
  ASSERT_EQ(p.groups.size(), 2u);
  EXPECT_EQ(p.groups[1].variants, (std::vector<std::string>{"whore", "slut"}));
  std::ofstream(dir / "bad.tsv") << "anti_immigration\tmaga\nmisc\tfoo\n";
  try {
    KeyPhraseSet::load(dir / "bad.tsv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::ofstream(dir / "one.tsv") << "anti_immigration\tmaga\n";
  EXPECT_THROW(KeyPhraseSet::load(dir / "one.tsv"), FormatError);
}

TEST(HateRatio, NineOfTenMagaHatefulInTrainVal) {
  std::vector<RawTweet> corpus;
  SplitBundle b;
  for (int i = 0; i < 10; ++i) {
    corpus.push_back(tweet("m" + std::to_string(i), "maga forever", i < 9 ? 1 : 0));
    b[i < 7 ? Split::train : Split::val].push_back("m" + std::to_string(i));
  }
  corpus.push_back(tweet("x", "maga", 0));
  b[Split::test].push_back("x");
  auto table = hate_ratio_table(corpus, b, kPhrases);
  const auto& maga = table.rows[1];
  EXPECT_EQ(maga.name, "maga|make america great again");
  EXPECT_EQ(maga.train_val.hateful, 9u);
  EXPECT_EQ(maga.train_val.total, 10u);
  EXPECT_DOUBLE_EQ(*maga.train_val.ratio(), 0.9);
  EXPECT_EQ(format_ratio(maga.train_val), "90%");
  EXPECT_EQ(format_ratio(maga.test), "0%");
}

TEST(HateRatio, AbsentPhraseIsNotAvailable) {
  SplitBundle b;
  b[Split::train] = {"a"};
  b[Split::test] = {"b"};
  auto table = hate_ratio_table({tweet("a", "hello", 1), tweet("b", "bye", 0)}, b, kPhrases);
  for (const auto& row : table.rows) {
    EXPECT_FALSE(row.train_val.ratio().has_value());
    EXPECT_EQ(format_ratio(row.test), "n/a");
  }
}

TEST(HateRatio, FamilyTotalsCountTweetsOnce) {
  SplitBundle b;
  b[Split::train] = {"a", "b", "c"};
  b[Split::test] = {"d", "e"};
  std::vector<RawTweet> corpus = {tweet("a", "maga build the wall", 1), tweet("b", "illegal aliens", 0),
                                  tweet("c", "bitch", 1), tweet("d", "build that wall", 0),
                                  tweet("e", "maga bitch", 1)};
  std::unordered_map<std::string, int> preds = {{"d", 1}, {"e", 1}};
  auto table = hate_ratio_table(corpus, b, kPhrases, &preds);
  const auto& imm = table.rows[kPhrases.groups.size()];
  const auto& women = table.rows[kPhrases.groups.size() + 1];
  EXPECT_TRUE(imm.is_total);
  EXPECT_EQ(imm.train_val.total, 2u);
  EXPECT_EQ(imm.train_val.hateful, 1u);
  EXPECT_EQ(imm.test.total, 2u);
  EXPECT_EQ(women.train_val.total, 1u);
  EXPECT_EQ(women.test.total, 1u);
  ASSERT_TRUE(table.false_positives.has_value());
  EXPECT_EQ(*table.false_positives, 1u);
  EXPECT_EQ(table.test_size, 2u);
  EXPECT_EQ(imm.test_false_positives, 1u);
  EXPECT_EQ(women.test_false_positives, 0u);
}

TEST(HateRatio, UnknownIdIsDataError) {
  SplitBundle b;
  b[Split::train] = {"ghost"};
  EXPECT_THROW(hate_ratio_table({tweet("a", "x", 0)}, b, kPhrases), DataError);
}

TEST(Resplit, HundredPerCategory) {
  auto corpus = category_corpus({100, 100, 100, 100, 100, 100});
  auto b = stratified_resplit(corpus, {0.7, 0.1, 0.2}, 5, kPhrases);
  for (std::size_t c = 0; c < kCategoryCount; ++c) {
    EXPECT_EQ(b.histogram[0][c], 70u);
    EXPECT_EQ(b.histogram[1][c], 10u);
    EXPECT_EQ(b.histogram[2][c], 20u);
  }
  EXPECT_EQ(b[Split::train].size(), 420u);
  EXPECT_TRUE(b.warnings.empty());
}

TEST(Resplit, AllInTrain) {
  auto corpus = category_corpus({7, 3, 5, 1, 2, 9});
  auto b = stratified_resplit(corpus, {1, 0, 0}, 1, kPhrases);
  EXPECT_EQ(b[Split::train].size(), corpus.size());
  EXPECT_TRUE(b[Split::val].empty());
  EXPECT_TRUE(b[Split::test].empty());
}

TEST(Resplit, SameSeedSameBundle) {
  auto corpus = category_corpus({60, 55, 70, 52, 80, 51});
  auto a = stratified_resplit(corpus, {0.694, 0.077, 0.229}, 42, kPhrases);
  auto b = stratified_resplit(corpus, {0.694, 0.077, 0.229}, 42, kPhrases);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  auto c = stratified_resplit(corpus, {0.694, 0.077, 0.229}, 43, kPhrases);
  EXPECT_NE(a.ids, c.ids);
}

TEST(Resplit, InputOrderDoesNotMatter) {
  auto corpus = category_corpus({60, 55, 70, 52, 80, 51});
  auto shuffled = corpus;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 17, shuffled.end());
  EXPECT_EQ(stratified_resplit(corpus, {0.7, 0.1, 0.2}, 9, kPhrases).ids,
            stratified_resplit(shuffled, {0.7, 0.1, 0.2}, 9, kPhrases).ids);
}

TEST(Resplit, TinyCategoryWarns) {
  auto corpus = category_corpus({50, 50, 2, 50, 50, 50});
  auto b = stratified_resplit(corpus, {0.7, 0.1, 0.2}, 3, kPhrases);
  ASSERT_EQ(b.warnings.size(), 1u);
  EXPECT_NE(b.warnings[0].find("anti_immigration/not_hateful"), std::string::npos);
  EXPECT_EQ(b.size(), corpus.size());
}

TEST(Resplit, BadRatiosRejected) {
  auto corpus = category_corpus({1, 1, 1, 1, 1, 1});
  EXPECT_THROW(stratified_resplit(corpus, {0.5, 0.3, 0.3}, 0, kPhrases), std::invalid_argument);
  EXPECT_THROW(stratified_resplit(corpus, {1.2, -0.1, -0.1}, 0, kPhrases), std::invalid_argument);
}

TEST(ResplitProperty, CoverageSizingAndHateRatioGap) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<std::size_t, kCategoryCount> n{};
    for (auto& x : n) x = 50 + uniform_index(rng, 400);
    auto corpus = category_corpus(n, static_cast<unsigned>(trial));
    const double val = 0.05 + 0.15 * uniform_unit(rng);
    const double test = 0.15 + 0.2 * uniform_unit(rng);
    const Ratios ratios{1.0 - val - test, val, test};
    auto b = stratified_resplit(corpus, ratios, rng(), kPhrases);

    std::set<std::string> all;
    for (Split s : kSplits)
      for (const auto& id : b[s]) EXPECT_TRUE(all.insert(id).second) << "duplicate " << id;
    EXPECT_EQ(all.size(), corpus.size());

    auto recount = category_histogram(corpus, b, kPhrases);
    EXPECT_EQ(recount, b.histogram);
    for (std::size_t c = 0; c < kCategoryCount; ++c)
      for (std::size_t s = 0; s < 3; ++s)
        EXPECT_LE(std::abs(static_cast<double>(b.histogram[s][c]) - static_cast<double>(n[c]) * ratios[s]), 1.0);

    const double gap = std::abs(hate_ratio(corpus, b[Split::train]) - hate_ratio(corpus, b[Split::test]));
    EXPECT_LE(gap, 0.02) << "trial " << trial;
  }
}

TEST(SplitBundleJson, RoundTrip) {
  TempDir dir;
  auto corpus = category_corpus({5, 6, 7, 8, 9, 10});
  auto b = stratified_resplit(corpus, {0.6, 0.2, 0.2}, 77, kPhrases);
  save_split_bundle(dir / "b.json", b);
  auto back = load_split_bundle(dir / "b.json");
  EXPECT_EQ(back.ids, b.ids);
  EXPECT_EQ(back.histogram, b.histogram);
  EXPECT_EQ(back.seed, b.seed);
  EXPECT_EQ(back.ratios, b.ratios);
  EXPECT_EQ(back.provenance, "resplit");
}

TEST(SplitBundleJson, OverlappingSplitsRejected) {
  auto j = nlohmann::json::parse(R"({"provenance":"original","splits":{"train":["a"],"val":["a"],"test":[]}})");
  EXPECT_THROW(split_bundle_from_json(j), DataError);
  EXPECT_THROW(split_bundle_from_json(nlohmann::json::parse(R"({"splits":{}})")), FormatError);
}

TEST(SplitBundle, FromOriginalPartitions) {
  auto b = bundle_from_partitions({tweet("a", "maga", 1)}, {tweet("b", "hi", 0)}, {tweet("c", "bitch", 0)}, kPhrases);
  EXPECT_EQ(b.provenance, "original");
  EXPECT_EQ(b.histogram[0][(Category{Family::anti_immigration, true}.index())], 1u);
  EXPECT_EQ(b.histogram[2][(Category{Family::anti_women, false}.index())], 1u);
  EXPECT_EQ(select_split({tweet("a", "maga", 1), tweet("c", "bitch", 0)}, b, Split::test)[0].id, "c");
}

}  // namespace
}  // namespace hsd
