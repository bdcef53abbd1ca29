#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "scorelens/disagree.hpp"

using namespace scorelens;

namespace {

ResponseRecord rec(const std::string& id, const std::string& text = "some words here") {
  ResponseRecord r;
  r.response_id = id;
  r.student_id = "s";
  r.teacher_id = "t";
  r.problem_id = "p";
  r.timestamp = 0;
  r.text = text;
  return r;
}

DisagreementCase make_case(std::string id, Pattern p, double score) {
  DisagreementCase c;
  c.response_id = std::move(id);
  c.pattern = p;
  c.text = "text of " + c.response_id;
  c.prototypical_score = score;
  return c;
}

struct SixCase {
  std::vector<ResponseRecord> records;
  std::array<std::vector<double>, 3> yhat;
  std::vector<int> labels;
  EmbeddingStore store;
};

// a1..a3 land in 0-1-1, b1..b3 in 1-0-0, u is unanimous.
SixCase six_case(float scale = 1.0f) {
  SixCase f;
  const std::vector<std::pair<std::string, std::vector<float>>> emb = {
      {"a1", {1, 0}}, {"a2", {0, 2}}, {"a3", {1, 1}}, {"b1", {3, 0}}, {"b2", {1, 1}}, {"b3", {0, 2}}, {"u", {1, 0}}};
  for (const auto& [id, v] : emb) {
    std::vector<float> s = v;
    for (auto& x : s) x *= scale;
    f.store.add({id, s});
    f.records.push_back(rec(id));
  }
  const std::vector<std::array<double, 3>> preds = {{0.2, 0.7, 0.8}, {0.1, 0.6, 0.9}, {0.3, 0.9, 0.6},
                                                    {0.9, 0.1, 0.3}, {0.8, 0.2, 0.2}, {0.7, 0.4, 0.1},
                                                    {0.1, 0.1, 0.1}};
  for (const auto& p : preds) {
    for (std::size_t m = 0; m < 3; ++m) f.yhat[m].push_back(p[m]);
  }
  f.labels = {1, 0, 1, 0, 1, 0, 0};
  return f;
}

CaseCollection collect(const SixCase& f) {
  return collect_cases(f.records, {f.yhat[0], f.yhat[1], f.yhat[2]}, 0.5, f.labels, f.store);
}

}  // namespace

TEST(Binarize, StrictRule) {
  const std::vector<double> y = {0.2, 0.5, 0.8};
  EXPECT_EQ(binarize(y, 0.5), (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(binarize(y, 0.0), (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(binarize(y, 1.0), (std::vector<int>{0, 0, 0}));
}

TEST(Pattern, TextForm) {
  EXPECT_EQ(pattern_text({1, 0, 1}), "1-0-1");
  EXPECT_EQ(parse_pattern("0-1-1"), (Pattern{0, 1, 1}));
  EXPECT_THROW(parse_pattern("101"), DataError);
  EXPECT_THROW(parse_pattern("1-2-1"), DataError);
  EXPECT_TRUE(is_unanimous({1, 1, 1}));
  EXPECT_FALSE(is_unanimous({1, 1, 0}));
}

TEST(DivergenceThreshold, ThreeRowFixture) {
  const std::vector<double> m0 = {0.1, 0.2, 0.3}, m1 = {0.4, 0.5, 0.6}, m2 = {0.9, 0.8, 0.7};
  const auto r = find_divergence_threshold({m0, m1, m2});
  // Every row splits for t in [0.3, 0.7); the smallest such grid point is 0.3.
  EXPECT_EQ(r.divergence_count, 3u);
  EXPECT_DOUBLE_EQ(r.threshold, 0.3);
  EXPECT_EQ(r.grid.size(), 199u);
  EXPECT_EQ(r.counts.size(), 199u);
  const auto o = oracle::divergence_bruteforce({m0, m1, m2});
  EXPECT_EQ(r.threshold, o.threshold);
  EXPECT_EQ(r.divergence_count, o.count);
}

TEST(DivergenceThreshold, IdenticalModelsNeverDiverge) {
  const std::vector<double> y = {0.3, 0.1, 0.8, 0.5, 0.5};
  const auto r = find_divergence_threshold({y, y, y});
  for (auto c : r.counts) EXPECT_EQ(c, 0u);
  EXPECT_EQ(r.threshold, r.grid.front());
}

TEST(DivergenceThreshold, TieGoesToSmallerThreshold) {
  // Row 0 splits on [0.1, 0.2), row 1 on [0.8, 0.9): equal counts at both.
  const std::vector<double> m0 = {0.1, 0.8}, m1 = {0.2, 0.9}, m2 = {0.2, 0.9};
  const auto r = find_divergence_threshold({m0, m1, m2});
  EXPECT_EQ(r.divergence_count, 1u);
  EXPECT_LT(r.threshold, 0.2);
}

TEST(DivergenceThreshold, MatchesGridOracle) {
  Rng rng(31);
  for (int trial = 0; trial < 60; ++trial) {
    const auto n = static_cast<std::size_t>(1 + rng.below(500));
    std::array<std::vector<double>, 3> y;
    for (std::size_t i = 0; i < n; ++i) {
      const double base = rng.uniform();
      for (auto& m : y) {
        double v = base + 0.3 * rng.normal();
        if (trial % 3 == 0) v = std::round(v * 10) / 10;  // heavy ties
        m.push_back(v);
      }
    }
    const auto r = find_divergence_threshold({y[0], y[1], y[2]});
    const auto o = oracle::divergence_bruteforce(y);
    ASSERT_EQ(r.divergence_count, o.count) << "trial " << trial;
    ASSERT_EQ(r.threshold, o.threshold) << "trial " << trial;
  }
}

TEST(DivergenceThreshold, Errors) {
  const std::vector<double> empty, one = {0.5}, two = {0.5, 0.6};
  EXPECT_THROW(find_divergence_threshold({empty, empty, empty}), ArgumentError);
  EXPECT_THROW(find_divergence_threshold({one, two, one}), ArgumentError);
}

TEST(CollectCases, SixCaseFixture) {
  const auto f = six_case();
  const auto col = collect(f);
  ASSERT_EQ(col.counts.size(), 2u);
  EXPECT_EQ(col.counts[0].pattern, (Pattern{0, 1, 1}));
  EXPECT_EQ(col.counts[0].count, 3u);
  EXPECT_EQ(col.counts[1].pattern, (Pattern{1, 0, 0}));
  EXPECT_EQ(col.counts[1].count, 3u);
  ASSERT_EQ(col.cases.size(), 6u);

  const std::vector<std::string> order = {"a3", "a2", "a1", "b2", "b1", "b3"};
  const std::vector<double> score = {5 / std::sqrt(26.0), 3 / std::sqrt(13.0), 2 / std::sqrt(13.0),
                                     7 / (5 * std::sqrt(2.0)), 0.8, 0.6};
  const std::vector<Stratum> strata = {Stratum::central, Stratum::central, Stratum::extreme,
                                       Stratum::central, Stratum::central, Stratum::extreme};
  for (std::size_t k = 0; k < 6; ++k) {
    EXPECT_EQ(col.cases[k].response_id, order[k]);
    EXPECT_NEAR(col.cases[k].prototypical_score, score[k], 1e-12);
    EXPECT_EQ(col.cases[k].stratum, strata[k]);
    EXPECT_FALSE(col.cases[k].singleton);
    EXPECT_FALSE(is_unanimous(col.cases[k].pattern));
  }
  EXPECT_EQ(col.cases[0].teacher_label, 1);
  EXPECT_EQ(col.cases[3].teacher_label, 1);
}

TEST(CollectCases, ScoresInvariantToRescaling) {
  const auto a = collect(six_case());
  const auto b = collect(six_case(2.5f));
  ASSERT_EQ(a.cases.size(), b.cases.size());
  for (std::size_t k = 0; k < a.cases.size(); ++k) {
    EXPECT_EQ(a.cases[k].response_id, b.cases[k].response_id);
    EXPECT_NEAR(a.cases[k].prototypical_score, b.cases[k].prototypical_score, 1e-12);
  }
}

TEST(CollectCases, UnanimousFixtureIsEmpty) {
  auto f = six_case();
  for (auto& m : f.yhat) m = f.yhat[0];
  const auto col = collect(f);
  EXPECT_TRUE(col.cases.empty());
  EXPECT_TRUE(col.counts.empty());
}

TEST(CollectCases, SingletonGroupIsFlagged) {
  auto f = six_case();
  f.yhat[2][6] = 0.9;  // u becomes 0-0-1
  const auto col = collect(f);
  ASSERT_EQ(col.cases.size(), 7u);
  const auto& u = col.cases.front();
  EXPECT_EQ(u.response_id, "u");
  EXPECT_EQ(u.pattern, (Pattern{0, 0, 1}));
  EXPECT_EQ(u.prototypical_score, 1.0);
  EXPECT_TRUE(u.singleton);
  EXPECT_EQ(u.stratum, Stratum::central);
}

TEST(CollectCases, MissingEmbeddingIsAnError) {
  auto f = six_case();
  f.records[0].response_id = "ghost";
  EXPECT_THROW(collect(f), DataError);
}

TEST(Apportion, LargestRemainder) {
  const std::vector<std::size_t> sizes = {5, 3, 2};
  EXPECT_EQ(apportion(sizes, 5), (std::vector<std::size_t>{3, 1, 1}));  // remainder tie goes to the earlier group
  EXPECT_EQ(apportion(sizes, 10), (std::vector<std::size_t>{5, 3, 2}));
  EXPECT_EQ(apportion(sizes, 0), (std::vector<std::size_t>{0, 0, 0}));
  const std::vector<std::size_t> skewed = {1410, 126, 110, 60};
  const auto a = apportion(skewed, 300);
  EXPECT_EQ(a[0] + a[1] + a[2] + a[3], 300u);
  EXPECT_EQ(a, (std::vector<std::size_t>{248, 22, 19, 11}));
}

TEST(SampleForCoding, TenCasesFourDraws) {
  std::vector<DisagreementCase> cases;
  for (int k = 0; k < 10; ++k) {
    cases.push_back(make_case("c" + std::to_string(k), {0, 1, 1}, 1.0 - 0.1 * k));
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = sample_for_coding(cases, 4, 0.5, seed);
    EXPECT_FALSE(s.exhaustive);
    ASSERT_EQ(s.cases.size(), 4u);
    std::size_t central = 0;
    for (const auto& c : s.cases) {
      const int rank = std::stoi(c.response_id.substr(1));
      if (c.stratum == Stratum::central) {
        ++central;
        EXPECT_LT(rank, 5);
      } else {
        EXPECT_GE(rank, 5);
      }
    }
    EXPECT_EQ(central, 2u);
  }
}

TEST(SampleForCoding, DeterministicAndSeedSensitive) {
  std::vector<DisagreementCase> cases;
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    const Pattern p = k % 3 == 0 ? Pattern{1, 0, 1} : Pattern{0, 1, 1};
    cases.push_back(make_case("r" + std::to_string(k), p, rng.uniform()));
  }
  const auto a = sample_for_coding(cases, 30, 0.5, 9);
  const auto b = sample_for_coding(cases, 30, 0.5, 9);
  EXPECT_EQ(a.cases, b.cases);
  EXPECT_NE(a.cases, sample_for_coding(cases, 30, 0.5, 10).cases);

  std::map<Pattern, std::array<std::size_t, 2>> per;
  for (const auto& c : a.cases) ++per[c.pattern][c.stratum == Stratum::central ? 0 : 1];
  for (const auto& [p, s] : per) {
    EXPECT_LE(std::max(s[0], s[1]) - std::min(s[0], s[1]), 1u) << pattern_text(p);
  }
}

TEST(SampleForCoding, OversizedRequestReturnsEverything) {
  std::vector<DisagreementCase> cases = {make_case("x", {1, 0, 0}, 0.2), make_case("y", {1, 0, 0}, 0.9),
                                         make_case("z", {0, 0, 1}, 0.5)};
  const auto s = sample_for_coding(cases, 3);
  EXPECT_TRUE(s.exhaustive);
  ASSERT_EQ(s.cases.size(), 3u);
  EXPECT_EQ(s.cases[0].response_id, "z");
  EXPECT_EQ(s.cases[1].response_id, "y");
  EXPECT_EQ(s.cases[1].stratum, Stratum::central);
  EXPECT_EQ(s.cases[2].stratum, Stratum::extreme);
  EXPECT_THROW(sample_for_coding(cases, 1, 1.5), ArgumentError);
}

TEST(ExportCases, EmptyCsvIsHeaderOnly) {
  const auto out = export_cases({}, CaseFormat::csv);
  std::string header;
  for (const auto& c : case_columns()) header += (header.empty() ? "" : ",") + c;
  EXPECT_EQ(out, header + "\n");
  EXPECT_TRUE(export_cases({}, CaseFormat::jsonl).empty());
  EXPECT_TRUE(import_cases(out, CaseFormat::csv).empty());
}

TEST(ExportCases, PatternIsLiteralText) {
  const auto out = export_cases({make_case("r1", {1, 0, 1}, 0.5)}, CaseFormat::csv);
  EXPECT_NE(out.find(",1-0-1,"), std::string::npos) << out;
  const auto js = export_cases({make_case("r1", {1, 0, 1}, 0.5)}, CaseFormat::jsonl);
  EXPECT_NE(js.find("\"pattern\":\"1-0-1\""), std::string::npos) << js;
}

TEST(ExportCases, RoundTripIsExact) {
  std::vector<DisagreementCase> cases = {make_case("r1", {1, 0, 1}, 0.1 + 0.2), make_case("r2", {0, 1, 1}, -1.0 / 3),
                                         make_case("r3", {0, 1, 1}, 0.7071067811865476)};
  cases[0].text = "has, a comma and \"quotes\"\nand a newline";
  cases[1].teacher_label = 1;
  cases[1].stratum = Stratum::extreme;
  cases[2].singleton = true;
  sort_cases(cases);
  for (auto fmt : {CaseFormat::csv, CaseFormat::jsonl}) {
    const auto back = import_cases(export_cases(cases, fmt), fmt);
    EXPECT_EQ(back, cases);
  }
}

TEST(ExportCases, OrderIsPatternThenScore) {
  std::vector<DisagreementCase> cases = {make_case("a", {1, 0, 0}, 0.9), make_case("b", {0, 1, 1}, 0.2),
                                         make_case("c", {0, 1, 1}, 0.8)};
  const auto back = import_cases(export_cases(cases, CaseFormat::csv), CaseFormat::csv);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].response_id, "c");
  EXPECT_EQ(back[1].response_id, "b");
  EXPECT_EQ(back[2].response_id, "a");
}

TEST(ExportCases, ImportRejectsUnanimousPattern) {
  const auto bad = export_cases({make_case("r1", {1, 0, 1}, 0.5)}, CaseFormat::csv);
  std::string edited = bad;
  edited.replace(edited.find("1-0-1"), 5, "1-1-1");
  EXPECT_THROW(import_cases(edited, CaseFormat::csv), DataError);
}
