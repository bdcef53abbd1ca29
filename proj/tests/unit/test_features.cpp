#include <gtest/gtest.h>

#include "scorelens/features.hpp"

using namespace scorelens;

namespace {

struct Fixture {
  std::vector<ResponseRecord> records;
  EmbeddingStore responses{3};
  EmbeddingStore problems{3};
  PriorSeries teacher;
  PriorSeries student;
  CentroidModel centroids;

  Fixture() {
    const char* ids[] = {"r1", "r2", "r3"};
    const char* pids[] = {"pA", "pB", "pA"};
    for (int i = 0; i < 3; ++i) {
      ResponseRecord r;
      r.response_id = ids[i];
      r.student_id = "s";
      r.teacher_id = "t";
      r.problem_id = pids[i];
      r.timestamp = i;
      r.text = "x";
      r.raw_score = i + 1;
      r.normalized_score = (i + 1) / 4.0;
      records.push_back(r);
      teacher.values[ids[i]] = 0.1 * (i + 1);
      student.values[ids[i]] = 0.7 - 0.1 * i;
    }
    responses.add({"r1", {1, 2, 3}});
    responses.add({"r2", {0, -1, 0.5f}});
    responses.add({"r3", {4, 0, -2}});
    problems.add({"pA", {0.5f, 0.5f, 0.5f}});
    problems.add({"pB", {-1, 1, 0}});
    const std::vector<std::pair<std::string, std::string>> pairs = {{"r1", "pA"}, {"r2", "pB"}, {"r3", "pA"}};
    centroids = fit_centroids(responses, pairs, CentroidMode::per_problem);
  }

  FeatureInputs inputs() const { return {&teacher, &student, &responses, &problems, &centroids}; }
};

}  // namespace

TEST(Assemble, TeacherOnlyIsThePriorColumn) {
  Fixture f;
  const auto fm = assemble(ModelVariant::teacher_only, f.records, f.inputs());
  ASSERT_EQ(fm.data.rows(), 3u);
  ASSERT_EQ(fm.data.cols(), 1u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(fm.data(i, 0), f.teacher.at(f.records[i].response_id));
  EXPECT_EQ(fm.columns[0].name, "teacher_prior");
  EXPECT_EQ(fm.target, (std::vector<double>{0.25, 0.5, 0.75}));
  EXPECT_EQ(fm.row_ids, (std::vector<std::string>{"r1", "r2", "r3"}));
}

TEST(Assemble, ColumnCounts) {
  Fixture f;
  for (auto v : kStandardVariants) {
    const auto fm = assemble(v, f.records, f.inputs());
    EXPECT_EQ(fm.data.cols(), column_count(v, 3)) << to_string(v);
    EXPECT_EQ(fm.columns.size(), fm.data.cols());
  }
  EXPECT_EQ(column_count(ModelVariant::problem_response, 384), 768u);
  EXPECT_EQ(column_count(ModelVariant::teacher_response, 384), 385u);
  EXPECT_EQ(assemble(ModelVariant::teacher_student_response, f.records, f.inputs()).data.cols(), 5u);
}

TEST(Assemble, DiffMatchesRecomputation) {
  Fixture f;
  const std::vector<ResponseRecord> two(f.records.begin(), f.records.begin() + 2);
  const auto fm = assemble(ModelVariant::diff_only, two, f.inputs());
  for (std::size_t i = 0; i < 2; ++i) {
    const auto expect =
        response_problem_diff(f.responses.values(two[i].response_id), f.problems.values(two[i].problem_id));
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(fm.data(i, k), expect[k]);
  }
}

TEST(Assemble, BlocksInOrder) {
  Fixture f;
  const auto fm = assemble(ModelVariant::problem_response, f.records, f.inputs());
  EXPECT_EQ(fm.columns[0].name, "prob_0");
  EXPECT_EQ(fm.columns[3].name, "resp_0");
  EXPECT_EQ(fm.data(1, 0), -1.0);
  EXPECT_EQ(fm.data(1, 4), -1.0);
  const auto cent = assemble(ModelVariant::teacher_response_centroid, f.records, f.inputs());
  // r1 and r3 share pA, whose centroid is (2.5, 1, 0.5).
  EXPECT_EQ(cent.data(0, 1), -1.5);
  EXPECT_EQ(cent.data(2, 3), -2.5);
  EXPECT_EQ(cent.data(1, 1), 0.0);
  EXPECT_EQ(cent.columns[1].group, ColumnGroup::embed_centroid);
}

TEST(Assemble, MissingEmbeddingNamesTheRecord) {
  Fixture f;
  f.records[1].problem_id = "pZ";
  try {
    assemble(ModelVariant::problem_only, f.records, f.inputs());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("r2"), std::string::npos);
  }
  FeatureInputs none;
  EXPECT_THROW(assemble(ModelVariant::teacher_only, f.records, none), ArgumentError);
}

TEST(Variants, NamesRoundTrip) {
  for (auto v : kStandardVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_EQ(parse_variant("teacher_student_response"), ModelVariant::teacher_student_response);
  EXPECT_THROW(parse_variant("nope"), ArgumentError);
  EXPECT_STREQ(display_name(ModelVariant::teacher_response), "Teacher prior + Response embedding");
}

TEST(FeatureCsv, HeaderAndRows) {
  Fixture f;
  const auto fm = assemble(ModelVariant::teacher_only, f.records, f.inputs());
  EXPECT_EQ(feature_csv(fm), "response_id,teacher_prior,target\nr1,0.1,0.25\nr2,0.2,0.5\nr3,0.30000000000000004,0.75\n");
  const auto side = feature_sidecar(fm, ModelVariant::teacher_only);
  EXPECT_EQ(side["columns"][0]["group"], "prior_teacher");
  EXPECT_EQ(side["rows"], 3);
}
