#include <gtest/gtest.h>

#include "scorelens/embedstore.hpp"

using namespace scorelens;

namespace {

EmbeddingStore store_of(std::initializer_list<std::pair<const char*, std::vector<float>>> rows) {
  EmbeddingStore s;
  for (const auto& [id, v] : rows) s.add({id, v});
  return s;
}

}  // namespace

TEST(EmbeddingStore, LoadJsonl) {
  const auto s = load_store("{\"id\":\"a\",\"values\":[1,2,3]}\n{\"id\":\"b\",\"values\":[0.5,0,-1]}\n",
                            EmbeddingFormat::jsonl);
  EXPECT_EQ(s.dim(), 3u);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.values("b"), (Vec{0.5, 0.0, -1.0}));
  EXPECT_TRUE(s.contains("a"));
  EXPECT_EQ(s.find("zz"), nullptr);
  EXPECT_THROW(s.at("zz"), DataError);
}

TEST(EmbeddingStore, DimensionMismatch) {
  std::string src = "{\"dim\":384}\n{\"id\":\"a\",\"values\":[";
  for (int k = 0; k < 383; ++k) src += (k ? ",0.1" : "0.1");
  src += "]}\n";
  try {
    load_store(src, EmbeddingFormat::jsonl);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos) << e.what();
  }
  EXPECT_THROW(store_of({{"a", {1, 2}}, {"a", {3, 4}}}), DataError);
  EXPECT_THROW(store_of({{"a", {1, std::numeric_limits<float>::infinity()}}}), DataError);
  EXPECT_THROW(load_store("{\"id\":\"a\",\"values\":[1,\"x\"]}", EmbeddingFormat::jsonl), DataError);
  EXPECT_THROW(load_store("{\"id\":\"a\",\"values\":[1,null]}", EmbeddingFormat::jsonl), DataError);
  EXPECT_THROW(EmbeddingStore(0), ArgumentError);
}

TEST(EmbeddingStore, PackedRoundTripIsBitExact) {
  Rng rng(9);
  EmbeddingStore s(7);
  for (int i = 0; i < 25; ++i) {
    EmbeddingVector v{"id-" + std::to_string(i), std::vector<float>(7)};
    for (auto& x : v.values) x = static_cast<float>(rng.normal() * 1e3);
    v.values[0] = std::numeric_limits<float>::denorm_min();
    s.add(std::move(v));
  }
  const auto back = load_store(save_store(s, EmbeddingFormat::packed), EmbeddingFormat::packed);
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(back.entries()[i], s.entries()[i]);
  const auto via_jsonl = load_store(save_store(s, EmbeddingFormat::jsonl), EmbeddingFormat::jsonl);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(via_jsonl.entries()[i], s.entries()[i]);
  EXPECT_THROW(load_store("EMB1\x03", EmbeddingFormat::packed), DataError);
  EXPECT_THROW(load_store("NOPE0000000000000000", EmbeddingFormat::packed), DataError);
}

TEST(Centroid, Examples) {
  const auto s = store_of({{"a", {1, 0}}, {"b", {-1, 0}}, {"c", {2, 5}}, {"d", {0.5f, -2}}});
  const std::vector<std::string> one = {"c"}, pair = {"a", "b"}, three = {"a", "c", "d"};
  EXPECT_EQ(centroid(s, one), (Vec{2, 5}));
  EXPECT_EQ(centroid(s, pair), (Vec{0, 0}));
  const auto m = centroid(s, three);
  EXPECT_NEAR(m[0], 3.5 / 3.0, 1e-12);
  EXPECT_NEAR(m[1], 1.0, 1e-12);
  EXPECT_THROW(centroid(s, std::vector<std::string>{}), ArgumentError);
  EXPECT_THROW(centroid(s, std::vector<std::string>{"missing"}), DataError);
}

TEST(VectorOps, Examples) {
  const Vec v{3, 4}, c{1, 1}, zero{0, 0};
  EXPECT_EQ(centroid_normalize(v, v), zero);
  EXPECT_EQ(centroid_normalize(v, zero), v);
  EXPECT_EQ(response_problem_diff(v, c), (Vec{2, 3}));
  EXPECT_THROW(response_problem_diff(v, Vec{1}), ArgumentError);
  EXPECT_EQ(concat(Vec{1}, Vec{2}), (Vec{1, 2}));
  EXPECT_EQ(concat(v, Vec{}), v);
  EXPECT_EQ(concat(Vec(384, 1.0), Vec(384, 2.0)).size(), 768u);
}

TEST(Cosine, Examples) {
  const Vec a{0.3, -2, 7};
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-12);
  EXPECT_EQ(cosine(Vec{1, 0}, Vec{0, 1}), 0.0);
  EXPECT_NEAR(cosine(Vec{1, 1}, Vec{1, 0}), 0.70710678118654752, 1e-9);
  EXPECT_THROW(cosine(Vec{0, 0}, Vec{1, 0}), ArgumentError);
  EXPECT_THROW(cosine(Vec{1}, Vec{1, 0}), ArgumentError);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    Vec x(5), y(5);
    for (auto& e : x) e = rng.normal();
    for (auto& e : y) e = rng.normal();
    const double cxy = cosine(x, y);
    EXPECT_LE(std::abs(cxy), 1.0);
    EXPECT_EQ(cxy, cosine(y, x));
  }
}

TEST(Centroids, PerProblemWithGlobalFallback) {
  const auto s = store_of({{"r1", {1, 1}}, {"r2", {3, 1}}, {"r3", {0, 4}}});
  const std::vector<std::pair<std::string, std::string>> pairs = {{"r1", "p1"}, {"r2", "p1"}, {"r3", "p2"}};
  const auto model = fit_centroids(s, pairs, CentroidMode::per_problem);
  EXPECT_EQ(model.for_problem("p1"), (Vec{2, 1}));
  EXPECT_EQ(model.for_problem("p2"), (Vec{0, 4}));
  EXPECT_EQ(model.for_problem("unseen"), (Vec{4.0 / 3.0, 2}));
  const auto global = fit_centroids(s, pairs, CentroidMode::global);
  EXPECT_EQ(global.for_problem("p1"), global.global);
}
