#pragma once

// Design matrices for the model variants compared in the benchmark.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/csv.hpp"
#include "scorelens/embedstore.hpp"
#include "scorelens/ingest.hpp"
#include "scorelens/lasso.hpp"
#include "scorelens/priors.hpp"

namespace scorelens {

using lasso::ColumnGroup;

enum class ModelVariant {
  teacher_response,
  teacher_response_centroid,
  teacher_only,
  teacher_diff,
  problem_response,
  response_only,
  diff_only,
  centroid_only,
  problem_only,
  // Experimental; not part of the standard nine.
  teacher_student_response,
};

inline constexpr std::array<ModelVariant, 9> kStandardVariants = {
    ModelVariant::teacher_response, ModelVariant::teacher_response_centroid, ModelVariant::teacher_only,
    ModelVariant::teacher_diff,     ModelVariant::problem_response,          ModelVariant::response_only,
    ModelVariant::diff_only,        ModelVariant::centroid_only,             ModelVariant::problem_only};

inline const char* to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::teacher_response: return "teacher_response";
    case ModelVariant::teacher_response_centroid: return "teacher_response_centroid";
    case ModelVariant::teacher_only: return "teacher_only";
    case ModelVariant::teacher_diff: return "teacher_diff";
    case ModelVariant::problem_response: return "problem_response";
    case ModelVariant::response_only: return "response_only";
    case ModelVariant::diff_only: return "diff_only";
    case ModelVariant::centroid_only: return "centroid_only";
    case ModelVariant::problem_only: return "problem_only";
    case ModelVariant::teacher_student_response: return "teacher_student_response";
  }
  return "?";
}

// Row labels as they appear in the results table.
inline const char* display_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::teacher_response: return "Teacher prior + Response embedding";
    case ModelVariant::teacher_response_centroid: return "Teacher prior + Response (centroid-normalized)";
    case ModelVariant::teacher_only: return "Teacher prior only";
    case ModelVariant::teacher_diff: return "Teacher prior + Response-Problem difference";
    case ModelVariant::problem_response: return "Problem + Response embeddings";
    case ModelVariant::response_only: return "Response embedding only";
    case ModelVariant::diff_only: return "Response-Problem difference only";
    case ModelVariant::centroid_only: return "Response (centroid-normalized) only";
    case ModelVariant::problem_only: return "Problem embedding only (baseline)";
    case ModelVariant::teacher_student_response: return "Teacher + Student prior + Response embedding";
  }
  return "?";
}

inline ModelVariant parse_variant(const std::string& name) {
  for (auto v : kStandardVariants) {
    if (name == to_string(v)) return v;
  }
  if (name == to_string(ModelVariant::teacher_student_response)) return ModelVariant::teacher_student_response;
  throw ArgumentError("unknown model variant '" + name + "'");
}

struct Column {
  std::string name;
  ColumnGroup group;
};

struct FeatureMatrix {
  std::vector<std::string> row_ids;
  std::vector<Column> columns;
  Matrix data;
  std::vector<double> target;

  std::vector<ColumnGroup> groups() const {
    std::vector<ColumnGroup> g;
    for (const auto& c : columns) g.push_back(c.group);
    return g;
  }
};

inline std::size_t column_count(ModelVariant v, std::size_t dim) {
  switch (v) {
    case ModelVariant::teacher_only: return 1;
    case ModelVariant::teacher_response:
    case ModelVariant::teacher_response_centroid:
    case ModelVariant::teacher_diff: return 1 + dim;
    case ModelVariant::teacher_student_response: return 2 + dim;
    case ModelVariant::problem_response: return 2 * dim;
    default: return dim;
  }
}

// Everything `assemble` reads besides the records themselves.
struct FeatureInputs {
  const PriorSeries* teacher_priors = nullptr;
  const PriorSeries* student_priors = nullptr;
  const EmbeddingStore* responses = nullptr;
  const EmbeddingStore* problems = nullptr;
  const CentroidModel* centroids = nullptr;
};

namespace detail {

enum class Block { teacher, student, response, problem, diff, centroid };

inline std::vector<Block> blocks_for(ModelVariant v) {
  using B = Block;
  switch (v) {
    case ModelVariant::teacher_response: return {B::teacher, B::response};
    case ModelVariant::teacher_response_centroid: return {B::teacher, B::centroid};
    case ModelVariant::teacher_only: return {B::teacher};
    case ModelVariant::teacher_diff: return {B::teacher, B::diff};
    case ModelVariant::problem_response: return {B::problem, B::response};
    case ModelVariant::response_only: return {B::response};
    case ModelVariant::diff_only: return {B::diff};
    case ModelVariant::centroid_only: return {B::centroid};
    case ModelVariant::problem_only: return {B::problem};
    case ModelVariant::teacher_student_response: return {B::teacher, B::student, B::response};
  }
  return {};
}

inline const EmbeddingVector& require_embedding(const EmbeddingStore* store, const char* store_name,
                                                const std::string& key, const std::string& response_id) {
  if (!store) throw ArgumentError(std::string("assemble: ") + store_name + " store not provided");
  const auto* v = store->find(key);
  if (!v) {
    throw DataError("assemble: response '" + response_id + "' has no embedding '" + key + "' in the " + store_name +
                    " store");
  }
  return *v;
}

}  // namespace detail

inline FeatureMatrix assemble(ModelVariant variant, const std::vector<ResponseRecord>& records,
                              const FeatureInputs& in) {
  using detail::Block;
  const auto blocks = detail::blocks_for(variant);

  std::size_t dim = 0;
  for (auto b : blocks) {
    if (b == Block::problem) {
      if (!in.problems) throw ArgumentError("assemble: problem store not provided");
      dim = in.problems->dim();
    } else if (b != Block::teacher && b != Block::student) {
      if (!in.responses) throw ArgumentError("assemble: response store not provided");
      dim = in.responses->dim();
    }
  }
  for (auto b : blocks) {
    if ((b == Block::diff) && in.problems && in.problems->dim() != dim) {
      throw DataError("assemble: response and problem embeddings differ in dimension");
    }
    if (b == Block::teacher && !in.teacher_priors) throw ArgumentError("assemble: teacher priors not provided");
    if (b == Block::student && !in.student_priors) throw ArgumentError("assemble: student priors not provided");
    if (b == Block::centroid && !in.centroids) throw ArgumentError("assemble: centroid model not provided");
  }

  FeatureMatrix fm;
  auto add_columns = [&](const char* prefix, ColumnGroup g) {
    for (std::size_t k = 0; k < dim; ++k) fm.columns.push_back({std::string(prefix) + std::to_string(k), g});
  };
  for (auto b : blocks) {
    switch (b) {
      case Block::teacher: fm.columns.push_back({"teacher_prior", ColumnGroup::prior_teacher}); break;
      case Block::student: fm.columns.push_back({"student_prior", ColumnGroup::prior_student}); break;
      case Block::response: add_columns("resp_", ColumnGroup::embed_response); break;
      case Block::problem: add_columns("prob_", ColumnGroup::embed_problem); break;
      case Block::diff: add_columns("diff_", ColumnGroup::embed_diff); break;
      case Block::centroid: add_columns("cent_", ColumnGroup::embed_centroid); break;
    }
  }

  fm.data = Matrix(records.size(), fm.columns.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.normalized_score) throw DataError("assemble: response '" + r.response_id + "' has no score");
    fm.row_ids.push_back(r.response_id);
    fm.target.push_back(*r.normalized_score);
    auto row = fm.data.row(i);
    std::size_t c = 0;
    for (auto b : blocks) {
      switch (b) {
        case Block::teacher: row[c++] = in.teacher_priors->at(r.response_id); break;
        case Block::student: row[c++] = in.student_priors->at(r.response_id); break;
        case Block::response: {
          const auto& v = detail::require_embedding(in.responses, "response", r.response_id, r.response_id);
          for (float x : v.values) row[c++] = x;
          break;
        }
        case Block::problem: {
          const auto& v = detail::require_embedding(in.problems, "problem", r.problem_id, r.response_id);
          for (float x : v.values) row[c++] = x;
          break;
        }
        case Block::diff: {
          const auto& v = detail::require_embedding(in.responses, "response", r.response_id, r.response_id);
          const auto& p = detail::require_embedding(in.problems, "problem", r.problem_id, r.response_id);
          const std::vector<double> rv(v.values.begin(), v.values.end());
          const std::vector<double> pv(p.values.begin(), p.values.end());
          for (double x : response_problem_diff(rv, pv)) row[c++] = x;
          break;
        }
        case Block::centroid: {
          const auto& v = detail::require_embedding(in.responses, "response", r.response_id, r.response_id);
          const std::vector<double> rv(v.values.begin(), v.values.end());
          for (double x : centroid_normalize(rv, in.centroids->for_problem(r.problem_id))) row[c++] = x;
          break;
        }
      }
    }
  }
  return fm;
}

// Columnar CSV: response_id, one column per feature, then target.
inline std::string feature_csv(const FeatureMatrix& fm) {
  std::string out;
  std::vector<std::string> header = {"response_id"};
  for (const auto& c : fm.columns) header.push_back(c.name);
  header.emplace_back("target");
  csv::append_row(out, header);
  for (std::size_t i = 0; i < fm.row_ids.size(); ++i) {
    std::vector<std::string> row = {fm.row_ids[i]};
    for (double v : fm.data.row(i)) row.push_back(format_double(v));
    row.push_back(format_double(fm.target[i]));
    csv::append_row(out, row);
  }
  return out;
}

inline nlohmann::json feature_sidecar(const FeatureMatrix& fm, ModelVariant variant) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : fm.columns) cols.push_back({{"name", c.name}, {"group", lasso::to_string(c.group)}});
  return {{"variant", to_string(variant)}, {"rows", fm.row_ids.size()}, {"columns", cols}};
}

}  // namespace scorelens
