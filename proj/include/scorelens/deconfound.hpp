#pragma once

// Orthogonalization of embedding features against rater and problem
// confounders, and the sparsity audit comparing Lasso support before and
// after adjustment.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

// resolv.h defines _res as a macro.
#pragma push_macro("_res")
#undef _res
#include <Eigen/Dense>
#pragma pop_macro("_res")
#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/eval.hpp"
#include "scorelens/features.hpp"
#include "scorelens/lasso.hpp"

namespace scorelens {

enum class ConfounderSource { intercept, teacher_prior, student_prior, problem_group_mean, teacher_indicator };

inline const char* to_string(ConfounderSource s) {
  switch (s) {
    case ConfounderSource::intercept: return "intercept";
    case ConfounderSource::teacher_prior: return "teacher_prior";
    case ConfounderSource::student_prior: return "student_prior";
    case ConfounderSource::problem_group_mean: return "problem_group_mean";
    case ConfounderSource::teacher_indicator: return "teacher_indicator";
  }
  return "?";
}

struct ConfounderColumn {
  std::string name;
  ConfounderSource source;
};

struct ConfounderDesign {
  std::vector<ConfounderColumn> columns;
  Matrix data;  // rows aligned to feature rows

  void validate() const {
    std::size_t intercepts = 0;
    for (const auto& c : columns) intercepts += c.source == ConfounderSource::intercept;
    if (intercepts != 1) throw ArgumentError("confounder design must contain exactly one intercept column");
    if (data.cols() != columns.size()) throw ArgumentError("confounder design: column metadata width mismatch");
  }
};

// Projection coefficients B = (Z'Z + jitter I)^-1 Z'X learned on training rows.
struct Residualizer {
  Matrix coefficients;  // Z columns x X columns

  Matrix apply(const Matrix& X, const ConfounderDesign& Z) const {
    if (X.rows() != Z.data.rows()) throw ArgumentError("residualize: X and Z row counts differ");
    if (Z.data.cols() != coefficients.rows() || X.cols() != coefficients.cols()) {
      throw ArgumentError("residualize: shape does not match the fitted projection");
    }
    Matrix out = X;
    for (std::size_t i = 0; i < X.rows(); ++i) {
      const auto z = Z.data.row(i);
      auto row = out.row(i);
      for (std::size_t k = 0; k < z.size(); ++k) {
        if (z[k] == 0.0) continue;
        const auto b = coefficients.row(k);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] -= z[k] * b[j];
      }
    }
    return out;
  }
};

inline Residualizer fit_residualizer(const Matrix& X, const ConfounderDesign& Z, double ridge_jitter = 1e-8) {
  Z.validate();
  if (X.rows() != Z.data.rows()) throw ArgumentError("residualize: X and Z row counts differ");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMat> Xm(X.data().data(), static_cast<Eigen::Index>(X.rows()),
                                    static_cast<Eigen::Index>(X.cols()));
  const Eigen::Map<const RowMat> Zm(Z.data.data().data(), static_cast<Eigen::Index>(Z.data.rows()),
                                    static_cast<Eigen::Index>(Z.data.cols()));
  Eigen::MatrixXd gram = Zm.transpose() * Zm;
  gram.diagonal().array() += ridge_jitter;
  const Eigen::MatrixXd rhs = Zm.transpose() * Xm;
  const Eigen::MatrixXd B = gram.ldlt().solve(rhs);

  Residualizer r;
  r.coefficients = Matrix(static_cast<std::size_t>(B.rows()), static_cast<std::size_t>(B.cols()));
  for (Eigen::Index i = 0; i < B.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.cols(); ++j) {
      r.coefficients(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = B(i, j);
    }
  }
  return r;
}

// Replaces each column of X by its least-squares residual against Z, fitted
// and applied on the same rows.
inline Matrix residualize(const Matrix& X, const ConfounderDesign& Z, double ridge_jitter = 1e-8) {
  return fit_residualizer(X, Z, ridge_jitter).apply(X, Z);
}

enum class AdjustTarget { features, target };

struct DeconfoundConfig {
  bool teacher_prior = true;
  bool student_prior = false;
  bool problem_group_mean = true;
  bool teacher_indicators = false;  // one-hot teachers seen in training
  AdjustTarget adjust = AdjustTarget::features;
  double ridge_jitter = 1e-8;
};

// Builds Z for `rows`. Problem means and the teacher set come from training
// rows only; unseen problems take the training grand mean.
struct ConfounderBuilder {
  DeconfoundConfig config;
  std::map<std::string, double> problem_means;
  double grand_mean = 0.0;
  std::vector<std::string> teachers;

  static ConfounderBuilder fit(const std::vector<ResponseRecord>& train, const DeconfoundConfig& config) {
    ConfounderBuilder b;
    b.config = config;
    std::map<std::string, std::pair<double, std::size_t>> acc;
    std::set<std::string> teacher_set;
    double sum = 0.0;
    for (const auto& r : train) {
      auto& a = acc[r.problem_id];
      a.first += *r.normalized_score;
      ++a.second;
      sum += *r.normalized_score;
      teacher_set.insert(r.teacher_id);
    }
    b.grand_mean = train.empty() ? 0.0 : sum / static_cast<double>(train.size());
    for (const auto& [p, a] : acc) b.problem_means[p] = a.first / static_cast<double>(a.second);
    b.teachers.assign(teacher_set.begin(), teacher_set.end());
    return b;
  }

  ConfounderDesign build(const std::vector<ResponseRecord>& rows, const PriorSeries& teacher_priors,
                         const PriorSeries* student_priors) const {
    ConfounderDesign z;
    z.columns.push_back({"intercept", ConfounderSource::intercept});
    if (config.teacher_prior) z.columns.push_back({"teacher_prior", ConfounderSource::teacher_prior});
    if (config.student_prior) z.columns.push_back({"student_prior", ConfounderSource::student_prior});
    if (config.problem_group_mean) z.columns.push_back({"problem_group_mean", ConfounderSource::problem_group_mean});
    // The first teacher is the reference level.
    if (config.teacher_indicators) {
      for (std::size_t t = 1; t < teachers.size(); ++t) {
        z.columns.push_back({"teacher=" + teachers[t], ConfounderSource::teacher_indicator});
      }
    }
    if (config.student_prior && !student_priors) throw ArgumentError("confounders: student priors not provided");

    z.data = Matrix(rows.size(), z.columns.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      std::size_t c = 0;
      z.data(i, c++) = 1.0;
      if (config.teacher_prior) z.data(i, c++) = teacher_priors.at(r.response_id);
      if (config.student_prior) z.data(i, c++) = student_priors->at(r.response_id);
      if (config.problem_group_mean) {
        auto it = problem_means.find(r.problem_id);
        z.data(i, c++) = it == problem_means.end() ? grand_mean : it->second;
      }
      if (config.teacher_indicators) {
        for (std::size_t t = 1; t < teachers.size(); ++t) z.data(i, c++) = r.teacher_id == teachers[t] ? 1.0 : 0.0;
      }
    }
    return z;
  }
};

struct SparsityAudit {
  std::string variant_unadjusted;
  std::string variant_adjusted;
  std::size_t nonzero_unadjusted = 0;
  std::size_t nonzero_adjusted = 0;
  std::size_t total_embed_columns = 0;
  std::pair<double, double> fractions{0.0, 0.0};
  // Embedding coordinate indices (0-based within the embedding block) with
  // nonzero coefficients.
  std::vector<std::size_t> support_unadjusted;
  std::vector<std::size_t> support_adjusted;
  double lambda_unadjusted = 0.0;
  double lambda_adjusted = 0.0;

  nlohmann::json to_json() const {
    return {{"variant_unadjusted", variant_unadjusted},
            {"variant_adjusted", variant_adjusted},
            {"nonzero_unadjusted", nonzero_unadjusted},
            {"nonzero_adjusted", nonzero_adjusted},
            {"total_embed_columns", total_embed_columns},
            {"fractions", {fractions.first, fractions.second}},
            {"support_unadjusted", support_unadjusted},
            {"support_adjusted", support_adjusted},
            {"lambda_unadjusted", lambda_unadjusted},
            {"lambda_adjusted", lambda_adjusted}};
  }

  std::string to_markdown() const {
    auto pct = [](double f) { return format_fixed(100.0 * f, 1) + "%"; };
    return "| Model | Nonzero embedding coefficients | Fraction |\n|---|---|---|\n| " + variant_unadjusted + " | " +
           std::to_string(nonzero_unadjusted) + " of " + std::to_string(total_embed_columns) + " | " +
           pct(fractions.first) + " |\n| " + variant_adjusted + " | " + std::to_string(nonzero_adjusted) + " of " +
           std::to_string(total_embed_columns) + " | " + pct(fractions.second) + " |\n";
  }
};

namespace detail {

inline std::vector<std::size_t> embedding_support(const LassoFit& fit, const std::vector<Column>& columns) {
  std::vector<std::size_t> support;
  std::size_t k = 0;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (!lasso::is_embedding_group(columns[j].group)) continue;
    if (fit.coefficients[j] != 0.0) support.push_back(k);
    ++k;
  }
  return support;
}

}  // namespace detail

// Fits teacher_response as-is, then with its embedding block residualized
// against the confounder design (prior column retained), on the training
// partition with the same cross-validation as the benchmark.
inline SparsityAudit sparsity_audit(const PreparedData& d, const PipelineConfig& pipeline,
                                    const DeconfoundConfig& config = {}) {
  constexpr auto variant = ModelVariant::teacher_response;
  auto fm = assemble(variant, d.train, d.inputs());
  SparsityAudit audit;
  audit.variant_unadjusted = to_string(variant);
  audit.variant_adjusted = std::string(to_string(variant)) + "_orthogonalized";

  const auto groups = fm.groups();
  const auto raw = train_on_matrix(variant, fm, pipeline);
  audit.nonzero_unadjusted = lasso::nonzero_count(raw.fit, groups, std::string("embed"));
  audit.support_unadjusted = detail::embedding_support(raw.fit, fm.columns);
  audit.lambda_unadjusted = raw.fit.lambda;

  std::vector<std::size_t> embed_cols;
  for (std::size_t j = 0; j < fm.columns.size(); ++j) {
    if (lasso::is_embedding_group(fm.columns[j].group)) embed_cols.push_back(j);
  }
  audit.total_embed_columns = embed_cols.size();

  const auto builder = ConfounderBuilder::fit(d.train, config);
  const auto Z = builder.build(d.train, d.teacher_priors, &d.student_priors);
  if (config.adjust == AdjustTarget::features) {
    Matrix block(fm.data.rows(), embed_cols.size());
    for (std::size_t i = 0; i < block.rows(); ++i) {
      for (std::size_t k = 0; k < embed_cols.size(); ++k) block(i, k) = fm.data(i, embed_cols[k]);
    }
    const auto resid = residualize(block, Z, config.ridge_jitter);
    for (std::size_t i = 0; i < block.rows(); ++i) {
      for (std::size_t k = 0; k < embed_cols.size(); ++k) fm.data(i, embed_cols[k]) = resid(i, k);
    }
  } else {
    Matrix y(fm.target.size(), 1);
    for (std::size_t i = 0; i < fm.target.size(); ++i) y(i, 0) = fm.target[i];
    const auto ry = residualize(y, Z, config.ridge_jitter);
    for (std::size_t i = 0; i < fm.target.size(); ++i) fm.target[i] = ry(i, 0);
  }
  const auto adj = train_on_matrix(variant, fm, pipeline);
  audit.nonzero_adjusted = lasso::nonzero_count(adj.fit, groups, std::string("embed"));
  audit.support_adjusted = detail::embedding_support(adj.fit, fm.columns);
  audit.lambda_adjusted = adj.fit.lambda;

  const double total = static_cast<double>(std::max<std::size_t>(audit.total_embed_columns, 1));
  audit.fractions = {static_cast<double>(audit.nonzero_unadjusted) / total,
                     static_cast<double>(audit.nonzero_adjusted) / total};
  return audit;
}

}  // namespace scorelens
