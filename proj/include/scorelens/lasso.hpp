#pragma once

// Lasso regression by cyclic coordinate descent.
//
// Objective, on internally standardized columns x~_j = (x_j - mean_j) / std_j
// (population std) and centered target:
//
//     (1 / 2n) || y - b0 - X~ b ||^2 + lambda * || b ||_1
//
// The solver works on the Gram form: G = X~'X~ / n and c = X~'(y - ybar) / n.
// It keeps g = c - G b = X~'r / n up to date, so one coordinate update costs
// O(p) instead of O(n). Columns with zero variance are excluded from descent;
// their coefficient is pinned to 0 and their std sentinel is 1.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"

namespace scorelens {

struct LassoFit {
  std::vector<double> column_means;
  std::vector<double> column_stds;
  double intercept = 0.0;
  std::vector<double> coefficients;  // standardized space
  double lambda = 0.0;
  int n_iterations = 0;
  bool converged = false;

  nlohmann::json to_json() const {
    return {{"column_means", column_means},
            {"column_stds", column_stds},
            {"intercept", intercept},
            {"coefficients", coefficients},
            {"lambda", lambda},
            {"n_iterations", n_iterations},
            {"converged", converged}};
  }

  static LassoFit from_json(const nlohmann::json& j) {
    LassoFit f;
    f.column_means = j.at("column_means").get<std::vector<double>>();
    f.column_stds = j.at("column_stds").get<std::vector<double>>();
    f.intercept = j.at("intercept").get<double>();
    f.coefficients = j.at("coefficients").get<std::vector<double>>();
    f.lambda = j.at("lambda").get<double>();
    f.n_iterations = j.at("n_iterations").get<int>();
    f.converged = j.at("converged").get<bool>();
    return f;
  }
};

// Strictly decreasing regularization strengths.
struct LambdaPath {
  std::vector<double> values;
};

// Per-sweep record, filled when requested.
struct FitTrace {
  std::vector<double> objective;  // objective after each full sweep
  std::vector<double> gradient;   // X~'r / n at exit, one entry per column
};

namespace lasso {

inline constexpr double kDefaultTol = 1e-7;
inline constexpr int kDefaultMaxIter = 10000;

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

// Standardized Gram-form problem. Reusable across many lambdas.
class Problem {
 public:
  Problem(const Matrix& X, std::span<const double> y) {
    n_ = X.rows();
    p_ = X.cols();
    if (n_ != y.size()) throw ArgumentError("lasso: X has " + std::to_string(n_) + " rows, y has " +
                                            std::to_string(y.size()));
    if (n_ < 2) throw ArgumentError("lasso: need at least 2 rows");
    for (double v : X.data()) {
      if (!std::isfinite(v)) throw ArgumentError("lasso: non-finite value in X");
    }
    for (double v : y) {
      if (!std::isfinite(v)) throw ArgumentError("lasso: non-finite value in y");
    }
    const double nd = static_cast<double>(n_);

    y_mean_ = 0.0;
    for (double v : y) y_mean_ += v;
    y_mean_ /= nd;
    std::vector<double> yc(n_);
    yy_ = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      yc[i] = y[i] - y_mean_;
      yy_ += yc[i] * yc[i];
    }
    yy_ /= nd;

    means_.assign(p_, 0.0);
    stds_.assign(p_, 1.0);
    for (std::size_t j = 0; j < p_; ++j) {
      double lo = X(0, j), hi = X(0, j), s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        s += X(i, j);
        lo = std::min(lo, X(i, j));
        hi = std::max(hi, X(i, j));
      }
      means_[j] = s / nd;
      if (lo == hi) continue;
      double ss = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        const double d = X(i, j) - means_[j];
        ss += d * d;
      }
      const double sd = std::sqrt(ss / nd);
      if (sd > 0.0) {
        stds_[j] = sd;
        active_.push_back(j);
      }
    }

    const std::size_t a = active_.size();
    Matrix Xs(n_, a);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t k = 0; k < a; ++k) {
        const auto j = active_[k];
        Xs(i, k) = (X(i, j) - means_[j]) / stds_[j];
      }
    }
    gram_ = Matrix(a, a);
    c_.assign(a, 0.0);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto row = Xs.row(i);
      for (std::size_t k = 0; k < a; ++k) {
        const double v = row[k];
        c_[k] += v * yc[i];
        auto g = gram_.row(k);
        for (std::size_t l = k; l < a; ++l) g[l] += v * row[l];
      }
    }
    for (std::size_t k = 0; k < a; ++k) {
      c_[k] /= nd;
      for (std::size_t l = k; l < a; ++l) {
        gram_(k, l) /= nd;
        gram_(l, k) = gram_(k, l);
      }
    }
  }

  std::size_t rows() const noexcept { return n_; }
  std::size_t cols() const noexcept { return p_; }
  double y_mean() const noexcept { return y_mean_; }

  double lambda_max() const {
    double m = 0.0;
    for (double v : c_) m = std::max(m, std::abs(v));
    return m;
  }

  // Coordinate descent from `warm` (full-width standardized coefficients).
  LassoFit solve(double lambda, std::span<const double> warm, double tol, int max_iter,
                 FitTrace* trace = nullptr) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("lasso: lambda must be finite and >= 0");
    const std::size_t a = active_.size();
    std::vector<double> beta(a, 0.0);
    if (!warm.empty()) {
      if (warm.size() != p_) throw ArgumentError("lasso: warm start has wrong width");
      for (std::size_t k = 0; k < a; ++k) beta[k] = warm[active_[k]];
    }
    // g = c - G beta
    std::vector<double> g = c_;
    for (std::size_t k = 0; k < a; ++k) {
      if (beta[k] == 0.0) continue;
      const auto col = gram_.row(k);
      for (std::size_t l = 0; l < a; ++l) g[l] -= col[l] * beta[k];
    }

    LassoFit fit;
    fit.lambda = lambda;
    fit.column_means = means_;
    fit.column_stds = stds_;
    fit.intercept = y_mean_;

    int it = 0;
    bool converged = a == 0;
    while (!converged && it < max_iter) {
      ++it;
      double max_delta = 0.0;
      for (std::size_t k = 0; k < a; ++k) {
        const double diag = gram_(k, k);
        const double z = g[k] + diag * beta[k];
        const double updated = soft_threshold(z, lambda) / diag;
        const double delta = updated - beta[k];
        if (delta == 0.0) continue;
        beta[k] = updated;
        const auto col = gram_.row(k);
        for (std::size_t l = 0; l < a; ++l) g[l] -= col[l] * delta;
        max_delta = std::max(max_delta, std::abs(delta));
      }
      if (trace) trace->objective.push_back(objective_of(beta, lambda));
      converged = max_delta < tol;
    }

    fit.n_iterations = it;
    fit.converged = converged;
    fit.coefficients.assign(p_, 0.0);
    for (std::size_t k = 0; k < a; ++k) fit.coefficients[active_[k]] = beta[k];
    if (trace) {
      trace->gradient.assign(p_, 0.0);
      for (std::size_t k = 0; k < a; ++k) trace->gradient[active_[k]] = g[k];
    }
    return fit;
  }

  // Objective value for standardized coefficients restricted to active columns.
  double objective_of(std::span<const double> beta_active, double lambda) const {
    const std::size_t a = active_.size();
    double quad = 0.0, lin = 0.0, l1 = 0.0;
    for (std::size_t k = 0; k < a; ++k) {
      if (beta_active[k] == 0.0) continue;
      lin += c_[k] * beta_active[k];
      l1 += std::abs(beta_active[k]);
      const auto row = gram_.row(k);
      double s = 0.0;
      for (std::size_t l = 0; l < a; ++l) s += row[l] * beta_active[l];
      quad += beta_active[k] * s;
    }
    return 0.5 * (yy_ - 2.0 * lin + quad) + lambda * l1;
  }

 private:
  std::size_t n_ = 0;
  std::size_t p_ = 0;
  double y_mean_ = 0.0;
  double yy_ = 0.0;
  std::vector<double> means_;
  std::vector<double> stds_;
  std::vector<std::size_t> active_;
  Matrix gram_;
  std::vector<double> c_;
};

// Smallest lambda at which every coefficient is zero: max_j |<x~_j, y - ybar>| / n.
inline double lambda_max(const Matrix& X, std::span<const double> y) { return Problem(X, y).lambda_max(); }

inline LassoFit fit(const Matrix& X, std::span<const double> y, double lambda, double tol = kDefaultTol,
                    int max_iter = kDefaultMaxIter, FitTrace* trace = nullptr) {
  return Problem(X, y).solve(lambda, {}, tol, max_iter, trace);
}

// `count` log-spaced values from lambda_max down to lambda_max * ratio. A zero
// lambda_max (constant target or constant design) yields the single value 0.
inline LambdaPath make_path(double lambda_max, std::size_t count = 100, double ratio = 1e-3) {
  if (count == 0) throw ArgumentError("lambda path needs at least one point");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("lambda path ratio must lie in (0, 1)");
  LambdaPath path;
  if (lambda_max <= 0.0) {
    path.values = {0.0};
    return path;
  }
  if (count == 1) {
    path.values = {lambda_max};
    return path;
  }
  const double lo = std::log(lambda_max * ratio);
  const double hi = std::log(lambda_max);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(count - 1);
    path.values.push_back(k == 0 ? lambda_max : std::exp(hi + t * (lo - hi)));
  }
  path.values.back() = lambda_max * ratio;
  return path;
}

// Fits along the path with warm starts, returning one fit per lambda.
inline std::vector<LassoFit> fit_path(const Problem& problem, const LambdaPath& path, double tol = kDefaultTol,
                                      int max_iter = kDefaultMaxIter) {
  std::vector<LassoFit> fits;
  fits.reserve(path.values.size());
  std::vector<double> warm;
  for (double lambda : path.values) {
    fits.push_back(problem.solve(lambda, warm, tol, max_iter));
    warm = fits.back().coefficients;
  }
  return fits;
}

inline std::vector<double> predict(const LassoFit& fit, const Matrix& X) {
  if (X.cols() != fit.coefficients.size()) {
    throw ArgumentError("predict: X has " + std::to_string(X.cols()) + " columns, fit has " +
                        std::to_string(fit.coefficients.size()));
  }
  std::vector<double> out(X.rows());
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto row = X.row(i);
    double s = fit.intercept;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (fit.coefficients[j] != 0.0) s += fit.coefficients[j] * (row[j] - fit.column_means[j]) / fit.column_stds[j];
    }
    out[i] = s;
  }
  return out;
}

// Largest KKT violation of `fit` on (X, y), recomputed from explicit residuals.
// For b_j != 0: | <x~_j, r>/n - lambda sign(b_j) |; for b_j == 0: max(0, |<x~_j, r>/n| - lambda).
// Zero-variance columns are skipped.
inline double kkt_violation(const LassoFit& fit, const Matrix& X, std::span<const double> y) {
  const auto yhat = predict(fit, X);
  const double nd = static_cast<double>(X.rows());
  double worst = 0.0;
  for (std::size_t j = 0; j < X.cols(); ++j) {
    double lo = X(0, j), hi = X(0, j);
    for (std::size_t i = 0; i < X.rows(); ++i) lo = std::min(lo, X(i, j)), hi = std::max(hi, X(i, j));
    if (lo == hi) continue;
    double corr = 0.0;
    for (std::size_t i = 0; i < X.rows(); ++i) {
      corr += (X(i, j) - fit.column_means[j]) / fit.column_stds[j] * (y[i] - yhat[i]);
    }
    corr /= nd;
    const double b = fit.coefficients[j];
    const double v = b != 0.0 ? std::abs(corr - fit.lambda * (b > 0 ? 1.0 : -1.0))
                              : std::max(0.0, std::abs(corr) - fit.lambda);
    worst = std::max(worst, v);
  }
  return worst;
}

enum class CvScheme { forward_chain, contiguous_kfold };

inline const char* to_string(CvScheme s) { return s == CvScheme::forward_chain ? "forward_chain" : "contiguous_kfold"; }

inline CvScheme parse_cv_scheme(const std::string& s) {
  if (s == "forward_chain") return CvScheme::forward_chain;
  if (s == "contiguous_kfold") return CvScheme::contiguous_kfold;
  throw ArgumentError("unknown cv scheme '" + s + "'");
}

struct CvResult {
  double best_lambda = 0.0;
  std::size_t best_index = 0;
  std::vector<double> per_lambda_mse;
};

// Boundaries of `blocks` contiguous, near-equal blocks over n rows.
inline std::vector<std::size_t> block_bounds(std::size_t n, std::size_t blocks) {
  std::vector<std::size_t> b(blocks + 1);
  for (std::size_t k = 0; k <= blocks; ++k) b[k] = k * n / blocks;
  return b;
}

// forward_chain: rows are split into n_folds + 1 contiguous blocks; fold k
// trains on blocks [0, k] and validates on block k + 1. contiguous_kfold:
// n_folds contiguous blocks, each held out once. Ties in mean validation MSE
// go to the larger lambda.
inline CvResult cross_validate(const Matrix& X, std::span<const double> y, const LambdaPath& path,
                               std::size_t n_folds = 5, CvScheme scheme = CvScheme::forward_chain,
                               double tol = kDefaultTol, int max_iter = kDefaultMaxIter) {
  const std::size_t n = X.rows();
  if (n_folds < 2 || n_folds > n) throw ArgumentError("cross_validate: n_folds must lie in [2, n rows]");
  if (path.values.empty()) throw ArgumentError("cross_validate: empty lambda path");
  if (y.size() != n) throw ArgumentError("cross_validate: X and y row counts differ");

  CvResult out;
  out.per_lambda_mse.assign(path.values.size(), 0.0);
  const auto bounds = block_bounds(n, scheme == CvScheme::forward_chain ? n_folds + 1 : n_folds);

  for (std::size_t fold = 0; fold < n_folds; ++fold) {
    std::vector<std::size_t> train, valid;
    if (scheme == CvScheme::forward_chain) {
      for (std::size_t i = 0; i < bounds[fold + 1]; ++i) train.push_back(i);
      for (std::size_t i = bounds[fold + 1]; i < bounds[fold + 2]; ++i) valid.push_back(i);
    } else {
      for (std::size_t i = 0; i < n; ++i) (i >= bounds[fold] && i < bounds[fold + 1] ? valid : train).push_back(i);
    }
    if (train.size() < 2 || valid.empty()) {
      throw ArgumentError("cross_validate: fold " + std::to_string(fold) + " is too small");
    }
    const Matrix Xt = X.select_rows(train);
    const Matrix Xv = X.select_rows(valid);
    const auto yt = select(y, std::span<const std::size_t>(train));
    const auto yv = select(y, std::span<const std::size_t>(valid));
    const Problem problem(Xt, yt);
    const auto fits = fit_path(problem, path, tol, max_iter);
    for (std::size_t k = 0; k < fits.size(); ++k) {
      const auto pred = predict(fits[k], Xv);
      double se = 0.0;
      for (std::size_t i = 0; i < yv.size(); ++i) se += (yv[i] - pred[i]) * (yv[i] - pred[i]);
      out.per_lambda_mse[k] += se / static_cast<double>(yv.size());
    }
  }
  for (auto& m : out.per_lambda_mse) m /= static_cast<double>(n_folds);

  out.best_index = 0;
  for (std::size_t k = 1; k < out.per_lambda_mse.size(); ++k) {
    if (out.per_lambda_mse[k] < out.per_lambda_mse[out.best_index]) out.best_index = k;
  }
  out.best_lambda = path.values[out.best_index];
  return out;
}

// Column group metadata used to count surviving coefficients by block.
enum class ColumnGroup { prior_teacher, prior_student, embed_response, embed_problem, embed_diff, embed_centroid };

inline const char* to_string(ColumnGroup g) {
  switch (g) {
    case ColumnGroup::prior_teacher: return "prior_teacher";
    case ColumnGroup::prior_student: return "prior_student";
    case ColumnGroup::embed_response: return "embed_response";
    case ColumnGroup::embed_problem: return "embed_problem";
    case ColumnGroup::embed_diff: return "embed_diff";
    case ColumnGroup::embed_centroid: return "embed_centroid";
  }
  return "?";
}

inline bool is_embedding_group(ColumnGroup g) {
  return g != ColumnGroup::prior_teacher && g != ColumnGroup::prior_student;
}

// Group filter names: any ColumnGroup name, "embed" (all embedding groups),
// or "prior" (both prior groups).
inline bool group_matches(const std::string& filter, ColumnGroup g) {
  if (filter == "embed") return is_embedding_group(g);
  if (filter == "prior") return !is_embedding_group(g);
  for (auto candidate : {ColumnGroup::prior_teacher, ColumnGroup::prior_student, ColumnGroup::embed_response,
                         ColumnGroup::embed_problem, ColumnGroup::embed_diff, ColumnGroup::embed_centroid}) {
    if (filter == to_string(candidate)) return candidate == g;
  }
  throw ArgumentError("unknown column group '" + filter + "'");
}

inline std::size_t nonzero_count(const LassoFit& fit) {
  return static_cast<std::size_t>(
      std::count_if(fit.coefficients.begin(), fit.coefficients.end(), [](double c) { return c != 0.0; }));
}

inline std::size_t nonzero_count(const LassoFit& fit, std::span<const ColumnGroup> groups,
                                 const std::optional<std::string>& filter) {
  if (groups.size() != fit.coefficients.size()) throw ArgumentError("nonzero_count: group metadata width mismatch");
  if (!filter) return nonzero_count(fit);
  std::size_t n = 0;
  for (std::size_t j = 0; j < groups.size(); ++j) {
    if (group_matches(*filter, groups[j]) && fit.coefficients[j] != 0.0) ++n;
  }
  // An unknown filter must fail even on an empty fit.
  if (groups.empty()) group_matches(*filter, ColumnGroup::prior_teacher);
  return n;
}

}  // namespace lasso
}  // namespace scorelens
