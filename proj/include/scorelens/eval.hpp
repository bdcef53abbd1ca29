#pragma once

// Temporal hold-out evaluation: splitting, MSE and median-split AUC, percentile
// bootstrap intervals, and the end-to-end benchmark over model variants.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/embedstore.hpp"
#include "scorelens/features.hpp"
#include "scorelens/ingest.hpp"
#include "scorelens/lasso.hpp"
#include "scorelens/priors.hpp"

namespace scorelens {

struct SplitIndex {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::int64_t boundary_timestamp = 0;  // timestamp of the first test record
};

// Orders records by (timestamp, response_id); the last ceil(n * test_fraction)
// form the test set.
inline SplitIndex temporal_split(const std::vector<ResponseRecord>& records, double test_fraction = 0.2) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ArgumentError("temporal_split: fraction must lie in (0,1)");
  if (records.size() < 5) throw ArgumentError("temporal_split: need at least 5 records");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (records[a].timestamp != records[b].timestamp) return records[a].timestamp < records[b].timestamp;
    return records[a].response_id < records[b].response_id;
  });
  const auto n = records.size();
  auto n_test = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * test_fraction - 1e-9));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  SplitIndex split;
  for (std::size_t k = 0; k < n; ++k) {
    (k < n - n_test ? split.train_ids : split.test_ids).push_back(records[order[k]].response_id);
  }
  split.boundary_timestamp = records[order[n - n_test]].timestamp;
  return split;
}

inline double mse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ArgumentError("mse: length mismatch");
  if (y.empty()) throw ArgumentError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

// Midpoint of the central order statistics for even counts.
inline double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of empty sequence");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<int> median_split_labels(std::span<const double> train_scores, std::span<const double> scores,
                                            double* threshold_out = nullptr) {
  const double threshold = median({train_scores.begin(), train_scores.end()});
  if (threshold_out) *threshold_out = threshold;
  std::vector<int> labels;
  labels.reserve(scores.size());
  for (double s : scores) labels.push_back(s > threshold ? 1 : 0);
  return labels;
}

// Mann-Whitney AUC with ties counted one half. Returns nullopt when the labels
// contain a single class.
inline std::optional<double> auc(std::span<const double> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ArgumentError("auc: length mismatch");
  const auto n = predictions.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return predictions[a] < predictions[b]; });
  // Twice the rank sum of positives, in integers: a tie block covering
  // 1-based ranks [s, e] gives each member rank (s + e) / 2.
  std::int64_t twice_rank_sum = 0;
  std::int64_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && predictions[order[j]] == predictions[order[i]]) ++j;
    const auto twice_rank = static_cast<std::int64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        twice_rank_sum += twice_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::int64_t n_neg = static_cast<std::int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const std::int64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

enum class Metric { mse, auc };

struct BootstrapResult {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t redraws = 0;  // resamples discarded for a single-class draw
};

// Percentile interval over B resamples of rows with replacement. Resample b
// draws from its own substream of `seed`, so results do not depend on the
// order in which resamples are evaluated.
inline BootstrapResult bootstrap_ci(Metric metric, std::span<const double> y, std::span<const double> yhat,
                                    std::span<const int> labels, std::size_t B = 1000, double level = 0.95,
                                    std::uint64_t seed = 0) {
  if (!(level > 0.0 && level < 1.0)) throw ArgumentError("bootstrap_ci: level must lie in (0,1)");
  if (B < 100) throw ArgumentError("bootstrap_ci: B must be at least 100");
  const auto n = yhat.size();
  if (n == 0) throw ArgumentError("bootstrap_ci: empty input");
  if (metric == Metric::mse && y.size() != n) throw ArgumentError("bootstrap_ci: y and yhat differ in length");
  if (metric == Metric::auc) {
    if (labels.size() != n) throw ArgumentError("bootstrap_ci: labels and yhat differ in length");
    if (!auc(yhat, labels)) throw ArgumentError("bootstrap_ci: AUC undefined on the full sample");
  }

  constexpr std::size_t kMaxRedraws = 10000;
  BootstrapResult out;
  std::vector<double> stats(B);
  std::vector<double> rs_pred(n), rs_y(n);
  std::vector<int> rs_lab(n);
  for (std::size_t b = 0; b < B; ++b) {
    Rng rng(seed, b);
    for (std::size_t attempt = 0;; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = rng.below(n);
        rs_pred[i] = yhat[k];
        if (metric == Metric::mse) rs_y[i] = y[k];
        else rs_lab[i] = labels[k];
      }
      if (metric == Metric::mse) {
        stats[b] = mse(rs_y, rs_pred);
        break;
      }
      if (auto a = auc(rs_pred, rs_lab)) {
        stats[b] = *a;
        break;
      }
      ++out.redraws;
      if (attempt >= kMaxRedraws) throw DataError("bootstrap_ci: too many single-class resamples");
    }
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 1.0 - level;
  out.lo = quantile_sorted(stats, alpha / 2.0);
  out.hi = quantile_sorted(stats, 1.0 - alpha / 2.0);
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark pipeline
// ---------------------------------------------------------------------------

struct PipelineConfig {
  double test_fraction = 0.2;
  std::size_t path_count = 100;
  double path_ratio = 1e-3;
  std::size_t cv_folds = 5;
  lasso::CvScheme cv_scheme = lasso::CvScheme::forward_chain;
  double tol = lasso::kDefaultTol;
  int max_iter = lasso::kDefaultMaxIter;
  std::size_t bootstrap_B = 1000;  // 0 disables intervals
  double level = 0.95;
  std::uint64_t seed = 0;
  CentroidMode centroid_mode = CentroidMode::per_problem;
  bool reset_priors_at_split = false;
  std::vector<ModelVariant> variants{kStandardVariants.begin(), kStandardVariants.end()};
};

// Everything derived from the split that the per-variant fits share. All
// statistics here come from training rows only.
struct PreparedData {
  SplitIndex split;
  std::vector<ResponseRecord> train;  // temporal order
  std::vector<ResponseRecord> test;   // temporal order
  double fallback = 0.5;
  PriorSeries teacher_priors;
  PriorSeries student_priors;
  CentroidModel centroids;
  double median_threshold = 0.0;
  std::vector<int> test_labels;
  const EmbeddingStore* responses = nullptr;
  const EmbeddingStore* problems = nullptr;

  FeatureInputs inputs() const { return {&teacher_priors, &student_priors, responses, problems, &centroids}; }

  std::vector<double> train_targets() const {
    std::vector<double> t;
    for (const auto& r : train) t.push_back(*r.normalized_score);
    return t;
  }
  std::vector<double> test_targets() const {
    std::vector<double> t;
    for (const auto& r : test) t.push_back(*r.normalized_score);
    return t;
  }
};

inline PreparedData prepare(const std::vector<ResponseRecord>& records, const EmbeddingStore& responses,
                            const EmbeddingStore& problems, const PipelineConfig& config) {
  for (const auto& r : records) {
    if (!r.normalized_score) throw DataError("response '" + r.response_id + "' has no score");
  }
  PreparedData d;
  d.responses = &responses;
  d.problems = &problems;
  d.split = temporal_split(records, config.test_fraction);

  std::map<std::string, const ResponseRecord*> by_id;
  for (const auto& r : records) by_id[r.response_id] = &r;
  for (const auto& id : d.split.train_ids) d.train.push_back(*by_id.at(id));
  for (const auto& id : d.split.test_ids) d.test.push_back(*by_id.at(id));

  d.fallback = global_training_mean(d.train);
  d.teacher_priors =
      compute_priors_split(d.train, d.test, EntityKind::teacher, d.fallback, config.reset_priors_at_split);
  d.student_priors =
      compute_priors_split(d.train, d.test, EntityKind::student, d.fallback, config.reset_priors_at_split);

  std::vector<std::pair<std::string, std::string>> pairs;
  bool have_all = true;
  for (const auto& r : d.train) {
    if (!responses.contains(r.response_id)) have_all = false;
    pairs.emplace_back(r.response_id, r.problem_id);
  }
  if (have_all && responses.size() > 0) d.centroids = fit_centroids(responses, pairs, config.centroid_mode);

  const auto train_y = d.train_targets();
  const auto test_y = d.test_targets();
  d.test_labels = median_split_labels(train_y, test_y, &d.median_threshold);
  return d;
}

struct TrainedVariant {
  ModelVariant variant{};
  LassoFit fit;
  lasso::CvResult cv;
  std::vector<Column> columns;
  std::vector<double> test_predictions;
};

// Cross-validates lambda on the training rows and refits on all of them.
inline TrainedVariant train_on_matrix(ModelVariant variant, const FeatureMatrix& train_fm,
                                      const PipelineConfig& config) {
  TrainedVariant tv;
  tv.variant = variant;
  tv.columns = train_fm.columns;
  const lasso::Problem problem(train_fm.data, train_fm.target);
  const auto path = lasso::make_path(problem.lambda_max(), config.path_count, config.path_ratio);
  tv.cv = lasso::cross_validate(train_fm.data, train_fm.target, path, config.cv_folds, config.cv_scheme, config.tol,
                                config.max_iter);
  LambdaPath prefix;
  prefix.values.assign(path.values.begin(), path.values.begin() + static_cast<std::ptrdiff_t>(tv.cv.best_index) + 1);
  tv.fit = lasso::fit_path(problem, prefix, config.tol, config.max_iter).back();
  return tv;
}

inline TrainedVariant train_variant(const PreparedData& d, ModelVariant variant, const PipelineConfig& config) {
  const auto train_fm = assemble(variant, d.train, d.inputs());
  auto tv = train_on_matrix(variant, train_fm, config);
  const auto test_fm = assemble(variant, d.test, d.inputs());
  tv.test_predictions = lasso::predict(tv.fit, test_fm.data);
  return tv;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct EvalReport {
  ModelVariant variant{};
  double mse = 0.0;
  Interval mse_ci;
  std::optional<double> auc;  // nullopt when test labels are single-class
  Interval auc_ci;
  std::size_t n_test = 0;
  double median_threshold = 0.0;
  std::size_t bootstrap_B = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  std::size_t nonzero = 0;
  bool converged = true;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"variant", to_string(variant)},
                        {"mse", mse},
                        {"mse_ci", {mse_ci.lo, mse_ci.hi}},
                        {"n_test", n_test},
                        {"median_threshold", median_threshold},
                        {"bootstrap_B", bootstrap_B},
                        {"seed", seed},
                        {"lambda", lambda},
                        {"nonzero", nonzero},
                        {"converged", converged}};
    if (auc) {
      j["auc"] = *auc;
      j["auc_ci"] = {auc_ci.lo, auc_ci.hi};
    } else {
      j["auc"] = nullptr;
      j["auc_ci"] = nullptr;
    }
    return j;
  }
};

// Widens a percentile interval to contain its point estimate.
inline Interval enclose(Interval ci, double point) { return {std::min(ci.lo, point), std::max(ci.hi, point)}; }

inline EvalReport evaluate_variant(const PreparedData& d, const TrainedVariant& tv, const PipelineConfig& config) {
  EvalReport rep;
  rep.variant = tv.variant;
  rep.n_test = d.test.size();
  rep.median_threshold = d.median_threshold;
  rep.bootstrap_B = config.bootstrap_B;
  rep.seed = config.seed;
  rep.lambda = tv.fit.lambda;
  rep.nonzero = lasso::nonzero_count(tv.fit);
  rep.converged = tv.fit.converged;

  const auto y = d.test_targets();
  rep.mse = mse(y, tv.test_predictions);
  rep.auc = auc(tv.test_predictions, d.test_labels);
  rep.mse_ci = {rep.mse, rep.mse};
  if (rep.auc) rep.auc_ci = {*rep.auc, *rep.auc};
  if (config.bootstrap_B > 0) {
    const auto stream = derive_seed(config.seed, static_cast<std::uint64_t>(tv.variant));
    const auto m = bootstrap_ci(Metric::mse, y, tv.test_predictions, d.test_labels, config.bootstrap_B, config.level,
                                derive_seed(stream, 0));
    rep.mse_ci = enclose({m.lo, m.hi}, rep.mse);
    if (rep.auc) {
      const auto a = bootstrap_ci(Metric::auc, y, tv.test_predictions, d.test_labels, config.bootstrap_B,
                                  config.level, derive_seed(stream, 1));
      rep.auc_ci = enclose({a.lo, a.hi}, *rep.auc);
    }
  }
  return rep;
}

// Sorted by AUC descending (undefined AUC last); ties keep variant order.
inline void sort_reports(std::vector<EvalReport>& reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    const double x = a.auc.value_or(-1.0);
    const double y = b.auc.value_or(-1.0);
    return x > y;
  });
}

inline std::vector<EvalReport> run_benchmark(const std::vector<ResponseRecord>& records,
                                             const EmbeddingStore& responses, const EmbeddingStore& problems,
                                             const PipelineConfig& config) {
  const auto d = prepare(records, responses, problems, config);
  std::vector<EvalReport> reports;
  for (auto v : config.variants) reports.push_back(evaluate_variant(d, train_variant(d, v, config), config));
  sort_reports(reports);
  return reports;
}

inline nlohmann::json reports_json(const std::vector<EvalReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return arr;
}

inline std::string reports_markdown(const std::vector<EvalReport>& reports) {
  std::string out = "| Model | MSE [95% CI] | AUC [95% CI] |\n|---|---|---|\n";
  for (const auto& r : reports) {
    out += "| " + std::string(display_name(r.variant)) + " | " + format_fixed(r.mse, 4) + " [" +
           format_fixed(r.mse_ci.lo, 4) + ", " + format_fixed(r.mse_ci.hi, 4) + "] | ";
    if (r.auc) {
      out += format_fixed(*r.auc, 3) + " [" + format_fixed(r.auc_ci.lo, 3) + ", " + format_fixed(r.auc_ci.hi, 3) + "]";
    } else {
      out += "undefined";
    }
    out += " |\n";
  }
  return out;
}

}  // namespace scorelens
