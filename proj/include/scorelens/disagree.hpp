#pragma once

// Cross-model disagreement mining. Three models are compared in the fixed
// order (response_only, teacher_response, teacher_only); a case is a test
// row whose three binarized predictions are not unanimous.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/csv.hpp"
#include "scorelens/embedstore.hpp"
#include "scorelens/ingest.hpp"

namespace scorelens {

inline constexpr std::array<const char*, 3> kPatternModels = {"response_only", "teacher_response", "teacher_only"};

using Pattern = std::array<int, 3>;

inline bool is_unanimous(const Pattern& p) { return p[0] == p[1] && p[1] == p[2]; }

inline std::string pattern_text(const Pattern& p) {
  return std::to_string(p[0]) + "-" + std::to_string(p[1]) + "-" + std::to_string(p[2]);
}

inline Pattern parse_pattern(std::string_view s) {
  if (s.size() != 5 || s[1] != '-' || s[3] != '-') throw DataError("bad pattern '" + std::string(s) + "'");
  Pattern p{};
  for (int k = 0; k < 3; ++k) {
    const char c = s[static_cast<std::size_t>(2 * k)];
    if (c != '0' && c != '1') throw DataError("bad pattern '" + std::string(s) + "'");
    p[static_cast<std::size_t>(k)] = c - '0';
  }
  return p;
}

enum class Stratum { central, extreme };

inline const char* to_string(Stratum s) { return s == Stratum::central ? "central" : "extreme"; }

inline Stratum parse_stratum(std::string_view s) {
  if (s == "central") return Stratum::central;
  if (s == "extreme") return Stratum::extreme;
  throw DataError("bad stratum '" + std::string(s) + "'");
}

struct DisagreementCase {
  std::string response_id;
  Pattern pattern{};
  std::string text;
  int teacher_label = 0;
  double prototypical_score = 0.0;
  Stratum stratum = Stratum::central;
  bool singleton = false;  // only member of its pattern group

  bool operator==(const DisagreementCase&) const = default;
};

inline std::vector<int> binarize(std::span<const double> yhat, double threshold) {
  std::vector<int> out;
  out.reserve(yhat.size());
  for (double v : yhat) out.push_back(v > threshold ? 1 : 0);
  return out;
}

struct ThresholdSearchResult {
  double threshold = 0.0;
  std::size_t divergence_count = 0;
  std::vector<double> grid;
  std::vector<std::size_t> counts;  // per grid point
};

// Quantiles of the pooled predictions at levels k / (points + 1), k = 1..points.
inline std::vector<double> divergence_grid(const std::array<std::span<const double>, 3>& yhats,
                                           std::size_t points = 199) {
  std::vector<double> pooled;
  for (const auto& v : yhats) pooled.insert(pooled.end(), v.begin(), v.end());
  if (pooled.empty()) throw ArgumentError("divergence grid: empty predictions");
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> grid;
  for (std::size_t k = 1; k <= points; ++k) {
    grid.push_back(quantile_sorted(pooled, static_cast<double>(k) / static_cast<double>(points + 1)));
  }
  return grid;
}

// Row i is split at threshold t exactly when min_i <= t < max_i, so the count
// at t is #{min <= t} - #{max <= t}; both come from sorted arrays.
inline ThresholdSearchResult find_divergence_threshold(const std::array<std::span<const double>, 3>& yhats,
                                                       std::size_t points = 199) {
  const auto n = yhats[0].size();
  if (n == 0) throw ArgumentError("find_divergence_threshold: empty input");
  if (yhats[1].size() != n || yhats[2].size() != n) {
    throw ArgumentError("find_divergence_threshold: prediction vectors are not aligned");
  }
  std::vector<double> mins(n), maxs(n);
  for (std::size_t i = 0; i < n; ++i) {
    mins[i] = std::min({yhats[0][i], yhats[1][i], yhats[2][i]});
    maxs[i] = std::max({yhats[0][i], yhats[1][i], yhats[2][i]});
  }
  std::sort(mins.begin(), mins.end());
  std::sort(maxs.begin(), maxs.end());

  ThresholdSearchResult out;
  out.grid = divergence_grid(yhats, points);
  bool first = true;
  for (double t : out.grid) {
    const auto lo = static_cast<std::size_t>(std::upper_bound(mins.begin(), mins.end(), t) - mins.begin());
    const auto hi = static_cast<std::size_t>(std::upper_bound(maxs.begin(), maxs.end(), t) - maxs.begin());
    const std::size_t count = lo - hi;
    out.counts.push_back(count);
    if (first || count > out.divergence_count || (count == out.divergence_count && t < out.threshold)) {
      out.threshold = t;
      out.divergence_count = count;
      first = false;
    }
  }
  return out;
}

struct PatternCount {
  Pattern pattern{};
  std::size_t count = 0;
};

struct CaseCollection {
  std::vector<DisagreementCase> cases;
  std::vector<PatternCount> counts;  // non-unanimous patterns, ascending pattern order
};

// Orders cases by pattern, then descending prototypical score, then id.
inline void sort_cases(std::vector<DisagreementCase>& cases) {
  std::sort(cases.begin(), cases.end(), [](const DisagreementCase& a, const DisagreementCase& b) {
    if (a.pattern != b.pattern) return a.pattern < b.pattern;
    if (a.prototypical_score != b.prototypical_score) return a.prototypical_score > b.prototypical_score;
    return a.response_id < b.response_id;
  });
}

// `labels` are the teacher's binarized grades for the test rows. Stratum is
// assigned by rank within the pattern group: the upper half (rounded up) of
// the prototypical-score ranking is central.
inline CaseCollection collect_cases(const std::vector<ResponseRecord>& test_records,
                                    const std::array<std::span<const double>, 3>& yhats, double threshold,
                                    std::span<const int> labels, const EmbeddingStore& responses) {
  const auto n = test_records.size();
  for (const auto& v : yhats) {
    if (v.size() != n) throw ArgumentError("collect_cases: predictions not aligned to records");
  }
  if (labels.size() != n) throw ArgumentError("collect_cases: labels not aligned to records");

  std::array<std::vector<int>, 3> bins;
  for (std::size_t m = 0; m < 3; ++m) bins[m] = binarize(yhats[m], threshold);

  std::map<Pattern, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const Pattern p{bins[0][i], bins[1][i], bins[2][i]};
    if (!is_unanimous(p)) groups[p].push_back(i);
  }

  CaseCollection out;
  for (const auto& [pattern, members] : groups) {
    out.counts.push_back({pattern, members.size()});
    std::vector<std::string> ids;
    for (auto i : members) ids.push_back(test_records[i].response_id);
    const auto center = centroid(responses, ids);
    std::vector<DisagreementCase> group;
    for (auto i : members) {
      DisagreementCase c;
      c.response_id = test_records[i].response_id;
      c.pattern = pattern;
      c.text = test_records[i].text;
      c.teacher_label = labels[i];
      if (members.size() == 1) {
        c.prototypical_score = 1.0;
        c.singleton = true;
      } else {
        c.prototypical_score = cosine(responses.values(c.response_id), center);
      }
      group.push_back(std::move(c));
    }
    sort_cases(group);
    const std::size_t central = (group.size() + 1) / 2;
    for (std::size_t k = 0; k < group.size(); ++k) group[k].stratum = k < central ? Stratum::central : Stratum::extreme;
    out.cases.insert(out.cases.end(), group.begin(), group.end());
  }
  return out;
}

struct CodingSample {
  std::vector<DisagreementCase> cases;
  bool exhaustive = false;  // requested size covered every case
};

// Largest-remainder apportionment of n across group sizes; ties in the
// remainder go to the earlier group.
inline std::vector<std::size_t> apportion(std::span<const std::size_t> sizes, std::size_t n) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  std::vector<std::size_t> alloc(sizes.size(), 0);
  if (total == 0) return alloc;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    // Exact integer floor and remainder of n * size / total.
    const auto num = static_cast<unsigned long long>(n) * sizes[g];
    alloc[g] = static_cast<std::size_t>(num / total);
    assigned += alloc[g];
    remainders.emplace_back(static_cast<double>(num % total), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n && k < remainders.size(); ++k) {
    const auto g = remainders[k].second;
    if (alloc[g] < sizes[g]) {
      ++alloc[g];
      ++assigned;
    }
  }
  return alloc;
}

namespace detail {

// Uniform sample of k distinct positions from [0, m), returned ascending.
inline std::vector<std::size_t> sample_positions(std::size_t m, std::size_t k, Rng& rng) {
  std::vector<std::size_t> pool(m);
  for (std::size_t i = 0; i < m; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(m - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace detail

// Per pattern group: the allocation is split into round(a * central_fraction)
// central draws from the upper half of the score ranking and the rest from
// the lower half, each uniform without replacement.
inline CodingSample sample_for_coding(const std::vector<DisagreementCase>& cases, std::size_t n = 300,
                                      double central_fraction = 0.5, std::uint64_t seed = 0) {
  if (!(central_fraction >= 0.0 && central_fraction <= 1.0)) {
    throw ArgumentError("sample_for_coding: central_fraction must lie in [0,1]");
  }
  std::map<Pattern, std::vector<DisagreementCase>> groups;
  for (const auto& c : cases) groups[c.pattern].push_back(c);

  CodingSample out;
  if (n >= cases.size()) {
    out.exhaustive = true;
    for (auto& [p, g] : groups) {
      sort_cases(g);
      const std::size_t central = (g.size() + 1) / 2;
      for (std::size_t k = 0; k < g.size(); ++k) g[k].stratum = k < central ? Stratum::central : Stratum::extreme;
      out.cases.insert(out.cases.end(), g.begin(), g.end());
    }
    return out;
  }

  std::vector<std::size_t> sizes;
  for (const auto& [p, g] : groups) sizes.push_back(g.size());
  const auto alloc = apportion(sizes, n);

  std::size_t gi = 0;
  for (auto& [pattern, g] : groups) {
    const std::size_t a = alloc[gi++];
    sort_cases(g);
    const std::size_t upper = (g.size() + 1) / 2;
    const std::size_t lower = g.size() - upper;
    auto n_central = static_cast<std::size_t>(std::floor(static_cast<double>(a) * central_fraction + 0.5));
    n_central = std::min(n_central, a);
    std::size_t n_extreme = a - n_central;
    // Spill over when one half is too small.
    if (n_central > upper) n_extreme += n_central - upper, n_central = upper;
    if (n_extreme > lower) n_central += n_extreme - lower, n_extreme = lower;

    Rng rng(seed, static_cast<std::uint64_t>(pattern[0] * 4 + pattern[1] * 2 + pattern[2]));
    for (auto k : detail::sample_positions(upper, n_central, rng)) {
      auto c = g[k];
      c.stratum = Stratum::central;
      out.cases.push_back(std::move(c));
    }
    for (auto k : detail::sample_positions(lower, n_extreme, rng)) {
      auto c = g[upper + k];
      c.stratum = Stratum::extreme;
      out.cases.push_back(std::move(c));
    }
  }
  sort_cases(out.cases);
  return out;
}

// ---------------------------------------------------------------------------
// Export / import
// ---------------------------------------------------------------------------

enum class CaseFormat { csv, jsonl };

inline const std::vector<std::string>& case_columns() {
  static const std::vector<std::string> cols = {"response_id",        "text",    "teacher_label", "pattern",
                                                "prototypical_score", "stratum", "singleton"};
  return cols;
}

inline nlohmann::json case_to_json(const DisagreementCase& c) {
  return {{"response_id", c.response_id},
          {"text", c.text},
          {"teacher_label", c.teacher_label},
          {"pattern", pattern_text(c.pattern)},
          {"prototypical_score", c.prototypical_score},
          {"stratum", to_string(c.stratum)},
          {"singleton", c.singleton}};
}

inline std::string export_cases(std::vector<DisagreementCase> cases, CaseFormat format) {
  sort_cases(cases);
  std::string out;
  if (format == CaseFormat::csv) {
    csv::append_row(out, case_columns());
    for (const auto& c : cases) {
      csv::append_row(out, {c.response_id, c.text, std::to_string(c.teacher_label), pattern_text(c.pattern),
                            format_double(c.prototypical_score), to_string(c.stratum), c.singleton ? "1" : "0"});
    }
    return out;
  }
  for (const auto& c : cases) out += case_to_json(c).dump() + "\n";
  return out;
}

inline std::vector<DisagreementCase> import_cases(std::string_view source, CaseFormat format) {
  std::vector<DisagreementCase> out;
  auto check = [](DisagreementCase& c) {
    if (is_unanimous(c.pattern)) throw DataError("case '" + c.response_id + "' has a unanimous pattern");
    if (c.teacher_label != 0 && c.teacher_label != 1) throw DataError("case '" + c.response_id + "': bad label");
  };
  if (format == CaseFormat::csv) {
    const auto rows = csv::parse(source);
    if (rows.empty()) return out;
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].fields.size(); ++i) col[rows[0].fields[i]] = i;
    for (const auto& name : case_columns()) {
      if (!col.contains(name) && name != "singleton") throw DataError("cases csv: missing column '" + name + "'");
    }
    for (std::size_t k = 1; k < rows.size(); ++k) {
      const auto& f = rows[k].fields;
      if (f.size() != rows[0].fields.size()) {
        throw DataError("cases csv line " + std::to_string(rows[k].line) + ": wrong field count");
      }
      DisagreementCase c;
      c.response_id = f[col["response_id"]];
      c.text = f[col["text"]];
      c.teacher_label = static_cast<int>(detail::parse_int(f[col["teacher_label"]], rows[k].line, "teacher_label"));
      c.pattern = parse_pattern(f[col["pattern"]]);
      char* end = nullptr;
      const auto& score = f[col["prototypical_score"]];
      c.prototypical_score = std::strtod(score.c_str(), &end);
      if (score.empty() || *end != '\0') {
        throw DataError("cases csv line " + std::to_string(rows[k].line) + ": bad prototypical_score");
      }
      c.stratum = parse_stratum(f[col["stratum"]]);
      if (col.contains("singleton")) {
        const auto& flag = f[col["singleton"]];
        if (flag != "0" && flag != "1") {
          throw DataError("cases csv line " + std::to_string(rows[k].line) + ": bad singleton flag");
        }
        c.singleton = flag == "1";
      }
      check(c);
      out.push_back(std::move(c));
    }
    return out;
  }
  std::size_t start = 0;
  while (start < source.size()) {
    const auto nl = source.find('\n', start);
    const auto line = source.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      const auto j = nlohmann::json::parse(line);
      DisagreementCase c;
      c.response_id = j.at("response_id").get<std::string>();
      c.text = j.at("text").get<std::string>();
      c.teacher_label = j.at("teacher_label").get<int>();
      c.pattern = parse_pattern(j.at("pattern").get<std::string>());
      c.prototypical_score = j.at("prototypical_score").get<double>();
      c.stratum = parse_stratum(j.at("stratum").get<std::string>());
      c.singleton = j.value("singleton", false);
      check(c);
      out.push_back(std::move(c));
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

inline nlohmann::json pattern_counts_json(const CaseCollection& collection, const ThresholdSearchResult& search) {
  nlohmann::json counts = nlohmann::json::array();
  for (const auto& pc : collection.counts) {
    counts.push_back({{"pattern", pattern_text(pc.pattern)}, {"count", pc.count}});
  }
  return {{"pattern_order", kPatternModels},
          {"threshold", search.threshold},
          {"divergence_count", search.divergence_count},
          {"total_cases", collection.cases.size()},
          {"patterns", counts}};
}

}  // namespace scorelens
