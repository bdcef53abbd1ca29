#pragma once

// Dynamic rater and student priors: for each record, the mean normalized score
// of the same entity's strictly earlier records.

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "scorelens/common.hpp"
#include "scorelens/csv.hpp"
#include "scorelens/ingest.hpp"

namespace scorelens {

enum class EntityKind { teacher, student };

struct PriorSeries {
  EntityKind entity_kind = EntityKind::teacher;
  std::unordered_map<std::string, double> values;  // response_id -> prior
  double fallback = 0.5;

  double at(const std::string& response_id) const {
    auto it = values.find(response_id);
    if (it == values.end()) throw DataError("no prior for response '" + response_id + "'");
    return it->second;
  }
};

inline double global_training_mean(const std::vector<ResponseRecord>& records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!r.normalized_score) continue;
    sum += *r.normalized_score;
    ++n;
  }
  if (n == 0) throw DataError("global_training_mean: no scored records");
  return sum / static_cast<double>(n);
}

// Records that share a timestamp within an entity do not see one another.
inline PriorSeries compute_priors(const std::vector<ResponseRecord>& records, EntityKind kind, double fallback) {
  PriorSeries out;
  out.entity_kind = kind;
  out.fallback = fallback;

  std::map<std::string, std::vector<std::size_t>> by_entity;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.normalized_score) throw DataError("compute_priors: response '" + r.response_id + "' has no score");
    by_entity[kind == EntityKind::teacher ? r.teacher_id : r.student_id].push_back(i);
  }

  for (auto& [entity, idx] : by_entity) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (records[a].timestamp != records[b].timestamp) return records[a].timestamp < records[b].timestamp;
      return records[a].response_id < records[b].response_id;
    });
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t g = 0; g < idx.size();) {
      std::size_t end = g;
      while (end < idx.size() && records[idx[end]].timestamp == records[idx[g]].timestamp) ++end;
      const double prior = n == 0 ? fallback : sum / static_cast<double>(n);
      for (std::size_t k = g; k < end; ++k) out.values[records[idx[k]].response_id] = prior;
      for (std::size_t k = g; k < end; ++k) sum += *records[idx[k]].normalized_score;
      n += end - g;
      g = end;
    }
  }
  return out;
}

// Priors across a train/test boundary. With `reset`, test-period priors only
// see test-period history; otherwise history accumulates across the boundary.
inline PriorSeries compute_priors_split(const std::vector<ResponseRecord>& train,
                                        const std::vector<ResponseRecord>& test, EntityKind kind, double fallback,
                                        bool reset) {
  if (!reset) {
    std::vector<ResponseRecord> all = train;
    all.insert(all.end(), test.begin(), test.end());
    return compute_priors(all, kind, fallback);
  }
  auto out = compute_priors(train, kind, fallback);
  for (auto& [id, v] : compute_priors(test, kind, fallback).values) out.values[id] = v;
  return out;
}

inline std::string priors_csv(const std::vector<ResponseRecord>& records, const PriorSeries& teacher,
                              const PriorSeries& student) {
  std::string out = "response_id,teacher_prior,student_prior\n";
  for (const auto& r : records) {
    csv::append_row(out, {r.response_id, format_double(teacher.at(r.response_id)),
                          format_double(student.at(r.response_id))});
  }
  return out;
}

}  // namespace scorelens
