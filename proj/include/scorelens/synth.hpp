#pragma once

// Synthetic graded-response corpora with planted teacher leniency, student
// ability and content effects.
//
//   leniency_t ~ N(0, sigma_teacher^2),  ability_s ~ N(0, sigma_student^2)
//   content    ~ N(0, I_dim)
//   latent     = clamp01(0.5 + beta * mean(content[0..k)) + leniency_t + ability_s + eps)
//   raw_score  = round(4 * latent)
//
// With confound_loading != 0 the observed embedding is content with
// confound_loading * leniency_t added to each signal coordinate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/embedstore.hpp"
#include "scorelens/ingest.hpp"

namespace scorelens {

struct SynthConfig {
  std::size_t n_teachers = 40;
  std::size_t n_students = 800;
  std::size_t n_problems = 60;
  std::size_t n_responses = 5000;
  std::size_t dim = 32;
  std::size_t k_signal_dims = 8;
  double beta_content = 0.3;
  double sigma_teacher = 0.2;
  double sigma_student = 0.05;
  double sigma_noise = 0.15;
  double confound_loading = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_teachers == 0 || n_students == 0 || n_problems == 0 || n_responses == 0 || dim == 0) {
      throw ArgumentError("synth: counts and dim must be positive");
    }
    if (k_signal_dims > dim) throw ArgumentError("synth: k_signal_dims exceeds dim");
    if (beta_content < 0 || sigma_teacher < 0 || sigma_student < 0 || sigma_noise < 0) {
      throw ArgumentError("synth: effect sizes must be non-negative");
    }
  }

  nlohmann::json to_json() const {
    return {{"n_teachers", n_teachers},     {"n_students", n_students},       {"n_problems", n_problems},
            {"n_responses", n_responses},   {"dim", dim},                     {"k_signal_dims", k_signal_dims},
            {"beta_content", beta_content}, {"sigma_teacher", sigma_teacher}, {"sigma_student", sigma_student},
            {"sigma_noise", sigma_noise},   {"confound_loading", confound_loading}, {"seed", seed}};
  }
};

struct GroundTruth {
  std::vector<double> leniency;       // by teacher index
  std::vector<double> ability;        // by student index
  std::vector<std::size_t> teacher_of_student;
  std::vector<std::size_t> signal_dims;
  std::vector<double> latent;         // by record, pre-quantization

  nlohmann::json to_json(const SynthConfig& config) const {
    return {{"config", config.to_json()},
            {"leniency", leniency},
            {"ability", ability},
            {"teacher_of_student", teacher_of_student},
            {"signal_dims", signal_dims},
            {"latent", latent}};
  }
};

struct SynthData {
  std::vector<ResponseRecord> records;  // temporal order
  EmbeddingStore responses;
  EmbeddingStore problems;
  GroundTruth truth;
};

inline std::string synth_id(char prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

inline SynthData generate(const SynthConfig& config) {
  config.validate();
  enum Stream : std::uint64_t { kTeachers = 1, kStudents, kProblems, kEvents, kResponses };
  const auto stream_seed = [&](Stream s) { return derive_seed(config.seed, s); };

  SynthData out;
  out.responses = EmbeddingStore(config.dim);
  out.problems = EmbeddingStore(config.dim);
  auto& truth = out.truth;

  for (std::size_t t = 0; t < config.n_teachers; ++t) {
    Rng rng(stream_seed(kTeachers), t);
    truth.leniency.push_back(config.sigma_teacher * rng.normal());
  }
  for (std::size_t s = 0; s < config.n_students; ++s) {
    Rng rng(stream_seed(kStudents), s);
    truth.teacher_of_student.push_back(static_cast<std::size_t>(rng.below(config.n_teachers)));
    truth.ability.push_back(config.sigma_student * rng.normal());
  }
  for (std::size_t p = 0; p < config.n_problems; ++p) {
    Rng rng(stream_seed(kProblems), p);
    EmbeddingVector v{synth_id('p', p, 4), std::vector<float>(config.dim)};
    for (auto& x : v.values) x = static_cast<float>(rng.normal());
    out.problems.add(std::move(v));
  }
  for (std::size_t k = 0; k < config.k_signal_dims; ++k) truth.signal_dims.push_back(k);

  struct Event {
    std::int64_t timestamp;
    std::size_t student;
    std::size_t problem;
    std::size_t draw;
  };
  std::vector<Event> events;
  constexpr std::int64_t kStart = 1'600'000'000;
  constexpr std::int64_t kSpan = 180 * 86'400;
  for (std::size_t i = 0; i < config.n_responses; ++i) {
    Rng rng(stream_seed(kEvents), i);
    const auto ts = kStart + static_cast<std::int64_t>(rng.below(kSpan));
    const auto s = static_cast<std::size_t>(rng.below(config.n_students));
    const auto p = static_cast<std::size_t>(rng.below(config.n_problems));
    events.push_back({ts, s, p, i});
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.draw < b.draw;
  });

  const int width = config.n_responses < 1000000 ? 6 : 9;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    Rng rng(stream_seed(kResponses), e.draw);
    std::vector<double> content(config.dim);
    for (auto& x : content) x = rng.normal();
    const double eps = config.sigma_noise * rng.normal();

    double signal = 0.0;
    for (auto k : truth.signal_dims) signal += content[k];
    if (!truth.signal_dims.empty()) signal /= static_cast<double>(truth.signal_dims.size());

    const auto teacher = truth.teacher_of_student[e.student];
    const double lenient = truth.leniency[teacher];
    const double latent =
        std::clamp(0.5 + config.beta_content * signal + lenient + truth.ability[e.student] + eps, 0.0, 1.0);
    truth.latent.push_back(latent);

    ResponseRecord r;
    r.response_id = synth_id('r', i, width);
    r.student_id = synth_id('s', e.student, 5);
    r.teacher_id = synth_id('t', teacher, 3);
    r.problem_id = synth_id('p', e.problem, 4);
    r.skill_code = "SYN." + r.problem_id;
    r.timestamp = e.timestamp;
    r.text = "synthetic answer " + r.response_id + " to problem " + r.problem_id +
             " explaining the steps taken and why they work";
    r.raw_score = static_cast<int>(std::lround(4.0 * latent));
    r.normalized_score = *r.raw_score / 4.0;

    EmbeddingVector v{r.response_id, std::vector<float>(config.dim)};
    for (std::size_t k = 0; k < config.dim; ++k) {
      const double loading = k < config.k_signal_dims ? config.confound_loading * lenient : 0.0;
      v.values[k] = static_cast<float>(content[k] + loading);
    }
    out.responses.add(std::move(v));
    out.records.push_back(std::move(r));
  }
  return out;
}

}  // namespace scorelens
