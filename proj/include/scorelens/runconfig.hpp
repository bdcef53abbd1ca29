#pragma once

// Resolved configuration of a command-line run. Every command writes one as
// runconfig.json; passing it back with --config reproduces the run.

#include <cstdint>
#include <string>

#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/deconfound.hpp"
#include "scorelens/eval.hpp"
#include "scorelens/ingest.hpp"
#include "scorelens/synth.hpp"

namespace scorelens {

struct RunConfig {
  std::string command;
  std::string records;
  std::string response_embeddings;
  std::string problem_embeddings;
  std::string out;
  std::uint64_t seed = 0;

  FilterConfig filter;
  PipelineConfig pipeline;
  DeconfoundConfig deconfound;
  std::vector<std::string> variants;  // empty means all standard variants
  std::string variant = "teacher_response";
  std::size_t sample = 300;
  double central_fraction = 0.5;
  std::string case_format = "csv";
  SynthConfig synth;

  // Copies the shared seed and variant list into the module configs.
  void resolve() {
    pipeline.seed = seed;
    synth.seed = seed;
    if (!variants.empty()) {
      pipeline.variants.clear();
      for (const auto& v : variants) pipeline.variants.push_back(parse_variant(v));
    }
    parse_variant(variant);
    if (case_format != "csv" && case_format != "jsonl") throw ArgumentError("case format must be csv or jsonl");
  }

  nlohmann::json to_json() const {
    nlohmann::json vs = nlohmann::json::array();
    for (auto v : pipeline.variants) vs.push_back(to_string(v));
    return {
        {"command", command},
        {"paths",
         {{"records", records},
          {"response_embeddings", response_embeddings},
          {"problem_embeddings", problem_embeddings},
          {"out", out}}},
        {"seed", seed},
        {"filter",
         {{"require_skill_code", filter.require_skill_code},
          {"require_alphabetic", filter.require_alphabetic},
          {"min_words", filter.min_words},
          {"drop_image_only", filter.drop_image_only},
          {"teacher_variance", filter.teacher_variance},
          {"image_markers", filter.image_markers}}},
        {"pipeline",
         {{"test_fraction", pipeline.test_fraction},
          {"path_count", pipeline.path_count},
          {"path_ratio", pipeline.path_ratio},
          {"cv_folds", pipeline.cv_folds},
          {"cv_scheme", lasso::to_string(pipeline.cv_scheme)},
          {"tol", pipeline.tol},
          {"max_iter", pipeline.max_iter},
          {"bootstrap_B", pipeline.bootstrap_B},
          {"level", pipeline.level},
          {"centroid_mode", pipeline.centroid_mode == CentroidMode::per_problem ? "per_problem" : "global"},
          {"reset_priors_at_split", pipeline.reset_priors_at_split},
          {"variants", vs}}},
        {"deconfound",
         {{"teacher_prior", deconfound.teacher_prior},
          {"student_prior", deconfound.student_prior},
          {"problem_group_mean", deconfound.problem_group_mean},
          {"teacher_indicators", deconfound.teacher_indicators},
          {"adjust", deconfound.adjust == AdjustTarget::features ? "features" : "target"},
          {"ridge_jitter", deconfound.ridge_jitter}}},
        {"variant", variant},
        {"sample", sample},
        {"central_fraction", central_fraction},
        {"case_format", case_format},
        {"synth", synth.to_json()},
    };
  }

  // Keys absent from `j` keep their current values.
  static RunConfig from_json(const nlohmann::json& j) { return from_json(j, RunConfig{}); }

  static RunConfig from_json(const nlohmann::json& j, RunConfig c) {
    auto get = [](const nlohmann::json& obj, const char* key, auto& field) {
      if (obj.contains(key)) obj.at(key).get_to(field);
    };
    if (j.contains("paths")) {
      const auto& p = j["paths"];
      get(p, "records", c.records);
      get(p, "response_embeddings", c.response_embeddings);
      get(p, "problem_embeddings", c.problem_embeddings);
      get(p, "out", c.out);
    }
    get(j, "seed", c.seed);
    if (j.contains("filter")) {
      const auto& f = j["filter"];
      get(f, "require_skill_code", c.filter.require_skill_code);
      get(f, "require_alphabetic", c.filter.require_alphabetic);
      get(f, "min_words", c.filter.min_words);
      get(f, "drop_image_only", c.filter.drop_image_only);
      get(f, "teacher_variance", c.filter.teacher_variance);
      get(f, "image_markers", c.filter.image_markers);
    }
    if (j.contains("pipeline")) {
      const auto& p = j["pipeline"];
      get(p, "test_fraction", c.pipeline.test_fraction);
      get(p, "path_count", c.pipeline.path_count);
      get(p, "path_ratio", c.pipeline.path_ratio);
      get(p, "cv_folds", c.pipeline.cv_folds);
      if (p.contains("cv_scheme")) c.pipeline.cv_scheme = lasso::parse_cv_scheme(p["cv_scheme"].get<std::string>());
      get(p, "tol", c.pipeline.tol);
      get(p, "max_iter", c.pipeline.max_iter);
      get(p, "bootstrap_B", c.pipeline.bootstrap_B);
      get(p, "level", c.pipeline.level);
      if (p.contains("centroid_mode")) {
        const auto m = p["centroid_mode"].get<std::string>();
        if (m != "per_problem" && m != "global") throw ArgumentError("unknown centroid_mode '" + m + "'");
        c.pipeline.centroid_mode = m == "global" ? CentroidMode::global : CentroidMode::per_problem;
      }
      get(p, "reset_priors_at_split", c.pipeline.reset_priors_at_split);
      get(p, "variants", c.variants);
    }
    if (j.contains("deconfound")) {
      const auto& d = j["deconfound"];
      get(d, "teacher_prior", c.deconfound.teacher_prior);
      get(d, "student_prior", c.deconfound.student_prior);
      get(d, "problem_group_mean", c.deconfound.problem_group_mean);
      get(d, "teacher_indicators", c.deconfound.teacher_indicators);
      if (d.contains("adjust")) {
        const auto a = d["adjust"].get<std::string>();
        if (a != "features" && a != "target") throw ArgumentError("unknown adjust '" + a + "'");
        c.deconfound.adjust = a == "target" ? AdjustTarget::target : AdjustTarget::features;
      }
      get(d, "ridge_jitter", c.deconfound.ridge_jitter);
    }
    get(j, "variant", c.variant);
    get(j, "sample", c.sample);
    get(j, "central_fraction", c.central_fraction);
    get(j, "case_format", c.case_format);
    if (j.contains("synth")) {
      const auto& s = j["synth"];
      get(s, "n_teachers", c.synth.n_teachers);
      get(s, "n_students", c.synth.n_students);
      get(s, "n_problems", c.synth.n_problems);
      get(s, "n_responses", c.synth.n_responses);
      get(s, "dim", c.synth.dim);
      get(s, "k_signal_dims", c.synth.k_signal_dims);
      get(s, "beta_content", c.synth.beta_content);
      get(s, "sigma_teacher", c.synth.sigma_teacher);
      get(s, "sigma_student", c.synth.sigma_student);
      get(s, "sigma_noise", c.synth.sigma_noise);
      get(s, "confound_loading", c.synth.confound_loading);
    }
    return c;
  }
};

}  // namespace scorelens
