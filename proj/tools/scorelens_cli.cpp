// scorelens command-line tool.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "httplib.h"
#include "scorelens/review_server.hpp"
#include "scorelens/scorelens.hpp"

namespace fs = std::filesystem;
using namespace scorelens;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  if (path.empty()) throw DataError("missing input path");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

bool has_extension(const std::string& path, std::initializer_list<const char*> exts) {
  const auto ext = fs::path(path).extension().string();
  for (const char* e : exts) {
    if (ext == e) return true;
  }
  return false;
}

std::vector<ResponseRecord> load_records(const std::string& path) {
  const auto fmt = has_extension(path, {".csv"}) ? RecordFormat::csv : RecordFormat::jsonl;
  try {
    return parse_records(read_file(path), fmt);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

EmbeddingFormat embedding_format(const std::string& path) {
  return has_extension(path, {".bin", ".emb"}) ? EmbeddingFormat::packed : EmbeddingFormat::jsonl;
}

EmbeddingStore load_embeddings(const std::string& path) {
  try {
    return load_store(read_file(path), embedding_format(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ArgumentError(std::string(flag) + " is required");
}

struct Inputs {
  std::vector<ResponseRecord> records;
  EmbeddingStore responses;
  EmbeddingStore problems;
};

Inputs load_inputs(const RunConfig& c) {
  require(c.records, "--records");
  require(c.response_embeddings, "--resp-emb");
  require(c.problem_embeddings, "--prob-emb");
  return {load_records(c.records), load_embeddings(c.response_embeddings), load_embeddings(c.problem_embeddings)};
}

void finish(const RunConfig& c, const std::string& summary) {
  write_json(fs::path(c.out) / "runconfig.json", c.to_json());
  std::cout << summary << "\n";
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& c) {
  require(c.records, "--records");
  require(c.out, "--out");
  const auto records = load_records(c.records);
  const auto [kept, report] = apply_filters(records, c.filter);
  write_file(fs::path(c.out) / "records.jsonl", write_records_jsonl(kept));
  write_json(fs::path(c.out) / "filter_report.json", report.to_json());
  finish(c, "ingest: kept " + std::to_string(kept.size()) + " of " + std::to_string(records.size()) + " records");
  return 0;
}

// Splits "http://host:port/path" into the client base and the request path.
std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

int cmd_embed(const RunConfig& c, std::string endpoint, std::size_t batch) {
  require(c.records, "--records");
  require(c.out, "--out");
  if (endpoint.empty()) {
    if (const char* env = std::getenv("EMBED_ENDPOINT")) endpoint = env;
  }
  if (endpoint.empty()) throw ArgumentError("no embedding endpoint: pass --endpoint or set EMBED_ENDPOINT");
  if (batch == 0) throw ArgumentError("--batch must be positive");
  const auto records = load_records(c.records);
  const auto [base, path] = split_endpoint(endpoint);
  httplib::Client client(base);
  client.set_read_timeout(300, 0);

  EmbeddingStore store;
  bool have_dim = false;
  for (std::size_t start = 0; start < records.size(); start += batch) {
    const auto end = std::min(records.size(), start + batch);
    json texts = json::array();
    for (auto i = start; i < end; ++i) texts.push_back(records[i].text);
    auto res = client.Post(path, json{{"texts", texts}}.dump(), "application/json");
    if (!res) throw DataError("embedding request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw DataError("embedding endpoint returned HTTP " + std::to_string(res->status));
    const auto body = json::parse(res->body);
    const auto& vectors = body.at("vectors");
    if (vectors.size() != end - start) throw DataError("embedding endpoint returned a wrong number of vectors");
    for (auto i = start; i < end; ++i) {
      auto values = vectors[i - start].get<std::vector<float>>();
      if (!have_dim) {
        store = EmbeddingStore(values.size());
        have_dim = true;
      }
      store.add({records[i].response_id, std::move(values)});
    }
  }
  write_file(fs::path(c.out) / "response_embeddings.jsonl", save_store(store, EmbeddingFormat::jsonl));
  finish(c, "embed: " + std::to_string(store.size()) + " vectors of dim " + std::to_string(store.dim()));
  return 0;
}

int cmd_featurize(const RunConfig& c) {
  require(c.out, "--out");
  const auto in = load_inputs(c);
  const auto d = prepare(in.records, in.responses, in.problems, c.pipeline);
  const auto variant = parse_variant(c.variant);
  const auto train = assemble(variant, d.train, d.inputs());
  const auto test = assemble(variant, d.test, d.inputs());
  const fs::path out(c.out);
  write_file(out / ("features_" + c.variant + "_train.csv"), feature_csv(train));
  write_file(out / ("features_" + c.variant + "_test.csv"), feature_csv(test));
  write_json(out / ("features_" + c.variant + ".json"), feature_sidecar(train, variant));
  std::vector<ResponseRecord> all = d.train;
  all.insert(all.end(), d.test.begin(), d.test.end());
  write_file(out / "priors.csv", priors_csv(all, d.teacher_priors, d.student_priors));
  finish(c, "featurize: " + c.variant + " with " + std::to_string(train.columns.size()) + " columns, " +
                std::to_string(train.row_ids.size()) + " train / " + std::to_string(test.row_ids.size()) +
                " test rows");
  return 0;
}

int cmd_train(const RunConfig& c) {
  require(c.out, "--out");
  const auto in = load_inputs(c);
  const auto d = prepare(in.records, in.responses, in.problems, c.pipeline);
  const auto variant = parse_variant(c.variant);
  const auto tv = train_variant(d, variant, c.pipeline);
  json cols = json::array();
  for (const auto& col : tv.columns) cols.push_back({{"name", col.name}, {"group", lasso::to_string(col.group)}});
  json model = {{"variant", c.variant},
                {"columns", cols},
                {"fit", tv.fit.to_json()},
                {"cv",
                 {{"scheme", lasso::to_string(c.pipeline.cv_scheme)},
                  {"folds", c.pipeline.cv_folds},
                  {"best_lambda", tv.cv.best_lambda},
                  {"best_index", tv.cv.best_index},
                  {"per_lambda_mse", tv.cv.per_lambda_mse}}}};
  write_json(fs::path(c.out) / ("model_" + c.variant + ".json"), model);
  finish(c, "train: " + c.variant + " lambda " + format_double(tv.fit.lambda) + ", " +
                std::to_string(lasso::nonzero_count(tv.fit)) + " nonzero coefficients");
  return 0;
}

int cmd_evaluate(const RunConfig& c) {
  require(c.out, "--out");
  const auto in = load_inputs(c);
  const auto d = prepare(in.records, in.responses, in.problems, c.pipeline);
  std::vector<EvalReport> reports;
  json failures = json::array();
  for (auto v : c.pipeline.variants) {
    try {
      reports.push_back(evaluate_variant(d, train_variant(d, v, c.pipeline), c.pipeline));
    } catch (const std::exception& e) {
      failures.push_back({{"variant", to_string(v)}, {"error", e.what()}});
      std::cerr << "evaluate: " << to_string(v) << " failed: " << e.what() << "\n";
    }
  }
  sort_reports(reports);
  const fs::path out(c.out);
  write_json(out / "report.json", reports_json(reports));
  write_file(out / "report.md", reports_markdown(reports));
  if (!failures.empty()) write_json(out / "failures.json", failures);
  std::string summary = "evaluate: " + std::to_string(reports.size()) + " variants on " +
                        std::to_string(d.test.size()) + " test rows";
  if (!reports.empty() && reports.front().auc) {
    summary += ", best " + std::string(to_string(reports.front().variant)) + " AUC " +
               format_fixed(*reports.front().auc, 3);
  }
  finish(c, summary);
  return failures.empty() ? 0 : 3;
}

int cmd_audit(const RunConfig& c) {
  require(c.out, "--out");
  const auto in = load_inputs(c);
  const auto d = prepare(in.records, in.responses, in.problems, c.pipeline);
  const auto audit = sparsity_audit(d, c.pipeline, c.deconfound);
  const fs::path out(c.out);
  write_json(out / "audit.json", audit.to_json());
  write_file(out / "audit.md", audit.to_markdown());
  finish(c, "audit: " + std::to_string(audit.nonzero_unadjusted) + " -> " + std::to_string(audit.nonzero_adjusted) +
                " of " + std::to_string(audit.total_embed_columns) + " embedding coefficients nonzero");
  return 0;
}

int cmd_disagreements(const RunConfig& c) {
  require(c.out, "--out");
  const auto in = load_inputs(c);
  const auto d = prepare(in.records, in.responses, in.problems, c.pipeline);
  std::array<std::vector<double>, 3> preds;
  for (std::size_t m = 0; m < 3; ++m) {
    preds[m] = train_variant(d, parse_variant(kPatternModels[m]), c.pipeline).test_predictions;
  }
  const std::array<std::span<const double>, 3> views{preds[0], preds[1], preds[2]};
  const auto search = find_divergence_threshold(views);
  const auto collection = collect_cases(d.test, views, search.threshold, d.test_labels, in.responses);
  const auto sample = sample_for_coding(collection.cases, c.sample, c.central_fraction, c.seed);

  const auto fmt = c.case_format == "jsonl" ? CaseFormat::jsonl : CaseFormat::csv;
  const std::string ext = c.case_format;
  const fs::path out(c.out);
  auto counts = pattern_counts_json(collection, search);
  counts["sample_size"] = sample.cases.size();
  counts["sample_exhaustive"] = sample.exhaustive;
  write_json(out / "pattern_counts.json", counts);
  write_file(out / ("cases." + ext), export_cases(collection.cases, fmt));
  write_file(out / ("coding_sample." + ext), export_cases(sample.cases, fmt));
  finish(c, "disagreements: threshold " + format_double(search.threshold) + ", " +
                std::to_string(collection.cases.size()) + " non-unanimous cases, " +
                std::to_string(sample.cases.size()) + " sampled");
  return 0;
}

int cmd_synth(const RunConfig& c) {
  require(c.out, "--out");
  const auto data = generate(c.synth);
  const fs::path out(c.out);
  write_file(out / "records.jsonl", write_records_jsonl(data.records));
  write_file(out / "response_embeddings.jsonl", save_store(data.responses, EmbeddingFormat::jsonl));
  write_file(out / "problem_embeddings.jsonl", save_store(data.problems, EmbeddingFormat::jsonl));
  write_json(out / "ground_truth.json", data.truth.to_json(c.synth));
  finish(c, "synth: " + std::to_string(data.records.size()) + " records, dim " + std::to_string(c.synth.dim));
  return 0;
}

review::ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const std::string& cases_path, const std::string& log_path, const std::string& host, int port,
              const std::string& static_dir) {
  require(cases_path, "--cases");
  const auto fmt = has_extension(cases_path, {".jsonl"}) ? CaseFormat::jsonl : CaseFormat::csv;
  review::ReviewStore store(import_cases(read_file(cases_path), fmt), log_path);
  review::ReviewServer server(store, static_dir);
  int bound = port;
  if (port == 0) {
    bound = server.bind_any(host);
    if (bound < 0) throw std::runtime_error("cannot bind " + host);
  } else if (!server.bind(host, port)) {
    throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serve: " << store.case_count() << " cases on http://" << host << ":" << bound << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

// ---------------------------------------------------------------------------
// Flag wiring
// ---------------------------------------------------------------------------

void add_inputs(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--records", c.records, "Response records (.jsonl or .csv)");
  cmd->add_option("--resp-emb", c.response_embeddings, "Response embeddings (.jsonl or packed .bin)");
  cmd->add_option("--prob-emb", c.problem_embeddings, "Problem embeddings (.jsonl or packed .bin)");
}

// Read ahead of parsing by initial_config; registered so CLI11 accepts it.
std::string g_config_path;

void add_common(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--config", g_config_path, "runconfig.json supplying defaults");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--seed", c.seed, "Seed for all randomness")->capture_default_str();
}

void add_pipeline(CLI::App* cmd, RunConfig& c) {
  auto& p = c.pipeline;
  cmd->add_option("--test-fraction", p.test_fraction, "Held-out fraction (latest records)")->capture_default_str();
  cmd->add_option("--path-count", p.path_count, "Lambda path length")->capture_default_str();
  cmd->add_option("--path-ratio", p.path_ratio, "Smallest lambda as a fraction of lambda_max")->capture_default_str();
  cmd->add_option("--cv-folds", p.cv_folds, "Cross-validation folds")->capture_default_str();
  cmd->add_option_function<std::string>(
         "--cv-scheme", [&p](const std::string& s) { p.cv_scheme = lasso::parse_cv_scheme(s); },
         "forward_chain or contiguous_kfold")
      ->default_str(lasso::to_string(p.cv_scheme));
  cmd->add_option("--tol", p.tol, "Coordinate descent tolerance")->capture_default_str();
  cmd->add_option("--max-iter", p.max_iter, "Coordinate descent sweep limit")->capture_default_str();
  cmd->add_option("--bootstrap", p.bootstrap_B, "Bootstrap resamples (0 disables intervals)")->capture_default_str();
  cmd->add_option("--level", p.level, "Confidence level")->capture_default_str();
  cmd->add_option_function<std::string>(
         "--centroid-mode",
         [&p](const std::string& s) {
           if (s != "per_problem" && s != "global") throw CLI::ValidationError("--centroid-mode", s);
           p.centroid_mode = s == "global" ? CentroidMode::global : CentroidMode::per_problem;
         },
         "per_problem or global")
      ->default_str("per_problem");
  cmd->add_flag("--reset-priors", p.reset_priors_at_split, "Restart prior history at the split");
}

void add_filters(CLI::App* cmd, RunConfig& c) {
  auto& f = c.filter;
  cmd->add_option("--min-words", f.min_words, "Minimum word count")->capture_default_str();
  cmd->add_flag("--keep-missing-skill{false}", f.require_skill_code, "Keep records without a skill code");
  cmd->add_flag("--keep-non-alphabetic{false}", f.require_alphabetic, "Keep records without letters");
  cmd->add_flag("--keep-image-only{false}", f.drop_image_only, "Keep image-only records");
  cmd->add_flag("--keep-flat-teachers{false}", f.teacher_variance, "Keep teachers whose scores never vary");
  cmd->add_option("--image-marker", f.image_markers, "Image placeholder regex (repeatable)");
}

void add_deconfound(CLI::App* cmd, RunConfig& c) {
  auto& d = c.deconfound;
  cmd->add_flag("--no-teacher-prior{false}", d.teacher_prior, "Drop the teacher prior confounder");
  cmd->add_flag("--student-prior", d.student_prior, "Add the student prior confounder");
  cmd->add_flag("--no-problem-mean{false}", d.problem_group_mean, "Drop the problem mean confounder");
  cmd->add_flag("--teacher-indicators", d.teacher_indicators, "Add one-hot teacher confounders");
  cmd->add_option_function<std::string>(
         "--adjust",
         [&d](const std::string& s) {
           if (s != "features" && s != "target") throw CLI::ValidationError("--adjust", s);
           d.adjust = s == "target" ? AdjustTarget::target : AdjustTarget::features;
         },
         "features or target")
      ->default_str("features");
  cmd->add_option("--ridge-jitter", d.ridge_jitter, "Diagonal jitter for the confounder solve")->capture_default_str();
}

void add_synth(CLI::App* cmd, RunConfig& c) {
  auto& s = c.synth;
  cmd->add_option("--n-teachers", s.n_teachers)->capture_default_str();
  cmd->add_option("--n-students", s.n_students)->capture_default_str();
  cmd->add_option("--n-problems", s.n_problems)->capture_default_str();
  cmd->add_option("--n-responses", s.n_responses)->capture_default_str();
  cmd->add_option("--dim", s.dim)->capture_default_str();
  cmd->add_option("--k-signal", s.k_signal_dims, "Number of content-bearing coordinates")->capture_default_str();
  cmd->add_option("--beta-content", s.beta_content)->capture_default_str();
  cmd->add_option("--sigma-teacher", s.sigma_teacher)->capture_default_str();
  cmd->add_option("--sigma-student", s.sigma_student)->capture_default_str();
  cmd->add_option("--sigma-noise", s.sigma_noise)->capture_default_str();
  cmd->add_option("--confound-loading", s.confound_loading)->capture_default_str();
}

// Finds --config before parsing so the file supplies defaults that explicit
// flags then override.
RunConfig initial_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    std::string path;
    if (a == "--config" && i + 1 < argc) path = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
    if (!path.empty()) return RunConfig::from_json(json::parse(read_file(path)));
  }
  return {};
}

}  // namespace

int main(int argc, char** argv) {
  try {
    RunConfig c = initial_config(argc, argv);
    CLI::App app{"scorelens: rater-effect analysis for graded open responses"};
    app.require_subcommand(1);
    app.add_option("--config", g_config_path, "runconfig.json supplying defaults");

    auto* ingest = app.add_subcommand("ingest", "Validate and filter response records");
    ingest->add_option("--records", c.records, "Response records (.jsonl or .csv)");
    add_common(ingest, c);
    add_filters(ingest, c);

    std::string endpoint;
    std::size_t batch = 64;
    auto* embed = app.add_subcommand("embed", "Fetch response embeddings from an HTTP endpoint");
    embed->add_option("--records", c.records, "Response records (.jsonl or .csv)");
    embed->add_option("--endpoint", endpoint, "Embedding endpoint URL (default: $EMBED_ENDPOINT)");
    embed->add_option("--batch", batch, "Texts per request")->capture_default_str();
    add_common(embed, c);

    auto* featurize = app.add_subcommand("featurize", "Write the feature matrix of one variant");
    auto* train = app.add_subcommand("train", "Fit one variant and write its model");
    for (auto* cmd : {featurize, train}) {
      add_inputs(cmd, c);
      add_common(cmd, c);
      add_pipeline(cmd, c);
      cmd->add_option("--variant", c.variant, "Model variant")->capture_default_str();
    }

    auto* evaluate = app.add_subcommand("evaluate", "Benchmark all variants on the temporal test split");
    add_inputs(evaluate, c);
    add_common(evaluate, c);
    add_pipeline(evaluate, c);
    evaluate->add_option("--variants", c.variants, "Restrict to these variants")->delimiter(',');

    auto* audit = app.add_subcommand("audit", "Compare embedding sparsity before and after deconfounding");
    add_inputs(audit, c);
    add_common(audit, c);
    add_pipeline(audit, c);
    add_deconfound(audit, c);

    auto* disagreements = app.add_subcommand("disagreements", "Find and sample cross-model disagreements");
    add_inputs(disagreements, c);
    add_common(disagreements, c);
    add_pipeline(disagreements, c);
    disagreements->add_option("--sample", c.sample, "Coding sample size")->capture_default_str();
    disagreements->add_option("--central-fraction", c.central_fraction, "Share drawn from the central stratum")
        ->capture_default_str();
    disagreements->add_option("--case-format", c.case_format, "csv or jsonl")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with known effects");
    add_common(synth, c);
    add_synth(synth, c);

    std::string cases_path, log_path, host = "127.0.0.1", static_dir;
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Run the case review service");
    serve->add_option("--cases", cases_path, "Exported cases (.csv or .jsonl)");
    serve->add_option("--log", log_path, "Append-only code log (JSONL)");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
    serve->add_option("--static-dir", static_dir, "Directory of the review UI bundle");

    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      return app.exit(e) == 0 ? 0 : 1;
    }

    c.command = app.get_subcommands().front()->get_name();
    c.resolve();
    if (*ingest) return cmd_ingest(c);
    if (*embed) return cmd_embed(c, endpoint, batch);
    if (*featurize) return cmd_featurize(c);
    if (*train) return cmd_train(c);
    if (*evaluate) return cmd_evaluate(c);
    if (*audit) return cmd_audit(c);
    if (*disagreements) return cmd_disagreements(c);
    if (*synth) return cmd_synth(c);
    if (*serve) return cmd_serve(cases_path, log_path, host, port, static_dir);
    return 1;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
}
