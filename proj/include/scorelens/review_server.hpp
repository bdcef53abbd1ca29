#pragma once

// HTTP front end for ReviewStore.
//
//   GET  /api/health
//   GET  /api/cases?pattern=&stratum=&uncoded_by=&offset=&limit=
//   GET  /api/cases/{id}
//   POST /api/cases/{id}/codes      {"coder_id", "code", "note"}
//   GET  /api/export/codes.csv
//   GET  /                           static review UI bundle, when configured

#include <charconv>
#include <string>

#include "json.hpp"

#include "httplib.h"
#include "scorelens/review.hpp"

namespace scorelens::review {

class ReviewServer {
 public:
  explicit ReviewServer(ReviewStore& store, std::string static_dir = {}) : store_(store) {
    if (!static_dir.empty()) server_.set_mount_point("/", static_dir);
    routes();
  }

  // Binds to an ephemeral port on `host` and returns it; serve with listen_after_bind().
  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  static void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class Handler>
  auto guarded(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const RequestError& e) {
        send_json(res, {{"error", e.what()}}, e.status());
      } catch (const nlohmann::json::exception& e) {
        send_json(res, {{"error", std::string("bad request body: ") + e.what()}}, 400);
      } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
      }
    };
  }

  static std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    std::size_t n = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (v.empty() || ec != std::errc{} || end != v.data() + v.size()) {
      throw RequestError(400, std::string("bad ") + name);
    }
    return n;
  }

  static std::optional<std::string> opt_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    auto v = req.get_param_value(name);
    if (v.empty()) return std::nullopt;
    return v;
  }

  void routes() {
    server_.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
                  send_json(res, {{"status", "ok"}, {"cases", store_.case_count()}});
                }));

    server_.Get("/api/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  CaseQuery q;
                  q.pattern = opt_param(req, "pattern");
                  q.stratum = opt_param(req, "stratum");
                  q.uncoded_by = opt_param(req, "uncoded_by");
                  q.offset = size_param(req, "offset", 0);
                  q.limit = size_param(req, "limit", 50);
                  const auto page = store_.list_cases(q);
                  nlohmann::json items = nlohmann::json::array();
                  for (const auto& c : page.items) items.push_back(case_json_with_codes(store_, c));
                  send_json(res, {{"items", items},
                                  {"total", page.total},
                                  {"offset", page.offset},
                                  {"limit", page.limit},
                                  {"pattern_order", kPatternModels}});
                }));

    server_.Get(R"(/api/cases/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  const auto& c = store_.get_case(req.matches[1]);
                  send_json(res, case_json_with_codes(store_, c));
                }));

    server_.Post(R"(/api/cases/([^/]+)/codes)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = nlohmann::json::parse(req.body);
                   if (!body.is_object()) throw RequestError(400, "expected a JSON object");
                   auto str = [&](const char* key) -> std::string {
                     if (!body.contains(key) || !body[key].is_string()) {
                       throw RequestError(400, std::string(key) + " must be a string");
                     }
                     return body[key].get<std::string>();
                   };
                   std::optional<std::string> note;
                   if (body.contains("note") && !body["note"].is_null()) note = str("note");
                   const auto coded = store_.submit_code(req.matches[1], str("coder_id"), str("code"), note);
                   send_json(res, coded.to_json(), 201);
                 }));

    server_.Get("/api/export/codes.csv", guarded([this](const httplib::Request&, httplib::Response& res) {
                  res.set_content(store_.export_codes(), "text/csv");
                }));
  }

  ReviewStore& store_;
  httplib::Server server_;
};

}  // namespace scorelens::review
