#pragma once

// Human coding of sampled disagreement cases: an in-memory case set loaded
// from an export, plus an append-only JSONL log of submitted codes. The latest
// submission per (response_id, coder_id) is the live code.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/csv.hpp"
#include "scorelens/disagree.hpp"

namespace scorelens::review {

enum class Code { conceptual, procedural, unclassifiable };

inline constexpr std::array<Code, 3> kCodes = {Code::conceptual, Code::procedural, Code::unclassifiable};

inline const char* to_string(Code c) {
  switch (c) {
    case Code::conceptual: return "conceptual";
    case Code::procedural: return "procedural";
    case Code::unclassifiable: return "unclassifiable";
  }
  return "?";
}

inline std::optional<Code> parse_code(std::string_view s) {
  for (auto c : kCodes) {
    if (s == to_string(c)) return c;
  }
  return std::nullopt;
}

struct CodedCase {
  std::string response_id;
  std::string coder_id;
  Code code = Code::unclassifiable;
  std::optional<std::string> note;
  std::int64_t coded_at = 0;

  nlohmann::json to_json() const {
    return {{"response_id", response_id},
            {"coder_id", coder_id},
            {"code", to_string(code)},
            {"note", note ? nlohmann::json(*note) : nlohmann::json(nullptr)},
            {"coded_at", coded_at}};
  }

  static CodedCase from_json(const nlohmann::json& j) {
    CodedCase c;
    c.response_id = j.at("response_id").get<std::string>();
    c.coder_id = j.at("coder_id").get<std::string>();
    const auto code = parse_code(j.at("code").get<std::string>());
    if (!code) throw DataError("code log: invalid code for '" + c.response_id + "'");
    c.code = *code;
    if (j.contains("note") && !j["note"].is_null()) c.note = j["note"].get<std::string>();
    c.coded_at = j.at("coded_at").get<std::int64_t>();
    return c;
  }
};

// Client errors carry the HTTP status the service should answer with.
class RequestError : public std::runtime_error {
 public:
  RequestError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct CaseQuery {
  std::optional<std::string> pattern;
  std::optional<std::string> stratum;
  std::optional<std::string> uncoded_by;
  std::size_t offset = 0;
  std::size_t limit = 50;
};

struct CasePage {
  std::vector<DisagreementCase> items;
  std::size_t total = 0;  // matches before pagination
  std::size_t offset = 0;
  std::size_t limit = 0;
};

inline std::int64_t system_clock_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class ReviewStore {
 public:
  using Clock = std::function<std::int64_t()>;

  // An empty `log_path` keeps codes in memory only. An existing log is
  // replayed so a restarted service resumes with identical state.
  ReviewStore(std::vector<DisagreementCase> cases, std::string log_path = {}, Clock clock = system_clock_seconds)
      : cases_(std::move(cases)), log_path_(std::move(log_path)), clock_(std::move(clock)) {
    sort_cases(cases_);
    for (std::size_t i = 0; i < cases_.size(); ++i) {
      if (!index_.emplace(cases_[i].response_id, i).second) {
        throw DataError("review: duplicate case '" + cases_[i].response_id + "'");
      }
    }
    if (!log_path_.empty()) replay();
  }

  std::size_t case_count() const noexcept { return cases_.size(); }

  CasePage list_cases(const CaseQuery& q) const {
    std::optional<Pattern> pattern;
    std::optional<Stratum> stratum;
    try {
      if (q.pattern) pattern = parse_pattern(*q.pattern);
      if (q.stratum) stratum = parse_stratum(*q.stratum);
    } catch (const DataError& e) {
      throw RequestError(400, e.what());
    }
    if (pattern && is_unanimous(*pattern)) throw RequestError(400, "unanimous pattern '" + *q.pattern + "'");

    std::shared_lock lock(mutex_);
    CasePage page;
    page.offset = q.offset;
    page.limit = q.limit;
    for (const auto& c : cases_) {
      if (pattern && c.pattern != *pattern) continue;
      if (stratum && c.stratum != *stratum) continue;
      if (q.uncoded_by && live_.contains({c.response_id, *q.uncoded_by})) continue;
      if (page.total >= q.offset && page.items.size() < q.limit) page.items.push_back(c);
      ++page.total;
    }
    return page;
  }

  const DisagreementCase& get_case(const std::string& response_id) const {
    auto it = index_.find(response_id);
    if (it == index_.end()) throw RequestError(404, "unknown case '" + response_id + "'");
    return cases_[it->second];
  }

  // Live codes for one case, ordered by coder.
  std::vector<CodedCase> codes_for(const std::string& response_id) const {
    std::shared_lock lock(mutex_);
    std::vector<CodedCase> out;
    for (auto it = live_.lower_bound({response_id, ""}); it != live_.end() && it->first.first == response_id; ++it) {
      out.push_back(it->second);
    }
    return out;
  }

  CodedCase submit_code(const std::string& response_id, const std::string& coder_id, const std::string& code,
                        std::optional<std::string> note) {
    if (!index_.contains(response_id)) throw RequestError(404, "unknown case '" + response_id + "'");
    if (coder_id.empty()) throw RequestError(400, "coder_id is required");
    const auto parsed = parse_code(code);
    if (!parsed) throw RequestError(400, "invalid code '" + code + "'");

    CodedCase c{response_id, coder_id, *parsed, std::move(note), clock_()};
    std::unique_lock lock(mutex_);
    if (!log_path_.empty()) {
      std::ofstream log(log_path_, std::ios::app | std::ios::binary);
      log << c.to_json().dump() << '\n';
      log.flush();
      if (!log) throw std::runtime_error("review: failed to append to " + log_path_);
    }
    live_[{response_id, coder_id}] = c;
    return c;
  }

  // Live codes, a pattern-by-code contingency block over every loaded
  // pattern, and raw pairwise inter-coder agreement.
  std::string export_codes() const {
    std::shared_lock lock(mutex_);
    std::string out;
    csv::append_row(out, {"response_id", "coder_id", "code", "note", "coded_at", "pattern"});
    std::map<Pattern, std::array<std::size_t, 3>> table;
    for (const auto& c : cases_) table[c.pattern];
    for (const auto& [key, c] : live_) {
      const auto& kase = cases_[index_.at(c.response_id)];
      csv::append_row(out, {c.response_id, c.coder_id, to_string(c.code), c.note.value_or(""),
                            std::to_string(c.coded_at), pattern_text(kase.pattern)});
      ++table[kase.pattern][static_cast<std::size_t>(c.code)];
    }
    out += "\n";
    csv::append_row(out, {"pattern", "conceptual", "procedural", "unclassifiable"});
    for (const auto& [p, counts] : table) {
      csv::append_row(out, {pattern_text(p), std::to_string(counts[0]), std::to_string(counts[1]),
                            std::to_string(counts[2])});
    }
    const auto [pairs, agreed] = agreement_counts();
    out += "\n";
    csv::append_row(out, {"coder_pairs", "agreed", "raw_agreement"});
    csv::append_row(out, {std::to_string(pairs), std::to_string(agreed),
                          pairs ? format_double(static_cast<double>(agreed) / static_cast<double>(pairs)) : "NA"});
    return out;
  }

  // (pairs, agreeing pairs) over all coder pairs that coded the same case.
  std::pair<std::size_t, std::size_t> agreement_counts() const {
    std::map<std::string, std::vector<Code>> per_case;
    for (const auto& [key, c] : live_) per_case[c.response_id].push_back(c.code);
    std::size_t pairs = 0, agreed = 0;
    for (const auto& [id, codes] : per_case) {
      for (std::size_t a = 0; a < codes.size(); ++a) {
        for (std::size_t b = a + 1; b < codes.size(); ++b) {
          ++pairs;
          agreed += codes[a] == codes[b];
        }
      }
    }
    return {pairs, agreed};
  }

 private:
  void replay() {
    std::ifstream in(log_path_, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      CodedCase c;
      try {
        c = CodedCase::from_json(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        // A torn final line from a crash mid-append is dropped.
        if (in.peek() == std::char_traits<char>::eof()) break;
        throw DataError("code log line " + std::to_string(n) + ": " + e.what());
      }
      if (!index_.contains(c.response_id)) {
        throw DataError("code log line " + std::to_string(n) + ": unknown case '" + c.response_id + "'");
      }
      live_[{c.response_id, c.coder_id}] = c;
    }
  }

  std::vector<DisagreementCase> cases_;
  std::map<std::string, std::size_t> index_;
  std::string log_path_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  std::map<std::pair<std::string, std::string>, CodedCase> live_;
};

inline nlohmann::json case_json_with_codes(const ReviewStore& store, const DisagreementCase& c) {
  auto j = case_to_json(c);
  j["pattern_labels"] = {{kPatternModels[0], c.pattern[0]},
                         {kPatternModels[1], c.pattern[1]},
                         {kPatternModels[2], c.pattern[2]}};
  nlohmann::json codes = nlohmann::json::array();
  for (const auto& code : store.codes_for(c.response_id)) codes.push_back(code.to_json());
  j["codes"] = codes;
  return j;
}

}  // namespace scorelens::review
