#pragma once

// Response records: parsing from JSONL/CSV and the filter cascade that turns a
// raw export into the modeling corpus.

#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"
#include "scorelens/csv.hpp"

namespace scorelens {

struct ResponseRecord {
  std::string response_id;
  std::string student_id;
  std::string teacher_id;
  std::string problem_id;
  std::optional<std::string> skill_code;
  std::int64_t timestamp = 0;
  std::string text;
  std::optional<int> raw_score;
  std::optional<double> normalized_score;

  bool operator==(const ResponseRecord&) const = default;
};

enum class RecordFormat { jsonl, csv };

inline const std::vector<std::string>& record_field_names() {
  static const std::vector<std::string> names = {"response_id", "student_id", "teacher_id", "problem_id",
                                                 "skill_code",  "timestamp",  "text",       "raw_score"};
  return names;
}

namespace detail {

[[noreturn]] inline void record_error(std::size_t line, std::string_view field, std::string_view what) {
  throw DataError("records line " + std::to_string(line) + ", field '" + std::string(field) + "': " +
                  std::string(what));
}

inline std::int64_t parse_int(std::string_view s, std::size_t line, std::string_view field) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(std::string(s), &pos);
  } catch (const std::exception&) {
    record_error(line, field, "not an integer");
  }
  if (pos != s.size()) record_error(line, field, "not an integer");
  return v;
}

inline void finish_record(ResponseRecord& r, std::size_t line) {
  if (r.response_id.empty()) record_error(line, "response_id", "missing or empty");
  if (r.timestamp < 0) record_error(line, "timestamp", "negative");
  if (r.raw_score) {
    if (*r.raw_score < 0 || *r.raw_score > 4) record_error(line, "raw_score", "outside 0..4");
    r.normalized_score = *r.raw_score / 4.0;
  }
}

inline ResponseRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) record_error(line, "<row>", "not a JSON object");
  ResponseRecord r;
  auto get_string = [&](const char* key, bool required) -> std::optional<std::string> {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
      if (required) record_error(line, key, "missing");
      return std::nullopt;
    }
    if (!it->is_string()) record_error(line, key, "expected string");
    return it->get<std::string>();
  };
  r.response_id = *get_string("response_id", true);
  r.student_id = *get_string("student_id", true);
  r.teacher_id = *get_string("teacher_id", true);
  r.problem_id = *get_string("problem_id", true);
  r.skill_code = get_string("skill_code", false);
  r.text = *get_string("text", true);

  auto ts = j.find("timestamp");
  if (ts == j.end() || !ts->is_number_integer()) record_error(line, "timestamp", "missing or not an integer");
  r.timestamp = ts->get<std::int64_t>();

  auto rs = j.find("raw_score");
  if (rs != j.end() && !rs->is_null()) {
    if (!rs->is_number_integer()) record_error(line, "raw_score", "expected integer");
    r.raw_score = rs->get<int>();
  }
  finish_record(r, line);
  return r;
}

}  // namespace detail

// Parses a records file. Duplicate response ids are rejected.
inline std::vector<ResponseRecord> parse_records(std::string_view source, RecordFormat format) {
  std::vector<ResponseRecord> out;
  std::unordered_set<std::string> seen;
  auto add = [&](ResponseRecord r, std::size_t line) {
    if (!seen.insert(r.response_id).second) {
      throw DataError("records line " + std::to_string(line) + ": duplicate response_id '" + r.response_id + "'");
    }
    out.push_back(std::move(r));
  };

  if (format == RecordFormat::jsonl) {
    std::size_t line = 0;
    std::size_t start = 0;
    while (start <= source.size()) {
      const auto nl = source.find('\n', start);
      auto text = source.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
      ++line;
      if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
      if (text.find_first_not_of(" \t") != std::string_view::npos) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
          detail::record_error(line, "<row>", e.what());
        }
        add(detail::record_from_json(j, line), line);
      }
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
    return out;
  }

  const auto rows = csv::parse(source);
  if (rows.empty()) return out;
  const auto& header = rows.front().fields;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const auto& name : record_field_names()) {
    if (!col.contains(name)) detail::record_error(1, name, "missing from CSV header");
  }
  for (std::size_t k = 1; k < rows.size(); ++k) {
    const auto& row = rows[k];
    if (row.fields.size() != header.size()) {
      detail::record_error(row.line, "<row>", "expected " + std::to_string(header.size()) + " fields, got " +
                                                  std::to_string(row.fields.size()));
    }
    auto field = [&](const char* name) -> const std::string& { return row.fields[col.at(name)]; };
    ResponseRecord r;
    r.response_id = field("response_id");
    r.student_id = field("student_id");
    r.teacher_id = field("teacher_id");
    r.problem_id = field("problem_id");
    if (!field("skill_code").empty()) r.skill_code = field("skill_code");
    r.timestamp = detail::parse_int(field("timestamp"), row.line, "timestamp");
    r.text = field("text");
    if (!field("raw_score").empty()) {
      r.raw_score = static_cast<int>(detail::parse_int(field("raw_score"), row.line, "raw_score"));
    }
    detail::finish_record(r, row.line);
    add(std::move(r), row.line);
  }
  return out;
}

inline nlohmann::json record_to_json(const ResponseRecord& r) {
  nlohmann::json j;
  j["response_id"] = r.response_id;
  j["student_id"] = r.student_id;
  j["teacher_id"] = r.teacher_id;
  j["problem_id"] = r.problem_id;
  j["skill_code"] = r.skill_code ? nlohmann::json(*r.skill_code) : nlohmann::json(nullptr);
  j["timestamp"] = r.timestamp;
  j["text"] = r.text;
  j["raw_score"] = r.raw_score ? nlohmann::json(*r.raw_score) : nlohmann::json(nullptr);
  return j;
}

inline std::string write_records_jsonl(const std::vector<ResponseRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out.push_back('\n');
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text predicates
// ---------------------------------------------------------------------------

namespace detail {

// Decodes one UTF-8 code point at `i`, advancing `i`. Invalid bytes decode as
// U+FFFD and consume one byte.
inline char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) len = 2, cp = b0 & 0x1F;
  else if ((b0 & 0xF0) == 0xE0) len = 3, cp = b0 & 0x0F;
  else if ((b0 & 0xF8) == 0xF0) len = 4, cp = b0 & 0x07;
  else {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    const int c = cont(static_cast<std::size_t>(k));
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += static_cast<std::size_t>(len);
  return cp;
}

// Letters: ASCII plus the Latin-1/Latin Extended, Greek and Cyrillic blocks.
inline bool is_letter(char32_t cp) {
  if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  if (cp >= 0xC0 && cp <= 0x24F) return cp != 0xD7 && cp != 0xF7;
  return (cp >= 0x370 && cp <= 0x3FF && cp != 0x37E && cp != 0x387) || (cp >= 0x400 && cp <= 0x4FF);
}

inline bool is_alnum(char32_t cp) { return (cp >= '0' && cp <= '9') || is_letter(cp); }

inline bool is_space(char32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v';
}

template <class Pred>
bool any_code_point(std::string_view s, Pred pred) {
  for (std::size_t i = 0; i < s.size();) {
    if (pred(next_code_point(s, i))) return true;
  }
  return false;
}

}  // namespace detail

// Number of whitespace-delimited tokens that contain at least one
// alphanumeric character.
inline std::size_t word_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  bool token_has_alnum = false;
  for (std::size_t i = 0; i < text.size();) {
    const char32_t cp = detail::next_code_point(text, i);
    if (detail::is_space(cp)) {
      if (in_token && token_has_alnum) ++count;
      in_token = false;
      token_has_alnum = false;
    } else {
      in_token = true;
      token_has_alnum = token_has_alnum || detail::is_alnum(cp);
    }
  }
  if (in_token && token_has_alnum) ++count;
  return count;
}

inline bool has_alphabetic(std::string_view text) { return detail::any_code_point(text, detail::is_letter); }

// ---------------------------------------------------------------------------
// Filter cascade
// ---------------------------------------------------------------------------

inline std::vector<std::string> default_image_markers() {
  return {R"(\[\s*(image|img|photo|picture|upload|uploaded image|attachment|drawing)[^\]]*\])",
          R"(<\s*img\b[^>]*>)"};
}

struct FilterConfig {
  bool require_skill_code = true;
  bool require_alphabetic = true;
  std::size_t min_words = 10;
  bool drop_image_only = true;
  bool teacher_variance = true;
  // ECMAScript regexes, matched case-insensitively.
  std::vector<std::string> image_markers = default_image_markers();
};

struct FilterReport {
  std::vector<std::string> stage_names;
  std::vector<std::size_t> counts_after;
  std::vector<std::size_t> counts_removed;
  std::size_t input_count = 0;

  nlohmann::json to_json() const {
    nlohmann::json stages = nlohmann::json::array();
    for (std::size_t i = 0; i < stage_names.size(); ++i) {
      stages.push_back({{"name", stage_names[i]}, {"kept", counts_after[i]}, {"removed", counts_removed[i]}});
    }
    return {{"input", input_count}, {"stages", stages}};
  }
};

// True when nothing alphanumeric is left once upload placeholders are removed.
inline bool is_image_only(std::string_view text, const std::vector<std::regex>& markers) {
  std::string stripped(text);
  for (const auto& re : markers) stripped = std::regex_replace(stripped, re, " ");
  return !detail::any_code_point(stripped, detail::is_alnum);
}

// Population variance of normalized scores per teacher, over scored records.
// Teachers with no scored records are absent from the map.
inline std::map<std::string, double> teacher_score_variance(const std::vector<ResponseRecord>& records) {
  struct Acc {
    double sum = 0, sum_sq = 0;
    std::size_t n = 0;
    std::set<double> distinct;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : records) {
    if (!r.normalized_score) continue;
    auto& a = acc[r.teacher_id];
    a.sum += *r.normalized_score;
    a.sum_sq += *r.normalized_score * *r.normalized_score;
    ++a.n;
    a.distinct.insert(*r.normalized_score);
  }
  std::map<std::string, double> out;
  for (const auto& [teacher, a] : acc) {
    // A single distinct value is exactly zero variance regardless of rounding.
    if (a.distinct.size() <= 1) {
      out[teacher] = 0.0;
      continue;
    }
    const double m = a.sum / static_cast<double>(a.n);
    out[teacher] = std::max(a.sum_sq / static_cast<double>(a.n) - m * m, std::numeric_limits<double>::min());
  }
  return out;
}

// Applies, in order: skill code present, contains a letter, word count >=
// min_words, not image-only, teacher has nonzero score variance. Disabled
// stages are reported with zero removals so reports stay comparable.
inline std::pair<std::vector<ResponseRecord>, FilterReport> apply_filters(const std::vector<ResponseRecord>& records,
                                                                          const FilterConfig& config) {
  FilterReport report;
  report.input_count = records.size();
  std::vector<ResponseRecord> current = records;

  auto stage = [&](const char* name, bool enabled, auto keep) {
    const std::size_t before = current.size();
    if (enabled) std::erase_if(current, [&](const ResponseRecord& r) { return !keep(r); });
    report.stage_names.emplace_back(name);
    report.counts_after.push_back(current.size());
    report.counts_removed.push_back(before - current.size());
  };

  stage("skill_code", config.require_skill_code,
        [](const ResponseRecord& r) { return r.skill_code && !r.skill_code->empty(); });
  stage("alphabetic", config.require_alphabetic, [](const ResponseRecord& r) { return has_alphabetic(r.text); });
  stage("min_words", config.min_words > 0,
        [&](const ResponseRecord& r) { return word_count(r.text) >= config.min_words; });

  std::vector<std::regex> markers;
  for (const auto& m : config.image_markers) {
    markers.emplace_back(m, std::regex::ECMAScript | std::regex::icase);
  }
  stage("image_only", config.drop_image_only, [&](const ResponseRecord& r) { return !is_image_only(r.text, markers); });

  const auto variance = teacher_score_variance(current);
  stage("teacher_variance", config.teacher_variance, [&](const ResponseRecord& r) {
    auto it = variance.find(r.teacher_id);
    return it != variance.end() && it->second > 0.0;
  });
  return {std::move(current), std::move(report)};
}

}  // namespace scorelens
