#pragma once

// Fixed-dimension embedding vectors keyed by response or problem id, their
// file formats, and the vector transforms used to build content features.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "scorelens/common.hpp"

namespace scorelens {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

struct EmbeddingVector {
  std::string id;
  std::vector<float> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

// Immutable after construction; insertion order is preserved for output.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ArgumentError("embedding dimension must be positive");
  }

  void add(EmbeddingVector v) {
    if (dim_ == 0) {
      if (v.values.empty()) throw DataError("embedding '" + v.id + "' is empty");
      dim_ = v.values.size();
    }
    if (v.values.size() != dim_) {
      throw DataError("embedding '" + v.id + "': dimension mismatch, expected " + std::to_string(dim_) + ", got " +
                      std::to_string(v.values.size()));
    }
    for (std::size_t k = 0; k < v.values.size(); ++k) {
      if (!std::isfinite(v.values[k])) {
        throw DataError("embedding '" + v.id + "': non-finite value at index " + std::to_string(k));
      }
    }
    if (index_.contains(v.id)) throw DataError("embedding '" + v.id + "': duplicate id");
    index_.emplace(v.id, entries_.size());
    entries_.push_back(std::move(v));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool contains(const std::string& id) const { return index_.contains(id); }

  const EmbeddingVector* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  const EmbeddingVector& at(const std::string& id) const {
    if (const auto* v = find(id)) return *v;
    throw DataError("embedding '" + id + "' not found");
  }

  std::vector<double> values(const std::string& id) const {
    const auto& v = at(id);
    return {v.values.begin(), v.values.end()};
  }

  const std::vector<EmbeddingVector>& entries() const noexcept { return entries_; }

 private:
  std::size_t dim_ = 0;
  std::vector<EmbeddingVector> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class EmbeddingFormat { jsonl, packed };

namespace detail {

inline EmbeddingStore load_jsonl_store(std::string_view source) {
  EmbeddingStore store;
  std::size_t line = 0;
  std::size_t start = 0;
  bool first = true;
  while (start <= source.size()) {
    const auto nl = source.find('\n', start);
    auto text = source.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line;
    if (text.find_first_not_of(" \t\r") != std::string_view::npos) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError("embeddings line " + std::to_string(line) + ": " + e.what());
      }
      if (first && j.contains("dim") && !j.contains("id")) {
        if (!j["dim"].is_number_unsigned() || j["dim"].get<std::size_t>() == 0) {
          throw DataError("embeddings line " + std::to_string(line) + ": dim must be a positive integer");
        }
        store = EmbeddingStore(j["dim"].get<std::size_t>());
      } else {
        if (!j.contains("id") || !j["id"].is_string() || !j.contains("values") || !j["values"].is_array()) {
          throw DataError("embeddings line " + std::to_string(line) + ": expected {\"id\", \"values\"}");
        }
        EmbeddingVector v;
        v.id = j["id"].get<std::string>();
        v.values.reserve(j["values"].size());
        for (std::size_t k = 0; k < j["values"].size(); ++k) {
          const auto& x = j["values"][k];
          if (!x.is_number()) {
            throw DataError("embedding '" + v.id + "': non-finite value at index " + std::to_string(k));
          }
          v.values.push_back(x.get<float>());
        }
        store.add(std::move(v));
      }
      first = false;
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return store;
}

template <class T>
void put_le(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "packed embeddings assume a little-endian host");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw DataError("packed embeddings: truncated at byte " + std::to_string(pos));
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

inline EmbeddingStore load_packed_store(std::string_view source) {
  if (source.substr(0, 4) != "EMB1") throw DataError("packed embeddings: bad magic");
  std::size_t pos = 4;
  const auto dim = get_le<std::uint32_t>(source, pos);
  const auto count = get_le<std::uint64_t>(source, pos);
  EmbeddingStore store(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(source, pos);
    if (pos + len > source.size()) throw DataError("packed embeddings: truncated id");
    EmbeddingVector v;
    v.id.assign(source.data() + pos, len);
    pos += len;
    v.values.resize(dim);
    for (auto& x : v.values) x = get_le<float>(source, pos);
    store.add(std::move(v));
  }
  return store;
}

}  // namespace detail

inline EmbeddingStore load_store(std::string_view source, EmbeddingFormat format) {
  return format == EmbeddingFormat::jsonl ? detail::load_jsonl_store(source) : detail::load_packed_store(source);
}

inline std::string save_store(const EmbeddingStore& store, EmbeddingFormat format) {
  std::string out;
  if (format == EmbeddingFormat::jsonl) {
    out += nlohmann::json{{"dim", store.dim()}}.dump() + "\n";
    for (const auto& v : store.entries()) {
      nlohmann::json j;
      j["id"] = v.id;
      j["values"] = v.values;
      out += j.dump() + "\n";
    }
    return out;
  }
  out += "EMB1";
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  detail::put_le<std::uint64_t>(out, store.size());
  for (const auto& v : store.entries()) {
    if (v.id.size() > 0xFFFF) throw DataError("embedding id too long for packed format: " + v.id.substr(0, 32));
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(v.id.size()));
    out += v.id;
    for (float x : v.values) detail::put_le<float>(out, x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vector transforms
// ---------------------------------------------------------------------------

using Vec = std::vector<double>;

inline Vec centroid(const EmbeddingStore& store, std::span<const std::string> ids) {
  if (ids.empty()) throw ArgumentError("centroid of an empty id set");
  Vec sum(store.dim(), 0.0);
  for (const auto& id : ids) {
    const auto& v = store.at(id);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += v.values[k];
  }
  for (auto& x : sum) x /= static_cast<double>(ids.size());
  return sum;
}

inline Vec subtract(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ArgumentError(std::string(what) + ": dimension mismatch " + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()));
  }
  Vec out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
}

inline Vec centroid_normalize(std::span<const double> v, std::span<const double> c) {
  return subtract(v, c, "centroid_normalize");
}

inline Vec response_problem_diff(std::span<const double> response, std::span<const double> problem) {
  return subtract(response, problem, "response_problem_diff");
}

inline Vec concat(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ArgumentError("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) throw ArgumentError("cosine: zero-norm operand");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Frozen centroids for centroid normalization, learned from training rows.
enum class CentroidMode { per_problem, global };

struct CentroidModel {
  CentroidMode mode = CentroidMode::per_problem;
  Vec global;
  std::map<std::string, Vec> per_problem;

  // Problems unseen at fit time fall back to the global centroid.
  const Vec& for_problem(const std::string& problem_id) const {
    if (mode == CentroidMode::per_problem) {
      auto it = per_problem.find(problem_id);
      if (it != per_problem.end()) return it->second;
    }
    return global;
  }
};

// `pairs` are (response_id, problem_id) of the training rows.
inline CentroidModel fit_centroids(const EmbeddingStore& responses,
                                   std::span<const std::pair<std::string, std::string>> pairs, CentroidMode mode) {
  if (pairs.empty()) throw ArgumentError("fit_centroids: no training rows");
  CentroidModel model;
  model.mode = mode;
  std::vector<std::string> all;
  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& [rid, pid] : pairs) {
    all.push_back(rid);
    groups[pid].push_back(rid);
  }
  model.global = centroid(responses, all);
  if (mode == CentroidMode::per_problem) {
    for (const auto& [pid, ids] : groups) model.per_problem.emplace(pid, centroid(responses, ids));
  }
  return model;
}

}  // namespace scorelens
