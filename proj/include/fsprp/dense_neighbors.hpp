#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsprp/error.hpp"
#include "fsprp/sparse_index.hpp"
#include "fsprp/util/files.hpp"

namespace fsprp {

/// Scales v to unit L2 norm. Throws on zero or non-finite vectors.
inline void normalize_in_place(std::span<double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ValidationError("cannot normalize a zero or non-finite vector");
    for (double& x : v) x /= norm;
}

/// Unit-normalized vectors keyed by id, stored row-major.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::size_t dim = 0) : dim_(dim) {}

    void add(std::string id, std::vector<double> vec) {
        if (id.empty()) throw ValidationError("empty embedding id");
        if (dim_ == 0) dim_ = vec.size();
        if (vec.size() != dim_ || dim_ == 0)
            throw ValidationError("embedding " + id + " has dimension " + std::to_string(vec.size()) + ", expected " +
                                  std::to_string(dim_));
        normalize_in_place(vec);
        if (!index_.emplace(id, ids_.size()).second) throw ValidationError("duplicate embedding id: " + id);
        ids_.push_back(std::move(id));
        data_.insert(data_.end(), vec.begin(), vec.end());
    }

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return ids_.size(); }
    bool empty() const noexcept { return ids_.empty(); }
    const std::string& id(std::size_t i) const { return ids_.at(i); }

    std::span<const double> vector(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }

    std::optional<std::span<const double>> find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        if (it == index_.end()) return std::nullopt;
        return vector(it->second);
    }

private:
    std::size_t dim_;
    std::vector<std::string> ids_;
    std::vector<double> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline EmbeddingStore parse_embeddings(std::string_view text, const std::string& source = "<embeddings>") {
    EmbeddingStore store;
    util::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (util::trim(line).empty()) return;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(source, lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(source, lineno, "expected a JSON object");
        auto id = obj.find("id");
        auto vec = obj.find("vector");
        if (id == obj.end() || !id->is_string()) throw ParseError(source, lineno, "missing string \"id\"");
        if (vec == obj.end() || !vec->is_array()) throw ParseError(source, lineno, "missing array \"vector\"");
        std::vector<double> v;
        v.reserve(vec->size());
        for (const auto& x : *vec) {
            if (!x.is_number()) throw ParseError(source, lineno, "non-numeric vector component");
            v.push_back(x.get<double>());
        }
        try {
            store.add(id->get<std::string>(), std::move(v));
        } catch (const ValidationError& e) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    return store;
}

/// JSONL of {"id": ..., "vector": [...]}. Vectors are normalized on load.
inline EmbeddingStore load_embeddings(const std::filesystem::path& path) {
    return parse_embeddings(util::read_file(path), path.string());
}

/// Exact top-K by cosine similarity, ties broken by id ascending. The probe
/// is normalized first, so positive rescaling never changes the result.
inline std::vector<ScoredHit> top_k_cosine(const EmbeddingStore& store, std::span<const double> probe, std::size_t k) {
    if (k < 1) throw ArgumentError("K must be >= 1");
    if (store.empty()) return {};
    if (probe.size() != store.dim())
        throw ArgumentError("probe has dimension " + std::to_string(probe.size()) + ", store has " +
                            std::to_string(store.dim()));
    std::vector<double> unit(probe.begin(), probe.end());
    normalize_in_place(unit);

    std::vector<double> sims(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto v = store.vector(i);
        double dot = 0.0;
        for (std::size_t d = 0; d < v.size(); ++d) dot += v[d] * unit[d];
        sims[i] = dot;
    }
    std::vector<std::size_t> order(store.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t n = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (sims[a] != sims[b]) return sims[a] > sims[b];
                          return store.id(a) < store.id(b);
                      });
    std::vector<ScoredHit> hits;
    hits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) hits.push_back(ScoredHit{store.id(order[i]), sims[order[i]], static_cast<int>(i) + 1});
    return hits;
}

}  // namespace fsprp
