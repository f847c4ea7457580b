#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fsprp/error.hpp"

namespace fsprp {

struct Document {
    std::string doc_id;
    std::string text;

    bool operator==(const Document&) const = default;
};

struct Query {
    std::string query_id;
    std::string text;

    bool operator==(const Query&) const = default;
};

inline const std::string& id_of(const Document& d) { return d.doc_id; }
inline const std::string& id_of(const Query& q) { return q.query_id; }
inline const std::string& text_of(const Document& d) { return d.text; }
inline const std::string& text_of(const Query& q) { return q.text; }

/// Insertion-ordered store of items with unique, non-empty ids.
template <typename T>
class IdStore {
public:
    using value_type = T;
    using const_iterator = typename std::vector<T>::const_iterator;

    IdStore() = default;

    void add(T item) {
        const std::string& id = id_of(item);
        if (id.empty()) throw ValidationError("empty id");
        if (index_.contains(id)) throw ValidationError("duplicate id: " + id);
        index_.emplace(id, items_.size());
        items_.push_back(std::move(item));
    }

    const T* find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &items_[it->second];
    }

    const T& at(std::string_view id) const {
        if (const T* p = find(id)) return *p;
        throw LookupError("unknown id: " + std::string(id));
    }

    bool contains(std::string_view id) const { return find(id) != nullptr; }

    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }
    const T& operator[](std::size_t i) const { return items_[i]; }
    const_iterator begin() const { return items_.begin(); }
    const_iterator end() const { return items_.end(); }

private:
    std::vector<T> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

using Corpus = IdStore<Document>;
using QuerySet = IdStore<Query>;

/// Graded judgments. Absent pairs have grade 0.
class Qrels {
public:
    using Judgments = std::map<std::string, int>;

    void set(const std::string& query_id, const std::string& doc_id, int grade) {
        if (grade < 0) throw ValidationError("negative grade for " + query_id + "/" + doc_id);
        by_query_[query_id][doc_id] = grade;
    }

    int grade(std::string_view query_id, std::string_view doc_id) const {
        auto q = by_query_.find(std::string(query_id));
        if (q == by_query_.end()) return 0;
        auto d = q->second.find(std::string(doc_id));
        return d == q->second.end() ? 0 : d->second;
    }

    /// Judged documents for a query, ordered by doc_id. Empty when unjudged.
    const Judgments& judged(std::string_view query_id) const {
        static const Judgments kEmpty;
        auto q = by_query_.find(std::string(query_id));
        return q == by_query_.end() ? kEmpty : q->second;
    }

    /// Doc ids with grade >= threshold, ordered by doc_id.
    std::vector<std::string> relevant(std::string_view query_id, int threshold) const {
        std::vector<std::string> out;
        for (const auto& [doc, g] : judged(query_id))
            if (g >= threshold) out.push_back(doc);
        return out;
    }

    const std::map<std::string, Judgments>& all() const { return by_query_; }
    std::size_t num_queries() const { return by_query_.size(); }

private:
    std::map<std::string, Judgments> by_query_;
};

struct RunEntry {
    std::string doc_id;
    double score = 0.0;
    int rank = 0;

    bool operator==(const RunEntry&) const = default;
};

/// Ranked lists keyed by query id. Keys iterate in lexicographic order.
class RunList {
public:
    using Ranking = std::vector<RunEntry>;

    /// Replaces the ranking of a query. Entries must already satisfy the
    /// ranking invariants (see validate_ranking).
    void set(const std::string& query_id, Ranking ranking) {
        validate_ranking(query_id, ranking);
        by_query_[query_id] = std::move(ranking);
    }

    const Ranking& at(std::string_view query_id) const {
        auto it = by_query_.find(std::string(query_id));
        if (it == by_query_.end()) throw LookupError("query not in run: " + std::string(query_id));
        return it->second;
    }

    bool contains(std::string_view query_id) const {
        return by_query_.contains(std::string(query_id));
    }

    void erase(std::string_view query_id) { by_query_.erase(std::string(query_id)); }

    std::vector<std::string> query_ids() const {
        std::vector<std::string> out;
        out.reserve(by_query_.size());
        for (const auto& [q, _] : by_query_) out.push_back(q);
        return out;
    }

    std::size_t size() const noexcept { return by_query_.size(); }
    bool empty() const noexcept { return by_query_.empty(); }
    auto begin() const { return by_query_.begin(); }
    auto end() const { return by_query_.end(); }

    bool operator==(const RunList&) const = default;

    /// Ranks contiguous from 1, scores finite and non-increasing, doc ids unique.
    static void validate_ranking(std::string_view query_id, const Ranking& ranking) {
        std::unordered_map<std::string_view, int> seen;
        for (std::size_t i = 0; i < ranking.size(); ++i) {
            const auto& e = ranking[i];
            const std::string where = "query " + std::string(query_id) + ", doc " + e.doc_id;
            if (e.doc_id.empty()) throw ValidationError("empty doc id in " + where);
            if (e.rank != static_cast<int>(i) + 1) throw ValidationError("non-contiguous rank in " + where);
            if (!std::isfinite(e.score)) throw ValidationError("non-finite score in " + where);
            if (i > 0 && e.score > ranking[i - 1].score)
                throw ValidationError("scores increase with rank in " + where);
            if (!seen.emplace(e.doc_id, 0).second) throw ValidationError("duplicate document in " + where);
        }
    }

private:
    std::map<std::string, Ranking> by_query_;
};

}  // namespace fsprp
