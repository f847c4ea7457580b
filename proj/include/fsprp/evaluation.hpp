#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "fsprp/analyzer.hpp"
#include "fsprp/error.hpp"
#include "fsprp/types.hpp"

namespace fsprp {

using PerQuery = std::map<std::string, double>;

/// Queries to score: the explicit list when given, otherwise every query in
/// the run. Listed queries missing from the run score 0.
inline std::vector<std::string> evaluation_queries(const RunList& run, const std::vector<std::string>* only) {
    return only ? *only : run.query_ids();
}

/// DCG with gain 2^g - 1 and discount log2(i + 1), normalized by the DCG of
/// all judged documents sorted by grade. Queries without relevant documents
/// score 0.
inline double ndcg_of(const RunList::Ranking& ranking, const Qrels::Judgments& judged, std::size_t cutoff) {
    std::vector<int> ideal;
    for (const auto& [_, g] : judged)
        if (g > 0) ideal.push_back(g);
    if (ideal.empty()) return 0.0;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(cutoff, ideal.size()); ++i)
        idcg += (std::exp2(ideal[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(cutoff, ranking.size()); ++i) {
        auto it = judged.find(ranking[i].doc_id);
        const int g = it == judged.end() ? 0 : it->second;
        if (g > 0) dcg += (std::exp2(g) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

/// AP with relevance = grade >= threshold, normalized by all relevant
/// documents in the qrels (not only retrieved ones).
inline double average_precision_of(const RunList::Ranking& ranking, const Qrels::Judgments& judged,
                                   std::size_t cutoff, int threshold) {
    std::size_t total_relevant = 0;
    for (const auto& [_, g] : judged)
        if (g >= threshold) ++total_relevant;
    if (total_relevant == 0) return 0.0;
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(cutoff, ranking.size()); ++i) {
        auto it = judged.find(ranking[i].doc_id);
        if (it != judged.end() && it->second >= threshold) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(total_relevant);
}

inline PerQuery ndcg_at(const RunList& run, const Qrels& qrels, std::size_t cutoff = 10,
                        const std::vector<std::string>* only = nullptr) {
    static const RunList::Ranking kEmpty;
    PerQuery out;
    for (const auto& q : evaluation_queries(run, only))
        out[q] = ndcg_of(run.contains(q) ? run.at(q) : kEmpty, qrels.judged(q), cutoff);
    return out;
}

inline PerQuery ap_at(const RunList& run, const Qrels& qrels, std::size_t cutoff = 100, int binary_threshold = 2,
                      const std::vector<std::string>* only = nullptr) {
    static const RunList::Ranking kEmpty;
    PerQuery out;
    for (const auto& q : evaluation_queries(run, only))
        out[q] = average_precision_of(run.contains(q) ? run.at(q) : kEmpty, qrels.judged(q), cutoff, binary_threshold);
    return out;
}

inline double mean_of(const PerQuery& values) {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (const auto& [_, v] : values) s += v;
    return s / static_cast<double>(values.size());
}

/// Term-set Jaccard. A side with no terms gives 0.
inline double jaccard(std::string_view a, std::string_view b) {
    const auto sa = term_set(a);
    const auto sb = term_set(b);
    if (sa.empty() || sb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.contains(t);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

/// Mean Jaccard between a query and each of its neighbors.
inline double jaccard_neighborhood(const Query& query, std::span<const Query> neighbors) {
    if (neighbors.empty()) throw ArgumentError("jaccard_neighborhood needs at least one neighbor");
    double s = 0.0;
    for (const auto& n : neighbors) s += jaccard(query.text, n.text);
    return s / static_cast<double>(neighbors.size());
}

struct TTestResult {
    double t_stat = 0.0;
    double p_value = 1.0;
    bool significant = false;
    // Zero-variance differences with a nonzero mean: p_value is an upper
    // bound (machine epsilon), not an exact value.
    bool p_is_upper_bound = false;
    std::size_t n = 0;
    double mean_diff = 0.0;
};

/// Two-sided paired t-test on per-query differences a - b, n - 1 degrees
/// of freedom. Both inputs must cover the same queries.
inline TTestResult paired_t_test(const PerQuery& a, const PerQuery& b, double alpha = 0.05) {
    if (a.size() != b.size()) throw ArgumentError("paired t-test: query sets differ in size");
    std::vector<double> diff;
    diff.reserve(a.size());
    for (const auto& [q, va] : a) {
        auto it = b.find(q);
        if (it == b.end()) throw ArgumentError("paired t-test: query " + q + " missing from second system");
        diff.push_back(va - it->second);
    }
    const std::size_t n = diff.size();
    if (n < 2) throw ArgumentError("paired t-test needs at least two queries");
    TTestResult r;
    r.n = n;
    double mean = 0.0;
    for (double d : diff) mean += d;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double d : diff) ss += (d - mean) * (d - mean);
    const double var = ss / static_cast<double>(n - 1);
    r.mean_diff = mean;
    if (var == 0.0) {
        if (mean == 0.0) return r;
        r.t_stat = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p_value = std::numeric_limits<double>::epsilon();
        r.p_is_upper_bound = true;
        r.significant = true;
        return r;
    }
    r.t_stat = mean / std::sqrt(var / static_cast<double>(n));
    boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t_stat)));
    r.significant = r.p_value < alpha;
    return r;
}

struct Correlation {
    double rho = 0.0;
    bool degenerate = false;  // a constant series (or < 2 points); rho reported as 0
};

inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ArgumentError("pearson: series differ in length");
    const std::size_t n = x.size();
    if (n < 2) return {0.0, true};
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return {0.0, true};
    return {sxy / std::sqrt(sxx * syy), false};
}

struct LocalityRow {
    std::string query_id;
    double jaccard = 0.0;
    double ndcg_zero_shot = 0.0;
    double ndcg_few_shot = 0.0;
    double delta() const { return ndcg_few_shot - ndcg_zero_shot; }
};

struct LocalityReport {
    std::vector<LocalityRow> rows;
    Correlation correlation;

    std::string to_tsv() const {
        std::string out = "query_id\tjaccard\tndcg@10_0shot\tndcg@10_fewshot\tdelta_ndcg@10\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\t%.6f\n", r.jaccard, r.ndcg_zero_shot, r.ndcg_few_shot,
                          r.delta());
            out += r.query_id;
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "# pearson\t%.6f%s\n", correlation.rho, correlation.degenerate ? "\tdegenerate" : "");
        out += buf;
        return out;
    }
};

/// Per-query Jaccard of the few-shot neighborhood against the nDCG@10 change
/// from zero-shot to few-shot, with the Pearson correlation over queries.
/// `jaccard_by_query` defines the query set; both runs are scored on it.
inline LocalityReport locality_report(const RunList& zero_shot, const RunList& few_shot, const Qrels& qrels,
                                      const PerQuery& jaccard_by_query) {
    std::vector<std::string> queries;
    for (const auto& [q, _] : jaccard_by_query) queries.push_back(q);
    const auto n0 = ndcg_at(zero_shot, qrels, 10, &queries);
    const auto n1 = ndcg_at(few_shot, qrels, 10, &queries);
    LocalityReport rep;
    std::vector<double> js, ds;
    for (const auto& q : queries) {
        LocalityRow row{q, jaccard_by_query.at(q), n0.at(q), n1.at(q)};
        js.push_back(row.jaccard);
        ds.push_back(row.delta());
        rep.rows.push_back(std::move(row));
    }
    rep.correlation = pearson(js, ds);
    return rep;
}

/// Computes each query's neighborhood Jaccard from the example queries it
/// was shown. Queries without examples get 0.
inline LocalityReport locality_report(const RunList& zero_shot, const RunList& few_shot, const Qrels& qrels,
                                      const QuerySet& queries,
                                      const std::map<std::string, std::vector<Query>>& neighborhoods) {
    PerQuery j;
    for (const auto& [qid, neighbors] : neighborhoods)
        j[qid] = neighbors.empty() ? 0.0 : jaccard_neighborhood(queries.at(qid), neighbors);
    return locality_report(zero_shot, few_shot, qrels, j);
}

struct QueryMetrics {
    double ndcg_at_10 = 0.0;
    double ap_at_100 = 0.0;
};

struct MetricReport {
    std::map<std::string, QueryMetrics> per_query;
    QueryMetrics means;
    std::optional<double> jaccard_mean;
    std::size_t n_queries = 0;

    std::string to_tsv() const {
        std::string out = "query_id\tndcg@10\tap@100\n";
        char buf[96];
        for (const auto& [q, m] : per_query) {
            std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", m.ndcg_at_10, m.ap_at_100);
            out += q;
            out += buf;
        }
        std::snprintf(buf, sizeof buf, "all\t%.6f\t%.6f\n", means.ndcg_at_10, means.ap_at_100);
        out += buf;
        return out;
    }

    nlohmann::json means_json() const {
        nlohmann::json j{{"ndcg@10", means.ndcg_at_10}, {"ap@100", means.ap_at_100}, {"n_queries", n_queries}};
        j["jaccard_mean"] = jaccard_mean ? nlohmann::json(*jaccard_mean) : nlohmann::json(nullptr);
        return j;
    }
};

struct EvalSettings {
    std::size_t ndcg_cutoff = 10;
    std::size_t ap_cutoff = 100;
    int binary_threshold = 2;
};

inline MetricReport evaluate_run(const RunList& run, const Qrels& qrels, const EvalSettings& s = {},
                                 const std::vector<std::string>* only = nullptr) {
    const auto nd = ndcg_at(run, qrels, s.ndcg_cutoff, only);
    const auto ap = ap_at(run, qrels, s.ap_cutoff, s.binary_threshold, only);
    MetricReport rep;
    for (const auto& [q, v] : nd) rep.per_query[q] = {v, ap.at(q)};
    rep.n_queries = nd.size();
    rep.means = {mean_of(nd), mean_of(ap)};
    return rep;
}

}  // namespace fsprp
