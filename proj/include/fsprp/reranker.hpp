#pragma once

// Consistency-resolved pairwise preferences, all-pairs aggregation, and the
// reranking driver (plus pointwise and setwise inference modes).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fsprp/backend.hpp"
#include "fsprp/error.hpp"
#include "fsprp/icl_examples.hpp"
#include "fsprp/prompt.hpp"
#include "fsprp/types.hpp"
#include "fsprp/util/parallel.hpp"

namespace fsprp {

/// Everything a comparison needs besides the documents themselves.
struct RerankContext {
    Backend& backend;
    const PromptTemplate& tpl;
    std::span<const IclExample> examples;
    std::size_t parallelism = 1;  // concurrent comparisons within a query
    int max_retries = 3;
    std::chrono::milliseconds timeout{30000};
    CallStats* stats = nullptr;
};

struct PreferenceOutcome {
    std::string query_id;
    std::string doc_a;
    std::string doc_b;
    double value = 0.0;  // P(doc_a preferred over doc_b), one of {0, 1/2, 1}
    bool forward_consistent = false;
    bool backward_consistent = false;
};

struct AggregateScore {
    std::string query_id;
    std::string doc_id;
    double score = 0.0;
};

/// value = (forward + backward) / 2, where forward means token "1" strictly
/// beat "2" with doc_a in the first slot, and backward means "2" strictly
/// beat "1" with doc_a in the second slot. Ties and unparseable responses
/// count as inconsistent.
inline PreferenceOutcome resolve_preference(std::string query_id, std::string doc_a, std::string doc_b,
                                            const BackendResponse& forward, const BackendResponse& backward) {
    PreferenceOutcome out{std::move(query_id), std::move(doc_a), std::move(doc_b), 0.0, false, false};
    out.forward_consistent = !forward.unparseable && forward.logprob("1") > forward.logprob("2");
    out.backward_consistent = !backward.unparseable && backward.logprob("2") > backward.logprob("1");
    out.value = (static_cast<double>(out.forward_consistent) + static_cast<double>(out.backward_consistent)) / 2.0;
    return out;
}

namespace detail {

inline std::vector<std::string> example_query_texts(std::span<const IclExample> examples) {
    std::vector<std::string> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(e.example_query.text);
    return out;
}

inline BackendResponse call_backend(const RerankContext& ctx, const Query& q, RenderedPrompt prompt,
                                    std::vector<std::string> doc_ids) {
    BackendRequest req{std::move(prompt.text), std::move(prompt.answer_tokens), ctx.max_retries, ctx.timeout};
    CallContext cc{q.query_id, q.text, std::move(doc_ids), example_query_texts(ctx.examples), ctx.stats};
    if (ctx.stats) ctx.stats->calls.fetch_add(1, std::memory_order_relaxed);
    return ctx.backend.score_continuations(req, cc);
}

}  // namespace detail

/// Two backend calls: (d, d') and (d', d).
inline PreferenceOutcome pairwise_preference(const Query& q, const Document& d, const Document& d_prime,
                                             const RerankContext& ctx) {
    if (d.doc_id == d_prime.doc_id) throw ArgumentError("cannot compare a document with itself: " + d.doc_id);
    try {
        auto fwd = detail::call_backend(ctx, q, render_pairwise(q, d, d_prime, ctx.examples, ctx.tpl),
                                        {d.doc_id, d_prime.doc_id});
        auto bwd = detail::call_backend(ctx, q, render_pairwise(q, d_prime, d, ctx.examples, ctx.tpl),
                                        {d_prime.doc_id, d.doc_id});
        return resolve_preference(q.query_id, d.doc_id, d_prime.doc_id, fwd, bwd);
    } catch (const ComparisonError&) {
        throw;
    } catch (const BackendError& e) {
        throw ComparisonError(q.query_id, d.doc_id, d_prime.doc_id, e);
    }
}

/// score(D) = sum over D' != D of P(D > D'). Each unordered pair is
/// evaluated once and credits P to one side and 1 - P to the other, so the
/// scores always sum to n(n-1)/2. Any failed pair fails the whole query.
inline std::vector<AggregateScore> allpairs_scores(const Query& q, std::span<const Document> candidates,
                                                   const RerankContext& ctx) {
    const std::size_t n = candidates.size();
    if (n < 2) throw ArgumentError("all-pairs scoring needs at least two candidates");
    {
        std::unordered_map<std::string_view, int> seen;
        for (const auto& c : candidates)
            if (!seen.emplace(c.doc_id, 0).second) throw ArgumentError("duplicate candidate " + c.doc_id);
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

    std::vector<double> prefs(pairs.size());
    util::parallel_for(pairs.size(), ctx.parallelism, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        prefs[p] = pairwise_preference(q, candidates[i], candidates[j], ctx).value;
    });

    std::vector<double> score(n, 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        score[pairs[p].first] += prefs[p];
        score[pairs[p].second] += 1.0 - prefs[p];
    }
    std::vector<AggregateScore> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back({q.query_id, candidates[i].doc_id, score[i]});
    return out;
}

/// exp(t) / (exp(t) + exp(f)) over the "true"/"false" logprobs.
inline double pointwise_probability(double logprob_true, double logprob_false) {
    return 1.0 / (1.0 + std::exp(logprob_false - logprob_true));
}

inline double pointwise_score(const Query& q, const Document& d, const RerankContext& ctx) {
    const auto resp = detail::call_backend(ctx, q, render_pointwise(q, d, ctx.examples, ctx.tpl), {d.doc_id});
    return pointwise_probability(resp.logprob("true"), resp.logprob("false"));
}

/// Index of the highest-scoring answer token; ties go to the earlier slot.
inline std::size_t argmax_slot(const BackendResponse& resp, std::size_t set_size) {
    std::size_t best = 0;
    double best_lp = resp.logprob("1");
    for (std::size_t i = 1; i < set_size; ++i) {
        const double lp = resp.logprob(std::to_string(i + 1));
        if (lp > best_lp) {
            best = i;
            best_lp = lp;
        }
    }
    return best;
}

/// Selection by repeated local argmax. For each of the first `top_positions`
/// positions, the current leader is compared against the following
/// set_size - 1 unplaced documents, the window winner becomes the leader,
/// and the scan continues down the list. The final leader moves to that
/// position; unplaced documents keep their first-stage relative order.
inline std::vector<Document> setwise_rerank(const Query& q, std::span<const Document> candidates,
                                            std::size_t set_size, const RerankContext& ctx,
                                            std::size_t top_positions = 10) {
    if (set_size < 2 || set_size > kMaxSetSize)
        throw ArgumentError("set size must be in 2.." + std::to_string(kMaxSetSize));
    std::vector<Document> order(candidates.begin(), candidates.end());
    const std::size_t n = order.size();
    const std::size_t limit = std::min(top_positions, n);
    for (std::size_t pos = 0; pos + 1 < n && pos < limit; ++pos) {
        std::size_t leader = pos;
        std::size_t next = pos + 1;
        while (next < n) {
            std::vector<std::size_t> window{leader};
            while (window.size() < set_size && next < n) window.push_back(next++);
            std::vector<Document> docs;
            std::vector<std::string> ids;
            for (auto w : window) {
                docs.push_back(order[w]);
                ids.push_back(order[w].doc_id);
            }
            const auto resp = detail::call_backend(ctx, q, render_setwise(q, docs, ctx.examples, ctx.tpl), ids);
            leader = window[argmax_slot(resp, window.size())];
        }
        std::rotate(order.begin() + static_cast<std::ptrdiff_t>(pos), order.begin() + static_cast<std::ptrdiff_t>(leader),
                    order.begin() + static_cast<std::ptrdiff_t>(leader) + 1);
    }
    return order;
}

struct RerankOptions {
    std::size_t depth = 100;
    PromptMode mode = PromptMode::Pairwise;
    std::size_t set_size = 4;        // setwise window
    std::size_t setwise_top = 10;    // setwise positions placed by selection
};

/// Reranks the top `depth` entries of one query's first-stage ranking.
///
/// Pairwise and pointwise blocks sort by model score descending, then
/// first-stage score descending, then doc_id ascending. Setwise blocks take
/// the selection order and get scores depth-block-size minus position.
/// Entries below the depth keep their order and are scored
/// (lowest block score - i) for the i-th of them, so the output score column
/// stays strictly decreasing across the boundary.
inline RunList::Ranking rerank_ranking(const RunList::Ranking& first_stage, const Query& q, const Corpus& corpus,
                                       const RerankOptions& opts, const RerankContext& ctx) {
    const std::size_t min_depth = opts.mode == PromptMode::Pointwise ? 1 : 2;
    if (opts.depth < min_depth) throw ArgumentError("rerank depth must be >= " + std::to_string(min_depth));
    const std::size_t k = std::min(opts.depth, first_stage.size());

    std::vector<Document> block;
    block.reserve(k);
    for (std::size_t i = 0; i < k; ++i) block.push_back(corpus.at(first_stage[i].doc_id));

    struct Item {
        std::size_t idx;  // position in first_stage
        double score;
    };
    std::vector<Item> items;
    items.reserve(k);
    switch (opts.mode) {
        case PromptMode::Pairwise: {
            if (k >= 2) {
                const auto scores = allpairs_scores(q, block, ctx);
                for (std::size_t i = 0; i < k; ++i) items.push_back({i, scores[i].score});
            } else {
                for (std::size_t i = 0; i < k; ++i) items.push_back({i, 0.0});
            }
            break;
        }
        case PromptMode::Pointwise: {
            std::vector<double> s(k);
            util::parallel_for(k, ctx.parallelism, [&](std::size_t i) { s[i] = pointwise_score(q, block[i], ctx); });
            for (std::size_t i = 0; i < k; ++i) items.push_back({i, s[i]});
            break;
        }
        case PromptMode::Setwise: {
            std::vector<Document> ordered = k >= 2 ? setwise_rerank(q, block, opts.set_size, ctx, opts.setwise_top) : block;
            std::unordered_map<std::string, std::size_t> pos_of;
            for (std::size_t i = 0; i < k; ++i) pos_of.emplace(first_stage[i].doc_id, i);
            for (std::size_t p = 0; p < k; ++p)
                items.push_back({pos_of.at(ordered[p].doc_id), static_cast<double>(k - p)});
            break;
        }
    }
    if (opts.mode != PromptMode::Setwise) {
        std::sort(items.begin(), items.end(), [&](const Item& a, const Item& b) {
            if (a.score != b.score) return a.score > b.score;
            const auto& ea = first_stage[a.idx];
            const auto& eb = first_stage[b.idx];
            if (ea.score != eb.score) return ea.score > eb.score;
            return ea.doc_id < eb.doc_id;
        });
    }

    RunList::Ranking out;
    out.reserve(first_stage.size());
    double lowest = 0.0;
    for (const auto& it : items) {
        out.push_back({first_stage[it.idx].doc_id, it.score, static_cast<int>(out.size()) + 1});
        lowest = it.score;
    }
    for (std::size_t i = k; i < first_stage.size(); ++i) {
        out.push_back({first_stage[i].doc_id, lowest - static_cast<double>(i - k + 1), static_cast<int>(out.size()) + 1});
    }
    return out;
}

/// Returns a copy of `run` with query q's ranking reranked.
inline RunList rerank(const RunList& run, const Query& q, const Corpus& corpus, const RerankOptions& opts,
                      const RerankContext& ctx) {
    RunList out = run;
    out.set(q.query_id, rerank_ranking(run.at(q.query_id), q, corpus, opts, ctx));
    return out;
}

}  // namespace fsprp
