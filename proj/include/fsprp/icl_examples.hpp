#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "fsprp/dense_neighbors.hpp"
#include "fsprp/error.hpp"
#include "fsprp/sparse_index.hpp"
#include "fsprp/types.hpp"
#include "fsprp/util/random.hpp"

namespace fsprp {

enum class Selector { Lex, Sem, Static };

inline std::string_view to_string(Selector s) {
    switch (s) {
        case Selector::Lex: return "lex";
        case Selector::Sem: return "sem";
        case Selector::Static: return "static";
    }
    return "?";
}

inline Selector parse_selector(std::string_view s) {
    if (s == "lex") return Selector::Lex;
    if (s == "sem") return Selector::Sem;
    if (s == "static") return Selector::Static;
    throw ConfigError("unknown selector: " + std::string(s) + " (expected lex, sem or static)");
}

struct NeighborCandidate {
    std::string query_id;
    double similarity = 0.0;

    bool operator==(const NeighborCandidate&) const = default;
};

/// Training queries similar to a probe query, most similar first. Never
/// contains the probe's own id.
struct Neighborhood {
    std::string probe_query_id;
    std::vector<NeighborCandidate> candidates;
    Selector selector = Selector::Lex;
};

/// Where neighborhoods come from. Only the members needed by the chosen
/// selector have to be set.
struct NeighborhoodSources {
    const InvertedIndex* query_index = nullptr;             // Lex: BM25 over training query texts
    const EmbeddingStore* training_embeddings = nullptr;    // Sem
    std::function<std::vector<double>(const Query&)> embed_probe;  // Sem
    std::vector<std::string> static_ids;                     // Static
};

inline Neighborhood select_neighborhood(const Query& probe, Selector selector, std::size_t pool_size,
                                        const NeighborhoodSources& sources) {
    if (pool_size < 1) throw ArgumentError("neighborhood size must be >= 1");
    Neighborhood nb{probe.query_id, {}, selector};
    auto keep = [&](const std::vector<ScoredHit>& hits) {
        for (const auto& h : hits) {
            if (h.item_id == probe.query_id) continue;
            if (nb.candidates.size() == pool_size) break;
            nb.candidates.push_back({h.item_id, h.score});
        }
    };
    switch (selector) {
        case Selector::Lex:
            if (!sources.query_index) throw ConfigError("lex selector requires a training-query index");
            // one extra hit in case the probe itself is in the training set
            keep(sources.query_index->search(probe.text, pool_size + 1));
            break;
        case Selector::Sem: {
            if (!sources.training_embeddings || !sources.embed_probe)
                throw ConfigError("sem selector requires training embeddings and a probe embedding source");
            const auto vec = sources.embed_probe(probe);
            keep(top_k_cosine(*sources.training_embeddings, vec, pool_size + 1));
            break;
        }
        case Selector::Static:
            for (const auto& id : sources.static_ids) {
                if (id == probe.query_id) continue;
                if (nb.candidates.size() == pool_size) break;
                nb.candidates.push_back({id, 1.0});
            }
            break;
    }
    return nb;
}

enum class GoldLabel { First, Second };

inline std::string_view label_text(GoldLabel g) { return g == GoldLabel::First ? "1" : "2"; }

/// One demonstration: a training query with one relevant and one hard
/// negative passage. gold_label names the slot holding the relevant one.
struct IclExample {
    Query example_query;
    Document first_passage;
    Document second_passage;
    GoldLabel gold_label = GoldLabel::First;

    bool flipped() const { return gold_label == GoldLabel::Second; }
    const Document& positive() const { return flipped() ? second_passage : first_passage; }
    const Document& negative() const { return flipped() ? first_passage : second_passage; }

    bool operator==(const IclExample&) const = default;
};

struct SamplerConfig {
    int shots = 1;       // k
    int pool_size = 10;  // K
    int neg_lo = 100;    // m, exclusive
    int neg_hi = 200;    // M, inclusive
    std::uint64_t seed = 0;
    int relevance_threshold = 1;

    void validate() const {
        if (shots < 0) throw ConfigError("shots must be >= 0");
        if (pool_size < 1) throw ConfigError("pool size must be >= 1");
        if (shots > pool_size) throw ConfigError("shots must not exceed pool size");
        if (neg_lo < 1 || neg_lo >= neg_hi) throw ConfigError("negative window requires 1 <= lo < hi");
        if (relevance_threshold < 1) throw ConfigError("relevance threshold must be >= 1");
    }
};

struct SampleResult {
    std::vector<IclExample> examples;
    std::vector<std::string> skipped;  // pool members that produced no example
    std::string diagnostic;            // non-empty when fewer than k examples were produced
};

/// Inputs the sampler reads. All are immutable and may be shared across threads.
struct TrainingData {
    const QuerySet& queries;
    const Qrels& qrels;
    const Corpus& corpus;
    const InvertedIndex& corpus_index;
};

/// Draws up to cfg.shots examples from the neighborhood. The random stream
/// is keyed by (cfg.seed, probe query id), so results do not depend on the
/// order in which probes are processed.
///
/// Pool members are visited in a uniformly shuffled order; each yields a
/// uniformly drawn positive (grade >= threshold), a uniformly drawn negative
/// from BM25 ranks (m, M] that is not relevant, and a fair coin deciding
/// whether the pair is flipped. Members lacking a positive or a negative are
/// skipped and the next member is tried.
inline SampleResult sample_examples(const Neighborhood& nbhd, const TrainingData& data, const SamplerConfig& cfg) {
    cfg.validate();
    SampleResult result;
    const auto k = static_cast<std::size_t>(cfg.shots);
    if (k == 0) return result;
    if (nbhd.candidates.empty()) {
        result.diagnostic = "empty neighborhood for " + nbhd.probe_query_id + "; falling back to zero-shot";
        return result;
    }

    auto rng = util::keyed_rng(cfg.seed, nbhd.probe_query_id);
    std::vector<std::size_t> order(nbhd.candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    util::shuffle(std::span(order), rng);

    for (std::size_t idx : order) {
        if (result.examples.size() == k) break;
        const auto& qid = nbhd.candidates[idx].query_id;
        const Query* q = data.queries.find(qid);
        if (!q) {
            result.skipped.push_back(qid);
            continue;
        }
        std::vector<std::string> positives;
        for (auto& doc : data.qrels.relevant(qid, cfg.relevance_threshold))
            if (data.corpus.contains(doc)) positives.push_back(std::move(doc));
        if (positives.empty()) {
            result.skipped.push_back(qid);
            continue;
        }
        std::vector<std::string> negatives;
        for (auto& hit : data.corpus_index.rank_window(q->text, cfg.neg_lo, cfg.neg_hi))
            if (data.qrels.grade(qid, hit.item_id) < cfg.relevance_threshold) negatives.push_back(std::move(hit.item_id));
        if (negatives.empty()) {
            result.skipped.push_back(qid);
            continue;
        }
        const auto& pos = data.corpus.at(positives[util::uniform_index(rng, positives.size())]);
        const auto& neg = data.corpus.at(negatives[util::uniform_index(rng, negatives.size())]);
        const bool flip = util::bernoulli(rng, 0.5);
        result.examples.push_back(flip ? IclExample{*q, neg, pos, GoldLabel::Second}
                                       : IclExample{*q, pos, neg, GoldLabel::First});
    }
    if (result.examples.size() < k) {
        result.diagnostic = "produced " + std::to_string(result.examples.size()) + " of " + std::to_string(k) +
                            " examples for " + nbhd.probe_query_id +
                            (result.examples.empty() ? "; falling back to zero-shot" : "");
    }
    return result;
}

}  // namespace fsprp
