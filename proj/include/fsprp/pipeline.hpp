#pragma once

// Subcommand implementations behind the CLI. Each returns a process exit
// code; exceptions escaping them map through exit_code_for().

#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsprp/backend.hpp"
#include "fsprp/config.hpp"
#include "fsprp/dense_neighbors.hpp"
#include "fsprp/embedding_client.hpp"
#include "fsprp/error.hpp"
#include "fsprp/evaluation.hpp"
#include "fsprp/http_backend.hpp"
#include "fsprp/icl_examples.hpp"
#include "fsprp/oracle_backend.hpp"
#include "fsprp/prompt.hpp"
#include "fsprp/reranker.hpp"
#include "fsprp/sparse_index.hpp"
#include "fsprp/trec_io.hpp"
#include "fsprp/types.hpp"
#include "fsprp/util/files.hpp"
#include "fsprp/util/parallel.hpp"

namespace fsprp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitIo = 3;

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    if (dynamic_cast<const BackendError*>(&e)) return kExitPartial;
    return kExitConfig;
}

namespace detail {

// Loads an index written by `index`, or builds it in memory when absent.
// A saved index over a different number of items is treated as stale.
template <typename Item>
InvertedIndex index_for(const fs::path& path, const IdStore<Item>& items) {
    if (fs::exists(path)) {
        auto idx = InvertedIndex::load(path);
        if (idx.n_items() != items.size())
            throw ConfigError("index " + path.string() + " is stale (" + std::to_string(idx.n_items()) + " items, expected " +
                              std::to_string(items.size()) + "); rerun index");
        return idx;
    }
    return InvertedIndex::build(items);
}

inline http::RetryPolicy retry_policy(const BackendSettings& b) {
    http::RetryPolicy p;
    p.max_retries = b.retries;
    p.timeout = b.timeout;
    p.initial_backoff = b.backoff;
    return p;
}

// Everything needed to pick neighborhoods for probe queries.
struct NeighborhoodInputs {
    QuerySet training_queries;
    std::optional<InvertedIndex> query_index;
    std::optional<EmbeddingStore> training_embeddings;
    std::optional<EmbeddingStore> query_embeddings;
    NeighborhoodSources sources;

    NeighborhoodInputs() = default;
    NeighborhoodInputs(const NeighborhoodInputs&) = delete;
    NeighborhoodInputs& operator=(const NeighborhoodInputs&) = delete;
};

inline std::unique_ptr<NeighborhoodInputs> load_neighborhood_inputs(const ExperimentConfig& cfg) {
    auto in = std::make_unique<NeighborhoodInputs>();
    in->training_queries = read_tsv_queries(*cfg.training_queries);
    switch (cfg.selector) {
        case Selector::Lex:
            in->query_index = index_for(cfg.training_index_path(), in->training_queries);
            in->sources.query_index = &*in->query_index;
            break;
        case Selector::Sem: {
            in->training_embeddings = load_embeddings(*cfg.embeddings);
            in->sources.training_embeddings = &*in->training_embeddings;
            if (cfg.query_embeddings) {
                in->query_embeddings = load_embeddings(*cfg.query_embeddings);
                if (in->query_embeddings->dim() != in->training_embeddings->dim())
                    throw ValidationError("query and training embeddings differ in dimension");
                const EmbeddingStore* store = &*in->query_embeddings;
                in->sources.embed_probe = [store](const Query& q) {
                    auto v = store->find(q.query_id);
                    if (!v) throw LookupError("no embedding for query " + q.query_id);
                    return std::vector<double>(v->begin(), v->end());
                };
            } else {
                const auto dim = in->training_embeddings->dim();
                in->sources.embed_probe = [url = cfg.embedding_endpoint, dim, policy = retry_policy(cfg.backend),
                                           key = cfg.backend.api_key()](const Query& q) {
                    return fetch_embedding(url, q.text, dim, policy, key);
                };
            }
            break;
        }
        case Selector::Static:
            for (const auto& id : cfg.static_ids)
                if (!in->training_queries.contains(id)) throw ConfigError("static id not in training queries: " + id);
            in->sources.static_ids = cfg.static_ids;
            break;
    }
    return in;
}

inline std::unique_ptr<Backend> make_backend(const ExperimentConfig& cfg) {
    const auto& b = cfg.backend;
    if (b.kind == BackendKind::Oracle) {
        auto world = load_gold(b.oracle.gold);
        world.noise_rate = b.oracle.noise_rate;
        world.seed = b.oracle.seed;
        world.locality_factor = b.oracle.locality_factor;
        return std::make_unique<OracleBackend>(std::move(world));
    }
    HttpBackendConfig hc;
    hc.url = b.resolved_url();
    hc.api_key = b.api_key();
    hc.model = b.model;
    hc.top_logprobs = b.top_logprobs;
    hc.max_in_flight = b.parallelism;
    hc.initial_backoff = b.backoff;
    return std::make_unique<HttpBackend>(std::move(hc));
}

inline PromptTemplate template_for(const ExperimentConfig& cfg) {
    PromptTemplate tpl = cfg.template_path ? load_template(*cfg.template_path, cfg.mode) : default_template(cfg.mode);
    tpl.truncation_budget = cfg.truncation_budget;
    return tpl;
}

inline std::size_t comparisons_for(PromptMode mode, std::size_t block) {
    return mode == PromptMode::Pairwise && block >= 2 ? block * (block - 1) / 2 : 0;
}

}  // namespace detail

/// Builds and saves the corpus and training-query indexes, and checks the
/// embeddings file when one is configured.
inline int cmd_index(const ExperimentConfig& cfg, std::ostream& out) {
    validate(cfg, Command::Index);
    const auto corpus = read_jsonl_corpus(*cfg.corpus);
    const auto training = read_tsv_queries(*cfg.training_queries);
    const auto corpus_index = InvertedIndex::build(corpus);
    const auto query_index = InvertedIndex::build(training);
    std::error_code ec;
    fs::create_directories(cfg.index_dir, ec);
    if (ec) throw IoError("cannot create " + cfg.index_dir.string() + ": " + ec.message());
    corpus_index.save(cfg.corpus_index_path());
    query_index.save(cfg.training_index_path());
    out << "corpus\t" << corpus_index.n_items() << " docs\t" << corpus_index.n_terms() << " terms\t"
        << corpus_index.digest() << '\n';
    out << "training_queries\t" << query_index.n_items() << " queries\t" << query_index.n_terms() << " terms\t"
        << query_index.digest() << '\n';
    if (cfg.embeddings) {
        const auto emb = load_embeddings(*cfg.embeddings);
        std::size_t missing = 0;
        for (const auto& q : training)
            if (!emb.find(q.query_id)) ++missing;
        out << "embeddings\t" << emb.size() << " vectors\tdim " << emb.dim() << '\t' << missing
            << " training queries without a vector\n";
    }
    return kExitOk;
}

/// Prints the probe's neighborhood: rank, id, similarity, Jaccard against
/// the probe and the neighbor text, then the neighborhood mean Jaccard.
inline int cmd_neighbors(const ExperimentConfig& cfg, const std::string& query_id, std::ostream& out) {
    validate(cfg, Command::Neighbors);
    const auto inputs = detail::load_neighborhood_inputs(cfg);
    std::optional<Query> probe;
    if (cfg.queries) {
        const auto test = read_tsv_queries(*cfg.queries);
        if (const auto* q = test.find(query_id)) probe = *q;
    }
    if (!probe) {
        if (const auto* q = inputs->training_queries.find(query_id)) probe = *q;
    }
    if (!probe) throw ConfigError("unknown query id: " + query_id);

    const auto nb = select_neighborhood(*probe, cfg.selector, static_cast<std::size_t>(cfg.sampler.pool_size),
                                        inputs->sources);
    out << "# probe\t" << probe->query_id << '\t' << probe->text << '\n';
    out << "# selector\t" << to_string(cfg.selector) << '\n';
    std::vector<Query> neighbors;
    char buf[64];
    for (std::size_t i = 0; i < nb.candidates.size(); ++i) {
        const auto& c = nb.candidates[i];
        const auto& q = inputs->training_queries.at(c.query_id);
        neighbors.push_back(q);
        std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t", c.similarity, jaccard(probe->text, q.text));
        out << i + 1 << '\t' << c.query_id << buf << q.text << '\n';
    }
    if (neighbors.empty()) {
        out << "# jaccard\tn/a (empty neighborhood)\n";
    } else {
        std::snprintf(buf, sizeof buf, "%.6f", jaccard_neighborhood(*probe, neighbors));
        out << "# jaccard\t" << buf << '\n';
    }
    return kExitOk;
}

namespace detail {

struct QueryOutcome {
    bool ok = false;
    RunList::Ranking ranking;
    nlohmann::json provenance;
};

inline nlohmann::json example_json(const IclExample& e) {
    return {{"query_id", e.example_query.query_id},
            {"first_doc", e.first_passage.doc_id},
            {"second_doc", e.second_passage.doc_id},
            {"gold_label", std::string(label_text(e.gold_label))},
            {"flipped", e.flipped()}};
}

}  // namespace detail

/// Reranks every query of the first-stage run. Queries fail independently:
/// a failed query is logged in the provenance and left out of the run, and
/// the command returns kExitPartial after writing everything else.
inline int cmd_rerank(const ExperimentConfig& cfg, std::ostream& out, std::ostream& log) {
    validate(cfg, Command::Rerank);
    const auto corpus = read_jsonl_corpus(*cfg.corpus);
    const auto queries = read_tsv_queries(*cfg.queries);
    const auto first_stage = read_trec_run(*cfg.first_stage_run);
    const auto tpl = detail::template_for(cfg);
    const bool few_shot = cfg.sampler.shots > 0;

    std::unique_ptr<detail::NeighborhoodInputs> nb_inputs;
    std::optional<Qrels> training_qrels;
    std::optional<InvertedIndex> corpus_index;
    if (few_shot) {
        nb_inputs = detail::load_neighborhood_inputs(cfg);
        training_qrels = read_qrels(*cfg.training_qrels);
        corpus_index = detail::index_for(cfg.corpus_index_path(), corpus);
    }

    auto inner = detail::make_backend(cfg);
    ResponseCache cache;
    if (cfg.backend.cache) cache.load(*cfg.backend.cache);
    CachingBackend cached(*inner, cache);
    Backend& backend = cfg.backend.cache ? static_cast<Backend&>(cached) : *inner;

    RerankOptions opts;
    opts.depth = cfg.depth;
    opts.mode = cfg.mode;
    opts.set_size = cfg.set_size;
    const std::string tag = cfg.tag();

    const auto qids = first_stage.query_ids();
    std::vector<detail::QueryOutcome> outcomes(qids.size());
    util::parallel_for(qids.size(), static_cast<std::size_t>(cfg.workers), [&](std::size_t i) {
        const auto& qid = qids[i];
        auto& o = outcomes[i];
        CallStats stats;
        nlohmann::json p;
        p["query_id"] = qid;
        p["run_tag"] = tag;
        p["shots"] = cfg.sampler.shots;
        p["examples"] = nlohmann::json::array();
        try {
            const Query& q = queries.at(qid);
            SampleResult sample;
            if (few_shot) {
                const auto nb = select_neighborhood(q, cfg.selector, static_cast<std::size_t>(cfg.sampler.pool_size),
                                                    nb_inputs->sources);
                nlohmann::json pool = nlohmann::json::array();
                for (const auto& c : nb.candidates) pool.push_back(c.query_id);
                p["neighborhood"] = std::move(pool);
                TrainingData data{nb_inputs->training_queries, *training_qrels, corpus, *corpus_index};
                sample = sample_examples(nb, data, cfg.sampler);
                for (const auto& e : sample.examples) p["examples"].push_back(detail::example_json(e));
                if (!sample.skipped.empty()) p["skipped"] = sample.skipped;
                if (!sample.diagnostic.empty()) p["diagnostic"] = sample.diagnostic;
            }
            RerankContext ctx{backend,
                              tpl,
                              sample.examples,
                              static_cast<std::size_t>(cfg.backend.parallelism),
                              cfg.backend.retries,
                              cfg.backend.timeout,
                              &stats};
            const auto& ranking = first_stage.at(qid);
            o.ranking = rerank_ranking(ranking, q, corpus, opts, ctx);
            p["depth"] = std::min(cfg.depth, ranking.size());
            p["comparisons"] = detail::comparisons_for(cfg.mode, std::min(cfg.depth, ranking.size()));
            p["status"] = "ok";
            o.ok = true;
        } catch (const std::exception& e) {
            p["status"] = "failed";
            p["error"] = e.what();
        }
        const auto calls = stats.calls.load();
        const auto hits = stats.cache_hits.load();
        p["backend_calls"] = calls;
        p["cache_hits"] = hits;
        p["cache_hit_rate"] = calls ? static_cast<double>(hits) / static_cast<double>(calls) : 0.0;
        o.provenance = std::move(p);
    });

    RunList result;
    std::string provenance;
    std::vector<std::string> failed;
    for (std::size_t i = 0; i < qids.size(); ++i) {
        if (outcomes[i].ok) result.set(qids[i], std::move(outcomes[i].ranking));
        else failed.push_back(qids[i]);
        provenance += outcomes[i].provenance.dump();
        provenance += '\n';
    }
    if (!cfg.output_run.parent_path().empty()) fs::create_directories(cfg.output_run.parent_path());
    write_trec_run(result, tag, cfg.output_run);
    util::write_file_atomic(cfg.provenance_path(), provenance);
    if (cfg.backend.cache && cache.dirty()) cache.save(*cfg.backend.cache);

    out << "reranked " << result.size() << " of " << qids.size() << " queries\t" << tag << '\t'
        << cfg.output_run.string() << '\n';
    if (!failed.empty()) {
        log << "failed queries:";
        for (const auto& q : failed) log << ' ' << q;
        log << '\n';
        return kExitPartial;
    }
    return kExitOk;
}

struct EvaluateOptions {
    std::vector<fs::path> runs;
    // Locality report: Jaccard of the few-shot run's examples against the
    // nDCG@10 change from the zero-shot run.
    std::optional<fs::path> zero_shot;
    std::optional<fs::path> few_shot;
    double alpha = 0.05;
};

/// Example query ids per query, read from a provenance log.
inline std::map<std::string, std::vector<std::string>> read_provenance_examples(const fs::path& path) {
    std::map<std::string, std::vector<std::string>> out;
    util::for_each_line(util::read_file(path), [&](std::string_view line, std::size_t lineno) {
        if (util::trim(line).empty()) return;
        try {
            const auto j = nlohmann::json::parse(line);
            auto& ids = out[j.at("query_id").get<std::string>()];
            for (const auto& e : j.at("examples")) ids.push_back(e.at("query_id").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    });
    return out;
}

inline fs::path provenance_for(const fs::path& run) {
    auto p = run;
    p += ".provenance.jsonl";
    return p;
}

/// Writes one TSV per run plus summary.json into the report directory and
/// prints the means table. Runs are scored on the configured test queries
/// that have judgments, or on each run's own queries without a query file.
inline int cmd_evaluate(const ExperimentConfig& cfg, const EvaluateOptions& opt, std::ostream& out) {
    validate(cfg, Command::Evaluate);
    if (opt.runs.empty() && !opt.zero_shot) throw ConfigError("evaluate needs at least one run");
    if (opt.zero_shot.has_value() != opt.few_shot.has_value())
        throw ConfigError("locality report needs both a zero-shot and a few-shot run");
    const auto qrels = read_qrels(*cfg.qrels);

    std::optional<QuerySet> test_queries, training_queries;
    if (cfg.queries) test_queries = read_tsv_queries(*cfg.queries);
    if (cfg.training_queries && fs::exists(*cfg.training_queries))
        training_queries = read_tsv_queries(*cfg.training_queries);

    std::optional<std::vector<std::string>> only;
    if (test_queries) {
        only.emplace();
        for (const auto& q : *test_queries)
            if (!qrels.judged(q.query_id).empty()) only->push_back(q.query_id);
        std::sort(only->begin(), only->end());
    }

    // Jaccard of each query against the example queries it was shown.
    auto jaccard_from = [&](const fs::path& prov) -> std::optional<PerQuery> {
        if (!fs::exists(prov) || !test_queries || !training_queries) return std::nullopt;
        PerQuery j;
        for (const auto& [qid, ids] : read_provenance_examples(prov)) {
            if (only && !std::binary_search(only->begin(), only->end(), qid)) continue;
            std::vector<Query> neighbors;
            for (const auto& id : ids) neighbors.push_back(training_queries->at(id));
            j[qid] = neighbors.empty() ? 0.0 : jaccard_neighborhood(test_queries->at(qid), neighbors);
        }
        return j;
    };

    EvalSettings settings;
    settings.binary_threshold = cfg.binary_threshold;

    std::vector<fs::path> runs = opt.runs;
    for (const auto* extra : {&opt.zero_shot, &opt.few_shot})
        if (*extra && std::find(runs.begin(), runs.end(), **extra) == runs.end()) runs.push_back(**extra);

    std::error_code ec;
    fs::create_directories(cfg.report_dir, ec);
    if (ec) throw IoError("cannot create " + cfg.report_dir.string() + ": " + ec.message());

    std::vector<std::string> names;
    std::vector<MetricReport> reports;
    std::vector<RunList> loaded;
    nlohmann::json summary;
    summary["runs"] = nlohmann::json::array();
    for (const auto& path : runs) {
        loaded.push_back(read_trec_run(path));
        auto rep = evaluate_run(loaded.back(), qrels, settings, only ? &*only : nullptr);
        if (auto j = jaccard_from(provenance_for(path)); j && !j->empty()) rep.jaccard_mean = mean_of(*j);
        auto name = path.filename().string();
        util::write_file_atomic(cfg.report_dir / (name + ".tsv"), rep.to_tsv());
        auto entry = rep.means_json();
        entry["run"] = name;
        summary["runs"].push_back(std::move(entry));
        names.push_back(std::move(name));
        reports.push_back(std::move(rep));
    }

    // Paired t-tests on per-query metrics for every run pair.
    auto per_metric = [](const MetricReport& r, bool ndcg) {
        PerQuery m;
        for (const auto& [q, v] : r.per_query) m[q] = ndcg ? v.ndcg_at_10 : v.ap_at_100;
        return m;
    };
    nlohmann::json sig = nlohmann::json::array();
    for (std::size_t a = 0; a < reports.size(); ++a) {
        for (std::size_t b = a + 1; b < reports.size(); ++b) {
            nlohmann::json row{{"a", names[a]}, {"b", names[b]}};
            for (bool ndcg : {true, false}) {
                const char* key = ndcg ? "ndcg@10" : "ap@100";
                try {
                    const auto t = paired_t_test(per_metric(reports[a], ndcg), per_metric(reports[b], ndcg), opt.alpha);
                    row[key] = {{"t", std::isfinite(t.t_stat) ? nlohmann::json(t.t_stat) : nlohmann::json(nullptr)},
                                {"p", t.p_value},
                                {"p_is_upper_bound", t.p_is_upper_bound},
                                {"significant", t.significant},
                                {"mean_diff", t.mean_diff},
                                {"n", t.n}};
                } catch (const ArgumentError& e) {
                    row[key] = {{"error", e.what()}};
                }
            }
            sig.push_back(std::move(row));
        }
    }
    summary["significance"] = std::move(sig);
    summary["alpha"] = opt.alpha;
    summary["binary_threshold"] = cfg.binary_threshold;

    if (opt.zero_shot) {
        const auto zi = std::find(runs.begin(), runs.end(), *opt.zero_shot) - runs.begin();
        const auto fi = std::find(runs.begin(), runs.end(), *opt.few_shot) - runs.begin();
        auto j = jaccard_from(provenance_for(*opt.few_shot));
        if (!j) throw ConfigError("locality report needs queries, training_queries and the few-shot provenance log");
        const auto rep = locality_report(loaded[zi], loaded[fi], qrels, *j);
        util::write_file_atomic(cfg.report_dir / "locality.tsv", rep.to_tsv());
        summary["locality"] = {{"pearson", rep.correlation.degenerate ? nlohmann::json(nullptr)
                                                                      : nlohmann::json(rep.correlation.rho)},
                               {"n_queries", rep.rows.size()}};
    }
    util::write_file_atomic(cfg.report_dir / "summary.json", summary.dump(2) + "\n");

    char buf[128];
    out << "run\tndcg@10\tap@100\tjaccard\tqueries\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& m = reports[i];
        std::snprintf(buf, sizeof buf, "\t%.4f\t%.4f\t", m.means.ndcg_at_10, m.means.ap_at_100);
        out << names[i] << buf;
        if (m.jaccard_mean) {
            std::snprintf(buf, sizeof buf, "%.4f", *m.jaccard_mean);
            out << buf;
        } else {
            out << '-';
        }
        out << '\t' << m.n_queries << '\n';
    }
    return kExitOk;
}

}  // namespace fsprp
