#pragma once

#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsprp/error.hpp"
#include "fsprp/icl_examples.hpp"
#include "fsprp/prompt.hpp"
#include "fsprp/util/files.hpp"

namespace fsprp {

namespace fs = std::filesystem;

enum class BackendKind { Http, Oracle };

struct OracleSettings {
    fs::path gold;
    double noise_rate = 0.0;
    std::uint64_t seed = 0;
    double locality_factor = 1.0;
};

struct BackendSettings {
    BackendKind kind = BackendKind::Http;
    std::string url;                       // falls back to $PRP_BACKEND_URL
    std::string key_env = "PRP_BACKEND_KEY";
    std::string model;
    std::chrono::milliseconds timeout{30000};
    int retries = 3;
    int parallelism = 8;  // in-flight request cap
    int top_logprobs = 20;
    std::chrono::milliseconds backoff{200};
    std::optional<fs::path> cache;
    OracleSettings oracle;

    std::string resolved_url() const {
        if (!url.empty()) return url;
        if (const char* env = std::getenv("PRP_BACKEND_URL")) return env;
        return {};
    }

    std::string api_key() const {
        if (key_env.empty()) return {};
        const char* v = std::getenv(key_env.c_str());
        return v ? v : "";
    }
};

/// One experiment: inputs, method settings, backend and outputs. Relative
/// paths in a config file resolve against the file's directory.
struct ExperimentConfig {
    std::optional<fs::path> corpus;
    std::optional<fs::path> queries;
    std::optional<fs::path> training_queries;
    std::optional<fs::path> qrels;
    std::optional<fs::path> training_qrels;
    std::optional<fs::path> first_stage_run;
    std::optional<fs::path> embeddings;        // training-query vectors
    std::optional<fs::path> query_embeddings;  // test-query vectors for the sem selector
    std::string embedding_endpoint;            // alternative to query_embeddings
    fs::path index_dir = "indexes";
    std::optional<fs::path> template_path;

    PromptMode mode = PromptMode::Pairwise;
    std::size_t depth = 100;
    std::size_t set_size = 4;
    std::size_t truncation_budget = 2000;
    Selector selector = Selector::Lex;
    std::vector<std::string> static_ids;
    SamplerConfig sampler;  // seed lives here
    int workers = 1;        // queries processed concurrently

    BackendSettings backend;

    fs::path output_run = "rerank.run";
    std::optional<fs::path> output_provenance;
    std::string run_tag;  // derived from mode/selector/shots when empty

    int binary_threshold = 2;
    fs::path report_dir = "reports";

    static constexpr std::size_t kInDomainDepth = 100;
    static constexpr std::size_t kOutOfDomainDepth = 20;

    fs::path corpus_index_path() const { return index_dir / "corpus.idx"; }
    fs::path training_index_path() const { return index_dir / "training_queries.idx"; }

    fs::path provenance_path() const {
        if (output_provenance) return *output_provenance;
        auto p = output_run;
        p += ".provenance.jsonl";
        return p;
    }

    /// e.g. "pairwise-LEX-1S", or "pairwise-0S" without examples.
    std::string tag() const {
        if (!run_tag.empty()) return run_tag;
        std::string t(to_string(mode));
        if (sampler.shots == 0) return t + "-0S";
        std::string sel(to_string(selector));
        for (auto& c : sel) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return t + "-" + sel + "-" + std::to_string(sampler.shots) + "S";
    }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config key '") + key + "': " + e.what());
        }
    }
}

inline void read_path(const nlohmann::json& j, const char* key, const fs::path& base, std::optional<fs::path>& out) {
    std::string s;
    read_opt(j, key, s);
    if (!s.empty()) out = fs::path(s).is_absolute() ? fs::path(s) : base / s;
}

inline void read_path(const nlohmann::json& j, const char* key, const fs::path& base, fs::path& out) {
    std::optional<fs::path> p;
    read_path(j, key, base, p);
    if (p) out = *p;
}

inline void check_known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (const char* known : keys) ok = ok || k == known;
        if (!ok) throw ConfigError("unknown config key '" + k + "'" + (where.empty() ? "" : " in " + where));
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j, const fs::path& base) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::check_known_keys(j,
                             {"preset", "corpus", "queries", "training_queries", "qrels", "training_qrels",
                              "first_stage_run", "embeddings", "query_embeddings", "embedding_endpoint", "index_dir",
                              "template", "mode", "depth", "set_size", "truncation_budget", "selector", "static_ids",
                              "shots", "pool_size", "neg_lo", "neg_hi", "relevance_threshold", "seed", "workers",
                              "backend", "output_run", "output_provenance", "run_tag", "binary_threshold",
                              "report_dir"},
                             "");
    ExperimentConfig c;
    std::string preset = "in-domain";
    detail::read_opt(j, "preset", preset);
    if (preset == "ood") c.depth = ExperimentConfig::kOutOfDomainDepth;
    else if (preset != "in-domain") throw ConfigError("unknown preset '" + preset + "' (expected in-domain or ood)");

    detail::read_path(j, "corpus", base, c.corpus);
    detail::read_path(j, "queries", base, c.queries);
    detail::read_path(j, "training_queries", base, c.training_queries);
    detail::read_path(j, "qrels", base, c.qrels);
    detail::read_path(j, "training_qrels", base, c.training_qrels);
    detail::read_path(j, "first_stage_run", base, c.first_stage_run);
    detail::read_path(j, "embeddings", base, c.embeddings);
    detail::read_path(j, "query_embeddings", base, c.query_embeddings);
    detail::read_opt(j, "embedding_endpoint", c.embedding_endpoint);
    detail::read_path(j, "index_dir", base, c.index_dir);
    detail::read_path(j, "template", base, c.template_path);

    std::string mode(to_string(c.mode)), selector(to_string(c.selector));
    detail::read_opt(j, "mode", mode);
    detail::read_opt(j, "selector", selector);
    c.mode = parse_prompt_mode(mode);
    c.selector = parse_selector(selector);
    detail::read_opt(j, "depth", c.depth);
    detail::read_opt(j, "set_size", c.set_size);
    detail::read_opt(j, "truncation_budget", c.truncation_budget);
    detail::read_opt(j, "static_ids", c.static_ids);
    detail::read_opt(j, "shots", c.sampler.shots);
    detail::read_opt(j, "pool_size", c.sampler.pool_size);
    detail::read_opt(j, "neg_lo", c.sampler.neg_lo);
    detail::read_opt(j, "neg_hi", c.sampler.neg_hi);
    detail::read_opt(j, "relevance_threshold", c.sampler.relevance_threshold);
    detail::read_opt(j, "seed", c.sampler.seed);
    detail::read_opt(j, "workers", c.workers);

    if (auto b = j.find("backend"); b != j.end()) {
        if (!b->is_object()) throw ConfigError("'backend' must be an object");
        detail::check_known_keys(*b,
                                 {"type", "url", "key_env", "model", "timeout_ms", "retries", "parallelism",
                                  "top_logprobs", "backoff_ms", "cache", "oracle"},
                                 "backend");
        auto& s = c.backend;
        std::string type = "http";
        detail::read_opt(*b, "type", type);
        if (type == "http") s.kind = BackendKind::Http;
        else if (type == "oracle") s.kind = BackendKind::Oracle;
        else throw ConfigError("unknown backend type '" + type + "' (expected http or oracle)");
        detail::read_opt(*b, "url", s.url);
        detail::read_opt(*b, "key_env", s.key_env);
        detail::read_opt(*b, "model", s.model);
        long long timeout_ms = s.timeout.count(), backoff_ms = s.backoff.count();
        detail::read_opt(*b, "timeout_ms", timeout_ms);
        detail::read_opt(*b, "backoff_ms", backoff_ms);
        s.timeout = std::chrono::milliseconds(timeout_ms);
        s.backoff = std::chrono::milliseconds(backoff_ms);
        detail::read_opt(*b, "retries", s.retries);
        detail::read_opt(*b, "parallelism", s.parallelism);
        detail::read_opt(*b, "top_logprobs", s.top_logprobs);
        detail::read_path(*b, "cache", base, s.cache);
        if (auto o = b->find("oracle"); o != b->end()) {
            if (!o->is_object()) throw ConfigError("'backend.oracle' must be an object");
            detail::check_known_keys(*o, {"gold", "noise_rate", "seed", "locality_factor"}, "backend.oracle");
            detail::read_path(*o, "gold", base, s.oracle.gold);
            detail::read_opt(*o, "noise_rate", s.oracle.noise_rate);
            detail::read_opt(*o, "seed", s.oracle.seed);
            detail::read_opt(*o, "locality_factor", s.oracle.locality_factor);
        }
    }

    detail::read_path(j, "output_run", base, c.output_run);
    detail::read_path(j, "output_provenance", base, c.output_provenance);
    detail::read_opt(j, "run_tag", c.run_tag);
    detail::read_opt(j, "binary_threshold", c.binary_threshold);
    detail::read_path(j, "report_dir", base, c.report_dir);
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(util::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return parse_config(j, path.parent_path());
}

enum class Command { Index, Neighbors, Rerank, Evaluate };

namespace detail {

inline void require_file(const std::optional<fs::path>& p, const char* name) {
    if (!p) throw ConfigError(std::string("config is missing '") + name + "'");
    if (!fs::exists(*p)) throw ConfigError(std::string(name) + " not found: " + p->string());
}

}  // namespace detail

/// Checks settings and that every input the command reads exists.
inline void validate(const ExperimentConfig& c, Command cmd) {
    c.sampler.validate();
    if (c.mode != PromptMode::Pointwise && c.depth < 2) throw ConfigError("depth must be >= 2 for pairwise and setwise");
    if (c.depth < 1) throw ConfigError("depth must be >= 1");
    if (c.set_size < 2 || c.set_size > kMaxSetSize) throw ConfigError("set_size must be in 2..10");
    if (c.truncation_budget < 1) throw ConfigError("truncation_budget must be >= 1");
    if (c.workers < 1) throw ConfigError("workers must be >= 1");
    if (c.backend.retries < 0) throw ConfigError("backend.retries must be >= 0");
    if (c.backend.parallelism < 1) throw ConfigError("backend.parallelism must be >= 1");
    if (c.binary_threshold < 1) throw ConfigError("binary_threshold must be >= 1");

    const bool few_shot = c.sampler.shots > 0;
    switch (cmd) {
        case Command::Index:
            detail::require_file(c.corpus, "corpus");
            detail::require_file(c.training_queries, "training_queries");
            if (c.embeddings) detail::require_file(c.embeddings, "embeddings");
            break;
        case Command::Neighbors:
            detail::require_file(c.training_queries, "training_queries");
            if (c.queries) detail::require_file(c.queries, "queries");
            break;
        case Command::Rerank:
            detail::require_file(c.corpus, "corpus");
            detail::require_file(c.queries, "queries");
            detail::require_file(c.first_stage_run, "first_stage_run");
            if (c.template_path) detail::require_file(c.template_path, "template");
            if (few_shot) {
                detail::require_file(c.training_queries, "training_queries");
                detail::require_file(c.training_qrels, "training_qrels");
            }
            if (c.backend.kind == BackendKind::Oracle) {
                if (c.backend.oracle.gold.empty()) throw ConfigError("oracle backend needs backend.oracle.gold");
                if (!fs::exists(c.backend.oracle.gold))
                    throw ConfigError("oracle gold file not found: " + c.backend.oracle.gold.string());
            } else if (c.backend.resolved_url().empty()) {
                throw ConfigError("http backend needs backend.url or PRP_BACKEND_URL");
            }
            break;
        case Command::Evaluate:
            detail::require_file(c.qrels, "qrels");
            break;
    }
    if ((cmd == Command::Neighbors || (cmd == Command::Rerank && few_shot)) && c.selector == Selector::Sem) {
        detail::require_file(c.embeddings, "embeddings");
        if (!c.query_embeddings && c.embedding_endpoint.empty())
            throw ConfigError("sem selector needs query_embeddings or embedding_endpoint");
        if (c.query_embeddings) detail::require_file(c.query_embeddings, "query_embeddings");
    }
    if ((cmd == Command::Neighbors || (cmd == Command::Rerank && few_shot)) && c.selector == Selector::Static &&
        c.static_ids.empty())
        throw ConfigError("static selector needs static_ids");
}

}  // namespace fsprp
