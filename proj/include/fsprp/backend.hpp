#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsprp/error.hpp"
#include "fsprp/util/files.hpp"
#include "fsprp/util/hash.hpp"
#include "fsprp/util/text.hpp"

namespace fsprp {

struct BackendRequest {
    std::string prompt_text;
    std::vector<std::string> candidate_tokens;
    int max_retries = 3;
    std::chrono::milliseconds timeout{30000};

    void validate() const {
        if (candidate_tokens.empty()) throw ArgumentError("request has no candidate tokens");
        for (std::size_t i = 0; i < candidate_tokens.size(); ++i) {
            if (candidate_tokens[i].empty()) throw ArgumentError("empty candidate token");
            for (std::size_t j = 0; j < i; ++j)
                if (candidate_tokens[i] == candidate_tokens[j])
                    throw ArgumentError("duplicate candidate token: " + candidate_tokens[i]);
        }
    }
};

struct BackendResponse {
    std::map<std::string, double> logprobs;  // one finite entry per candidate token
    std::optional<std::string> raw_generation;
    std::chrono::nanoseconds latency{0};
    bool unparseable = false;  // generation matched no candidate and no logprobs were given

    double logprob(const std::string& token) const {
        auto it = logprobs.find(token);
        if (it == logprobs.end()) throw ArgumentError("no logprob for token " + token);
        return it->second;
    }

    bool operator==(const BackendResponse&) const = default;
};

/// Per-query counters, updated concurrently.
struct CallStats {
    std::atomic<std::uint64_t> calls{0};
    std::atomic<std::uint64_t> cache_hits{0};
};

/// What the caller knows about a request beyond its text. Network backends
/// ignore it; the oracle backend answers from it.
struct CallContext {
    std::string query_id;
    std::string query_text;
    std::vector<std::string> doc_ids;              // passages in slot order
    std::vector<std::string> example_query_texts;  // in-context example queries
    CallStats* stats = nullptr;
};

/// Scored-continuation interface. Implementations must be callable from
/// many threads at once.
class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendResponse score_continuations(const BackendRequest& req, const CallContext& ctx) = 0;
};

/// Thread-safe response cache keyed by a hash of prompt text and candidate
/// tokens. Persisted as JSONL sorted by key so files are reproducible.
class ResponseCache {
public:
    static std::string key_for(const BackendRequest& req) {
        util::Fnv1a a, b(util::splitmix64(util::kFnvOffset));
        a.field(req.prompt_text);
        b.field(req.prompt_text);
        for (const auto& t : req.candidate_tokens) {
            a.field(t);
            b.field(t);
        }
        return util::to_hex(a.value()) + util::to_hex(b.value());
    }

    std::optional<BackendResponse> get(const std::string& key) const {
        std::shared_lock lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    // Identical keys carry identical values, so last-writer-wins is harmless.
    void put(const std::string& key, BackendResponse value) {
        std::unique_lock lock(mu_);
        entries_[key] = std::move(value);
        dirty_ = true;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

    bool dirty() const {
        std::shared_lock lock(mu_);
        return dirty_;
    }

    static nlohmann::json to_json(const std::string& key, const BackendResponse& r) {
        nlohmann::json j;
        j["key"] = key;
        j["logprobs"] = r.logprobs;
        j["raw"] = r.raw_generation ? nlohmann::json(*r.raw_generation) : nlohmann::json(nullptr);
        j["latency_ns"] = static_cast<std::int64_t>(r.latency.count());
        j["unparseable"] = r.unparseable;
        return j;
    }

    void load(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) return;
        const auto text = util::read_file(path);
        std::unique_lock lock(mu_);
        util::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
            if (util::trim(line).empty()) return;
            try {
                const auto j = nlohmann::json::parse(line);
                BackendResponse r;
                r.logprobs = j.at("logprobs").get<std::map<std::string, double>>();
                if (!j.at("raw").is_null()) r.raw_generation = j.at("raw").get<std::string>();
                r.latency = std::chrono::nanoseconds(j.at("latency_ns").get<std::int64_t>());
                r.unparseable = j.at("unparseable").get<bool>();
                entries_[j.at("key").get<std::string>()] = std::move(r);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(path.string(), lineno, std::string("bad cache entry: ") + e.what());
            }
        });
    }

    void save(const std::filesystem::path& path) {
        std::string out;
        {
            std::shared_lock lock(mu_);
            std::vector<const std::string*> keys;
            keys.reserve(entries_.size());
            for (const auto& [k, _] : entries_) keys.push_back(&k);
            std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });
            for (const auto* k : keys) {
                out += to_json(*k, entries_.at(*k)).dump();
                out += '\n';
            }
        }
        util::write_file_atomic(path, out);
        std::unique_lock lock(mu_);
        dirty_ = false;
    }

private:
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, BackendResponse> entries_;
    bool dirty_ = false;
};

/// Serves repeated requests from the cache; misses go to the inner backend.
class CachingBackend : public Backend {
public:
    CachingBackend(Backend& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}

    BackendResponse score_continuations(const BackendRequest& req, const CallContext& ctx) override {
        const auto key = ResponseCache::key_for(req);
        if (auto hit = cache_.get(key)) {
            if (ctx.stats) ctx.stats->cache_hits.fetch_add(1, std::memory_order_relaxed);
            return *hit;
        }
        auto resp = inner_.score_continuations(req, ctx);
        cache_.put(key, resp);
        return resp;
    }

private:
    Backend& inner_;
    ResponseCache& cache_;
};

}  // namespace fsprp
