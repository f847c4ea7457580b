#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fsprp/backend.hpp"
#include "fsprp/http_client.hpp"

namespace fsprp {

struct HttpBackendConfig {
    std::string url;           // full completion endpoint, e.g. http://host:8000/v1/completions
    std::string api_key;       // sent as a bearer token when non-empty
    std::string model;         // optional "model" field
    int top_logprobs = 20;
    int max_in_flight = 8;
    std::chrono::milliseconds initial_backoff{200};
};

/// Absent candidates get this much below the smallest observed logprob.
inline constexpr double kAbsentTokenMargin = 10.0;

/// Turns a completion response into per-candidate logprobs.
///
/// Accepted shapes, first choice only:
///   choices[0].logprobs.top_logprobs[0]          {"token": logprob, ...}
///   choices[0].logprobs.content[0].top_logprobs  [{"token": t, "logprob": x}, ...]
/// Token keys are compared after trimming surrounding whitespace; when
/// several keys trim to the same candidate the largest logprob is used.
/// Without any logprobs the generated text (choices[0].text or
/// choices[0].message.content) is matched instead: the matching candidate
/// gets 0 and the rest the floor. No match marks the response unparseable.
inline BackendResponse extract_logprobs(const nlohmann::json& body, const std::vector<std::string>& candidates) {
    BackendResponse resp;
    const nlohmann::json* choice = nullptr;
    if (auto it = body.find("choices"); it != body.end() && it->is_array() && !it->empty()) choice = &(*it)[0];
    if (!choice || !choice->is_object()) throw BackendError("completion response has no choices", 1, 200);

    std::optional<std::string> text;
    if (auto t = choice->find("text"); t != choice->end() && t->is_string()) text = t->get<std::string>();
    if (auto m = choice->find("message"); !text && m != choice->end() && m->is_object())
        if (auto c = m->find("content"); c != m->end() && c->is_string()) text = c->get<std::string>();
    resp.raw_generation = text;

    std::vector<std::pair<std::string, double>> observed;
    if (auto lp = choice->find("logprobs"); lp != choice->end() && lp->is_object()) {
        if (auto top = lp->find("top_logprobs"); top != lp->end() && top->is_array() && !top->empty() &&
                                                 (*top)[0].is_object()) {
            for (const auto& [tok, val] : (*top)[0].items())
                if (val.is_number()) observed.emplace_back(tok, val.get<double>());
        } else if (auto content = lp->find("content");
                   content != lp->end() && content->is_array() && !content->empty()) {
            if (auto tl = (*content)[0].find("top_logprobs"); tl != (*content)[0].end() && tl->is_array()) {
                for (const auto& e : *tl)
                    if (e.contains("token") && e.contains("logprob") && e["logprob"].is_number())
                        observed.emplace_back(e["token"].get<std::string>(), e["logprob"].get<double>());
            }
        }
    }
    std::erase_if(observed, [](const auto& p) { return !std::isfinite(p.second); });

    if (!observed.empty()) {
        double min_seen = std::numeric_limits<double>::infinity();
        for (const auto& [_, v] : observed) min_seen = std::min(min_seen, v);
        const double floor = min_seen - kAbsentTokenMargin;
        for (const auto& cand : candidates) {
            double best = floor;
            for (const auto& [tok, v] : observed)
                if (util::trim(tok) == cand) best = std::max(best, v);
            resp.logprobs[cand] = best;
        }
        return resp;
    }

    const double floor = -kAbsentTokenMargin;
    const std::string generated = text ? std::string(util::trim(*text)) : std::string();
    bool matched = false;
    for (const auto& cand : candidates) {
        const bool hit = !matched && generated == cand;
        matched = matched || hit;
        resp.logprobs[cand] = hit ? 0.0 : floor;
    }
    resp.unparseable = !matched;
    return resp;
}

/// Completion endpoint client. At most max_in_flight requests are
/// outstanding at once across all callers.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig cfg)
        : cfg_(std::move(cfg)),
          endpoint_(http::parse_url(cfg_.url)),
          slots_(std::clamp(cfg_.max_in_flight, 1, kMaxInFlight)) {}

    BackendResponse score_continuations(const BackendRequest& req, const CallContext& /*ctx*/) override {
        req.validate();
        nlohmann::json payload{{"prompt", req.prompt_text},
                               {"max_tokens", 1},
                               {"logprobs", cfg_.top_logprobs},
                               {"temperature", 0}};
        if (!cfg_.model.empty()) payload["model"] = cfg_.model;
        http::RetryPolicy policy;
        policy.max_retries = req.max_retries;
        policy.timeout = req.timeout;
        policy.initial_backoff = cfg_.initial_backoff;

        slots_.acquire();
        struct Release {
            std::counting_semaphore<kMaxInFlight>& s;
            ~Release() { s.release(); }
        } release{slots_};
        const auto reply = http::post_json(endpoint_, payload, cfg_.api_key, policy);
        auto resp = extract_logprobs(reply.body, req.candidate_tokens);
        resp.latency = reply.latency;
        return resp;
    }

private:
    static constexpr int kMaxInFlight = 1024;

    HttpBackendConfig cfg_;
    http::Endpoint endpoint_;
    std::counting_semaphore<kMaxInFlight> slots_;
};

}  // namespace fsprp
