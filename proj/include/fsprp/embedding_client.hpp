#pragma once

#include <string>
#include <vector>

#include "fsprp/dense_neighbors.hpp"
#include "fsprp/http_client.hpp"

namespace fsprp {

/// Embeds text through an HTTP endpoint: POST {"input": text} returning
/// {"embedding": [...]}. The result is unit-normalized. `expected_dim` of 0
/// accepts any dimension.
inline std::vector<double> fetch_embedding(const std::string& endpoint_url, const std::string& text,
                                           std::size_t expected_dim, const http::RetryPolicy& policy = {},
                                           const std::string& bearer_token = {}) {
    const auto reply = http::post_json(http::parse_url(endpoint_url), {{"input", text}}, bearer_token, policy);
    auto it = reply.body.find("embedding");
    if (it == reply.body.end() || !it->is_array())
        throw BackendError("embedding response has no \"embedding\" array", reply.attempts, 200);
    std::vector<double> vec;
    vec.reserve(it->size());
    for (const auto& x : *it) {
        if (!x.is_number()) throw BackendError("non-numeric embedding component", reply.attempts, 200);
        vec.push_back(x.get<double>());
    }
    if (expected_dim != 0 && vec.size() != expected_dim)
        throw ValidationError("embedding endpoint returned dimension " + std::to_string(vec.size()) + ", expected " +
                              std::to_string(expected_dim));
    normalize_in_place(vec);
    return vec;
}

}  // namespace fsprp
