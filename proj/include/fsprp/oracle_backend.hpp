#pragma once

// Deterministic simulated backend. Answers every prompt from gold utilities
// instead of model inference, with seeded answer noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fsprp/analyzer.hpp"
#include "fsprp/backend.hpp"
#include "fsprp/error.hpp"
#include "fsprp/util/files.hpp"
#include "fsprp/util/hash.hpp"
#include "fsprp/util/random.hpp"
#include "fsprp/util/text.hpp"

namespace fsprp {

struct OracleWorld {
    std::map<std::pair<std::string, std::string>, double> gold;  // (query_id, doc_id) -> utility
    double noise_rate = 0.0;
    std::uint64_t seed = 0;
    // Multiplies noise_rate when an in-context example query shares a term
    // with the live query. 1.0 turns the effect off.
    double locality_factor = 1.0;
    // Pointwise answers use P(true) = 1 / (1 + exp(pointwise_center - utility)).
    double pointwise_center = 0.5;

    void validate() const {
        if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("oracle noise_rate must be in [0, 1]");
        if (!(locality_factor >= 0.0 && locality_factor <= 1.0))
            throw ConfigError("oracle locality_factor must be in [0, 1]");
    }

    double utility(const std::string& query_id, const std::string& doc_id) const {
        auto it = gold.find({query_id, doc_id});
        if (it == gold.end()) throw OracleError("no gold utility for " + query_id + "/" + doc_id);
        return it->second;
    }
};

/// Gold file: "qid 0 docid utility" per line, utility any finite real.
inline OracleWorld parse_gold(std::string_view text, const std::string& source = "<gold>") {
    OracleWorld world;
    util::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (util::trim(line).empty()) return;
        const auto f = util::split_ws(line);
        if (f.size() != 4) throw ParseError(source, lineno, "expected 4 fields");
        const auto u = util::parse_double(f[3]);
        if (!u || !std::isfinite(*u)) throw ParseError(source, lineno, "utility is not a finite number");
        if (!world.gold.emplace(std::pair{std::string(f[0]), std::string(f[2])}, *u).second)
            throw ValidationError(source + ":" + std::to_string(lineno) + ": duplicate gold entry");
    });
    return world;
}

inline OracleWorld load_gold(const std::filesystem::path& path) {
    return parse_gold(util::read_file(path), path.string());
}

class OracleBackend : public Backend {
public:
    static constexpr double kWinnerLogprob = -0.1;
    static constexpr double kLoserLogprob = -3.0;

    explicit OracleBackend(OracleWorld world) : world_(std::move(world)) { world_.validate(); }

    const OracleWorld& world() const { return world_; }

    /// Noise actually applied to a call with this context.
    double effective_noise(const CallContext& ctx) const {
        if (world_.locality_factor == 1.0 || ctx.example_query_texts.empty()) return world_.noise_rate;
        const auto probe = term_set(ctx.query_text);
        for (const auto& ex : ctx.example_query_texts)
            for (const auto& t : analyze(ex))
                if (probe.contains(t)) return world_.noise_rate * world_.locality_factor;
        return world_.noise_rate;
    }

    BackendResponse score_continuations(const BackendRequest& req, const CallContext& ctx) override {
        req.validate();
        const auto& tokens = req.candidate_tokens;
        if (tokens.size() == 2 && tokens[0] == "true" && tokens[1] == "false") return pointwise(ctx);
        return select_slot(req, ctx);
    }

private:
    // One uniform draw per (seed, query, unordered doc set, slot order).
    double noise_draw(const CallContext& ctx) const {
        auto sorted = ctx.doc_ids;
        std::sort(sorted.begin(), sorted.end());
        util::Fnv1a h;
        h.u64(world_.seed).field(ctx.query_id);
        for (const auto& d : sorted) h.field(d);
        h.u64(0x5107);  // separator between the set and its order
        for (const auto& d : ctx.doc_ids) h.field(d);
        return util::uniform01(util::splitmix64(h.value()));
    }

    // Pairwise and setwise: the slot holding the highest utility wins
    // (ties go to the earlier slot). Under noise, pairwise answers invert
    // and setwise answers move to another slot chosen by the same draw.
    BackendResponse select_slot(const BackendRequest& req, const CallContext& ctx) const {
        const auto& tokens = req.candidate_tokens;
        if (ctx.doc_ids.size() != tokens.size())
            throw OracleError("oracle needs one document id per candidate slot");
        std::size_t best = 0;
        double best_u = world_.utility(ctx.query_id, ctx.doc_ids[0]);
        for (std::size_t i = 1; i < ctx.doc_ids.size(); ++i) {
            const double u = world_.utility(ctx.query_id, ctx.doc_ids[i]);
            if (u > best_u) {
                best = i;
                best_u = u;
            }
        }
        const double noise = effective_noise(ctx);
        const double draw = noise_draw(ctx);
        if (draw < noise) {
            // rescale the draw to pick one of the other slots uniformly
            const double r = noise > 0.0 ? draw / noise : 0.0;
            const auto others = tokens.size() - 1;
            auto pick = std::min<std::size_t>(others - 1, static_cast<std::size_t>(r * static_cast<double>(others)));
            best = pick >= best ? pick + 1 : pick;
        }
        BackendResponse resp;
        for (std::size_t i = 0; i < tokens.size(); ++i) resp.logprobs[tokens[i]] = i == best ? kWinnerLogprob : kLoserLogprob;
        resp.raw_generation = tokens[best];
        return resp;
    }

    BackendResponse pointwise(const CallContext& ctx) const {
        if (ctx.doc_ids.size() != 1) throw OracleError("pointwise oracle needs exactly one document id");
        const double x = world_.utility(ctx.query_id, ctx.doc_ids[0]) - world_.pointwise_center;
        // log sigmoid, written to avoid overflow for large |x|
        auto log_sigmoid = [](double v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); };
        double lt = log_sigmoid(x), lf = log_sigmoid(-x);
        if (noise_draw(ctx) < effective_noise(ctx)) std::swap(lt, lf);
        BackendResponse resp;
        resp.logprobs["true"] = lt;
        resp.logprobs["false"] = lf;
        resp.raw_generation = lt >= lf ? "true" : "false";
        return resp;
    }

    OracleWorld world_;
};

}  // namespace fsprp
