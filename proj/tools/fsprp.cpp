#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsprp/fsprp.hpp"

namespace {

struct Overrides {
    std::optional<int> shots, pool_size, neg_lo, neg_hi, workers;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> selector, mode, output, tag, cache;
    std::optional<std::vector<std::string>> static_ids;
    std::optional<std::size_t> depth;

    void add_to(CLI::App* app) {
        app->add_option("--shots", shots, "number of in-context examples (k)");
        app->add_option("--pool-size", pool_size, "neighborhood size (K)");
        app->add_option("--neg-lo", neg_lo, "hard negatives from BM25 ranks above this");
        app->add_option("--neg-hi", neg_hi, "...up to and including this rank");
        app->add_option("--seed", seed, "sampling seed");
        app->add_option("--selector", selector, "lex, sem or static");
        app->add_option("--static-ids", static_ids, "training query ids for the static selector")->delimiter(',');
        app->add_option("--depth", depth, "rerank depth");
        app->add_option("--mode", mode, "pairwise, pointwise or setwise");
        app->add_option("--workers", workers, "queries processed concurrently");
        app->add_option("--output", output, "output run path");
        app->add_option("--tag", tag, "run tag");
        app->add_option("--cache", cache, "response cache path");
    }

    void apply(fsprp::ExperimentConfig& c) const {
        if (shots) c.sampler.shots = *shots;
        if (pool_size) c.sampler.pool_size = *pool_size;
        if (neg_lo) c.sampler.neg_lo = *neg_lo;
        if (neg_hi) c.sampler.neg_hi = *neg_hi;
        if (seed) c.sampler.seed = *seed;
        if (selector) c.selector = fsprp::parse_selector(*selector);
        if (static_ids) c.static_ids = *static_ids;
        if (depth) c.depth = *depth;
        if (mode) c.mode = fsprp::parse_prompt_mode(*mode);
        if (workers) c.workers = *workers;
        if (output) {
            c.output_run = *output;
            c.output_provenance.reset();
        }
        if (tag) c.run_tag = *tag;
        if (cache) c.backend.cache = fsprp::fs::path(*cache);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot pairwise reranking"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("-c,--config", config_path, "experiment config (JSON)")->required();
    Overrides ov;
    ov.add_to(&app);

    auto* index = app.add_subcommand("index", "build sparse indexes for corpus and training queries");
    auto* neighbors = app.add_subcommand("neighbors", "print the neighborhood of one query");
    std::string probe;
    neighbors->add_option("query_id", probe, "query to inspect")->required();
    auto* rerank = app.add_subcommand("rerank", "rerank the first-stage run");
    auto* evaluate = app.add_subcommand("evaluate", "score runs against qrels");
    fsprp::EvaluateOptions eval_opts;
    std::vector<std::string> run_paths;
    std::vector<std::string> locality;
    std::string report_dir;
    evaluate->add_option("runs", run_paths, "TREC run files");
    evaluate->add_option("--locality", locality, "zero-shot and few-shot runs for the Jaccard report")->expected(2);
    evaluate->add_option("--alpha", eval_opts.alpha, "significance level");
    evaluate->add_option("--report-dir", report_dir, "where TSV and JSON reports go");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = fsprp::load_config(config_path);
        ov.apply(cfg);
        if (*index) return fsprp::cmd_index(cfg, std::cout);
        if (*neighbors) return fsprp::cmd_neighbors(cfg, probe, std::cout);
        if (*rerank) return fsprp::cmd_rerank(cfg, std::cout, std::cerr);
        for (const auto& r : run_paths) eval_opts.runs.emplace_back(r);
        if (!locality.empty()) {
            eval_opts.zero_shot = locality[0];
            eval_opts.few_shot = locality[1];
        }
        if (!report_dir.empty()) cfg.report_dir = report_dir;
        return fsprp::cmd_evaluate(cfg, eval_opts, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return fsprp::exit_code_for(e);
    }
}
