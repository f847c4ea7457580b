#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "world.hpp"

using namespace fsprp;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("fsprp_test_" + name + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

testworld::Params small() {
    testworld::Params p;
    p.n_docs = 80;
    p.n_test = 4;
    p.n_train = 30;
    return p;
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::vector<nlohmann::json> provenance_rows(const fs::path& p) {
    std::vector<nlohmann::json> out;
    for (const auto& l : lines_of(util::read_file(p)))
        if (!l.empty()) out.push_back(nlohmann::json::parse(l));
    return out;
}

std::vector<std::string> tab_fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    for (std::string f; std::getline(in, f, '\t');) out.push_back(f);
    return out;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(FSPRP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(parse_config(nlohmann::json{{"corpuss", "x"}}, "."), ConfigError);
    EXPECT_THROW(parse_config(nlohmann::json{{"backend", {{"kind", "oracle"}}}}, "."), ConfigError);
}

TEST(Config, PresetsSetDepth) {
    EXPECT_EQ(parse_config(nlohmann::json::object(), ".").depth, ExperimentConfig::kInDomainDepth);
    EXPECT_EQ(parse_config(nlohmann::json{{"preset", "ood"}}, ".").depth, ExperimentConfig::kOutOfDomainDepth);
    EXPECT_EQ(parse_config(nlohmann::json{{"preset", "ood"}, {"depth", 7}}, ".").depth, 7u);
    EXPECT_THROW(parse_config(nlohmann::json{{"preset", "weird"}}, "."), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstConfigDir) {
    const auto c = parse_config(nlohmann::json{{"corpus", "c.jsonl"}, {"output_run", "/abs/out.run"}}, "/data/exp");
    EXPECT_EQ(*c.corpus, fs::path("/data/exp/c.jsonl"));
    EXPECT_EQ(c.output_run, fs::path("/abs/out.run"));
    EXPECT_EQ(c.provenance_path(), fs::path("/abs/out.run.provenance.jsonl"));
}

TEST(Config, RunTag) {
    auto c = parse_config(nlohmann::json{{"shots", 3}}, ".");
    EXPECT_EQ(c.tag(), "pairwise-LEX-3S");
    c.sampler.shots = 0;
    EXPECT_EQ(c.tag(), "pairwise-0S");
}

TEST(Config, ValidateReportsMissingInputs) {
    TempDir dir("validate");
    const auto cfg_path = testworld::write_world(testworld::make_world(small()), dir.path);
    auto c = load_config(cfg_path);
    EXPECT_NO_THROW(validate(c, Command::Rerank));
    fs::remove(dir.path / "corpus.jsonl");
    EXPECT_THROW(validate(c, Command::Rerank), ConfigError);
    c = load_config(cfg_path);
    c.sampler.neg_lo = 50;
    EXPECT_THROW(validate(c, Command::Index), ConfigError);
    c = load_config(cfg_path);
    c.selector = Selector::Static;
    EXPECT_THROW(validate(c, Command::Neighbors), ConfigError);
    EXPECT_THROW(load_config(dir.path / "nope.json"), ConfigError);
}

TEST(Pipeline, IndexIsDeterministic) {
    TempDir dir("index");
    const auto cfg = load_config(testworld::write_world(testworld::make_world(small()), dir.path));
    std::ostringstream a, b;
    EXPECT_EQ(cmd_index(cfg, a), kExitOk);
    const auto first = util::read_file(cfg.corpus_index_path());
    EXPECT_EQ(cmd_index(cfg, b), kExitOk);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(util::read_file(cfg.corpus_index_path()), first);
    EXPECT_TRUE(a.str().starts_with("corpus\t80 docs\t"));
}

TEST(Pipeline, StaleIndexIsRejected) {
    TempDir dir("stale");
    const auto world = testworld::make_world(small());
    auto cfg = load_config(testworld::write_world(world, dir.path));
    std::ostringstream sink;
    cmd_index(cfg, sink);
    auto p = small();
    p.n_docs = 90;
    testworld::write_world(testworld::make_world(p), dir.path);
    EXPECT_THROW(cmd_rerank(cfg, sink, sink), ConfigError);
}

TEST(Pipeline, NeighborsExcludeProbeAndReportJaccard) {
    TempDir dir("neighbors");
    const auto world = testworld::make_world(small());
    const auto cfg = load_config(testworld::write_world(world, dir.path));
    std::ostringstream out;
    ASSERT_EQ(cmd_neighbors(cfg, "tr3", out), kExitOk);
    const auto ls = lines_of(out.str());
    ASSERT_GE(ls.size(), 4u);
    std::vector<Query> neighbors;
    for (const auto& l : ls) {
        if (l.starts_with("#")) continue;
        const auto f = tab_fields(l);
        ASSERT_EQ(f.size(), 5u);
        EXPECT_NE(f[1], "tr3");
        neighbors.push_back(world.train.at(f[1]));
    }
    EXPECT_LE(neighbors.size(), 10u);
    char buf[64];
    std::snprintf(buf, sizeof buf, "# jaccard\t%.6f", jaccard_neighborhood(world.train.at("tr3"), neighbors));
    EXPECT_EQ(ls.back(), buf);
    EXPECT_THROW(cmd_neighbors(cfg, "missing", out), ConfigError);
}

TEST(Pipeline, StaticNeighborsEchoConfig) {
    TempDir dir("static");
    const auto cfg = load_config(testworld::write_world(testworld::make_world(small()), dir.path,
                                                        {{"selector", "static"}, {"static_ids", {"tr5", "tr9"}}}));
    for (const char* probe : {"q0", "q1"}) {
        std::ostringstream out;
        cmd_neighbors(cfg, probe, out);
        const auto ls = lines_of(out.str());
        EXPECT_TRUE(ls[2].starts_with("1\ttr5\t"));
        EXPECT_TRUE(ls[3].starts_with("2\ttr9\t"));
    }
}

TEST(Pipeline, ZeroShotRunHasNoExamples) {
    TempDir dir("zeroshot");
    const auto cfg = load_config(testworld::write_world(testworld::make_world(small()), dir.path, {{"shots", 0}}));
    std::ostringstream out, log;
    ASSERT_EQ(cmd_rerank(cfg, out, log), kExitOk) << log.str();
    const auto rows = provenance_rows(cfg.provenance_path());
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r["examples"].empty());
        EXPECT_EQ(r["run_tag"], "pairwise-0S");
        EXPECT_EQ(r["status"], "ok");
        const int d = r["depth"];
        EXPECT_EQ(r["backend_calls"], d * (d - 1));
    }
    EXPECT_TRUE(util::read_file(cfg.output_run).find("pairwise-0S") != std::string::npos);
}

TEST(Pipeline, CleanOracleRecoversGoldOrder) {
    TempDir dir("clean");
    const auto world = testworld::make_world(small());
    const auto cfg = load_config(testworld::write_world(world, dir.path));
    std::ostringstream out, log;
    ASSERT_EQ(cmd_rerank(cfg, out, log), kExitOk) << log.str();
    const auto run = read_trec_run(cfg.output_run);
    for (const auto& q : world.test) {
        const auto& first = world.first_stage.at(q.query_id);
        const std::size_t depth = std::min<std::size_t>(20, first.size());
        std::vector<std::string> expect;
        for (std::size_t i = 0; i < depth; ++i) expect.push_back(first[i].doc_id);
        std::stable_sort(expect.begin(), expect.end(), [&](const auto& a, const auto& b) {
            return world.gold.at({q.query_id, a}) > world.gold.at({q.query_id, b});
        });
        const auto& got = run.at(q.query_id);
        ASSERT_EQ(got.size(), first.size());
        for (std::size_t i = 0; i < depth; ++i) EXPECT_EQ(got[i].doc_id, expect[i]);
        for (std::size_t i = depth; i < got.size(); ++i) EXPECT_EQ(got[i].doc_id, first[i].doc_id);
    }
    for (const auto& r : provenance_rows(cfg.provenance_path())) {
        EXPECT_EQ(r["shots"], 1);
        EXPECT_LE(r["examples"].size(), 1u);
    }
}

TEST(Pipeline, FailedQueryGivesPartialExit) {
    TempDir dir("partial");
    const auto world = testworld::make_world(small());
    const auto cfg = load_config(testworld::write_world(world, dir.path));
    // drop q2's gold so the oracle cannot answer for it
    std::string gold;
    for (const auto& l : lines_of(util::read_file(dir.path / "gold.txt")))
        if (!l.starts_with("q2 ")) gold += l + "\n";
    util::write_file_atomic(dir.path / "gold.txt", gold);
    std::ostringstream out, log;
    EXPECT_EQ(cmd_rerank(cfg, out, log), kExitPartial);
    EXPECT_NE(log.str().find("q2"), std::string::npos);
    const auto run = read_trec_run(cfg.output_run);
    EXPECT_EQ(run.size(), 3u);
    EXPECT_FALSE(run.contains("q2"));
    for (const auto& r : provenance_rows(cfg.provenance_path()))
        EXPECT_EQ(r["status"], r["query_id"] == "q2" ? "failed" : "ok");
}

TEST(Pipeline, UnreachableHttpBackendFailsEveryQuery) {
    TempDir dir("http");
    const auto cfg = load_config(testworld::write_world(
        testworld::make_world(small()), dir.path,
        {{"shots", 0},
         {"depth", 2},
         {"backend", {{"type", "http"}, {"url", "http://127.0.0.1:1"}, {"retries", 0}, {"timeout_ms", 500}, {"oracle", nullptr}}}}));
    std::ostringstream out, log;
    EXPECT_EQ(cmd_rerank(cfg, out, log), kExitPartial);
    EXPECT_EQ(read_trec_run(cfg.output_run).size(), 0u);
}

TEST(Pipeline, WarmCacheAnswersEverything) {
    TempDir dir("cache");
    const auto cfg = load_config(testworld::write_world(testworld::make_world(small()), dir.path,
                                                        {{"backend", {{"cache", "cache.json"}}}}));
    std::ostringstream sink;
    ASSERT_EQ(cmd_rerank(cfg, sink, sink), kExitOk);
    const auto run1 = util::read_file(cfg.output_run);
    ASSERT_EQ(cmd_rerank(cfg, sink, sink), kExitOk);
    EXPECT_EQ(util::read_file(cfg.output_run), run1);
    for (const auto& r : provenance_rows(cfg.provenance_path())) EXPECT_EQ(r["cache_hit_rate"], 1.0);
}

TEST(Pipeline, EvaluateIdealRunScoresOne) {
    TempDir dir("ideal");
    const auto world = testworld::make_world(small());
    const auto cfg = load_config(testworld::write_world(world, dir.path));
    RunList ideal;
    for (const auto& [q, judged] : world.test_qrels.all()) {
        std::vector<std::pair<std::string, int>> v(judged.begin(), judged.end());
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        RunList::Ranking r;
        for (std::size_t i = 0; i < v.size(); ++i) r.push_back({v[i].first, -static_cast<double>(i), static_cast<int>(i) + 1});
        ideal.set(q, r);
    }
    write_trec_run(ideal, "ideal", dir.path / "ideal.run");
    EvaluateOptions opt;
    opt.runs = {dir.path / "ideal.run", dir.path / "ideal.run"};
    std::ostringstream out;
    ASSERT_EQ(cmd_evaluate(cfg, opt, out), kExitOk);
    const auto summary = nlohmann::json::parse(util::read_file(cfg.report_dir / "summary.json"));
    EXPECT_DOUBLE_EQ(summary["runs"][0]["ndcg@10"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(summary["runs"][0]["ap@100"].get<double>(), 1.0);
    EXPECT_FALSE(summary["significance"][0]["ndcg@10"]["significant"].get<bool>());
    EXPECT_TRUE(fs::exists(cfg.report_dir / "ideal.run.tsv"));
}

TEST(Pipeline, EvaluateLocalityFromProvenance) {
    TempDir dir("locality");
    const auto world = testworld::make_world(small());
    const auto cfg_path = testworld::write_world(world, dir.path);
    auto zs = load_config(cfg_path);
    zs.sampler.shots = 0;
    zs.output_run = dir.path / "zs.run";
    auto fsr = load_config(cfg_path);
    fsr.output_run = dir.path / "fs.run";
    std::ostringstream sink;
    ASSERT_EQ(cmd_rerank(zs, sink, sink), kExitOk);
    ASSERT_EQ(cmd_rerank(fsr, sink, sink), kExitOk);
    EvaluateOptions opt;
    opt.zero_shot = zs.output_run;
    opt.few_shot = fsr.output_run;
    ASSERT_EQ(cmd_evaluate(fsr, opt, sink), kExitOk);
    const auto loc = lines_of(util::read_file(fsr.report_dir / "locality.tsv"));
    EXPECT_EQ(loc.size(), 1u + world.test.size() + 1u);
    EXPECT_TRUE(loc.back().starts_with("# pearson\t"));
}

TEST(Cli, ExitCodes) {
    TempDir dir("cli");
    const auto cfg = testworld::write_world(testworld::make_world(small()), dir.path, {{"depth", 5}});
    EXPECT_EQ(run_cli("-c " + cfg.string() + " index"), 0);
    EXPECT_EQ(run_cli("-c " + cfg.string() + " --shots 0 rerank"), 0);
    EXPECT_EQ(run_cli("-c " + (dir.path / "missing.json").string() + " index"), 1);
    EXPECT_EQ(run_cli("-c " + cfg.string() + " --shots 20 rerank"), 1);
    EXPECT_EQ(run_cli("-c " + cfg.string() + " neighbors nobody"), 1);
    fs::remove(dir.path / "gold.txt");
    fs::create_directories(dir.path / "gold.txt");  // exists but unreadable as a file
    EXPECT_EQ(run_cli("-c " + cfg.string() + " rerank"), 3);
}
