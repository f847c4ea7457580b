// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "world.hpp"

using namespace fsprp;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool ok = true;
    std::string detail;

    void fail(const std::string& why) {
        if (ok) detail = why;
        ok = false;
    }
};

int failures = 0;

void criterion(int id, const std::string& name, double limit_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (limit_s > 0 && secs >= limit_s) o.fail("took " + std::to_string(secs) + " s, limit " + std::to_string(limit_s));
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.2f s)", secs);
    std::cout << (o.ok ? "PASS" : "FAIL") << " [PRIMARY] " << id << ". " << name << buf;
    if (!o.detail.empty()) std::cout << ": " << o.detail;
    std::cout << std::endl;
    if (!o.ok) ++failures;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fsprp_accept_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

BackendResponse random_response(std::mt19937_64& rng) {
    BackendResponse r;
    r.logprobs["1"] = -5.0 * util::uniform01(rng);
    r.logprobs["2"] = -5.0 * util::uniform01(rng);
    return r;
}

// Candidates with distinct utilities plus k arbitrary examples, for the
// end-to-end ordering and conservation checks.
struct OracleCase {
    Query query;
    std::vector<Document> docs;
    Corpus corpus;
    RunList::Ranking first_stage;
    std::vector<IclExample> examples;
    OracleWorld world;
    std::vector<std::string> gold_order;
};

OracleCase make_oracle_case(std::mt19937_64& rng, std::size_t n, std::size_t k) {
    OracleCase c;
    c.query = {"q", "which passage is best"};
    std::vector<double> utils(n);
    std::iota(utils.begin(), utils.end(), 0.0);
    util::shuffle(std::span(utils), rng);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string id = "p" + std::to_string(i);
        Document d{id, "passage number " + std::to_string(i) + " about something"};
        c.docs.push_back(d);
        c.corpus.add(d);
        c.world.gold[{"q", id}] = utils[i] + util::uniform01(rng) * 0.5;
        c.first_stage.push_back({id, static_cast<double>(n - i), static_cast<int>(i) + 1});
    }
    for (std::size_t e = 0; e < k; ++e) {
        Query eq{"ex" + std::to_string(e), "example question " + std::to_string(e)};
        Document pos{"pos" + std::to_string(e), "a relevant example passage"};
        Document neg{"neg" + std::to_string(e), "an irrelevant example passage"};
        const bool flip = util::bernoulli(rng, 0.5);
        c.examples.push_back(flip ? IclExample{eq, neg, pos, GoldLabel::Second} : IclExample{eq, pos, neg, GoldLabel::First});
    }
    for (const auto& d : c.docs) c.gold_order.push_back(d.doc_id);
    std::sort(c.gold_order.begin(), c.gold_order.end(), [&](const auto& a, const auto& b) {
        return c.world.gold.at({"q", a}) > c.world.gold.at({"q", b});
    });
    return c;
}

double mean_ndcg_of_run(const fs::path& run, const Qrels& qrels, const QuerySet& queries) {
    std::vector<std::string> only;
    for (const auto& q : queries)
        if (!qrels.judged(q.query_id).empty()) only.push_back(q.query_id);
    return mean_of(ndcg_at(read_trec_run(run), qrels, 10, &only));
}

}  // namespace

int main() {
    std::cout.setf(std::ios::unitbuf);

    criterion(1, "preference values in {0, 1/2, 1} and P(D>D') + P(D'>D) = 1 over 10,000 response pairs", 5.0,
              [](Outcome& o) {
                  auto rng = util::keyed_rng(101, "pairs");
                  for (int i = 0; i < 10000; ++i) {
                      const auto f = random_response(rng), b = random_response(rng);
                      const auto ab = resolve_preference("q", "d", "e", f, b);
                      // the same two calls seen from e's side: the swapped call is e-first
                      const auto ba = resolve_preference("q", "e", "d", b, f);
                      if (ab.value != 0.0 && ab.value != 0.5 && ab.value != 1.0) o.fail("value outside {0, 1/2, 1}");
                      if (ab.value + ba.value != 1.0) o.fail("P(D>D') + P(D'>D) != 1 at pair " + std::to_string(i));
                  }
              });

    bool conserved = true;
    std::string conservation_detail;
    criterion(2, "noise-free oracle reranking equals gold order, 100 worlds, n in [2,20], k in {0,1,3}", 30.0,
              [&](Outcome& o) {
                  auto rng = util::keyed_rng(102, "worlds");
                  const auto tpl = default_template(PromptMode::Pairwise);
                  for (int w = 0; w < 100; ++w) {
                      const std::size_t n = 2 + util::uniform_index(rng, 19);
                      for (std::size_t k : {0u, 1u, 3u}) {
                          const auto c = make_oracle_case(rng, n, k);
                          OracleBackend backend(c.world);
                          RerankContext ctx{backend, tpl, c.examples, 1, 0, std::chrono::milliseconds(1000), nullptr};
                          const auto scores = allpairs_scores(c.query, c.docs, ctx);
                          double total = 0.0;
                          for (const auto& s : scores) total += s.score;
                          if (total != static_cast<double>(n * (n - 1)) / 2.0) {
                              conserved = false;
                              conservation_detail = "world " + std::to_string(w) + " sums to " + std::to_string(total);
                          }
                          RerankOptions opts;
                          opts.depth = n;
                          const auto out = rerank_ranking(c.first_stage, c.query, c.corpus, opts, ctx);
                          for (std::size_t i = 0; i < n; ++i)
                              if (out[i].doc_id != c.gold_order[i])
                                  o.fail("world " + std::to_string(w) + " k=" + std::to_string(k) + " position " +
                                         std::to_string(i));
                      }
                  }
              });

    criterion(3, "all-pairs scores sum to n(n-1)/2 in every world above", 0, [&](Outcome& o) {
        if (!conserved) o.fail(conservation_detail);
    });

    criterion(4, "nDCG@10 and AP@100 match brute force on 200 instances; threshold-1 AP equals classical AP", 0,
              [](Outcome& o) {
                  auto rng = util::keyed_rng(104, "metrics");
                  for (int t = 0; t < 200; ++t) {
                      Qrels qr;
                      std::map<std::string, int> judged;
                      std::set<std::string> binary_rel;
                      Qrels binary;
                      for (int d = 0; d < 150; ++d) {
                          const auto id = "d" + std::to_string(d);
                          if (util::bernoulli(rng, 0.3)) {
                              const int g = static_cast<int>(util::uniform_index(rng, 4));
                              qr.set("q", id, g);
                              judged[id] = g;
                          }
                          const bool r = util::bernoulli(rng, 0.2);
                          binary.set("q", id, r ? 1 : 0);
                          if (r) binary_rel.insert(id);
                      }
                      std::vector<int> order(150);
                      std::iota(order.begin(), order.end(), 0);
                      util::shuffle(std::span(order), rng);
                      const auto len = 1 + util::uniform_index(rng, 140);
                      std::vector<std::string> ranked;
                      RunList run;
                      RunList::Ranking rk;
                      for (std::size_t i = 0; i < len; ++i) {
                          ranked.push_back("d" + std::to_string(order[i]));
                          rk.push_back({ranked.back(), -static_cast<double>(i), static_cast<int>(i) + 1});
                      }
                      run.set("q", rk);
                      if (std::fabs(ndcg_at(run, qr).at("q") - oracle::ndcg(ranked, judged, 10)) > 1e-9)
                          o.fail("nDCG@10 mismatch at instance " + std::to_string(t));
                      if (std::fabs(ap_at(run, qr).at("q") - oracle::ap(ranked, judged, 100, 2)) > 1e-9)
                          o.fail("AP@100 mismatch at instance " + std::to_string(t));
                      if (std::fabs(ap_at(run, binary, 100, 1).at("q") - oracle::classical_ap(ranked, binary_rel, 100)) > 1e-9)
                          o.fail("classical AP mismatch at instance " + std::to_string(t));
                  }
              });

    criterion(5, "Jaccard of the CDG query pair is 4/11", 0, [](Outcome& o) {
        const double j = jaccard("Is CDG airport in main Paris?", "Which airport in Paris is closest to the city?");
        if (std::fabs(j - 4.0 / 11.0) > 1e-12) o.fail("got " + std::to_string(j));
    });

    criterion(6, "sampler: 10,000 triples, no relevant negatives, negatives in (m, M], flip rate in [0.48, 0.52]", 0,
              [](Outcome& o) {
                  testworld::Params p;
                  p.n_train = 60;
                  const auto w = testworld::make_world(p);
                  const auto index = InvertedIndex::build(w.corpus);
                  const TrainingData data{w.train, w.train_qrels, w.corpus, index};
                  SamplerConfig cfg;
                  cfg.shots = 3;
                  cfg.pool_size = 10;
                  cfg.neg_lo = 5;
                  cfg.neg_hi = 40;
                  cfg.seed = 9;
                  std::map<std::string, std::map<std::string, int>> ranks;
                  for (const auto& q : w.train) {
                      auto& r = ranks[q.query_id];
                      for (const auto& h : index.search(q.text, 1000)) r[h.item_id] = h.rank;
                  }
                  std::vector<std::string> train_ids;
                  for (const auto& q : w.train) train_ids.push_back(q.query_id);
                  auto rng = util::keyed_rng(106, "pools");
                  std::size_t triples = 0, flips = 0;
                  for (int probe = 0; triples < 10000; ++probe) {
                      util::shuffle(std::span(train_ids), rng);
                      Neighborhood nb{"probe" + std::to_string(probe), {}, Selector::Static};
                      for (int i = 0; i < 10; ++i) nb.candidates.push_back({train_ids[static_cast<std::size_t>(i)], 1.0});
                      for (const auto& e : sample_examples(nb, data, cfg).examples) {
                          ++triples;
                          flips += e.gold_label == GoldLabel::First;
                          const auto& eq = e.example_query.query_id;
                          if (w.train_qrels.grade(eq, e.negative().doc_id) >= cfg.relevance_threshold)
                              o.fail("relevant negative for " + eq);
                          if (w.train_qrels.grade(eq, e.positive().doc_id) < cfg.relevance_threshold)
                              o.fail("non-relevant positive for " + eq);
                          const auto& r = ranks[eq];
                          auto it = r.find(e.negative().doc_id);
                          if (it == r.end() || it->second <= cfg.neg_lo || it->second > cfg.neg_hi)
                              o.fail("negative outside the rank window for " + eq);
                      }
                  }
                  const double rate = static_cast<double>(flips) / static_cast<double>(triples);
                  char buf[96];
                  std::snprintf(buf, sizeof buf, "%zu triples, label \"1\" rate %.4f", triples, rate);
                  if (rate < 0.48 || rate > 0.52) o.fail(buf);
                  else if (o.ok) o.detail = buf;
              });

    criterion(7, "BM25 top-K equals exhaustive scoring on 50 random corpora", 0, [](Outcome& o) {
        auto rng = util::keyed_rng(107, "bm25");
        for (int c = 0; c < 50; ++c) {
            const std::size_t n = 1 + util::uniform_index(rng, 200);
            const std::size_t vocab = 5 + util::uniform_index(rng, 60);
            Corpus corpus;
            std::vector<std::pair<std::string, std::string>> raw;
            for (std::size_t d = 0; d < n; ++d) {
                std::string text;
                const auto len = 1 + util::uniform_index(rng, 30);
                for (std::size_t i = 0; i < len; ++i) text += "w" + std::to_string(util::uniform_index(rng, vocab)) + " ";
                corpus.add({"doc" + std::to_string(d), text});
                raw.emplace_back("doc" + std::to_string(d), text);
            }
            const auto index = InvertedIndex::build(corpus);
            for (int qi = 0; qi < 5; ++qi) {
                std::string query;
                const auto len = 1 + util::uniform_index(rng, 5);
                for (std::size_t i = 0; i < len; ++i) query += "w" + std::to_string(util::uniform_index(rng, vocab + 3)) + " ";
                const std::size_t k = 1 + util::uniform_index(rng, 50);
                const auto hits = index.search(query, k);
                const auto expect = oracle::bm25(raw, query);
                if (hits.size() != std::min(k, expect.size())) {
                    o.fail("corpus " + std::to_string(c) + ": wrong hit count");
                    continue;
                }
                for (std::size_t i = 0; i < hits.size(); ++i)
                    if (hits[i].item_id != expect[i].id) o.fail("corpus " + std::to_string(c) + ": order differs");
            }
        }
    });

    criterion(8, "top_k_cosine equals brute force over 500 random unit vectors", 0, [](Outcome& o) {
        auto rng = util::keyed_rng(108, "dense");
        std::normal_distribution<double> gauss;
        EmbeddingStore store;
        std::vector<std::pair<std::string, std::vector<double>>> raw;
        for (int i = 0; i < 500; ++i) {
            std::vector<double> v(16);
            double norm = 0;
            for (auto& x : v) {
                x = gauss(rng);
                norm += x * x;
            }
            for (auto& x : v) x /= std::sqrt(norm);
            char id[16];
            std::snprintf(id, sizeof id, "v%03d", i);
            store.add(id, v);
            raw.emplace_back(id, v);
        }
        for (int t = 0; t < 50; ++t) {
            std::vector<double> probe(16);
            for (auto& x : probe) x = gauss(rng);
            const auto hits = top_k_cosine(store, probe, 500);
            const auto expect = oracle::cosine_rank(raw, probe);
            if (hits.size() != expect.size()) o.fail("hit count");
            for (std::size_t i = 0; i < std::min(hits.size(), expect.size()); ++i)
                if (hits[i].item_id != expect[i].id) o.fail("probe " + std::to_string(t) + ": order differs");
        }
    });

    criterion(9, "two warm-cache rerank runs give byte-identical run and provenance files", 0, [](Outcome& o) {
        const auto dir = scratch("determinism");
        auto p = testworld::Params{};
        const auto cfg = load_config(testworld::write_world(
            testworld::make_world(p), dir,
            {{"workers", 2}, {"backend", {{"cache", "cache.json"}, {"oracle", {{"noise_rate", 0.2}, {"seed", 5}}}}}}));
        std::ostringstream sink;
        if (cmd_rerank(cfg, sink, sink) != kExitOk) o.fail("warm-up run failed");
        std::vector<std::pair<std::string, std::string>> outputs;
        for (int r = 0; r < 2; ++r) {
            if (cmd_rerank(cfg, sink, sink) != kExitOk) o.fail("run failed");
            outputs.emplace_back(util::read_file(cfg.output_run), util::read_file(cfg.provenance_path()));
        }
        if (outputs[0].first != outputs[1].first) o.fail("run files differ");
        if (outputs[0].second != outputs[1].second) o.fail("provenance logs differ");
        fs::remove_all(dir);
    });

    criterion(10, "noise 0.3: k=1 locality-selected examples beat k=0 on mean nDCG@10 by >= 0.01 over 20 seeds", 120.0,
              [](Outcome& o) {
                  double zero_sum = 0.0, few_sum = 0.0;
                  const int seeds = 20;
                  for (int s = 0; s < seeds; ++s) {
                      const auto dir = scratch("locality" + std::to_string(s));
                      testworld::Params p;
                      p.seed = 1000 + static_cast<std::uint64_t>(s);
                      const auto w = testworld::make_world(p);
                      const auto cfg_path = testworld::write_world(
                          w, dir,
                          {{"seed", s},
                           {"backend",
                            {{"oracle", {{"noise_rate", 0.3}, {"seed", s}, {"locality_factor", 0.5}}}}}});
                      auto zero = load_config(cfg_path);
                      zero.sampler.shots = 0;
                      zero.output_run = dir / "zero.run";
                      auto few = load_config(cfg_path);
                      few.output_run = dir / "few.run";
                      std::ostringstream sink;
                      if (cmd_rerank(zero, sink, sink) != kExitOk || cmd_rerank(few, sink, sink) != kExitOk) {
                          o.fail("rerank failed for seed " + std::to_string(s));
                          return;
                      }
                      zero_sum += mean_ndcg_of_run(zero.output_run, w.test_qrels, w.test);
                      few_sum += mean_ndcg_of_run(few.output_run, w.test_qrels, w.test);
                      fs::remove_all(dir);
                  }
                  const double z = zero_sum / seeds, f = few_sum / seeds;
                  char buf[96];
                  std::snprintf(buf, sizeof buf, "k=0 %.4f, k=1 %.4f, margin %.4f", z, f, f - z);
                  if (f - z < 0.01) o.fail(buf);
                  else if (o.ok) o.detail = buf;
              });

    criterion(11, "paired t-test p-values match numerically integrated Student-t on 100 vector pairs", 0,
              [](Outcome& o) {
                  auto rng = util::keyed_rng(111, "ttest");
                  double worst = 0.0;
                  for (int t = 0; t < 100; ++t) {
                      const int n = 3 + static_cast<int>(util::uniform_index(rng, 50));
                      const double shift = (util::uniform01(rng) - 0.5) * 0.2;
                      PerQuery a, b;
                      for (int i = 0; i < n; ++i) {
                          const auto q = "q" + std::to_string(i);
                          a[q] = util::uniform01(rng);
                          b[q] = a[q] * 0.6 + util::uniform01(rng) * 0.4 + shift;
                      }
                      const auto r = paired_t_test(a, b);
                      std::vector<double> va, vb;
                      for (const auto& [q, v] : a) {
                          va.push_back(v);
                          vb.push_back(b.at(q));
                      }
                      const double t_ref = oracle::paired_t(va, vb);
                      const double p_ref = oracle::t_two_sided_p(t_ref, n - 1);
                      if (std::fabs(r.t_stat - t_ref) > 1e-9) o.fail("t statistic differs at pair " + std::to_string(t));
                      worst = std::max(worst, std::fabs(r.p_value - p_ref));
                  }
                  char buf[64];
                  std::snprintf(buf, sizeof buf, "max |dp| = %.2e", worst);
                  if (worst > 1e-6) o.fail(buf);
                  else if (o.ok) o.detail = buf;
              });

    return failures == 0 ? 0 : 1;
}
