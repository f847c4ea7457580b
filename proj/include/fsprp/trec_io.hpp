#pragma once

// Readers and writers for the experiment interchange files:
//   run     "qid Q0 docid rank score tag"   (six whitespace-separated fields)
//   qrels   "qid 0 docid grade"             (four fields, integer grade >= 0)
//   corpus  {"id": ..., "text": ...}        (one JSON object per line)
//   queries "qid<TAB>text"
// Blank lines are ignored everywhere. Every other malformed line raises
// ParseError with its line number.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

#include "fsprp/error.hpp"
#include "fsprp/types.hpp"
#include "fsprp/util/files.hpp"
#include "fsprp/util/text.hpp"

namespace fsprp {

namespace detail {

inline bool blank(std::string_view line) { return util::trim(line).empty(); }

}  // namespace detail

/// Sorts by score descending, doc_id ascending, and renumbers ranks from 1.
inline void normalize_ranking(RunList::Ranking& ranking) {
    std::sort(ranking.begin(), ranking.end(), [](const RunEntry& a, const RunEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    for (std::size_t i = 0; i < ranking.size(); ++i) ranking[i].rank = static_cast<int>(i) + 1;
}

inline RunList parse_trec_run(std::string_view text, const std::string& source = "<run>") {
    std::map<std::string, RunList::Ranking> by_query;
    std::map<std::string, std::set<std::string>> seen;
    util::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (detail::blank(line)) return;
        const auto f = util::split_ws(line);
        if (f.size() != 6) throw ParseError(source, lineno, "expected 6 fields, got " + std::to_string(f.size()));
        if (!util::parse_int(f[3])) throw ParseError(source, lineno, "rank is not an integer");
        const auto score = util::parse_double(f[4]);
        if (!score || !std::isfinite(*score)) throw ParseError(source, lineno, "score is not a finite number");
        std::string qid(f[0]), doc(f[2]);
        if (!seen[qid].insert(doc).second)
            throw ValidationError(source + ":" + std::to_string(lineno) + ": duplicate document " + doc +
                                  " for query " + qid);
        by_query[qid].push_back(RunEntry{std::move(doc), *score, 0});
    });
    RunList run;
    for (auto& [qid, ranking] : by_query) {
        normalize_ranking(ranking);
        run.set(qid, std::move(ranking));
    }
    return run;
}

/// Ranks in the file are ignored: entries are re-sorted by score (ties by
/// doc_id) and renumbered. The tag column is discarded.
inline RunList read_trec_run(const std::filesystem::path& path) {
    return parse_trec_run(util::read_file(path), path.string());
}

inline std::string format_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", score);
    return buf;
}

inline std::string format_trec_run(const RunList& run, std::string_view tag) {
    std::string out;
    for (const auto& [qid, ranking] : run) {
        for (const auto& e : ranking) {
            out += qid;
            out += " Q0 ";
            out += e.doc_id;
            out += ' ';
            out += std::to_string(e.rank);
            out += ' ';
            out += format_score(e.score);
            out += ' ';
            out += tag;
            out += '\n';
        }
    }
    return out;
}

inline void write_trec_run(const RunList& run, std::string_view tag, const std::filesystem::path& path) {
    if (tag.empty() || util::split_ws(tag).size() != 1) throw ArgumentError("run tag must be a single non-empty token");
    util::write_file_atomic(path, format_trec_run(run, tag));
}

inline Qrels parse_qrels(std::string_view text, const std::string& source = "<qrels>") {
    Qrels qrels;
    std::set<std::pair<std::string, std::string>> seen;
    util::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (detail::blank(line)) return;
        const auto f = util::split_ws(line);
        if (f.size() != 4) throw ParseError(source, lineno, "expected 4 fields, got " + std::to_string(f.size()));
        const auto grade = util::parse_int(f[3]);
        if (!grade) throw ParseError(source, lineno, "grade is not an integer");
        if (*grade < 0) throw ValidationError(source + ":" + std::to_string(lineno) + ": negative grade");
        std::string qid(f[0]), doc(f[2]);
        if (!seen.emplace(qid, doc).second)
            throw ValidationError(source + ":" + std::to_string(lineno) + ": duplicate judgment " + qid + "/" + doc);
        qrels.set(qid, doc, static_cast<int>(*grade));
    });
    return qrels;
}

inline Qrels read_qrels(const std::filesystem::path& path) {
    return parse_qrels(util::read_file(path), path.string());
}

inline Corpus parse_jsonl_corpus(std::string_view text, const std::string& source = "<corpus>") {
    Corpus corpus;
    util::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (detail::blank(line)) return;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(source, lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(source, lineno, "expected a JSON object");
        auto id = obj.find("id");
        auto txt = obj.find("text");
        if (id == obj.end() || !id->is_string()) throw ParseError(source, lineno, "missing string \"id\"");
        if (txt == obj.end() || !txt->is_string()) throw ParseError(source, lineno, "missing string \"text\"");
        try {
            corpus.add(Document{id->get<std::string>(), txt->get<std::string>()});
        } catch (const ValidationError& e) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    return corpus;
}

inline Corpus read_jsonl_corpus(const std::filesystem::path& path) {
    return parse_jsonl_corpus(util::read_file(path), path.string());
}

inline QuerySet parse_tsv_queries(std::string_view text, const std::string& source = "<queries>") {
    QuerySet queries;
    util::for_each_line(text, [&](std::string_view line, std::size_t lineno) {
        if (detail::blank(line)) return;
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) throw ParseError(source, lineno, "expected qid<TAB>text");
        const auto qid = util::trim(line.substr(0, tab));
        if (qid.empty()) throw ParseError(source, lineno, "empty query id");
        try {
            queries.add(Query{std::string(qid), std::string(line.substr(tab + 1))});
        } catch (const ValidationError& e) {
            throw ValidationError(source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    });
    return queries;
}

inline QuerySet read_tsv_queries(const std::filesystem::path& path) {
    return parse_tsv_queries(util::read_file(path), path.string());
}

}  // namespace fsprp
