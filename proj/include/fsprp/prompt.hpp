#pragma once

// Prompt rendering for pairwise, pointwise and setwise relevance prompts.
//
// A template is a skeleton with {name} placeholders plus a format for each
// in-context example block. Substitution is single-pass: text inserted for a
// placeholder is never rescanned, so passages containing "{query}" are safe.
//
// Template files are UTF-8 text split into sections by marker lines:
//
//   @@ mode pairwise
//   @@ prompt
//   ...skeleton using {examples} {query} {passage1} {passage2} {label}...
//   @@ example
//   ...one example block...
//   @@ passage            (setwise only: one numbered passage line)
//
// Each section body ends before the next marker line, minus one trailing
// newline.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fsprp/error.hpp"
#include "fsprp/icl_examples.hpp"
#include "fsprp/types.hpp"
#include "fsprp/util/files.hpp"
#include "fsprp/util/text.hpp"

namespace fsprp {

enum class PromptMode { Pairwise, Pointwise, Setwise };

inline std::string_view to_string(PromptMode m) {
    switch (m) {
        case PromptMode::Pairwise: return "pairwise";
        case PromptMode::Pointwise: return "pointwise";
        case PromptMode::Setwise: return "setwise";
    }
    return "?";
}

inline PromptMode parse_prompt_mode(std::string_view s) {
    if (s == "pairwise") return PromptMode::Pairwise;
    if (s == "pointwise") return PromptMode::Pointwise;
    if (s == "setwise") return PromptMode::Setwise;
    throw ConfigError("unknown mode: " + std::string(s) + " (expected pairwise, pointwise or setwise)");
}

inline constexpr std::size_t kMaxSetSize = 10;

struct PromptTemplate {
    PromptMode mode = PromptMode::Pairwise;
    std::string instruction_text;      // the prompt skeleton
    std::string example_block_format;  // one in-context example
    std::string passage_format;        // setwise list item; uses {index} and {passage}
    std::size_t truncation_budget = 2000;  // characters (code points) per passage
    std::size_t max_prompt_chars = 0;      // 0 disables the whole-prompt check

    /// Fixed answer tokens for the mode; setwise depends on the set size.
    std::vector<std::string> answer_tokens(std::size_t set_size = 2) const {
        switch (mode) {
            case PromptMode::Pairwise: return {"1", "2"};
            case PromptMode::Pointwise: return {"true", "false"};
            case PromptMode::Setwise: {
                std::vector<std::string> out;
                for (std::size_t i = 1; i <= set_size; ++i) out.push_back(std::to_string(i));
                return out;
            }
        }
        return {};
    }
};

inline PromptTemplate default_template(PromptMode mode) {
    PromptTemplate t;
    t.mode = mode;
    switch (mode) {
        case PromptMode::Pairwise:
            t.instruction_text =
                "Given a query and two passages, decide which passage is more relevant to the query. "
                "Output only the passage label, either 1 or 2.\n\n"
                "{examples}Query: {query}\nPassage 1: {passage1}\nPassage 2: {passage2}\nOutput: {label}";
            t.example_block_format = "Query: {query}\nPassage 1: {passage1}\nPassage 2: {passage2}\nOutput: {label}\n\n";
            break;
        case PromptMode::Pointwise:
            t.instruction_text =
                "Is the passage relevant to the query? Answer true or false.\n\n"
                "{examples}Query: {query}\nPassage: {passage}\nRelevant: {label}";
            t.example_block_format = "Query: {query}\nPassage: {passage}\nRelevant: {label}\n\n";
            break;
        case PromptMode::Setwise:
            t.instruction_text =
                "Given a query and {count} passages, output only the label of the passage most relevant "
                "to the query.\n\n"
                "{examples}Query: {query}\n{passages}Output: {label}";
            t.example_block_format = "Query: {query}\n{passages}Output: {label}\n\n";
            t.passage_format = "Passage {index}: {passage}\n";
            break;
    }
    return t;
}

inline PromptTemplate parse_template(std::string_view text, PromptMode expected, const std::string& source = "<template>") {
    PromptTemplate t = default_template(expected);
    std::map<std::string, std::string> sections;
    std::string current;
    std::string body;
    bool have_section = false;
    auto flush = [&] {
        if (!have_section) return;
        if (!body.empty() && body.back() == '\n') body.pop_back();
        sections[current] = std::move(body);
        body.clear();
    };
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        const bool last = end == std::string_view::npos;
        if (last) end = text.size();
        auto line = text.substr(start, end - start);
        ++lineno;
        if (line.starts_with("@@ ")) {
            const auto words = util::split_ws(line.substr(3));
            if (words.empty()) throw ParseError(source, lineno, "empty section marker");
            if (words[0] == "mode") {
                if (words.size() != 2) throw ParseError(source, lineno, "expected '@@ mode <name>'");
                if (parse_prompt_mode(words[1]) != expected)
                    throw ConfigError(source + ": template is for mode " + std::string(words[1]) + ", expected " +
                                      std::string(to_string(expected)));
            } else {
                flush();
                current = std::string(words[0]);
                if (current != "prompt" && current != "example" && current != "passage")
                    throw ParseError(source, lineno, "unknown section '" + current + "'");
                if (sections.contains(current)) throw ParseError(source, lineno, "duplicate section '" + current + "'");
                have_section = true;
            }
        } else if (have_section) {
            body.append(line);
            if (!last) body.push_back('\n');
        } else if (!util::trim(line).empty()) {
            throw ParseError(source, lineno, "text before the first section marker");
        }
        if (last) break;
        start = end + 1;
    }
    flush();
    if (!sections.contains("prompt")) throw ParseError(source, lineno, "missing '@@ prompt' section");
    t.instruction_text = sections["prompt"];
    if (sections.contains("example")) t.example_block_format = sections["example"];
    if (sections.contains("passage")) t.passage_format = sections["passage"];
    return t;
}

inline PromptTemplate load_template(const std::filesystem::path& path, PromptMode expected) {
    return parse_template(util::read_file(path), expected, path.string());
}

struct PromptProvenance {
    std::vector<std::string> example_query_ids;
    std::vector<std::string> passage_doc_ids;  // every passage, in text order

    bool operator==(const PromptProvenance&) const = default;
};

struct RenderedPrompt {
    std::string text;
    std::vector<std::string> answer_tokens;
    PromptProvenance provenance;
};

using Placeholders = std::vector<std::pair<std::string_view, std::string_view>>;

/// Replaces {name} occurrences in one left-to-right pass. Unknown
/// placeholders are copied through unchanged.
inline std::string substitute(std::string_view fmt, const Placeholders& values) {
    std::string out;
    out.reserve(fmt.size());
    std::size_t i = 0;
    while (i < fmt.size()) {
        if (fmt[i] == '{') {
            const auto close = fmt.find('}', i + 1);
            if (close != std::string_view::npos) {
                const auto name = fmt.substr(i + 1, close - i - 1);
                bool replaced = false;
                for (const auto& [key, value] : values) {
                    if (key == name) {
                        out.append(value);
                        replaced = true;
                        break;
                    }
                }
                if (replaced) {
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(fmt[i++]);
    }
    return out;
}

namespace detail {

inline bool is_space_at(std::string_view s, std::size_t pos, std::size_t* len) {
    const auto d = util::decode_utf8(s, pos);
    *len = d.len;
    return d.cp != util::kInvalidCodepoint && util::is_unicode_space(d.cp);
}

}  // namespace detail

/// Cuts text to at most `budget` code points, ending at a whitespace
/// boundary. Text that already fits is returned unchanged. Throws
/// RenderError if the cut leaves nothing.
inline std::string truncate_passage(std::string_view text, std::size_t budget) {
    std::size_t pos = 0;
    std::size_t count = 0;
    std::size_t last_space = std::string_view::npos;
    while (pos < text.size() && count < budget) {
        std::size_t len;
        if (detail::is_space_at(text, pos, &len)) last_space = pos;
        pos += len;
        ++count;
    }
    if (pos >= text.size()) return std::string(text);
    std::size_t len;
    std::size_t cut = detail::is_space_at(text, pos, &len) ? pos : last_space;
    std::string out = cut == std::string_view::npos ? std::string() : std::string(text.substr(0, cut));
    // drop trailing whitespace left by the cut
    while (!out.empty()) {
        std::size_t back = out.size() - 1;
        while (back > 0 && (static_cast<unsigned char>(out[back]) & 0xC0) == 0x80) --back;
        std::size_t l;
        if (!detail::is_space_at(out, back, &l)) break;
        out.resize(back);
    }
    if (out.empty())
        throw RenderError("passage truncates to empty under a budget of " + std::to_string(budget) + " characters");
    return out;
}

namespace detail {

inline void check_prompt_budget(const PromptTemplate& tpl, const std::string& text) {
    if (tpl.max_prompt_chars != 0 && util::codepoint_count(text) > tpl.max_prompt_chars)
        throw RenderError("rendered prompt exceeds " + std::to_string(tpl.max_prompt_chars) + " characters");
}

inline void require_mode(const PromptTemplate& tpl, PromptMode mode) {
    if (tpl.mode != mode)
        throw ArgumentError("template mode is " + std::string(to_string(tpl.mode)) + ", expected " +
                            std::string(to_string(mode)));
}

inline std::string passage_list(const PromptTemplate& tpl, std::span<const std::string> passages) {
    std::string out;
    for (std::size_t i = 0; i < passages.size(); ++i) {
        const auto index = std::to_string(i + 1);
        out += substitute(tpl.passage_format, {{"index", index}, {"passage", passages[i]}});
    }
    return out;
}

}  // namespace detail

/// Zero-shot when `examples` is empty. The live label slot renders empty.
inline RenderedPrompt render_pairwise(const Query& query, const Document& first, const Document& second,
                                      std::span<const IclExample> examples, const PromptTemplate& tpl) {
    detail::require_mode(tpl, PromptMode::Pairwise);
    RenderedPrompt out;
    std::string blocks;
    for (const auto& ex : examples) {
        const auto p1 = truncate_passage(ex.first_passage.text, tpl.truncation_budget);
        const auto p2 = truncate_passage(ex.second_passage.text, tpl.truncation_budget);
        blocks += substitute(tpl.example_block_format, {{"query", ex.example_query.text},
                                                        {"passage1", p1},
                                                        {"passage2", p2},
                                                        {"label", label_text(ex.gold_label)}});
        out.provenance.example_query_ids.push_back(ex.example_query.query_id);
        out.provenance.passage_doc_ids.push_back(ex.first_passage.doc_id);
        out.provenance.passage_doc_ids.push_back(ex.second_passage.doc_id);
    }
    const auto p1 = truncate_passage(first.text, tpl.truncation_budget);
    const auto p2 = truncate_passage(second.text, tpl.truncation_budget);
    out.text = substitute(tpl.instruction_text,
                          {{"examples", blocks}, {"query", query.text}, {"passage1", p1}, {"passage2", p2}, {"label", ""}});
    out.provenance.passage_doc_ids.push_back(first.doc_id);
    out.provenance.passage_doc_ids.push_back(second.doc_id);
    out.answer_tokens = tpl.answer_tokens();
    detail::check_prompt_budget(tpl, out.text);
    return out;
}

/// Each example contributes two blocks, one per passage in slot order,
/// labelled "true" for the relevant passage and "false" for the negative.
inline RenderedPrompt render_pointwise(const Query& query, const Document& doc, std::span<const IclExample> examples,
                                       const PromptTemplate& tpl) {
    detail::require_mode(tpl, PromptMode::Pointwise);
    RenderedPrompt out;
    std::string blocks;
    for (const auto& ex : examples) {
        out.provenance.example_query_ids.push_back(ex.example_query.query_id);
        for (const Document* d : {&ex.first_passage, &ex.second_passage}) {
            const auto p = truncate_passage(d->text, tpl.truncation_budget);
            const std::string_view label = d == &ex.positive() ? "true" : "false";
            blocks += substitute(tpl.example_block_format, {{"query", ex.example_query.text}, {"passage", p}, {"label", label}});
            out.provenance.passage_doc_ids.push_back(d->doc_id);
        }
    }
    const auto p = truncate_passage(doc.text, tpl.truncation_budget);
    out.text = substitute(tpl.instruction_text, {{"examples", blocks}, {"query", query.text}, {"passage", p}, {"label", ""}});
    out.provenance.passage_doc_ids.push_back(doc.doc_id);
    out.answer_tokens = tpl.answer_tokens();
    detail::check_prompt_budget(tpl, out.text);
    return out;
}

/// Numbered passage list; the answer is the index of the most relevant one.
/// Examples render as two-passage sets labelled with the relevant slot.
inline RenderedPrompt render_setwise(const Query& query, std::span<const Document> docs,
                                     std::span<const IclExample> examples, const PromptTemplate& tpl) {
    detail::require_mode(tpl, PromptMode::Setwise);
    if (docs.size() < 2 || docs.size() > kMaxSetSize)
        throw ArgumentError("setwise prompts take 2.." + std::to_string(kMaxSetSize) + " passages, got " +
                            std::to_string(docs.size()));
    RenderedPrompt out;
    std::string blocks;
    for (const auto& ex : examples) {
        const std::string pair[2] = {truncate_passage(ex.first_passage.text, tpl.truncation_budget),
                                     truncate_passage(ex.second_passage.text, tpl.truncation_budget)};
        const auto list = detail::passage_list(tpl, pair);
        blocks += substitute(tpl.example_block_format,
                             {{"query", ex.example_query.text}, {"passages", list}, {"count", "2"}, {"label", label_text(ex.gold_label)}});
        out.provenance.example_query_ids.push_back(ex.example_query.query_id);
        out.provenance.passage_doc_ids.push_back(ex.first_passage.doc_id);
        out.provenance.passage_doc_ids.push_back(ex.second_passage.doc_id);
    }
    std::vector<std::string> passages;
    passages.reserve(docs.size());
    for (const auto& d : docs) {
        passages.push_back(truncate_passage(d.text, tpl.truncation_budget));
        out.provenance.passage_doc_ids.push_back(d.doc_id);
    }
    const auto count = std::to_string(docs.size());
    const auto list = detail::passage_list(tpl, passages);
    out.text = substitute(tpl.instruction_text,
                          {{"examples", blocks}, {"query", query.text}, {"passages", list}, {"count", count}, {"label", ""}});
    out.answer_tokens = tpl.answer_tokens(docs.size());
    detail::check_prompt_budget(tpl, out.text);
    return out;
}

}  // namespace fsprp
