#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fsprp/analyzer.hpp"
#include "fsprp/error.hpp"
#include "fsprp/types.hpp"
#include "fsprp/util/files.hpp"
#include "fsprp/util/hash.hpp"

namespace fsprp {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;

    bool operator==(const Bm25Params&) const = default;
};

struct ScoredHit {
    std::string item_id;
    double score = 0.0;
    int rank = 0;

    bool operator==(const ScoredHit&) const = default;
};

struct Posting {
    std::uint32_t item = 0;  // dense item number, see InvertedIndex::item_id
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

/// BM25 inverted index over documents or queries. Immutable after build;
/// every const member is safe to call concurrently.
class InvertedIndex {
public:
    static constexpr std::string_view kMagic = "FSPRPIDX";
    static constexpr std::uint32_t kVersion = 1;

    template <typename Item>
    static InvertedIndex build(const IdStore<Item>& items, Bm25Params params = {}) {
        if (items.empty()) throw ValidationError("cannot build an index over zero items");
        InvertedIndex idx;
        idx.params_ = params;
        idx.item_ids_.reserve(items.size());
        idx.doc_lengths_.reserve(items.size());
        std::uint64_t total = 0;
        for (const auto& item : items) {
            const auto item_no = static_cast<std::uint32_t>(idx.item_ids_.size());
            idx.item_ids_.push_back(id_of(item));
            const auto terms = analyze(text_of(item));
            idx.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
            total += terms.size();
            std::map<std::string_view, std::uint32_t> tf;
            for (const auto& t : terms) ++tf[t];
            for (const auto& [term, count] : tf)
                idx.postings_[std::string(term)].push_back(Posting{item_no, count});
        }
        idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(items.size());
        return idx;
    }

    std::size_t n_items() const noexcept { return item_ids_.size(); }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    const Bm25Params& params() const noexcept { return params_; }
    const std::string& item_id(std::size_t item) const { return item_ids_.at(item); }
    std::uint32_t doc_length(std::size_t item) const { return doc_lengths_.at(item); }
    std::size_t n_terms() const noexcept { return postings_.size(); }

    const std::vector<Posting>& postings(std::string_view term) const {
        static const std::vector<Posting> kNone;
        auto it = postings_.find(std::string(term));
        return it == postings_.end() ? kNone : it->second;
    }

    std::size_t document_frequency(std::string_view term) const { return postings(term).size(); }

    double idf(std::size_t df) const {
        const double n = static_cast<double>(n_items());
        const double d = static_cast<double>(df);
        return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
    }

    /// Top `top_n` items by BM25, ties broken by item id. Only items sharing
    /// at least one term with the query are returned. Query terms are summed
    /// per occurrence.
    std::vector<ScoredHit> search(std::string_view query_text, std::size_t top_n) const {
        if (top_n < 1) throw ArgumentError("top_n must be >= 1");
        std::vector<double> acc(n_items(), 0.0);
        std::vector<char> touched_flag(n_items(), 0);
        std::vector<std::uint32_t> touched;
        const double k1 = params_.k1, b = params_.b;
        for (const auto& term : analyze(query_text)) {
            const auto& plist = postings(term);
            if (plist.empty()) continue;
            const double w = idf(plist.size());
            for (const auto& p : plist) {
                const double tf = p.tf;
                const double norm = k1 * (1.0 - b + b * doc_lengths_[p.item] / avg_doc_length_);
                acc[p.item] += w * (tf * (k1 + 1.0)) / (tf + norm);
                if (!touched_flag[p.item]) {
                    touched_flag[p.item] = 1;
                    touched.push_back(p.item);
                }
            }
        }
        auto better = [&](std::uint32_t a, std::uint32_t c) {
            if (acc[a] != acc[c]) return acc[a] > acc[c];
            return item_ids_[a] < item_ids_[c];
        };
        const std::size_t n = std::min(top_n, touched.size());
        std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(n), touched.end(), better);
        std::vector<ScoredHit> hits;
        hits.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            hits.push_back(ScoredHit{item_ids_[touched[i]], acc[touched[i]], static_cast<int>(i) + 1});
        return hits;
    }

    /// Hits ranked in (lo, hi] of the search ordering.
    std::vector<ScoredHit> rank_window(std::string_view query_text, int lo, int hi) const {
        if (lo < 1 || lo >= hi) throw ArgumentError("rank window requires 1 <= lo < hi");
        auto hits = search(query_text, static_cast<std::size_t>(hi));
        if (hits.size() <= static_cast<std::size_t>(lo)) return {};
        hits.erase(hits.begin(), hits.begin() + lo);
        return hits;
    }

    // Layout (little-endian): magic[8] version:u32 k1:f64 b:f64 n_items:u32
    // {id:str len:u32}*n_items n_terms:u32 {term:str n:u32 {item:u32 tf:u32}*n}*n_terms
    // where str = u32 byte length + bytes. Terms are written in sorted order.
    std::string serialize() const {
        std::string out(kMagic);
        put_u32(out, kVersion);
        put_f64(out, params_.k1);
        put_f64(out, params_.b);
        put_u32(out, static_cast<std::uint32_t>(n_items()));
        for (std::size_t i = 0; i < n_items(); ++i) {
            put_str(out, item_ids_[i]);
            put_u32(out, doc_lengths_[i]);
        }
        std::vector<const std::string*> terms;
        terms.reserve(postings_.size());
        for (const auto& [t, _] : postings_) terms.push_back(&t);
        std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
        put_u32(out, static_cast<std::uint32_t>(terms.size()));
        for (const auto* t : terms) {
            put_str(out, *t);
            const auto& plist = postings_.at(*t);
            put_u32(out, static_cast<std::uint32_t>(plist.size()));
            for (const auto& p : plist) {
                put_u32(out, p.item);
                put_u32(out, p.tf);
            }
        }
        return out;
    }

    static InvertedIndex deserialize(std::string_view bytes) {
        Reader r{bytes};
        if (r.take(kMagic.size()) != kMagic) throw ValidationError("not an index file (bad magic)");
        const auto version = r.u32();
        if (version != kVersion) throw ValidationError("unsupported index version " + std::to_string(version));
        InvertedIndex idx;
        idx.params_.k1 = r.f64();
        idx.params_.b = r.f64();
        const auto n = r.u32();
        if (n == 0) throw ValidationError("index has zero items");
        std::uint64_t total = 0;
        for (std::uint32_t i = 0; i < n; ++i) {
            idx.item_ids_.emplace_back(r.str());
            idx.doc_lengths_.push_back(r.u32());
            total += idx.doc_lengths_.back();
        }
        const auto n_terms = r.u32();
        for (std::uint32_t t = 0; t < n_terms; ++t) {
            std::string term(r.str());
            auto& plist = idx.postings_[term];
            const auto np = r.u32();
            plist.reserve(np);
            for (std::uint32_t j = 0; j < np; ++j) {
                Posting p{r.u32(), r.u32()};
                if (p.item >= n) throw ValidationError("posting references unknown item");
                plist.push_back(p);
            }
        }
        if (!r.done()) throw ValidationError("trailing bytes in index file");
        idx.avg_doc_length_ = static_cast<double>(total) / n;
        return idx;
    }

    void save(const std::filesystem::path& path) const { util::write_file_atomic(path, serialize()); }

    static InvertedIndex load(const std::filesystem::path& path) { return deserialize(util::read_file(path)); }

    /// Content digest of the serialized form.
    std::string digest() const { return util::to_hex(util::fnv1a64(serialize())); }

private:
    struct Reader {
        std::string_view bytes;
        std::size_t pos = 0;

        std::string_view take(std::size_t n) {
            if (pos + n > bytes.size()) throw ValidationError("truncated index file");
            auto s = bytes.substr(pos, n);
            pos += n;
            return s;
        }
        std::uint64_t le(std::size_t n) {
            auto s = take(n);
            std::uint64_t v = 0;
            for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t(static_cast<unsigned char>(s[i])) << (8 * i);
            return v;
        }
        std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
        double f64() {
            const std::uint64_t bits = le(8);
            double d;
            std::memcpy(&d, &bits, sizeof d);
            return d;
        }
        std::string_view str() { return take(u32()); }
        bool done() const { return pos == bytes.size(); }
    };

    static void put_le(std::string& out, std::uint64_t v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    static void put_u32(std::string& out, std::uint32_t v) { put_le(out, v, 4); }
    static void put_f64(std::string& out, double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof d);
        put_le(out, bits, 8);
    }
    static void put_str(std::string& out, std::string_view s) {
        put_u32(out, static_cast<std::uint32_t>(s.size()));
        out.append(s);
    }

    Bm25Params params_;
    std::vector<std::string> item_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    double avg_doc_length_ = 0.0;
};

template <typename Item>
InvertedIndex build_index(const IdStore<Item>& items, Bm25Params params = {}) {
    return InvertedIndex::build(items, params);
}

inline std::vector<ScoredHit> bm25_search(const InvertedIndex& index, std::string_view query_text, std::size_t top_n) {
    return index.search(query_text, top_n);
}

inline std::vector<ScoredHit> rank_window(const InvertedIndex& index, std::string_view query_text, int lo, int hi) {
    return index.rank_window(query_text, lo, hi);
}

}  // namespace fsprp
