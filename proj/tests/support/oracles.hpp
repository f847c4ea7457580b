#pragma once

// Second implementations used as test oracles. Written directly from the
// metric and scoring definitions; they share nothing with the library
// beyond the analyzer (which defines what a term is).

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fsprp/analyzer.hpp"

namespace oracle {

struct Scored {
    std::string id;
    double score;
};

inline void sort_scored(std::vector<Scored>& v) {
    std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
}

// BM25 by scoring every document against the query from raw token lists.
// Each query token occurrence contributes its term's weight.
inline std::vector<Scored> bm25(const std::vector<std::pair<std::string, std::string>>& docs, const std::string& query,
                                double k1 = 1.2, double b = 0.75) {
    std::vector<std::vector<std::string>> toks;
    double total = 0;
    for (const auto& [_, text] : docs) {
        toks.push_back(fsprp::analyze(text));
        total += static_cast<double>(toks.back().size());
    }
    const double N = static_cast<double>(docs.size());
    const double avgdl = total / N;
    const auto qt = fsprp::analyze(query);
    std::vector<Scored> out;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        double s = 0;
        bool matched = false;
        for (const auto& t : qt) {
            double df = 0;
            for (const auto& dt : toks)
                if (std::find(dt.begin(), dt.end(), t) != dt.end()) df += 1;
            const double tf = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), t));
            if (tf == 0) continue;
            matched = true;
            const double idf = std::log((N - df + 0.5) / (df + 0.5) + 1.0);
            const double dl = static_cast<double>(toks[d].size());
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl));
        }
        if (matched) out.push_back({docs[d].first, s});
    }
    sort_scored(out);
    return out;
}

inline std::vector<Scored> cosine_rank(const std::vector<std::pair<std::string, std::vector<double>>>& vecs,
                                       const std::vector<double>& probe) {
    auto norm = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    const double pn = norm(probe);
    std::vector<Scored> out;
    for (const auto& [id, v] : vecs) {
        double dot = 0;
        for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * probe[i];
        out.push_back({id, dot / (norm(v) * pn)});
    }
    sort_scored(out);
    return out;
}

// ranked: doc ids in rank order. judged: doc -> grade.
inline double ndcg(const std::vector<std::string>& ranked, const std::map<std::string, int>& judged, int cutoff) {
    auto gain = [](int g) { return std::pow(2.0, g) - 1.0; };
    double dcg = 0;
    for (int i = 0; i < cutoff && i < static_cast<int>(ranked.size()); ++i) {
        auto it = judged.find(ranked[static_cast<std::size_t>(i)]);
        int g = it == judged.end() ? 0 : it->second;
        dcg += gain(g) / std::log2(i + 2.0);
    }
    std::vector<int> grades;
    for (const auto& [_, g] : judged) grades.push_back(g);
    std::sort(grades.rbegin(), grades.rend());
    double idcg = 0;
    for (int i = 0; i < cutoff && i < static_cast<int>(grades.size()); ++i)
        idcg += gain(grades[static_cast<std::size_t>(i)]) / std::log2(i + 2.0);
    return idcg > 0 ? dcg / idcg : 0.0;
}

// Average of precision@i over the positions of relevant docs, divided by
// the total number of relevant docs, computed by recounting each prefix.
inline double ap(const std::vector<std::string>& ranked, const std::map<std::string, int>& judged, int cutoff,
                 int threshold) {
    auto rel = [&](const std::string& d) {
        auto it = judged.find(d);
        return it != judged.end() && it->second >= threshold;
    };
    int R = 0;
    for (const auto& [_, g] : judged) R += g >= threshold;
    if (R == 0) return 0.0;
    double sum = 0;
    const int n = std::min<int>(cutoff, static_cast<int>(ranked.size()));
    for (int i = 1; i <= n; ++i) {
        if (!rel(ranked[static_cast<std::size_t>(i - 1)])) continue;
        int hits = 0;
        for (int j = 1; j <= i; ++j) hits += rel(ranked[static_cast<std::size_t>(j - 1)]);
        sum += static_cast<double>(hits) / i;
    }
    return sum / R;
}

// Classical AP on binary labels: mean over relevant items of the fraction
// of items ranked at or above it that are relevant, missing ones count 0.
inline double classical_ap(const std::vector<std::string>& ranked, const std::set<std::string>& relevant, int cutoff) {
    if (relevant.empty()) return 0.0;
    double total = 0;
    for (const auto& r : relevant) {
        auto it = std::find(ranked.begin(), ranked.end(), r);
        if (it == ranked.end()) continue;
        const auto pos = static_cast<int>(it - ranked.begin());
        if (pos >= cutoff) continue;
        int above = 0;
        for (auto j = ranked.begin(); j <= it; ++j) above += relevant.count(*j) ? 1 : 0;
        total += static_cast<double>(above) / (pos + 1);
    }
    return total / static_cast<double>(relevant.size());
}

inline double jaccard(const std::string& a, const std::string& b) {
    const auto ta = fsprp::analyze(a), tb = fsprp::analyze(b);
    std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
    std::set<std::string> un = sa;
    un.insert(sb.begin(), sb.end());
    if (un.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    return static_cast<double>(inter) / static_cast<double>(un.size());
}

// Adaptive Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a, double b, double eps, int depth) {
    const double c = (a + b) / 2, h = b - a;
    const double fa = f(a), fb = f(b), fc = f(c);
    const double whole = h / 6 * (fa + 4 * fc + fb);
    std::function<double(double, double, double, double, double, double, double, int)> rec =
        [&](double lo, double hi, double flo, double fhi, double fmid, double s, double e, int d) {
            const double mid = (lo + hi) / 2;
            const double lm = (lo + mid) / 2, rm = (mid + hi) / 2;
            const double flm = f(lm), frm = f(rm);
            const double left = (mid - lo) / 6 * (flo + 4 * flm + fmid);
            const double right = (hi - mid) / 6 * (fmid + 4 * frm + fhi);
            if (d <= 0 || std::fabs(left + right - s) <= 15 * e) return left + right + (left + right - s) / 15;
            return rec(lo, mid, flo, fmid, flm, left, e / 2, d - 1) + rec(mid, hi, fmid, fhi, frm, right, e / 2, d - 1);
        };
    return rec(a, b, fa, fb, fc, whole, eps, depth);
}

inline double t_pdf(double x, double nu) {
    const double logc = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) - 0.5 * std::log(nu * M_PI);
    return std::exp(logc - (nu + 1) / 2 * std::log1p(x * x / nu));
}

// Two-sided p-value: 1 - 2 * integral of the pdf over [0, |t|].
inline double t_two_sided_p(double t, double nu) {
    const double a = std::fabs(t);
    if (a == 0) return 1.0;
    double mass = 0;
    // piecewise to keep the integrand smooth on each panel
    double lo = 0;
    while (lo < a) {
        const double hi = std::min(a, lo + 1.0);
        mass += simpson([nu](double x) { return t_pdf(x, nu); }, lo, hi, 1e-14, 50);
        lo = hi;
    }
    return std::max(0.0, 1.0 - 2.0 * mass);
}

inline double paired_t(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
    double ss = 0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1));
    return mean / (sd / std::sqrt(n));
}

// Covariance over the product of standard deviations, textbook form.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
    }
    const double cov = sxy / n - (sx / n) * (sy / n);
    const double vx = sxx / n - (sx / n) * (sx / n);
    const double vy = syy / n - (sy / n) * (sy / n);
    return cov / std::sqrt(vx * vy);
}

}  // namespace oracle
