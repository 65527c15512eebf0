#include "babelkit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "babelkit/errors.hpp"
#include "babelkit/ops.hpp"
#include "babelkit/rng.hpp"

namespace babel {

std::string normalize_ws(const std::string& s) {
    std::string out;
    bool in_ws = true;  // leading whitespace dropped
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_ws = true;
        } else {
            if (in_ws && !out.empty()) out += ' ';
            out += static_cast<char>(c);
            in_ws = false;
        }
    }
    return out;
}

namespace {

// length of the valid UTF-8 sequence starting at s[i], or 0
size_t utf8_seq_len(std::string_view s, size_t i) {
    auto at = [&](size_t k) { return static_cast<unsigned char>(s[k]); };
    unsigned char b = at(i);
    if (b < 0x80) return 1;
    auto cont = [&](size_t k, unsigned char lo = 0x80, unsigned char hi = 0xbf) {
        return k < s.size() && at(k) >= lo && at(k) <= hi;
    };
    if (b >= 0xc2 && b <= 0xdf) return cont(i + 1) ? 2 : 0;
    if (b == 0xe0) return cont(i + 1, 0xa0) && cont(i + 2) ? 3 : 0;
    if (b >= 0xe1 && b <= 0xec) return cont(i + 1) && cont(i + 2) ? 3 : 0;
    if (b == 0xed) return cont(i + 1, 0x80, 0x9f) && cont(i + 2) ? 3 : 0;
    if (b >= 0xee && b <= 0xef) return cont(i + 1) && cont(i + 2) ? 3 : 0;
    if (b == 0xf0) return cont(i + 1, 0x90) && cont(i + 2) && cont(i + 3) ? 4 : 0;
    if (b >= 0xf1 && b <= 0xf3) return cont(i + 1) && cont(i + 2) && cont(i + 3) ? 4 : 0;
    if (b == 0xf4) return cont(i + 1, 0x80, 0x8f) && cont(i + 2) && cont(i + 3) ? 4 : 0;
    return 0;
}

}  // namespace

bool valid_utf8(std::string_view s) {
    for (size_t i = 0; i < s.size();) {
        size_t len = utf8_seq_len(s, i);
        if (len == 0) return false;
        i += len;
    }
    return true;
}

std::string sanitize_utf8(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (size_t i = 0; i < s.size();) {
        size_t len = utf8_seq_len(s, i);
        if (len == 0) {
            out += "\xef\xbf\xbd";
            i += 1;
        } else {
            out.append(s, i, len);
            i += len;
        }
    }
    return out;
}

bool exact_match(const std::string& generation, const std::string& target) {
    std::string g = normalize_ws(generation);
    std::string t = normalize_ws(target);
    // empty target is a substring of anything
    return g.find(t) != std::string::npos;
}

double conditional_log_ppl(const LoadedModel& lm, std::span<const TokenId> prompt,
                           std::span<const TokenId> target, const ChatTemplate& tmpl) {
    auto r = target_nll(lm, prompt, target, tmpl);
    return r.total / static_cast<double>(r.per_token.size());
}

double sequence_log_ppl(const LoadedModel& lm, std::span<const TokenId> ids) {
    if (ids.size() < 2) throw ValidationError("sequence log-ppl needs at least two tokens");
    auto run = [&](auto& ev) { return ev.score(ids, 1); };
    ScoreResult r;
    if (lm.config().precision == Precision::f64) {
        Evaluator<double> ev(lm.f64());
        r = run(ev);
    } else {
        Evaluator<float> ev(lm.f32());
        r = run(ev);
    }
    return r.total / static_cast<double>(r.per_token.size());
}

double bigram_conditional_entropy(const std::vector<std::vector<TokenId>>& seqs) {
    // adjacent pairs never cross a sequence boundary
    std::map<TokenId, std::map<TokenId, size_t>> counts;
    size_t total = 0;
    for (const auto& s : seqs) {
        for (size_t i = 0; i + 1 < s.size(); ++i) {
            ++counts[s[i]][s[i + 1]];
            ++total;
        }
    }
    if (total == 0) throw ValidationError("no adjacent pairs to estimate entropy from");
    double h = 0.0;
    for (const auto& [x, row] : counts) {
        size_t nx = 0;
        for (const auto& [y, c] : row) nx += c;
        double hx = 0.0;
        for (const auto& [y, c] : row) {
            double p = static_cast<double>(c) / static_cast<double>(nx);
            hx -= p * std::log2(p);
        }
        h += static_cast<double>(nx) / static_cast<double>(total) * hx;
    }
    return h;
}

double entropy_resample_std(const std::vector<std::vector<TokenId>>& seqs, double frac, int reps,
                            uint64_t seed) {
    if (!(frac > 0.0) || frac > 1.0) throw ValidationError("resample fraction must lie in (0, 1]");
    if (reps < 2) throw ValidationError("resampling needs at least 2 repetitions");
    size_t n = seqs.size();
    if (n < 2) throw ValidationError("resampling needs at least 2 sequences");
    auto take = static_cast<size_t>(std::ceil(frac * static_cast<double>(n)));
    take = std::clamp<size_t>(take, 1, n);
    Rng rng(seed);
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(reps));
    for (int rep = 0; rep < reps; ++rep) {
        auto idx = rng.sample_distinct(n, take);
        std::vector<std::vector<TokenId>> sub;
        sub.reserve(take);
        for (auto i : idx) sub.push_back(seqs[i]);
        vals.push_back(bigram_conditional_entropy(sub));
    }
    double mean = 0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double sq = 0;
    for (double v : vals) sq += (v - mean) * (v - mean);
    return std::sqrt(sq / static_cast<double>(vals.size()));
}

int token_overlap(std::span<const TokenId> a, std::span<const TokenId> b) {
    std::vector<TokenId> set(b.begin(), b.end());
    std::sort(set.begin(), set.end());
    int hits = 0;
    for (TokenId t : a)
        if (std::binary_search(set.begin(), set.end(), t)) ++hits;
    return hits;
}

namespace {

double pb_r(const std::vector<double>& x, const std::vector<uint8_t>& y) {
    size_t n = x.size();
    size_t n1 = 0;
    double m1 = 0, m0 = 0;
    for (size_t i = 0; i < n; ++i) {
        if (y[i]) {
            m1 += x[i];
            ++n1;
        } else {
            m0 += x[i];
        }
    }
    size_t n0 = n - n1;
    m1 /= static_cast<double>(n1);
    m0 /= static_cast<double>(n0);
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double sq = 0;
    for (double v : x) sq += (v - mean) * (v - mean);
    double sn = std::sqrt(sq / static_cast<double>(n));
    double f = std::sqrt(static_cast<double>(n1) * static_cast<double>(n0) /
                         (static_cast<double>(n) * static_cast<double>(n)));
    return (m1 - m0) / sn * f;
}

}  // namespace

PointBiserial point_biserial(const std::vector<double>& x, const std::vector<uint8_t>& y,
                             int permutations, uint64_t seed) {
    if (x.size() != y.size()) throw ValidationError("value and label counts differ");
    if (x.size() < 3) throw ValidationError("point-biserial needs at least 3 samples");
    if (permutations < 1) throw ValidationError("permutation count must be positive");
    size_t n1 = 0;
    for (auto v : y) n1 += v ? 1 : 0;
    if (n1 == 0 || n1 == y.size())
        throw ValidationError("point-biserial needs both label classes present");
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double sq = 0;
    for (double v : x) sq += (v - mean) * (v - mean);
    PointBiserial out;
    if (sq == 0) {
        // constant values: both class means coincide, so r = 0 and every
        // permutation ties it
        out.r = 0.0;
        out.p_value = 1.0;
        return out;
    }
    out.r = pb_r(x, y);
    Rng rng(seed);
    std::vector<uint8_t> perm(y.begin(), y.end());
    size_t hits = 0;
    for (int p = 0; p < permutations; ++p) {
        rng.shuffle(perm);
        if (std::abs(pb_r(x, perm)) >= std::abs(out.r)) ++hits;
    }
    out.p_value = (static_cast<double>(hits) + 1.0) / (static_cast<double>(permutations) + 1.0);
    return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw ValidationError("cosine needs two equal-length non-empty vectors");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) throw ValidationError("cosine undefined for a zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

bool distance_success(const LoadedModel& lm, std::span<const TokenId> generated,
                      std::span<const TokenId> target, double threshold) {
    if (generated.empty()) return false;
    auto eg = embed_tokens(lm, generated);
    auto et = embed_tokens(lm, target);
    return cosine(eg, et) >= threshold;
}

std::vector<std::pair<TokenId, size_t>> token_frequency(
    const std::vector<std::vector<TokenId>>& seqs) {
    std::map<TokenId, size_t> counts;
    for (const auto& s : seqs)
        for (TokenId t : s) ++counts[t];
    std::vector<std::pair<TokenId, size_t>> out(counts.begin(), counts.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    return out;
}

}  // namespace babel
