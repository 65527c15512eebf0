#include "babelkit/robustness.hpp"

#include <algorithm>
#include <cctype>

#include "babelkit/errors.hpp"
#include "babelkit/metrics.hpp"
#include "babelkit/ops.hpp"
#include "babelkit/rng.hpp"

namespace babel {

std::string to_string(PerturbKind k) {
    switch (k) {
        case PerturbKind::remove: return "remove";
        case PerturbKind::replace: return "replace";
        case PerturbKind::permute: return "permute";
        case PerturbKind::strip_punct: return "strip_punct";
    }
    return "?";
}

PerturbKind perturb_kind_from_string(const std::string& s) {
    if (s == "remove") return PerturbKind::remove;
    if (s == "replace") return PerturbKind::replace;
    if (s == "permute") return PerturbKind::permute;
    if (s == "strip_punct") return PerturbKind::strip_punct;
    throw ValidationError("unknown perturbation kind: " + s);
}

std::vector<TokenId> perturb_remove(std::span<const TokenId> ids, int k, Rng& rng) {
    if (k < 0 || static_cast<size_t>(k) > ids.size())
        throw ValidationError("cannot remove " + std::to_string(k) + " of " +
                              std::to_string(ids.size()) + " tokens");
    auto drop = rng.sample_distinct(ids.size(), static_cast<size_t>(k));  // sorted
    std::vector<TokenId> out;
    out.reserve(ids.size() - static_cast<size_t>(k));
    size_t di = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (di < drop.size() && static_cast<size_t>(drop[di]) == i) {
            ++di;
            continue;
        }
        out.push_back(ids[i]);
    }
    return out;
}

std::vector<TokenId> perturb_replace(std::span<const TokenId> ids, int k,
                                     std::span<const TokenId> allowed, Rng& rng) {
    if (k < 0 || static_cast<size_t>(k) > ids.size())
        throw ValidationError("cannot replace " + std::to_string(k) + " of " +
                              std::to_string(ids.size()) + " tokens");
    if (allowed.empty()) throw ValidationError("replacement needs a non-empty allowed set");
    std::vector<TokenId> out(ids.begin(), ids.end());
    auto targets = rng.sample_distinct(ids.size(), static_cast<size_t>(k));
    for (size_t pos : targets) {
        bool has_other = false;
        for (TokenId t : allowed)
            if (t != out[pos]) {
                has_other = true;
                break;
            }
        if (!has_other)
            throw ValidationError("allowed set has no alternative for position " +
                                  std::to_string(pos));
        TokenId pick;
        do {
            pick = allowed[rng.uniform_u32(static_cast<uint32_t>(allowed.size()))];
        } while (pick == out[pos]);
        out[pos] = pick;
    }
    return out;
}

std::vector<TokenId> perturb_permute(std::span<const TokenId> ids, int k, Rng& rng) {
    if (k < 0 || static_cast<size_t>(k) > ids.size())
        throw ValidationError("cannot permute " + std::to_string(k) + " of " +
                              std::to_string(ids.size()) + " tokens");
    std::vector<TokenId> out(ids.begin(), ids.end());
    if (k < 2) return out;
    auto pos = rng.sample_distinct(ids.size(), static_cast<size_t>(k));
    // uniform derangement of the chosen positions by rejection
    std::vector<size_t> perm(pos.size());
    while (true) {
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        rng.shuffle(perm);
        bool fixed = false;
        for (size_t i = 0; i < perm.size(); ++i)
            if (perm[i] == i) {
                fixed = true;
                break;
            }
        if (!fixed) break;
    }
    for (size_t i = 0; i < pos.size(); ++i) out[pos[i]] = ids[pos[perm[i]]];
    return out;
}

std::vector<TokenId> strip_punctuation(std::span<const TokenId> ids, const Tokenizer& tok) {
    std::vector<TokenId> out;
    for (TokenId t : ids) {
        if (tok.is_special(t)) {
            out.push_back(t);
            continue;
        }
        std::string text = tok.token_text(t);
        bool all_punct = !text.empty();
        for (unsigned char c : text) {
            if (c >= 0x80 || !std::ispunct(c)) {
                all_punct = false;
                break;
            }
        }
        if (!all_punct) out.push_back(t);
    }
    return out;
}

std::vector<SweepCell> robustness_sweep(const LoadedModel& lm, const std::vector<SweepInput>& inputs,
                                        const std::vector<SweepCase>& cases, int n_seeds,
                                        uint64_t seed, const ChatTemplate& tmpl) {
    if (inputs.empty()) throw ValidationError("robustness sweep needs at least one prompt");
    if (n_seeds < 1) throw ValidationError("robustness sweep needs at least one seed");
    std::vector<TokenId> content = lm.tokenizer().content_ids();
    std::vector<SweepCell> out;
    for (const auto& cs : cases) {
        SweepCell cell;
        cell.kind = cs.kind;
        cell.k = cs.kind == PerturbKind::strip_punct ? 0 : cs.k;
        int hits = 0, runs = 0;
        int reps = cs.kind == PerturbKind::strip_punct ? 1 : n_seeds;  // deterministic perturbation
        for (size_t pi = 0; pi < inputs.size(); ++pi) {
            const auto& in = inputs[pi];
            for (int si = 0; si < reps; ++si) {
                std::string tag = to_string(cs.kind) + "/" + std::to_string(cs.k) + "/" +
                                  std::to_string(pi) + "/" + std::to_string(si);
                Rng rng(derive_seed(seed, tag));
                std::vector<TokenId> perturbed;
                switch (cs.kind) {
                    case PerturbKind::remove:
                        perturbed = perturb_remove(in.prompt, std::min<int>(cs.k, static_cast<int>(in.prompt.size())), rng);
                        break;
                    case PerturbKind::replace:
                        perturbed = perturb_replace(in.prompt, std::min<int>(cs.k, static_cast<int>(in.prompt.size())), content, rng);
                        break;
                    case PerturbKind::permute:
                        perturbed = perturb_permute(in.prompt, std::min<int>(cs.k, static_cast<int>(in.prompt.size())), rng);
                        break;
                    case PerturbKind::strip_punct:
                        perturbed = strip_punctuation(in.prompt, lm.tokenizer());
                        break;
                }
                int max_new = static_cast<int>(in.target.size()) + 8;
                auto gen = greedy_decode(lm, perturbed, max_new, tmpl);
                std::string text = lm.tokenizer().detokenize(gen.tokens.ids);
                if (exact_match(text, in.target_text)) ++hits;
                ++runs;
            }
        }
        cell.runs = runs;
        cell.match_rate = runs ? static_cast<double>(hits) / runs : 0.0;
        cell.break_rate = 1.0 - cell.match_rate;
        out.push_back(cell);
    }
    return out;
}

}  // namespace babel
