#pragma once

#include <span>
#include <string>
#include <vector>

#include "babelkit/checkpoint.hpp"
#include "babelkit/rng.hpp"
#include "babelkit/model.hpp"
#include "babelkit/tokenizer.hpp"

namespace babel {

enum class PerturbKind { remove, replace, permute, strip_punct };

std::string to_string(PerturbKind k);
PerturbKind perturb_kind_from_string(const std::string& s);

// drop k distinct positions
std::vector<TokenId> perturb_remove(std::span<const TokenId> ids, int k, Rng& rng);

// overwrite k distinct positions with tokens from `allowed`, each forced to
// differ from what it replaces
std::vector<TokenId> perturb_replace(std::span<const TokenId> ids, int k,
                                     std::span<const TokenId> allowed, Rng& rng);

// derange k chosen positions (every chosen position ends up with another
// chosen position's token); k < 2 is the identity
std::vector<TokenId> perturb_permute(std::span<const TokenId> ids, int k, Rng& rng);

// drop ASCII punctuation tokens; multi-byte tokens go when every byte is
// punctuation, and bytes >= 0x80 always stay
std::vector<TokenId> strip_punctuation(std::span<const TokenId> ids, const Tokenizer& tok);

struct SweepCase {
    PerturbKind kind;
    int k = 0;  // ignored for strip_punct
};

struct SweepCell {
    PerturbKind kind;
    int k = 0;
    double match_rate = 0.0;  // fraction of (prompt, seed) runs still emitting the target
    double break_rate = 0.0;  // 1 - match_rate
    int runs = 0;
};

struct SweepInput {
    std::vector<TokenId> prompt;
    std::vector<TokenId> target;
    std::string target_text;
};

// Decodes every perturbed prompt and scores exact_match against the target
// text; each (case, prompt, seed) triple gets its own derived seed, so cells
// are independent of evaluation order.
std::vector<SweepCell> robustness_sweep(const LoadedModel& lm, const std::vector<SweepInput>& inputs,
                                        const std::vector<SweepCase>& cases, int n_seeds,
                                        uint64_t seed, const ChatTemplate& tmpl = {});

}  // namespace babel
