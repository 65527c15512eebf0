#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "babelkit/checkpoint.hpp"
#include "babelkit/model.hpp"

namespace babel {

// collapse whitespace runs to single spaces and trim the ends
std::string normalize_ws(const std::string& s);

bool valid_utf8(std::string_view s);
// byte-level decodes can produce arbitrary bytes; replace invalid UTF-8
// bytes with U+FFFD so the text is safe to serialize
std::string sanitize_utf8(const std::string& s);

// whitespace-insensitive containment: does the generation carry the target?
bool exact_match(const std::string& generation, const std::string& target);

// mean target NLL per token (nats) given the templated prompt; log of the
// conditional perplexity
double conditional_log_ppl(const LoadedModel& lm, std::span<const TokenId> prompt,
                           std::span<const TokenId> target, const ChatTemplate& tmpl = {});

// mean NLL per token (nats) of the bare token sequence, no template; the
// first token is conditioned on only
double sequence_log_ppl(const LoadedModel& lm, std::span<const TokenId> ids);

// conditional entropy H(next | current) in bits over adjacent within-sequence
// pairs, pooled across sequences
double bigram_conditional_entropy(const std::vector<std::vector<TokenId>>& seqs);

// spread of the entropy under resampling: population std over `reps` subsets
// holding `frac` of the sequences
double entropy_resample_std(const std::vector<std::vector<TokenId>>& seqs, double frac, int reps,
                            uint64_t seed);

// number of positions in `a` whose token occurs anywhere in `b`; each
// position counted once, so the result lies in [0, |a|]
int token_overlap(std::span<const TokenId> a, std::span<const TokenId> b);

struct PointBiserial {
    double r = 0.0;
    double p_value = 1.0;  // two-sided permutation test
};
PointBiserial point_biserial(const std::vector<double>& x, const std::vector<uint8_t>& y,
                             int permutations, uint64_t seed);

double cosine(std::span<const double> a, std::span<const double> b);

inline constexpr double kDistanceSuccessThreshold = 0.9;

// is the generation's pooled embedding within the cosine threshold of the
// target's?
bool distance_success(const LoadedModel& lm, std::span<const TokenId> generated,
                      std::span<const TokenId> target,
                      double threshold = kDistanceSuccessThreshold);

// counts per token over all sequences, most frequent first, ties by id
std::vector<std::pair<TokenId, size_t>> token_frequency(
    const std::vector<std::vector<TokenId>>& seqs);

}  // namespace babel
