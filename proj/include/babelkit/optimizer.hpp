#pragma once

#include <span>
#include <string>
#include <vector>

#include "babelkit/model.hpp"
#include "babelkit/types.hpp"

namespace babel {

// Coordinate-descent prompt search. Both searchers flip one prompt token per
// iteration, rank replacements by the one-hot gradient, and verify the
// shortlisted flips with exact scoring, so the incumbent loss never rises.

enum class SearchKind { gcg, autoprompt };

std::string to_string(SearchKind k);
SearchKind search_kind_from_string(const std::string& s);

struct AttackParams {
    int prompt_len = 20;
    int iters = 250;
    int topk = 64;        // gradient shortlist per position
    int batch = 64;       // sampled flips per iteration (gcg only)
    uint64_t seed = 0;
    TokenId init_token = 33;  // '!'
    bool early_stop = true;   // stop once greedy decode reproduces the target
    int max_decode_slack = 0; // extra tokens allowed in the match decode

    void validate() const;
};

// paper-scale and desk-scale search budgets
AttackParams profile_params(const std::string& name);

struct TraceStep {
    int iter = 0;
    double loss = 0.0;    // incumbent total target NLL after this iteration
    int pos = -1;         // -1: iteration kept the incumbent
    TokenId old_id = -1;
    TokenId new_id = -1;
    bool exact_match = false;
};

struct AttackResult {
    TokenSequence prompt;  // provenance: optimized
    double final_loss = 0.0;
    bool success = false;
    int iters_run = 0;
    uint64_t forward_count = 0;  // exact loss evaluations (gradient pass + candidates)
    std::vector<TraceStep> trace;
};

std::vector<TokenId> init_prompt(int prompt_len, TokenId init_token);

// k lowest-gradient replacement tokens for every prompt position.
// grads: rows of vocab_size per position, d(total NLL)/d(one-hot).
std::vector<std::vector<TokenId>> top_k_substitutions(std::span<const float> grads, int positions,
                                                      int vocab_size,
                                                      std::span<const TokenId> allowed, int k);

AttackResult run_gcg(const Model<float>& model, const ChatTemplate& tmpl,
                     std::span<const TokenId> target, std::span<const TokenId> allowed,
                     const AttackParams& params);

AttackResult run_autoprompt(const Model<float>& model, const ChatTemplate& tmpl,
                            std::span<const TokenId> target, std::span<const TokenId> allowed,
                            const AttackParams& params);

AttackResult run_search(SearchKind kind, const Model<float>& model, const ChatTemplate& tmpl,
                        std::span<const TokenId> target, std::span<const TokenId> allowed,
                        const AttackParams& params);

// one JSON object per line: {"iter","loss","pos","old_id","new_id","exact_match"}
std::string trace_to_jsonl(const AttackResult& res);

}  // namespace babel
