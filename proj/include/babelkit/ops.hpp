#pragma once

#include <span>
#include <string>
#include <vector>

#include "babelkit/checkpoint.hpp"
#include "babelkit/model.hpp"

namespace babel {

struct GradMatrix {
    int rows = 0, cols = 0;
    std::vector<double> v;
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// These wrappers run at the checkpoint's declared precision (f64 override via
// the precision field) and are the surface exposed to the CLI and bindings.

// Total and per-token NLL of target after [BOS][USER] prompt [ASST].
ScoreResult target_nll(const LoadedModel& lm, std::span<const TokenId> prompt,
                       std::span<const TokenId> target, const ChatTemplate& tmpl = {});

// d(total target NLL) / d(one-hot of each prompt position), prompt_len x vocab.
GradMatrix grad_onehot(const LoadedModel& lm, std::span<const TokenId> prompt,
                       std::span<const TokenId> target, const ChatTemplate& tmpl = {});

// Greedy continuation after the rendered prompt.
GenerationResult greedy_decode(const LoadedModel& lm, std::span<const TokenId> prompt, int max_new,
                               const ChatTemplate& tmpl = {});

// Post-final-norm hidden state at the last rendered position.
std::vector<double> last_hidden_state(const LoadedModel& lm, std::span<const TokenId> prompt,
                                      const ChatTemplate& tmpl = {});

// Mean-pooled final hidden states over the raw token sequence (no template);
// the embedding used for representation-space metrics.
std::vector<double> embed_tokens(const LoadedModel& lm, std::span<const TokenId> ids);

}  // namespace babel
