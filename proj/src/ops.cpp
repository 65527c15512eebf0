#include "babelkit/ops.hpp"

#include "babelkit/errors.hpp"

namespace babel {

namespace {

template <typename T, typename Fn>
auto with_eval(const LoadedModel& lm, Fn&& fn) {
    if constexpr (std::is_same_v<T, float>) {
        Evaluator<float> ev(lm.f32());
        return fn(ev);
    } else {
        Evaluator<double> ev(lm.f64());
        return fn(ev);
    }
}

std::vector<TokenId> rendered_with_target(const ChatTemplate& tmpl, std::span<const TokenId> prompt,
                                          std::span<const TokenId> target) {
    auto seq = tmpl.render(prompt);
    seq.insert(seq.end(), target.begin(), target.end());
    return seq;
}

}  // namespace

ScoreResult target_nll(const LoadedModel& lm, std::span<const TokenId> prompt,
                       std::span<const TokenId> target, const ChatTemplate& tmpl) {
    if (target.empty()) throw ValidationError("target must not be empty");
    auto seq = rendered_with_target(tmpl, prompt, target);
    int score_from = tmpl.rendered_len(static_cast<int>(prompt.size()));
    auto run = [&](auto& ev) { return ev.score(seq, score_from); };
    if (lm.config().precision == Precision::f64) return with_eval<double>(lm, run);
    return with_eval<float>(lm, run);
}

GradMatrix grad_onehot(const LoadedModel& lm, std::span<const TokenId> prompt,
                       std::span<const TokenId> target, const ChatTemplate& tmpl) {
    if (target.empty()) throw ValidationError("target must not be empty");
    if (prompt.empty()) throw ValidationError("prompt must not be empty");
    auto seq = rendered_with_target(tmpl, prompt, target);
    int score_from = tmpl.rendered_len(static_cast<int>(prompt.size()));
    GradMatrix out;
    out.rows = static_cast<int>(prompt.size());
    out.cols = lm.config().vocab_size;
    auto run = [&](auto& ev) {
        ev.score(seq, score_from, true);
        ev.backward(false);
        auto rows = ev.onehot_grad_rows(2, static_cast<int>(prompt.size()));
        out.v.assign(rows.begin(), rows.end());
        return 0;
    };
    if (lm.config().precision == Precision::f64)
        with_eval<double>(lm, run);
    else
        with_eval<float>(lm, run);
    return out;
}

GenerationResult greedy_decode(const LoadedModel& lm, std::span<const TokenId> prompt, int max_new,
                               const ChatTemplate& tmpl) {
    auto seq = tmpl.render(prompt);
    auto run = [&](auto& ev) { return ev.generate(seq, max_new, tmpl.bos); };
    if (lm.config().precision == Precision::f64) return with_eval<double>(lm, run);
    return with_eval<float>(lm, run);
}

std::vector<double> last_hidden_state(const LoadedModel& lm, std::span<const TokenId> prompt,
                                      const ChatTemplate& tmpl) {
    auto seq = tmpl.render(prompt);
    auto run = [&](auto& ev) {
        auto h = ev.final_hidden_at_last(seq);
        return std::vector<double>(h.begin(), h.end());
    };
    if (lm.config().precision == Precision::f64) return with_eval<double>(lm, run);
    return with_eval<float>(lm, run);
}

std::vector<double> embed_tokens(const LoadedModel& lm, std::span<const TokenId> ids) {
    if (ids.empty()) throw ValidationError("cannot embed an empty sequence");
    auto run = [&](auto& ev) {
        auto h = ev.mean_final_hidden(ids);
        return std::vector<double>(h.begin(), h.end());
    };
    if (lm.config().precision == Precision::f64) return with_eval<double>(lm, run);
    return with_eval<float>(lm, run);
}

}  // namespace babel
