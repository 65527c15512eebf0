#include "babelkit/optimizer.hpp"

#include <algorithm>
#include <numeric>

#include "babelkit/errors.hpp"
#include "babelkit/rng.hpp"
#include "json.hpp"

namespace babel {

std::string to_string(SearchKind k) { return k == SearchKind::gcg ? "gcg" : "autoprompt"; }

SearchKind search_kind_from_string(const std::string& s) {
    if (s == "gcg") return SearchKind::gcg;
    if (s == "autoprompt") return SearchKind::autoprompt;
    throw ValidationError("unknown search kind: " + s);
}

void AttackParams::validate() const {
    if (prompt_len < 1) throw ValidationError("prompt_len must be at least 1");
    if (iters < 0) throw ValidationError("iters must be non-negative");
    if (topk < 1) throw ValidationError("topk must be at least 1");
    if (batch < 1) throw ValidationError("batch must be at least 1");
    if (max_decode_slack < 0) throw ValidationError("max_decode_slack must be non-negative");
}

AttackParams profile_params(const std::string& name) {
    AttackParams p;
    if (name == "paper") {
        p.iters = 1000;
        p.topk = 256;
        p.batch = 256;
    } else if (name == "desk") {
        p.iters = 250;
        p.topk = 64;
        p.batch = 64;
    } else {
        throw ValidationError("unknown profile: " + name + " (expected paper or desk)");
    }
    return p;
}

std::vector<TokenId> init_prompt(int prompt_len, TokenId init_token) {
    return std::vector<TokenId>(static_cast<size_t>(prompt_len), init_token);
}

std::vector<std::vector<TokenId>> top_k_substitutions(std::span<const float> grads, int positions,
                                                      int vocab_size,
                                                      std::span<const TokenId> allowed, int k) {
    if (grads.size() != static_cast<size_t>(positions) * static_cast<size_t>(vocab_size))
        throw ValidationError("gradient rows do not match positions * vocab");
    if (k < 1 || static_cast<size_t>(k) > allowed.size())
        throw ValidationError("k must lie in [1, allowed vocabulary size]");
    std::vector<std::vector<TokenId>> out(static_cast<size_t>(positions));
    std::vector<TokenId> order(allowed.begin(), allowed.end());
    for (int p = 0; p < positions; ++p) {
        const float* row = grads.data() + static_cast<size_t>(p) * vocab_size;
        // most negative gradient first; ties by id so ranking is total
        std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
            float ga = row[static_cast<size_t>(a)], gb = row[static_cast<size_t>(b)];
            if (ga != gb) return ga < gb;
            return a < b;
        });
        out[static_cast<size_t>(p)].assign(order.begin(), order.begin() + k);
    }
    return out;
}

namespace {

struct Candidate {
    int pos;
    TokenId tok;
};

bool decode_matches(Evaluator<float>& ev, std::span<const TokenId> rendered,
                    std::span<const TokenId> target, TokenId eot, int slack) {
    auto gen = ev.generate(rendered, static_cast<int>(target.size()) + slack, eot);
    if (static_cast<size_t>(gen.tokens.size()) < target.size()) return false;
    return std::equal(target.begin(), target.end(), gen.tokens.ids.begin());
}

AttackResult search_common(SearchKind kind, const Model<float>& model, const ChatTemplate& tmpl,
                           std::span<const TokenId> target, std::span<const TokenId> allowed,
                           const AttackParams& params) {
    params.validate();
    if (target.empty()) throw ValidationError("target must not be empty");
    if (allowed.empty()) throw ValidationError("allowed token set must not be empty");
    const int vocab = model.cfg.vocab_size;
    for (TokenId t : target)
        if (t < 0 || t >= vocab) throw ValidationError("target token outside vocab");
    std::vector<TokenId> allow(allowed.begin(), allowed.end());
    std::sort(allow.begin(), allow.end());
    allow.erase(std::unique(allow.begin(), allow.end()), allow.end());
    for (TokenId t : allow)
        if (t < 0 || t >= vocab) throw ValidationError("allowed token outside vocab");
    if (!std::binary_search(allow.begin(), allow.end(), params.init_token))
        throw ValidationError("init token is not in the allowed set");

    const int L = params.prompt_len;
    const int prompt_off = 2;  // after [bos, user]
    const int render_len = tmpl.rendered_len(L);
    const int total_len = render_len + static_cast<int>(target.size());
    if (total_len > model.cfg.context_len)
        throw ValidationError("rendered prompt plus target needs " + std::to_string(total_len) +
                              " tokens but context is " + std::to_string(model.cfg.context_len));
    const int keff = std::min<int>(params.topk, static_cast<int>(allow.size()));

    std::vector<TokenId> prompt = init_prompt(L, params.init_token);
    std::vector<TokenId> seq = tmpl.render(prompt);
    seq.insert(seq.end(), target.begin(), target.end());
    const int score_from = render_len;

    Evaluator<float> ev(model);
    Rng rng(params.seed);
    AttackResult res;
    res.trace.reserve(static_cast<size_t>(params.iters));

    if (params.iters == 0) {
        // no search: report the init prompt as-is with its loss
        res.final_loss = ev.score(seq, score_from).total;
        res.forward_count = 1;
        res.success = decode_matches(
            ev, std::span<const TokenId>(seq.data(), static_cast<size_t>(render_len)), target,
            tmpl.bos, params.max_decode_slack);
        res.prompt.ids = std::move(prompt);
        res.prompt.provenance = Provenance::optimized;
        return res;
    }

    std::vector<Candidate> cands;
    std::vector<int> eval_order;
    std::vector<double> losses;
    for (int iter = 0; iter < params.iters; ++iter) {
        double inc_loss = ev.score(seq, score_from, true).total;
        res.forward_count += 1;
        ev.backward(false);
        auto grads = ev.onehot_grad_rows(prompt_off, L);
        auto shortlist = top_k_substitutions(grads, L, vocab, allow, keff);

        cands.clear();
        if (kind == SearchKind::gcg) {
            for (int b = 0; b < params.batch; ++b) {
                int pos = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(L)));
                int j = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(keff)));
                cands.push_back({pos, shortlist[static_cast<size_t>(pos)][static_cast<size_t>(j)]});
            }
        } else {
            int pos = iter % L;
            for (int j = 0; j < keff; ++j)
                cands.push_back({pos, shortlist[static_cast<size_t>(pos)][static_cast<size_t>(j)]});
        }

        // descending edit position keeps the shared KV prefix valid
        eval_order.resize(cands.size());
        std::iota(eval_order.begin(), eval_order.end(), 0);
        std::stable_sort(eval_order.begin(), eval_order.end(),
                         [&](int a, int b) { return cands[static_cast<size_t>(a)].pos > cands[static_cast<size_t>(b)].pos; });
        losses.assign(cands.size(), 0.0);
        for (int ci : eval_order) {
            const auto& c = cands[static_cast<size_t>(ci)];
            TokenId keep = seq[static_cast<size_t>(prompt_off + c.pos)];
            seq[static_cast<size_t>(prompt_off + c.pos)] = c.tok;
            losses[static_cast<size_t>(ci)] =
                ev.score(seq, score_from, false, prompt_off + c.pos).total;
            res.forward_count += 1;
            seq[static_cast<size_t>(prompt_off + c.pos)] = keep;
        }

        // candidates first, incumbent last; ties go to the lowest index
        int best = -1;
        double best_loss = inc_loss;
        for (size_t i = 0; i < losses.size(); ++i) {
            if (losses[i] < best_loss || (best == -1 && losses[i] == best_loss)) {
                best = static_cast<int>(i);
                best_loss = losses[i];
            }
        }
        TraceStep stepRec;
        stepRec.iter = iter;
        if (best >= 0 && cands[static_cast<size_t>(best)].tok !=
                             prompt[static_cast<size_t>(cands[static_cast<size_t>(best)].pos)]) {
            const auto& c = cands[static_cast<size_t>(best)];
            stepRec.pos = c.pos;
            stepRec.old_id = prompt[static_cast<size_t>(c.pos)];
            stepRec.new_id = c.tok;
            prompt[static_cast<size_t>(c.pos)] = c.tok;
            seq[static_cast<size_t>(prompt_off + c.pos)] = c.tok;
            stepRec.loss = best_loss;
        } else {
            stepRec.loss = inc_loss;
        }
        bool exact = decode_matches(
            ev, std::span<const TokenId>(seq.data(), static_cast<size_t>(render_len)), target,
            tmpl.bos, params.max_decode_slack);
        stepRec.exact_match = exact;
        res.trace.push_back(stepRec);
        res.iters_run = iter + 1;
        res.success = exact;
        res.final_loss = stepRec.loss;
        if (params.early_stop && exact) break;
    }
    res.prompt.ids = std::move(prompt);
    res.prompt.provenance = Provenance::optimized;
    return res;
}

}  // namespace

AttackResult run_gcg(const Model<float>& model, const ChatTemplate& tmpl,
                     std::span<const TokenId> target, std::span<const TokenId> allowed,
                     const AttackParams& params) {
    return search_common(SearchKind::gcg, model, tmpl, target, allowed, params);
}

AttackResult run_autoprompt(const Model<float>& model, const ChatTemplate& tmpl,
                            std::span<const TokenId> target, std::span<const TokenId> allowed,
                            const AttackParams& params) {
    return search_common(SearchKind::autoprompt, model, tmpl, target, allowed, params);
}

AttackResult run_search(SearchKind kind, const Model<float>& model, const ChatTemplate& tmpl,
                        std::span<const TokenId> target, std::span<const TokenId> allowed,
                        const AttackParams& params) {
    return search_common(kind, model, tmpl, target, allowed, params);
}

std::string trace_to_jsonl(const AttackResult& res) {
    std::string out;
    for (const auto& s : res.trace) {
        nlohmann::ordered_json j;
        j["iter"] = s.iter;
        j["loss"] = s.loss;
        j["pos"] = s.pos;
        j["old_id"] = s.old_id;
        j["new_id"] = s.new_id;
        j["exact_match"] = s.exact_match;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace babel
