#include "babelkit/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "babelkit/errors.hpp"
#include "babelkit/model.hpp"
#include "babelkit/rng.hpp"

namespace babel {

void TrainParams::validate() const {
    if (steps < 0) throw ValidationError("steps must be non-negative");
    if (batch_chunks < 1) throw ValidationError("batch_chunks must be at least 1");
    if (!(lr > 0)) throw ValidationError("lr must be positive");
    if (lr_final_frac < 0 || lr_final_frac > 1)
        throw ValidationError("lr_final_frac must lie in [0, 1]");
    if (heldout_frac < 0 || heldout_frac >= 1)
        throw ValidationError("heldout_frac must lie in [0, 1)");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
        throw ValidationError("adam betas must lie in [0, 1)");
}

uint64_t corpus_hash(const std::vector<std::string>& docs) {
    Fnv1a h;
    for (const auto& d : docs) {
        h.update(d.data(), d.size());
        const char sep = '\x1e';
        h.update(&sep, 1);
    }
    return h.digest();
}

namespace {

// [BOS] doc [BOS] doc ... [BOS], cut into context-length windows with one
// token of overlap so every stream token after the first gets predicted once
std::vector<std::vector<TokenId>> make_chunks(const Tokenizer& tok,
                                              const std::vector<std::string>& docs, int ctx) {
    std::vector<TokenId> stream;
    stream.push_back(Tokenizer::kBos);
    for (const auto& d : docs) {
        auto ids = tok.tokenize(d);
        stream.insert(stream.end(), ids.ids.begin(), ids.ids.end());
        stream.push_back(Tokenizer::kBos);
    }
    std::vector<std::vector<TokenId>> chunks;
    size_t stride = static_cast<size_t>(ctx - 1);
    for (size_t start = 0; start + 1 < stream.size(); start += stride) {
        size_t end = std::min(stream.size(), start + static_cast<size_t>(ctx));
        chunks.emplace_back(stream.begin() + static_cast<ptrdiff_t>(start),
                            stream.begin() + static_cast<ptrdiff_t>(end));
        if (end == stream.size()) break;
    }
    return chunks;
}

double mean_nll_over(Evaluator<float>& ev, const std::vector<std::vector<TokenId>>& chunks,
                     size_t* tokens_out) {
    double total = 0;
    size_t tokens = 0;
    for (const auto& c : chunks) {
        auto r = ev.score(c, 1);
        total += r.total;
        tokens += r.per_token.size();
    }
    if (tokens_out) *tokens_out = tokens;
    return tokens ? total / static_cast<double>(tokens) : 0.0;
}

}  // namespace

ModelCheckpoint train_model(const ModelConfig& cfg, const Tokenizer& tok,
                            const std::vector<std::string>& docs, const TrainParams& params,
                            TrainReport* report, std::ostream* log) {
    cfg.validate();
    params.validate();
    if (tok.vocab_size() != cfg.vocab_size)
        throw ValidationError("tokenizer vocab " + std::to_string(tok.vocab_size()) +
                              " does not match model vocab " + std::to_string(cfg.vocab_size));
    if (docs.empty()) throw ValidationError("training corpus is empty");

    Rng rng(derive_seed(params.seed, "train-stream"));
    std::vector<size_t> doc_order(docs.size());
    std::iota(doc_order.begin(), doc_order.end(), size_t{0});
    rng.shuffle(doc_order);
    size_t held = docs.size() >= 2
                      ? std::max<size_t>(1, static_cast<size_t>(
                                                std::floor(params.heldout_frac *
                                                           static_cast<double>(docs.size()))))
                      : 0;
    if (held >= docs.size()) held = docs.size() - 1;
    std::vector<std::string> train_docs, held_docs;
    for (size_t i = 0; i < doc_order.size(); ++i) {
        (i < doc_order.size() - held ? train_docs : held_docs).push_back(docs[doc_order[i]]);
    }

    auto chunks = make_chunks(tok, train_docs, cfg.context_len);
    if (chunks.empty()) throw ValidationError("training corpus has no usable chunks");
    auto held_chunks = make_chunks(tok, held_docs, cfg.context_len);

    auto model = Model<float>::init_random(cfg, derive_seed(params.seed, "model-init"));
    Evaluator<float> ev(model);
    auto& G = ev.weight_grads().g;

    std::vector<float> adam_m(model.w.size(), 0.0f), adam_v(model.w.size(), 0.0f);
    const float b1 = static_cast<float>(params.adam_beta1);
    const float b2 = static_cast<float>(params.adam_beta2);
    const float eps = 1e-8f;

    std::vector<size_t> order(chunks.size());
    std::iota(order.begin(), order.end(), size_t{0});
    size_t cursor = order.size();  // force shuffle on first use

    size_t train_tokens = 0;
    double window_loss = 0;
    size_t window_tokens = 0;
    double last_window_mean = 0;
    const int window = std::min(params.steps, 50);

    for (int s = 0; s < params.steps; ++s) {
        double frac = params.steps > 1 ? static_cast<double>(s) / (params.steps - 1) : 0.0;
        double lr_s = params.lr * (1.0 - (1.0 - params.lr_final_frac) * frac);

        if (G.size() != model.w.size()) G.assign(model.w.size(), 0.0f);
        std::fill(G.begin(), G.end(), 0.0f);
        double batch_loss = 0;
        size_t batch_tokens = 0;
        for (int b = 0; b < params.batch_chunks; ++b) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            const auto& chunk = chunks[order[cursor++]];
            auto r = ev.score(chunk, 1, true);
            ev.backward(true);
            batch_loss += r.total;
            batch_tokens += r.per_token.size();
        }
        train_tokens += batch_tokens;
        float inv_tok = 1.0f / static_cast<float>(batch_tokens);
        for (auto& g : G) g *= inv_tok;
        if (params.grad_clip > 0) {
            double sq = 0;
            for (float g : G) sq += static_cast<double>(g) * g;
            double norm = std::sqrt(sq);
            if (norm > params.grad_clip) {
                float scale = static_cast<float>(params.grad_clip / norm);
                for (auto& g : G) g *= scale;
            }
        }
        float c1 = 1.0f - std::pow(b1, static_cast<float>(s + 1));
        float c2 = 1.0f - std::pow(b2, static_cast<float>(s + 1));
        float lrf = static_cast<float>(lr_s);
        for (size_t i = 0; i < model.w.size(); ++i) {
            adam_m[i] = b1 * adam_m[i] + (1.0f - b1) * G[i];
            adam_v[i] = b2 * adam_v[i] + (1.0f - b2) * G[i] * G[i];
            float mh = adam_m[i] / c1;
            float vh = adam_v[i] / c2;
            model.w[i] -= lrf * mh / (std::sqrt(vh) + eps);
        }

        window_loss += batch_loss;
        window_tokens += batch_tokens;
        bool at_end = s + 1 == params.steps;
        if ((s + 1) % window == 0 || at_end) {
            last_window_mean = window_tokens ? window_loss / static_cast<double>(window_tokens) : 0;
            window_loss = 0;
            window_tokens = 0;
        }
        if (log && ((s + 1) % params.log_every == 0 || at_end)) {
            std::ostringstream line;
            line << "step " << (s + 1) << "/" << params.steps << " loss " << std::fixed
                 << std::setprecision(4) << last_window_mean << " lr " << std::setprecision(6)
                 << lr_s;
            *log << line.str() << "\n";
        }
    }

    size_t held_tokens = 0;
    double held_nll = held_chunks.empty() ? -1.0 : mean_nll_over(ev, held_chunks, &held_tokens);

    ModelCheckpoint ck;
    ck.config = cfg;
    ck.tokenizer = tok;
    ck.weights = model.to_f32();
    ck.metadata["train_seed"] = std::to_string(params.seed);
    ck.metadata["corpus_hash"] = std::to_string(corpus_hash(docs));
    ck.metadata["train_steps"] = std::to_string(params.steps);
    ck.metadata["train_docs"] = std::to_string(train_docs.size());
    ck.metadata["heldout_docs"] = std::to_string(held_docs.size());
    ck.metadata["train_tokens"] = std::to_string(train_tokens);
    {
        std::ostringstream v;
        v << std::setprecision(17) << last_window_mean;
        ck.metadata["final_train_loss"] = v.str();
        std::ostringstream h;
        h << std::setprecision(17) << held_nll;
        ck.metadata["heldout_nll"] = h.str();
    }
    if (report) {
        report->steps = params.steps;
        report->param_count = model.w.size();
        report->train_tokens = train_tokens;
        report->heldout_tokens = held_tokens;
        report->final_train_loss = last_window_mean;
        report->heldout_nll = held_nll;
    }
    return ck;
}

double corpus_mean_nll(const LoadedModel& lm, const std::vector<std::string>& docs) {
    auto chunks = make_chunks(lm.tokenizer(), docs, lm.config().context_len);
    if (chunks.empty()) throw ValidationError("no usable text to score");
    Evaluator<float> ev(lm.f32());
    return mean_nll_over(ev, chunks, nullptr);
}

}  // namespace babel
