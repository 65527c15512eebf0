#pragma once

#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "babelkit/model_config.hpp"
#include "babelkit/tokenizer.hpp"
#include "babelkit/types.hpp"

namespace babel {

// Decoder-only transformer weights at evaluation precision T. Immutable once
// built; safe to share across threads.
template <typename T>
struct Model {
    ModelConfig cfg;
    std::vector<T> w;  // flat, tensor_layout order

    struct LayerOffsets {
        size_t ln1, wq, wk, wv, wo, ln2, w1, w2;
    };
    size_t off_tok_emb = 0;
    size_t off_pos_emb = 0;  // unused for sinusoidal
    std::vector<LayerOffsets> layer_off;
    size_t off_ln_f = 0;
    size_t off_lm_head = 0;
    std::vector<T> sin_table;  // [context_len][d_model] when sinusoidal

    static Model from_flat(const ModelConfig& cfg, std::span<const float> flat);
    // Symmetric scaled-uniform init; small lm_head scale keeps the untrained
    // next-token distribution near uniform.
    static Model init_random(const ModelConfig& cfg, uint64_t seed);

    std::vector<float> to_f32() const;

    const T* tok_emb_row(TokenId id) const {
        return w.data() + off_tok_emb + static_cast<size_t>(id) * static_cast<size_t>(cfg.d_model);
    }
    const T* pos_row(int t) const {
        if (cfg.pos_encoding == PosEncoding::learned)
            return w.data() + off_pos_emb + static_cast<size_t>(t) * static_cast<size_t>(cfg.d_model);
        return sin_table.data() + static_cast<size_t>(t) * static_cast<size_t>(cfg.d_model);
    }

private:
    void index_offsets();
};

// [BOS, USER, prompt..., ASST]; targets are scored and generated after ASST.
struct ChatTemplate {
    TokenId bos = Tokenizer::kBos;
    TokenId user = Tokenizer::kUser;
    TokenId asst = Tokenizer::kAsst;
    static constexpr int framing_tokens = 3;

    std::vector<TokenId> render(std::span<const TokenId> prompt) const {
        std::vector<TokenId> out;
        out.reserve(prompt.size() + framing_tokens);
        out.push_back(bos);
        out.push_back(user);
        out.insert(out.end(), prompt.begin(), prompt.end());
        out.push_back(asst);
        return out;
    }
    int rendered_len(int prompt_len) const { return prompt_len + framing_tokens; }
};

struct ScoreResult {
    double total = 0.0;                // sum of per_token, accumulated in double
    std::vector<double> per_token;
};

struct GenerationResult {
    TokenSequence tokens;              // continuation only, specials excluded from text
    bool truncated_by_context = false;
    bool stopped_at_eot = false;
};

// Gradient accumulator matching the flat weight layout.
template <typename T>
struct Grads {
    std::vector<T> g;
    void zero() { std::fill(g.begin(), g.end(), T{}); }
};

// Forward/backward engine over one model. Holds workspace buffers; create one
// per thread. All loops have a fixed order, so results are bit-reproducible.
template <typename T>
class Evaluator {
public:
    explicit Evaluator(const Model<T>& model);

    const Model<T>& model() const { return *m_; }

    // Teacher-forced scoring: token ids[j] for j >= score_from is scored from
    // the logits at position j-1. Positions 0..n-2 are forwarded.
    // keep_activations enables a later backward() over this sequence.
    // resume_from skips re-stepping positions below it; the caller guarantees
    // the KV cache already holds those positions for this exact prefix (the
    // optimizer scores candidates in descending edit order to keep this true).
    ScoreResult score(std::span<const TokenId> ids, int score_from, bool keep_activations = false,
                      int resume_from = 0);

    // Backpropagates the summed NLL of the last kept score() call. Fills
    // input-embedding gradients; optionally accumulates weight gradients into
    // weight_grads() (callers zero them between steps).
    void backward(bool want_weight_grads);

    // d(total NLL)/d(embedding input row t), valid after backward(). Row count
    // equals the number of forwarded positions of the kept sequence.
    std::span<const T> input_grad_row(int t) const;
    int forwarded_positions() const { return n_fwd_; }

    // d(total NLL)/d(one-hot indicator): rows for positions
    // [begin_pos, begin_pos+count), each of width vocab_size.
    std::vector<T> onehot_grad_rows(int begin_pos, int count) const;

    Grads<T>& weight_grads() { return grads_; }

    GenerationResult generate(std::span<const TokenId> prefix, int max_new, TokenId eot);

    // Final-layer (post final norm) activation at the last position of ids.
    std::vector<T> final_hidden_at_last(std::span<const TokenId> ids);
    // Mean of final-layer activations over all positions of ids.
    std::vector<T> mean_final_hidden(std::span<const TokenId> ids);

private:
    void reset(bool keep);
    void step(TokenId id, int t);
    void compute_logits();                  // from xf_row_
    double nll_from_logits(TokenId target); // log-sum-exp - logit[target]

    const Model<T>* m_;
    int d_, dff_, heads_, hd_, vocab_, ctx_;
    T inv_sqrt_hd_;

    // rolling state
    std::vector<T> kcache_, vcache_;  // [L][ctx][d]
    std::vector<T> x_;                // current residual row [d]
    std::vector<T> xf_row_;           // current final-normed row [d]
    std::vector<T> logits_;           // [vocab]
    std::vector<T> scratch_, scratch2_, hbuf_;

    // activation stash for backward
    bool keep_ = false;
    std::vector<TokenId> kept_ids_;
    int n_fwd_ = 0;
    int score_from_ = 0;
    std::vector<T> xin_, a1_, qs_, cs_, xmid_, a2_;  // [L][ctx][d]
    std::vector<T> zs_;                              // [L][ctx][dff]
    std::vector<T> attn_;                            // [L][ctx][H][ctx]
    std::vector<T> xfin_, xfs_;                      // [ctx][d]

    // backward buffers
    std::vector<T> dx_all_;           // [ctx][d]; ends as input-embedding grads
    std::vector<T> dq_all_, dk_all_, dv_all_;
    Grads<T> grads_;

    size_t ld(int l, int t) const {
        return (static_cast<size_t>(l) * static_cast<size_t>(ctx_) + static_cast<size_t>(t)) *
               static_cast<size_t>(d_);
    }
    size_t lz(int l, int t) const {
        return (static_cast<size_t>(l) * static_cast<size_t>(ctx_) + static_cast<size_t>(t)) *
               static_cast<size_t>(dff_);
    }
    size_t lattn(int l, int t, int h) const {
        return ((static_cast<size_t>(l) * static_cast<size_t>(ctx_) + static_cast<size_t>(t)) *
                    static_cast<size_t>(heads_) +
                static_cast<size_t>(h)) *
               static_cast<size_t>(ctx_);
    }
};

extern template struct Model<float>;
extern template struct Model<double>;
extern template class Evaluator<float>;
extern template class Evaluator<double>;

}  // namespace babel
