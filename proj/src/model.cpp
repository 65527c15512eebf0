#include "babelkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "babelkit/errors.hpp"
#include "babelkit/kernels.hpp"
#include "babelkit/rng.hpp"

namespace babel {

// ---------------------------------------------------------------- Model

template <typename T>
void Model<T>::index_offsets() {
    auto layout = tensor_layout(cfg);
    layer_off.assign(cfg.n_layers, {});
    for (const auto& ts : layout) {
        if (ts.name == "tok_emb") off_tok_emb = ts.offset;
        else if (ts.name == "pos_emb") off_pos_emb = ts.offset;
        else if (ts.name == "ln_f") off_ln_f = ts.offset;
        else if (ts.name == "lm_head") off_lm_head = ts.offset;
        else {
            // layer<N>.<tensor>
            size_t dot = ts.name.find('.');
            int l = std::stoi(ts.name.substr(5, dot - 5));
            std::string leaf = ts.name.substr(dot + 1);
            auto& lo = layer_off[static_cast<size_t>(l)];
            if (leaf == "ln1") lo.ln1 = ts.offset;
            else if (leaf == "wq") lo.wq = ts.offset;
            else if (leaf == "wk") lo.wk = ts.offset;
            else if (leaf == "wv") lo.wv = ts.offset;
            else if (leaf == "wo") lo.wo = ts.offset;
            else if (leaf == "ln2") lo.ln2 = ts.offset;
            else if (leaf == "w1") lo.w1 = ts.offset;
            else if (leaf == "w2") lo.w2 = ts.offset;
        }
    }
    if (cfg.pos_encoding == PosEncoding::sinusoidal) {
        sin_table.resize(static_cast<size_t>(cfg.context_len) * cfg.d_model);
        for (int t = 0; t < cfg.context_len; ++t) {
            for (int i = 0; i < cfg.d_model; ++i) {
                int k = i / 2;
                double angle = t * std::pow(10000.0, -2.0 * k / cfg.d_model);
                double v = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
                sin_table[static_cast<size_t>(t) * cfg.d_model + i] = static_cast<T>(v);
            }
        }
    }
}

template <typename T>
Model<T> Model<T>::from_flat(const ModelConfig& cfg, std::span<const float> flat) {
    cfg.validate();
    size_t need = total_weight_count(cfg);
    if (flat.size() != need)
        throw ValidationError("weight count mismatch: got " + std::to_string(flat.size()) +
                              ", layout needs " + std::to_string(need));
    Model m;
    m.cfg = cfg;
    m.w.resize(need);
    for (size_t i = 0; i < need; ++i) m.w[i] = static_cast<T>(flat[i]);
    m.index_offsets();
    return m;
}

template <typename T>
Model<T> Model<T>::init_random(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Model m;
    m.cfg = cfg;
    m.w.resize(total_weight_count(cfg));
    Rng rng(seed);
    for (const auto& ts : tensor_layout(cfg)) {
        bool is_norm = ts.name == "ln_f" || ts.name.ends_with("ln1") || ts.name.ends_with("ln2");
        if (is_norm) {
            std::fill_n(m.w.begin() + static_cast<ptrdiff_t>(ts.offset), ts.count(), T(1));
            continue;
        }
        // small head scale keeps untrained logits near zero, so the initial
        // NLL sits at ln(vocab)
        double hw = (ts.name == "lm_head") ? 0.02 : 0.14;
        for (size_t i = 0; i < ts.count(); ++i)
            m.w[ts.offset + i] = static_cast<T>(rng.uniform_symmetric(hw));
    }
    m.index_offsets();
    return m;
}

template <typename T>
std::vector<float> Model<T>::to_f32() const {
    std::vector<float> out(w.size());
    for (size_t i = 0; i < w.size(); ++i) out[i] = static_cast<float>(w[i]);
    return out;
}

// ------------------------------------------------------------ Evaluator

template <typename T>
Evaluator<T>::Evaluator(const Model<T>& model)
    : m_(&model),
      d_(model.cfg.d_model),
      dff_(model.cfg.d_ff),
      heads_(model.cfg.n_heads),
      hd_(model.cfg.head_dim()),
      vocab_(model.cfg.vocab_size),
      ctx_(model.cfg.context_len) {
    inv_sqrt_hd_ = T(1) / std::sqrt(static_cast<T>(hd_));
    int L = model.cfg.n_layers;
    size_t lcd = static_cast<size_t>(L) * ctx_ * d_;
    kcache_.resize(lcd);
    vcache_.resize(lcd);
    x_.resize(d_);
    xf_row_.resize(d_);
    logits_.resize(vocab_);
    scratch_.resize(static_cast<size_t>(std::max(d_, std::max(dff_, ctx_))));
    scratch2_.resize(static_cast<size_t>(std::max(d_, std::max(dff_, ctx_))));
    hbuf_.resize(dff_);
    xin_.resize(lcd);
    a1_.resize(lcd);
    qs_.resize(lcd);
    cs_.resize(lcd);
    xmid_.resize(lcd);
    a2_.resize(lcd);
    zs_.resize(static_cast<size_t>(L) * ctx_ * dff_);
    attn_.resize(static_cast<size_t>(L) * ctx_ * heads_ * ctx_);
    xfin_.resize(static_cast<size_t>(ctx_) * d_);
    xfs_.resize(static_cast<size_t>(ctx_) * d_);
    dx_all_.resize(static_cast<size_t>(ctx_) * d_);
    dq_all_.resize(static_cast<size_t>(ctx_) * d_);
    dk_all_.resize(static_cast<size_t>(ctx_) * d_);
    dv_all_.resize(static_cast<size_t>(ctx_) * d_);
}

template <typename T>
void Evaluator<T>::reset(bool keep) {
    keep_ = keep;
    kept_ids_.clear();
    n_fwd_ = 0;
    score_from_ = 0;
}

template <typename T>
void Evaluator<T>::step(TokenId id, int t) {
    if (id < 0 || id >= vocab_)
        throw ValidationError("token id " + std::to_string(id) + " outside vocab of " +
                              std::to_string(vocab_));
    const T* W = m_->w.data();
    const int d = d_;
    {
        const T* e = m_->tok_emb_row(id);
        const T* p = m_->pos_row(t);
        for (int i = 0; i < d; ++i) x_[i] = e[i] + p[i];
    }
    const int L = m_->cfg.n_layers;
    for (int l = 0; l < L; ++l) {
        const auto& lo = m_->layer_off[static_cast<size_t>(l)];
        T* xin = xin_.data() + ld(l, t);
        std::copy(x_.begin(), x_.end(), xin);
        T* a1 = a1_.data() + ld(l, t);
        kern::rmsnorm(xin, W + lo.ln1, a1, d);
        T* q = qs_.data() + ld(l, t);
        kern::matvec(W + lo.wq, a1, q, d, d);
        kern::matvec(W + lo.wk, a1, kcache_.data() + ld(l, t), d, d);
        kern::matvec(W + lo.wv, a1, vcache_.data() + ld(l, t), d, d);
        T* c = cs_.data() + ld(l, t);
        std::fill(c, c + d, T{});
        for (int h = 0; h < heads_; ++h) {
            const T* qh = q + h * hd_;
            T* pr = attn_.data() + lattn(l, t, h);
            T mx = -std::numeric_limits<T>::infinity();
            for (int j = 0; j <= t; ++j) {
                T s = kern::dot(qh, kcache_.data() + ld(l, j) + h * hd_, hd_) * inv_sqrt_hd_;
                pr[j] = s;
                if (s > mx) mx = s;
            }
            T sum{};
            for (int j = 0; j <= t; ++j) {
                pr[j] = std::exp(pr[j] - mx);
                sum += pr[j];
            }
            T inv = T(1) / sum;
            T* ch = c + h * hd_;
            for (int j = 0; j <= t; ++j) {
                pr[j] *= inv;
                kern::axpy(pr[j], vcache_.data() + ld(l, j) + h * hd_, ch, hd_);
            }
        }
        kern::matvec(W + lo.wo, c, scratch_.data(), d, d);
        for (int i = 0; i < d; ++i) x_[i] += scratch_[i];
        T* xmid = xmid_.data() + ld(l, t);
        std::copy(x_.begin(), x_.end(), xmid);
        T* a2 = a2_.data() + ld(l, t);
        kern::rmsnorm(xmid, W + lo.ln2, a2, d);
        T* z = zs_.data() + lz(l, t);
        kern::matvec(W + lo.w1, a2, z, dff_, d);
        if (m_->cfg.nonlinearity == Nonlinearity::relu) {
            for (int i = 0; i < dff_; ++i) hbuf_[i] = kern::relu(z[i]);
        } else {
            for (int i = 0; i < dff_; ++i) hbuf_[i] = kern::gelu(z[i]);
        }
        kern::matvec(W + lo.w2, hbuf_.data(), scratch_.data(), d, dff_);
        for (int i = 0; i < d; ++i) x_[i] += scratch_[i];
    }
    T* xfin = xfin_.data() + static_cast<size_t>(t) * d;
    std::copy(x_.begin(), x_.end(), xfin);
    kern::rmsnorm(xfin, W + m_->off_ln_f, xf_row_.data(), d);
    std::copy(xf_row_.begin(), xf_row_.end(), xfs_.data() + static_cast<size_t>(t) * d);
}

template <typename T>
void Evaluator<T>::compute_logits() {
    kern::matvec(m_->w.data() + m_->off_lm_head, xf_row_.data(), logits_.data(), vocab_, d_);
}

template <typename T>
double Evaluator<T>::nll_from_logits(TokenId target) {
    T mx = logits_[0];
    for (int v = 1; v < vocab_; ++v)
        if (logits_[v] > mx) mx = logits_[v];
    T sum{};
    for (int v = 0; v < vocab_; ++v) sum += std::exp(logits_[v] - mx);
    T nll = std::log(sum) - (logits_[static_cast<size_t>(target)] - mx);
    return static_cast<double>(nll);
}

template <typename T>
ScoreResult Evaluator<T>::score(std::span<const TokenId> ids, int score_from,
                                bool keep_activations, int resume_from) {
    int n = static_cast<int>(ids.size());
    if (n < 2) throw ValidationError("score needs at least two tokens");
    if (n > ctx_)
        throw ValidationError("sequence of " + std::to_string(n) + " tokens exceeds context of " +
                              std::to_string(ctx_));
    if (score_from < 1 || score_from > n - 1)
        throw ValidationError("score_from " + std::to_string(score_from) + " out of range for " +
                              std::to_string(n) + " tokens");
    if (resume_from < 0 || resume_from > score_from - 1)
        throw ValidationError("resume_from must lie in [0, score_from-1]");
    if (keep_activations && resume_from != 0)
        throw ValidationError("a resumed score cannot keep activations for backward");
    reset(keep_activations);
    ScoreResult res;
    res.per_token.reserve(static_cast<size_t>(n - score_from));
    for (int t = resume_from; t < n - 1; ++t) {
        step(ids[static_cast<size_t>(t)], t);
        if (t + 1 >= score_from) {
            compute_logits();
            res.per_token.push_back(nll_from_logits(ids[static_cast<size_t>(t) + 1]));
        }
    }
    double total = 0.0;
    for (double v : res.per_token) total += v;
    res.total = total;
    if (keep_activations) {
        kept_ids_.assign(ids.begin(), ids.end());
        n_fwd_ = n - 1;
        score_from_ = score_from;
    }
    return res;
}

template <typename T>
void Evaluator<T>::backward(bool want_weight_grads) {
    if (!keep_ || n_fwd_ <= 0)
        throw std::logic_error("backward without a kept forward pass");
    const T* W = m_->w.data();
    const int d = d_;
    const int n = n_fwd_;
    const int L = m_->cfg.n_layers;
    if (want_weight_grads && grads_.g.size() != m_->w.size())
        grads_.g.assign(m_->w.size(), T{});
    T* G = want_weight_grads ? grads_.g.data() : nullptr;

    std::fill(dx_all_.begin(), dx_all_.begin() + static_cast<ptrdiff_t>(n) * d, T{});

    // logits + final norm, scored positions only
    std::vector<T> dlogit(static_cast<size_t>(vocab_));
    std::vector<T> dxf(static_cast<size_t>(d));
    for (int t = score_from_ - 1; t < n; ++t) {
        TokenId y = kept_ids_[static_cast<size_t>(t) + 1];
        const T* xf = xfs_.data() + static_cast<size_t>(t) * d;
        kern::matvec(W + m_->off_lm_head, xf, logits_.data(), vocab_, d);
        T mx = logits_[0];
        for (int v = 1; v < vocab_; ++v)
            if (logits_[v] > mx) mx = logits_[v];
        T sum{};
        for (int v = 0; v < vocab_; ++v) {
            dlogit[static_cast<size_t>(v)] = std::exp(logits_[v] - mx);
            sum += dlogit[static_cast<size_t>(v)];
        }
        T inv = T(1) / sum;
        for (int v = 0; v < vocab_; ++v) dlogit[static_cast<size_t>(v)] *= inv;
        dlogit[static_cast<size_t>(y)] -= T(1);
        if (G) kern::outer_acc(G + m_->off_lm_head, dlogit.data(), xf, vocab_, d);
        std::fill(dxf.begin(), dxf.end(), T{});
        kern::matvec_t_acc(W + m_->off_lm_head, dlogit.data(), dxf.data(), vocab_, d);
        const T* xfin = xfin_.data() + static_cast<size_t>(t) * d;
        T r = T(1) / std::sqrt(kern::dot(xfin, xfin, d) / static_cast<T>(d) +
                               static_cast<T>(1e-8));
        kern::rmsnorm_backward(dxf.data(), xfin, W + m_->off_ln_f, r,
                               dx_all_.data() + static_cast<size_t>(t) * d,
                               G ? G + m_->off_ln_f : nullptr, d);
    }

    std::vector<T> dh(static_cast<size_t>(dff_));
    std::vector<T> dz(static_cast<size_t>(dff_));
    std::vector<T> dbuf(static_cast<size_t>(d));
    std::vector<T> dc(static_cast<size_t>(d));
    std::vector<T> dp(static_cast<size_t>(ctx_));
    for (int l = L - 1; l >= 0; --l) {
        const auto& lo = m_->layer_off[static_cast<size_t>(l)];
        std::fill(dq_all_.begin(), dq_all_.begin() + static_cast<ptrdiff_t>(n) * d, T{});
        std::fill(dk_all_.begin(), dk_all_.begin() + static_cast<ptrdiff_t>(n) * d, T{});
        std::fill(dv_all_.begin(), dv_all_.begin() + static_cast<ptrdiff_t>(n) * d, T{});
        for (int t = n - 1; t >= 0; --t) {
            T* dx = dx_all_.data() + static_cast<size_t>(t) * d;
            // mlp
            const T* z = zs_.data() + lz(l, t);
            std::fill(dh.begin(), dh.end(), T{});
            kern::matvec_t_acc(W + lo.w2, dx, dh.data(), d, dff_);
            if (G) {
                if (m_->cfg.nonlinearity == Nonlinearity::relu) {
                    for (int i = 0; i < dff_; ++i) hbuf_[i] = kern::relu(z[i]);
                } else {
                    for (int i = 0; i < dff_; ++i) hbuf_[i] = kern::gelu(z[i]);
                }
                kern::outer_acc(G + lo.w2, dx, hbuf_.data(), d, dff_);
            }
            if (m_->cfg.nonlinearity == Nonlinearity::relu) {
                for (int i = 0; i < dff_; ++i) dz[static_cast<size_t>(i)] = z[i] > T{} ? dh[static_cast<size_t>(i)] : T{};
            } else {
                for (int i = 0; i < dff_; ++i) dz[static_cast<size_t>(i)] = dh[static_cast<size_t>(i)] * kern::gelu_grad(z[i]);
            }
            std::fill(dbuf.begin(), dbuf.end(), T{});
            kern::matvec_t_acc(W + lo.w1, dz.data(), dbuf.data(), dff_, d);
            if (G) kern::outer_acc(G + lo.w1, dz.data(), a2_.data() + ld(l, t), dff_, d);
            const T* xmid = xmid_.data() + ld(l, t);
            T r2 = T(1) / std::sqrt(kern::dot(xmid, xmid, d) / static_cast<T>(d) +
                                    static_cast<T>(1e-8));
            kern::rmsnorm_backward(dbuf.data(), xmid, W + lo.ln2, r2, dx,
                                   G ? G + lo.ln2 : nullptr, d);
            // dx now holds the gradient at the attention output
            std::fill(dc.begin(), dc.end(), T{});
            kern::matvec_t_acc(W + lo.wo, dx, dc.data(), d, d);
            if (G) kern::outer_acc(G + lo.wo, dx, cs_.data() + ld(l, t), d, d);
            for (int h = 0; h < heads_; ++h) {
                const T* dch = dc.data() + h * hd_;
                const T* pr = attn_.data() + lattn(l, t, h);
                T dsum{};
                for (int j = 0; j <= t; ++j) {
                    T v = kern::dot(dch, vcache_.data() + ld(l, j) + h * hd_, hd_);
                    dp[static_cast<size_t>(j)] = v;
                    dsum += pr[j] * v;
                }
                const T* qh = qs_.data() + ld(l, t) + h * hd_;
                for (int j = 0; j <= t; ++j) {
                    T ds = pr[j] * (dp[static_cast<size_t>(j)] - dsum) * inv_sqrt_hd_;
                    kern::axpy(ds, kcache_.data() + ld(l, j) + h * hd_,
                               dq_all_.data() + static_cast<size_t>(t) * d + h * hd_, hd_);
                    kern::axpy(ds, qh, dk_all_.data() + static_cast<size_t>(j) * d + h * hd_, hd_);
                    kern::axpy(pr[j], dch,
                               dv_all_.data() + static_cast<size_t>(j) * d + h * hd_, hd_);
                }
            }
            // dx keeps the residual part (gradient at the block input)
        }
        for (int t = 0; t < n; ++t) {
            const T* a1 = a1_.data() + ld(l, t);
            std::fill(dbuf.begin(), dbuf.end(), T{});
            kern::matvec_t_acc(W + lo.wq, dq_all_.data() + static_cast<size_t>(t) * d, dbuf.data(), d, d);
            kern::matvec_t_acc(W + lo.wk, dk_all_.data() + static_cast<size_t>(t) * d, dbuf.data(), d, d);
            kern::matvec_t_acc(W + lo.wv, dv_all_.data() + static_cast<size_t>(t) * d, dbuf.data(), d, d);
            if (G) {
                kern::outer_acc(G + lo.wq, dq_all_.data() + static_cast<size_t>(t) * d, a1, d, d);
                kern::outer_acc(G + lo.wk, dk_all_.data() + static_cast<size_t>(t) * d, a1, d, d);
                kern::outer_acc(G + lo.wv, dv_all_.data() + static_cast<size_t>(t) * d, a1, d, d);
            }
            const T* xin = xin_.data() + ld(l, t);
            T r1 = T(1) / std::sqrt(kern::dot(xin, xin, d) / static_cast<T>(d) +
                                    static_cast<T>(1e-8));
            kern::rmsnorm_backward(dbuf.data(), xin, W + lo.ln1, r1,
                                   dx_all_.data() + static_cast<size_t>(t) * d,
                                   G ? G + lo.ln1 : nullptr, d);
        }
    }
    if (G) {
        for (int t = 0; t < n; ++t) {
            const T* dx = dx_all_.data() + static_cast<size_t>(t) * d;
            TokenId id = kept_ids_[static_cast<size_t>(t)];
            kern::axpy(T(1), dx, G + m_->off_tok_emb + static_cast<size_t>(id) * d, d);
            if (m_->cfg.pos_encoding == PosEncoding::learned)
                kern::axpy(T(1), dx, G + m_->off_pos_emb + static_cast<size_t>(t) * d, d);
        }
    }
}

template <typename T>
std::span<const T> Evaluator<T>::input_grad_row(int t) const {
    return {dx_all_.data() + static_cast<size_t>(t) * d_, static_cast<size_t>(d_)};
}

template <typename T>
std::vector<T> Evaluator<T>::onehot_grad_rows(int begin_pos, int count) const {
    if (begin_pos < 0 || count < 0 || begin_pos + count > n_fwd_)
        throw ValidationError("one-hot gradient rows out of forwarded range");
    std::vector<T> out(static_cast<size_t>(count) * vocab_);
    for (int i = 0; i < count; ++i) {
        const T* dx = dx_all_.data() + static_cast<size_t>(begin_pos + i) * d_;
        T* row = out.data() + static_cast<size_t>(i) * vocab_;
        // d/d(onehot_v) = <d/d(input row), embedding row v>
        for (int v = 0; v < vocab_; ++v)
            row[v] = kern::dot(dx, m_->tok_emb_row(v), d_);
    }
    return out;
}

template <typename T>
GenerationResult Evaluator<T>::generate(std::span<const TokenId> prefix, int max_new,
                                        TokenId eot) {
    int m = static_cast<int>(prefix.size());
    if (m < 1) throw ValidationError("generation needs a non-empty prefix");
    if (m > ctx_)
        throw ValidationError("prefix of " + std::to_string(m) + " tokens exceeds context of " +
                              std::to_string(ctx_));
    if (max_new < 0) throw ValidationError("max_new must be non-negative");
    reset(false);
    GenerationResult res;
    res.tokens.provenance = Provenance::text;
    for (int t = 0; t < m; ++t) step(prefix[static_cast<size_t>(t)], t);
    int pos = m - 1;
    for (int jnew = 0; jnew < max_new; ++jnew) {
        compute_logits();
        TokenId best = 0;
        T bv = logits_[0];
        for (int v = 1; v < vocab_; ++v) {
            if (logits_[v] > bv) {
                bv = logits_[v];
                best = v;
            }
        }
        if (best == eot) {
            res.stopped_at_eot = true;
            break;
        }
        res.tokens.ids.push_back(best);
        if (jnew + 1 == max_new) break;
        if (pos + 1 >= ctx_) {
            res.truncated_by_context = true;
            break;
        }
        step(best, ++pos);
    }
    return res;
}

template <typename T>
std::vector<T> Evaluator<T>::final_hidden_at_last(std::span<const TokenId> ids) {
    int n = static_cast<int>(ids.size());
    if (n < 1) throw ValidationError("hidden state needs a non-empty sequence");
    if (n > ctx_)
        throw ValidationError("sequence of " + std::to_string(n) + " tokens exceeds context of " +
                              std::to_string(ctx_));
    reset(false);
    for (int t = 0; t < n; ++t) step(ids[static_cast<size_t>(t)], t);
    return std::vector<T>(xf_row_.begin(), xf_row_.end());
}

template <typename T>
std::vector<T> Evaluator<T>::mean_final_hidden(std::span<const TokenId> ids) {
    int n = static_cast<int>(ids.size());
    if (n < 1) throw ValidationError("embedding needs a non-empty sequence");
    if (n > ctx_)
        throw ValidationError("sequence of " + std::to_string(n) + " tokens exceeds context of " +
                              std::to_string(ctx_));
    reset(false);
    std::vector<T> acc(static_cast<size_t>(d_), T{});
    for (int t = 0; t < n; ++t) {
        step(ids[static_cast<size_t>(t)], t);
        for (int i = 0; i < d_; ++i) acc[static_cast<size_t>(i)] += xf_row_[static_cast<size_t>(i)];
    }
    T inv = T(1) / static_cast<T>(n);
    for (auto& v : acc) v *= inv;
    return acc;
}

template struct Model<float>;
template struct Model<double>;
template class Evaluator<float>;
template class Evaluator<double>;

}  // namespace babel
