#include "babelkit/model_config.hpp"

#include <sstream>

#include "babelkit/errors.hpp"

namespace babel {

std::string to_string(PosEncoding p) {
    return p == PosEncoding::learned ? "learned" : "sinusoidal";
}
std::string to_string(Nonlinearity n) { return n == Nonlinearity::relu ? "relu" : "gelu"; }
std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

PosEncoding pos_encoding_from_string(const std::string& s) {
    if (s == "learned") return PosEncoding::learned;
    if (s == "sinusoidal") return PosEncoding::sinusoidal;
    throw ValidationError("unknown positional encoding: " + s);
}
Nonlinearity nonlinearity_from_string(const std::string& s) {
    if (s == "relu") return Nonlinearity::relu;
    if (s == "gelu") return Nonlinearity::gelu;
    throw ValidationError("unknown nonlinearity: " + s);
}
Precision precision_from_string(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw ValidationError("unknown precision: " + s);
}

void ModelConfig::validate() const {
    std::ostringstream problems;
    auto fail = [&](const std::string& m) { problems << "  - " << m << "\n"; };
    if (d_model <= 0) fail("d_model must be positive");
    if (n_layers <= 0) fail("n_layers must be positive");
    if (n_heads <= 0) fail("n_heads must be positive");
    if (d_ff <= 0) fail("d_ff must be positive");
    if (context_len <= 4) fail("context_len must exceed the template overhead");
    if (vocab_size <= 4) fail("vocab_size must exceed the special token count");
    if (n_heads > 0 && d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
    if (n_heads > 0 && d_model % n_heads == 0 && (d_model / n_heads) % 2 != 0 &&
        pos_encoding == PosEncoding::sinusoidal)
        fail("sinusoidal encoding needs an even head_dim");
    std::string all = problems.str();
    if (!all.empty()) throw ValidationError("invalid model config:\n" + all);
}

std::vector<TensorSpec> tensor_layout(const ModelConfig& cfg) {
    std::vector<TensorSpec> specs;
    size_t off = 0;
    auto add = [&](std::string name, size_t rows, size_t cols) {
        specs.push_back({std::move(name), rows, cols, off});
        off += rows * cols;
    };
    const auto d = static_cast<size_t>(cfg.d_model);
    const auto dff = static_cast<size_t>(cfg.d_ff);
    add("tok_emb", static_cast<size_t>(cfg.vocab_size), d);
    if (cfg.pos_encoding == PosEncoding::learned)
        add("pos_emb", static_cast<size_t>(cfg.context_len), d);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add(p + "ln1", 1, d);
        add(p + "wq", d, d);
        add(p + "wk", d, d);
        add(p + "wv", d, d);
        add(p + "wo", d, d);
        add(p + "ln2", 1, d);
        add(p + "w1", dff, d);
        add(p + "w2", d, dff);
    }
    add("ln_f", 1, d);
    add("lm_head", static_cast<size_t>(cfg.vocab_size), d);
    return specs;
}

size_t total_weight_count(const ModelConfig& cfg) {
    auto specs = tensor_layout(cfg);
    return specs.back().offset + specs.back().count();
}

}  // namespace babel
