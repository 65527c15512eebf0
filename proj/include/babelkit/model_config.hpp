#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace babel {

enum class PosEncoding { learned, sinusoidal };
enum class Nonlinearity { relu, gelu };
enum class Precision { f32, f64 };

std::string to_string(PosEncoding p);
std::string to_string(Nonlinearity n);
std::string to_string(Precision p);
PosEncoding pos_encoding_from_string(const std::string& s);
Nonlinearity nonlinearity_from_string(const std::string& s);
Precision precision_from_string(const std::string& s);

struct ModelConfig {
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 2;
    int d_ff = 256;
    int context_len = 128;
    int vocab_size = 260;  // tokenizer-derived; 256 bytes + 4 specials by default
    PosEncoding pos_encoding = PosEncoding::learned;
    Nonlinearity nonlinearity = Nonlinearity::relu;
    Precision precision = Precision::f32;

    int head_dim() const { return d_model / n_heads; }

    // Throws ValidationError listing every violated constraint.
    void validate() const;
};

// One weight tensor in the serialized order.
struct TensorSpec {
    std::string name;
    size_t rows;
    size_t cols;
    size_t offset;  // element offset into the flat weight buffer
    size_t count() const { return rows * cols; }
};

// Declared row-major tensor order for checkpoints: tok_emb, pos_emb (learned
// only), then per layer ln1, wq, wk, wv, wo, ln2, w1, w2, then ln_f, lm_head.
std::vector<TensorSpec> tensor_layout(const ModelConfig& cfg);
size_t total_weight_count(const ModelConfig& cfg);

}  // namespace babel
