#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "babelkit/model.hpp"
#include "babelkit/model_config.hpp"
#include "babelkit/tokenizer.hpp"

namespace babel {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr uint32_t kCheckpointVersion = 1;

// On-disk model bundle. Weights are stored as little-endian f32 in the
// tensor_layout order; metadata is a sorted key=value block that carries the
// config, the tokenizer, and training provenance.
struct ModelCheckpoint {
    ModelConfig config;
    Tokenizer tokenizer = Tokenizer::byte_level();
    std::map<std::string, std::string> metadata;
    std::vector<float> weights;
    uint64_t content_hash = 0;  // set by save/load
};

// File layout: "BBLF" | u32 version | u32 meta_len | meta bytes |
// f32 weights | u64 fnv1a of all preceding bytes.
void save_checkpoint(const std::string& path, ModelCheckpoint& ck);
ModelCheckpoint load_checkpoint(const std::string& path);

void config_to_metadata(const ModelConfig& cfg, std::map<std::string, std::string>& meta);
ModelConfig config_from_metadata(const std::map<std::string, std::string>& meta);

// Checkpoint plus lazily materialized eval-precision models. Immutable and
// shareable across threads once constructed.
class LoadedModel {
public:
    explicit LoadedModel(ModelCheckpoint ck) : ck_(std::move(ck)) {}

    static LoadedModel open(const std::string& path) { return LoadedModel(load_checkpoint(path)); }

    const ModelCheckpoint& checkpoint() const { return ck_; }
    const ModelConfig& config() const { return ck_.config; }
    const Tokenizer& tokenizer() const { return ck_.tokenizer; }
    uint64_t content_hash() const { return ck_.content_hash; }

    const Model<float>& f32() const {
        std::call_once(once32_, [this] {
            m32_ = std::make_unique<Model<float>>(Model<float>::from_flat(ck_.config, ck_.weights));
        });
        return *m32_;
    }
    const Model<double>& f64() const {
        std::call_once(once64_, [this] {
            m64_ = std::make_unique<Model<double>>(Model<double>::from_flat(ck_.config, ck_.weights));
        });
        return *m64_;
    }

private:
    ModelCheckpoint ck_;
    mutable std::once_flag once32_, once64_;
    mutable std::unique_ptr<Model<float>> m32_;
    mutable std::unique_ptr<Model<double>> m64_;
};

}  // namespace babel
