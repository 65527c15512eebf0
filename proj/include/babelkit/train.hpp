#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "babelkit/checkpoint.hpp"
#include "babelkit/model_config.hpp"
#include "babelkit/tokenizer.hpp"

namespace babel {

struct TrainParams {
    int steps = 3000;
    int batch_chunks = 8;      // chunks per optimizer step
    double lr = 1e-3;
    double lr_final_frac = 0.1;  // linear decay endpoint as a fraction of lr
    double adam_beta1 = 0.85;
    double adam_beta2 = 0.99;
    double grad_clip = 1.0;      // global-norm clip; <= 0 disables
    double heldout_frac = 0.1;   // document share held out for eval
    uint64_t seed = 0;
    int log_every = 100;

    void validate() const;
};

struct TrainReport {
    int steps = 0;
    size_t param_count = 0;
    size_t train_tokens = 0;
    size_t heldout_tokens = 0;
    double final_train_loss = 0.0;  // mean NLL over the last logged window
    double heldout_nll = 0.0;       // mean NLL per token on held-out chunks
};

// Trains from random init on the given documents and returns a checkpoint
// whose metadata records the run (seed, corpus hash, steps, losses).
ModelCheckpoint train_model(const ModelConfig& cfg, const Tokenizer& tok,
                            const std::vector<std::string>& docs, const TrainParams& params,
                            TrainReport* report = nullptr, std::ostream* log = nullptr);

// Mean NLL per token of the documents under the model (same chunking as
// training, no gradient); used for held-out eval and unlearning probes.
double corpus_mean_nll(const LoadedModel& lm, const std::vector<std::string>& docs);

uint64_t corpus_hash(const std::vector<std::string>& docs);

}  // namespace babel
