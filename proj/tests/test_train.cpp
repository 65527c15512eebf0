#include <cmath>
#include <string>
#include <vector>

#include "babelkit/checkpoint.hpp"
#include "babelkit/errors.hpp"
#include "babelkit/rng.hpp"
#include "babelkit/tokenizer.hpp"
#include "babelkit/train.hpp"
#include "doctest.h"

using namespace babel;

namespace {

ModelConfig train_cfg() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.context_len = 32;
    cfg.vocab_size = 260;
    return cfg;
}

std::vector<std::string> abab_corpus(int n) {
    std::vector<std::string> docs;
    for (int i = 0; i < n; ++i) {
        std::string d;
        for (int j = 0; j < 15; ++j) d += "ab";
        docs.push_back(d);
    }
    return docs;
}

std::vector<std::string> random_docs(int n, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> docs;
    for (int i = 0; i < n; ++i) {
        std::string d;
        for (int j = 0; j < 24; ++j) d += static_cast<char>('a' + rng.uniform_u32(26));
        docs.push_back(d);
    }
    return docs;
}

}  // namespace

TEST_CASE("a bigram pattern is learned to near zero loss") {
    auto tok = Tokenizer::byte_level();
    TrainParams p;
    p.steps = 500;
    p.seed = 5;
    p.log_every = 1000000;  // quiet
    TrainReport rep;
    auto ck = train_model(train_cfg(), tok, abab_corpus(200), p, &rep);
    CHECK(rep.steps == 500);
    CHECK(rep.heldout_nll < 0.2);  // a plain bigram table reaches ~0 here
    CHECK(rep.final_train_loss < 0.2);
    CHECK(rep.heldout_tokens > 0);
}

TEST_CASE("zero training steps leaves a near-uniform model") {
    auto tok = Tokenizer::byte_level();
    TrainParams p;
    p.steps = 0;
    p.seed = 6;
    TrainReport rep;
    auto ck = train_model(train_cfg(), tok, random_docs(100, 9), p, &rep);
    CHECK(rep.heldout_nll == doctest::Approx(std::log(260.0)).epsilon(0.03));
    CHECK(rep.train_tokens == 0);
}

TEST_CASE("training is bit-deterministic in the seed") {
    auto tok = Tokenizer::byte_level();
    auto docs = random_docs(60, 4);
    TrainParams p;
    p.steps = 25;
    p.seed = 11;
    auto a = train_model(train_cfg(), tok, docs, p);
    auto b = train_model(train_cfg(), tok, docs, p);
    CHECK(a.weights == b.weights);  // f32 bit equality
    CHECK(a.metadata == b.metadata);
    TrainParams q = p;
    q.seed = 12;
    auto c = train_model(train_cfg(), tok, docs, q);
    CHECK(a.weights != c.weights);
}

TEST_CASE("checkpoint metadata records the run") {
    auto tok = Tokenizer::byte_level();
    auto docs = random_docs(40, 2);
    TrainParams p;
    p.steps = 3;
    p.seed = 8;
    TrainReport rep;
    auto ck = train_model(train_cfg(), tok, docs, p, &rep);
    CHECK(ck.metadata.at("train_seed") == "8");
    CHECK(ck.metadata.at("train_steps") == "3");
    CHECK(ck.metadata.at("corpus_hash") == std::to_string(corpus_hash(docs)));
    CHECK(ck.metadata.count("heldout_nll") == 1);
    CHECK(rep.param_count == total_weight_count(train_cfg()));
    CHECK(rep.train_tokens > 0);
}

TEST_CASE("training lowers corpus nll against the init model") {
    auto tok = Tokenizer::byte_level();
    auto docs = abab_corpus(60);
    TrainParams p0;
    p0.steps = 0;
    p0.seed = 3;
    auto before = train_model(train_cfg(), tok, docs, p0);
    TrainParams p;
    p.steps = 120;
    p.seed = 3;
    auto after = train_model(train_cfg(), tok, docs, p);
    LoadedModel lm_before(std::move(before));
    LoadedModel lm_after(std::move(after));
    double nll_before = corpus_mean_nll(lm_before, docs);
    double nll_after = corpus_mean_nll(lm_after, docs);
    CHECK(nll_after < nll_before);
    CHECK(nll_before == doctest::Approx(std::log(260.0)).epsilon(0.03));
}

TEST_CASE("train rejects bad inputs") {
    auto tok = Tokenizer::byte_level();
    TrainParams p;
    CHECK_THROWS_AS((void)train_model(train_cfg(), tok, {}, p), ValidationError);
    TrainParams bad = p;
    bad.steps = -1;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = p;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = p;
    bad.heldout_frac = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = p;
    bad.batch_chunks = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}
