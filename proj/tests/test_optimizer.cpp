#include <algorithm>
#include <set>
#include <vector>

#include "babelkit/errors.hpp"
#include "babelkit/model.hpp"
#include "babelkit/optimizer.hpp"
#include "doctest.h"

using namespace babel;

namespace {

ModelConfig toy_cfg(int vocab = 260) {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.context_len = 48;
    cfg.vocab_size = vocab;
    return cfg;
}

std::vector<TokenId> byte_allowed() {
    std::vector<TokenId> v(256);
    for (int i = 0; i < 256; ++i) v[static_cast<size_t>(i)] = i;
    return v;
}

}  // namespace

TEST_CASE("init_prompt repeats the init token") {
    auto p = init_prompt(20, 33);
    REQUIRE(p.size() == 20);
    for (auto t : p) CHECK(t == 33);  // twenty '!'
    CHECK(init_prompt(1, 33).size() == 1);
    auto q = init_prompt(20, 65);
    for (auto t : q) CHECK(t == 65);
}

TEST_CASE("attack profiles carry the published budgets") {
    auto paper = profile_params("paper");
    CHECK(paper.prompt_len == 20);
    CHECK(paper.iters == 1000);
    CHECK(paper.topk == 256);
    CHECK(paper.batch == 256);
    auto desk = profile_params("desk");
    CHECK(desk.prompt_len == 20);
    CHECK(desk.iters == 250);
    CHECK(desk.topk == 64);
    CHECK(desk.batch == 64);
    CHECK_THROWS_AS((void)profile_params("turbo"), ValidationError);
}

TEST_CASE("top_k_substitutions ranks by most negative gradient") {
    std::vector<float> grads = {3.0f, -1.0f, -5.0f, 0.0f};
    std::vector<TokenId> all = {0, 1, 2, 3};
    auto sub = top_k_substitutions(grads, 1, 4, all, 2);
    REQUIRE(sub.size() == 1);
    CHECK(sub[0] == std::vector<TokenId>{2, 1});

    // all-equal row falls back to lowest ids
    std::vector<float> flat(4, 0.5f);
    auto tie = top_k_substitutions(flat, 1, 4, all, 2);
    CHECK(tie[0] == std::vector<TokenId>{0, 1});

    // banning token 2 removes it before selection
    std::vector<TokenId> no2 = {0, 1, 3};
    auto banned = top_k_substitutions(grads, 1, 4, no2, 2);
    CHECK(banned[0] == std::vector<TokenId>{1, 3});

    CHECK_THROWS_AS((void)top_k_substitutions(grads, 1, 4, all, 5), ValidationError);
    CHECK_THROWS_AS((void)top_k_substitutions(grads, 2, 4, all, 2), ValidationError);
}

TEST_CASE("top_k_substitutions is per position") {
    std::vector<float> grads = {
        -1.0f, 0.0f, 1.0f, 2.0f,  // pos 0 prefers 0
        2.0f, 1.0f, 0.0f, -1.0f,  // pos 1 prefers 3
    };
    std::vector<TokenId> all = {0, 1, 2, 3};
    auto sub = top_k_substitutions(grads, 2, 4, all, 1);
    CHECK(sub[0] == std::vector<TokenId>{0});
    CHECK(sub[1] == std::vector<TokenId>{3});
}

TEST_CASE("zero iterations returns the init prompt with its loss") {
    auto model = Model<float>::init_random(toy_cfg(), 3);
    std::vector<TokenId> target = {'h', 'i'};
    AttackParams p;
    p.prompt_len = 6;
    p.iters = 0;
    p.seed = 1;
    auto allowed = byte_allowed();
    auto res = run_gcg(model, ChatTemplate{}, target, allowed, p);
    CHECK(res.prompt.ids == init_prompt(6, p.init_token));
    CHECK(res.trace.empty());
    CHECK(res.iters_run == 0);
    CHECK(res.final_loss > 0.0);
    auto res2 = run_autoprompt(model, ChatTemplate{}, target, allowed, p);
    CHECK(res2.prompt.ids == res.prompt.ids);
    CHECK(res2.final_loss == res.final_loss);
}

TEST_CASE("gcg traces are monotone and within budget") {
    auto model = Model<float>::init_random(toy_cfg(), 5);
    std::vector<TokenId> target = {'o', 'k'};
    AttackParams p;
    p.prompt_len = 5;
    p.iters = 6;
    p.topk = 8;
    p.batch = 7;
    p.seed = 11;
    p.early_stop = false;
    auto allowed = byte_allowed();
    auto res = run_gcg(model, ChatTemplate{}, target, allowed, p);
    REQUIRE(res.iters_run == 6);
    REQUIRE(res.trace.size() == 6);
    for (size_t i = 1; i < res.trace.size(); ++i)
        CHECK(res.trace[i].loss <= res.trace[i - 1].loss);
    CHECK(res.final_loss == res.trace.back().loss);
    // one incumbent scoring plus B candidates per iteration
    CHECK(res.forward_count == static_cast<uint64_t>(p.iters) * (p.batch + 1));
    // replaced positions must quote the true old token
    std::vector<TokenId> replay = init_prompt(p.prompt_len, p.init_token);
    for (const auto& st : res.trace) {
        if (st.pos < 0) continue;
        CHECK(replay[static_cast<size_t>(st.pos)] == st.old_id);
        replay[static_cast<size_t>(st.pos)] = st.new_id;
    }
    CHECK(replay == res.prompt.ids);
}

TEST_CASE("autoprompt cycles positions and stays within budget") {
    auto model = Model<float>::init_random(toy_cfg(), 6);
    std::vector<TokenId> target = {'g', 'o'};
    AttackParams p;
    p.prompt_len = 3;
    p.iters = 6;
    p.topk = 5;
    p.seed = 12;
    p.early_stop = false;
    auto allowed = byte_allowed();
    auto res = run_autoprompt(model, ChatTemplate{}, target, allowed, p);
    REQUIRE(res.trace.size() == 6);
    for (size_t i = 1; i < res.trace.size(); ++i)
        CHECK(res.trace[i].loss <= res.trace[i - 1].loss);
    for (const auto& st : res.trace)
        if (st.pos >= 0) CHECK(st.pos == st.iter % p.prompt_len);
    CHECK(res.forward_count <= static_cast<uint64_t>(p.iters) * (p.topk + 1));
}

TEST_CASE("search results are deterministic and avoid banned tokens") {
    auto model = Model<float>::init_random(toy_cfg(), 7);
    std::vector<TokenId> target = {'a', 'b', 'c'};
    // restrict to lowercase letters plus '!'
    std::vector<TokenId> allowed = {'!'};
    for (TokenId c = 'a'; c <= 'z'; ++c) allowed.push_back(c);
    AttackParams p;
    p.prompt_len = 4;
    p.iters = 5;
    p.topk = 6;
    p.batch = 6;
    p.seed = 13;
    p.early_stop = false;
    auto r1 = run_gcg(model, ChatTemplate{}, target, allowed, p);
    auto r2 = run_gcg(model, ChatTemplate{}, target, allowed, p);
    CHECK(r1.prompt.ids == r2.prompt.ids);
    CHECK(r1.final_loss == r2.final_loss);
    CHECK(r1.forward_count == r2.forward_count);
    REQUIRE(r1.trace.size() == r2.trace.size());
    for (size_t i = 0; i < r1.trace.size(); ++i) {
        CHECK(r1.trace[i].loss == r2.trace[i].loss);
        CHECK(r1.trace[i].pos == r2.trace[i].pos);
        CHECK(r1.trace[i].new_id == r2.trace[i].new_id);
    }
    std::set<TokenId> ok(allowed.begin(), allowed.end());
    for (auto t : r1.prompt.ids) CHECK(ok.count(t) == 1);
}

TEST_CASE("gcg improves the loss over the init prompt") {
    auto model = Model<float>::init_random(toy_cfg(), 8);
    std::vector<TokenId> target = {'x'};
    auto allowed = byte_allowed();
    AttackParams zero;
    zero.prompt_len = 6;
    zero.iters = 0;
    double init_loss = run_gcg(model, ChatTemplate{}, target, allowed, zero).final_loss;
    AttackParams p;
    p.prompt_len = 6;
    p.iters = 10;
    p.topk = 16;
    p.batch = 16;
    p.seed = 21;
    p.early_stop = false;
    auto res = run_gcg(model, ChatTemplate{}, target, allowed, p);
    CHECK(res.final_loss <= init_loss);
    CHECK(res.final_loss < init_loss * 0.999);  // some step actually lands
}

TEST_CASE("autoprompt final loss trails gcg on paired trials") {
    // same budget comparison, tiny model; direction holds in the majority
    auto model = Model<float>::init_random(toy_cfg(), 9);
    std::vector<TokenId> target = {'h', 'e', 'y'};
    auto allowed = byte_allowed();
    int gcg_wins = 0, ap_wins = 0;
    for (uint64_t s = 0; s < 11; ++s) {
        AttackParams p;
        p.prompt_len = 4;
        p.iters = 8;
        p.topk = 8;
        p.batch = 8;
        p.seed = 100 + s;
        p.early_stop = false;
        auto g = run_gcg(model, ChatTemplate{}, target, allowed, p);
        auto a = run_autoprompt(model, ChatTemplate{}, target, allowed, p);
        if (g.final_loss < a.final_loss) ++gcg_wins;
        if (a.final_loss < g.final_loss) ++ap_wins;
    }
    CHECK(gcg_wins > ap_wins);
}

TEST_CASE("attack params validate ranges") {
    AttackParams p;
    p.prompt_len = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = AttackParams{};
    p.iters = -1;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = AttackParams{};
    p.topk = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = AttackParams{};
    p.batch = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = AttackParams{};
    p.max_decode_slack = -2;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    AttackParams{}.validate();  // defaults pass
}

TEST_CASE("search rejects malformed inputs") {
    auto model = Model<float>::init_random(toy_cfg(), 10);
    auto allowed = byte_allowed();
    AttackParams p;
    p.prompt_len = 4;
    p.iters = 1;
    std::vector<TokenId> target = {'z'};
    CHECK_THROWS_AS((void)run_gcg(model, ChatTemplate{}, {}, allowed, p), ValidationError);
    CHECK_THROWS_AS((void)run_gcg(model, ChatTemplate{}, target, {}, p), ValidationError);
    std::vector<TokenId> oob = {999};
    CHECK_THROWS_AS((void)run_gcg(model, ChatTemplate{}, oob, allowed, p), ValidationError);
    // init token outside the allowed set
    std::vector<TokenId> no_bang = {'a', 'b'};
    CHECK_THROWS_AS((void)run_gcg(model, ChatTemplate{}, target, no_bang, p), ValidationError);
    // context overflow reported before iterating: 45 + 3 framing + 1 target > 48
    AttackParams big;
    big.prompt_len = 45;
    big.iters = 1;
    CHECK_THROWS_AS((void)run_gcg(model, ChatTemplate{}, target, allowed, big), ValidationError);
}

TEST_CASE("trace serializes one json object per iteration") {
    auto model = Model<float>::init_random(toy_cfg(), 14);
    std::vector<TokenId> target = {'m'};
    AttackParams p;
    p.prompt_len = 3;
    p.iters = 4;
    p.topk = 4;
    p.batch = 4;
    p.seed = 2;
    p.early_stop = false;
    auto res = run_gcg(model, ChatTemplate{}, target, byte_allowed(), p);
    auto text = trace_to_jsonl(res);
    size_t lines = static_cast<size_t>(std::count(text.begin(), text.end(), '\n'));
    CHECK(lines == res.trace.size());
    CHECK(text.find("\"iter\"") != std::string::npos);
    CHECK(text.find("\"loss\"") != std::string::npos);
    CHECK(text.find("\"pos\"") != std::string::npos);
    CHECK(text.find("\"old_id\"") != std::string::npos);
    CHECK(text.find("\"new_id\"") != std::string::npos);
    CHECK(text.find("\"exact_match\"") != std::string::npos);
}
