// Acceptance harness: every shipped claim gets one PASS/FAIL line with the
// measured numbers. Criteria 1-3 are oracle checks on throwaway checkpoints;
// 4-9 and 11-12 share one trained model and its attack campaigns; 10 trains
// its own pair. Run time is dominated by the three trainings and the long
// failing attacks, about 25 minutes at --jobs 8.
#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <iomanip>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "babelkit/checkpoint.hpp"
#include "babelkit/corpus.hpp"
#include "babelkit/errors.hpp"
#include "babelkit/metrics.hpp"
#include "babelkit/ops.hpp"
#include "babelkit/optimizer.hpp"
#include "babelkit/representation.hpp"
#include "babelkit/rng.hpp"
#include "babelkit/robustness.hpp"
#include "babelkit/runner.hpp"
#include "babelkit/train.hpp"
#include "naive_model.hpp"

using namespace babel;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr uint64_t kSeed = 11;

struct Outcome {
    int id = 0;
    bool pass = false;
    std::string detail;
    double secs = 0.0;
};

std::vector<Outcome> g_outcomes;

void report(int id, bool pass, const std::string& detail, Clock::time_point t0) {
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    g_outcomes.push_back({id, pass, detail, secs});
    std::ostringstream line;
    line << "[" << (id < 10 ? " " : "") << id << "] " << (pass ? "PASS" : "FAIL") << " " << detail
         << "  (" << std::fixed << std::setprecision(1) << secs << "s)";
    std::cout << line.str() << std::endl;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec) << v;
    return ss.str();
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

int run_tool(const std::string& cmd) {
    int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

// ---- criterion 1: one-hot gradients vs central differences ---------------

void criterion_gradcheck() {
    auto t0 = Clock::now();
    // FD runs at 80-bit long double: central-difference roundoff ~eps*f/h
    // would be ~7e-10 at f64, swamping the 1e-5 relative tolerance on the
    // small gradient entries random probes hit. The 1e-7 denominator floor
    // turns the check into |got-fd| < 1e-12 absolute below that scale,
    // which is stricter, not looser, than the relative reading.
    const long double h = 1e-5L;
    double worst = 0.0;
    int probes_run = 0;
    Rng rng(derive_seed(kSeed, "gradcheck"));
    for (int c = 0; c < 5; ++c) {
        ModelConfig cfg;
        cfg.d_model = 16;
        cfg.n_layers = 2;
        cfg.n_heads = 2;
        cfg.d_ff = 32;
        cfg.context_len = 32;
        cfg.precision = Precision::f64;
        if (c % 2 == 1) cfg.nonlinearity = Nonlinearity::gelu;
        if (c == 2) cfg.pos_encoding = PosEncoding::sinusoidal;
        ModelCheckpoint ck;
        ck.config = cfg;
        ck.weights = Model<float>::init_random(cfg, 101 + static_cast<uint64_t>(c)).to_f32();
        LoadedModel lm(std::move(ck));
        auto nm = naive::NaiveModelT<long double>::from_flat(cfg, lm.checkpoint().weights);

        std::vector<TokenId> prompt(8), target(6);
        for (auto& t : prompt) t = static_cast<TokenId>(rng.uniform_u32(256));
        for (auto& t : target) t = static_cast<TokenId>(rng.uniform_u32(256));
        auto G = grad_onehot(lm, prompt, target);

        ChatTemplate tmpl;
        auto seq = tmpl.render(prompt);
        seq.insert(seq.end(), target.begin(), target.end());
        std::vector<int> nids(seq.begin(), seq.end());
        int score_from = tmpl.rendered_len(static_cast<int>(prompt.size()));
        auto X0 = nm.embed_rows(nids);
        const long double* E = nm.tensor("tok_emb");

        for (int probe = 0; probe < 40; ++probe) {
            int pos = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(prompt.size())));
            int v = static_cast<int>(rng.uniform_u32(static_cast<uint32_t>(cfg.vocab_size)));
            auto Xp = X0, Xm = X0;
            // nudge the rendered row (prompt starts after [BOS][USER]) along
            // the embedding of candidate v; this is the one-hot direction
            size_t row = static_cast<size_t>(pos + 2) * cfg.d_model;
            for (int i = 0; i < cfg.d_model; ++i) {
                long double e = E[static_cast<size_t>(v) * cfg.d_model + i];
                Xp[row + static_cast<size_t>(i)] += h * e;
                Xm[row + static_cast<size_t>(i)] -= h * e;
            }
            double fd = static_cast<double>((nm.total_nll_from_inputs(Xp, nids, score_from) -
                                             nm.total_nll_from_inputs(Xm, nids, score_from)) /
                                            (2 * h));
            double got = G.at(pos, v);
            double rel = std::abs(got - fd) / std::max(std::abs(fd), 1e-7);
            worst = std::max(worst, rel);
            ++probes_run;
        }
    }
    std::ostringstream d;
    d << "gradient check: max rel err " << std::scientific << std::setprecision(2) << worst << " over "
      << probes_run << " probes, 5 checkpoints (tol 1e-5)";
    report(1, probes_run == 200 && worst < 1e-5, d.str(), t0);
}

// ---- criterion 2: nll vs naive per-position log-softmax ------------------

void criterion_nll_oracle() {
    auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_layers = 2;
    cfg.n_heads = 2;
    cfg.d_ff = 32;
    cfg.context_len = 48;
    cfg.precision = Precision::f64;
    ModelCheckpoint ck;
    ck.config = cfg;
    ck.weights = Model<float>::init_random(cfg, 202).to_f32();
    LoadedModel lm(std::move(ck));
    auto nm = naive::NaiveModel::from_flat(cfg, lm.checkpoint().weights);

    double worst = 0.0;
    Rng rng(derive_seed(kSeed, "nll-oracle"));
    ChatTemplate tmpl;
    for (int pair = 0; pair < 50; ++pair) {
        int pl = 1 + static_cast<int>(rng.uniform_u32(10));
        int tl = 1 + static_cast<int>(rng.uniform_u32(8));
        std::vector<TokenId> prompt(static_cast<size_t>(pl)), target(static_cast<size_t>(tl));
        for (auto& t : prompt) t = static_cast<TokenId>(rng.uniform_u32(256));
        for (auto& t : target) t = static_cast<TokenId>(rng.uniform_u32(256));

        auto got = target_nll(lm, prompt, target);
        double cpl = conditional_log_ppl(lm, prompt, target);

        auto seq = tmpl.render(prompt);
        seq.insert(seq.end(), target.begin(), target.end());
        std::vector<int> nids(seq.begin(), seq.end());
        auto naive_pt = nm.per_token_nll(nids, tmpl.rendered_len(pl));

        double naive_total = 0;
        for (double v : naive_pt) naive_total += v;
        worst = std::max(worst, std::abs(got.total - naive_total));
        for (size_t i = 0; i < naive_pt.size(); ++i)
            worst = std::max(worst, std::abs(got.per_token[i] - naive_pt[i]));
        worst = std::max(worst, std::abs(cpl - naive_total / tl));
    }
    std::ostringstream d;
    d << "nll oracle: max abs diff " << std::scientific << std::setprecision(2) << worst
      << " over 50 pairs (tol 1e-9)";
    report(2, worst < 1e-9, d.str(), t0);
}

// ---- criterion 3: gcg vs exhaustive optimum on a 32-token toy ------------

void criterion_gcg_oracle() {
    auto t0 = Clock::now();
    ModelConfig cfg;
    cfg.d_model = 32;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_ff = 64;
    cfg.context_len = 16;
    auto model = Model<float>::init_random(cfg, 303);

    std::vector<TokenId> allowed;
    for (char c = 'a'; c <= 'z'; ++c) allowed.push_back(c);
    for (char c : {' ', '.', ',', '!', '?', ';'}) allowed.push_back(c);
    std::vector<TokenId> target = {'o', 'k'};
    ChatTemplate tmpl;

    // exhaustive optimum over all 32^3 prompts, threaded over the first slot
    const int V = static_cast<int>(allowed.size());
    std::vector<double> best_per(static_cast<size_t>(V), 1e300);
    {
        std::atomic<int> next{0};
        auto worker = [&]() {
            Evaluator<float> ev(model);
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= V) break;
                std::vector<TokenId> prompt = {allowed[static_cast<size_t>(i)], 0, 0};
                for (int j = 0; j < V; ++j) {
                    prompt[1] = allowed[static_cast<size_t>(j)];
                    for (int k = 0; k < V; ++k) {
                        prompt[2] = allowed[static_cast<size_t>(k)];
                        auto seq = tmpl.render(prompt);
                        seq.insert(seq.end(), target.begin(), target.end());
                        double total = ev.score(seq, tmpl.rendered_len(3)).total;
                        best_per[static_cast<size_t>(i)] = std::min(best_per[static_cast<size_t>(i)], total);
                    }
                }
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < 8; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    double optimum = *std::min_element(best_per.begin(), best_per.end());

    std::atomic<int> near{0}, monotone{0};
    {
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (;;) {
                int trial = next.fetch_add(1);
                if (trial >= 20) break;
                AttackParams p = profile_params("desk");
                p.prompt_len = 3;
                p.seed = derive_seed(kSeed, "gcg-oracle-" + std::to_string(trial));
                auto res = run_gcg(model, tmpl, target, allowed, p);
                if (res.final_loss <= 1.05 * optimum) near.fetch_add(1);
                bool mono = true;
                double prev = 1e300;
                for (const auto& s : res.trace) {
                    if (s.loss > prev + 1e-12) mono = false;
                    prev = s.loss;
                }
                if (mono) monotone.fetch_add(1);
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < 8; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::ostringstream d;
    d << "gcg vs exhaustive: " << near.load() << "/20 trials within 1.05x of optimum "
      << fmt(optimum, 4) << " (need 16), monotone " << monotone.load() << "/20";
    report(3, near.load() >= 16 && monotone.load() == 20, d.str(), t0);
}

// ---- shared campaign state ------------------------------------------------

struct Shared {
    fs::path work;
    fs::path cli;
    int jobs = 8;
    bool reuse = false;

    std::vector<std::string> docs;
    std::optional<LoadedModel> model;
    fs::path model_path;
    double train_secs = 0.0;

    std::vector<std::string> short_targets;  // 50, bucket {1,10}
    std::vector<std::string> bucket_targets; // 140 across all four buckets
    std::vector<AttackRecordData> bucket_recs;
    fs::path records_path;
    double campaign_secs = 0.0;
};

void prepare_model(Shared& sh) {
    sh.docs = generate_corpus("encyclopedic", 360, derive_seed(kSeed, "corpus-encyclopedic"));
    sh.model_path = sh.work / "model.bblf";
    auto t0 = Clock::now();
    if (sh.reuse && fs::exists(sh.model_path)) {
        sh.model.emplace(load_checkpoint(sh.model_path.string()));
    } else {
        ModelConfig cfg;  // stock micro model
        TrainParams tp;
        tp.seed = kSeed;
        auto ck = train_model(cfg, Tokenizer::byte_level(), sh.docs, tp);
        save_checkpoint(sh.model_path.string(), ck);
        sh.model.emplace(std::move(ck));
    }
    sh.train_secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << "model ready: hash " << hex64(sh.model->content_hash()) << " ("
              << fmt(sh.train_secs, 1) << "s)" << std::endl;
}

void run_bucket_campaign(Shared& sh) {
    sh.short_targets = sample_targets(sh.docs, 50, 1, 10, derive_seed(kSeed, "targets-b0"));
    sh.bucket_targets = sh.short_targets;
    for (auto [lo, hi, tag] : {std::tuple<int, int, const char*>{11, 16, "targets-b1"},
                               {17, 22, "targets-b2"},
                               {23, 105, "targets-b3"}}) {
        auto more = sample_targets(sh.docs, 30, lo, hi, derive_seed(kSeed, tag));
        sh.bucket_targets.insert(sh.bucket_targets.end(), more.begin(), more.end());
    }

    sh.records_path = sh.work / "records.jsonl";
    auto t0 = Clock::now();
    if (sh.reuse && fs::exists(sh.records_path)) {
        sh.bucket_recs = load_records(sh.records_path.string());
        if (sh.bucket_recs.size() == sh.bucket_targets.size()) {
            sh.campaign_secs = 0.0;
            return;
        }
        sh.bucket_recs.clear();
    }
    std::ofstream sink(sh.records_path, std::ios::binary);
    sink << meta_json(kSeed, hex64(sh.model->content_hash())).dump() << "\n";
    CampaignSpec spec;
    spec.lm = &*sh.model;
    spec.set_name = "buckets";
    spec.targets = sh.bucket_targets;
    spec.params = profile_params("desk");
    spec.global_seed = kSeed;
    spec.jobs = sh.jobs;
    spec.records = &sink;
    sh.bucket_recs = run_campaign(spec);
    sh.campaign_secs = std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- criterion 4: exact-match floor on short targets ---------------------

void criterion_efficacy(Shared& sh) {
    auto t0 = Clock::now();
    int ok = 0, clean = 0;
    for (size_t i = 0; i < sh.short_targets.size(); ++i) {
        const auto& r = sh.bucket_recs[i];
        if (!r.error.empty()) continue;
        ++clean;
        if (r.metrics.exact_match) ++ok;
    }
    double rate = clean ? static_cast<double>(ok) / 50.0 : 0.0;
    double budget_secs = sh.train_secs + sh.campaign_secs;
    std::ostringstream d;
    d << "efficacy floor: " << ok << "/50 exact on <=10-token targets (" << fmt(100 * rate, 0)
      << "%, need 60%); train+campaign " << fmt(budget_secs, 0) << "s (cap 1800)";
    report(4, rate >= 0.6 && budget_secs <= 1800.0, d.str(), t0);
}

// ---- criterion 5: success rate falls with target length ------------------

void criterion_length_trend(Shared& sh) {
    auto t0 = Clock::now();
    std::array<int, 4> n{}, ok{};
    for (const auto& r : sh.bucket_recs) {
        int b = length_bucket(static_cast<int>(r.target_text.size()));
        n[static_cast<size_t>(b)] += 1;
        if (r.error.empty() && r.metrics.exact_match) ok[static_cast<size_t>(b)] += 1;
    }
    std::array<double, 4> rate{};
    bool filled = true, noninc = true;
    int total = 0;
    for (int b = 0; b < 4; ++b) {
        total += n[static_cast<size_t>(b)];
        if (n[static_cast<size_t>(b)] == 0) filled = false;
        rate[static_cast<size_t>(b)] =
            n[static_cast<size_t>(b)] ? static_cast<double>(ok[static_cast<size_t>(b)]) / n[static_cast<size_t>(b)] : 0.0;
        if (b > 0 && rate[static_cast<size_t>(b)] > rate[static_cast<size_t>(b - 1)] + 1e-12)
            noninc = false;
    }
    bool halved = filled && rate[3] <= 0.5 * rate[0];
    std::ostringstream d;
    d << "length trend: rates";
    for (int b = 0; b < 4; ++b)
        d << " " << fmt(rate[static_cast<size_t>(b)], 2) << "(" << ok[static_cast<size_t>(b)] << "/"
          << n[static_cast<size_t>(b)] << ")";
    d << " over " << total << " targets; non-increasing=" << (noninc ? "yes" : "no")
      << " last<=half-first=" << (halved ? "yes" : "no");
    report(5, filled && total >= 120 && noninc && halved, d.str(), t0);
}

// ---- criterion 6: random-token targets collapse --------------------------

void criterion_random_collapse(Shared& sh) {
    auto t0 = Clock::now();

    // natural short-target rate from criterion 4's records
    int nat_ok = 0;
    std::vector<double> nat_ppls;
    const auto& tok = sh.model->tokenizer();
    for (size_t i = 0; i < sh.short_targets.size(); ++i) {
        const auto& r = sh.bucket_recs[i];
        if (r.error.empty() && r.metrics.exact_match) ++nat_ok;
        nat_ppls.push_back(sequence_log_ppl(*sh.model, tok.tokenize(sh.short_targets[i]).span()));
    }
    double nat_rate = static_cast<double>(nat_ok) / 50.0;
    double nat_mean_ppl = mean_of(nat_ppls);

    // random targets with the same byte-length profile as the naturals
    std::map<int, int> by_len;
    for (const auto& t : sh.short_targets) by_len[static_cast<int>(t.size())] += 1;
    std::vector<std::string> random_targets;
    for (auto [len, count] : by_len) {
        auto part = random_token_targets(count, len, len, derive_seed(kSeed, "rand-" + std::to_string(len)));
        random_targets.insert(random_targets.end(), part.begin(), part.end());
    }

    CampaignSpec spec;
    spec.lm = &*sh.model;
    spec.set_name = "random";
    spec.targets = random_targets;
    spec.params = profile_params("desk");
    spec.global_seed = kSeed;
    spec.jobs = sh.jobs;
    auto recs = run_campaign(spec);

    int rnd_ok = 0, ppl_above = 0;
    for (const auto& r : recs) {
        if (r.error.empty() && r.metrics.exact_match) ++rnd_ok;
        double p = sequence_log_ppl(*sh.model, tok.tokenize(r.target_text).span());
        if (p > nat_mean_ppl) ++ppl_above;
    }
    double rnd_rate = static_cast<double>(rnd_ok) / static_cast<double>(recs.size());
    std::ostringstream d;
    d << "random collapse: random " << rnd_ok << "/" << recs.size() << " (" << fmt(100 * rnd_rate, 0)
      << "%) vs natural " << fmt(100 * nat_rate, 0) << "% (cap quarter); target ppl above natural mean "
      << fmt(nat_mean_ppl, 2) << ": " << ppl_above << "/" << recs.size();
    report(6, rnd_rate <= 0.25 * nat_rate && ppl_above == static_cast<int>(recs.size()), d.str(), t0);
}

// ---- criterion 7: entropy ordering over prompt classes -------------------

void criterion_entropy_order(Shared& sh) {
    auto t0 = Clock::now();
    const auto& tok = sh.model->tokenizer();

    std::vector<std::vector<TokenId>> babel, natural, random;
    auto allowed = tok.content_ids();
    Rng rrng(derive_seed(kSeed, "entropy-random"));
    for (const auto& r : sh.bucket_recs) {
        if (r.error.empty() && r.metrics.exact_match) {
            babel.push_back(r.prompt_ids);
            // length-matched uniform draw over the same allowed ids
            std::vector<TokenId> rnd(r.prompt_ids.size());
            for (auto& id : rnd) id = allowed[rrng.uniform_u32(static_cast<uint32_t>(allowed.size()))];
            random.push_back(std::move(rnd));
        }
        natural.push_back(tok.tokenize(natural_prompt(r.target_text)).ids);
    }

    double h_nat = bigram_conditional_entropy(natural);
    double h_bab = bigram_conditional_entropy(babel);
    double h_rnd = bigram_conditional_entropy(random);
    double s_nat = entropy_resample_std(natural, 0.7, 20, derive_seed(kSeed, "es-nat"));
    double s_bab = entropy_resample_std(babel, 0.7, 20, derive_seed(kSeed, "es-bab"));
    double s_rnd = entropy_resample_std(random, 0.7, 20, derive_seed(kSeed, "es-rnd"));

    auto mean_ppl = [&](const std::vector<std::vector<TokenId>>& seqs) {
        std::vector<double> v;
        for (const auto& s : seqs) v.push_back(sequence_log_ppl(*sh.model, s));
        return mean_of(v);
    };
    double p_nat = mean_ppl(natural), p_bab = mean_ppl(babel), p_rnd = mean_ppl(random);

    bool enough = babel.size() >= 50 && natural.size() >= 50 && random.size() >= 50;
    bool order = h_nat < h_bab && h_bab < h_rnd;
    bool close = std::abs(p_bab - p_rnd) <= 0.15 * p_rnd;
    bool doubled = p_bab >= 2 * p_nat && p_rnd >= 2 * p_nat;
    std::ostringstream d;
    d << "entropy order: bits nat " << fmt(h_nat, 2) << "+-" << fmt(s_nat, 2) << " < babel "
      << fmt(h_bab, 2) << "+-" << fmt(s_bab, 2) << " < random " << fmt(h_rnd, 2) << "+-"
      << fmt(s_rnd, 2) << " is " << (order ? "yes" : "no") << "; ppl nats nat " << fmt(p_nat, 2)
      << " babel " << fmt(p_bab, 2) << " random " << fmt(p_rnd, 2) << " (within 15%: "
      << (close ? "yes" : "no") << ", both >=2x natural: " << (doubled ? "yes" : "no") << "); n "
      << natural.size() << "/" << babel.size() << "/" << random.size();
    report(7, enough && order && close && doubled, d.str(), t0);
}

// ---- criterion 8: perturbations break optimized prompts ------------------

void criterion_robustness(Shared& sh) {
    auto t0 = Clock::now();
    const auto& tok = sh.model->tokenizer();

    std::vector<SweepInput> inputs;
    for (const auto& r : sh.bucket_recs) {
        if (!(r.error.empty() && r.metrics.exact_match)) continue;
        SweepInput in;
        in.prompt = r.prompt_ids;
        in.target = tok.tokenize(r.target_text).ids;
        in.target_text = r.target_text;
        inputs.push_back(std::move(in));
        if (inputs.size() >= 60) break;
    }

    std::vector<SweepCase> cases = {{PerturbKind::remove, 1},
                                    {PerturbKind::replace, 1},
                                    {PerturbKind::permute, 4}};
    auto cells = robustness_sweep(*sh.model, inputs, cases, 5, derive_seed(kSeed, "sweep"));

    // strip_punctuation only counts prompts that actually carry punctuation
    std::vector<SweepInput> punct_inputs;
    for (const auto& in : inputs)
        if (strip_punctuation(in.prompt, tok).size() < in.prompt.size()) punct_inputs.push_back(in);
    double strip_break = 0.0;
    int strip_n = static_cast<int>(punct_inputs.size());
    if (strip_n > 0) {
        auto strip_cells = robustness_sweep(*sh.model, punct_inputs, {{PerturbKind::strip_punct, 0}},
                                            1, derive_seed(kSeed, "sweep-strip"));
        strip_break = strip_cells[0].break_rate;
    }

    double rm = cells[0].break_rate, rp = cells[1].break_rate, pm = cells[2].break_rate;
    bool enough = inputs.size() >= 30;
    bool pass = enough && rm >= 0.5 && rp >= 0.5 && pm >= 0.8 && strip_n > 0 && strip_break >= 0.8;
    std::ostringstream d;
    d << "robustness: break rates remove1 " << fmt(rm, 2) << " replace1 " << fmt(rp, 2)
      << " (need 0.50), permute4 " << fmt(pm, 2) << " (need 0.80), strip " << fmt(strip_break, 2)
      << " on " << strip_n << " punctuated (need 0.80); " << inputs.size() << " prompts x 5 seeds";
    report(8, pass, d.str(), t0);
}

// ---- criterion 9: babel vs random separate in representation space -------

void criterion_representation(Shared& sh) {
    auto t0 = Clock::now();
    const auto& tok = sh.model->tokenizer();

    std::vector<std::vector<TokenId>> prompts;
    std::vector<int> labels;
    int n_babel = 0;
    for (const auto& r : sh.bucket_recs) {
        if (!(r.error.empty() && r.metrics.exact_match)) continue;
        prompts.push_back(r.prompt_ids);
        labels.push_back(0);
        if (++n_babel >= 60) break;
    }
    auto allowed = tok.content_ids();
    Rng rrng(derive_seed(kSeed, "rep-random"));
    for (int i = 0; i < n_babel; ++i) {
        std::vector<TokenId> rnd(prompts[static_cast<size_t>(i)].size());
        for (auto& id : rnd) id = allowed[rrng.uniform_u32(static_cast<uint32_t>(allowed.size()))];
        prompts.push_back(std::move(rnd));
        labels.push_back(1);
    }

    std::vector<size_t> skipped;
    auto rows = collect_reps(*sh.model, prompts, ChatTemplate{}, &skipped);
    double sil = skipped.empty() ? silhouette(rows, labels) : -2.0;

    auto proj = project_2d(rows);
    double m0 = 0, m1 = 0;
    for (const auto& p : proj.points) {
        m0 += p[0];
        m1 += p[1];
    }
    m0 /= static_cast<double>(proj.points.size());
    m1 /= static_cast<double>(proj.points.size());
    bool centered = std::abs(m0) < 1e-9 && std::abs(m1) < 1e-9;
    bool ordered = proj.explained[0] >= proj.explained[1];

    bool enough = n_babel >= 40;
    std::ostringstream d;
    d << "representation: silhouette " << fmt(sil, 3) << " (need >0.2) over " << n_babel
      << "+" << n_babel << " prompts; projection centered=" << (centered ? "yes" : "no")
      << " variance-ordered=" << (ordered ? "yes" : "no");
    report(9, enough && sil > 0.2 && centered && ordered, d.str(), t0);
}

// ---- criterion 10: scrubbing targets from the corpus blunts the attack ---

void criterion_unlearning(Shared& sh) {
    auto t0 = Clock::now();
    auto split = make_unlearning_split("flagged", 240, 10, 10, 30, derive_seed(kSeed, "unlearn"));

    auto train_one = [&](const std::vector<std::string>& docs, const std::string& name) {
        fs::path p = sh.work / name;
        if (sh.reuse && fs::exists(p)) return LoadedModel::open(p.string());
        ModelConfig cfg;
        TrainParams tp;
        tp.seed = kSeed;
        auto ck = train_model(cfg, Tokenizer::byte_level(), docs, tp);
        save_checkpoint(p.string(), ck);
        return LoadedModel(std::move(ck));
    };
    LoadedModel full = train_one(split.docs_with, "unlearn_full.bblf");
    LoadedModel ablated = train_one(split.docs_without, "unlearn_ablated.bblf");

    auto attack_rate = [&](const LoadedModel& lm) {
        CampaignSpec spec;
        spec.lm = &lm;
        spec.set_name = "unlearn";
        spec.targets = split.targets;
        spec.params = profile_params("desk");
        spec.global_seed = kSeed;
        spec.jobs = sh.jobs;
        auto recs = run_campaign(spec);
        int ok = 0;
        for (const auto& r : recs)
            if (r.error.empty() && r.metrics.exact_match) ++ok;
        return static_cast<double>(ok) / static_cast<double>(recs.size());
    };
    double rate_full = attack_rate(full);
    double rate_ablt = attack_rate(ablated);

    std::vector<double> ppl_full, ppl_ablt;
    for (const auto& t : split.targets) {
        auto ids = full.tokenizer().tokenize(t);
        ppl_full.push_back(sequence_log_ppl(full, ids.span()));
        ppl_ablt.push_back(sequence_log_ppl(ablated, ids.span()));
    }
    double mean_full = mean_of(ppl_full), mean_ablt = mean_of(ppl_ablt);

    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    bool pass = rate_full > 0 && rate_ablt <= 0.8 * rate_full && mean_ablt > mean_full &&
                secs <= 3600.0;
    std::ostringstream d;
    d << "unlearning: success full " << fmt(100 * rate_full, 0) << "% vs ablated "
      << fmt(100 * rate_ablt, 0) << "% (cap 0.8x); target ppl " << fmt(mean_full, 2) << " -> "
      << fmt(mean_ablt, 2) << " nats on " << split.targets.size() << " scrubbed targets";
    report(10, pass, d.str(), t0);
}

// ---- criterion 11: summarize table equals direct metric calls ------------

void criterion_table_crosscheck(Shared& sh) {
    auto t0 = Clock::now();
    fs::path out = sh.work / "summ";
    std::string cmd = sh.cli.string() + " --seed " + std::to_string(kSeed) + " --out " + out.string() +
                      " summarize --checkpoint " + sh.model_path.string() + " --records " +
                      sh.records_path.string() + " > " + (sh.work / "summarize.out").string() + " 2>&1";
    int rc = run_tool(cmd);
    if (rc != 0) {
        report(11, false, "table cross-check: summarize exited " + std::to_string(rc), t0);
        return;
    }

    // parse set rows of summary_target_ppl.csv: set,n,babel_mean_nats,natural_mean_nats
    std::map<std::string, std::array<double, 2>> table;
    {
        std::ifstream f(out / "summary_target_ppl.csv");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("set,", 0) == 0) continue;
            std::istringstream ss(line);
            std::string set, n, b, nat;
            std::getline(ss, set, ',');
            std::getline(ss, n, ',');
            std::getline(ss, b, ',');
            std::getline(ss, nat, ',');
            table[set] = {std::stod(b), std::stod(nat)};
        }
    }

    // recompute the same means straight from the records and the model
    const auto& tok = sh.model->tokenizer();
    std::vector<double> babel_v, nat_v;
    for (const auto& r : sh.bucket_recs) {
        if (!r.error.empty()) continue;
        auto target = tok.tokenize(r.target_text);
        if (target.empty()) continue;
        auto nat = tok.tokenize(natural_prompt(r.target_text));
        double nat_ppl;
        try {
            nat_ppl = conditional_log_ppl(*sh.model, nat.span(), target.span());
        } catch (const ValidationError&) {
            continue;
        }
        babel_v.push_back(r.metrics.conditional_log_ppl);
        nat_v.push_back(nat_ppl);
    }
    bool have = table.count("buckets") != 0;
    double db = have ? std::abs(table["buckets"][0] - mean_of(babel_v)) : 1.0;
    double dn = have ? std::abs(table["buckets"][1] - mean_of(nat_v)) : 1.0;
    std::ostringstream d;
    d << "table cross-check: babel/natural mean nats " << fmt(mean_of(babel_v), 3) << "/"
      << fmt(mean_of(nat_v), 3) << ", summarize diff " << std::scientific << std::setprecision(2)
      << std::max(db, dn) << " (tol 1e-9, " << babel_v.size() << " rows)";
    report(11, have && db < 1e-9 && dn < 1e-9, d.str(), t0);
}

// ---- criterion 12: parallel determinism and checkpoint round trip --------

void criterion_determinism(Shared& sh) {
    auto t0 = Clock::now();
    fs::path tfile = sh.work / "det_targets.txt";
    {
        std::ofstream f(tfile, std::ios::binary);
        for (int i = 0; i < 6; ++i) f << sh.short_targets[static_cast<size_t>(i)] << "\n";
    }
    auto run_attack = [&](int jobs, const std::string& name) {
        fs::path rec = sh.work / name;
        std::string cmd = sh.cli.string() + " --seed " + std::to_string(kSeed) + " --jobs " +
                          std::to_string(jobs) + " --out " + (sh.work / ("det" + std::to_string(jobs))).string() +
                          " attack --checkpoint " + sh.model_path.string() + " --targets " +
                          tfile.string() + " --records " + rec.string() + " --no-traces > " +
                          (sh.work / (name + ".out")).string() + " 2>&1";
        return std::make_pair(run_tool(cmd), rec);
    };
    auto [rc1, rec1] = run_attack(1, "det_j1.jsonl");
    auto [rc8, rec8] = run_attack(8, "det_j8.jsonl");
    bool identical = rc1 == 0 && rc8 == 0 && slurp(rec1) == slurp(rec8) && !slurp(rec1).empty();

    // checkpoint round trip through save/load must preserve every byte
    auto ck = load_checkpoint(sh.model_path.string());
    fs::path copy = sh.work / "model_copy.bblf";
    save_checkpoint(copy.string(), ck);
    bool bit_exact = slurp(sh.model_path) == slurp(copy);
    auto ck2 = load_checkpoint(copy.string());
    bit_exact = bit_exact && ck2.weights == ck.weights && ck2.content_hash == ck.content_hash;

    std::ostringstream d;
    d << "determinism: jobs 1 vs 8 records " << (identical ? "byte-identical" : "DIFFER")
      << " (rc " << rc1 << "/" << rc8 << "); checkpoint round trip "
      << (bit_exact ? "bit-exact" : "DIFFERS");
    report(12, identical && bit_exact, d.str(), t0);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance checks for the babel prompt toolkit"};
    Shared sh;
    std::string cli_path, work_path = "acceptance_work";
    app.add_option("--cli", cli_path, "path to the babelkit binary")->required();
    app.add_option("--work", work_path, "scratch directory");
    app.add_option("--jobs", sh.jobs, "campaign worker threads");
    app.add_flag("--reuse", sh.reuse, "reuse cached models and records in the work dir");
    CLI11_PARSE(app, argc, argv);

    sh.cli = fs::absolute(cli_path);
    sh.work = fs::absolute(work_path);
    fs::create_directories(sh.work);

    auto t_all = Clock::now();
    try {
        criterion_gradcheck();
        criterion_nll_oracle();
        criterion_gcg_oracle();

        prepare_model(sh);
        run_bucket_campaign(sh);
        std::cout << "bucket campaign: " << sh.bucket_recs.size() << " targets in "
                  << fmt(sh.campaign_secs, 1) << "s" << std::endl;

        criterion_efficacy(sh);
        criterion_length_trend(sh);
        criterion_random_collapse(sh);
        criterion_entropy_order(sh);
        criterion_robustness(sh);
        criterion_representation(sh);
        criterion_unlearning(sh);
        criterion_table_crosscheck(sh);
        criterion_determinism(sh);
    } catch (const std::exception& e) {
        std::cout << "aborted: " << e.what() << std::endl;
        return 2;
    }

    std::sort(g_outcomes.begin(), g_outcomes.end(),
              [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
    int passed = 0;
    for (const auto& o : g_outcomes)
        if (o.pass) ++passed;
    double total = std::chrono::duration<double>(Clock::now() - t_all).count();
    std::cout << "acceptance: " << passed << "/" << g_outcomes.size() << " criteria pass in "
              << fmt(total, 1) << "s" << std::endl;
    return passed == static_cast<int>(g_outcomes.size()) && g_outcomes.size() == 12 ? 0 : 1;
}
