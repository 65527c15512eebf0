#include "babelkit/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "babelkit/corpus.hpp"
#include "babelkit/errors.hpp"
#include "babelkit/metrics.hpp"
#include "babelkit/ops.hpp"
#include "babelkit/representation.hpp"
#include "babelkit/robustness.hpp"
#include "babelkit/train.hpp"

#include "CLI11.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace babel {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// shortest round-trip float text, same as the JSON records use
std::string jnum(double v) { return json(v).dump(); }

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

std::string now_stamp() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// timestamps live here and only here; everything else must rerun byte-equal
struct RunLog {
    std::ofstream f;
    std::mutex mu;

    explicit RunLog(const fs::path& path) : f(path, std::ios::app) {}
    void line(const std::string& msg) {
        std::lock_guard<std::mutex> lock(mu);
        if (f) f << "[" << now_stamp() << "] " << msg << "\n" << std::flush;
    }
};

}  // namespace

KvConfig KvConfig::from_text(const std::string& text, const std::string& origin) {
    KvConfig cfg;
    std::vector<std::string> problems;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) {
                problems.push_back(origin + ":" + std::to_string(lineno) +
                                   ": malformed section header '" + t + "'");
                continue;
            }
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                problems.push_back(origin + ":" + std::to_string(lineno) + ": empty section name");
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            problems.push_back(origin + ":" + std::to_string(lineno) +
                               ": expected key=value, got '" + t + "'");
            continue;
        }
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty()) {
            problems.push_back(origin + ":" + std::to_string(lineno) + ": empty key");
            continue;
        }
        std::string dotted = section.empty() ? key : section + "." + key;
        cfg.kv[dotted] = val;  // last one wins
    }
    if (!problems.empty()) {
        std::string msg = "config problems:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    return cfg;
}

KvConfig KvConfig::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), path);
}

std::string KvConfig::str(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

int64_t KvConfig::integer(const std::string& key, int64_t fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t used = 0;
        int64_t v = std::stoll(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + " is not an integer: '" + it->second + "'");
    }
}

double KvConfig::real(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + " is not a number: '" + it->second + "'");
    }
}

bool KvConfig::flag(const std::string& key, bool fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw ValidationError("config key " + key + " is not a boolean: '" + v + "'");
}

std::string target_id_of(const std::string& target_text) {
    Fnv1a h;
    h.update(target_text.data(), target_text.size());
    return hash_hex(h.digest());
}

uint64_t seed_for_target(uint64_t global_seed, const std::string& target_id) {
    return derive_seed(global_seed, "attack-" + target_id);
}

MetricReportData compute_metric_report(const LoadedModel& lm, std::span<const TokenId> prompt,
                                       std::span<const TokenId> target,
                                       const std::string& target_text) {
    MetricReportData m;
    auto gen = greedy_decode(lm, prompt, static_cast<int>(target.size()) + 8);
    m.generation = sanitize_utf8(lm.tokenizer().detokenize(gen.tokens.span()));
    m.exact_match = exact_match(m.generation, target_text);
    m.conditional_log_ppl = conditional_log_ppl(lm, prompt, target);
    if (!gen.tokens.empty()) {
        auto eg = embed_tokens(lm, gen.tokens.span());
        auto et = embed_tokens(lm, target);
        m.cosine = cosine(eg, et);
        m.distance_success = m.cosine >= kDistanceSuccessThreshold;
    }
    m.token_overlap = token_overlap(prompt, target);
    return m;
}

ordered_json record_to_json(const AttackRecordData& r) {
    ordered_json j;
    j["record"] = "attack";
    j["set"] = r.set;
    j["target_id"] = r.target_id;
    j["target_text"] = r.target_text;
    j["seed"] = r.seed;
    j["checkpoint_hash"] = r.checkpoint_hash;
    if (!r.error.empty()) {
        j["error"] = r.error;
        return j;
    }
    j["prompt_ids"] = r.prompt_ids;
    j["prompt_text"] = r.prompt_text;
    j["final_loss"] = r.final_loss;
    j["iters_run"] = r.iters_run;
    j["early_stopped"] = r.early_stopped;
    j["success"] = r.success;
    j["forward_count"] = r.forward_count;
    ordered_json m;
    m["exact_match"] = r.metrics.exact_match;
    m["conditional_log_ppl"] = r.metrics.conditional_log_ppl;
    m["distance_success"] = r.metrics.distance_success;
    m["cosine"] = r.metrics.cosine;
    m["token_overlap"] = r.metrics.token_overlap;
    m["generation"] = r.metrics.generation;
    j["metrics"] = std::move(m);
    if (!r.trace_path.empty()) j["trace_path"] = r.trace_path;
    return j;
}

AttackRecordData record_from_json(const json& j) {
    AttackRecordData r;
    r.set = j.value("set", "");
    r.target_id = j.value("target_id", "");
    r.target_text = j.value("target_text", "");
    r.seed = j.value("seed", uint64_t{0});
    r.checkpoint_hash = j.value("checkpoint_hash", "");
    r.error = j.value("error", "");
    if (!r.error.empty()) return r;
    r.prompt_ids = j.value("prompt_ids", std::vector<TokenId>{});
    r.prompt_text = j.value("prompt_text", "");
    r.final_loss = j.value("final_loss", 0.0);
    r.iters_run = j.value("iters_run", 0);
    r.early_stopped = j.value("early_stopped", false);
    r.success = j.value("success", false);
    r.forward_count = j.value("forward_count", 0LL);
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        r.metrics.exact_match = m.value("exact_match", false);
        r.metrics.conditional_log_ppl = m.value("conditional_log_ppl", 0.0);
        r.metrics.distance_success = m.value("distance_success", false);
        r.metrics.cosine = m.value("cosine", 0.0);
        r.metrics.token_overlap = m.value("token_overlap", 0);
        r.metrics.generation = m.value("generation", "");
    }
    r.trace_path = j.value("trace_path", "");
    return r;
}

ordered_json meta_json(uint64_t seed, const std::string& checkpoint_hash) {
    ordered_json j;
    j["record"] = "meta";
    j["seed"] = seed;
    j["checkpoint_hash"] = checkpoint_hash;
    j["tool_version"] = kToolVersion;
    return j;
}

namespace {

AttackRecordData attack_one(const CampaignSpec& spec, const std::string& target_text,
                            std::span<const TokenId> allowed, const ChatTemplate& tmpl) {
    const LoadedModel& lm = *spec.lm;
    AttackRecordData rec;
    rec.set = spec.set_name;
    rec.target_text = target_text;
    rec.target_id = target_id_of(target_text);
    rec.seed = seed_for_target(spec.global_seed, rec.target_id);
    rec.checkpoint_hash = hash_hex(lm.content_hash());

    auto t0 = std::chrono::steady_clock::now();
    try {
        auto target = lm.tokenizer().tokenize(target_text);
        if (target.empty()) throw ValidationError("target tokenizes to nothing");
        AttackParams params = spec.params;
        params.seed = rec.seed;
        AttackResult res =
            run_search(spec.kind, lm.f32(), tmpl, target.span(), allowed, params);
        rec.prompt_ids = res.prompt.ids;
        rec.prompt_text = sanitize_utf8(lm.tokenizer().detokenize(res.prompt.span()));
        rec.final_loss = res.final_loss;
        rec.iters_run = res.iters_run;
        rec.early_stopped = res.success && res.iters_run < params.iters;
        rec.success = res.success;
        rec.forward_count = static_cast<long long>(res.forward_count);
        rec.metrics = compute_metric_report(lm, rec.prompt_ids, target.span(), target_text);
        if (!spec.traces_dir.empty()) {
            fs::path tp = fs::path(spec.traces_dir) / (rec.target_id + ".jsonl");
            std::ofstream tf(tp, std::ios::binary);
            if (!tf) throw RuntimeFailure("cannot write trace file: " + tp.string());
            tf << trace_to_jsonl(res);
            rec.trace_path = spec.trace_prefix + rec.target_id + ".jsonl";
        }
    } catch (const ValidationError& e) {
        rec.error = e.what();
    }
    auto t1 = std::chrono::steady_clock::now();
    rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    return rec;
}

}  // namespace

std::vector<AttackRecordData> run_campaign(const CampaignSpec& spec) {
    if (!spec.lm) throw ValidationError("campaign needs a model");
    if (spec.targets.empty()) throw ValidationError("campaign needs at least one target");
    if (spec.jobs < 1) throw ValidationError("jobs must be >= 1");
    if (!spec.traces_dir.empty()) fs::create_directories(spec.traces_dir);

    const ChatTemplate tmpl;
    auto allowed = spec.lm->tokenizer().content_ids();
    const size_t n = spec.targets.size();

    std::vector<std::optional<AttackRecordData>> done(n);
    std::atomic<size_t> next{0};
    std::mutex mu;
    size_t cursor = 0;

    // workers deposit under the lock; whoever completes the next-in-order
    // slot drains the prefix, so the record stream is in target order for
    // any worker count
    auto drain = [&]() {
        while (cursor < n && done[cursor].has_value()) {
            const AttackRecordData& r = *done[cursor];
            if (spec.records) {
                *spec.records << record_to_json(r).dump() << "\n";
                spec.records->flush();
            }
            if (spec.log) {
                std::ostringstream ss;
                ss << "[" << now_stamp() << "] " << spec.set_name << "/" << r.target_id
                   << (r.error.empty() ? (r.success ? " ok" : " no-match") : " failed") << " in "
                   << r.wall_ms << " ms\n";
                *spec.log << ss.str() << std::flush;
            }
            ++cursor;
        }
    };

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) break;
            AttackRecordData rec = attack_one(spec, spec.targets[i], allowed, tmpl);
            std::lock_guard<std::mutex> lock(mu);
            done[i] = std::move(rec);
            drain();
        }
    };

    int n_threads = std::min<int>(spec.jobs, static_cast<int>(n));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    std::vector<AttackRecordData> out;
    out.reserve(n);
    for (auto& d : done) out.push_back(std::move(*d));
    return out;
}

std::vector<AttackRecordData> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open records file: " + path);
    std::vector<AttackRecordData> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
        if (j.value("record", "") == "meta") continue;
        out.push_back(record_from_json(j));
    }
    return out;
}

// ---------------------------------------------------------------- CLI below

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        std::string t = trim(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

struct Globals {
    KvConfig cfg;
    uint64_t seed = 0;
    int jobs = 1;
    std::string profile = "desk";
    fs::path out = ".";
    std::shared_ptr<RunLog> log;

    void logline(const std::string& s) const {
        if (log) log->line(s);
    }
};

// flag beats config key beats built-in default
struct Resolve {
    const KvConfig& c;

    std::string str(CLI::Option* o, const std::string& v, const std::string& key,
                    const std::string& dflt) const {
        if (o && o->count()) return v;
        return c.str(key, dflt);
    }
    int64_t num(CLI::Option* o, int64_t v, const std::string& key, int64_t dflt) const {
        if (o && o->count()) return v;
        return c.integer(key, dflt);
    }
    double real(CLI::Option* o, double v, const std::string& key, double dflt) const {
        if (o && o->count()) return v;
        return c.real(key, dflt);
    }
    bool flag(CLI::Option* o, bool v, const std::string& key, bool dflt) const {
        if (o && o->count()) return v;
        return c.flag(key, dflt);
    }
    std::vector<std::string> list(CLI::Option* o, const std::vector<std::string>& v,
                                  const std::string& key) const {
        if (o && o->count()) return v;
        return split_commas(c.str(key, ""));
    }
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw RuntimeFailure("cannot write " + path.string());
    f << text;
    if (!f) throw RuntimeFailure("failed writing " + path.string());
}

std::string csv_meta(uint64_t seed, const std::string& ckpt_hash) {
    return "# seed=" + std::to_string(seed) + " checkpoint_hash=" + ckpt_hash +
           " tool_version=" + std::string(kToolVersion) + "\n";
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// ------------------------------------------------------------------- train

struct TrainFlags {
    std::vector<std::string> corpus;
    std::string save, synth_kinds, scrub_targets, save_corpus;
    int64_t synth_docs = 120;
    int64_t steps = 0, batch_chunks = 0, log_every = 0;
    double lr = 0, lr_final_frac = 0, beta1 = 0, beta2 = 0, grad_clip = 0, heldout_frac = 0;
    int64_t layers = 0, d_model = 0, heads = 0, d_ff = 0, context = 0, merges = 0;
    std::string pos, act, precision, tokenizer_mode;
    std::map<std::string, CLI::Option*> opt;
};

void cmd_train(const Globals& g, const TrainFlags& t) {
    Resolve r{g.cfg};

    std::vector<std::string> docs;
    auto corpus_files = r.list(t.opt.at("corpus"), t.corpus, "train.corpus");
    if (!corpus_files.empty()) {
        for (const auto& f : corpus_files) {
            auto part = load_targets(f);
            docs.insert(docs.end(), part.begin(), part.end());
        }
        g.logline("train: loaded " + std::to_string(docs.size()) + " docs from " +
                  std::to_string(corpus_files.size()) + " files");
    } else {
        auto kinds = split_commas(
            r.str(t.opt.at("synth-kinds"), t.synth_kinds, "train.synth_kinds",
                  "encyclopedic,headline,email"));
        int per = static_cast<int>(r.num(t.opt.at("synth-docs"), t.synth_docs, "train.synth_docs", 120));
        if (per < 1) throw ValidationError("train.synth_docs must be >= 1");
        for (const auto& k : kinds) {
            auto part = generate_corpus(k, per, derive_seed(g.seed, "corpus-" + k));
            docs.insert(docs.end(), part.begin(), part.end());
        }
        g.logline("train: synthesized " + std::to_string(docs.size()) + " docs");
    }

    auto scrub = r.str(t.opt.at("scrub-targets"), t.scrub_targets, "train.scrub_targets", "");
    if (!scrub.empty()) {
        auto targets = load_targets(scrub);
        size_t before = docs.size();
        std::erase_if(docs, [&](const std::string& d) {
            for (const auto& tgt : targets)
                if (d.find(tgt) != std::string::npos) return true;
            return false;
        });
        g.logline("train: scrubbed " + std::to_string(before - docs.size()) + " target-bearing docs");
    }
    if (docs.empty()) throw ValidationError("corpus is empty (train.corpus / train.synth_kinds)");

    auto save_corpus = r.str(t.opt.at("save-corpus"), t.save_corpus, "train.save_corpus", "");
    if (!save_corpus.empty()) {
        std::string text;
        for (const auto& d : docs) text += d + "\n";
        write_text(g.out / save_corpus, text);
    }

    std::string tok_mode =
        r.str(t.opt.at("tokenizer"), t.tokenizer_mode, "model.tokenizer", "byte_level");
    Tokenizer tok;
    if (tok_mode == "byte_level") {
        tok = Tokenizer::byte_level();
    } else if (tok_mode == "learned_merge") {
        int m = static_cast<int>(r.num(t.opt.at("merges"), t.merges, "model.merges", 64));
        tok = Tokenizer::learn_merges(docs, m);
    } else {
        throw ValidationError("model.tokenizer must be byte_level or learned_merge, got '" +
                              tok_mode + "'");
    }

    ModelConfig mc;
    mc.n_layers = static_cast<int>(r.num(t.opt.at("layers"), t.layers, "model.layers", 2));
    mc.d_model = static_cast<int>(r.num(t.opt.at("d-model"), t.d_model, "model.d_model", 64));
    mc.n_heads = static_cast<int>(r.num(t.opt.at("heads"), t.heads, "model.heads", 2));
    mc.d_ff = static_cast<int>(r.num(t.opt.at("d-ff"), t.d_ff, "model.d_ff", 256));
    mc.context_len = static_cast<int>(r.num(t.opt.at("context"), t.context, "model.context", 128));
    mc.vocab_size = tok.vocab_size();
    mc.pos_encoding =
        pos_encoding_from_string(r.str(t.opt.at("pos"), t.pos, "model.pos", "learned"));
    mc.nonlinearity = nonlinearity_from_string(r.str(t.opt.at("act"), t.act, "model.act", "relu"));
    mc.precision =
        precision_from_string(r.str(t.opt.at("precision"), t.precision, "model.precision", "f32"));
    mc.validate();

    TrainParams tp;
    tp.steps = static_cast<int>(r.num(t.opt.at("steps"), t.steps, "train.steps", tp.steps));
    tp.batch_chunks = static_cast<int>(
        r.num(t.opt.at("batch-chunks"), t.batch_chunks, "train.batch_chunks", tp.batch_chunks));
    tp.lr = r.real(t.opt.at("lr"), t.lr, "train.lr", tp.lr);
    tp.lr_final_frac =
        r.real(t.opt.at("lr-final-frac"), t.lr_final_frac, "train.lr_final_frac", tp.lr_final_frac);
    tp.adam_beta1 = r.real(t.opt.at("beta1"), t.beta1, "train.beta1", tp.adam_beta1);
    tp.adam_beta2 = r.real(t.opt.at("beta2"), t.beta2, "train.beta2", tp.adam_beta2);
    tp.grad_clip = r.real(t.opt.at("grad-clip"), t.grad_clip, "train.grad_clip", tp.grad_clip);
    tp.heldout_frac =
        r.real(t.opt.at("heldout-frac"), t.heldout_frac, "train.heldout_frac", tp.heldout_frac);
    tp.log_every =
        static_cast<int>(r.num(t.opt.at("log-every"), t.log_every, "train.log_every", tp.log_every));
    tp.seed = g.seed;
    tp.validate();

    TrainReport rep;
    std::ostream* log_stream = g.log ? &g.log->f : nullptr;
    ModelCheckpoint ck = train_model(mc, tok, docs, tp, &rep, log_stream);

    fs::path save = r.str(t.opt.at("save"), t.save, "train.save", "");
    if (save.empty()) save = g.out / "model.bblf";
    else if (save.is_relative()) save = g.out / save;
    if (save.has_parent_path()) fs::create_directories(save.parent_path());
    save_checkpoint(save.string(), ck);

    std::cout << "checkpoint: " << save.string() << "\n"
              << "hash: " << hash_hex(ck.content_hash) << "\n"
              << "params: " << rep.param_count << "\n"
              << "train_tokens: " << rep.train_tokens << "\n"
              << "final_train_loss: " << jnum(rep.final_train_loss) << "\n"
              << "heldout_nll: " << jnum(rep.heldout_nll) << "\n";
}

// ------------------------------------------------------------------ attack

struct AttackFlags {
    std::string checkpoint, strategy, records;
    std::vector<std::string> targets;
    int64_t prompt_len = 0, iters = 0, topk = 0, batch = 0, init_token = 0, decode_slack = 0;
    bool no_early_stop = false;
    bool no_traces = false;
    std::map<std::string, CLI::Option*> opt;
};

std::pair<SearchKind, AttackParams> resolve_attack(const Globals& g, const AttackFlags& a) {
    Resolve r{g.cfg};
    SearchKind kind =
        search_kind_from_string(r.str(a.opt.at("strategy"), a.strategy, "attack.strategy", "gcg"));
    AttackParams p = profile_params(g.profile);
    p.prompt_len =
        static_cast<int>(r.num(a.opt.at("prompt-len"), a.prompt_len, "attack.prompt_len", p.prompt_len));
    p.iters = static_cast<int>(r.num(a.opt.at("iters"), a.iters, "attack.iters", p.iters));
    p.topk = static_cast<int>(r.num(a.opt.at("topk"), a.topk, "attack.topk", p.topk));
    p.batch = static_cast<int>(r.num(a.opt.at("batch"), a.batch, "attack.batch", p.batch));
    p.init_token = static_cast<TokenId>(
        r.num(a.opt.at("init-token"), a.init_token, "attack.init_token", p.init_token));
    p.early_stop = !r.flag(a.opt.at("no-early-stop"), a.no_early_stop, "attack.no_early_stop", false);
    p.max_decode_slack = static_cast<int>(
        r.num(a.opt.at("decode-slack"), a.decode_slack, "attack.decode_slack", p.max_decode_slack));
    p.validate();
    return {kind, p};
}

void cmd_attack(const Globals& g, const AttackFlags& a) {
    Resolve r{g.cfg};
    std::string ckpt = r.str(a.opt.at("checkpoint"), a.checkpoint, "attack.checkpoint", "");
    if (ckpt.empty()) throw ValidationError("attack needs --checkpoint (attack.checkpoint)");
    auto target_files = r.list(a.opt.at("targets"), a.targets, "attack.targets");
    if (target_files.empty()) throw ValidationError("attack needs --targets (attack.targets)");
    auto [kind, params] = resolve_attack(g, a);

    LoadedModel lm = LoadedModel::open(ckpt);
    std::string ckpt_hash = hash_hex(lm.content_hash());

    fs::path records_path = r.str(a.opt.at("records"), a.records, "attack.records", "");
    if (records_path.empty()) records_path = g.out / "records.jsonl";
    else if (records_path.is_relative()) records_path = g.out / records_path;
    if (records_path.has_parent_path()) fs::create_directories(records_path.parent_path());
    std::ofstream rf(records_path, std::ios::binary);
    if (!rf) throw RuntimeFailure("cannot write records file: " + records_path.string());
    rf << meta_json(g.seed, ckpt_hash).dump() << "\n";

    bool traces = !r.flag(a.opt.at("no-traces"), a.no_traces, "attack.no_traces", false);

    g.logline("attack: " + to_string(kind) + " profile=" + g.profile + " jobs=" +
              std::to_string(g.jobs) + " checkpoint=" + ckpt_hash);

    size_t total = 0, exact = 0;
    for (const auto& f : target_files) {
        auto texts = load_targets(f);
        if (texts.empty()) throw ValidationError("target set is empty: " + f);
        CampaignSpec spec;
        spec.lm = &lm;
        spec.set_name = fs::path(f).stem().string();
        spec.targets = texts;
        spec.kind = kind;
        spec.params = params;
        spec.global_seed = g.seed;
        spec.jobs = g.jobs;
        spec.records = &rf;
        if (traces) {
            spec.traces_dir = (g.out / "traces").string();
            spec.trace_prefix = "traces/";
        }
        spec.log = g.log ? &g.log->f : nullptr;
        auto recs = run_campaign(spec);
        size_t ok = 0;
        for (const auto& rec : recs)
            if (rec.error.empty() && rec.metrics.exact_match) ++ok;
        std::cout << "set " << spec.set_name << ": " << ok << "/" << recs.size() << " exact\n";
        total += recs.size();
        exact += ok;
    }
    std::cout << "total: " << exact << "/" << total << " exact\n"
              << "records: " << records_path.string() << "\n";
}

// ---------------------------------------------------------------- evaluate

struct EvalFlags {
    std::string checkpoint, records;
    std::map<std::string, CLI::Option*> opt;
};

void cmd_evaluate(const Globals& g, const EvalFlags& e) {
    Resolve r{g.cfg};
    std::string ckpt = r.str(e.opt.at("checkpoint"), e.checkpoint, "evaluate.checkpoint", "");
    if (ckpt.empty()) throw ValidationError("evaluate needs --checkpoint (evaluate.checkpoint)");
    fs::path records_path = r.str(e.opt.at("records"), e.records, "evaluate.records", "");
    if (records_path.empty()) records_path = g.out / "records.jsonl";

    LoadedModel lm = LoadedModel::open(ckpt);
    std::string ckpt_hash = hash_hex(lm.content_hash());
    auto recs = load_records(records_path.string());
    if (recs.empty()) throw ValidationError("no records in " + records_path.string());

    const ChatTemplate tmpl;
    size_t verified = 0, skipped = 0;
    for (const auto& rec : recs) {
        if (!rec.error.empty()) {
            ++skipped;
            continue;
        }
        if (rec.checkpoint_hash != ckpt_hash)
            throw ValidationError("record " + rec.target_id + " was produced by checkpoint " +
                                  rec.checkpoint_hash + ", not " + ckpt_hash);
        auto target = lm.tokenizer().tokenize(rec.target_text);

        // the attack scored in f32; rebuild the identical loss
        Evaluator<float> ev(lm.f32());
        std::vector<TokenId> seq = tmpl.render(rec.prompt_ids);
        int score_from = static_cast<int>(seq.size());
        seq.insert(seq.end(), target.ids.begin(), target.ids.end());
        double loss = ev.score(seq, score_from).total;
        auto fail = [&](const std::string& field, const std::string& stored,
                        const std::string& redone) {
            throw RuntimeFailure("record " + rec.target_id + ": " + field +
                                 " mismatch (stored " + stored + ", recomputed " + redone + ")");
        };
        if (loss != rec.final_loss) fail("final_loss", jnum(rec.final_loss), jnum(loss));

        MetricReportData m =
            compute_metric_report(lm, rec.prompt_ids, target.span(), rec.target_text);
        if (m.exact_match != rec.metrics.exact_match)
            fail("exact_match", std::to_string(rec.metrics.exact_match),
                 std::to_string(m.exact_match));
        if (m.conditional_log_ppl != rec.metrics.conditional_log_ppl)
            fail("conditional_log_ppl", jnum(rec.metrics.conditional_log_ppl),
                 jnum(m.conditional_log_ppl));
        if (m.distance_success != rec.metrics.distance_success)
            fail("distance_success", std::to_string(rec.metrics.distance_success),
                 std::to_string(m.distance_success));
        if (m.cosine != rec.metrics.cosine)
            fail("cosine", jnum(rec.metrics.cosine), jnum(m.cosine));
        if (m.token_overlap != rec.metrics.token_overlap)
            fail("token_overlap", std::to_string(rec.metrics.token_overlap),
                 std::to_string(m.token_overlap));
        if (m.generation != rec.metrics.generation)
            fail("generation", rec.metrics.generation, m.generation);
        ++verified;
    }
    std::cout << "verified " << verified << " records";
    if (skipped) std::cout << " (" << skipped << " failed records skipped)";
    std::cout << "\n";
}

// ----------------------------------------------------------------- perturb

struct PerturbFlags {
    std::string checkpoint, records, kinds, ks;
    int64_t reps = 0;
    std::map<std::string, CLI::Option*> opt;
};

void cmd_perturb(const Globals& g, const PerturbFlags& p) {
    Resolve r{g.cfg};
    std::string ckpt = r.str(p.opt.at("checkpoint"), p.checkpoint, "robustness.checkpoint", "");
    if (ckpt.empty()) throw ValidationError("perturb needs --checkpoint (robustness.checkpoint)");
    fs::path records_path = r.str(p.opt.at("records"), p.records, "robustness.records", "");
    if (records_path.empty()) records_path = g.out / "records.jsonl";

    LoadedModel lm = LoadedModel::open(ckpt);
    std::string ckpt_hash = hash_hex(lm.content_hash());

    auto recs = load_records(records_path.string());
    std::vector<SweepInput> inputs;
    for (const auto& rec : recs) {
        if (!rec.error.empty() || !rec.metrics.exact_match) continue;
        SweepInput si;
        si.prompt = rec.prompt_ids;
        si.target = lm.tokenizer().tokenize(rec.target_text).ids;
        si.target_text = rec.target_text;
        inputs.push_back(std::move(si));
    }
    if (inputs.empty())
        throw ValidationError("no successful records to perturb in " + records_path.string());

    auto kind_names =
        split_commas(r.str(p.opt.at("kinds"), p.kinds, "robustness.kinds",
                           "remove,replace,permute,strip_punct"));
    auto k_strs = split_commas(r.str(p.opt.at("ks"), p.ks, "robustness.ks", "1,2,4,8"));
    std::vector<int> ks;
    for (const auto& s : k_strs) {
        try {
            ks.push_back(std::stoi(s));
        } catch (const std::exception&) {
            throw ValidationError("robustness.ks entry is not an integer: '" + s + "'");
        }
    }
    int reps = static_cast<int>(r.num(p.opt.at("reps"), p.reps, "robustness.reps", 5));

    std::vector<SweepCase> cases;
    for (const auto& name : kind_names) {
        PerturbKind kind = perturb_kind_from_string(name);
        if (kind == PerturbKind::strip_punct) {
            cases.push_back({kind, 0});
        } else {
            for (int k : ks) cases.push_back({kind, k});
        }
    }

    g.logline("perturb: " + std::to_string(cases.size()) + " cases over " +
              std::to_string(inputs.size()) + " prompts, " + std::to_string(reps) + " seeds");
    auto cells = robustness_sweep(lm, inputs, cases, reps, derive_seed(g.seed, "perturb"));

    std::string csv = csv_meta(g.seed, ckpt_hash) + "kind,k,success_rate,n_prompts,n_seeds\n";
    ordered_json series = ordered_json::array();
    std::string last_kind;
    for (const auto& cell : cells) {
        int n_seeds = inputs.empty() ? 0 : cell.runs / static_cast<int>(inputs.size());
        csv += to_string(cell.kind) + "," + std::to_string(cell.k) + "," + jnum(cell.match_rate) +
               "," + std::to_string(inputs.size()) + "," + std::to_string(n_seeds) + "\n";
        if (to_string(cell.kind) != last_kind) {
            last_kind = to_string(cell.kind);
            ordered_json s;
            s["kind"] = last_kind;
            s["points"] = ordered_json::array();
            series.push_back(std::move(s));
        }
        ordered_json pt;
        pt["k"] = cell.k;
        pt["success_rate"] = cell.match_rate;
        series.back()["points"].push_back(std::move(pt));
        std::cout << to_string(cell.kind) << " k=" << cell.k << " success_rate=" << jnum(cell.match_rate)
                  << "\n";
    }
    write_text(g.out / "robustness.csv", csv);

    ordered_json plot;
    plot["seed"] = g.seed;
    plot["checkpoint_hash"] = ckpt_hash;
    plot["tool_version"] = kToolVersion;
    plot["n_prompts"] = inputs.size();
    plot["series"] = std::move(series);
    write_text(g.out / "robustness.json", plot.dump(2) + "\n");
    std::cout << "wrote " << (g.out / "robustness.csv").string() << " and "
              << (g.out / "robustness.json").string() << "\n";
}

// --------------------------------------------------------------- summarize

struct SummarizeFlags {
    std::string checkpoint;
    std::vector<std::string> records;
    std::map<std::string, CLI::Option*> opt;
};

void cmd_summarize(const Globals& g, const SummarizeFlags& s) {
    Resolve r{g.cfg};
    std::string ckpt = r.str(s.opt.at("checkpoint"), s.checkpoint, "summarize.checkpoint", "");
    if (ckpt.empty()) throw ValidationError("summarize needs --checkpoint (summarize.checkpoint)");
    auto rec_files = r.list(s.opt.at("records"), s.records, "summarize.records");
    if (rec_files.empty()) rec_files.push_back((g.out / "records.jsonl").string());

    LoadedModel lm = LoadedModel::open(ckpt);
    std::string ckpt_hash = hash_hex(lm.content_hash());

    std::vector<AttackRecordData> recs;
    for (const auto& f : rec_files) {
        auto part = load_records(f);
        recs.insert(recs.end(), part.begin(), part.end());
    }
    if (recs.empty()) throw ValidationError("no records to summarize");

    // (a) success rate per (set, checkpoint), first-seen order, all attempts
    std::vector<std::pair<std::string, std::string>> group_order;
    std::map<std::pair<std::string, std::string>, std::pair<int, int>> groups;  // n, n_success
    for (const auto& rec : recs) {
        auto key = std::make_pair(rec.set, rec.checkpoint_hash);
        if (!groups.count(key)) group_order.push_back(key);
        auto& ge = groups[key];
        ge.first += 1;
        if (rec.error.empty() && rec.metrics.exact_match) ge.second += 1;
    }
    std::string csv_a = csv_meta(g.seed, ckpt_hash) + "set,checkpoint,n,n_success,success_rate\n";
    for (const auto& key : group_order) {
        auto [n, ok] = groups[key];
        csv_a += csv_escape(key.first) + "," + key.second + "," + std::to_string(n) + "," +
                 std::to_string(ok) + "," + jnum(static_cast<double>(ok) / n) + "\n";
    }
    write_text(g.out / "summary_success.csv", csv_a);

    // (b) target log-ppl conditioned on babel vs natural prompt, per set
    std::vector<std::string> set_order;
    std::map<std::string, std::array<std::vector<double>, 2>> ppl;  // babel, natural
    for (const auto& rec : recs) {
        if (!rec.error.empty()) continue;
        auto target = lm.tokenizer().tokenize(rec.target_text);
        if (target.empty()) continue;
        auto nat = lm.tokenizer().tokenize(natural_prompt(rec.target_text));
        double nat_ppl;
        try {
            nat_ppl = conditional_log_ppl(lm, nat.span(), target.span());
        } catch (const ValidationError&) {
            continue;  // natural phrasing does not fit the context window
        }
        if (!ppl.count(rec.set)) set_order.push_back(rec.set);
        ppl[rec.set][0].push_back(rec.metrics.conditional_log_ppl);
        ppl[rec.set][1].push_back(nat_ppl);
    }
    std::string csv_b = csv_meta(g.seed, ckpt_hash) + "set,n,babel_mean_nats,natural_mean_nats\n";
    for (const auto& set : set_order) {
        const auto& pair = ppl[set];
        csv_b += csv_escape(set) + "," + std::to_string(pair[0].size()) + "," +
                 jnum(mean_of(pair[0])) + "," + jnum(mean_of(pair[1])) + "\n";
    }
    write_text(g.out / "summary_target_ppl.csv", csv_b);

    // (c) prompt entropy/ppl for babel prompts, matched random ids, natural text
    std::vector<std::vector<TokenId>> babel_seqs, random_seqs, natural_seqs;
    auto allowed = lm.tokenizer().content_ids();
    Rng rrng(derive_seed(g.seed, "entropy-random"));
    for (const auto& rec : recs) {
        if (!rec.error.empty() || rec.prompt_ids.empty()) continue;
        babel_seqs.push_back(rec.prompt_ids);
        std::vector<TokenId> rand_ids;
        for (size_t i = 0; i < rec.prompt_ids.size(); ++i)
            rand_ids.push_back(allowed[rrng.uniform_u32(static_cast<uint32_t>(allowed.size()))]);
        random_seqs.push_back(std::move(rand_ids));
        natural_seqs.push_back(lm.tokenizer().tokenize(natural_prompt(rec.target_text)).ids);
    }
    if (babel_seqs.empty()) throw ValidationError("no prompts for the entropy table");

    std::string csv_c = csv_meta(g.seed, ckpt_hash) + "label,entropy_bits,avg_ppl_nats,std\n";
    auto entropy_row = [&](const std::string& label, const std::vector<std::vector<TokenId>>& seqs) {
        double ent = bigram_conditional_entropy(seqs);
        std::vector<double> ppls;
        for (const auto& sq : seqs) ppls.push_back(sequence_log_ppl(lm, sq));
        double sd = seqs.size() >= 2 ? entropy_resample_std(seqs, 0.7, 20,
                                                            derive_seed(g.seed, "entropy-std-" + label))
                                     : 0.0;
        csv_c += label + "," + jnum(ent) + "," + jnum(mean_of(ppls)) + "," + jnum(sd) + "\n";
        std::cout << label << ": entropy_bits=" << jnum(ent) << " avg_ppl_nats=" << jnum(mean_of(ppls))
                  << " std=" << jnum(sd) << "\n";
    };
    entropy_row("babel", babel_seqs);
    entropy_row("random", random_seqs);
    entropy_row("natural", natural_seqs);
    write_text(g.out / "summary_entropy.csv", csv_c);

    std::cout << "wrote " << (g.out / "summary_success.csv").string() << ", "
              << (g.out / "summary_target_ppl.csv").string() << ", "
              << (g.out / "summary_entropy.csv").string() << "\n";
}

// ----------------------------------------------------------------- analyze

struct AnalyzeFlags {
    std::string checkpoint, which, robustness_csv;
    std::vector<std::string> records;
    std::map<std::string, CLI::Option*> opt;
};

void cmd_analyze(const Globals& g, const AnalyzeFlags& a) {
    Resolve r{g.cfg};
    std::string ckpt = r.str(a.opt.at("checkpoint"), a.checkpoint, "analyze.checkpoint", "");
    auto rec_files = r.list(a.opt.at("records"), a.records, "analyze.records");
    if (rec_files.empty()) rec_files.push_back((g.out / "records.jsonl").string());

    std::optional<LoadedModel> lm;
    if (!ckpt.empty()) lm.emplace(load_checkpoint(ckpt));
    std::string ckpt_hash = lm ? hash_hex(lm->content_hash()) : std::string("none");

    std::string which_str = r.str(a.opt.at("which"), a.which, "analyze.which", "");
    std::vector<std::string> which = split_commas(which_str);
    if (which.empty()) {
        which = {"length", "overlap"};
        if (lm) {
            which.push_back("frequency");
            which.push_back("scatter");
            which.push_back("projection");
        }
    }
    const std::set<std::string> known{"length", "scatter", "overlap",
                                      "frequency", "projection", "robustness"};
    for (const auto& w : which)
        if (!known.count(w)) throw ValidationError("unknown analysis '" + w + "'");
    auto wants = [&](const std::string& w) {
        return std::find(which.begin(), which.end(), w) != which.end();
    };
    auto needs_model = [&](const std::string& w) -> const LoadedModel& {
        if (!lm) throw ValidationError(w + " analysis needs --checkpoint");
        return *lm;
    };

    std::vector<AttackRecordData> recs;
    for (const auto& f : rec_files) {
        auto part = load_records(f);
        recs.insert(recs.end(), part.begin(), part.end());
    }
    if (recs.empty()) throw ValidationError("no records to analyze");

    std::vector<std::string> written;

    if (wants("length")) {
        // success rate per byte-length bucket of the target, empty buckets kept
        std::array<std::pair<int, int>, kLengthBuckets.size()> tally{};
        for (const auto& rec : recs) {
            int b = length_bucket(static_cast<int>(rec.target_text.size()));
            tally[static_cast<size_t>(b)].first += 1;
            if (rec.error.empty() && rec.metrics.exact_match)
                tally[static_cast<size_t>(b)].second += 1;
        }
        std::string csv = csv_meta(g.seed, ckpt_hash) + "bucket_min,bucket_max,n,n_success,success_rate\n";
        for (size_t b = 0; b < kLengthBuckets.size(); ++b) {
            auto [n, ok] = tally[b];
            csv += std::to_string(kLengthBuckets[b].first) + "," +
                   std::to_string(kLengthBuckets[b].second) + "," + std::to_string(n) + "," +
                   std::to_string(ok) + "," + (n ? jnum(static_cast<double>(ok) / n) : "") + "\n";
        }
        write_text(g.out / "plot_length.csv", csv);
        written.push_back("plot_length.csv");
    }

    if (wants("overlap")) {
        // histogram of prompt-target shared-token counts
        std::map<int, int> bins;
        int n_prompted = 0, max_overlap = 0;
        for (const auto& rec : recs) {
            if (!rec.error.empty()) continue;
            ++n_prompted;
            bins[rec.metrics.token_overlap] += 1;
            max_overlap = std::max(max_overlap, rec.metrics.token_overlap);
        }
        ordered_json plot;
        plot["seed"] = g.seed;
        plot["checkpoint_hash"] = ckpt_hash;
        plot["tool_version"] = kToolVersion;
        plot["n_records"] = n_prompted;
        plot["bins"] = ordered_json::array();
        for (int o = 0; o <= max_overlap; ++o) {
            ordered_json bj;
            bj["overlap"] = o;
            bj["count"] = bins.count(o) ? bins[o] : 0;
            plot["bins"].push_back(std::move(bj));
        }
        write_text(g.out / "plot_overlap.json", plot.dump(2) + "\n");
        written.push_back("plot_overlap.json");
    }

    if (wants("frequency")) {
        const LoadedModel& m = needs_model("frequency");
        std::vector<std::vector<TokenId>> prompts;
        for (const auto& rec : recs)
            if (rec.error.empty() && !rec.prompt_ids.empty()) prompts.push_back(rec.prompt_ids);
        auto freq = token_frequency(prompts);
        std::string csv = csv_meta(g.seed, ckpt_hash) + "token_id,token_text,count\n";
        for (const auto& [id, count] : freq)
            csv += std::to_string(id) + "," + csv_escape(m.tokenizer().token_display(id)) + "," +
                   std::to_string(count) + "\n";
        write_text(g.out / "plot_frequency.csv", csv);
        written.push_back("plot_frequency.csv");
    }

    if (wants("scatter")) {
        const LoadedModel& m = needs_model("scatter");
        // dataset-level: mean bare target log-ppl vs success rate per set
        std::vector<std::string> set_order;
        std::map<std::string, std::pair<std::vector<double>, std::pair<int, int>>> sets;
        for (const auto& rec : recs) {
            if (!sets.count(rec.set)) set_order.push_back(rec.set);
            auto& entry = sets[rec.set];
            auto target = m.tokenizer().tokenize(rec.target_text);
            if (target.size() >= 2) entry.first.push_back(sequence_log_ppl(m, target.span()));
            entry.second.first += 1;
            if (rec.error.empty() && rec.metrics.exact_match) entry.second.second += 1;
        }
        ordered_json plot;
        plot["seed"] = g.seed;
        plot["checkpoint_hash"] = ckpt_hash;
        plot["tool_version"] = kToolVersion;
        plot["points"] = ordered_json::array();
        for (const auto& set : set_order) {
            const auto& entry = sets[set];
            ordered_json pt;
            pt["set"] = set;
            pt["mean_target_log_ppl"] = mean_of(entry.first);
            pt["success_rate"] =
                static_cast<double>(entry.second.second) / entry.second.first;
            pt["n"] = entry.second.first;
            plot["points"].push_back(std::move(pt));
        }
        write_text(g.out / "plot_scatter.json", plot.dump(2) + "\n");
        written.push_back("plot_scatter.json");
    }

    if (wants("projection")) {
        const LoadedModel& m = needs_model("projection");
        std::vector<std::vector<TokenId>> seqs;
        std::vector<std::string> ids, labels;
        auto allowed = m.tokenizer().content_ids();
        Rng prng(derive_seed(g.seed, "projection-random"));
        int idx = 0;
        for (const auto& rec : recs) {
            if (!rec.error.empty() || !rec.metrics.exact_match) continue;
            seqs.push_back(rec.prompt_ids);
            ids.push_back("babel-" + std::to_string(idx));
            labels.push_back("babel");
            std::vector<TokenId> rand_ids;
            for (size_t i = 0; i < rec.prompt_ids.size(); ++i)
                rand_ids.push_back(allowed[prng.uniform_u32(static_cast<uint32_t>(allowed.size()))]);
            seqs.push_back(std::move(rand_ids));
            ids.push_back("random-" + std::to_string(idx));
            labels.push_back("random");
            seqs.push_back(m.tokenizer().tokenize(natural_prompt(rec.target_text)).ids);
            ids.push_back("natural-" + std::to_string(idx));
            labels.push_back("natural");
            ++idx;
        }
        if (idx < 3)
            throw ValidationError("projection needs at least 3 successful records, have " +
                                  std::to_string(idx));
        std::vector<std::vector<double>> X;
        for (const auto& sq : seqs) X.push_back(embed_tokens(m, sq));
        auto proj = project_2d(X);
        std::string csv = csv_meta(g.seed, ckpt_hash) + "id,label,x,y\n";
        for (size_t i = 0; i < ids.size(); ++i)
            csv += ids[i] + "," + labels[i] + "," + jnum(proj.points[i][0]) + "," +
                   jnum(proj.points[i][1]) + "\n";
        write_text(g.out / "plot_projection.csv", csv);
        written.push_back("plot_projection.csv");
    }

    if (wants("robustness")) {
        fs::path src = r.str(a.opt.at("robustness-csv"), a.robustness_csv, "analyze.robustness_csv", "");
        if (src.empty()) src = g.out / "robustness.csv";
        std::ifstream in(src, std::ios::binary);
        if (!in)
            throw ValidationError("robustness analysis needs the perturb sweep output (" +
                                  src.string() + "); run the perturb subcommand first");
        ordered_json series = ordered_json::array();
        std::string line;
        std::string last_kind;
        while (std::getline(in, line)) {
            std::string t = trim(line);
            if (t.empty() || t[0] == '#' || t.rfind("kind,", 0) == 0) continue;
            auto parts = split_commas(t);
            if (parts.size() != 5)
                throw ValidationError(src.string() + ": malformed row '" + t + "'");
            if (parts[0] != last_kind) {
                last_kind = parts[0];
                ordered_json sj;
                sj["kind"] = last_kind;
                sj["points"] = ordered_json::array();
                series.push_back(std::move(sj));
            }
            ordered_json pt;
            pt["k"] = std::stoi(parts[1]);
            pt["success_rate"] = std::stod(parts[2]);
            series.back()["points"].push_back(std::move(pt));
        }
        if (series.empty()) throw ValidationError(src.string() + " holds no sweep rows");
        ordered_json plot;
        plot["seed"] = g.seed;
        plot["checkpoint_hash"] = ckpt_hash;
        plot["tool_version"] = kToolVersion;
        plot["series"] = std::move(series);
        write_text(g.out / "plot_robustness.json", plot.dump(2) + "\n");
        written.push_back("plot_robustness.json");
    }

    std::cout << "wrote";
    for (size_t i = 0; i < written.size(); ++i)
        std::cout << (i ? ", " : " ") << (g.out / written[i]).string();
    std::cout << "\n";
}

// -------------------------------------------------------------- unlearning

struct UnlearnFlags {
    std::string checkpoint_a, checkpoint_b, targets;
    AttackFlags attack;  // shared attack knobs; records/targets fields unused
    std::map<std::string, CLI::Option*> opt;
};

void cmd_unlearning(const Globals& g, const UnlearnFlags& u) {
    Resolve r{g.cfg};
    std::string ca = r.str(u.opt.at("checkpoint-a"), u.checkpoint_a, "unlearning.checkpoint_a", "");
    std::string cb = r.str(u.opt.at("checkpoint-b"), u.checkpoint_b, "unlearning.checkpoint_b", "");
    std::string tf = r.str(u.opt.at("targets"), u.targets, "unlearning.targets", "");
    if (ca.empty() || cb.empty())
        throw ValidationError("unlearning needs --checkpoint-a and --checkpoint-b");
    if (tf.empty()) throw ValidationError("unlearning needs --targets");

    LoadedModel la = LoadedModel::open(ca);
    LoadedModel lb = LoadedModel::open(cb);
    if (la.tokenizer().mode() != lb.tokenizer().mode() ||
        la.tokenizer().serialize_merges() != lb.tokenizer().serialize_merges())
        throw ValidationError("checkpoints disagree on tokenizer; targets would tokenize differently");

    auto targets = load_targets(tf);
    if (targets.empty()) throw ValidationError("target set is empty: " + tf);
    auto [kind, params] = resolve_attack(g, u.attack);

    struct Side {
        std::string label;
        LoadedModel* lm;
        std::string records_name, traces_name;
        double success_rate = 0.0, mean_ppl = 0.0;
        int n = 0, n_success = 0;
    };
    std::array<Side, 2> sides{{{"a", &la, "records_a.jsonl", "traces_a"},
                               {"b", &lb, "records_b.jsonl", "traces_b"}}};

    for (auto& side : sides) {
        fs::path rp = g.out / side.records_name;
        std::ofstream rf(rp, std::ios::binary);
        if (!rf) throw RuntimeFailure("cannot write records file: " + rp.string());
        rf << meta_json(g.seed, hash_hex(side.lm->content_hash())).dump() << "\n";
        CampaignSpec spec;
        spec.lm = side.lm;
        spec.set_name = fs::path(tf).stem().string();
        spec.targets = targets;
        spec.kind = kind;
        spec.params = params;
        spec.global_seed = g.seed;
        spec.jobs = g.jobs;
        spec.records = &rf;
        spec.traces_dir = (g.out / side.traces_name).string();
        spec.trace_prefix = side.traces_name + "/";
        spec.log = g.log ? &g.log->f : nullptr;
        auto recs = run_campaign(spec);
        std::vector<double> ppls;
        for (const auto& rec : recs) {
            side.n += 1;
            if (rec.error.empty() && rec.metrics.exact_match) side.n_success += 1;
            if (rec.error.empty()) ppls.push_back(rec.metrics.conditional_log_ppl);
        }
        side.success_rate = static_cast<double>(side.n_success) / side.n;
        side.mean_ppl = mean_of(ppls);
    }

    std::string csv = "# seed=" + std::to_string(g.seed) + " checkpoint_hash_a=" +
                      hash_hex(la.content_hash()) + " checkpoint_hash_b=" +
                      hash_hex(lb.content_hash()) + " tool_version=" + std::string(kToolVersion) +
                      "\n" + "label,checkpoint,n,n_success,success_rate,mean_target_log_ppl\n";
    for (const auto& side : sides) {
        csv += side.label + "," + hash_hex(side.lm->content_hash()) + "," + std::to_string(side.n) +
               "," + std::to_string(side.n_success) + "," + jnum(side.success_rate) + "," +
               jnum(side.mean_ppl) + "\n";
        std::cout << side.label << ": success_rate=" << jnum(side.success_rate)
                  << " mean_target_log_ppl=" << jnum(side.mean_ppl) << "\n";
    }
    write_text(g.out / "unlearning.csv", csv);
    std::cout << "wrote " << (g.out / "unlearning.csv").string() << "\n";
}

void add_attack_options(CLI::App* sub, AttackFlags& a, bool with_io) {
    if (with_io) {
        a.opt["checkpoint"] = sub->add_option("--checkpoint", a.checkpoint, "model checkpoint");
        a.opt["targets"] = sub->add_option("--targets", a.targets, "target set file(s)");
        a.opt["records"] = sub->add_option("--records", a.records, "records output path");
        a.opt["no-traces"] = sub->add_flag("--no-traces", a.no_traces, "skip per-target traces");
    }
    a.opt["strategy"] = sub->add_option("--strategy", a.strategy, "gcg or autoprompt");
    a.opt["prompt-len"] = sub->add_option("--prompt-len", a.prompt_len, "prompt tokens");
    a.opt["iters"] = sub->add_option("--iters", a.iters, "search iterations");
    a.opt["topk"] = sub->add_option("--topk", a.topk, "gradient shortlist size");
    a.opt["batch"] = sub->add_option("--batch", a.batch, "candidates per iteration");
    a.opt["init-token"] = sub->add_option("--init-token", a.init_token, "initial prompt token id");
    a.opt["no-early-stop"] =
        sub->add_flag("--no-early-stop", a.no_early_stop, "always run the full budget");
    a.opt["decode-slack"] =
        sub->add_option("--decode-slack", a.decode_slack, "extra decode tokens for the match check");
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"babel prompt forge: trains micro models, searches gibberish prompts, "
                 "and measures why they work"};
    app.require_subcommand(1);

    std::string config_path, profile, out_dir;
    uint64_t seed = 0;
    int jobs = 1;
    auto* o_config = app.add_option("--config", config_path, "key=value config file");
    auto* o_seed = app.add_option("--seed", seed, "global seed");
    auto* o_jobs = app.add_option("--jobs", jobs, "worker threads for campaigns");
    auto* o_profile = app.add_option("--profile", profile, "attack budget: paper or desk");
    auto* o_out = app.add_option("--out", out_dir, "output directory");

    TrainFlags t;
    auto* sub_train = app.add_subcommand("train", "train a micro model checkpoint");
    sub_train->fallthrough();
    t.opt["corpus"] = sub_train->add_option("--corpus", t.corpus, "corpus file(s), one doc per line or JSONL");
    t.opt["save"] = sub_train->add_option("--save", t.save, "checkpoint output path");
    t.opt["synth-kinds"] = sub_train->add_option("--synth-kinds", t.synth_kinds,
                                                 "families to synthesize when no corpus given");
    t.opt["synth-docs"] = sub_train->add_option("--synth-docs", t.synth_docs, "docs per family");
    t.opt["scrub-targets"] =
        sub_train->add_option("--scrub-targets", t.scrub_targets, "drop docs containing these targets");
    t.opt["save-corpus"] =
        sub_train->add_option("--save-corpus", t.save_corpus, "also write the training docs");
    t.opt["steps"] = sub_train->add_option("--steps", t.steps, "optimizer steps");
    t.opt["batch-chunks"] = sub_train->add_option("--batch-chunks", t.batch_chunks, "chunks per step");
    t.opt["lr"] = sub_train->add_option("--lr", t.lr, "peak learning rate");
    t.opt["lr-final-frac"] = sub_train->add_option("--lr-final-frac", t.lr_final_frac,
                                                   "linear decay endpoint fraction");
    t.opt["beta1"] = sub_train->add_option("--beta1", t.beta1, "adam beta1");
    t.opt["beta2"] = sub_train->add_option("--beta2", t.beta2, "adam beta2");
    t.opt["grad-clip"] = sub_train->add_option("--grad-clip", t.grad_clip, "global-norm clip");
    t.opt["heldout-frac"] =
        sub_train->add_option("--heldout-frac", t.heldout_frac, "held-out document fraction");
    t.opt["log-every"] = sub_train->add_option("--log-every", t.log_every, "steps between log lines");
    t.opt["layers"] = sub_train->add_option("--layers", t.layers, "transformer blocks");
    t.opt["d-model"] = sub_train->add_option("--d-model", t.d_model, "model width");
    t.opt["heads"] = sub_train->add_option("--heads", t.heads, "attention heads");
    t.opt["d-ff"] = sub_train->add_option("--d-ff", t.d_ff, "feed-forward width");
    t.opt["context"] = sub_train->add_option("--context", t.context, "context length");
    t.opt["pos"] = sub_train->add_option("--pos", t.pos, "learned or sinusoidal positions");
    t.opt["act"] = sub_train->add_option("--act", t.act, "relu or gelu");
    t.opt["precision"] = sub_train->add_option("--precision", t.precision, "f32 or f64 scoring");
    t.opt["tokenizer"] =
        sub_train->add_option("--tokenizer", t.tokenizer_mode, "byte_level or learned_merge");
    t.opt["merges"] = sub_train->add_option("--merges", t.merges, "learned merge count");

    AttackFlags a;
    auto* sub_attack = app.add_subcommand("attack", "run a prompt-search campaign");
    sub_attack->fallthrough();
    add_attack_options(sub_attack, a, true);

    EvalFlags e;
    auto* sub_eval = app.add_subcommand("evaluate", "re-verify records against the model");
    sub_eval->fallthrough();
    e.opt["checkpoint"] = sub_eval->add_option("--checkpoint", e.checkpoint, "model checkpoint");
    e.opt["records"] = sub_eval->add_option("--records", e.records, "records file");

    PerturbFlags p;
    auto* sub_perturb = app.add_subcommand("perturb", "robustness sweep over successful prompts");
    sub_perturb->fallthrough();
    p.opt["checkpoint"] = sub_perturb->add_option("--checkpoint", p.checkpoint, "model checkpoint");
    p.opt["records"] = sub_perturb->add_option("--records", p.records, "records file");
    p.opt["kinds"] = sub_perturb->add_option("--kinds", p.kinds, "perturbation kinds, comma list");
    p.opt["ks"] = sub_perturb->add_option("--ks", p.ks, "edit sizes, comma list");
    p.opt["reps"] = sub_perturb->add_option("--reps", p.reps, "seeds per cell");

    AnalyzeFlags an;
    auto* sub_analyze = app.add_subcommand("analyze", "emit plot-data series from records");
    sub_analyze->fallthrough();
    an.opt["checkpoint"] = sub_analyze->add_option("--checkpoint", an.checkpoint, "model checkpoint");
    an.opt["records"] = sub_analyze->add_option("--records", an.records, "records file(s)");
    an.opt["which"] = sub_analyze->add_option(
        "--which", an.which, "length,scatter,overlap,frequency,projection,robustness");
    an.opt["robustness-csv"] =
        sub_analyze->add_option("--robustness-csv", an.robustness_csv, "perturb sweep table");

    SummarizeFlags s;
    auto* sub_summarize = app.add_subcommand("summarize", "success, ppl, and entropy tables");
    sub_summarize->fallthrough();
    s.opt["checkpoint"] = sub_summarize->add_option("--checkpoint", s.checkpoint, "model checkpoint");
    s.opt["records"] = sub_summarize->add_option("--records", s.records, "records file(s)");

    UnlearnFlags u;
    auto* sub_unlearn = app.add_subcommand("unlearning", "compare campaigns on two checkpoints");
    sub_unlearn->fallthrough();
    u.opt["checkpoint-a"] =
        sub_unlearn->add_option("--checkpoint-a", u.checkpoint_a, "checkpoint trained with targets");
    u.opt["checkpoint-b"] =
        sub_unlearn->add_option("--checkpoint-b", u.checkpoint_b, "checkpoint trained without");
    u.opt["targets"] = sub_unlearn->add_option("--targets", u.targets, "target set file");
    add_attack_options(sub_unlearn, u.attack, false);

    std::vector<std::string> argv_s;
    argv_s.push_back("babelkit");
    argv_s.insert(argv_s.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& sv : argv_s) argv.push_back(sv.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& h) {
        return app.exit(h);
    } catch (const CLI::CallForAllHelp& h) {
        return app.exit(h);
    } catch (const CLI::ParseError& pe) {
        std::cerr << "error: " << pe.what() << "\n";
        return 1;
    }

    try {
        Globals g;
        if (o_config->count()) g.cfg = KvConfig::from_file(config_path);
        g.seed = o_seed->count() ? seed
                                 : static_cast<uint64_t>(g.cfg.integer("seed", 0));
        g.jobs = o_jobs->count() ? jobs : static_cast<int>(g.cfg.integer("jobs", 1));
        if (g.jobs < 1 || g.jobs > 256)
            throw ValidationError("jobs must be in [1, 256], got " + std::to_string(g.jobs));
        g.profile = o_profile->count() ? profile : g.cfg.str("attack.profile", "desk");
        if (g.profile != "paper" && g.profile != "desk")
            throw ValidationError("profile must be paper or desk, got '" + g.profile + "'");
        g.out = o_out->count() ? out_dir : g.cfg.str("out", ".");
        fs::create_directories(g.out);
        g.log = std::make_shared<RunLog>(g.out / "run.log");

        std::string argline;
        for (const auto& sv : args) argline += (argline.empty() ? "" : " ") + sv;
        g.logline("babelkit " + argline);

        if (sub_train->parsed()) cmd_train(g, t);
        else if (sub_attack->parsed()) cmd_attack(g, a);
        else if (sub_eval->parsed()) cmd_evaluate(g, e);
        else if (sub_perturb->parsed()) cmd_perturb(g, p);
        else if (sub_analyze->parsed()) cmd_analyze(g, an);
        else if (sub_summarize->parsed()) cmd_summarize(g, s);
        else if (sub_unlearn->parsed()) cmd_unlearning(g, u);
        return 0;
    } catch (const ValidationError& ve) {
        std::cerr << "error: " << ve.what() << "\n";
        return 1;
    } catch (const std::exception& ex) {
        std::cerr << "failure: " << ex.what() << "\n";
        return 2;
    }
}

}  // namespace babel
