// Python surface over the C++ core: checkpoint handle with scoring, decoding
// and search, plus the standalone metric / corpus / perturbation helpers.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

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

namespace py = pybind11;
using namespace babel;

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// attacks accept either target text or explicit token ids
std::vector<TokenId> target_ids_from(const LoadedModel& lm, const py::object& target) {
    if (py::isinstance<py::str>(target))
        return lm.tokenizer().tokenize(target.cast<std::string>()).ids;
    return target.cast<std::vector<TokenId>>();
}

AttackParams params_from_kwargs(const std::string& profile, int prompt_len, int iters, int topk,
                                int batch, uint64_t seed, TokenId init_token, bool early_stop,
                                int max_decode_slack) {
    AttackParams p = profile_params(profile);
    if (prompt_len >= 0) p.prompt_len = prompt_len;
    if (iters >= 0) p.iters = iters;
    if (topk >= 0) p.topk = topk;
    if (batch >= 0) p.batch = batch;
    p.seed = seed;
    if (init_token >= 0) p.init_token = init_token;
    p.early_stop = early_stop;
    p.max_decode_slack = max_decode_slack;
    return p;
}

py::dict result_to_dict(const LoadedModel& lm, const AttackResult& res) {
    py::dict d;
    d["prompt_ids"] = res.prompt.ids;
    d["prompt_text"] = sanitize_utf8(lm.tokenizer().detokenize(res.prompt.ids));
    d["final_loss"] = res.final_loss;
    d["success"] = res.success;
    d["iters_run"] = res.iters_run;
    d["forward_count"] = res.forward_count;
    py::list trace;
    for (const auto& s : res.trace) {
        py::dict t;
        t["iter"] = s.iter;
        t["loss"] = s.loss;
        t["pos"] = s.pos;
        t["old_id"] = s.old_id;
        t["new_id"] = s.new_id;
        t["exact_match"] = s.exact_match;
        trace.append(t);
    }
    d["trace"] = trace;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "gibberish prompt forging and analysis on micro language models";
    m.attr("__version__") = kToolVersion;

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<RuntimeFailure>(m, "RuntimeFailure", PyExc_RuntimeError);

    py::class_<LoadedModel>(m, "Model", "loaded checkpoint with scoring, decoding and search")
        .def_static(
            "load", [](const std::string& path) { return std::make_unique<LoadedModel>(load_checkpoint(path)); },
            py::arg("path"))
        .def_property_readonly("vocab_size", [](const LoadedModel& lm) { return lm.config().vocab_size; })
        .def_property_readonly("context_len", [](const LoadedModel& lm) { return lm.config().context_len; })
        .def_property_readonly("d_model", [](const LoadedModel& lm) { return lm.config().d_model; })
        .def_property_readonly("n_layers", [](const LoadedModel& lm) { return lm.config().n_layers; })
        .def_property_readonly("content_hash", [](const LoadedModel& lm) { return hex64(lm.content_hash()); })
        .def_property_readonly("metadata", [](const LoadedModel& lm) { return lm.checkpoint().metadata; })
        .def(
            "save",
            [](const LoadedModel& lm, const std::string& path) {
                ModelCheckpoint ck = lm.checkpoint();
                save_checkpoint(path, ck);
            },
            py::arg("path"))
        .def(
            "tokenize",
            [](const LoadedModel& lm, const std::string& text) { return lm.tokenizer().tokenize(text).ids; },
            py::arg("text"))
        .def(
            "detokenize",
            [](const LoadedModel& lm, const std::vector<TokenId>& ids) {
                return sanitize_utf8(lm.tokenizer().detokenize(ids));
            },
            py::arg("ids"))
        .def(
            "detokenize_bytes",
            [](const LoadedModel& lm, const std::vector<TokenId>& ids) {
                return py::bytes(lm.tokenizer().detokenize(ids));
            },
            py::arg("ids"))
        .def(
            "target_nll",
            [](const LoadedModel& lm, const std::vector<TokenId>& prompt,
               const std::vector<TokenId>& target) {
                auto r = target_nll(lm, prompt, target);
                return py::make_tuple(r.total, r.per_token);
            },
            py::arg("prompt"), py::arg("target"),
            "total and per-token NLL of the target after the templated prompt")
        .def(
            "conditional_log_ppl",
            [](const LoadedModel& lm, const std::vector<TokenId>& prompt,
               const std::vector<TokenId>& target) { return conditional_log_ppl(lm, prompt, target); },
            py::arg("prompt"), py::arg("target"))
        .def(
            "sequence_log_ppl",
            [](const LoadedModel& lm, const std::vector<TokenId>& ids) { return sequence_log_ppl(lm, ids); },
            py::arg("ids"), "mean NLL per token of the bare sequence, no template")
        .def(
            "grad_onehot",
            [](const LoadedModel& lm, const std::vector<TokenId>& prompt,
               const std::vector<TokenId>& target) {
                auto g = grad_onehot(lm, prompt, target);
                std::vector<std::vector<double>> rows(static_cast<size_t>(g.rows));
                for (int r = 0; r < g.rows; ++r)
                    rows[static_cast<size_t>(r)].assign(g.v.begin() + static_cast<size_t>(r) * g.cols,
                                                        g.v.begin() + static_cast<size_t>(r + 1) * g.cols);
                return rows;
            },
            py::arg("prompt"), py::arg("target"),
            "d(total NLL)/d(one-hot) per prompt position, prompt_len x vocab rows")
        .def(
            "greedy_decode",
            [](const LoadedModel& lm, const std::vector<TokenId>& prompt, int max_new) {
                auto g = greedy_decode(lm, prompt, max_new);
                py::dict d;
                d["ids"] = g.tokens.ids;
                d["text"] = sanitize_utf8(lm.tokenizer().detokenize(g.tokens.ids));
                d["stopped_at_eot"] = g.stopped_at_eot;
                d["truncated_by_context"] = g.truncated_by_context;
                return d;
            },
            py::arg("prompt"), py::arg("max_new"))
        .def(
            "embed",
            [](const LoadedModel& lm, const std::vector<TokenId>& ids) { return embed_tokens(lm, ids); },
            py::arg("ids"), "mean-pooled final hidden state of the bare sequence")
        .def(
            "last_hidden_state",
            [](const LoadedModel& lm, const std::vector<TokenId>& prompt) {
                return last_hidden_state(lm, prompt);
            },
            py::arg("prompt"))
        .def(
            "strip_punctuation",
            [](const LoadedModel& lm, const std::vector<TokenId>& ids) {
                return strip_punctuation(ids, lm.tokenizer());
            },
            py::arg("ids"))
        .def(
            "attack",
            [](const LoadedModel& lm, const py::object& target, const std::string& strategy,
               const std::string& profile, int prompt_len, int iters, int topk, int batch,
               uint64_t seed, TokenId init_token, bool early_stop, int max_decode_slack,
               const std::optional<std::vector<TokenId>>& allowed) {
                auto tgt = target_ids_from(lm, target);
                auto p = params_from_kwargs(profile, prompt_len, iters, topk, batch, seed,
                                            init_token, early_stop, max_decode_slack);
                auto kind = search_kind_from_string(strategy);
                std::vector<TokenId> allow =
                    allowed ? *allowed : lm.tokenizer().content_ids();
                AttackResult res;
                {
                    py::gil_scoped_release nogil;
                    res = run_search(kind, lm.f32(), ChatTemplate{}, tgt, allow, p);
                }
                return result_to_dict(lm, res);
            },
            py::arg("target"), py::arg("strategy") = "gcg", py::arg("profile") = "desk",
            py::arg("prompt_len") = -1, py::arg("iters") = -1, py::arg("topk") = -1,
            py::arg("batch") = -1, py::arg("seed") = 0, py::arg("init_token") = -1,
            py::arg("early_stop") = true, py::arg("max_decode_slack") = 0,
            py::arg("allowed") = py::none(),
            "search a prompt that makes the model emit the target; target may be "
            "text or token ids");

    m.def(
        "train",
        [](const std::vector<std::string>& docs, int steps, uint64_t seed, int d_model,
           int n_layers, int n_heads, int d_ff, int context_len, double lr, double heldout_frac,
           const std::string& save) {
            ModelConfig cfg;
            cfg.d_model = d_model;
            cfg.n_layers = n_layers;
            cfg.n_heads = n_heads;
            cfg.d_ff = d_ff;
            cfg.context_len = context_len;
            TrainParams tp;
            tp.steps = steps;
            tp.seed = seed;
            tp.lr = lr;
            tp.heldout_frac = heldout_frac;
            ModelCheckpoint ck;
            {
                py::gil_scoped_release nogil;
                ck = train_model(cfg, Tokenizer::byte_level(), docs, tp);
                if (!save.empty()) save_checkpoint(save, ck);
            }
            return std::make_unique<LoadedModel>(std::move(ck));
        },
        py::arg("docs"), py::arg("steps") = 3000, py::arg("seed") = 0, py::arg("d_model") = 64,
        py::arg("n_layers") = 2, py::arg("n_heads") = 2, py::arg("d_ff") = 256,
        py::arg("context_len") = 128, py::arg("lr") = 1e-3, py::arg("heldout_frac") = 0.1,
        py::arg("save") = "", "train a micro model from scratch on the documents");

    // text metrics
    m.def("exact_match", &exact_match, py::arg("generation"), py::arg("target"));
    m.def("normalize_ws", &normalize_ws, py::arg("s"));
    m.def("bigram_conditional_entropy", &bigram_conditional_entropy, py::arg("seqs"),
          "H(next | current) in bits over adjacent pairs");
    m.def("entropy_resample_std", &entropy_resample_std, py::arg("seqs"), py::arg("frac") = 0.7,
          py::arg("reps") = 20, py::arg("seed") = 0);
    m.def(
        "token_overlap",
        [](const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
            return token_overlap(a, b);
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "point_biserial",
        [](const std::vector<double>& x, const std::vector<int>& y, int permutations,
           uint64_t seed) {
            std::vector<uint8_t> yb(y.size());
            for (size_t i = 0; i < y.size(); ++i) yb[i] = y[i] ? 1 : 0;
            auto r = point_biserial(x, yb, permutations, seed);
            return py::make_tuple(r.r, r.p_value);
        },
        py::arg("x"), py::arg("y"), py::arg("permutations") = 1000, py::arg("seed") = 0,
        "returns (r, permutation p-value)");
    m.def(
        "cosine",
        [](const std::vector<double>& a, const std::vector<double>& b) { return cosine(a, b); },
        py::arg("a"), py::arg("b"));
    m.def("token_frequency", &token_frequency, py::arg("seqs"));

    // corpus
    m.def("corpus_kinds", &corpus_kinds);
    m.def("generate_corpus", &generate_corpus, py::arg("kind"), py::arg("n_docs"), py::arg("seed"));
    m.def("split_sentences", &split_sentences, py::arg("doc"));
    m.def("extract_targets", &extract_targets, py::arg("docs"));
    m.def("sample_targets", &sample_targets, py::arg("docs"), py::arg("n"), py::arg("min_len"),
          py::arg("max_len"), py::arg("seed"));
    m.def("random_token_targets", &random_token_targets, py::arg("n"), py::arg("min_len"),
          py::arg("max_len"), py::arg("seed"));
    m.def("natural_prompt", &natural_prompt, py::arg("target"));
    m.def("load_targets", &load_targets, py::arg("path"));
    m.def("length_bucket", &length_bucket, py::arg("n_tokens"));

    // seeded perturbations
    m.def(
        "perturb_remove",
        [](const std::vector<TokenId>& ids, int k, uint64_t seed) {
            Rng rng(seed);
            return perturb_remove(ids, k, rng);
        },
        py::arg("ids"), py::arg("k"), py::arg("seed"));
    m.def(
        "perturb_replace",
        [](const std::vector<TokenId>& ids, int k, const std::vector<TokenId>& allowed,
           uint64_t seed) {
            Rng rng(seed);
            return perturb_replace(ids, k, allowed, rng);
        },
        py::arg("ids"), py::arg("k"), py::arg("allowed"), py::arg("seed"));
    m.def(
        "perturb_permute",
        [](const std::vector<TokenId>& ids, int k, uint64_t seed) {
            Rng rng(seed);
            return perturb_permute(ids, k, rng);
        },
        py::arg("ids"), py::arg("k"), py::arg("seed"));

    // representation space
    m.def(
        "collect_reps",
        [](const LoadedModel& lm, const std::vector<std::vector<TokenId>>& prompts) {
            std::vector<size_t> skipped;
            auto rows = collect_reps(lm, prompts, ChatTemplate{}, &skipped);
            return py::make_tuple(rows, skipped);
        },
        py::arg("model"), py::arg("prompts"),
        "last-hidden-state rows; returns (rows, skipped prompt indices)");
    m.def(
        "project_2d",
        [](const std::vector<std::vector<double>>& X) {
            auto p = project_2d(X);
            return py::make_tuple(p.points, p.explained);
        },
        py::arg("X"), "PCA to 2d; returns (points, explained variances)");
    m.def("silhouette", &silhouette, py::arg("X"), py::arg("labels"));

    // hashing and seeds
    m.def("stable_hash", [](const std::string& s) { return stable_hash(s); }, py::arg("s"));
    m.def("derive_seed", [](uint64_t g, const std::string& tag) { return derive_seed(g, tag); },
          py::arg("global_seed"), py::arg("tag"));
    m.def("target_id_of", &target_id_of, py::arg("target_text"));
}
