#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "babelkit/checkpoint.hpp"
#include "babelkit/model.hpp"
#include "babelkit/optimizer.hpp"

#include "json.hpp"

namespace babel {

// Flat key=value config with [section] headers; lookups use "section.key".
// Parse collects every malformed line before throwing so the user sees the
// whole list at once.
struct KvConfig {
    std::map<std::string, std::string> kv;

    static KvConfig from_text(const std::string& text, const std::string& origin);
    static KvConfig from_file(const std::string& path);

    bool has(const std::string& key) const { return kv.count(key) != 0; }
    std::string str(const std::string& key, const std::string& fallback) const;
    int64_t integer(const std::string& key, int64_t fallback) const;
    double real(const std::string& key, double fallback) const;
    bool flag(const std::string& key, bool fallback) const;
};

struct MetricReportData {
    bool exact_match = false;
    double conditional_log_ppl = 0.0;
    bool distance_success = false;
    double cosine = 0.0;
    int token_overlap = 0;
    std::string generation;
};

// Greedy generation plus the full metric set for one (prompt, target) pair.
MetricReportData compute_metric_report(const LoadedModel& lm, std::span<const TokenId> prompt,
                                       std::span<const TokenId> target,
                                       const std::string& target_text);

// One attack campaign row. `error` empty means the optimization ran; success
// and metrics are only meaningful in that case. Wall time is deliberately not
// serialized into the record (it goes to the sidecar log) so record files are
// byte-identical across reruns and parallelism settings.
struct AttackRecordData {
    std::string set;
    std::string target_id;  // fnv hash of the target text, hex
    std::string target_text;
    std::vector<TokenId> prompt_ids;
    std::string prompt_text;
    double final_loss = 0.0;
    int iters_run = 0;
    bool early_stopped = false;
    bool success = false;
    MetricReportData metrics;
    std::string trace_path;
    uint64_t seed = 0;
    std::string checkpoint_hash;
    std::string error;
    long long wall_ms = 0;        // sidecar only
    long long forward_count = 0;
};

std::string target_id_of(const std::string& target_text);
uint64_t seed_for_target(uint64_t global_seed, const std::string& target_id);

nlohmann::ordered_json record_to_json(const AttackRecordData& r);
AttackRecordData record_from_json(const nlohmann::json& j);

// Meta line carried as the first record of every JSONL output.
nlohmann::ordered_json meta_json(uint64_t seed, const std::string& checkpoint_hash);

struct CampaignSpec {
    const LoadedModel* lm = nullptr;
    std::string set_name;
    std::vector<std::string> targets;
    SearchKind kind = SearchKind::gcg;
    AttackParams params;           // per-target seed overrides params.seed
    uint64_t global_seed = 0;
    int jobs = 1;
    std::ostream* records = nullptr;  // JSONL sink; caller writes the meta line
    std::string traces_dir;        // "" = don't write traces
    std::string trace_prefix;      // stored trace path prefix, e.g. "traces/"
    std::ostream* log = nullptr;   // timestamped sidecar
};

// Runs every target, streaming records to the sink in target order no matter
// the worker count. Per-target failures become failed records.
std::vector<AttackRecordData> run_campaign(const CampaignSpec& spec);

std::vector<AttackRecordData> load_records(const std::string& path);

// Entry point behind main(); maps ValidationError to 1 and runtime failures
// to 2, printing the message to stderr.
int run_cli(const std::vector<std::string>& args);

}  // namespace babel
