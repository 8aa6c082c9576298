#pragma once
// Batch evaluation: N-run answer-set union, metric aggregation, generation
// accounting, and report serialization.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kgr/rollout.hpp"

namespace kgr {

struct MetricsReport {
    int n_runs = 1;
    int max_turns = 5;
    size_t dataset_size = 0;
    size_t evaluated_samples = 0;
    size_t failed_samples = 0;  // all rollouts infrastructure-failed
    // union-of-runs metrics (the N-run protocol); equal to per-run at N=1
    double f1 = 0.0;
    double hit_at_1 = 0.0;
    double hit_at_1_strict = 0.0;
    double retrieval_rate = 0.0;  // fraction of samples with v_ret = 1
    // per-run means across all scored episodes
    double f1_per_run = 0.0;
    double hit_at_1_per_run = 0.0;
    // tokenizer-neutral generation accounting, mean per episode
    double generated_chars_per_query = 0.0;
    double generated_ws_tokens_per_query = 0.0;
    std::map<std::string, size_t> error_counts;  // by catalogue code
    std::string aggregation = "per_sample";
    uint64_t config_fingerprint = 0;
};

struct EvalConfig {
    RewardConfig reward;
    FormatMode format_mode = FormatMode::Flat;
    size_t result_cap = kDefaultResultCap;
    int concurrency = 1;
    uint64_t seed = 0;
    bool pooled_aggregation = false;  // pooled precision/recall instead of
                                      // per-sample score averaging
    // optional wire-protocol override, resolved per sample
    std::function<ActionExecutor(const QASample&)> executor_provider;
};

// Normalized set union across runs; input must be non-empty.
AnswerSet union_of_runs(const std::vector<AnswerSet>& answer_sets);

using PolicyProvider = std::function<PolicyFactory(const QASample&)>;

MetricsReport evaluate(const std::vector<QASample>& dataset,
                       const PolicyProvider& provider, int n_runs,
                       int max_turns, const EvalConfig& cfg = {});

// Deterministic (key-sorted, timing-free) report serialization.
std::string report_to_json(const MetricsReport& report);

uint64_t fingerprint_config(const EvalConfig& cfg, int n_runs, int max_turns);

// Executor that forwards actions to a running KG service over the wire.
ActionExecutor make_wire_executor(const std::string& host, int port,
                                  const std::string& sample_id,
                                  FormatMode mode = FormatMode::Flat);

}  // namespace kgr
