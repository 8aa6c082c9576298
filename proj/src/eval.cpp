#include "kgr/eval.hpp"

#include <stdexcept>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

namespace kgr {

using nlohmann::json;

AnswerSet union_of_runs(const std::vector<AnswerSet>& answer_sets) {
    if (answer_sets.empty())
        throw std::invalid_argument("union_of_runs: empty list");
    AnswerSet out;
    std::unordered_set<std::string> seen;
    for (const AnswerSet& set : answer_sets) {
        for (size_t i = 0; i < set.normalized_entities.size(); ++i) {
            const std::string& e = set.normalized_entities[i];
            if (!seen.insert(e).second) continue;
            out.normalized_entities.push_back(e);
            out.resolved_in_kg.push_back(i < set.resolved_in_kg.size()
                                             ? set.resolved_in_kg[i]
                                             : false);
        }
        if (!set.raw_text.empty()) {
            if (!out.raw_text.empty()) out.raw_text += "\n";
            out.raw_text += set.raw_text;
        }
    }
    return out;
}

uint64_t fingerprint_config(const EvalConfig& cfg, int n_runs, int max_turns) {
    json j{{"w_fmt", cfg.reward.w_fmt},
           {"w_kg", cfg.reward.w_kg},
           {"w_ans", cfg.reward.w_ans},
           {"w_F1", cfg.reward.w_f1},
           {"w_ret", cfg.reward.w_ret},
           {"format_mode",
            cfg.format_mode == FormatMode::Flat ? "flat" : "hierarchical"},
           {"result_cap", cfg.result_cap},
           {"seed", cfg.seed},
           {"pooled", cfg.pooled_aggregation},
           {"n", n_runs},
           {"h", max_turns}};
    std::string text = j.dump();
    uint64_t hash = 1469598103934665603ull;  // FNV-1a 64
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

MetricsReport evaluate(const std::vector<QASample>& dataset,
                       const PolicyProvider& provider, int n_runs,
                       int max_turns, const EvalConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
    if (n_runs < 1) throw std::invalid_argument("evaluate: n_runs < 1");
    MetricsReport report;
    report.n_runs = n_runs;
    report.max_turns = max_turns;
    report.dataset_size = dataset.size();
    report.aggregation = cfg.pooled_aggregation ? "pooled" : "per_sample";
    report.config_fingerprint = fingerprint_config(cfg, n_runs, max_turns);

    CollectOptions options;
    options.format_mode = cfg.format_mode;
    options.result_cap = cfg.result_cap;
    options.concurrency = cfg.concurrency;

    double sum_f1 = 0.0, sum_hit = 0.0, sum_hit_strict = 0.0, sum_ret = 0.0;
    double sum_run_f1 = 0.0, sum_run_hit = 0.0;
    size_t scored_runs = 0;
    size_t pooled_matched = 0, pooled_predicted = 0, pooled_gold = 0;
    double sum_chars = 0.0, sum_ws = 0.0;
    size_t episode_count = 0;

    for (const QASample& sample : dataset) {
        options.executor =
            cfg.executor_provider ? cfg.executor_provider(sample) : nullptr;
        RolloutGroup group =
            collect_rollouts(sample, provider(sample), n_runs, max_turns, options);
        std::set<std::string> gold = normalize_gold(sample.gold_answers);
        std::vector<AnswerSet> run_answers;
        int sample_ret = 0;
        for (EpisodeResult& episode : group.rollouts) {
            if (episode.infra_failed) continue;
            episode.reward =
                score_trajectory(episode.trajectory, sample.gold_answers,
                                 cfg.reward);
            run_answers.push_back(episode.trajectory.predicted_answers
                                      ? *episode.trajectory.predicted_answers
                                      : AnswerSet{});
            sum_run_f1 += episode.reward->f1;
            sum_run_hit += episode.reward->hit_at_1;
            sample_ret |= episode.reward->v_ret;
            ++scored_runs;
            sum_chars += static_cast<double>(episode.generated_chars);
            sum_ws += static_cast<double>(episode.generated_ws_tokens);
            ++episode_count;
            for (const TurnRecord& rec : episode.trajectory.records) {
                if (rec.observation && rec.observation->error)
                    ++report.error_counts[error_code_name(
                        *rec.observation->error)];
            }
        }
        if (run_answers.empty()) {
            ++report.failed_samples;
            continue;
        }
        AnswerSet unioned = union_of_runs(run_answers);
        sum_f1 += f1_score(unioned.normalized_entities, gold);
        sum_hit += hit_at_1(unioned.normalized_entities, gold);
        sum_hit_strict += !unioned.normalized_entities.empty() &&
                                  gold.count(unioned.normalized_entities.front())
                              ? 1.0
                              : 0.0;
        sum_ret += sample_ret;
        size_t matched = 0;
        for (const std::string& p : unioned.normalized_entities)
            if (gold.count(p)) ++matched;
        pooled_matched += matched;
        pooled_predicted += unioned.normalized_entities.size();
        pooled_gold += gold.size();
        ++report.evaluated_samples;
    }
    if (report.evaluated_samples > 0) {
        double n = static_cast<double>(report.evaluated_samples);
        if (cfg.pooled_aggregation) {
            double precision = pooled_predicted
                                   ? static_cast<double>(pooled_matched) /
                                         pooled_predicted
                                   : 0.0;
            double recall = pooled_gold ? static_cast<double>(pooled_matched) /
                                              pooled_gold
                                        : 0.0;
            report.f1 = (precision + recall) > 0
                            ? 2.0 * precision * recall / (precision + recall)
                            : 0.0;
        } else {
            report.f1 = sum_f1 / n;
        }
        report.hit_at_1 = sum_hit / n;
        report.hit_at_1_strict = sum_hit_strict / n;
        report.retrieval_rate = sum_ret / n;
    }
    if (scored_runs > 0) {
        report.f1_per_run = sum_run_f1 / static_cast<double>(scored_runs);
        report.hit_at_1_per_run = sum_run_hit / static_cast<double>(scored_runs);
    }
    if (episode_count > 0) {
        report.generated_chars_per_query =
            sum_chars / static_cast<double>(episode_count);
        report.generated_ws_tokens_per_query =
            sum_ws / static_cast<double>(episode_count);
    }
    return report;
}

std::string report_to_json(const MetricsReport& report) {
    json j{{"n", report.n_runs},
           {"h", report.max_turns},
           {"dataset_size", report.dataset_size},
           {"evaluated_samples", report.evaluated_samples},
           {"failed_samples", report.failed_samples},
           {"f1", report.f1},
           {"hit_at_1", report.hit_at_1},
           {"hit_at_1_strict", report.hit_at_1_strict},
           {"retrieval_rate", report.retrieval_rate},
           {"f1_per_run", report.f1_per_run},
           {"hit_at_1_per_run", report.hit_at_1_per_run},
           {"gen_chars_per_query", report.generated_chars_per_query},
           {"gen_ws_tokens_per_query", report.generated_ws_tokens_per_query},
           {"error_counts", report.error_counts},
           {"aggregation", report.aggregation},
           {"config_fingerprint", report.config_fingerprint}};
    return j.dump(2);
}

ActionExecutor make_wire_executor(const std::string& host, int port,
                                  const std::string& sample_id,
                                  FormatMode mode) {
    return [host, port, sample_id, mode](const RetrievalAction& action) {
        httplib::Client client(host, port);
        json body{{"sample_id", sample_id},
                  {"action_name", action.name},
                  {"args", action.args},
                  {"format_mode",
                   mode == FormatMode::Flat ? "flat" : "hierarchical"}};
        auto res = client.Post("/retrieve", body.dump(), "application/json");
        if (!res || res->status != 200)
            throw PolicyTransportError("retrieve endpoint unavailable");
        json reply = json::parse(res->body);
        Observation obs;
        obs.ok = reply["status"] == "ok";
        obs.text = reply["rendered_text"].get<std::string>();
        if (obs.ok) {
            obs.labels = reply["result_labels"].get<std::vector<std::string>>();
        } else {
            std::string code = reply.value("error_code", "");
            if (code == "KG_SAMPLE_NOT_FOUND")
                obs.error = ErrorCode::SampleNotFound;
            else if (code == "KG_ENTITY_NOT_FOUND")
                obs.error = ErrorCode::EntityNotFound;
            else if (code == "KG_RELATION_NOT_FOUND")
                obs.error = ErrorCode::RelationNotFound;
            else if (code == "KG_NO_RESULTS")
                obs.error = ErrorCode::NoResultsEntities;
            else if (code == "KG_FORMAT_ERROR")
                obs.error = ErrorCode::FormatErrorWrongArgCount;
            else
                obs.error = ErrorCode::ServerErrorInvalidAction;
        }
        return obs;
    };
}

}  // namespace kgr
