#include "kgr/rollout.hpp"

#include <atomic>
#include <cctype>
#include <chrono>
#include <deque>
#include <istream>
#include <ostream>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

namespace kgr {

using nlohmann::json;

OraclePolicy::OraclePolicy(ReasoningPath path, int max_turns)
    : path_(std::move(path)) {
    size_t budget = max_turns > 0 ? static_cast<size_t>(max_turns - 1) : 0;
    usable_hops_ = std::min(path_.length(), budget);
    truncated_ = usable_hops_ < path_.length();
}

std::string OraclePolicy::generate(const std::string&) {
    if (step_ < usable_hops_) {
        const std::string& head = path_.nodes[step_];
        const std::string& relation = path_.edges[step_];
        ++step_;
        return "<think>Following the path: querying \"" + relation +
               "\" from \"" + head + "\".</think>\n<kg-query>get_tail_entities(\"" +
               head + "\", \"" + relation + "\")</kg-query>";
    }
    return "<think>The terminal entity has been reached.</think>\n<answer>" +
           path_.nodes[usable_hops_] + "</answer>";
}

RemotePolicy::RemotePolicy(RemotePolicyConfig config)
    : config_(std::move(config)) {}

std::string RemotePolicy::generate(const std::string& context) {
    json body{{"context", context},
              {"model", config_.model},
              {"temperature", config_.temperature},
              {"top_p", config_.top_p}};
    std::string payload = body.dump();
    int backoff = config_.backoff_ms;
    std::string last_error;
    for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        httplib::Client client(config_.host, config_.port);
        auto res = client.Post(config_.path, payload, "application/json");
        if (!res) {
            last_error = "transport failure";
            continue;
        }
        if (res->status != 200) {
            last_error = "status " + std::to_string(res->status);
            continue;
        }
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("text")) {
            last_error = "malformed completion response";
            continue;
        }
        return reply["text"].get<std::string>();
    }
    throw PolicyTransportError("remote policy failed after " +
                               std::to_string(config_.max_attempts) +
                               " attempts: " + last_error);
}

namespace {

size_t whitespace_tokens(const std::string& text) {
    size_t count = 0;
    bool in_token = false;
    for (char c : text) {
        bool ws = std::isspace(static_cast<unsigned char>(c));
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

}  // namespace

EpisodeResult run_episode(const QASample& sample, Policy& policy,
                          int max_turns, const CollectOptions& options) {
    EpisodeResult result;
    ActionExecutor executor = options.executor;
    if (!executor) {
        executor = [&sample, &options](const RetrievalAction& action) {
            return execute(*sample.graph, action, options.format_mode,
                           options.result_cap);
        };
    }
    TrajectoryState state;
    state.sample_id = sample.sample_id;
    state.max_turns = max_turns;
    state.prompt = build_initial_prompt(sample.question, max_turns);
    std::string context = state.prompt;
    try {
        while (!state.terminated) {
            if (context.size() > options.context_char_cap) {
                result.infra_failed = true;
                result.failure_reason = "context cap exceeded";
                break;
            }
            std::string message = policy.generate(context);
            result.generated_chars += message.size();
            result.generated_ws_tokens += whitespace_tokens(message);
            state = advance(std::move(state), message, executor,
                            sample.graph.get());
            context += "\n" + state.records.back().message;
            if (state.records.back().observation)
                context += "\n" +
                           wrap_observation(*state.records.back().observation);
        }
    } catch (const PolicyTransportError& err) {
        result.infra_failed = true;
        result.failure_reason = err.what();
    }
    if (auto* oracle = dynamic_cast<OraclePolicy*>(&policy))
        result.oracle_truncated = oracle->truncated();
    result.trajectory = std::move(state);
    return result;
}

RolloutGroup collect_rollouts(const QASample& sample,
                              const PolicyFactory& factory, int n_rollouts,
                              int max_turns, const CollectOptions& options) {
    if (n_rollouts < 1)
        throw std::invalid_argument("collect_rollouts: n_rollouts < 1");
    RolloutGroup group;
    group.sample_id = sample.sample_id;
    group.rollouts.resize(n_rollouts);
    int workers = std::max(1, std::min(options.concurrency, n_rollouts));
    if (workers == 1) {
        for (int n = 0; n < n_rollouts; ++n) {
            auto policy = factory();
            group.rollouts[n] = run_episode(sample, *policy, max_turns, options);
        }
        return group;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (int n = next.fetch_add(1); n < n_rollouts;
                 n = next.fetch_add(1)) {
                auto policy = factory();
                group.rollouts[n] =
                    run_episode(sample, *policy, max_turns, options);
            }
        });
    }
    for (auto& t : threads) t.join();
    return group;
}

std::optional<ReasoningPath> find_gold_path(const QASample& sample,
                                            size_t max_length) {
    auto gold = normalize_gold(sample.gold_answers);
    const KnowledgeGraph& graph = *sample.graph;
    // BFS over directed edges from the anchors
    std::unordered_map<std::string, std::pair<std::string, std::string>> parent;
    std::deque<std::pair<std::string, size_t>> frontier;
    std::unordered_map<std::string, size_t> dist;
    for (const std::string& a : sample.anchor_entities) {
        if (!graph.has_entity(a) || dist.count(a)) continue;
        dist[a] = 0;
        frontier.emplace_back(a, 0);
    }
    auto build = [&](std::string terminal) {
        ReasoningPath path;
        std::deque<std::string> nodes{terminal};
        std::deque<std::string> edges;
        while (parent.count(nodes.front())) {
            auto [prev, rel] = parent[nodes.front()];
            edges.push_front(rel);
            nodes.push_front(prev);
        }
        path.nodes.assign(nodes.begin(), nodes.end());
        path.edges.assign(edges.begin(), edges.end());
        return path;
    };
    for (const auto& [a, d] : dist)
        if (gold.count(normalize_label(a))) return build(a);
    while (!frontier.empty()) {
        auto [cur, d] = frontier.front();
        frontier.pop_front();
        if (d == max_length) continue;
        for (const auto& [rel, tail] : graph.outgoing(cur)) {
            if (dist.count(tail)) continue;
            dist[tail] = d + 1;
            parent[tail] = {cur, rel};
            if (gold.count(normalize_label(tail))) return build(tail);
            frontier.emplace_back(tail, d + 1);
        }
    }
    return std::nullopt;
}

void write_trajectory(const EpisodeResult& episode, const std::string& sample_id,
                      std::ostream& out) {
    const TrajectoryState& traj = episode.trajectory;
    json turns = json::array();
    for (const TurnRecord& rec : traj.records) {
        json turn{{"message", rec.message},
                  {"format_valid", rec.parsed.format_valid},
                  {"violations", rec.parsed.violations}};
        if (rec.parsed.action)
            turn["action"] = {{"name", rec.parsed.action->name},
                              {"args", rec.parsed.action->args}};
        if (rec.parsed.answer_text) turn["answer_text"] = *rec.parsed.answer_text;
        if (rec.observation) {
            json obs{{"ok", rec.observation->ok},
                     {"text", rec.observation->text},
                     {"labels", rec.observation->labels}};
            if (rec.observation->error) {
                obs["error_code"] = error_code_name(*rec.observation->error);
                obs["error_kind"] = static_cast<int>(*rec.observation->error);
            }
            turn["observation"] = std::move(obs);
        }
        turns.push_back(std::move(turn));
    }
    json row{{"sample_id", sample_id},
             {"prompt", traj.prompt},
             {"max_turns", traj.max_turns},
             {"budget_exhausted", traj.budget_exhausted},
             {"infra_failed", episode.infra_failed},
             {"generated_chars", episode.generated_chars},
             {"generated_ws_tokens", episode.generated_ws_tokens},
             {"turns", std::move(turns)}};
    if (traj.predicted_answers) {
        row["predicted"] = {
            {"raw", traj.predicted_answers->raw_text},
            {"normalized", traj.predicted_answers->normalized_entities},
            {"resolved_in_kg", traj.predicted_answers->resolved_in_kg}};
    }
    if (episode.reward) {
        json turn_scores = json::array();
        for (const TurnScore& t : episode.reward->turns)
            turn_scores.push_back({{"v_fmt", t.v_fmt},
                                   {"v_kg", t.v_kg},
                                   {"v_ans", t.v_ans},
                                   {"r_turn", t.r_turn}});
        row["reward"] = {{"turns", std::move(turn_scores)},
                         {"f1", episode.reward->f1},
                         {"v_ret", episode.reward->v_ret},
                         {"r_global", episode.reward->r_global},
                         {"hit_at_1", episode.reward->hit_at_1},
                         {"hit_at_1_strict", episode.reward->hit_at_1_strict}};
    }
    out << row.dump() << '\n';
}

std::vector<EpisodeResult> read_trajectories(
    std::istream& in, std::vector<std::string>* sample_ids) {
    std::vector<EpisodeResult> episodes;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded())
            throw std::runtime_error("trajectory file: bad json at line " +
                                     std::to_string(line_no));
        EpisodeResult episode;
        TrajectoryState& traj = episode.trajectory;
        traj.sample_id = row.value("sample_id", "");
        traj.prompt = row.value("prompt", "");
        traj.max_turns = row.value("max_turns", 5);
        traj.budget_exhausted = row.value("budget_exhausted", false);
        traj.terminated = true;
        episode.infra_failed = row.value("infra_failed", false);
        episode.generated_chars = row.value("generated_chars", size_t{0});
        episode.generated_ws_tokens = row.value("generated_ws_tokens", size_t{0});
        for (const auto& jt : row.at("turns")) {
            TurnRecord rec;
            rec.message = jt.at("message").get<std::string>();
            rec.parsed = parse_message(rec.message);
            if (jt.contains("observation")) {
                Observation obs;
                obs.ok = jt["observation"].value("ok", false);
                obs.text = jt["observation"].value("text", "");
                obs.labels = jt["observation"].value(
                    "labels", std::vector<std::string>{});
                if (jt["observation"].contains("error_kind"))
                    obs.error = static_cast<ErrorCode>(
                        jt["observation"]["error_kind"].get<int>());
                else if (!obs.ok)
                    obs.error = ErrorCode::ServerErrorInvalidAction;
                rec.observation = std::move(obs);
            }
            traj.records.push_back(std::move(rec));
        }
        if (row.contains("predicted")) {
            AnswerSet predicted;
            predicted.raw_text = row["predicted"].value("raw", "");
            predicted.normalized_entities = row["predicted"].value(
                "normalized", std::vector<std::string>{});
            predicted.resolved_in_kg =
                row["predicted"].value("resolved_in_kg", std::vector<bool>{});
            traj.predicted_answers = std::move(predicted);
        } else {
            traj.predicted_answers = AnswerSet{};
        }
        if (sample_ids) sample_ids->push_back(traj.sample_id);
        episodes.push_back(std::move(episode));
    }
    return episodes;
}

}  // namespace kgr
