// kgr: command-line front end for the KG retrieval service, rollout
// collection, reward scoring, credit assignment, and batch evaluation.

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgr/credit.hpp"
#include "kgr/eval.hpp"
#include "kgr/rollout.hpp"
#include "kgr/service.hpp"

using namespace kgr;
using nlohmann::json;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

struct GlobalOptions {
    std::string config_path;
    uint64_t seed = 0;
    int concurrency = 1;
    int max_turns = 5;
    int n_runs = 1;
    std::string format = "flat";

    FormatMode format_mode() const {
        return format == "hierarchical" ? FormatMode::Hierarchical
                                        : FormatMode::Flat;
    }
    RewardConfig reward() const {
        if (config_path.empty()) return {};
        std::ifstream in(config_path);
        if (!in.good())
            throw CLI::ValidationError("--config",
                                       "cannot open " + config_path);
        return load_reward_config(in);
    }
};

std::vector<QASample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw std::runtime_error("cannot open " + path);
    QALoadResult loaded = load_qa_dataset(in);
    for (const std::string& err : loaded.errors)
        std::cerr << "warning: " << err << '\n';
    if (loaded.samples.empty())
        throw std::runtime_error("no usable samples in " + path);
    return loaded.samples;
}

// Oracle policy factory per sample via gold-path search; nullopt paths fall
// back to answering the anchor so the episode still terminates.
PolicyProvider oracle_provider(int max_turns) {
    return [max_turns](const QASample& sample) -> PolicyFactory {
        auto path = find_gold_path(
            sample, max_turns > 1 ? static_cast<size_t>(max_turns - 1) : 0);
        ReasoningPath p =
            path.value_or(ReasoningPath{{sample.anchor_entities.empty()
                                             ? std::string("unknown")
                                             : sample.anchor_entities[0]},
                                        {}});
        return [p, max_turns] {
            return std::make_unique<OraclePolicy>(p, max_turns);
        };
    };
}

PolicyProvider remote_provider(const std::string& host, int port,
                               const std::string& model, double temperature) {
    RemotePolicyConfig config;
    config.host = host;
    config.port = port;
    config.model = model;
    config.temperature = temperature;
    return [config](const QASample&) -> PolicyFactory {
        return [config] { return std::make_unique<RemotePolicy>(config); };
    };
}

int cmd_serve(const GlobalOptions& global, const std::string& qa_path,
              const std::string& host, int port) {
    KgService service(load_dataset(qa_path),
                      ServiceConfig{global.format_mode()});
    int bound = service.start(host, port);
    std::cout << "listening on " << host << ":" << bound << std::endl;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    return 0;
}

int cmd_ingest(const std::string& qa_path, const std::string& out_path,
               size_t radius) {
    std::vector<QASample> samples = load_dataset(qa_path);
    for (QASample& sample : samples) {
        std::set<std::string> seeds(sample.anchor_entities.begin(),
                                    sample.anchor_entities.end());
        for (const std::string& g : sample.gold_answers) seeds.insert(g);
        sample.graph = std::make_shared<KnowledgeGraph>(
            extract_subgraph(*sample.graph, seeds, radius));
    }
    std::ofstream out(out_path);
    if (!out.good()) throw std::runtime_error("cannot write " + out_path);
    serialize_qa_dataset(samples, out);
    std::cout << "wrote " << samples.size() << " samples to " << out_path
              << std::endl;
    return 0;
}

int cmd_rollout(const GlobalOptions& global, const std::string& qa_path,
                const std::string& out_path, const PolicyProvider& provider) {
    std::vector<QASample> samples = load_dataset(qa_path);
    std::ofstream out(out_path);
    if (!out.good()) throw std::runtime_error("cannot write " + out_path);
    CollectOptions options;
    options.format_mode = global.format_mode();
    options.concurrency = global.concurrency;
    size_t episodes = 0;
    for (const QASample& sample : samples) {
        RolloutGroup group = collect_rollouts(sample, provider(sample),
                                              global.n_runs, global.max_turns,
                                              options);
        for (EpisodeResult& episode : group.rollouts) {
            if (!episode.infra_failed)
                episode.reward = score_trajectory(
                    episode.trajectory, sample.gold_answers, global.reward());
            write_trajectory(episode, sample.sample_id, out);
            ++episodes;
        }
    }
    std::cout << "wrote " << episodes << " episodes to " << out_path
              << std::endl;
    return 0;
}

int cmd_score(const GlobalOptions& global, const std::string& qa_path,
              const std::string& traj_path) {
    std::vector<QASample> samples = load_dataset(qa_path);
    std::unordered_map<std::string, const QASample*> by_id;
    for (const QASample& s : samples) by_id[s.sample_id] = &s;
    std::ifstream in(traj_path);
    if (!in.good()) throw std::runtime_error("cannot open " + traj_path);
    std::vector<std::string> ids;
    auto episodes = read_trajectories(in, &ids);
    RewardConfig cfg = global.reward();
    for (size_t i = 0; i < episodes.size(); ++i) {
        auto it = by_id.find(ids[i]);
        if (it == by_id.end()) {
            std::cerr << "warning: sample \"" << ids[i]
                      << "\" absent from the dataset; skipped\n";
            continue;
        }
        RewardBreakdown b = score_trajectory(episodes[i].trajectory,
                                             it->second->gold_answers, cfg);
        json turns = json::array();
        for (const TurnScore& t : b.turns)
            turns.push_back({{"v_fmt", t.v_fmt},
                             {"v_kg", t.v_kg},
                             {"v_ans", t.v_ans},
                             {"r_turn", t.r_turn}});
        json row{{"sample_id", ids[i]},
                 {"turns", std::move(turns)},
                 {"f1", b.f1},
                 {"v_ret", b.v_ret},
                 {"r_global", b.r_global},
                 {"hit_at_1", b.hit_at_1},
                 {"hit_at_1_strict", b.hit_at_1_strict}};
        std::cout << row.dump() << '\n';
    }
    return 0;
}

int cmd_credit(const GlobalOptions& global, const std::string& qa_path,
               const std::string& traj_path, const std::string& tokens_path,
               double lambda, bool trajectory_level, double beta_kl) {
    std::vector<QASample> samples = load_dataset(qa_path);
    std::unordered_map<std::string, const QASample*> by_id;
    for (const QASample& s : samples) by_id[s.sample_id] = &s;
    std::ifstream in(traj_path);
    if (!in.good()) throw std::runtime_error("cannot open " + traj_path);
    std::vector<std::string> ids;
    auto episodes = read_trajectories(in, &ids);
    RewardConfig reward_cfg = global.reward();
    std::vector<RewardBreakdown> breakdowns;
    for (size_t i = 0; i < episodes.size(); ++i) {
        auto it = by_id.find(ids[i]);
        if (it == by_id.end())
            throw std::runtime_error("sample \"" + ids[i] +
                                     "\" absent from the dataset");
        breakdowns.push_back(score_trajectory(
            episodes[i].trajectory, it->second->gold_answers, reward_cfg));
    }
    CreditConfig credit_cfg;
    credit_cfg.lambda = lambda;
    credit_cfg.turn_level = !trajectory_level;
    credit_cfg.beta_kl = beta_kl;
    auto returns =
        turn_returns(breakdowns, credit_cfg.lambda, credit_cfg.turn_level);
    AdvantageTable table =
        group_advantages(returns, credit_cfg.epsilon_stability);
    json out{{"group_mean", table.group_mean},
             {"group_stddev", table.group_stddev},
             {"pooled_count", table.pooled_count},
             {"returns", table.returns},
             {"advantages", table.advantages}};
    if (!tokens_path.empty()) {
        std::ifstream tin(tokens_path);
        if (!tin.good())
            throw std::runtime_error("cannot open " + tokens_path);
        TokenBatch batch = load_token_batch(tin);
        TokenValues advantages = broadcast_to_tokens(table, batch);
        GrpoResult result = grpo_objective(batch, advantages, credit_cfg);
        out["objective"] = result.objective;
        out["generated_tokens"] = result.generated_tokens;
    }
    std::cout << out.dump(2) << std::endl;
    return 0;
}

int cmd_evaluate(const GlobalOptions& global, const std::string& qa_path,
                 const PolicyProvider& provider, const std::string& endpoint,
                 bool pooled) {
    std::vector<QASample> samples = load_dataset(qa_path);
    EvalConfig cfg;
    cfg.reward = global.reward();
    cfg.format_mode = global.format_mode();
    cfg.concurrency = global.concurrency;
    cfg.seed = global.seed;
    cfg.pooled_aggregation = pooled;
    if (!endpoint.empty()) {
        size_t colon = endpoint.rfind(':');
        if (colon == std::string::npos)
            throw CLI::ValidationError("--endpoint", "expected host:port");
        std::string host = endpoint.substr(0, colon);
        int port = std::stoi(endpoint.substr(colon + 1));
        FormatMode mode = cfg.format_mode;
        cfg.executor_provider = [host, port, mode](const QASample& s) {
            return make_wire_executor(host, port, s.sample_id, mode);
        };
    }
    MetricsReport report =
        evaluate(samples, provider, global.n_runs, global.max_turns, cfg);
    std::cout << report_to_json(report) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-graph retrieval environment kit"};
    app.require_subcommand(1);
    // global flags may appear after the subcommand
    app.fallthrough();

    GlobalOptions global;
    app.add_option("--config", global.config_path,
                   "reward weight json (w_fmt, w_kg, w_ans, w_F1, w_ret)")
        ->envname("KGR_CONFIG");
    app.add_option("--seed", global.seed, "rng seed recorded in reports")
        ->envname("KGR_SEED");
    app.add_option("--concurrency", global.concurrency,
                   "rollout worker count")
        ->envname("KGR_CONCURRENCY")
        ->check(CLI::PositiveNumber);
    app.add_option("--max-turns", global.max_turns, "turn budget H")
        ->envname("KGR_MAX_TURNS")
        ->check(CLI::PositiveNumber);
    app.add_option("--n", global.n_runs, "rollouts per sample N")
        ->envname("KGR_N")
        ->check(CLI::PositiveNumber);
    app.add_option("--format", global.format,
                   "relation rendering: flat or hierarchical")
        ->envname("KGR_FORMAT")
        ->check(CLI::IsMember({"flat", "hierarchical"}));

    std::string qa_path, out_path, traj_path, tokens_path;
    std::string host = "127.0.0.1", endpoint, policy_endpoint, model;
    int port = 0;
    size_t radius = 2;
    double lambda = 1.0, beta_kl = 0.01, temperature = 1.0;
    bool trajectory_level = false, pooled = false;

    auto* serve = app.add_subcommand("serve", "run the retrieval service");
    serve->add_option("--qa", qa_path, "QA dataset jsonl")->required();
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "bind port (0 = ephemeral)");

    auto* ingest = app.add_subcommand(
        "ingest", "restrict sample graphs to anchor/gold neighborhoods");
    ingest->add_option("--qa", qa_path, "QA dataset jsonl")->required();
    ingest->add_option("--out", out_path, "output jsonl")->required();
    ingest->add_option("--radius", radius, "undirected hop radius");

    auto* rollout =
        app.add_subcommand("rollout", "collect and persist trajectories");
    rollout->add_option("--qa", qa_path, "QA dataset jsonl")->required();
    rollout->add_option("--out", out_path, "trajectory jsonl")->required();
    rollout->add_option("--policy-endpoint", policy_endpoint,
                        "host:port of a completion server (default: scripted "
                        "graph-walk oracle)");
    rollout->add_option("--model", model, "model name for the remote policy");
    rollout->add_option("--temperature", temperature,
                        "sampling temperature for the remote policy");

    auto* score =
        app.add_subcommand("score", "reward breakdowns for stored trajectories");
    score->add_option("--qa", qa_path, "QA dataset jsonl")->required();
    score->add_option("--trajectories", traj_path, "trajectory jsonl")
        ->required();

    auto* credit = app.add_subcommand(
        "credit", "group-relative advantages and surrogate objective");
    credit->add_option("--qa", qa_path, "QA dataset jsonl")->required();
    credit->add_option("--trajectories", traj_path,
                       "trajectory jsonl forming one rollout group")
        ->required();
    credit->add_option("--tokens", tokens_path,
                       "token log-prob jsonl (enables the objective)");
    credit->add_option("--lambda", lambda, "global-reward mixing weight");
    credit->add_option("--beta-kl", beta_kl, "KL penalty coefficient");
    credit->add_flag("--trajectory-level", trajectory_level,
                     "broadcast one mean return per rollout instead of "
                     "turn-level returns");

    auto* eval_cmd =
        app.add_subcommand("evaluate", "run the full evaluation loop");
    eval_cmd->add_option("--qa", qa_path, "QA dataset jsonl")->required();
    eval_cmd->add_option("--endpoint", endpoint,
                         "host:port of a running retrieval service (default: "
                         "in-process execution)");
    eval_cmd->add_option("--policy-endpoint", policy_endpoint,
                         "host:port of a completion server (default: scripted "
                         "graph-walk oracle)");
    eval_cmd->add_option("--model", model, "model name for the remote policy");
    eval_cmd->add_option("--temperature", temperature,
                         "sampling temperature for the remote policy");
    eval_cmd->add_flag("--pooled", pooled,
                       "pooled precision/recall aggregation instead of "
                       "per-sample averaging");

    CLI11_PARSE(app, argc, argv);

    try {
        auto provider = [&]() -> PolicyProvider {
            if (policy_endpoint.empty())
                return oracle_provider(global.max_turns);
            size_t colon = policy_endpoint.rfind(':');
            if (colon == std::string::npos)
                throw std::runtime_error(
                    "--policy-endpoint expects host:port");
            return remote_provider(policy_endpoint.substr(0, colon),
                                   std::stoi(policy_endpoint.substr(colon + 1)),
                                   model, temperature);
        };
        if (serve->parsed()) return cmd_serve(global, qa_path, host, port);
        if (ingest->parsed()) return cmd_ingest(qa_path, out_path, radius);
        if (rollout->parsed())
            return cmd_rollout(global, qa_path, out_path, provider());
        if (score->parsed()) return cmd_score(global, qa_path, traj_path);
        if (credit->parsed())
            return cmd_credit(global, qa_path, traj_path, tokens_path, lambda,
                              trajectory_level, beta_kl);
        if (eval_cmd->parsed())
            return cmd_evaluate(global, qa_path, provider(), endpoint, pooled);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << std::endl;
        return 2;
    }
    return 0;
}
