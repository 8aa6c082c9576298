#include <doctest.h>

#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "kgr/rollout.hpp"
#include "test_util.hpp"

using namespace kgr;
using kgr::testutil::fixture_sample;

namespace {

ReasoningPath fixture_path() {
    return {{"Chicago", "Illinois", "Springfield"},
            {"located_in_state", "capital"}};
}

// Replays a fixed list of messages.
class ScriptedPolicy : public Policy {
public:
    explicit ScriptedPolicy(std::vector<std::string> messages)
        : messages_(std::move(messages)) {}
    std::string generate(const std::string&) override {
        if (step_ >= messages_.size()) return messages_.back();
        return messages_[step_++];
    }

private:
    std::vector<std::string> messages_;
    size_t step_ = 0;
};

}  // namespace

TEST_CASE("oracle policy walks the fixture path and answers") {
    QASample sample = fixture_sample();
    OraclePolicy oracle(fixture_path(), 5);
    EpisodeResult episode = run_episode(sample, oracle, 5);
    CHECK(!episode.infra_failed);
    CHECK(!episode.oracle_truncated);
    const TrajectoryState& traj = episode.trajectory;
    REQUIRE(traj.records.size() == 3);
    CHECK(traj.records[0].message ==
          "<think>Following the path: querying \"located_in_state\" from "
          "\"Chicago\".</think>\n"
          "<kg-query>get_tail_entities(\"Chicago\", "
          "\"located_in_state\")</kg-query>");
    REQUIRE(traj.records[0].observation);
    CHECK(traj.records[0].observation->ok);
    REQUIRE(traj.records[1].observation);
    CHECK(traj.records[1].observation->labels ==
          std::vector<std::string>{"Springfield"});
    CHECK(traj.records[2].message ==
          "<think>The terminal entity has been reached.</think>\n"
          "<answer>Springfield</answer>");
    CHECK(traj.terminated);
    CHECK(!traj.budget_exhausted);
    REQUIRE(traj.predicted_answers);
    CHECK(traj.predicted_answers->normalized_entities ==
          std::vector<std::string>{"springfield"});
    CHECK(episode.generated_chars > 0);
    CHECK(episode.generated_ws_tokens > 0);
}

TEST_CASE("oracle with a zero-length path answers immediately") {
    QASample sample = fixture_sample();
    sample.gold_answers = {"Chicago"};
    OraclePolicy oracle(ReasoningPath{{"Chicago"}, {}}, 5);
    EpisodeResult episode = run_episode(sample, oracle, 5);
    REQUIRE(episode.trajectory.records.size() == 1);
    CHECK(episode.trajectory.predicted_answers->normalized_entities ==
          std::vector<std::string>{"chicago"});
}

TEST_CASE("oracle truncates paths longer than the budget allows") {
    QASample sample = fixture_sample();
    OraclePolicy oracle(fixture_path(), 2);  // only 1 hop usable
    CHECK(oracle.truncated());
    EpisodeResult episode = run_episode(sample, oracle, 2);
    CHECK(episode.oracle_truncated);
    REQUIRE(episode.trajectory.records.size() == 2);
    // answers with the intermediate entity instead
    CHECK(episode.trajectory.predicted_answers->normalized_entities ==
          std::vector<std::string>{"illinois"});
}

TEST_CASE("collect_rollouts: N oracle runs are identical") {
    QASample sample = fixture_sample();
    PolicyFactory factory = [] {
        return std::make_unique<OraclePolicy>(fixture_path(), 5);
    };
    RolloutGroup group = collect_rollouts(sample, factory, 3, 5);
    CHECK(group.sample_id == "s1");
    REQUIRE(group.rollouts.size() == 3);
    for (const EpisodeResult& episode : group.rollouts) {
        REQUIRE(episode.trajectory.records.size() == 3);
        CHECK(episode.trajectory.records[2].message ==
              group.rollouts[0].trajectory.records[2].message);
        CHECK(episode.trajectory.predicted_answers->normalized_entities ==
              std::vector<std::string>{"springfield"});
    }
    CHECK_THROWS_AS(collect_rollouts(sample, factory, 0, 5),
                    std::invalid_argument);
}

TEST_CASE("collect_rollouts: concurrency preserves per-rollout results") {
    QASample sample = fixture_sample();
    PolicyFactory factory = [] {
        return std::make_unique<OraclePolicy>(fixture_path(), 5);
    };
    CollectOptions sequential;
    CollectOptions parallel;
    parallel.concurrency = 4;
    RolloutGroup a = collect_rollouts(sample, factory, 8, 5, sequential);
    RolloutGroup b = collect_rollouts(sample, factory, 8, 5, parallel);
    REQUIRE(a.rollouts.size() == b.rollouts.size());
    for (size_t n = 0; n < a.rollouts.size(); ++n) {
        REQUIRE(a.rollouts[n].trajectory.records.size() ==
                b.rollouts[n].trajectory.records.size());
        for (size_t t = 0; t < a.rollouts[n].trajectory.records.size(); ++t)
            CHECK(a.rollouts[n].trajectory.records[t].message ==
                  b.rollouts[n].trajectory.records[t].message);
    }
}

TEST_CASE("run_episode: budget exhaustion with a scripted looper") {
    QASample sample = fixture_sample();
    ScriptedPolicy looper(
        {"<think>again</think><kg-query>get_tail_relations(\"Chicago\")"
         "</kg-query>"});
    EpisodeResult episode = run_episode(sample, looper, 3);
    CHECK(episode.trajectory.budget_exhausted);
    CHECK(episode.trajectory.records.size() == 3);
    CHECK(episode.trajectory.predicted_answers->normalized_entities.empty());
}

TEST_CASE("run_episode: context cap flags an infra failure") {
    QASample sample = fixture_sample();
    ScriptedPolicy looper(
        {"<think>" + std::string(600, 'x') +
         "</think><kg-query>get_tail_relations(\"Chicago\")</kg-query>"});
    CollectOptions options;
    options.context_char_cap = 2048;
    EpisodeResult episode = run_episode(sample, looper, 50, options);
    CHECK(episode.infra_failed);
    CHECK(episode.failure_reason == "context cap exceeded");
    CHECK(!episode.trajectory.terminated);
}

TEST_CASE("run_episode: custom executor observes every retrieval") {
    QASample sample = fixture_sample();
    int calls = 0;
    CollectOptions options;
    options.executor = [&](const RetrievalAction& action) {
        ++calls;
        return execute(*sample.graph, action);
    };
    OraclePolicy oracle(fixture_path(), 5);
    EpisodeResult episode = run_episode(sample, oracle, 5, options);
    CHECK(calls == 2);
    CHECK(episode.trajectory.terminated);
}

TEST_CASE("find_gold_path") {
    QASample sample = fixture_sample();
    SUBCASE("fixture path is found") {
        auto path = find_gold_path(sample, 3);
        REQUIRE(path);
        CHECK(path->nodes == std::vector<std::string>{"Chicago", "Illinois",
                                                      "Springfield"});
        CHECK(path->edges ==
              std::vector<std::string>{"located_in_state", "capital"});
    }
    SUBCASE("length bound cuts the search off") {
        CHECK(!find_gold_path(sample, 1).has_value());
    }
    SUBCASE("anchor that is itself gold yields the trivial path") {
        QASample self = sample;
        self.gold_answers = {"chicago"};
        auto path = find_gold_path(self, 3);
        REQUIRE(path);
        CHECK(path->edges.empty());
        CHECK(path->nodes == std::vector<std::string>{"Chicago"});
    }
    SUBCASE("unreachable gold yields nullopt") {
        QASample unreachable = sample;
        unreachable.gold_answers = {"Atlantis"};
        CHECK(!find_gold_path(unreachable, 5).has_value());
    }
}

TEST_CASE("found gold path replays to a perfect oracle episode") {
    std::mt19937_64 rng(107);
    int replayed = 0;
    for (int trial = 0; trial < 30 && replayed < 10; ++trial) {
        KnowledgeGraph g = kgr::testutil::random_graph(rng);
        ReasoningPath walk = kgr::testutil::random_path(g, rng, 3);
        if (walk.edges.empty()) continue;
        QASample sample;
        sample.sample_id = "rand";
        sample.question = "q";
        sample.anchor_entities = {walk.nodes.front()};
        sample.gold_answers = {walk.nodes.back()};
        sample.graph = std::make_shared<KnowledgeGraph>(g);
        auto path = find_gold_path(sample, 4);
        REQUIRE(path);
        OraclePolicy oracle(*path, 8);
        EpisodeResult episode = run_episode(sample, oracle, 8);
        RewardBreakdown reward =
            score_trajectory(episode.trajectory, sample.gold_answers);
        CHECK(reward.hit_at_1 == 1);
        ++replayed;
    }
    CHECK(replayed == 10);
}

TEST_CASE("remote policy round-trips through an http completion stub") {
    httplib::Server server;
    server.Post("/generate", [](const httplib::Request& req,
                                httplib::Response& res) {
        nlohmann::json body = nlohmann::json::parse(req.body);
        REQUIRE(body.contains("context"));
        nlohmann::json reply{
            {"text", "<think>done</think><answer>Springfield</answer>"}};
        res.set_content(reply.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemotePolicyConfig config;
    config.port = port;
    RemotePolicy policy(config);
    QASample sample = fixture_sample();
    EpisodeResult episode = run_episode(sample, policy, 5);
    CHECK(!episode.infra_failed);
    CHECK(episode.trajectory.predicted_answers->normalized_entities ==
          std::vector<std::string>{"springfield"});

    server.stop();
    server_thread.join();
}

TEST_CASE("remote policy failure becomes an infra-failed episode") {
    RemotePolicyConfig config;
    config.port = 1;  // nothing listens here
    config.max_attempts = 2;
    config.backoff_ms = 1;
    RemotePolicy policy(config);
    QASample sample = fixture_sample();
    EpisodeResult episode = run_episode(sample, policy, 5);
    CHECK(episode.infra_failed);
    CHECK(episode.failure_reason.find("2 attempts") != std::string::npos);
    CHECK(!episode.trajectory.terminated);
}

TEST_CASE("trajectory jsonl round-trip preserves scoring") {
    QASample sample = fixture_sample();
    OraclePolicy oracle(fixture_path(), 5);
    EpisodeResult episode = run_episode(sample, oracle, 5);
    episode.reward = score_trajectory(episode.trajectory, sample.gold_answers);

    std::stringstream buf;
    write_trajectory(episode, sample.sample_id, buf);
    std::vector<std::string> ids;
    auto reloaded = read_trajectories(buf, &ids);
    REQUIRE(reloaded.size() == 1);
    CHECK(ids == std::vector<std::string>{"s1"});
    const TrajectoryState& traj = reloaded[0].trajectory;
    REQUIRE(traj.records.size() == 3);
    CHECK(traj.records[1].observation->labels ==
          std::vector<std::string>{"Springfield"});
    CHECK(traj.predicted_answers->normalized_entities ==
          std::vector<std::string>{"springfield"});
    RewardBreakdown rescored = score_trajectory(traj, sample.gold_answers);
    CHECK(rescored.f1 == episode.reward->f1);
    CHECK(rescored.v_ret == episode.reward->v_ret);
    for (size_t t = 0; t < rescored.turns.size(); ++t)
        CHECK(rescored.turns[t].r_turn == episode.reward->turns[t].r_turn);
}

TEST_CASE("trajectory round-trip keeps error codes") {
    QASample sample = fixture_sample();
    ScriptedPolicy policy(
        {"<think>a</think><kg-query>get_tail_relations(\"Nope\")</kg-query>",
         "<think>b</think><answer>Springfield</answer>"});
    EpisodeResult episode = run_episode(sample, policy, 5);
    REQUIRE(episode.trajectory.records[0].observation);
    std::stringstream buf;
    write_trajectory(episode, sample.sample_id, buf);
    auto reloaded = read_trajectories(buf, nullptr);
    REQUIRE(reloaded[0].trajectory.records[0].observation);
    CHECK(*reloaded[0].trajectory.records[0].observation->error ==
          ErrorCode::EntityNotFound);
}

TEST_CASE("read_trajectories rejects malformed lines") {
    std::istringstream in("{broken\n");
    CHECK_THROWS(read_trajectories(in, nullptr));
}
