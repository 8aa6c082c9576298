#pragma once
// Episode drivers: policy contract, scripted graph-walk oracle, remote
// completion client, N-rollout collection, and trajectory jsonl IO.

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kgr/dialogue.hpp"
#include "kgr/reward.hpp"

namespace kgr {

class Policy {
public:
    virtual ~Policy() = default;
    // context is the full dialogue text; the returned text is m_t verbatim.
    virtual std::string generate(const std::string& context) = 0;
};

// One fresh policy per episode.
using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

// Emits well-formed messages walking a reasoning path via get_tail_entities,
// then answers with the terminal entity. Paths longer than H-1 are truncated
// (flagged) and answered early.
class OraclePolicy : public Policy {
public:
    OraclePolicy(ReasoningPath path, int max_turns);
    std::string generate(const std::string& context) override;
    bool truncated() const { return truncated_; }

private:
    ReasoningPath path_;
    size_t usable_hops_;
    size_t step_ = 0;
    bool truncated_ = false;
};

class PolicyTransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RemotePolicyConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string path = "/generate";
    std::string model;
    double temperature = 1.0;  // 0.0 for deterministic evaluation
    double top_p = 1.0;
    int max_attempts = 3;
    int backoff_ms = 100;  // doubled per retry
};

// Forwards the dialogue context to a completion endpoint.
class RemotePolicy : public Policy {
public:
    explicit RemotePolicy(RemotePolicyConfig config);
    std::string generate(const std::string& context) override;

private:
    RemotePolicyConfig config_;
};

struct EpisodeResult {
    TrajectoryState trajectory;
    bool infra_failed = false;
    std::string failure_reason;
    bool oracle_truncated = false;
    size_t generated_chars = 0;      // completion-only, across turns
    size_t generated_ws_tokens = 0;  // whitespace-token proxy
    std::optional<RewardBreakdown> reward;  // attached after scoring
};

struct RolloutGroup {
    std::string sample_id;
    std::vector<EpisodeResult> rollouts;
};

struct CollectOptions {
    FormatMode format_mode = FormatMode::Flat;
    size_t result_cap = kDefaultResultCap;
    size_t context_char_cap = 32768;
    int concurrency = 1;
    // Overrides the default in-process executor (e.g. a wire-protocol
    // client). Observation resolution still uses the sample's graph.
    ActionExecutor executor;
};

EpisodeResult run_episode(const QASample& sample, Policy& policy,
                          int max_turns, const CollectOptions& options = {});

RolloutGroup collect_rollouts(const QASample& sample,
                              const PolicyFactory& factory, int n_rollouts,
                              int max_turns,
                              const CollectOptions& options = {});

// Shortest directed path from any anchor to any gold answer, or nullopt.
std::optional<ReasoningPath> find_gold_path(const QASample& sample,
                                            size_t max_length);

// Replay format: one jsonl record per episode.
void write_trajectory(const EpisodeResult& episode, const std::string& sample_id,
                      std::ostream& out);
std::vector<EpisodeResult> read_trajectories(std::istream& in,
                                             std::vector<std::string>* sample_ids);

}  // namespace kgr
