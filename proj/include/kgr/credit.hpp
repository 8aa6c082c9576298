#pragma once
// Turn returns, pooled group-relative advantages, token broadcasting,
// importance ratios, K3 KL, and the clipped surrogate objective value.
// All reductions use a fixed left-to-right accumulation order.

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "kgr/reward.hpp"

namespace kgr {

struct CreditConfig {
    double lambda = 1.0;            // global-reward mixing in turn returns
    double epsilon_stability = 1e-6;
    double clip_epsilon = 0.2;
    double beta_kl = 0.01;
    bool turn_level = true;         // false => trajectory-wise advantage
    bool mean_normalize = false;    // objective divided by generated tokens
};

struct TurnTokens {
    std::vector<double> logp_current;
    std::vector<double> logp_behavior;
    std::vector<double> logp_reference;
    std::vector<int> mask;  // 1 on agent-generated tokens

    bool aligned() const {
        return logp_behavior.size() == logp_current.size() &&
               logp_reference.size() == logp_current.size() &&
               mask.size() == logp_current.size();
    }
    size_t size() const { return logp_current.size(); }
};

struct RolloutTokens {
    std::vector<TurnTokens> turns;
};

struct TokenBatch {
    std::vector<RolloutTokens> rollouts;
};

// rollout -> turn -> token
using TokenValues = std::vector<std::vector<std::vector<double>>>;

struct AdvantageTable {
    std::vector<std::vector<double>> returns;     // [rollout][turn]
    std::vector<std::vector<double>> advantages;  // [rollout][turn]
    double group_mean = 0.0;
    double group_stddev = 0.0;  // population
    size_t pooled_count = 0;    // |S|
};

// G_t = r_turn_t + lambda * R_global (turn level); trajectory level uses
// mean_t r_turn_t + lambda * R_global broadcast to every turn.
std::vector<std::vector<double>> turn_returns(
    const std::vector<RewardBreakdown>& breakdowns, double lambda,
    bool turn_level = true);

AdvantageTable group_advantages(
    const std::vector<std::vector<double>>& returns, double epsilon_stability);

TokenValues broadcast_to_tokens(const AdvantageTable& table,
                                const TokenBatch& batch);

TokenValues importance_ratios(const TokenBatch& batch);

// exp(d) - d - 1 with d = logp_reference - logp_current; >= 0.
TokenValues kl_k3(const TokenBatch& batch);

struct GrpoResult {
    double objective = 0.0;
    TokenValues per_token_terms;  // masked tokens carry 0
    size_t generated_tokens = 0;
};

GrpoResult grpo_objective(const TokenBatch& batch,
                          const TokenValues& advantages,
                          const CreditConfig& cfg);

// Analytic d objective / d logp_current per token (for external trainers
// and the finite-difference cross-check).
TokenValues grpo_gradient_logp_current(const TokenBatch& batch,
                                       const TokenValues& advantages,
                                       const CreditConfig& cfg);

// jsonl interchange: one record per rollout with aligned arrays and masks.
TokenBatch load_token_batch(std::istream& in);
void save_token_batch(const TokenBatch& batch, std::ostream& out);

}  // namespace kgr
