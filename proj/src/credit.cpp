#include "kgr/credit.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace kgr {

using nlohmann::json;

std::vector<std::vector<double>> turn_returns(
    const std::vector<RewardBreakdown>& breakdowns, double lambda,
    bool turn_level) {
    std::vector<std::vector<double>> returns;
    for (const RewardBreakdown& b : breakdowns) {
        std::vector<double> row;
        if (turn_level) {
            for (const TurnScore& t : b.turns)
                row.push_back(t.r_turn + lambda * b.r_global);
        } else {
            double mean_turn = 0.0;
            for (const TurnScore& t : b.turns) mean_turn += t.r_turn;
            if (!b.turns.empty()) mean_turn /= static_cast<double>(b.turns.size());
            double g = mean_turn + lambda * b.r_global;
            row.assign(b.turns.size(), g);
        }
        returns.push_back(std::move(row));
    }
    return returns;
}

AdvantageTable group_advantages(
    const std::vector<std::vector<double>>& returns,
    double epsilon_stability) {
    AdvantageTable table;
    table.returns = returns;
    double sum = 0.0;
    size_t count = 0;
    for (const auto& row : returns)
        for (double g : row) {
            sum += g;
            ++count;
        }
    if (count == 0)
        throw std::invalid_argument("group_advantages: empty group");
    double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (const auto& row : returns)
        for (double g : row) sq += (g - mean) * (g - mean);
    double stddev = std::sqrt(sq / static_cast<double>(count));
    table.group_mean = mean;
    table.group_stddev = stddev;
    table.pooled_count = count;
    for (const auto& row : returns) {
        std::vector<double> adv;
        for (double g : row) adv.push_back((g - mean) / (stddev + epsilon_stability));
        table.advantages.push_back(std::move(adv));
    }
    return table;
}

namespace {

void check_batch(const TokenBatch& batch) {
    for (size_t n = 0; n < batch.rollouts.size(); ++n) {
        for (size_t t = 0; t < batch.rollouts[n].turns.size(); ++t) {
            const TurnTokens& tt = batch.rollouts[n].turns[t];
            if (!tt.aligned())
                throw std::invalid_argument(
                    "token batch misaligned at rollout " + std::to_string(n) +
                    " turn " + std::to_string(t));
            for (size_t i = 0; i < tt.size(); ++i) {
                if (!std::isfinite(tt.logp_current[i]) ||
                    !std::isfinite(tt.logp_behavior[i]) ||
                    !std::isfinite(tt.logp_reference[i]))
                    throw std::invalid_argument(
                        "non-finite log-prob at rollout " + std::to_string(n) +
                        " turn " + std::to_string(t) + " token " +
                        std::to_string(i));
            }
        }
    }
}

template <typename F>
TokenValues map_tokens(const TokenBatch& batch, F&& f) {
    TokenValues out;
    for (const RolloutTokens& rollout : batch.rollouts) {
        std::vector<std::vector<double>> rows;
        for (const TurnTokens& turn : rollout.turns) {
            std::vector<double> row(turn.size());
            for (size_t i = 0; i < turn.size(); ++i) row[i] = f(turn, i);
            rows.push_back(std::move(row));
        }
        out.push_back(std::move(rows));
    }
    return out;
}

void check_shape(const TokenBatch& batch, const TokenValues& values,
                 const char* what) {
    if (values.size() != batch.rollouts.size())
        throw std::invalid_argument(std::string(what) + ": rollout count mismatch");
    for (size_t n = 0; n < values.size(); ++n) {
        if (values[n].size() != batch.rollouts[n].turns.size())
            throw std::invalid_argument(std::string(what) + ": turn count mismatch");
        for (size_t t = 0; t < values[n].size(); ++t)
            if (values[n][t].size() != batch.rollouts[n].turns[t].size())
                throw std::invalid_argument(std::string(what) +
                                            ": token count mismatch");
    }
}

}  // namespace

TokenValues broadcast_to_tokens(const AdvantageTable& table,
                                const TokenBatch& batch) {
    if (table.advantages.size() != batch.rollouts.size())
        throw std::invalid_argument("broadcast_to_tokens: rollout count mismatch");
    TokenValues out;
    for (size_t n = 0; n < batch.rollouts.size(); ++n) {
        if (table.advantages[n].size() != batch.rollouts[n].turns.size())
            throw std::invalid_argument("broadcast_to_tokens: turn count mismatch");
        std::vector<std::vector<double>> rows;
        for (size_t t = 0; t < batch.rollouts[n].turns.size(); ++t) {
            const TurnTokens& turn = batch.rollouts[n].turns[t];
            if (!turn.aligned())
                throw std::invalid_argument("broadcast_to_tokens: misaligned turn");
            std::vector<double> row(turn.size());
            for (size_t i = 0; i < turn.size(); ++i)
                row[i] = turn.mask[i] ? table.advantages[n][t] : 0.0;
            rows.push_back(std::move(row));
        }
        out.push_back(std::move(rows));
    }
    return out;
}

TokenValues importance_ratios(const TokenBatch& batch) {
    check_batch(batch);
    return map_tokens(batch, [](const TurnTokens& t, size_t i) {
        return std::exp(t.logp_current[i] - t.logp_behavior[i]);
    });
}

TokenValues kl_k3(const TokenBatch& batch) {
    check_batch(batch);
    return map_tokens(batch, [](const TurnTokens& t, size_t i) {
        double d = t.logp_reference[i] - t.logp_current[i];
        return std::exp(d) - d - 1.0;
    });
}

GrpoResult grpo_objective(const TokenBatch& batch, const TokenValues& advantages,
                          const CreditConfig& cfg) {
    check_batch(batch);
    check_shape(batch, advantages, "grpo_objective");
    GrpoResult result;
    double lo = 1.0 - cfg.clip_epsilon;
    double hi = 1.0 + cfg.clip_epsilon;
    for (size_t n = 0; n < batch.rollouts.size(); ++n) {
        std::vector<std::vector<double>> rows;
        for (size_t t = 0; t < batch.rollouts[n].turns.size(); ++t) {
            const TurnTokens& turn = batch.rollouts[n].turns[t];
            std::vector<double> row(turn.size(), 0.0);
            for (size_t i = 0; i < turn.size(); ++i) {
                if (!turn.mask[i]) continue;
                double adv = advantages[n][t][i];
                double rho = std::exp(turn.logp_current[i] - turn.logp_behavior[i]);
                double d = turn.logp_reference[i] - turn.logp_current[i];
                double kl = std::exp(d) - d - 1.0;
                double term = std::min(rho * adv, std::clamp(rho, lo, hi) * adv) -
                              cfg.beta_kl * kl;
                if (!std::isfinite(term))
                    throw std::runtime_error(
                        "grpo_objective: non-finite term at rollout " +
                        std::to_string(n) + " turn " + std::to_string(t) +
                        " token " + std::to_string(i));
                row[i] = term;
                result.objective += term;
                ++result.generated_tokens;
            }
            rows.push_back(std::move(row));
        }
        result.per_token_terms.push_back(std::move(rows));
    }
    if (cfg.mean_normalize && result.generated_tokens > 0)
        result.objective /= static_cast<double>(result.generated_tokens);
    return result;
}

TokenValues grpo_gradient_logp_current(const TokenBatch& batch,
                                       const TokenValues& advantages,
                                       const CreditConfig& cfg) {
    check_batch(batch);
    check_shape(batch, advantages, "grpo_gradient_logp_current");
    double lo = 1.0 - cfg.clip_epsilon;
    double hi = 1.0 + cfg.clip_epsilon;
    size_t generated = 0;
    if (cfg.mean_normalize) {
        for (const auto& rollout : batch.rollouts)
            for (const auto& turn : rollout.turns)
                for (int m : turn.mask) generated += m ? 1 : 0;
    }
    TokenValues out;
    for (size_t n = 0; n < batch.rollouts.size(); ++n) {
        std::vector<std::vector<double>> rows;
        for (size_t t = 0; t < batch.rollouts[n].turns.size(); ++t) {
            const TurnTokens& turn = batch.rollouts[n].turns[t];
            std::vector<double> row(turn.size(), 0.0);
            for (size_t i = 0; i < turn.size(); ++i) {
                if (!turn.mask[i]) continue;
                double adv = advantages[n][t][i];
                double rho = std::exp(turn.logp_current[i] - turn.logp_behavior[i]);
                double unclipped = rho * adv;
                double clipped = std::clamp(rho, lo, hi) * adv;
                double dsur;
                if (unclipped <= clipped) {
                    dsur = rho * adv;  // unclipped branch; d rho / d logp = rho
                } else {
                    dsur = (rho > lo && rho < hi) ? rho * adv : 0.0;
                }
                double d = turn.logp_reference[i] - turn.logp_current[i];
                double dkl = 1.0 - std::exp(d);  // d kl / d logp_current
                double grad = dsur - cfg.beta_kl * dkl;
                if (cfg.mean_normalize && generated > 0)
                    grad /= static_cast<double>(generated);
                row[i] = grad;
            }
            rows.push_back(std::move(row));
        }
        out.push_back(std::move(rows));
    }
    return out;
}

TokenBatch load_token_batch(std::istream& in) {
    TokenBatch batch;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.contains("turns"))
            throw std::runtime_error("token batch: malformed record at line " +
                                     std::to_string(line_no));
        RolloutTokens rollout;
        for (const auto& jt : row["turns"]) {
            TurnTokens turn;
            turn.logp_current = jt.at("logp_current").get<std::vector<double>>();
            turn.logp_behavior = jt.at("logp_behavior").get<std::vector<double>>();
            turn.logp_reference = jt.at("logp_reference").get<std::vector<double>>();
            turn.mask = jt.at("mask").get<std::vector<int>>();
            if (!turn.aligned())
                throw std::runtime_error(
                    "token batch: misaligned arrays at line " +
                    std::to_string(line_no));
            rollout.turns.push_back(std::move(turn));
        }
        batch.rollouts.push_back(std::move(rollout));
    }
    return batch;
}

void save_token_batch(const TokenBatch& batch, std::ostream& out) {
    for (size_t n = 0; n < batch.rollouts.size(); ++n) {
        json turns = json::array();
        for (const TurnTokens& turn : batch.rollouts[n].turns) {
            turns.push_back({{"logp_current", turn.logp_current},
                             {"logp_behavior", turn.logp_behavior},
                             {"logp_reference", turn.logp_reference},
                             {"mask", turn.mask}});
        }
        json row{{"rollout", n}, {"turns", std::move(turns)}};
        out << row.dump() << '\n';
    }
}

}  // namespace kgr
