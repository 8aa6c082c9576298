#pragma once
// Verifiable turn and global rewards: format/KG/answer validity, answer-set
// F1, Hit@1, and retrieval coverage.

#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "kgr/dialogue.hpp"

namespace kgr {

struct RewardConfig {
    double w_fmt = 0.5;
    double w_kg = 0.5;
    double w_ans = 0.5;
    double w_f1 = 1.0;
    double w_ret = 1.0;
};

// json config with keys w_fmt, w_kg, w_ans, w_F1, w_ret; absent keys keep
// their defaults.
RewardConfig load_reward_config(std::istream& in);

struct TurnScore {
    int v_fmt = 0;
    int v_kg = 0;
    int v_ans = 0;
    double r_turn = 0.0;
};

struct RewardBreakdown {
    std::vector<TurnScore> turns;
    double f1 = 0.0;
    int v_ret = 0;
    double r_global = 0.0;
    int hit_at_1 = 0;
    int hit_at_1_strict = 0;  // first listed entity only
};

int score_format(const ParsedTurn& turn);
int score_kg(const ParsedTurn& turn, const std::optional<Observation>& obs);
// Terminal turn only; non-terminal turns score 0 by definition.
int score_answer_format(const ParsedTurn& final_turn);

// gold must be non-empty; both sides matched on normalized strings.
double f1_score(const std::vector<std::string>& predicted_normalized,
                const std::set<std::string>& gold_normalized);
int hit_at_1(const std::vector<std::string>& predicted_normalized,
             const std::set<std::string>& gold_normalized);

// 1 iff some gold entity's normalized form appears among the result labels
// of any ok observation of the trajectory.
int retrieval_coverage(const TrajectoryState& traj,
                       const std::set<std::string>& gold_normalized);

std::set<std::string> normalize_gold(const std::vector<std::string>& gold);

RewardBreakdown score_trajectory(const TrajectoryState& traj,
                                 const std::vector<std::string>& gold_answers,
                                 const RewardConfig& cfg = {});

}  // namespace kgr
