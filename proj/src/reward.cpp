#include "kgr/reward.hpp"

#include <istream>
#include <stdexcept>

#include <json.hpp>

namespace kgr {

RewardConfig load_reward_config(std::istream& in) {
    nlohmann::json j = nlohmann::json::parse(in);
    RewardConfig cfg;
    cfg.w_fmt = j.value("w_fmt", cfg.w_fmt);
    cfg.w_kg = j.value("w_kg", cfg.w_kg);
    cfg.w_ans = j.value("w_ans", cfg.w_ans);
    cfg.w_f1 = j.value("w_F1", cfg.w_f1);
    cfg.w_ret = j.value("w_ret", cfg.w_ret);
    for (double w : {cfg.w_fmt, cfg.w_kg, cfg.w_ans, cfg.w_f1, cfg.w_ret})
        if (w < 0.0)
            throw std::invalid_argument("reward weights must be non-negative");
    return cfg;
}

int score_format(const ParsedTurn& turn) { return turn.format_valid ? 1 : 0; }

int score_kg(const ParsedTurn& turn, const std::optional<Observation>& obs) {
    if (turn.is_answer() || !turn.action || !obs) return 0;
    return obs->ok ? 1 : 0;
}

int score_answer_format(const ParsedTurn& final_turn) {
    if (!final_turn.is_answer() || !final_turn.format_valid) return 0;
    // non-empty after normalization
    AnswerSet parsed = extract_answer_set(*final_turn.answer_text, nullptr);
    return parsed.normalized_entities.empty() ? 0 : 1;
}

std::set<std::string> normalize_gold(const std::vector<std::string>& gold) {
    std::set<std::string> out;
    for (const std::string& g : gold) {
        std::string n = normalize_label(g);
        if (!n.empty()) out.insert(n);
    }
    return out;
}

double f1_score(const std::vector<std::string>& predicted,
                const std::set<std::string>& gold) {
    if (gold.empty()) throw std::invalid_argument("f1_score: empty gold set");
    if (predicted.empty()) return 0.0;
    size_t matched = 0;
    for (const std::string& p : predicted)
        if (gold.count(p)) ++matched;
    if (matched == 0) return 0.0;
    double precision = static_cast<double>(matched) / predicted.size();
    double recall = static_cast<double>(matched) / gold.size();
    return 2.0 * precision * recall / (precision + recall);
}

int hit_at_1(const std::vector<std::string>& predicted,
             const std::set<std::string>& gold) {
    if (gold.empty()) throw std::invalid_argument("hit_at_1: empty gold set");
    for (const std::string& p : predicted)
        if (gold.count(p)) return 1;
    return 0;
}

int retrieval_coverage(const TrajectoryState& traj,
                       const std::set<std::string>& gold) {
    for (const TurnRecord& rec : traj.records) {
        if (!rec.observation || !rec.observation->ok) continue;
        for (const std::string& label : rec.observation->labels)
            if (gold.count(normalize_label(label))) return 1;
    }
    return 0;
}

RewardBreakdown score_trajectory(const TrajectoryState& traj,
                                 const std::vector<std::string>& gold_answers,
                                 const RewardConfig& cfg) {
    if (!traj.terminated)
        throw std::invalid_argument("score_trajectory: trajectory not terminated");
    std::set<std::string> gold = normalize_gold(gold_answers);
    RewardBreakdown breakdown;
    size_t last = traj.records.size();
    for (size_t t = 0; t < traj.records.size(); ++t) {
        const TurnRecord& rec = traj.records[t];
        TurnScore score;
        score.v_fmt = score_format(rec.parsed);
        score.v_kg = score_kg(rec.parsed, rec.observation);
        bool terminal = (t + 1 == last) && !traj.budget_exhausted;
        score.v_ans = terminal ? score_answer_format(rec.parsed) : 0;
        score.r_turn = cfg.w_fmt * score.v_fmt + cfg.w_kg * score.v_kg +
                       cfg.w_ans * score.v_ans;
        breakdown.turns.push_back(score);
    }
    std::vector<std::string> predicted;
    if (traj.predicted_answers)
        predicted = traj.predicted_answers->normalized_entities;
    breakdown.f1 = f1_score(predicted, gold);
    breakdown.hit_at_1 = hit_at_1(predicted, gold);
    breakdown.hit_at_1_strict =
        !predicted.empty() && gold.count(predicted.front()) ? 1 : 0;
    breakdown.v_ret = retrieval_coverage(traj, gold);
    breakdown.r_global = cfg.w_f1 * breakdown.f1 + cfg.w_ret * breakdown.v_ret;
    return breakdown;
}

}  // namespace kgr
