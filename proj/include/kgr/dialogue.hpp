#pragma once
// Multi-turn grammar: prompt construction, exact-match message parsing,
// observation wrapping with auto-closure, turn budgeting, and answer-set
// extraction.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kgr/actions.hpp"
#include "kgr/graph.hpp"

namespace kgr {

// Grammar-violation codes surfaced by parse_message.
namespace violation {
inline constexpr const char* kMissingThink = "missing_think";
inline constexpr const char* kMissingAction = "missing_action";
inline constexpr const char* kMultipleThink = "multiple_think";
inline constexpr const char* kMultipleActions = "multiple_actions";
inline constexpr const char* kThinkAfterAction = "think_after_action";
inline constexpr const char* kUnknownTag = "unknown_tag";
}  // namespace violation

struct ParsedTurn {
    std::optional<std::string> think_text;
    std::optional<RetrievalAction> action;  // retrieval branch
    std::optional<std::string> answer_text;  // Answer branch
    bool format_valid = false;
    std::vector<std::string> violations;

    bool is_answer() const { return answer_text.has_value(); }
};

struct AnswerSet {
    std::string raw_text;
    std::vector<std::string> normalized_entities;  // deduplicated, in order
    std::vector<bool> resolved_in_kg;              // aligned with entities
};

struct TurnRecord {
    std::string message;
    ParsedTurn parsed;
    std::optional<Observation> observation;
};

struct TrajectoryState {
    std::string sample_id;
    std::string prompt;
    int max_turns = 5;       // H
    int turn_index = 1;      // 1-based, next turn to run
    std::vector<TurnRecord> records;
    bool terminated = false;
    bool budget_exhausted = false;
    std::optional<AnswerSet> predicted_answers;
};

std::string default_server_instruction();

// Renders the instruction prompt with [H] and [question] substituted and
// the server instruction block inlined; byte-stable.
std::string build_initial_prompt(const std::string& question, int max_turns,
                                 const std::string& server_instruction =
                                     default_server_instruction());

// Total over arbitrary input; failures become violations, never throws.
ParsedTurn parse_message(const std::string& text);

// <information> wrapping; error payloads nested in <error>; unbalanced
// tags in the payload are auto-closed first.
std::string wrap_observation(const Observation& obs);

// Splits on commas/newlines, trims quotes, normalizes, deduplicates, and
// resolves each entity against the graph (null graph => unresolved).
AnswerSet extract_answer_set(const std::string& answer_text,
                             const KnowledgeGraph* graph);

using ActionExecutor = std::function<Observation(const RetrievalAction&)>;

// One environment step: parse, execute or terminate, enforce the turn
// budget (final-turn safeguard yields an empty prediction).
TrajectoryState advance(TrajectoryState state, const std::string& message,
                        const ActionExecutor& executor,
                        const KnowledgeGraph* graph_for_resolution);

}  // namespace kgr
