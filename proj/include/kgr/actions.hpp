#pragma once
// The four schema-agnostic 1-hop retrieval actions, the server error
// catalogue, flat/hierarchical relation rendering, and path realization.

#include <optional>
#include <string>
#include <vector>

#include "kgr/graph.hpp"

namespace kgr {

enum class ActionKind {
    TailRelations,
    HeadRelations,
    TailEntities,
    HeadEntities,
};

// Wire argument order is (entity) or (entity, relation) for every kind,
// matching the server instruction. Unknown names are preserved so the
// executor can reject them with a corrective message.
struct RetrievalAction {
    std::string name;
    std::vector<std::string> args;
};

std::optional<ActionKind> action_kind_from_name(const std::string& name);
const char* action_name(ActionKind kind);

enum class ErrorCode {
    ServerErrorInvalidAction,
    FormatErrorMissingFields,
    FormatErrorWrongArgCount,
    SampleNotFound,
    EntityNotFound,
    RelationNotFound,
    NoResultsRelations,
    NoResultsEntities,
};

// Catalogue identifier, e.g. "KG_ENTITY_NOT_FOUND".
const char* error_code_name(ErrorCode code);

struct Observation {
    bool ok = false;
    std::vector<std::string> labels;  // full sorted result set (ok only)
    std::string text;                 // rendered result or error message
    std::optional<ErrorCode> error;
};

enum class FormatMode { Flat, Hierarchical };

// Core set semantics. Results are lexicographically sorted.
std::vector<std::string> get_tail_relations(const KnowledgeGraph& graph,
                                            const std::string& entity);
std::vector<std::string> get_head_relations(const KnowledgeGraph& graph,
                                            const std::string& entity);
std::vector<std::string> get_tail_entities(const KnowledgeGraph& graph,
                                           const std::string& entity,
                                           const std::string& relation);
std::vector<std::string> get_head_entities(const KnowledgeGraph& graph,
                                           const std::string& relation,
                                           const std::string& entity);

inline constexpr size_t kDefaultResultCap = 200;

// Dispatch an action against a graph: validates name and arity, runs the
// matching operation, renders observation text (errors byte-exact per the
// catalogue). Rendered ok text truncates past result_cap labels.
Observation execute(const KnowledgeGraph& graph, const RetrievalAction& action,
                    FormatMode mode = FormatMode::Flat,
                    size_t result_cap = kDefaultResultCap);

Observation sample_not_found(const std::string& sample_id);

// Dot-notation tree: domain / type / comma-joined properties; relations
// without dots form a flat trailing group.
std::string format_relations_hierarchical(
    const std::vector<std::string>& relations);

// Inverse of the hierarchical rendering (dotted names reconstructed).
std::vector<std::string> parse_relations_hierarchical(const std::string& text);

// The get_tail_entities chain that surfaces the path's terminal entity.
std::vector<RetrievalAction> realize_path(const KnowledgeGraph& graph,
                                          const ReasoningPath& path);

}  // namespace kgr
