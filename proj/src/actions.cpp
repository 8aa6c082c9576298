#include "kgr/actions.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

namespace kgr {

std::optional<ActionKind> action_kind_from_name(const std::string& name) {
    if (name == "get_tail_relations") return ActionKind::TailRelations;
    if (name == "get_head_relations") return ActionKind::HeadRelations;
    if (name == "get_tail_entities") return ActionKind::TailEntities;
    if (name == "get_head_entities") return ActionKind::HeadEntities;
    return std::nullopt;
}

const char* action_name(ActionKind kind) {
    switch (kind) {
        case ActionKind::TailRelations: return "get_tail_relations";
        case ActionKind::HeadRelations: return "get_head_relations";
        case ActionKind::TailEntities: return "get_tail_entities";
        case ActionKind::HeadEntities: return "get_head_entities";
    }
    return "";
}

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::ServerErrorInvalidAction: return "KG_SERVER_ERROR";
        case ErrorCode::FormatErrorMissingFields: return "KG_FORMAT_ERROR";
        case ErrorCode::FormatErrorWrongArgCount: return "KG_FORMAT_ERROR";
        case ErrorCode::SampleNotFound: return "KG_SAMPLE_NOT_FOUND";
        case ErrorCode::EntityNotFound: return "KG_ENTITY_NOT_FOUND";
        case ErrorCode::RelationNotFound: return "KG_RELATION_NOT_FOUND";
        case ErrorCode::NoResultsRelations: return "KG_NO_RESULTS";
        case ErrorCode::NoResultsEntities: return "KG_NO_RESULTS";
    }
    return "";
}

namespace {

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

Observation error_obs(ErrorCode code, std::string text) {
    Observation obs;
    obs.ok = false;
    obs.error = code;
    obs.text = std::move(text);
    return obs;
}

std::string join_capped(const std::vector<std::string>& labels,
                        size_t result_cap) {
    std::string out;
    size_t shown = std::min(labels.size(), result_cap);
    for (size_t i = 0; i < shown; ++i) {
        if (i) out += ", ";
        out += labels[i];
    }
    if (labels.size() > result_cap) {
        out += " …(" + std::to_string(labels.size() - result_cap) + " more)";
    }
    return out;
}

Observation ok_obs(std::string header, std::vector<std::string> labels,
                   FormatMode mode, size_t result_cap, bool relations) {
    Observation obs;
    obs.ok = true;
    if (mode == FormatMode::Hierarchical && relations) {
        obs.text = std::move(header) + "\n" +
                   format_relations_hierarchical(labels);
    } else {
        obs.text = std::move(header) + " " + join_capped(labels, result_cap);
    }
    obs.labels = std::move(labels);
    return obs;
}

}  // namespace

std::vector<std::string> get_tail_relations(const KnowledgeGraph& graph,
                                            const std::string& entity) {
    std::vector<std::string> out;
    for (const auto& [rel, tail] : graph.outgoing(entity)) out.push_back(rel);
    return sorted_unique(std::move(out));
}

std::vector<std::string> get_head_relations(const KnowledgeGraph& graph,
                                            const std::string& entity) {
    std::vector<std::string> out;
    for (const auto& [rel, head] : graph.incoming(entity)) out.push_back(rel);
    return sorted_unique(std::move(out));
}

std::vector<std::string> get_tail_entities(const KnowledgeGraph& graph,
                                           const std::string& entity,
                                           const std::string& relation) {
    std::vector<std::string> out;
    for (const auto& [rel, tail] : graph.outgoing(entity))
        if (rel == relation) out.push_back(tail);
    return sorted_unique(std::move(out));
}

std::vector<std::string> get_head_entities(const KnowledgeGraph& graph,
                                           const std::string& relation,
                                           const std::string& entity) {
    std::vector<std::string> out;
    for (const auto& [rel, head] : graph.incoming(entity))
        if (rel == relation) out.push_back(head);
    return sorted_unique(std::move(out));
}

Observation sample_not_found(const std::string& sample_id) {
    return error_obs(ErrorCode::SampleNotFound,
                     "Sample \"" + sample_id + "\" not found in KG");
}

Observation execute(const KnowledgeGraph& graph, const RetrievalAction& action,
                    FormatMode mode, size_t result_cap) {
    auto kind = action_kind_from_name(action.name);
    if (!kind) {
        return error_obs(
            ErrorCode::ServerErrorInvalidAction,
            "Action \"" + action.name +
                "\" not available (use: get_head_relations, "
                "get_tail_relations, get_head_entities, get_tail_entities)");
    }
    bool relation_kind = *kind == ActionKind::TailRelations ||
                         *kind == ActionKind::HeadRelations;
    size_t want = relation_kind ? 1 : 2;
    if (action.args.size() < want) {
        std::string missing =
            action.args.empty()
                ? (relation_kind ? "entity" : "entity, relation_name")
                : "relation_name";
        return error_obs(ErrorCode::FormatErrorMissingFields,
                         "Missing required fields for " + action.name + ": " +
                             missing);
    }
    if (action.args.size() > want) {
        std::string text =
            relation_kind
                ? action.name + " accepts only one entity argument"
                : action.name + " accepts only two arguments (entity, relation)";
        return error_obs(ErrorCode::FormatErrorWrongArgCount, std::move(text));
    }
    const std::string& entity = action.args[0];
    if (!graph.has_entity(entity)) {
        return error_obs(ErrorCode::EntityNotFound,
                         "Entity \"" + entity + "\" not found in KG");
    }
    switch (*kind) {
        case ActionKind::TailRelations: {
            auto rels = get_tail_relations(graph, entity);
            if (rels.empty())
                return error_obs(ErrorCode::NoResultsRelations,
                                 "No tail relations found for entity \"" +
                                     entity + "\" in knowledge graph");
            return ok_obs("Tail relations for entity \"" + entity + "\":",
                          std::move(rels), mode, result_cap, true);
        }
        case ActionKind::HeadRelations: {
            auto rels = get_head_relations(graph, entity);
            if (rels.empty())
                return error_obs(ErrorCode::NoResultsRelations,
                                 "No head relations found for entity \"" +
                                     entity + "\" in knowledge graph");
            return ok_obs("Head relations for entity \"" + entity + "\":",
                          std::move(rels), mode, result_cap, true);
        }
        case ActionKind::TailEntities: {
            const std::string& relation = action.args[1];
            if (!graph.has_relation(relation))
                return error_obs(ErrorCode::RelationNotFound,
                                 "Relation \"" + relation +
                                     "\" not found in KG");
            auto tails = get_tail_entities(graph, entity, relation);
            if (tails.empty())
                return error_obs(ErrorCode::NoResultsEntities,
                                 "No tail entities found for relation \"" +
                                     relation + "\" with head \"" + entity +
                                     "\" in knowledge graph");
            return ok_obs("Tail entities for relation \"" + relation +
                              "\" with head \"" + entity + "\":",
                          std::move(tails), mode, result_cap, false);
        }
        case ActionKind::HeadEntities: {
            const std::string& relation = action.args[1];
            if (!graph.has_relation(relation))
                return error_obs(ErrorCode::RelationNotFound,
                                 "Relation \"" + relation +
                                     "\" not found in KG");
            auto heads = get_head_entities(graph, relation, entity);
            if (heads.empty())
                return error_obs(ErrorCode::NoResultsEntities,
                                 "No head entities found for relation \"" +
                                     relation + "\" with tail \"" + entity +
                                     "\" in knowledge graph");
            return ok_obs("Head entities for relation \"" + relation +
                              "\" with tail \"" + entity + "\":",
                          std::move(heads), mode, result_cap, false);
        }
    }
    return error_obs(ErrorCode::ServerErrorInvalidAction, "unreachable");
}

std::string format_relations_hierarchical(
    const std::vector<std::string>& relations) {
    // domain -> type -> (bare two-segment relation present, properties);
    // split on the first two dots only
    struct TypeEntry {
        bool bare = false;
        std::vector<std::string> props;
    };
    std::map<std::string, std::map<std::string, TypeEntry>> tree;
    std::vector<std::string> flat;
    for (const std::string& rel : sorted_unique(relations)) {
        size_t d1 = rel.find('.');
        if (d1 == std::string::npos || d1 == 0 || d1 + 1 == rel.size()) {
            flat.push_back(rel);
            continue;
        }
        std::string domain = rel.substr(0, d1);
        std::string rest = rel.substr(d1 + 1);
        size_t d2 = rest.find('.');
        if (d2 == std::string::npos || d2 == 0 || d2 + 1 == rest.size()) {
            tree[domain][rest].bare = true;
        } else {
            tree[domain][rest.substr(0, d2)].props.push_back(
                rest.substr(d2 + 1));
        }
    }
    std::string out;
    for (const auto& [domain, types] : tree) {
        out += domain + "\n";
        for (const auto& [type, entry] : types) {
            // a type can appear both bare and with properties; one line each
            if (entry.bare || entry.props.empty()) out += "  " + type + "\n";
            if (!entry.props.empty()) {
                out += "  " + type + ": ";
                for (size_t i = 0; i < entry.props.size(); ++i) {
                    if (i) out += ", ";
                    out += entry.props[i];
                }
                out += "\n";
            }
        }
    }
    if (!flat.empty()) {
        for (size_t i = 0; i < flat.size(); ++i) {
            if (i) out += ", ";
            out += flat[i];
        }
        out += "\n";
    }
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

std::vector<std::string> parse_relations_hierarchical(const std::string& text) {
    std::vector<std::string> out;
    std::vector<std::pair<std::string, bool>> lines;  // (content, indented)
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        bool indented = line.rfind("  ", 0) == 0;
        lines.emplace_back(indented ? line.substr(2) : line, indented);
    }
    for (size_t i = 0; i < lines.size(); ++i) {
        const auto& [content, indented] = lines[i];
        if (indented) continue;
        bool has_children = i + 1 < lines.size() && lines[i + 1].second;
        if (!has_children) {
            // flat trailing group: comma-joined bare names
            std::istringstream items(content);
            std::string item;
            while (std::getline(items, item, ',')) {
                size_t b = item.find_first_not_of(' ');
                if (b != std::string::npos)
                    out.push_back(item.substr(b));
            }
            continue;
        }
        const std::string& domain = content;
        for (size_t j = i + 1; j < lines.size() && lines[j].second; ++j) {
            const std::string& type_line = lines[j].first;
            size_t colon = type_line.find(": ");
            if (colon == std::string::npos) {
                out.push_back(domain + "." + type_line);
                continue;
            }
            std::string type = type_line.substr(0, colon);
            std::istringstream props(type_line.substr(colon + 2));
            std::string prop;
            while (std::getline(props, prop, ',')) {
                size_t b = prop.find_first_not_of(' ');
                if (b != std::string::npos)
                    out.push_back(domain + "." + type + "." + prop.substr(b));
            }
        }
    }
    return sorted_unique(std::move(out));
}

std::vector<RetrievalAction> realize_path(const KnowledgeGraph& graph,
                                          const ReasoningPath& path) {
    if (!path.valid_in(graph))
        throw std::invalid_argument("realize_path: path not valid in graph");
    std::vector<RetrievalAction> actions;
    for (size_t i = 0; i < path.edges.size(); ++i) {
        actions.push_back(
            {"get_tail_entities", {path.nodes[i], path.edges[i]}});
    }
    return actions;
}

}  // namespace kgr
