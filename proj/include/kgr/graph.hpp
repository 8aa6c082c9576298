#pragma once
// Immutable triple store with head/tail adjacency indexes, BFS subgraph
// slicing, and dataset ingestion (triple files + KGQA jsonl).

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgr {

struct Triple {
    std::string head;
    std::string relation;
    std::string tail;

    auto operator<=>(const Triple&) const = default;
};

enum class TripleFormat { Tsv, Jsonl };

class LoadError : public std::runtime_error {
public:
    LoadError(std::string message, size_t line)
        : std::runtime_error(std::move(message)), line_(line) {}
    size_t line() const { return line_; }

private:
    size_t line_;
};

// Directed labeled triple store. Immutable after construction; safe to
// share across concurrent readers.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    explicit KnowledgeGraph(std::vector<Triple> triples);

    const std::vector<Triple>& triples() const { return triples_; }
    size_t entity_count() const { return entities_.size(); }
    size_t relation_count() const { return relations_.size(); }
    size_t triple_count() const { return triples_.size(); }

    bool has_entity(const std::string& label) const;
    bool has_relation(const std::string& label) const;

    // Outgoing (relation, tail) pairs for an entity; empty when absent.
    const std::vector<std::pair<std::string, std::string>>&
    outgoing(const std::string& entity) const;
    // Incoming (relation, head) pairs for an entity; empty when absent.
    const std::vector<std::pair<std::string, std::string>>&
    incoming(const std::string& entity) const;

    std::vector<std::string> entities_sorted() const;
    std::vector<std::string> relations_sorted() const;

    // True iff some stored entity has the given normalized form.
    bool resolves_normalized(const std::string& normalized) const;

private:
    std::vector<Triple> triples_;
    std::unordered_set<std::string> entities_;
    std::unordered_set<std::string> relations_;
    std::unordered_map<std::string, std::vector<std::pair<std::string, std::string>>>
        head_index_;
    std::unordered_map<std::string, std::vector<std::pair<std::string, std::string>>>
        tail_index_;
    std::unordered_set<std::string> normalized_entities_;
};

using GraphPtr = std::shared_ptr<const KnowledgeGraph>;

// Anchor entity e0 ... e_l with relations r1 ... r_l; every consecutive
// hop must be a triple of the bound graph.
struct ReasoningPath {
    std::vector<std::string> nodes;
    std::vector<std::string> edges;

    size_t length() const { return edges.size(); }
    bool valid_in(const KnowledgeGraph& graph) const;
};

struct QASample {
    std::string sample_id;
    std::string question;
    std::vector<std::string> anchor_entities;
    std::vector<std::string> gold_answers;  // deduplicated under normalization
    GraphPtr graph;
};

KnowledgeGraph load_triples(std::istream& source, TripleFormat format);
void serialize_triples(const KnowledgeGraph& graph, std::ostream& out,
                       TripleFormat format);

// Induced subgraph on all entities within undirected BFS distance <= radius
// of any seed. Seeds absent from the graph are skipped.
KnowledgeGraph extract_subgraph(const KnowledgeGraph& graph,
                                const std::set<std::string>& seeds,
                                size_t radius);

struct QALoadResult {
    std::vector<QASample> samples;
    std::vector<std::string> errors;  // one message per rejected row
};

// jsonl rows: graph definitions {"graph_id", "triples"} and samples with
// sample_id/question/anchor_entities/gold_answers plus either inline
// "triples" or a "graph_ref". Rows sharing a graph_ref share one graph
// value. Invalid rows are reported and skipped; loading continues.
QALoadResult load_qa_dataset(std::istream& source);

void serialize_qa_dataset(const std::vector<QASample>& samples,
                          std::ostream& out);

// Answer/label normalization: case-fold, collapse internal whitespace,
// strip leading/trailing punctuation and whitespace.
std::string normalize_label(std::string_view raw);

}  // namespace kgr
