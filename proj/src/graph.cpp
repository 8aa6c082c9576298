#include "kgr/graph.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace kgr {

using nlohmann::json;

std::string normalize_label(std::string_view raw) {
    std::string s;
    s.reserve(raw.size());
    // case-fold + collapse whitespace runs
    bool pending_space = false;
    for (char c : raw) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !s.empty();
            continue;
        }
        if (pending_space) {
            s.push_back(' ');
            pending_space = false;
        }
        s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    // strip leading/trailing punctuation
    size_t b = 0, e = s.size();
    auto strippable = [](char c) {
        unsigned char u = static_cast<unsigned char>(c);
        return std::ispunct(u) || std::isspace(u);
    };
    while (b < e && strippable(s[b])) ++b;
    while (e > b && strippable(s[e - 1])) --e;
    return s.substr(b, e - b);
}

KnowledgeGraph::KnowledgeGraph(std::vector<Triple> triples) {
    std::sort(triples.begin(), triples.end());
    triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
    triples_ = std::move(triples);
    for (const Triple& t : triples_) {
        entities_.insert(t.head);
        entities_.insert(t.tail);
        relations_.insert(t.relation);
        head_index_[t.head].emplace_back(t.relation, t.tail);
        tail_index_[t.tail].emplace_back(t.relation, t.head);
    }
    for (const std::string& e : entities_)
        normalized_entities_.insert(normalize_label(e));
}

bool KnowledgeGraph::has_entity(const std::string& label) const {
    return entities_.count(label) > 0;
}

bool KnowledgeGraph::has_relation(const std::string& label) const {
    return relations_.count(label) > 0;
}

namespace {
const std::vector<std::pair<std::string, std::string>> kEmptyAdjacency;
}

const std::vector<std::pair<std::string, std::string>>&
KnowledgeGraph::outgoing(const std::string& entity) const {
    auto it = head_index_.find(entity);
    return it == head_index_.end() ? kEmptyAdjacency : it->second;
}

const std::vector<std::pair<std::string, std::string>>&
KnowledgeGraph::incoming(const std::string& entity) const {
    auto it = tail_index_.find(entity);
    return it == tail_index_.end() ? kEmptyAdjacency : it->second;
}

std::vector<std::string> KnowledgeGraph::entities_sorted() const {
    std::vector<std::string> out(entities_.begin(), entities_.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> KnowledgeGraph::relations_sorted() const {
    std::vector<std::string> out(relations_.begin(), relations_.end());
    std::sort(out.begin(), out.end());
    return out;
}

bool KnowledgeGraph::resolves_normalized(const std::string& normalized) const {
    return normalized_entities_.count(normalized) > 0;
}

bool ReasoningPath::valid_in(const KnowledgeGraph& graph) const {
    if (nodes.size() != edges.size() + 1) return false;
    for (size_t i = 0; i < edges.size(); ++i) {
        const auto& adj = graph.outgoing(nodes[i]);
        bool found = false;
        for (const auto& [rel, tail] : adj) {
            if (rel == edges[i] && tail == nodes[i + 1]) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return !nodes.empty() && graph.has_entity(nodes.front());
}

KnowledgeGraph load_triples(std::istream& source, TripleFormat format) {
    std::vector<Triple> triples;
    std::string line;
    size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (format == TripleFormat::Tsv) {
            size_t t1 = line.find('\t');
            size_t t2 = t1 == std::string::npos ? std::string::npos
                                                : line.find('\t', t1 + 1);
            if (t1 == std::string::npos || t2 == std::string::npos ||
                line.find('\t', t2 + 1) != std::string::npos) {
                throw LoadError("malformed tsv row at line " +
                                    std::to_string(line_no) +
                                    ": expected head<TAB>relation<TAB>tail",
                                line_no);
            }
            Triple t{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1),
                     line.substr(t2 + 1)};
            if (t.head.empty() || t.relation.empty() || t.tail.empty())
                throw LoadError("empty field at line " + std::to_string(line_no),
                                line_no);
            triples.push_back(std::move(t));
        } else {
            json row = json::parse(line, nullptr, false);
            if (row.is_discarded() || !row.is_object() ||
                !row.contains("head") || !row.contains("relation") ||
                !row.contains("tail")) {
                throw LoadError(
                    "malformed jsonl row at line " + std::to_string(line_no) +
                        ": expected object with head/relation/tail",
                    line_no);
            }
            Triple t{row["head"].get<std::string>(),
                     row["relation"].get<std::string>(),
                     row["tail"].get<std::string>()};
            if (t.head.empty() || t.relation.empty() || t.tail.empty())
                throw LoadError("empty field at line " + std::to_string(line_no),
                                line_no);
            triples.push_back(std::move(t));
        }
    }
    return KnowledgeGraph(std::move(triples));
}

void serialize_triples(const KnowledgeGraph& graph, std::ostream& out,
                       TripleFormat format) {
    for (const Triple& t : graph.triples()) {
        if (format == TripleFormat::Tsv) {
            out << t.head << '\t' << t.relation << '\t' << t.tail << '\n';
        } else {
            json row{{"head", t.head}, {"relation", t.relation}, {"tail", t.tail}};
            out << row.dump() << '\n';
        }
    }
}

KnowledgeGraph extract_subgraph(const KnowledgeGraph& graph,
                                const std::set<std::string>& seeds,
                                size_t radius) {
    // Undirected BFS for the entity neighborhood; directed triples retained.
    std::unordered_map<std::string, size_t> dist;
    std::deque<std::string> frontier;
    for (const std::string& s : seeds) {
        if (graph.has_entity(s) && !dist.count(s)) {
            dist[s] = 0;
            frontier.push_back(s);
        }
    }
    while (!frontier.empty()) {
        std::string cur = frontier.front();
        frontier.pop_front();
        size_t d = dist[cur];
        if (d == radius) continue;
        auto visit = [&](const std::string& next) {
            if (!dist.count(next)) {
                dist[next] = d + 1;
                frontier.push_back(next);
            }
        };
        for (const auto& [rel, tail] : graph.outgoing(cur)) visit(tail);
        for (const auto& [rel, head] : graph.incoming(cur)) visit(head);
    }
    std::vector<Triple> kept;
    for (const Triple& t : graph.triples())
        if (dist.count(t.head) && dist.count(t.tail)) kept.push_back(t);
    return KnowledgeGraph(std::move(kept));
}

namespace {

std::vector<Triple> triples_from_json(const json& arr, size_t line_no) {
    std::vector<Triple> triples;
    for (const auto& item : arr) {
        Triple t;
        if (item.is_array() && item.size() == 3) {
            t = {item[0].get<std::string>(), item[1].get<std::string>(),
                 item[2].get<std::string>()};
        } else if (item.is_object()) {
            t = {item.at("head").get<std::string>(),
                 item.at("relation").get<std::string>(),
                 item.at("tail").get<std::string>()};
        } else {
            throw LoadError("malformed triple at line " + std::to_string(line_no),
                            line_no);
        }
        if (t.head.empty() || t.relation.empty() || t.tail.empty())
            throw LoadError("empty field in triple at line " +
                                std::to_string(line_no),
                            line_no);
        triples.push_back(std::move(t));
    }
    return triples;
}

std::vector<std::string> dedup_normalized(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const std::string& g : raw) {
        std::string n = normalize_label(g);
        if (n.empty() || !seen.insert(n).second) continue;
        out.push_back(g);
    }
    return out;
}

}  // namespace

QALoadResult load_qa_dataset(std::istream& source) {
    QALoadResult result;
    std::unordered_map<std::string, GraphPtr> graph_refs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(source, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json row = json::parse(line, nullptr, false);
        if (row.is_discarded() || !row.is_object()) {
            result.errors.push_back("line " + std::to_string(line_no) +
                                    ": not a json object");
            continue;
        }
        try {
            if (row.contains("graph_id")) {
                auto triples = triples_from_json(row.at("triples"), line_no);
                graph_refs[row["graph_id"].get<std::string>()] =
                    std::make_shared<KnowledgeGraph>(std::move(triples));
                continue;
            }
            QASample sample;
            for (const char* field :
                 {"sample_id", "question", "anchor_entities", "gold_answers"}) {
                if (!row.contains(field))
                    throw LoadError("missing field \"" + std::string(field) +
                                        "\" at line " + std::to_string(line_no),
                                    line_no);
            }
            sample.sample_id = row["sample_id"].get<std::string>();
            sample.question = row["question"].get<std::string>();
            sample.anchor_entities =
                row["anchor_entities"].get<std::vector<std::string>>();
            sample.gold_answers = dedup_normalized(
                row["gold_answers"].get<std::vector<std::string>>());
            if (row.contains("triples")) {
                sample.graph = std::make_shared<KnowledgeGraph>(
                    triples_from_json(row["triples"], line_no));
            } else if (row.contains("graph_ref")) {
                auto it = graph_refs.find(row["graph_ref"].get<std::string>());
                if (it == graph_refs.end())
                    throw LoadError("sample \"" + sample.sample_id +
                                        "\": unknown graph_ref",
                                    line_no);
                sample.graph = it->second;
            } else {
                throw LoadError("sample \"" + sample.sample_id +
                                    "\": needs triples or graph_ref",
                                line_no);
            }
            if (sample.anchor_entities.empty())
                throw LoadError("sample \"" + sample.sample_id +
                                    "\": anchor_entities empty",
                                line_no);
            if (sample.gold_answers.empty())
                throw LoadError("sample \"" + sample.sample_id +
                                    "\": gold_answers empty",
                                line_no);
            for (const std::string& a : sample.anchor_entities) {
                if (!sample.graph->has_entity(a))
                    throw LoadError("sample \"" + sample.sample_id +
                                        "\": anchor \"" + a +
                                        "\" not present in graph",
                                    line_no);
            }
            result.samples.push_back(std::move(sample));
        } catch (const LoadError& err) {
            result.errors.push_back(err.what());
        } catch (const json::exception& err) {
            result.errors.push_back("line " + std::to_string(line_no) + ": " +
                                    err.what());
        }
    }
    return result;
}

void serialize_qa_dataset(const std::vector<QASample>& samples,
                          std::ostream& out) {
    for (const QASample& s : samples) {
        json triples = json::array();
        for (const Triple& t : s.graph->triples())
            triples.push_back({t.head, t.relation, t.tail});
        json row{{"sample_id", s.sample_id},
                 {"question", s.question},
                 {"anchor_entities", s.anchor_entities},
                 {"gold_answers", s.gold_answers},
                 {"triples", std::move(triples)}};
        out << row.dump() << '\n';
    }
}

}  // namespace kgr
