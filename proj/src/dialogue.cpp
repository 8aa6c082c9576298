#include "kgr/dialogue.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>
#include <stdexcept>

namespace kgr {

std::string default_server_instruction() {
    return
        "If you encounter a KG-related error, read the error message "
        "carefully and correct your query.\n"
        "Use exactly these query functions:\n"
        "- get_tail_relations(entity) : Returns relations where the entity "
        "is the subject/head.\n"
        "- get_head_relations(entity) : Returns relations where the entity "
        "is the object/tail.\n"
        "- get_tail_entities(entity, relation) : Returns entities connected "
        "to the given entity by the specified relation.\n"
        "- get_head_entities(entity, relation) : Returns entities from which "
        "the given entity is connected by the specified relation.";
}

std::string build_initial_prompt(const std::string& question, int max_turns,
                                 const std::string& server_instruction) {
    if (question.empty())
        throw std::invalid_argument("build_initial_prompt: empty question");
    if (max_turns < 1)
        throw std::invalid_argument("build_initial_prompt: max_turns < 1");
    std::string p =
        "You are a helpful assistant. Answer the given question. You can "
        "query from knowledge base provided to you to answer the question. "
        "You can query knowledge up to " +
        std::to_string(max_turns) +
        " times. You must first conduct reasoning inside "
        "<think>...</think>. If you need to query knowledge, you can set a "
        "query statement between <kg-query>...</kg-query> to query from "
        "knowledge base after <think>...</think>. When you have the final "
        "answer, you can output the answer inside <answer>...</answer>.\n"
        "KG Query Server Instruction : [" +
        server_instruction +
        "]\n"
        "Question: " +
        question +
        ".\n"
        "Assistant:";
    return p;
}

namespace {

struct Block {
    size_t begin = std::string::npos;  // position of the opening tag
    std::string content;
};

// First well-formed <tag>...</tag> block plus the total count of openers.
std::pair<std::optional<Block>, size_t> find_block(const std::string& text,
                                                   const std::string& tag) {
    std::string open = "<" + tag + ">";
    std::string close = "</" + tag + ">";
    size_t count = 0;
    std::optional<Block> first;
    size_t pos = 0;
    while ((pos = text.find(open, pos)) != std::string::npos) {
        ++count;
        if (!first) {
            size_t end = text.find(close, pos + open.size());
            if (end != std::string::npos) {
                first = Block{pos,
                              text.substr(pos + open.size(),
                                          end - pos - open.size())};
            } else {
                first = Block{pos, text.substr(pos + open.size())};
            }
        }
        pos += open.size();
    }
    return {first, count};
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string strip_quotes(std::string s) {
    if (s.size() >= 2 &&
        ((s.front() == '"' && s.back() == '"') ||
         (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

// Parses name("arg1"[, "arg2"]); quotes optional, whitespace tolerated.
// Anything that fails call-shape parsing keeps the raw text as the name so
// the server can reject it with a corrective message.
RetrievalAction parse_call(const std::string& raw) {
    RetrievalAction action;
    std::string body = trim(raw);
    size_t open = body.find('(');
    size_t close = body.rfind(')');
    if (open == std::string::npos || close == std::string::npos ||
        close < open) {
        action.name = body;
        return action;
    }
    action.name = trim(body.substr(0, open));
    std::string args = body.substr(open + 1, close - open - 1);
    if (!trim(args).empty()) {
        // split on top-level commas outside quotes
        std::string cur;
        char quote = 0;
        for (char c : args) {
            if (quote) {
                if (c == quote) quote = 0;
                cur.push_back(c);
            } else if (c == '"' || c == '\'') {
                quote = c;
                cur.push_back(c);
            } else if (c == ',') {
                action.args.push_back(strip_quotes(trim(cur)));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        action.args.push_back(strip_quotes(trim(cur)));
    }
    return action;
}

bool known_tag(const std::string& name) {
    return name == "think" || name == "kg-query" || name == "answer";
}

}  // namespace

ParsedTurn parse_message(const std::string& text) {
    ParsedTurn turn;
    auto [think, think_count] = find_block(text, "think");
    auto [query, query_count] = find_block(text, "kg-query");
    auto [answer, answer_count] = find_block(text, "answer");

    if (think) turn.think_text = trim(think->content);
    if (answer) {
        turn.answer_text = trim(answer->content);
    } else if (query) {
        turn.action = parse_call(query->content);
    }

    if (!think) turn.violations.push_back(violation::kMissingThink);
    if (think_count > 1) turn.violations.push_back(violation::kMultipleThink);
    size_t action_blocks = query_count + answer_count;
    if (action_blocks == 0)
        turn.violations.push_back(violation::kMissingAction);
    if (action_blocks > 1)
        turn.violations.push_back(violation::kMultipleActions);
    if (think && action_blocks >= 1) {
        size_t action_pos = std::min(query ? query->begin : std::string::npos,
                                     answer ? answer->begin : std::string::npos);
        if (think->begin > action_pos)
            turn.violations.push_back(violation::kThinkAfterAction);
    }
    static const std::regex tag_re("</?([A-Za-z][A-Za-z0-9_-]*)>");
    auto begin = std::sregex_iterator(text.begin(), text.end(), tag_re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        if (!known_tag((*it)[1].str())) {
            turn.violations.push_back(violation::kUnknownTag);
            break;
        }
    }
    turn.format_valid = turn.violations.empty();
    return turn;
}

namespace {

// Insertion-based tag repair: unmatched closers gain an opener, unclosed
// openers are closed at the end.
std::string balance_tags(const std::string& payload) {
    static const std::regex tag_re("</?([A-Za-z][A-Za-z0-9_-]*)>");
    std::string out;
    std::vector<std::string> stack;
    size_t last = 0;
    auto begin = std::sregex_iterator(payload.begin(), payload.end(), tag_re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const std::smatch& m = *it;
        out.append(payload, last, m.position() - last);
        last = m.position() + m.length();
        std::string tag = m.str();
        std::string name = m[1].str();
        bool closer = tag.size() > 1 && tag[1] == '/';
        if (!closer) {
            stack.push_back(name);
            out += tag;
        } else {
            auto found = std::find(stack.rbegin(), stack.rend(), name);
            if (found == stack.rend()) {
                out += "<" + name + ">" + tag;
            } else {
                while (stack.back() != name) {
                    out += "</" + stack.back() + ">";
                    stack.pop_back();
                }
                stack.pop_back();
                out += tag;
            }
        }
    }
    out.append(payload, last, std::string::npos);
    for (auto it = stack.rbegin(); it != stack.rend(); ++it)
        out += "</" + *it + ">";
    return out;
}

}  // namespace

std::string wrap_observation(const Observation& obs) {
    std::string payload = obs.ok
                              ? balance_tags(obs.text)
                              : "<error>" + balance_tags(obs.text) + "</error>";
    return "<information>" + payload + "</information>";
}

AnswerSet extract_answer_set(const std::string& answer_text,
                             const KnowledgeGraph* graph) {
    AnswerSet result;
    result.raw_text = answer_text;
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : answer_text) {
        if (c == ',' || c == '\n') {
            tokens.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    tokens.push_back(cur);
    std::unordered_set<std::string> seen;
    for (const std::string& tok : tokens) {
        std::string normalized = normalize_label(strip_quotes(trim(tok)));
        if (normalized.empty() || !seen.insert(normalized).second) continue;
        result.normalized_entities.push_back(normalized);
        result.resolved_in_kg.push_back(
            graph != nullptr && graph->resolves_normalized(normalized));
    }
    return result;
}

TrajectoryState advance(TrajectoryState state, const std::string& message,
                        const ActionExecutor& executor,
                        const KnowledgeGraph* graph_for_resolution) {
    if (state.terminated)
        throw std::logic_error("advance: trajectory already terminated");
    TurnRecord record;
    record.message = message;
    record.parsed = parse_message(message);
    if (record.parsed.is_answer()) {
        state.predicted_answers = extract_answer_set(
            *record.parsed.answer_text, graph_for_resolution);
        state.records.push_back(std::move(record));
        state.terminated = true;
        return state;
    }
    if (record.parsed.action) {
        record.observation = executor(*record.parsed.action);
    }
    state.records.push_back(std::move(record));
    if (static_cast<int>(state.records.size()) >= state.max_turns) {
        // final-turn safeguard: budget exhausted without an answer
        state.terminated = true;
        state.budget_exhausted = true;
        state.predicted_answers = AnswerSet{};
    } else {
        state.turn_index = static_cast<int>(state.records.size()) + 1;
    }
    return state;
}

}  // namespace kgr
