#include <doctest.h>

#include <random>
#include <sstream>

#include "kgr/graph.hpp"
#include "test_util.hpp"

using namespace kgr;

TEST_CASE("load_triples tsv builds the fixture graph") {
    std::istringstream in(
        "Chicago\tlocated_in_state\tIllinois\n"
        "Illinois\tcapital\tSpringfield\n");
    KnowledgeGraph g = load_triples(in, TripleFormat::Tsv);
    CHECK(g.triple_count() == 2);
    CHECK(g.entity_count() == 3);
    CHECK(g.relation_count() == 2);
    CHECK(g.has_entity("Chicago"));
    CHECK(g.has_relation("capital"));
}

TEST_CASE("load_triples empty stream yields the empty graph") {
    std::istringstream in("");
    KnowledgeGraph g = load_triples(in, TripleFormat::Tsv);
    CHECK(g.triple_count() == 0);
    CHECK(g.entity_count() == 0);
    CHECK(g.relation_count() == 0);
}

TEST_CASE("duplicate rows collapse to one triple") {
    std::istringstream in("a\tr\tb\na\tr\tb\nc\tr\td\n");
    CHECK(load_triples(in, TripleFormat::Tsv).triple_count() == 2);
}

TEST_CASE("malformed tsv row reports line number") {
    std::istringstream in("a\tr\tb\nbroken row\n");
    try {
        load_triples(in, TripleFormat::Tsv);
        FAIL("expected LoadError");
    } catch (const LoadError& err) {
        CHECK(err.line() == 2);
    }
}

TEST_CASE("empty field rejected") {
    std::istringstream in("a\t\tb\n");
    CHECK_THROWS_AS(load_triples(in, TripleFormat::Tsv), LoadError);
}

TEST_CASE("load_triples jsonl") {
    std::istringstream in(
        "{\"head\":\"a\",\"relation\":\"r\",\"tail\":\"b\"}\n"
        "{\"head\":\"b\",\"relation\":\"r\",\"tail\":\"a\"}\n");
    KnowledgeGraph g = load_triples(in, TripleFormat::Jsonl);
    CHECK(g.triple_count() == 2);
    CHECK(g.relation_count() == 1);
}

TEST_CASE("indexes reconstruct the triple set exactly") {
    std::mt19937_64 rng(7);
    KnowledgeGraph g = kgr::testutil::random_graph(rng);
    std::set<Triple> from_head, from_tail, expected(g.triples().begin(),
                                                    g.triples().end());
    for (const std::string& e : g.entities_sorted()) {
        for (const auto& [rel, tail] : g.outgoing(e))
            from_head.insert({e, rel, tail});
        for (const auto& [rel, head] : g.incoming(e))
            from_tail.insert({head, rel, e});
    }
    CHECK(from_head == expected);
    CHECK(from_tail == expected);
}

TEST_CASE("serialize/load round-trip preserves the triple set") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        kgr::testutil::RandomGraphParams params;
        params.max_triples = 10000;
        KnowledgeGraph g = kgr::testutil::random_graph(rng, params);
        for (TripleFormat fmt : {TripleFormat::Tsv, TripleFormat::Jsonl}) {
            std::stringstream buf;
            serialize_triples(g, buf, fmt);
            KnowledgeGraph reparsed = load_triples(buf, fmt);
            CHECK(reparsed.triples() == g.triples());
        }
    }
}

namespace {

// Independent oracle: undirected BFS by repeated relaxation over the raw
// triple list.
std::set<std::string> brute_force_ball(const std::vector<Triple>& triples,
                                       const std::set<std::string>& seeds,
                                       size_t radius) {
    std::set<std::string> entities;
    for (const Triple& t : triples) {
        entities.insert(t.head);
        entities.insert(t.tail);
    }
    std::set<std::string> ball;
    for (const std::string& s : seeds)
        if (entities.count(s)) ball.insert(s);
    for (size_t step = 0; step < radius; ++step) {
        std::set<std::string> next = ball;
        for (const Triple& t : triples) {
            if (ball.count(t.head)) next.insert(t.tail);
            if (ball.count(t.tail)) next.insert(t.head);
        }
        ball = next;
    }
    return ball;
}

std::set<kgr::Triple> brute_force_subgraph(const std::vector<Triple>& triples,
                                           const std::set<std::string>& seeds,
                                           size_t radius) {
    auto ball = brute_force_ball(triples, seeds, radius);
    std::set<Triple> kept;
    for (const Triple& t : triples)
        if (ball.count(t.head) && ball.count(t.tail)) kept.insert(t);
    return kept;
}

}  // namespace

TEST_CASE("extract_subgraph on the fixture") {
    KnowledgeGraph g = kgr::testutil::fixture_graph();
    SUBCASE("radius 2 from Chicago recovers the full graph") {
        KnowledgeGraph sub = extract_subgraph(g, {"Chicago"}, 2);
        CHECK(sub.triple_count() == 2);
        CHECK(std::set<Triple>(sub.triples().begin(), sub.triples().end()) ==
              brute_force_subgraph(g.triples(), {"Chicago"}, 2));
    }
    SUBCASE("radius 0 on a sink node keeps no triples") {
        CHECK(extract_subgraph(g, {"Springfield"}, 0).triple_count() == 0);
    }
    SUBCASE("two seeds at radius 1 recover the full graph") {
        KnowledgeGraph sub = extract_subgraph(g, {"Chicago", "Springfield"}, 1);
        CHECK(sub.triple_count() == 2);
        CHECK(std::set<Triple>(sub.triples().begin(), sub.triples().end()) ==
              brute_force_subgraph(g.triples(), {"Chicago", "Springfield"}, 1));
    }
    SUBCASE("absent seeds are skipped; all-absent yields the empty graph") {
        CHECK(extract_subgraph(g, {"Nowhere"}, 3).triple_count() == 0);
        CHECK(extract_subgraph(g, {"Nowhere", "Chicago"}, 2).triple_count() == 2);
    }
}

TEST_CASE("extract_subgraph matches the brute-force oracle on random graphs") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 40; ++trial) {
        kgr::testutil::RandomGraphParams params;
        params.max_entities = 30;
        params.max_triples = 80;
        KnowledgeGraph g = kgr::testutil::random_graph(rng, params);
        auto entities = g.entities_sorted();
        std::uniform_int_distribution<size_t> pick(0, entities.size() - 1);
        std::set<std::string> seeds{entities[pick(rng)], entities[pick(rng)]};
        std::uniform_int_distribution<size_t> rad(0, 4);
        size_t radius = rad(rng);
        KnowledgeGraph sub = extract_subgraph(g, seeds, radius);
        CHECK(std::set<Triple>(sub.triples().begin(), sub.triples().end()) ==
              brute_force_subgraph(g.triples(), seeds, radius));
    }
}

TEST_CASE("subgraph monotonicity in radius") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        KnowledgeGraph g = kgr::testutil::random_graph(rng);
        auto entities = g.entities_sorted();
        std::uniform_int_distribution<size_t> pick(0, entities.size() - 1);
        std::set<std::string> seeds{entities[pick(rng)]};
        for (size_t r = 0; r < 3; ++r) {
            auto smaller = extract_subgraph(g, seeds, r).triples();
            auto larger = extract_subgraph(g, seeds, r + 1).triples();
            std::set<Triple> larger_set(larger.begin(), larger.end());
            for (const Triple& t : smaller) CHECK(larger_set.count(t) == 1);
        }
    }
}

TEST_CASE("path preservation: radius length from the start keeps the path") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 30; ++trial) {
        KnowledgeGraph g = kgr::testutil::random_graph(rng);
        ReasoningPath path = kgr::testutil::random_path(g, rng, 4);
        if (path.edges.empty()) continue;
        KnowledgeGraph sub =
            extract_subgraph(g, {path.nodes.front()}, path.length());
        for (size_t i = 0; i < path.edges.size(); ++i) {
            Triple hop{path.nodes[i], path.edges[i], path.nodes[i + 1]};
            CHECK(std::count(sub.triples().begin(), sub.triples().end(), hop) ==
                  1);
        }
    }
}

TEST_CASE("load_qa_dataset") {
    SUBCASE("one valid row") {
        std::istringstream in(
            R"({"sample_id":"s1","question":"q","anchor_entities":["a"],)"
            R"("gold_answers":["b"],"triples":[["a","r","b"]]})"
            "\n");
        QALoadResult result = load_qa_dataset(in);
        REQUIRE(result.samples.size() == 1);
        CHECK(result.errors.empty());
        CHECK(result.samples[0].graph->triple_count() == 1);
    }
    SUBCASE("absent anchor rejects the sample but loading continues") {
        std::istringstream in(
            R"({"sample_id":"bad1","question":"q","anchor_entities":["Chicagoo"],)"
            R"("gold_answers":["b"],"triples":[["a","r","b"]]})"
            "\n"
            R"({"sample_id":"ok1","question":"q","anchor_entities":["a"],)"
            R"("gold_answers":["b"],"triples":[["a","r","b"]]})"
            "\n");
        QALoadResult result = load_qa_dataset(in);
        CHECK(result.samples.size() == 1);
        REQUIRE(result.errors.size() == 1);
        CHECK(result.errors[0].find("bad1") != std::string::npos);
    }
    SUBCASE("missing field is reported") {
        std::istringstream in(R"({"sample_id":"s1","question":"q"})" "\n");
        QALoadResult result = load_qa_dataset(in);
        CHECK(result.samples.empty());
        CHECK(result.errors.size() == 1);
    }
    SUBCASE("rows sharing a graph_ref share one graph value") {
        std::istringstream in(
            R"({"graph_id":"g1","triples":[["a","r","b"]]})"
            "\n"
            R"({"sample_id":"s1","question":"q","anchor_entities":["a"],)"
            R"("gold_answers":["b"],"graph_ref":"g1"})"
            "\n"
            R"({"sample_id":"s2","question":"q","anchor_entities":["b"],)"
            R"("gold_answers":["a"],"graph_ref":"g1"})"
            "\n");
        QALoadResult result = load_qa_dataset(in);
        REQUIRE(result.samples.size() == 2);
        CHECK(result.samples[0].graph.get() == result.samples[1].graph.get());
    }
    SUBCASE("gold answers deduplicate under normalization") {
        std::istringstream in(
            R"({"sample_id":"s1","question":"q","anchor_entities":["a"],)"
            R"("gold_answers":["  B ","b"],"triples":[["a","r","b"]]})"
            "\n");
        QALoadResult result = load_qa_dataset(in);
        REQUIRE(result.samples.size() == 1);
        CHECK(result.samples[0].gold_answers.size() == 1);
    }
}

TEST_CASE("normalize_label") {
    CHECK(normalize_label("  Springfield ") == "springfield");
    CHECK(normalize_label("Goal II:  Living the Dream") ==
          "goal ii: living the dream");
    CHECK(normalize_label("\"quoted\"") == "quoted");
    CHECK(normalize_label("...") == "");
    CHECK(normalize_label("m.03kx9f2") == "m.03kx9f2");
}
