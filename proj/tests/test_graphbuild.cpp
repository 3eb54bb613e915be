#include <doctest.h>

#include <nlohmann/json.hpp>

#include "graph_laws.hpp"
#include "oracles.hpp"
#include "rdas/graphbuild.hpp"
#include "rdas/kbstore.hpp"

using namespace rdas;
using namespace rdas::graph;

namespace {

struct Fixture {
  kb::KnowledgeBase kb;
  kb::Subgraph sub;

  Fixture(std::string_view text, std::vector<std::string> seeds, int hops = 3) : kb(kb::parse_kb(text)) {
    std::vector<EntityId> ids;
    for (const auto& s : seeds) ids.push_back(*kb.find_entity(s));
    sub = kb::extract_subgraph(kb, ids, hops);
  }
};

std::size_t node(const ReasoningGraph& g, std::string_view surface) {
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.nodes[i].surface == surface) return i;
  FAIL("no node " << surface);
  return 0;
}

bool has_edge(const ReasoningGraph& g, std::size_t a, std::size_t b) {
  return std::binary_search(g.edges.begin(), g.edges.end(), Edge{a, b});
}

}  // namespace

TEST_SUITE("graphbuild") {

TEST_CASE("one triple becomes a relation-node chain") {
  Fixture f("e1|r2|e2\n", {"e1"});
  const auto g = levi_transform(f.kb, f.sub);
  REQUIRE(g.size() == 3);
  CHECK(g.relation_node_count() == 1);
  CHECK(g.edges.size() == 2);
  CHECK(has_edge(g, node(g, "e1"), node(g, "r2")));
  CHECK(has_edge(g, node(g, "r2"), node(g, "e2")));
  CHECK(g.seeds == std::vector<std::size_t>{node(g, "e1")});
}

TEST_CASE("an entity without triples is a single node") {
  kb::KnowledgeBase kb = kb::parse_kb("a|r|b\n");
  kb::Subgraph sub;
  sub.entities = {*kb.find_entity("a")};
  sub.seeds = sub.entities;
  const auto g = levi_transform(kb, sub);
  CHECK(g.size() == 1);
  CHECK(g.edges.empty());
}

TEST_CASE("per-type relation nodes create paths per-instance nodes do not") {
  Fixture f("a|r|b\nc|r|d\n", {"a", "c"});
  const auto inst = levi_transform(f.kb, f.sub, RelationNodeMode::PerInstance);
  const auto type = levi_transform(f.kb, f.sub, RelationNodeMode::PerType);
  CHECK(inst.size() == 6);
  CHECK(type.size() == 5);
  CHECK(oracle::path_exists(type.size(), type.edges, node(type, "a"), node(type, "d")));
  CHECK_FALSE(oracle::path_exists(inst.size(), inst.edges, node(inst, "a"), node(inst, "d")));
}

TEST_CASE("reversal is symmetric and idempotent") {
  Fixture f("a|r|b\n", {"a"});
  const auto once = add_reverse_edges(levi_transform(f.kb, f.sub));
  CHECK(once.edges.size() == 4);
  CHECK(add_reverse_edges(once).edges.size() == once.edges.size());
}

TEST_CASE("hop distances along a two-triple chain") {
  Fixture f("e0|r1|e1\ne1|r2|e2\n", {"e0"});
  const auto layered = compute_hop_distances(add_reverse_edges(levi_transform(f.kb, f.sub)));
  const auto& g = layered.graph;
  CHECK(layered.dropped == 0);
  CHECK(g.hops[node(g, "e0")] == 0);
  CHECK(g.hops[node(g, "r1")] == 1);
  CHECK(g.hops[node(g, "e1")] == 2);
  CHECK(g.hops[node(g, "r2")] == 3);
  CHECK(g.hops[node(g, "e2")] == 4);
}

TEST_CASE("unreachable nodes are dropped and counted") {
  kb::KnowledgeBase kb = kb::parse_kb("a|r|b\nc|s|d\n");
  kb::Subgraph sub;
  sub.entities = {*kb.find_entity("a"), *kb.find_entity("b"), *kb.find_entity("c")};
  sub.triples = {make_id<TripleId>(0)};
  sub.seeds = {*kb.find_entity("a")};
  const auto layered = compute_hop_distances(add_reverse_edges(levi_transform(kb, sub)));
  CHECK(layered.dropped == 1);
  CHECK(layered.graph.size() == 3);
}

TEST_CASE("pruning keeps only outward and same-layer edges") {
  Fixture f("e0|r|e1\n", {"e0"});
  const auto layered = compute_hop_distances(add_reverse_edges(levi_transform(f.kb, f.sub)));
  const auto pruned = prune_inside_edges(layered.graph);
  const auto& g = pruned;
  CHECK(g.edges == std::vector<Edge>{{node(g, "e0"), node(g, "r")}, {node(g, "r"), node(g, "e1")}});

  // Two seeds joined by one triple: both endpoints at layer 0, relation at 1.
  Fixture two("a|r|b\n", {"a", "b"});
  const auto built = build_reasoning_graph(two.kb, two.sub);
  CHECK(built.graph.edges.size() == 2);
  for (const auto& e : built.graph.edges) CHECK(built.graph.hops[e.dst] > built.graph.hops[e.src]);
}

TEST_CASE("same-layer edges survive in both directions") {
  // b and c both sit one hop from a, so the b-c edge stays inside a layer.
  kb::KnowledgeBase kb = kb::parse_kb("a|r1|b\na|r1|c\nb|r2|c\n");
  kb::Subgraph sub = kb::extract_subgraph(kb, std::vector<EntityId>{*kb.find_entity("a")}, 1);
  BuildOptions opt;
  opt.relation_nodes = false;
  const auto built = build_reasoning_graph(kb, sub, opt);
  const auto& g = built.graph;
  CHECK(has_edge(g, node(g, "b"), node(g, "c")));
  CHECK(has_edge(g, node(g, "c"), node(g, "b")));
}

TEST_CASE("adjacency lists predecessors with in-degree normalisation") {
  Fixture f("e0|r|e1\n", {"e0"});
  const auto built = build_reasoning_graph(f.kb, f.sub);
  const auto& g = built.graph;
  const auto& adj = built.adjacency;
  CHECK(adj.predecessors[node(g, "e0")].empty());
  CHECK(adj.norm[node(g, "e0")] == 1.0);
  CHECK(adj.predecessors[node(g, "r")] == std::vector<std::size_t>{node(g, "e0")});
  CHECK(adj.predecessors[node(g, "e1")] == std::vector<std::size_t>{node(g, "r")});

  ReasoningGraph star;
  star.nodes.resize(4);
  star.hops = {0, 0, 0, 1};
  star.edges = {{0, 3}, {1, 3}, {2, 3}};
  const auto view = build_adjacency(star);
  CHECK(view.norm[3] == 3.0);
  const auto mix = view.mixing();
  REQUIRE(mix.rows[3].size() == 3);
  CHECK(mix.rows[3][0].weight == doctest::Approx(1.0 / 3));
  const auto constant = build_adjacency(star, {NormPolicy::Kind::Constant, 2.0});
  CHECK(constant.norm[3] == 2.0);
}

TEST_CASE("build options") {
  Fixture f("a|r|b\n", {"a"});
  SUBCASE("defaults give a three-node chain") {
    const auto b = build_reasoning_graph(f.kb, f.sub);
    CHECK(b.graph.size() == 3);
    CHECK(b.graph.edges.size() == 2);
  }
  SUBCASE("no relation nodes") {
    BuildOptions opt;
    opt.relation_nodes = false;
    const auto b = build_reasoning_graph(f.kb, f.sub, opt);
    CHECK(b.graph.size() == 2);
    CHECK(b.graph.relation_node_count() == 0);
    CHECK(b.graph.edges == std::vector<Edge>{{node(b.graph, "a"), node(b.graph, "b")}});
  }
  SUBCASE("no direction keeps both directions") {
    BuildOptions opt;
    opt.direction = false;
    const auto b = build_reasoning_graph(f.kb, f.sub, opt);
    CHECK(b.graph.size() == 3);
    CHECK(b.graph.edges.size() == 4);
  }
}

TEST_CASE("graph dump formats") {
  Fixture f("a \"x\"|r|b\n", {"a \"x\""});
  const auto b = build_reasoning_graph(f.kb, f.sub);
  const auto j = nlohmann::json::parse(to_json(b.graph));
  REQUIRE(j["nodes"].size() == 3);
  CHECK(j["nodes"][0].contains("hop"));
  CHECK(j["edges"].size() == 2);
  CHECK(j["seeds"].size() == 1);
  const auto dot = to_dot(b.graph);
  CHECK(dot.find("digraph") != std::string::npos);
  CHECK(dot.find("\\\"x\\\"") != std::string::npos);
}

TEST_CASE("graph laws on random subgraphs") {
  const auto report = laws::run(200, 21);
  CHECK(report.graphs == 200);
  CHECK_MESSAGE(report.failures == 0, report.first_failure);
}

}  // TEST_SUITE
