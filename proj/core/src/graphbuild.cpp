#include "rdas/graphbuild.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rdas/error.hpp"

namespace rdas::graph {

namespace {

void normalize_edges(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

ReasoningGraph entity_nodes_for(const kb::KnowledgeBase& kb, const kb::Subgraph& sub) {
  if (sub.entities.empty()) throw DataError("reasoning graph: empty subgraph");
  ReasoningGraph g;
  g.nodes.reserve(sub.entities.size() + sub.triples.size());
  for (EntityId e : sub.entities) {
    g.entity_nodes.emplace(e, g.nodes.size());
    g.nodes.push_back({NodeKind::Entity, index_of(e), kb.entity_name(e)});
  }
  for (EntityId s : sub.seeds) g.seeds.push_back(g.entity_nodes.at(s));
  std::sort(g.seeds.begin(), g.seeds.end());
  return g;
}

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::size_t ReasoningGraph::relation_node_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.kind == NodeKind::Relation; }));
}

ReasoningGraph levi_transform(const kb::KnowledgeBase& kb, const kb::Subgraph& sub, RelationNodeMode mode) {
  ReasoningGraph g = entity_nodes_for(kb, sub);
  std::map<RelationId, std::size_t> shared;
  for (TripleId t : sub.triples) {
    const kb::Triple& tr = kb.triple(t);
    std::size_t rel_node = 0;
    if (mode == RelationNodeMode::PerInstance) {
      rel_node = g.nodes.size();
      g.nodes.push_back({NodeKind::Relation, index_of(t), kb.relation_name(tr.relation)});
    } else {
      auto [it, inserted] = shared.try_emplace(tr.relation, g.nodes.size());
      if (inserted) g.nodes.push_back({NodeKind::Relation, index_of(tr.relation), kb.relation_name(tr.relation)});
      rel_node = it->second;
    }
    g.edges.push_back({g.entity_nodes.at(tr.subject), rel_node});
    g.edges.push_back({rel_node, g.entity_nodes.at(tr.object)});
  }
  normalize_edges(g.edges);
  return g;
}

ReasoningGraph entity_graph(const kb::KnowledgeBase& kb, const kb::Subgraph& sub) {
  ReasoningGraph g = entity_nodes_for(kb, sub);
  for (TripleId t : sub.triples) {
    const kb::Triple& tr = kb.triple(t);
    if (tr.subject == tr.object) continue;
    g.edges.push_back({g.entity_nodes.at(tr.subject), g.entity_nodes.at(tr.object)});
  }
  normalize_edges(g.edges);
  return g;
}

ReasoningGraph add_reverse_edges(ReasoningGraph g) {
  const std::size_t n = g.edges.size();
  for (std::size_t i = 0; i < n; ++i) g.edges.push_back({g.edges[i].dst, g.edges[i].src});
  normalize_edges(g.edges);
  return g;
}

Layering compute_hop_distances(const ReasoningGraph& g) {
  if (g.seeds.empty()) throw DataError("compute_hop_distances: no seed nodes");
  std::vector<std::vector<std::size_t>> out(g.size());
  for (const Edge& e : g.edges) out[e.src].push_back(e.dst);

  std::vector<int> dist(g.size(), kNoHop);
  std::deque<std::size_t> queue;
  for (std::size_t s : g.seeds) {
    if (s >= g.size()) throw DataError("compute_hop_distances: seed node out of range");
    if (dist[s] == kNoHop) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : out[u]) {
      if (dist[v] == kNoHop) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }

  Layering result;
  ReasoningGraph& kept = result.graph;
  std::vector<std::size_t> remap(g.size(), SIZE_MAX);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (dist[i] == kNoHop) {
      ++result.dropped;
      continue;
    }
    remap[i] = kept.nodes.size();
    kept.nodes.push_back(g.nodes[i]);
    kept.hops.push_back(dist[i]);
  }
  for (const Edge& e : g.edges) {
    if (remap[e.src] != SIZE_MAX && remap[e.dst] != SIZE_MAX) kept.edges.push_back({remap[e.src], remap[e.dst]});
  }
  normalize_edges(kept.edges);
  for (std::size_t s : g.seeds) kept.seeds.push_back(remap[s]);
  std::sort(kept.seeds.begin(), kept.seeds.end());
  kept.seeds.erase(std::unique(kept.seeds.begin(), kept.seeds.end()), kept.seeds.end());
  for (const auto& [entity, idx] : g.entity_nodes) {
    if (remap[idx] != SIZE_MAX) kept.entity_nodes.emplace(entity, remap[idx]);
  }
  return result;
}

ReasoningGraph prune_inside_edges(ReasoningGraph g) {
  if (!g.layered()) throw std::logic_error("prune_inside_edges: graph has no hop distances");
  std::erase_if(g.edges, [&](const Edge& e) { return g.hops[e.dst] < g.hops[e.src]; });
  return g;
}

SparseRows AdjacencyView::mixing() const {
  SparseRows mix;
  mix.input_rows = predecessors.size();
  mix.rows.resize(predecessors.size());
  for (std::size_t v = 0; v < predecessors.size(); ++v) {
    const double w = 1.0 / norm[v];
    for (std::size_t j : predecessors[v]) mix.rows[v].push_back({j, w});
  }
  return mix;
}

AdjacencyView build_adjacency(const ReasoningGraph& g, NormPolicy policy) {
  AdjacencyView adj;
  adj.predecessors.resize(g.size());
  for (const Edge& e : g.edges) adj.predecessors[e.dst].push_back(e.src);
  adj.norm.resize(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    auto& preds = adj.predecessors[v];
    std::sort(preds.begin(), preds.end());
    adj.norm[v] = policy.kind == NormPolicy::Kind::InDegree
                      ? std::max<double>(1.0, static_cast<double>(preds.size()))
                      : policy.constant;
  }
  return adj;
}

BuiltGraph build_reasoning_graph(const kb::KnowledgeBase& kb, const kb::Subgraph& sub,
                                 const BuildOptions& options) {
  ReasoningGraph base = options.relation_nodes ? levi_transform(kb, sub, options.mode) : entity_graph(kb, sub);
  Layering layered = compute_hop_distances(add_reverse_edges(std::move(base)));
  BuiltGraph built;
  built.dropped = layered.dropped;
  built.unpruned = std::move(layered.graph);
  built.graph = options.direction ? prune_inside_edges(built.unpruned) : built.unpruned;
  built.adjacency = build_adjacency(built.graph, options.norm);
  return built;
}

std::string to_json(const ReasoningGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (std::size_t i = 0; i < g.size(); ++i) {
    nodes.push_back({{"idx", i},
                     {"kind", g.nodes[i].kind == NodeKind::Entity ? "entity" : "relation"},
                     {"surface", g.nodes[i].surface},
                     {"hop", g.layered() ? g.hops[i] : kNoHop}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges) edges.push_back({e.src, e.dst});
  return nlohmann::json{{"nodes", nodes}, {"edges", edges}, {"seeds", g.seeds}}.dump();
}

std::string to_dot(const ReasoningGraph& g, const std::string& name) {
  std::ostringstream os;
  os << "digraph " << name << " {\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool entity = g.nodes[i].kind == NodeKind::Entity;
    os << "  n" << i << " [label=\"" << dot_escape(g.nodes[i].surface);
    if (g.layered()) os << "\\nhop " << g.hops[i];
    os << "\", shape=" << (entity ? "ellipse" : "box");
    if (std::binary_search(g.seeds.begin(), g.seeds.end(), i)) os << ", style=bold";
    os << "];\n";
  }
  for (const Edge& e : g.edges) os << "  n" << e.src << " -> n" << e.dst << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace rdas::graph
