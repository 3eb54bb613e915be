#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rdas/ids.hpp"
#include "rdas/kbstore.hpp"
#include "rdas/tensor.hpp"

namespace rdas::graph {

enum class NodeKind { Entity, Relation };

struct Node {
  NodeKind kind = NodeKind::Entity;
  /// Entity id for entity nodes; triple id (per-instance) or relation id
  /// (per-type) for relation nodes.
  std::size_t source_id = 0;
  std::string surface;
};

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

inline constexpr int kNoHop = -1;

/// Directed graph of entity and relation nodes with per-node hop distances
/// from the seed set (kNoHop until layered).
struct ReasoningGraph {
  std::vector<Node> nodes;
  std::vector<Edge> edges;  // sorted, unique
  std::vector<int> hops;
  std::vector<std::size_t> seeds;  // sorted node indices
  std::unordered_map<EntityId, std::size_t> entity_nodes;

  std::size_t size() const noexcept { return nodes.size(); }
  std::size_t relation_node_count() const;
  bool layered() const noexcept { return hops.size() == nodes.size(); }
};

enum class RelationNodeMode { PerInstance, PerType };

/// Replace every triple with a relation node between its endpoints. In
/// per-instance mode each triple gets its own node; in per-type mode all
/// triples of a relation share one node.
ReasoningGraph levi_transform(const kb::KnowledgeBase& kb, const kb::Subgraph& sub,
                              RelationNodeMode mode = RelationNodeMode::PerInstance);

/// Entity-only graph: one edge subject -> object per connected pair.
ReasoningGraph entity_graph(const kb::KnowledgeBase& kb, const kb::Subgraph& sub);

/// Make the edge set symmetric.
ReasoningGraph add_reverse_edges(ReasoningGraph g);

struct Layering {
  ReasoningGraph graph;  // unreachable nodes removed, hops filled
  std::size_t dropped = 0;
};

/// Multi-source BFS from the seeds along the graph's edges. Nodes that no
/// seed reaches are removed and counted.
Layering compute_hop_distances(const ReasoningGraph& g);

/// Keep (u, v) iff hop(v) >= hop(u): drops inside-directed edges, keeps
/// outside-directed and same-layer edges.
ReasoningGraph prune_inside_edges(ReasoningGraph g);

struct NormPolicy {
  enum class Kind { InDegree, Constant } kind = Kind::InDegree;
  double constant = 1.0;
};

/// Predecessor lists (messages flow src -> dst) and normalisation constants.
struct AdjacencyView {
  std::vector<std::vector<std::size_t>> predecessors;
  std::vector<double> norm;

  /// out[v] = (1 / c_v) * sum of in[j] over predecessors j.
  SparseRows mixing() const;
};

AdjacencyView build_adjacency(const ReasoningGraph& g, NormPolicy policy = {});

struct BuildOptions {
  bool relation_nodes = true;
  bool direction = true;
  RelationNodeMode mode = RelationNodeMode::PerInstance;
  NormPolicy norm;
};

struct BuiltGraph {
  /// Bidirectional, layered graph before pruning.
  ReasoningGraph unpruned;
  /// Graph the model runs on (pruned unless direction is disabled).
  ReasoningGraph graph;
  AdjacencyView adjacency;
  std::size_t dropped = 0;
};

BuiltGraph build_reasoning_graph(const kb::KnowledgeBase& kb, const kb::Subgraph& sub,
                                 const BuildOptions& options = {});

/// JSON object {nodes:[{idx,kind,surface,hop}], edges:[[src,dst]...], seeds:[...]}.
std::string to_json(const ReasoningGraph& g);
std::string to_dot(const ReasoningGraph& g, const std::string& name = "reasoning_graph");

}  // namespace rdas::graph
