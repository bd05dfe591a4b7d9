#pragma once
// Directed landmark graph: threshold-based node creation, running-mean edge
// weights and descriptors, Dijkstra routing.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "spmem/core.hpp"
#include "spmem/reversible.hpp"

namespace spmem {

using NodeId = std::uint64_t;

struct GraphNode {
    NodeId id = 0;
    Position position;      // normalized frame, position at creation
    Embedding descriptor;   // running mean of matched observations
    TokenChain token;
    std::uint32_t visit_count = 0;
};

struct GraphEdge {
    NodeId from = 0;
    NodeId to = 0;
    double weight = 0.0;
    std::uint32_t observation_count = 0;
};

struct ObserveResult {
    NodeId node = 0;
    bool created = false;
};

struct PathResult {
    std::vector<NodeId> nodes;
    double cost = 0.0;
};

class SemanticGraph {
public:
    explicit SemanticGraph(const EngineConfig& cfg);

    // Matches v against every descriptor (Euclidean). Creates a node when the
    // graph is empty, the closest descriptor is farther than delta, or
    // force_create is set. Applies the reversible write to the node token and
    // records the edge from the previous current node.
    ObserveResult observe(std::span<const double> v, const Position& p, double c_instr,
                          const RevBlockParams& params, bool force_create = false);

    // Minimal-weight directed path. nullopt when dst is unreachable.
    // Throws Error(NotFound) for unknown ids.
    std::optional<PathResult> shortest_path(NodeId src, NodeId dst) const;

    // Throws Error(NotFound) on a missing id.
    std::vector<const TokenChain*> node_tokens_along(const std::vector<NodeId>& path) const;

    const GraphNode* node(NodeId id) const;
    const GraphEdge* edge(NodeId from, NodeId to) const;
    std::optional<NodeId> current() const { return current_; }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<GraphNode>& nodes() const { return nodes_; }
    // Edges ordered by (from, to).
    std::vector<GraphEdge> edges() const;

    // Adds an edge observation directly (w is the observed traversal weight).
    void record_edge(NodeId from, NodeId to, double w);

    // Persistence hooks. Nodes must arrive with ids 0, 1, 2, ... in order.
    void restore_node(GraphNode node);
    void restore_edge(const GraphEdge& edge);
    void restore_current(std::optional<NodeId> current);

private:
    EngineConfig cfg_;
    std::vector<GraphNode> nodes_;  // index == id
    std::map<std::pair<NodeId, NodeId>, GraphEdge> edges_;
    std::vector<std::vector<NodeId>> out_;  // adjacency, sorted by target id
    std::optional<NodeId> current_;
};

// Edge weight for one traversal.
double traversal_weight(double alpha, double beta, const Position& from, const Position& to, double c_instr);

}  // namespace spmem
