#include "spmem/semantic_graph.hpp"

#include <algorithm>
#include <limits>
#include <queue>
#include <string>

namespace spmem {

namespace {
constexpr std::uint64_t kNodeSeedTag = 0x4e4f4445ULL;
}

double traversal_weight(double alpha, double beta, const Position& from, const Position& to, double c_instr) {
    return alpha * distance(from, to) + beta * c_instr;
}

SemanticGraph::SemanticGraph(const EngineConfig& cfg) : cfg_(cfg) {}

ObserveResult SemanticGraph::observe(std::span<const double> v, const Position& p, double c_instr,
                                     const RevBlockParams& params, bool force_create) {
    require_dim("v", v, cfg_.d);
    if (!(c_instr >= 0.0)) throw Error(ErrorCode::RangeError, "c_instr must be >= 0");

    std::optional<NodeId> best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_) {
        const double dist = l2_distance(v, n.descriptor);
        if (dist < best_dist) {
            best_dist = dist;
            best = n.id;
        }
    }

    ObserveResult result;
    if (!best || best_dist > cfg_.effective_delta() || force_create) {
        GraphNode node;
        node.id = nodes_.size();
        node.position = p;
        node.descriptor.assign(v.begin(), v.end());
        node.token = TokenChain::fresh(cfg_.d, mix_seed(mix_seed(cfg_.rng_seed, kNodeSeedTag), node.id));
        node.visit_count = 1;
        nodes_.push_back(std::move(node));
        out_.emplace_back();
        result = {nodes_.back().id, true};
    } else {
        GraphNode& node = nodes_[*best];
        ++node.visit_count;
        const double inv = 1.0 / static_cast<double>(node.visit_count);
        for (std::size_t i = 0; i < node.descriptor.size(); ++i) node.descriptor[i] += (v[i] - node.descriptor[i]) * inv;
        result = {node.id, false};
    }

    nodes_[result.node].token.write(params, v);

    if (current_ && *current_ != result.node) {
        const double w = traversal_weight(cfg_.alpha_w, cfg_.beta_w, nodes_[*current_].position, p, c_instr);
        record_edge(*current_, result.node, w);
    }
    current_ = result.node;
    return result;
}

void SemanticGraph::record_edge(NodeId from, NodeId to, double w) {
    if (from >= nodes_.size() || to >= nodes_.size()) throw Error(ErrorCode::NotFound, "edge endpoint missing");
    if (!(w >= 0.0)) throw Error(ErrorCode::RangeError, "edge weight must be >= 0");
    auto [it, inserted] = edges_.try_emplace({from, to}, GraphEdge{from, to, w, 1});
    if (inserted) {
        auto& adj = out_[from];
        adj.insert(std::upper_bound(adj.begin(), adj.end(), to), to);
        return;
    }
    GraphEdge& e = it->second;
    ++e.observation_count;
    e.weight += (w - e.weight) / static_cast<double>(e.observation_count);
}

std::optional<PathResult> SemanticGraph::shortest_path(NodeId src, NodeId dst) const {
    if (src >= nodes_.size()) throw Error(ErrorCode::NotFound, "unknown node " + std::to_string(src));
    if (dst >= nodes_.size()) throw Error(ErrorCode::NotFound, "unknown node " + std::to_string(dst));

    constexpr double kInf = std::numeric_limits<double>::infinity();
    constexpr NodeId kNone = std::numeric_limits<NodeId>::max();
    std::vector<double> dist(nodes_.size(), kInf);
    std::vector<NodeId> prev(nodes_.size(), kNone);
    std::vector<bool> done(nodes_.size(), false);
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[src] = 0.0;
    queue.emplace(0.0, src);
    while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (done[u]) continue;
        done[u] = true;
        if (u == dst) break;
        for (NodeId w : out_[u]) {
            const double cand = d + edges_.at({u, w}).weight;
            // Equal-cost ties go to the smaller predecessor id.
            if (cand < dist[w] || (cand == dist[w] && !done[w] && u < prev[w])) {
                dist[w] = cand;
                prev[w] = u;
                queue.emplace(cand, w);
            }
        }
    }
    if (dist[dst] == kInf) return std::nullopt;

    PathResult result;
    result.cost = dist[dst];
    for (NodeId at = dst; at != kNone; at = prev[at]) {
        result.nodes.push_back(at);
        if (at == src) break;
    }
    std::reverse(result.nodes.begin(), result.nodes.end());
    return result;
}

std::vector<const TokenChain*> SemanticGraph::node_tokens_along(const std::vector<NodeId>& path) const {
    std::vector<const TokenChain*> tokens;
    tokens.reserve(path.size());
    for (NodeId id : path) {
        if (id >= nodes_.size()) throw Error(ErrorCode::NotFound, "unknown node " + std::to_string(id));
        tokens.push_back(&nodes_[id].token);
    }
    return tokens;
}

const GraphNode* SemanticGraph::node(NodeId id) const { return id < nodes_.size() ? &nodes_[id] : nullptr; }

const GraphEdge* SemanticGraph::edge(NodeId from, NodeId to) const {
    const auto it = edges_.find({from, to});
    return it == edges_.end() ? nullptr : &it->second;
}

std::vector<GraphEdge> SemanticGraph::edges() const {
    std::vector<GraphEdge> list;
    list.reserve(edges_.size());
    for (const auto& [key, e] : edges_) list.push_back(e);
    return list;
}

void SemanticGraph::restore_node(GraphNode node) {
    if (node.id != nodes_.size()) throw Error(ErrorCode::ParseError, "graph nodes must be restored in id order");
    nodes_.push_back(std::move(node));
    out_.emplace_back();
}

void SemanticGraph::restore_edge(const GraphEdge& e) {
    if (e.from >= nodes_.size() || e.to >= nodes_.size()) throw Error(ErrorCode::NotFound, "edge endpoint missing");
    if (!edges_.emplace(std::make_pair(e.from, e.to), e).second) {
        throw Error(ErrorCode::DuplicateId, "duplicate edge");
    }
    auto& adj = out_[e.from];
    adj.insert(std::upper_bound(adj.begin(), adj.end(), e.to), e.to);
}

void SemanticGraph::restore_current(std::optional<NodeId> current) {
    if (current && *current >= nodes_.size()) throw Error(ErrorCode::NotFound, "current node missing");
    current_ = current;
}

}  // namespace spmem
