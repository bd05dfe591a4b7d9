#include "doctest.h"

#include <cmath>
#include <functional>
#include <limits>

#include "spmem/semantic_graph.hpp"

using namespace spmem;

namespace {

EngineConfig graph_config(std::size_t d = 4) {
    EngineConfig cfg;
    cfg.d = d;
    cfg.L = 100.0;
    cfg.delta = 1.0;
    return cfg;
}

const RevBlockParams& params4() {
    static const RevBlockParams p = RevBlockParams::random(4, 4, 2, 0.1, 5);
    return p;
}

// Cheapest simple path by exhaustive DFS; +inf when unreachable.
double enumerate_paths(std::size_t n, const std::vector<std::vector<double>>& w, std::size_t src, std::size_t dst) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<bool> on_path(n, false);
    std::function<void(std::size_t, double)> walk = [&](std::size_t at, double cost) {
        if (at == dst) {
            best = std::min(best, cost);
            return;
        }
        on_path[at] = true;
        for (std::size_t next = 0; next < n; ++next) {
            if (!on_path[next] && w[at][next] >= 0.0) walk(next, cost + w[at][next]);
        }
        on_path[at] = false;
    };
    walk(src, 0.0);
    return best;
}

// Nodes only, no edges (observe would link consecutive nodes).
SemanticGraph graph_with_nodes(std::size_t n) {
    SemanticGraph g(graph_config());
    for (std::size_t i = 0; i < n; ++i) {
        GraphNode node;
        node.id = i;
        node.descriptor = Embedding{static_cast<double>(i) * 10, 0, 0, 0};
        node.token = TokenChain::fresh(4, i);
        node.visit_count = 1;
        g.restore_node(std::move(node));
    }
    return g;
}

}  // namespace

TEST_CASE("edge weight formula") {
    CHECK(traversal_weight(1.0, 0.5, {0, 0, 0}, {3, 4, 0}, 2.0) == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(traversal_weight(2.0, 0.0, {1, 1, 1}, {1, 1, 1}, 5.0) == 0.0);
}

TEST_CASE("observe creates, matches and links nodes") {
    EngineConfig cfg = graph_config();
    cfg.alpha_w = 1.0;
    cfg.beta_w = 0.5;
    SemanticGraph g(cfg);

    const auto r0 = g.observe(Embedding{0, 0, 0, 0}, {0, 0, 0}, 0.0, params4());
    CHECK(r0.created);
    CHECK(g.node_count() == 1);
    CHECK(g.current() == r0.node);

    // Within delta: same node, visit count grows, descriptor is the running mean.
    const auto r1 = g.observe(Embedding{0.5, 0, 0, 0}, {0, 0, 0}, 0.0, params4());
    CHECK_FALSE(r1.created);
    CHECK(r1.node == r0.node);
    CHECK(g.node(r0.node)->visit_count == 2);
    CHECK(g.node(r0.node)->descriptor[0] == doctest::Approx(0.25));
    CHECK(g.edge_count() == 0);

    // Far descriptor: new node and an edge from the previous current node.
    const auto r2 = g.observe(Embedding{10, 0, 0, 0}, {3, 4, 0}, 2.0, params4());
    CHECK(r2.created);
    CHECK(g.node_count() == 2);
    const GraphEdge* e = g.edge(r0.node, r2.node);
    REQUIRE(e != nullptr);
    CHECK(e->weight == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(e->observation_count == 1);
    CHECK(g.node(r2.node)->position == Position{3, 4, 0});
    CHECK(g.node(r2.node)->token.depth() == 1);
    CHECK(g.node(r0.node)->token.depth() == 2);
}

TEST_CASE("observe is idempotent on node count for repeated input") {
    SemanticGraph g(graph_config());
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const Embedding v = gaussian_vector(rng, 4, 3.0);
        const Position p{1, 2, 3};
        g.observe(v, p, 0.0, params4());
        const std::size_t before = g.node_count();
        g.observe(v, p, 0.0, params4());
        CHECK(g.node_count() == before);
    }
}

TEST_CASE("force_create always adds a node") {
    SemanticGraph g(graph_config());
    const Embedding v{1, 1, 1, 1};
    g.observe(v, {0, 0, 0}, 0.0, params4());
    const auto r = g.observe(v, {0, 0, 0}, 0.0, params4(), true);
    CHECK(r.created);
    CHECK(g.node_count() == 2);
}

TEST_CASE("descriptors at creation are separated by more than delta") {
    EngineConfig cfg = graph_config(6);
    cfg.delta = 2.0;
    const RevBlockParams params = RevBlockParams::random(6, 6, 1, 0.1, 1);
    SemanticGraph g(cfg);
    Rng rng(21);
    std::vector<Embedding> at_creation;
    for (int t = 0; t < 400; ++t) {
        const Embedding v = gaussian_vector(rng, 6, 1.5);
        // Snapshot before observe: the match test runs against current descriptors.
        std::vector<Embedding> current;
        for (const auto& n : g.nodes()) current.push_back(n.descriptor);
        const auto r = g.observe(v, {0, 0, 0}, 0.0, params);
        if (r.created) {
            for (const auto& d : current) CHECK(l2_distance(v, d) > cfg.delta);
            at_creation.push_back(v);
        } else {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& d : current) best = std::min(best, l2_distance(v, d));
            CHECK(best <= cfg.delta);
        }
    }
    CHECK(at_creation.size() == g.node_count());
}

TEST_CASE("edge weight is the running mean of observed weights") {
    SemanticGraph g = graph_with_nodes(2);
    Rng rng(8);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    std::vector<double> seen;
    for (int t = 0; t < 100; ++t) {
        seen.push_back(u(rng));
        g.record_edge(0, 1, seen.back());
        double mean = 0.0;
        for (double w : seen) mean += w;
        mean /= static_cast<double>(seen.size());
        CHECK(std::abs(g.edge(0, 1)->weight - mean) <= 1e-9);
        CHECK(g.edge(0, 1)->observation_count == seen.size());
    }
    CHECK(g.edge(1, 0) == nullptr);
}

TEST_CASE("shortest path examples") {
    SemanticGraph g = graph_with_nodes(3);
    const auto self = g.shortest_path(1, 1);
    REQUIRE(self);
    CHECK(self->nodes == std::vector<NodeId>{1});
    CHECK(self->cost == 0.0);

    g.record_edge(0, 1, 6.0);
    const auto one = g.shortest_path(0, 1);
    REQUIRE(one);
    CHECK(one->nodes == std::vector<NodeId>{0, 1});
    CHECK(one->cost == 6.0);

    CHECK_FALSE(g.shortest_path(1, 0).has_value());
    CHECK_FALSE(g.shortest_path(0, 2).has_value());
    CHECK_THROWS_AS(g.shortest_path(0, 9), Error);
    try {
        g.shortest_path(7, 0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotFound);
    }
}

TEST_CASE("equal-cost paths resolve to the smaller predecessor id") {
    SemanticGraph g = graph_with_nodes(4);
    g.record_edge(0, 2, 1.0);
    g.record_edge(2, 3, 1.0);
    g.record_edge(0, 1, 1.0);
    g.record_edge(1, 3, 1.0);
    const auto p = g.shortest_path(0, 3);
    REQUIRE(p);
    CHECK(p->cost == 2.0);
    CHECK(p->nodes == std::vector<NodeId>{0, 1, 3});
}

TEST_CASE("shortest path matches exhaustive enumeration on small random graphs") {
    Rng rng(77);
    std::uniform_int_distribution<int> size(1, 6);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> weight(0, 9);
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = static_cast<std::size_t>(size(rng));
        SemanticGraph g = graph_with_nodes(n);
        std::vector<std::vector<double>> w(n, std::vector<double>(n, -1.0));
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                if (a != b && coin(rng) < 0.4) {
                    // Integer weights make equal-cost ties common.
                    w[a][b] = weight(rng);
                    g.record_edge(a, b, w[a][b]);
                }
            }
        }
        for (std::size_t s = 0; s < n; ++s) {
            for (std::size_t t = 0; t < n; ++t) {
                const double oracle = enumerate_paths(n, w, s, t);
                const auto got = g.shortest_path(s, t);
                if (std::isinf(oracle)) {
                    CHECK_FALSE(got.has_value());
                    continue;
                }
                REQUIRE(got.has_value());
                CHECK(got->cost == oracle);
                REQUIRE(!got->nodes.empty());
                CHECK(got->nodes.front() == s);
                CHECK(got->nodes.back() == t);
                double sum = 0.0;
                for (std::size_t i = 0; i + 1 < got->nodes.size(); ++i) {
                    const double ew = w[got->nodes[i]][got->nodes[i + 1]];
                    REQUIRE(ew >= 0.0);
                    sum += ew;
                }
                CHECK(sum == got->cost);
            }
        }
    }
}

TEST_CASE("node tokens along a path") {
    SemanticGraph g = graph_with_nodes(3);
    CHECK(g.node_tokens_along({}).empty());
    const auto one = g.node_tokens_along({0});
    REQUIRE(one.size() == 1);
    CHECK(one[0] == &g.node(0)->token);
    const auto three = g.node_tokens_along({2, 0, 1});
    REQUIRE(three.size() == 3);
    CHECK(three[0] == &g.node(2)->token);
    CHECK(three[1] == &g.node(0)->token);
    CHECK(three[2] == &g.node(1)->token);
    CHECK_THROWS_AS(g.node_tokens_along({0, 5}), Error);
}

TEST_CASE("negative instruction cost is rejected") {
    SemanticGraph g(graph_config());
    CHECK_THROWS_AS(g.observe(Embedding{0, 0, 0, 0}, {0, 0, 0}, -1.0, params4()), Error);
}
