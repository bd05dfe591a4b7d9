#include "doctest.h"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <queue>
#include <set>

#include "spmem/core.hpp"
#include "spmem/hnsw.hpp"

using namespace spmem;

namespace {

Embedding unit_vector(Rng& rng, std::size_t d) {
    Embedding v = gaussian_vector(rng, d);
    const double n = l2_norm(v);
    for (double& x : v) x /= n;
    return v;
}

HnswParams params_for(std::size_t dim, std::uint64_t seed = 42) {
    HnswParams p;
    p.dim = dim;
    p.seed = seed;
    return p;
}

// Reachability over layer 0 from the entry point, tombstones included.
std::size_t reachable_at_layer0(const HnswIndex& index) {
    std::vector<bool> seen(index.slot_count(), false);
    std::queue<HnswIndex::Slot> q;
    q.push(index.entry_point());
    seen[index.entry_point()] = true;
    std::size_t count = 0;
    while (!q.empty()) {
        const auto s = q.front();
        q.pop();
        ++count;
        for (auto n : index.neighbors(s, 0)) {
            if (!seen[n]) {
                seen[n] = true;
                q.push(n);
            }
        }
    }
    return count;
}

// Independent exact ranking: double-precision cosine distance, full sort.
std::vector<std::uint64_t> exact_top_k(const std::vector<Embedding>& data, const Embedding& q, std::size_t k) {
    std::vector<std::pair<double, std::uint64_t>> all;
    for (std::size_t i = 0; i < data.size(); ++i) all.emplace_back(1.0 - cosine_similarity(q, data[i]), i);
    std::sort(all.begin(), all.end());
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
    return out;
}

}  // namespace

TEST_CASE("empty index and single element") {
    HnswIndex index(params_for(4));
    const Embedding q{1, 0, 0, 0};
    try {
        index.search(q, 1);
        FAIL("expected EmptyIndex");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyIndex);
    }
    index.insert(7, Embedding{0, 1, 0, 0});
    CHECK(index.entry_point() == 0);
    CHECK(index.size() == 1);
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
        const auto r = index.search(gaussian_vector(rng, 4), 3);
        REQUIRE(r.size() == 1);
        CHECK(r[0].id == 7);
    }
}

TEST_CASE("two elements link to each other") {
    HnswIndex index(params_for(3));
    index.insert(1, Embedding{1, 0, 0});
    index.insert(2, Embedding{0, 1, 0});
    const auto n0 = index.neighbors(0, 0);
    const auto n1 = index.neighbors(1, 0);
    REQUIRE(n0.size() == 1);
    REQUIRE(n1.size() == 1);
    CHECK(n0[0] == 1);
    CHECK(n1[0] == 0);
}

TEST_CASE("insert rejects duplicates and wrong lengths") {
    HnswIndex index(params_for(3));
    index.insert(1, Embedding{1, 0, 0});
    try {
        index.insert(1, Embedding{0, 1, 0});
        FAIL("expected DuplicateId");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DuplicateId);
    }
    CHECK_THROWS_AS(index.insert(2, Embedding{1, 0}), DimError);
    CHECK_THROWS_AS(index.search(Embedding{1, 0}, 1), DimError);
    CHECK_THROWS_AS(index.linear_scan(Embedding{1, 0}, 1), DimError);

    HnswParams bad = params_for(3);
    bad.M = 1;
    CHECK_THROWS_AS(HnswIndex{bad}, Error);
    bad = params_for(0);
    CHECK_THROWS_AS(HnswIndex{bad}, Error);
}

TEST_CASE("stored vector ranks first with zero distance") {
    HnswIndex index(params_for(32));
    Rng rng(2);
    std::vector<Embedding> data;
    for (std::uint64_t i = 0; i < 500; ++i) {
        data.push_back(gaussian_vector(rng, 32));
        index.insert(i, data.back());
    }
    for (std::uint64_t i = 0; i < 500; i += 7) {
        const auto r = index.search(data[i], 3);
        REQUIRE(!r.empty());
        CHECK(r[0].id == i);
        CHECK(r[0].distance <= 1e-6);
        for (std::size_t j = 1; j < r.size(); ++j) CHECK(r[j - 1].distance <= r[j].distance);
    }
}

TEST_CASE("structure after 1000 random inserts") {
    HnswIndex index(params_for(16));
    Rng rng(3);
    for (std::uint64_t i = 0; i < 1000; ++i) index.insert(i, gaussian_vector(rng, 16));

    CHECK(index.slot_level(index.entry_point()) == index.max_level());
    for (HnswIndex::Slot s = 0; s < index.slot_count(); ++s) {
        CHECK(index.slot_level(s) >= 0);
        for (int layer = 0; layer <= index.slot_level(s); ++layer) {
            const auto adj = index.neighbors(s, layer);
            CHECK(adj.size() <= index.layer_cap(layer));
            std::set<HnswIndex::Slot> uniq(adj.begin(), adj.end());
            CHECK(uniq.size() == adj.size());
            CHECK(uniq.count(s) == 0);
            for (auto n : adj) {
                // Symmetric links on every layer.
                const auto back = index.neighbors(n, layer);
                CHECK(std::find(back.begin(), back.end(), s) != back.end());
            }
        }
    }
    CHECK(index.layer_cap(0) == 32);
    CHECK(index.layer_cap(1) == 16);
    CHECK(reachable_at_layer0(index) == index.slot_count());
}

TEST_CASE("layer-0 cap is configurable back to M") {
    HnswParams p = params_for(8);
    p.layer0_cap = p.M;
    HnswIndex index(p);
    Rng rng(4);
    for (std::uint64_t i = 0; i < 600; ++i) index.insert(i, gaussian_vector(rng, 8));
    for (HnswIndex::Slot s = 0; s < index.slot_count(); ++s) CHECK(index.neighbors(s, 0).size() <= p.M);
    CHECK(reachable_at_layer0(index) == index.slot_count());
}

TEST_CASE("linear scan agrees with a full sort") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        HnswIndex index(params_for(12, static_cast<std::uint64_t>(trial)));
        std::vector<Embedding> data;
        for (std::uint64_t i = 0; i < 100; ++i) {
            data.push_back(gaussian_vector(rng, 12));
            index.insert(i, data.back());
        }
        const Embedding q = gaussian_vector(rng, 12);
        const auto scan = index.linear_scan(q, 10);
        const auto oracle = exact_top_k(data, q, 10);
        REQUIRE(scan.size() == 10);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(scan[i].id == oracle[i]);
            CHECK(std::abs(scan[i].distance - (1.0 - cosine_similarity(q, data[oracle[i]]))) <= 1e-5);
        }
        const auto everything = index.linear_scan(q, 500);
        CHECK(everything.size() == 100);
        for (std::size_t i = 1; i < everything.size(); ++i) {
            CHECK(everything[i - 1].distance <= everything[i].distance);
        }
        const auto beam_everything = index.search(q, 100);
        CHECK(beam_everything.size() == 100);
    }
}

TEST_CASE("replace tombstones the old slot") {
    HnswIndex index(params_for(3));
    index.insert(1, Embedding{1, 0, 0});
    index.insert(2, Embedding{0, 1, 0});
    index.replace(1, Embedding{0, 0, 1});
    CHECK(index.size() == 2);
    CHECK(index.slot_count() == 3);
    CHECK_FALSE(index.slot_live(0));
    CHECK(index.slot_version(2) == 1);
    // The old vector is no longer returned.
    const auto r = index.search(Embedding{1, 0, 0}, 3);
    CHECK(r.size() == 2);
    for (const auto& n : r) CHECK(!(n.id == 1 && n.distance < 0.5));
    const auto s = index.linear_scan(Embedding{0, 0, 1}, 1);
    CHECK(s[0].id == 1);
    CHECK(s[0].distance <= 1e-6);
    index.replace(3, Embedding{1, 1, 0});
    CHECK(index.contains(3));
}

TEST_CASE("same seed and order give an identical index") {
    Rng rng(6);
    std::vector<Embedding> data;
    for (int i = 0; i < 400; ++i) data.push_back(gaussian_vector(rng, 10));
    HnswIndex a(params_for(10, 9));
    HnswIndex b(params_for(10, 9));
    for (std::uint64_t i = 0; i < data.size(); ++i) {
        a.insert(i, data[i]);
        b.insert(i, data[i]);
    }
    CHECK(a.entry_point() == b.entry_point());
    CHECK(a.max_level() == b.max_level());
    for (HnswIndex::Slot s = 0; s < a.slot_count(); ++s) {
        REQUIRE(a.slot_level(s) == b.slot_level(s));
        for (int layer = 0; layer <= a.slot_level(s); ++layer) {
            const auto x = a.neighbors(s, layer);
            const auto y = b.neighbors(s, layer);
            CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
        }
    }
    const Embedding q = gaussian_vector(rng, 10);
    CHECK(a.search(q, 5) == b.search(q, 5));
}

TEST_CASE("level populations decay geometrically") {
    HnswParams p = params_for(2, 1234);
    p.ef_construction = 16;
    HnswIndex index(p);
    Rng rng(7);
    const std::size_t n = 10000;
    for (std::uint64_t i = 0; i < n; ++i) index.insert(i, gaussian_vector(rng, 2));
    std::array<double, 3> observed{0, 0, 0};  // level 0, 1, >= 2
    for (HnswIndex::Slot s = 0; s < n; ++s) observed[std::min(index.slot_level(s), 2)] += 1;
    const double m = static_cast<double>(p.M);
    const std::array<double, 3> expected{n * (1 - 1 / m), n * (1 / m - 1 / (m * m)), n / (m * m)};
    double chi2 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) chi2 += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    // 95th percentile of chi-square with 2 degrees of freedom.
    CHECK(chi2 < 5.991);
}

TEST_CASE("recall at 10k unit vectors, d = 256") {
    const std::size_t d = 256;
    const std::size_t n = 10000;
    HnswIndex index(params_for(d, 11));
    Rng rng(8);
    std::vector<Embedding> data;
    data.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        data.push_back(unit_vector(rng, d));
        index.insert(i, data.back());
    }
    // Queries are noisy re-observations of stored vectors (noise norm 0.5).
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t found = 0;
    const std::size_t queries = 100;
    for (std::size_t t = 0; t < queries; ++t) {
        Embedding q = data[pick(rng)];
        const Embedding noise = gaussian_vector(rng, d, 0.5 / std::sqrt(static_cast<double>(d)));
        for (std::size_t i = 0; i < d; ++i) q[i] += noise[i];
        const auto approx = index.search(q, 3);
        const auto exact = index.linear_scan(q, 3);
        for (const auto& e : exact) {
            for (const auto& a : approx) found += a.id == e.id;
        }
    }
    const double recall = static_cast<double>(found) / static_cast<double>(3 * queries);
    MESSAGE("recall@3 = " << recall);
    CHECK(recall >= 0.90);
}

TEST_CASE("search latency grows sub-linearly") {
    const std::size_t d = 64;
    HnswIndex index(params_for(d, 12));
    Rng rng(9);
    auto median_query_ms = [&]() {
        std::vector<double> ms;
        for (int t = 0; t < 300; ++t) {
            const Embedding q = gaussian_vector(rng, d);
            const auto start = std::chrono::steady_clock::now();
            (void)index.search(q, 3);
            ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
        }
        std::nth_element(ms.begin(), ms.begin() + 150, ms.end());
        return ms[150];
    };
    std::uint64_t id = 0;
    while (index.size() < 5000) index.insert(id++, gaussian_vector(rng, d));
    const double at5k = median_query_ms();
    while (index.size() < 20000) index.insert(id++, gaussian_vector(rng, d));
    const double at20k = median_query_ms();
    MESSAGE("median ms at 5k " << at5k << ", at 20k " << at20k);
    CHECK(at20k <= 3.0 * at5k);
}
