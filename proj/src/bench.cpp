#include "spmem/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>

#include "spmem/memory_store.hpp"

namespace spmem {

LatencyStats summarize_latency(std::vector<double> samples_ms) {
    LatencyStats s;
    s.trials = samples_ms.size();
    if (samples_ms.empty()) return s;
    std::sort(samples_ms.begin(), samples_ms.end());
    const std::size_t n = samples_ms.size();
    s.median_ms = n % 2 ? samples_ms[n / 2] : 0.5 * (samples_ms[n / 2 - 1] + samples_ms[n / 2]);
    s.mean_ms = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(n);
    s.p95_ms = samples_ms[std::min(n - 1, static_cast<std::size_t>(0.95 * static_cast<double>(n)))];
    return s;
}

LatencyStats time_operation(const std::function<void(std::size_t)>& op, std::size_t trials) {
    using clock = std::chrono::steady_clock;
    std::vector<double> ms;
    ms.reserve(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        const auto t0 = clock::now();
        op(i);
        ms.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
    }
    return summarize_latency(std::move(ms));
}

namespace {

struct Written {
    Embedding v;
    Position p;
};

Embedding perturbed(const Embedding& v, Rng& rng, double sigma) {
    Embedding out = v;
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& x : out) x += noise(rng);
    return out;
}

EngineConfig bench_config(const BenchOptions& o, std::size_t cache) {
    EngineConfig cfg;
    cfg.d = o.d;
    cfg.K_cache = cache;
    cfg.rng_seed = o.seed;
    cfg.validate();
    return cfg;
}

}  // namespace

std::vector<BenchRow> bench_retrieval(const BenchOptions& o, std::ostream* progress) {
    std::vector<BenchRow> components;
    std::vector<BenchRow> breakdown;
    std::vector<BenchRow> search;
    Rng rng(mix_seed(o.seed, 0x42454e43ULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // STM: every cached entry sits within the lookup radius of the query point.
    for (std::size_t K : o.cache_sizes) {
        const EngineConfig cfg = bench_config(o, K);
        MemoryStore store(cfg);
        const Position centre{cfg.L / 2, cfg.L / 2, cfg.L / 2};
        std::vector<Written> written;
        for (std::size_t i = 0; i < K; ++i) {
            const Position p{centre.x + unit(rng) - 0.5, centre.y + unit(rng) - 0.5, centre.z + unit(rng) - 0.5};
            written.push_back({gaussian_vector(rng, o.d), p});
            store.write(written.back().v, p, "obj" + std::to_string(i));
        }
        std::vector<Embedding> queries;
        for (std::size_t t = 0; t < o.trials; ++t) queries.push_back(perturbed(written[t % K].v, rng, 0.1));
        const auto stats = time_operation([&](std::size_t t) { (void)store.stm_lookup(queries[t], centre); }, o.trials);
        components.push_back({"components", "stm_lookup", "K", K, stats});
        if (progress) *progress << "stm K=" << K << " median " << stats.median_ms << " ms\n";
    }

    // LTM: grow one store, measuring at each requested index size. Every write
    // lands in a fresh cell with a fresh landmark node, adding two tokens.
    std::vector<std::size_t> sizes = o.index_sizes;
    if (std::find(sizes.begin(), sizes.end(), o.breakdown_index) == sizes.end()) sizes.push_back(o.breakdown_index);
    std::sort(sizes.begin(), sizes.end());
    const EngineConfig cfg = bench_config(o, o.breakdown_cache);
    MemoryStore store(cfg);
    std::vector<Written> written;
    struct SearchTimes {
        LatencyStats hnsw, linear, tokens;
    };
    std::map<std::size_t, SearchTimes> ltm_at;
    for (std::size_t N : sizes) {
        while (store.stats().indexed_tokens < N) {
            const Position p{unit(rng) * cfg.L, unit(rng) * cfg.L, unit(rng) * cfg.L};
            written.push_back({gaussian_vector(rng, o.d), p});
            store.write(written.back().v, p, "obj" + std::to_string(written.size()));
        }
        std::vector<Written> queries;
        for (std::size_t t = 0; t < o.trials; ++t) {
            const auto& w = written[std::uniform_int_distribution<std::size_t>(0, written.size() - 1)(rng)];
            queries.push_back({perturbed(w.v, rng, 0.1), w.p});
        }
        const auto hnsw = time_operation(
            [&](std::size_t t) { (void)store.ltm_retrieve(queries[t].v, queries[t].p, LtmSearch::Hnsw); }, o.trials);
        const auto linear = time_operation(
            [&](std::size_t t) { (void)store.ltm_retrieve(queries[t].v, queries[t].p, LtmSearch::LinearScan); },
            o.trials);
        const auto tokens = time_operation(
            [&](std::size_t t) { (void)store.ltm_retrieve(queries[t].v, queries[t].p, LtmSearch::TokenScan); },
            o.trials);
        ltm_at[N] = {hnsw, linear, tokens};
        if (progress) {
            *progress << "ltm N=" << N << " hnsw median " << hnsw.median_ms << " ms, linear median "
                      << linear.median_ms << " ms, token scan median " << tokens.median_ms << " ms\n";
        }
        if (N == o.breakdown_index) {
            const auto stm = time_operation(
                [&](std::size_t t) { (void)store.stm_lookup(queries[t].v, queries[t].p); }, o.trials);
            const auto total = time_operation(
                [&](std::size_t t) { (void)store.retrieve(queries[t].v, queries[t].p); }, o.trials);
            breakdown.push_back({"breakdown", "stm_lookup", "K", o.breakdown_cache, stm});
            breakdown.push_back({"breakdown", "ltm_hnsw", "N", N, hnsw});
            breakdown.push_back({"breakdown", "retrieve", "N", N, total});
        }
    }
    for (std::size_t N : o.index_sizes) components.push_back({"components", "ltm_hnsw", "N", N, ltm_at[N].hnsw});
    for (std::size_t N : o.index_sizes) {
        search.push_back({"search", "ltm_hnsw", "N", N, ltm_at[N].hnsw});
        search.push_back({"search", "ltm_linear", "N", N, ltm_at[N].linear});
        search.push_back({"search", "ltm_token_scan", "N", N, ltm_at[N].tokens});
    }

    std::vector<BenchRow> rows = std::move(components);
    rows.insert(rows.end(), breakdown.begin(), breakdown.end());
    rows.insert(rows.end(), search.begin(), search.end());
    return rows;
}

void write_bench_table(std::ostream& out, const std::vector<BenchRow>& rows) {
    std::string table;
    const auto flags = out.flags();
    for (const auto& r : rows) {
        if (r.table != table) {
            table = r.table;
            out << (table == rows.front().table ? "" : "\n") << "[" << table << "]\n";
            out << std::left << std::setw(14) << "operation" << std::right << std::setw(4) << "" << std::setw(8)
                << "size" << std::setw(12) << "median_ms" << std::setw(12) << "mean_ms" << std::setw(12) << "p95_ms"
                << '\n';
        }
        out << std::left << std::setw(14) << r.operation << std::right << std::setw(4) << r.parameter << std::setw(8)
            << r.size << std::fixed << std::setprecision(4) << std::setw(12) << r.stats.median_ms << std::setw(12)
            << r.stats.mean_ms << std::setw(12) << r.stats.p95_ms << '\n';
        out.flags(flags);
    }
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "table,operation,parameter,size,trials,median_ms,mean_ms,p95_ms\n";
    for (const auto& r : rows) {
        out << r.table << ',' << r.operation << ',' << r.parameter << ',' << r.size << ',' << r.stats.trials << ','
            << r.stats.median_ms << ',' << r.stats.mean_ms << ',' << r.stats.p95_ms << '\n';
    }
}

}  // namespace spmem
