#pragma once
// Retrieval latency benchmark. Produces three tables:
//   components   STM lookup by cache size, LTM retrieve by index size
//   breakdown    STM lookup, LTM retrieve and full retrieve at one (K, N) point
//   search       HNSW against exact linear scan by index size
// Each row is timed over `trials` consecutive operations.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace spmem {

struct LatencyStats {
    std::size_t trials = 0;
    double median_ms = 0.0;
    double mean_ms = 0.0;
    double p95_ms = 0.0;
};

LatencyStats summarize_latency(std::vector<double> samples_ms);
// Runs op `trials` times, timing each call.
LatencyStats time_operation(const std::function<void(std::size_t)>& op, std::size_t trials);

struct BenchOptions {
    std::vector<std::size_t> cache_sizes{64, 128, 256};
    std::vector<std::size_t> index_sizes{5000, 10000, 20000};
    std::size_t breakdown_cache = 128;
    std::size_t breakdown_index = 10000;
    std::size_t trials = 1000;
    std::size_t d = 256;
    std::uint64_t seed = 42;
};

struct BenchRow {
    std::string table;      // "components", "breakdown" or "search"
    std::string operation;  // e.g. "stm_lookup", "ltm_hnsw", "ltm_linear", "retrieve"
    std::string parameter;  // "K" or "N"
    std::size_t size = 0;
    LatencyStats stats;
};

// Rows in a fixed order: components, breakdown, search.
std::vector<BenchRow> bench_retrieval(const BenchOptions& options, std::ostream* progress = nullptr);

void write_bench_table(std::ostream& out, const std::vector<BenchRow>& rows);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace spmem
