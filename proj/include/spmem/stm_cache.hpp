#pragma once
// Fixed-capacity short-term memory with frequency/recency eviction and
// radius-filtered cosine retrieval.

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "spmem/core.hpp"

namespace spmem {

struct StmEntry {
    std::string object_id;
    Position position;  // absolute (normalized frame); relative offsets are computed on demand
    Embedding embedding;
    std::uint64_t timestamp = 0;
    std::uint32_t freq = 1;

    bool operator==(const StmEntry&) const = default;
};

struct StmHit {
    std::size_t index = 0;  // position in the cache's entry list at retrieval time
    StmEntry entry;
    double similarity = 0.0;
};

// lambda * freq - (1 - lambda) * (now - timestamp)
double stm_score(const StmEntry& e, double lambda, std::uint64_t now);

class StmCache {
public:
    StmCache(std::size_t capacity, double lambda, double epsilon, std::size_t dim);
    StmCache(const StmCache& other);
    StmCache& operator=(const StmCache& other);

    // Refresh on a known object id, append while there is room, otherwise
    // evict the minimum-score entry (older timestamp loses ties, then lower
    // slot). Returns the evicted entry, if any.
    std::optional<StmEntry> insert(const std::string& object_id, const Position& p, std::span<const double> v,
                                   std::uint64_t now);

    // Entries whose offset from the current node lies within epsilon of the
    // query offset, ranked by cosine similarity to v_now (ties: lower slot),
    // truncated to k. When record_hits is set the returned entries' freq is
    // incremented.
    std::vector<StmHit> retrieve(std::span<const double> v_now, const Position& p_now,
                                 const Position& current_node_pos, std::size_t k, bool record_hits = true) const;

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t capacity() const { return capacity_; }
    double lambda() const { return lambda_; }
    double epsilon() const { return epsilon_; }
    const std::vector<StmEntry>& entries() const { return entries_; }

    void restore(std::vector<StmEntry> entries);

private:
    std::size_t capacity_;
    double lambda_;
    double epsilon_;
    std::size_t dim_;
    // freq is bumped by otherwise read-only retrievals.
    mutable std::vector<StmEntry> entries_;
    mutable std::mutex hit_mutex_;
};

}  // namespace spmem
