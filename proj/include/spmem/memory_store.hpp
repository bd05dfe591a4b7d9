#pragma once
// MemoryStore: the write/retrieve facade over the octree, the semantic
// graph, the short-term cache and the HNSW index of long-term tokens.
//
// Writes take the store's exclusive lock; retrievals take it shared, so a
// reader always sees the state before or after a whole write.

#include <cstdint>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "spmem/core.hpp"
#include "spmem/hnsw.hpp"
#include "spmem/octree.hpp"
#include "spmem/reversible.hpp"
#include "spmem/semantic_graph.hpp"
#include "spmem/stm_cache.hpp"

namespace spmem {

// Shared mutex that lets a waiting writer in ahead of newly arriving readers.
// Readers pass through a turnstile the writer holds while it waits.
class WriterPriorityMutex {
public:
    void lock() {
        turnstile_.lock();
        rw_.lock();
        turnstile_.unlock();
    }
    void unlock() { rw_.unlock(); }
    void lock_shared() {
        std::lock_guard gate(turnstile_);
        rw_.lock_shared();
    }
    void unlock_shared() { rw_.unlock_shared(); }

private:
    std::mutex turnstile_;
    std::shared_mutex rw_;
};

enum class TokenSource : std::uint8_t { Leaf = 0, Node = 1 };

struct TokenRef {
    TokenSource source = TokenSource::Leaf;
    std::uint64_t key = 0;

    std::uint64_t encode() const { return (static_cast<std::uint64_t>(source) << 63) | key; }
    static TokenRef decode(std::uint64_t id) {
        return {static_cast<TokenSource>(id >> 63), id & ~(1ULL << 63)};
    }
    bool operator==(const TokenRef&) const = default;
};

// Component switches used by ablation runs. All on for a normal store.
struct MemoryFeatures {
    bool graph = true;
    bool stm = true;
    bool ltm = true;
    bool operator==(const MemoryFeatures&) const = default;
};

struct WriteReceipt {
    MortonKey leaf_key = 0;
    bool leaf_created = false;
    std::optional<NodeId> node;
    bool node_created = false;
    bool stm_inserted = false;
    std::optional<StmEntry> evicted;
    std::uint64_t step = 0;
};

enum class RetrievalSource : std::uint8_t { Stm = 0, Ltm = 1, None = 2 };
std::string_view source_name(RetrievalSource s);

struct RetrievalItem {
    Embedding embedding;   // recovered v_hat (LTM) or cached v (STM)
    Position position;     // decoded / cached, caller frame
    Embedding descriptor;
    double similarity = 0.0;
    std::optional<TokenRef> token;  // LTM items
    std::string object_id;          // STM items
};

struct RetrievalResult {
    RetrievalSource source = RetrievalSource::None;
    std::vector<RetrievalItem> items;
    Embedding aggregate;  // mean of item embeddings; zeros when there are no items
    std::optional<double> best_stm_similarity;
};

// Hnsw: the index. LinearScan: exact scan over the index's stored vectors.
// TokenScan: no index at all, cosine over every live token state held by the
// octree and the graph.
enum class LtmSearch : std::uint8_t { Hnsw, LinearScan, TokenScan };

struct StoreStats {
    std::uint64_t steps = 0;
    std::size_t leaves = 0;
    std::size_t nodes = 0;
    std::size_t edges = 0;
    std::size_t stm_entries = 0;
    std::size_t indexed_tokens = 0;
    std::size_t index_slots = 0;
};

class MemoryStore {
public:
    explicit MemoryStore(const EngineConfig& cfg, MemoryFeatures features = {});
    MemoryStore(const EngineConfig& cfg, MemoryFeatures features, RevBlockParams params, DecoderSet decoders);
    MemoryStore(const MemoryStore& other);
    MemoryStore& operator=(const MemoryStore&) = delete;

    // p is in the caller's frame; object_id empty means "no STM insert".
    WriteReceipt write(std::span<const double> v, const Position& p, const std::string& object_id = {},
                       double c_instr = 0.0, bool force_node = false);

    // STM first; falls back to LTM when the best in-radius similarity is below tau_sim.
    // Throws Error(EmptyStore) before the first write.
    RetrievalResult retrieve(std::span<const double> v_now, const Position& p_now) const;

    // Individual paths, exposed for benchmarking and verification.
    std::vector<StmHit> stm_lookup(std::span<const double> v_now, const Position& p_now,
                                   bool record_hits = true) const;
    RetrievalResult ltm_retrieve(std::span<const double> v_now, const Position& p_now,
                                 LtmSearch mode = LtmSearch::Hnsw) const;
    std::vector<Neighbor> ltm_candidates(std::span<const double> query, std::size_t k,
                                         LtmSearch mode = LtmSearch::Hnsw) const;
    std::vector<RetrievalItem> decode_tokens(const std::vector<Neighbor>& hits) const;

    // q = Proj([v; p]), length 2d.
    Embedding project_query(std::span<const double> v, const Position& p) const;

    // Rebuilds the index from live tokens: leaves in creation order, then nodes by id.
    void rebuild_index();
    // Recall@k of the index against the exact scan over the given queries.
    double index_recall(const std::vector<Embedding>& queries, std::size_t k) const;

    StoreStats stats() const;
    MemoryStore snapshot() const { return MemoryStore(*this); }

    const EngineConfig& config() const { return cfg_; }
    const MemoryFeatures& features() const { return features_; }
    const RevBlockParams& rev_params() const { return params_; }
    const DecoderSet& decoders() const { return decoders_; }
    void set_decoders(DecoderSet decoders);
    std::uint64_t step() const;

    // Read access for persistence and tests. Not synchronized; callers must
    // not run these concurrently with write().
    const SparseOctree& octree() const { return octree_; }
    const SemanticGraph& graph() const { return graph_; }
    const StmCache& stm() const { return stm_; }
    const HnswIndex& index() const { return index_; }
    const TokenChain* token(TokenRef ref) const;
    Position current_node_position() const;

    // Persistence hooks: replace component state wholesale, then rebuild_index().
    void restore(SparseOctree octree, SemanticGraph graph, std::vector<StmEntry> stm_entries, std::uint64_t step);

private:
    HnswParams index_params() const;
    std::vector<Neighbor> search_locked(std::span<const double> query, std::size_t k, LtmSearch mode) const;
    std::vector<Neighbor> token_scan(std::span<const double> query, std::size_t k) const;
    void ensure_vector(std::string_view field, std::span<const double> v) const;

    EngineConfig cfg_;
    MemoryFeatures features_;
    RevBlockParams params_;
    DecoderSet decoders_;
    SparseOctree octree_;
    SemanticGraph graph_;
    StmCache stm_;
    HnswIndex index_;
    std::uint64_t step_ = 0;
    mutable WriterPriorityMutex mutex_;
};

}  // namespace spmem
