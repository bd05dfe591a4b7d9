#pragma once
// Hierarchical Navigable Small World index over cosine distance.
//
// Vectors are normalized on insert and stored as float, so distance is
// 1 - <a, b>. External ids map to internal slots; replacing an id tombstones
// its old slot (still traversable, never returned) and inserts a new one.
// Links are kept symmetric: when a neighbor list overflows, the dropped
// neighbor also loses its back-link.

#include <cstdint>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "spmem/error.hpp"

namespace spmem {

struct Neighbor {
    std::uint64_t id = 0;
    double distance = 0.0;
    bool operator==(const Neighbor&) const = default;
};

struct HnswParams {
    std::size_t dim = 0;
    std::size_t M = 16;
    std::size_t ef_construction = 200;
    std::size_t ef_search = 200;
    std::size_t layer0_cap = 32;
    std::uint64_t seed = 42;
};

class HnswIndex {
public:
    using Slot = std::uint32_t;

    explicit HnswIndex(const HnswParams& params);

    // Throws DuplicateId if id is live, DimError on length mismatch.
    void insert(std::uint64_t id, std::span<const double> vec);
    // Tombstones the live slot for id (if any) and inserts vec under a new slot.
    void replace(std::uint64_t id, std::span<const double> vec);
    bool contains(std::uint64_t id) const { return live_slot_.count(id) != 0; }

    // Ascending distance. ef == 0 uses params.ef_search; the beam is at least k wide.
    std::vector<Neighbor> search(std::span<const double> query, std::size_t k, std::size_t ef = 0) const;
    // Exact top-k over live elements by the same distance.
    std::vector<Neighbor> linear_scan(std::span<const double> query, std::size_t k) const;

    std::size_t size() const { return live_slot_.size(); }
    bool empty() const { return live_slot_.empty(); }
    std::size_t slot_count() const { return ids_.size(); }
    std::size_t dim() const { return params_.dim; }
    const HnswParams& params() const { return params_; }

    // Introspection for tests and verification.
    int max_level() const { return max_level_; }
    Slot entry_point() const { return entry_; }
    int slot_level(Slot s) const { return levels_[s]; }
    bool slot_live(Slot s) const { return live_[s]; }
    std::uint64_t slot_id(Slot s) const { return ids_[s]; }
    std::uint32_t slot_version(Slot s) const { return versions_[s]; }
    std::span<const Slot> neighbors(Slot s, int layer) const;
    std::size_t layer_cap(int layer) const { return layer == 0 ? params_.layer0_cap : params_.M; }

    // Number of distance evaluations made by the last search on this thread.
    static std::size_t last_search_evaluations();

private:
    struct Candidate {
        float dist;
        Slot slot;
        bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && slot < o.slot); }
        bool operator>(const Candidate& o) const { return o < *this; }
    };

    const float* vec(Slot s) const { return &data_[static_cast<std::size_t>(s) * params_.dim]; }
    float distance(const float* a, Slot b) const;
    int draw_level();
    std::vector<Candidate> search_layer(const float* q, std::vector<Candidate> entries, std::size_t ef, int layer,
                                        bool live_only) const;
    Slot greedy_descend(const float* q, Slot start, int from_layer, int to_layer) const;
    std::vector<Slot>& links(Slot s, int layer);
    void link(Slot node, Slot target, int layer);
    void insert_slot(std::uint64_t id, std::span<const double> vec);

    HnswParams params_;
    double level_mult_;
    std::mt19937_64 level_rng_;

    std::vector<float> data_;
    std::vector<std::uint64_t> ids_;
    std::vector<std::uint32_t> versions_;
    std::vector<int> levels_;
    std::vector<bool> live_;
    std::vector<std::vector<std::vector<Slot>>> links_;  // [slot][layer]
    std::unordered_map<std::uint64_t, Slot> live_slot_;
    std::unordered_map<std::uint64_t, std::uint32_t> version_of_;
    Slot entry_ = 0;
    int max_level_ = -1;
};

}  // namespace spmem
