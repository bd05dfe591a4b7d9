#pragma once
// Morton-addressed sparse octree. Only depth-Lambda leaves that have been
// written are materialized; interior levels are implicit (shift the key right
// by 3 bits per level).

#include <array>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "spmem/core.hpp"
#include "spmem/reversible.hpp"

namespace spmem {

using MortonKey = std::uint64_t;
using CellIndex = std::array<std::uint32_t, 3>;

// floor(coordinate * 2^Lambda / L) per axis. p must already be normalized;
// values that land exactly on 2^Lambda through rounding are clamped to the last cell.
CellIndex quantize(const Position& p, const EngineConfig& cfg);
CellIndex quantize(const Position& p, int lambda, double world_side);

// Bit i of x goes to bit 3i, y to 3i+1, z to 3i+2.
// Throws Error(RangeError) if any index >= 2^lambda.
MortonKey morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z, int lambda = 21);
MortonKey morton_encode(const CellIndex& idx, int lambda = 21);
CellIndex morton_decode(MortonKey key);

struct CubeBounds {
    Position min_corner;
    double side = 0.0;

    bool contains(const Position& p) const;
};

CubeBounds cell_bounds(MortonKey key, const EngineConfig& cfg);

struct OctreeLeaf {
    MortonKey key = 0;
    TokenChain token;
    CubeBounds bounds;
    std::uint32_t write_count = 0;
};

class SparseOctree {
public:
    explicit SparseOctree(const EngineConfig& cfg);

    // p is in the normalized frame ([0, L)^3).
    MortonKey key_for(const Position& p) const;

    // Creates the leaf on first visit (seeded Gaussian token), then applies
    // the reversible write. Returns the key and whether the leaf was new.
    std::pair<MortonKey, bool> write(const Position& p, std::span<const double> v, const RevBlockParams& params);

    const OctreeLeaf* lookup(const Position& p) const;
    const OctreeLeaf* find(MortonKey key) const;

    std::size_t size() const { return leaves_.size(); }
    bool empty() const { return leaves_.empty(); }

    // Keys in first-creation order.
    const std::vector<MortonKey>& creation_order() const { return order_; }

    // Used by persistence; leaves must arrive in creation order.
    void restore_leaf(OctreeLeaf leaf);

private:
    EngineConfig cfg_;
    std::unordered_map<MortonKey, OctreeLeaf> leaves_;
    std::vector<MortonKey> order_;
};

}  // namespace spmem
