#include "spmem/octree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spmem {

namespace {

// Spreads the low 21 bits of x so that bit i lands at bit 3i.
std::uint64_t spread_bits(std::uint64_t x) {
    x &= 0x1fffffULL;
    x = (x | (x << 32)) & 0x1f00000000ffffULL;
    x = (x | (x << 16)) & 0x1f0000ff0000ffULL;
    x = (x | (x << 8)) & 0x100f00f00f00f00fULL;
    x = (x | (x << 4)) & 0x10c30c30c30c30c3ULL;
    x = (x | (x << 2)) & 0x1249249249249249ULL;
    return x;
}

std::uint32_t compact_bits(std::uint64_t x) {
    x &= 0x1249249249249249ULL;
    x = (x ^ (x >> 2)) & 0x10c30c30c30c30c3ULL;
    x = (x ^ (x >> 4)) & 0x100f00f00f00f00fULL;
    x = (x ^ (x >> 8)) & 0x1f0000ff0000ffULL;
    x = (x ^ (x >> 16)) & 0x1f00000000ffffULL;
    x = (x ^ (x >> 32)) & 0x1fffffULL;
    return static_cast<std::uint32_t>(x);
}

constexpr std::uint64_t kLeafSeedTag = 0x4c454146ULL;

}  // namespace

CellIndex quantize(const Position& p, int lambda, double world_side) {
    const double cells = std::ldexp(1.0, lambda);
    const auto max_index = static_cast<std::uint32_t>(cells) - 1;
    CellIndex idx{};
    for (int axis = 0; axis < 3; ++axis) {
        const double q = std::floor(p[axis] * cells / world_side);
        const auto clamped = q < 0.0 ? 0u : static_cast<std::uint32_t>(std::min(q, static_cast<double>(max_index)));
        idx[static_cast<std::size_t>(axis)] = clamped;
    }
    return idx;
}

CellIndex quantize(const Position& p, const EngineConfig& cfg) { return quantize(p, cfg.Lambda, cfg.L); }

MortonKey morton_encode(std::uint32_t x, std::uint32_t y, std::uint32_t z, int lambda) {
    const std::uint64_t limit = 1ULL << lambda;
    if (x >= limit || y >= limit || z >= limit) {
        throw Error(ErrorCode::RangeError, "cell index exceeds 2^" + std::to_string(lambda));
    }
    return spread_bits(x) | (spread_bits(y) << 1) | (spread_bits(z) << 2);
}

MortonKey morton_encode(const CellIndex& idx, int lambda) { return morton_encode(idx[0], idx[1], idx[2], lambda); }

CellIndex morton_decode(MortonKey key) {
    return {compact_bits(key), compact_bits(key >> 1), compact_bits(key >> 2)};
}

bool CubeBounds::contains(const Position& p) const {
    for (int axis = 0; axis < 3; ++axis) {
        if (p[axis] < min_corner[axis] || p[axis] >= min_corner[axis] + side) return false;
    }
    return true;
}

CubeBounds cell_bounds(MortonKey key, const EngineConfig& cfg) {
    const double side = cfg.L / std::ldexp(1.0, cfg.Lambda);
    const CellIndex idx = morton_decode(key);
    return {{idx[0] * side, idx[1] * side, idx[2] * side}, side};
}

SparseOctree::SparseOctree(const EngineConfig& cfg) : cfg_(cfg) {}

MortonKey SparseOctree::key_for(const Position& p) const { return morton_encode(quantize(p, cfg_), cfg_.Lambda); }

std::pair<MortonKey, bool> SparseOctree::write(const Position& p, std::span<const double> v,
                                               const RevBlockParams& params) {
    require_dim("v", v, cfg_.d);
    const MortonKey key = key_for(p);
    auto it = leaves_.find(key);
    const bool created = it == leaves_.end();
    if (created) {
        OctreeLeaf leaf;
        leaf.key = key;
        leaf.bounds = cell_bounds(key, cfg_);
        leaf.token = TokenChain::fresh(cfg_.d, mix_seed(mix_seed(cfg_.rng_seed, kLeafSeedTag), key));
        it = leaves_.emplace(key, std::move(leaf)).first;
        order_.push_back(key);
    }
    it->second.token.write(params, v);
    ++it->second.write_count;
    return {key, created};
}

const OctreeLeaf* SparseOctree::lookup(const Position& p) const { return find(key_for(p)); }

const OctreeLeaf* SparseOctree::find(MortonKey key) const {
    const auto it = leaves_.find(key);
    return it == leaves_.end() ? nullptr : &it->second;
}

void SparseOctree::restore_leaf(OctreeLeaf leaf) {
    const MortonKey key = leaf.key;
    leaf.bounds = cell_bounds(key, cfg_);
    if (!leaves_.emplace(key, std::move(leaf)).second) {
        throw Error(ErrorCode::DuplicateId, "duplicate leaf key " + std::to_string(key));
    }
    order_.push_back(key);
}

}  // namespace spmem
