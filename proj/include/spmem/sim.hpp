#pragma once
// Synthetic street-grid world, scripted policies and the ablation driver.
//
// Streets run along the lines x = i * block_size and y = j * block_size.
// Landmarks stand beside block perimeters; each carries an embedding drawn
// from a Gaussian cluster with its position stamped into components 0..2
// (divided by the world's position scale) so a passthrough decoder can read
// it back.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "spmem/core.hpp"
#include "spmem/memory_store.hpp"
#include "spmem/metrics.hpp"

namespace spmem {

struct WorldOptions {
    std::size_t d = 64;
    double block_size = 40.0;
    double spread = 0.5;   // per-component std of a landmark around its cluster center
    double jitter = 0.1;   // per-component std of observation noise
    double max_height = 8.0;
    std::size_t landmarks_per_cluster = 4;
    double position_scale = 256.0;
};

struct Landmark {
    std::string id;
    Position position;      // z in [0, max_height]
    Position street_point;  // foot of the landmark on its street, z = 0
    std::size_t cluster = 0;
    Embedding embedding;
};

struct SyntheticWorld {
    std::uint64_t seed = 0;
    std::size_t grid_side = 1;  // blocks per side
    WorldOptions options;
    std::vector<Embedding> cluster_centers;
    std::vector<Landmark> landmarks;

    double extent() const { return static_cast<double>(grid_side) * options.block_size; }

    // Landmark embedding plus per-component jitter on the non-stamp components.
    Embedding observe(const Landmark& lm, Rng& rng) const;
    // Closest point on the street network.
    Position snap_to_street(const Position& p) const;
    // Street route sampled every `step` meters; both ends are snapped first.
    // Consecutive points always lie on one street segment.
    Path route(const Position& from, const Position& to, double step = 2.0) const;
    std::vector<Position> intersections() const;
};

// Smallest (distance to a foreign cluster center) - (largest distance to a
// same-cluster landmark) over all landmarks; +inf with a single cluster.
double landmark_margin(const SyntheticWorld& world);
// The generator keeps landmark_margin above this.
double required_margin(const WorldOptions& options);

// blocks >= 1; the grid is the smallest square holding that many blocks.
SyntheticWorld generate_world(std::uint64_t seed, std::size_t blocks, std::size_t landmarks_per_block,
                              const WorldOptions& options = {});

// Start at a random intersection and visit `count` distinct landmarks.
Episode plan_episode(const SyntheticWorld& world, std::uint64_t seed, std::size_t count = 3);

enum class Policy { Expert, Random, MemoryGreedy };

struct AgentOptions {
    double step = 2.0;
    double query_jitter = 0.1;
    std::size_t explore_steps = 20;
    std::size_t max_queries = 6;  // per instructed landmark
    bool street_routing = true;   // false: head straight for the target
};

// Fills agent_path and stop. MemoryGreedy with no store only explores.
Episode run_episode(const SyntheticWorld& world, const Episode& plan, const MemoryStore* store, Policy policy,
                    const AgentOptions& options, std::uint64_t seed);

struct Observation {
    Position position;
    std::string object_id;
    Embedding embedding;
};

// One expert tour over every landmark; at each waypoint, every landmark whose
// street point lies within sight_radius is observed.
std::vector<Observation> survey_observations(const SyntheticWorld& world, std::uint64_t seed,
                                             double sight_radius = 10.0, double step = 2.0);
void populate_store(MemoryStore& store, const std::vector<Observation>& observations);

enum class Variant { Full, NoOctree, NoGraph, NoLtm, NoStm, RandomPolicy };
std::string variant_name(Variant v);
std::vector<Variant> all_variants();

struct AblationOptions {
    std::size_t worlds = 20;
    std::size_t episodes_per_world = 10;
    std::size_t blocks = 9;
    std::size_t landmarks_per_block = 4;
    std::size_t landmarks_per_episode = 3;
    std::uint64_t seed = 7;
    WorldOptions world;
    AgentOptions agent;
    // Uniform-grid resolution used by the w/o-octree variant (2^coarse_lambda cells per axis).
    int coarse_lambda = 3;
    double sight_radius = 10.0;
};

// Store configuration used by the harness for a given world.
EngineConfig harness_config(const AblationOptions& options);

struct AblationRow {
    Variant variant = Variant::Full;
    std::size_t episodes = 0;
    double tc = 0.0;
    double spd = 0.0;
    double ndtw = 0.0;
};

std::vector<AblationRow> run_ablation(const AblationOptions& options, const std::vector<Variant>& variants);

// Aligned columns with deltas against the Full row when present.
void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

}  // namespace spmem
