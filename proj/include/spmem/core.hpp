#pragma once
// Shared value types, engine configuration and deterministic vector math.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spmem/error.hpp"

namespace spmem {

// World-frame position in meters.
struct Position {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

    friend Position operator+(const Position& a, const Position& b) {
        return {a.x + b.x, a.y + b.y, a.z + b.z};
    }
    friend Position operator-(const Position& a, const Position& b) {
        return {a.x - b.x, a.y - b.y, a.z - b.z};
    }
    friend bool operator==(const Position&, const Position&) = default;

    bool finite() const;
};

double distance(const Position& a, const Position& b);

// Observation feature vector. Length is fixed per store (EngineConfig::d).
using Embedding = std::vector<double>;

struct EngineConfig {
    std::size_t d = 256;
    int Lambda = 16;
    double L = 256.0;
    Position origin{};

    // Node-creation threshold; non-positive means "derive as 0.5 * sqrt(d)".
    double delta = 0.0;
    double alpha_w = 1.0;
    double beta_w = 1.0;

    double lambda_cache = 0.5;
    std::size_t K_cache = 128;
    double epsilon = 3.0;
    double tau_sim = 0.5;
    std::size_t k_stm = 4;
    std::size_t m_ltm = 3;

    std::size_t hnsw_M = 16;
    std::size_t hnsw_efConstruction = 200;
    std::size_t hnsw_efSearch = 200;
    // Layer-0 neighbor cap as a multiple of M (2 is the usual HNSW choice, 1 caps at M).
    std::size_t hnsw_layer0_factor = 2;

    std::size_t rev_layers = 4;
    // Adapter hidden width; 0 means "same as d".
    std::size_t rev_hidden = 0;
    double rev_init_scale = 0.1;

    // Passthrough decoders read the position stamp from v[0..2] scaled by this factor;
    // non-positive means "use L".
    double position_scale = 0.0;
    std::size_t ltm_decode_depth = 1;

    std::uint64_t rng_seed = 42;

    double effective_delta() const;
    std::size_t effective_hidden() const;
    double effective_position_scale() const;
    std::size_t layer0_cap() const { return hnsw_M * hnsw_layer0_factor; }

    // Throws Error(InvalidConfig) naming the first violated constraint.
    void validate() const;
};

// key=value text form; '#' starts a comment. Unknown keys are rejected.
EngineConfig parse_config(std::istream& in);
EngineConfig load_config_file(const std::string& path);
void write_config(std::ostream& out, const EngineConfig& cfg);

// Zero-norm input yields 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double l2_distance(std::span<const double> a, std::span<const double> b);

// Subtracts the configured origin and checks the half-open box [0, L)^3.
Position normalize_position(const Position& raw, const EngineConfig& cfg);
Position denormalize_position(const Position& local, const EngineConfig& cfg);

// Every random draw in the engine goes through this generator type.
using Rng = std::mt19937_64;

// SplitMix64 finalizer; derives independent per-element seeds from the store seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

Embedding gaussian_vector(Rng& rng, std::size_t n, double sigma = 1.0);

void require_dim(std::string_view field, std::span<const double> v, std::size_t expected);
void require_finite(std::string_view what, std::span<const double> v);

}  // namespace spmem
