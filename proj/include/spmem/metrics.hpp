#pragma once
// Navigation metrics over episodes: task completion, stop distance and
// path alignment (dynamic time warping with Euclidean point cost).

#include <vector>

#include "spmem/core.hpp"

namespace spmem {

using Path = std::vector<Position>;

struct Instruction {
    std::size_t landmark = 0;  // index into the world's landmark list
    bool turn = false;         // route changes heading before reaching it
};

struct Episode {
    Path expert_path;
    std::vector<Instruction> instructions;
    Path agent_path;
    Position stop;
    Position goal;
};

constexpr double kSuccessRadius = 3.0;

double dtw(const Path& agent, const Path& expert);
double path_length(const Path& path);
// exp(-DTW / L) with L the expert path length (1 when the expert path has zero length).
double ndtw(const Path& agent, const Path& expert);

// Each throws Error(EmptyInput) on an empty episode list.
double task_completion(const std::vector<Episode>& episodes);
double spd(const std::vector<Episode>& episodes);
double ndtw(const std::vector<Episode>& episodes);

}  // namespace spmem
