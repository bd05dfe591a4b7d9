#include "spmem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spmem {

double dtw(const Path& agent, const Path& expert) {
    if (agent.empty() || expert.empty()) throw Error(ErrorCode::EmptyInput, "dtw over an empty path");
    const std::size_t n = agent.size();
    const std::size_t m = expert.size();
    const double inf = std::numeric_limits<double>::infinity();
    // Two rolling rows of the (n+1) x (m+1) table.
    std::vector<double> prev(m + 1, inf);
    std::vector<double> cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double cost = distance(agent[i - 1], expert[j - 1]);
            cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double path_length(const Path& path) {
    double total = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) total += distance(path[i - 1], path[i]);
    return total;
}

double ndtw(const Path& agent, const Path& expert) {
    const double len = path_length(expert);
    return std::exp(-dtw(agent, expert) / (len > 0.0 ? len : 1.0));
}

namespace {

void require_episodes(const std::vector<Episode>& episodes) {
    if (episodes.empty()) throw Error(ErrorCode::EmptyInput, "no episodes");
}

}  // namespace

double task_completion(const std::vector<Episode>& episodes) {
    require_episodes(episodes);
    std::size_t ok = 0;
    for (const auto& e : episodes) ok += distance(e.stop, e.goal) <= kSuccessRadius ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(episodes.size());
}

double spd(const std::vector<Episode>& episodes) {
    require_episodes(episodes);
    double total = 0.0;
    for (const auto& e : episodes) total += distance(e.stop, e.goal);
    return total / static_cast<double>(episodes.size());
}

double ndtw(const std::vector<Episode>& episodes) {
    require_episodes(episodes);
    double total = 0.0;
    for (const auto& e : episodes) total += ndtw(e.agent_path, e.expert_path);
    return total / static_cast<double>(episodes.size());
}

}  // namespace spmem
