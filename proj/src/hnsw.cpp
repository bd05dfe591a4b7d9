#include "spmem/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

namespace spmem {

namespace {

float dot_f(const float* a, const float* b, std::size_t n) {
    float s[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) s[j] += a[i + j] * b[i + j];
    }
    for (; i < n; ++i) s[0] += a[i] * b[i];
    return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

std::vector<float> normalized(std::span<const double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<float> out(v.size(), 0.0f);
    if (norm > 0.0) {
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
    }
    return out;
}

struct VisitedList {
    std::vector<std::uint32_t> marks;
    std::uint32_t epoch = 0;

    void reset(std::size_t n) {
        if (marks.size() < n) marks.resize(n, 0);
        if (++epoch == 0) {
            std::fill(marks.begin(), marks.end(), 0);
            epoch = 1;
        }
    }
    bool visit(std::uint32_t s) {
        if (marks[s] == epoch) return false;
        marks[s] = epoch;
        return true;
    }
};

thread_local VisitedList t_visited;
thread_local std::size_t t_evaluations = 0;

constexpr int kMaxLevel = 30;

}  // namespace

HnswIndex::HnswIndex(const HnswParams& params)
    : params_(params),
      level_mult_(1.0 / std::log(static_cast<double>(std::max<std::size_t>(params.M, 2)))),
      level_rng_(params.seed) {
    if (params_.dim == 0) throw Error(ErrorCode::InvalidConfig, "hnsw dim must be > 0");
    if (params_.M < 2) throw Error(ErrorCode::InvalidConfig, "hnsw M must be >= 2");
    if (params_.layer0_cap < params_.M) throw Error(ErrorCode::InvalidConfig, "layer-0 cap must be >= M");
}

std::size_t HnswIndex::last_search_evaluations() { return t_evaluations; }

float HnswIndex::distance(const float* a, Slot b) const {
    ++t_evaluations;
    return 1.0f - dot_f(a, vec(b), params_.dim);
}

int HnswIndex::draw_level() {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = 1.0 - uniform(level_rng_);  // (0, 1]
    return std::min(kMaxLevel, static_cast<int>(std::floor(-std::log(u) * level_mult_)));
}

std::span<const HnswIndex::Slot> HnswIndex::neighbors(Slot s, int layer) const {
    if (layer > levels_[s]) return {};
    return links_[s][static_cast<std::size_t>(layer)];
}

std::vector<HnswIndex::Slot>& HnswIndex::links(Slot s, int layer) { return links_[s][static_cast<std::size_t>(layer)]; }

HnswIndex::Slot HnswIndex::greedy_descend(const float* q, Slot start, int from_layer, int to_layer) const {
    Slot cur = start;
    float cur_dist = distance(q, cur);
    for (int layer = from_layer; layer > to_layer; --layer) {
        bool changed = true;
        while (changed) {
            changed = false;
            for (Slot n : links_[cur][static_cast<std::size_t>(layer)]) {
                const float d = distance(q, n);
                if (d < cur_dist || (d == cur_dist && n < cur)) {
                    cur_dist = d;
                    cur = n;
                    changed = true;
                }
            }
        }
    }
    return cur;
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(const float* q, std::vector<Candidate> entries,
                                                          std::size_t ef, int layer, bool live_only) const {
    VisitedList& visited = t_visited;
    visited.reset(ids_.size());
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> frontier;
    std::priority_queue<Candidate> results;
    for (const auto& e : entries) {
        if (!visited.visit(e.slot)) continue;
        frontier.push(e);
        if (!live_only || live_[e.slot]) results.push(e);
    }
    while (!results.empty() && results.size() > ef) results.pop();

    while (!frontier.empty()) {
        const Candidate c = frontier.top();
        if (results.size() >= ef && c.dist > results.top().dist) break;
        frontier.pop();
        const auto& adj = links_[c.slot][static_cast<std::size_t>(layer)];
        for (Slot n : adj) {
            if (visited.marks[n] != visited.epoch) __builtin_prefetch(vec(n));
        }
        for (Slot n : adj) {
            if (!visited.visit(n)) continue;
            const float d = distance(q, n);
            if (results.size() < ef || d < results.top().dist) {
                frontier.push({d, n});
                if (!live_only || live_[n]) {
                    results.push({d, n});
                    if (results.size() > ef) results.pop();
                }
            }
        }
    }
    std::vector<Candidate> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

void HnswIndex::link(Slot node, Slot target, int layer) {
    auto& target_links = links(target, layer);
    const std::size_t cap = layer_cap(layer);
    if (target_links.size() < cap) {
        target_links.push_back(node);
        links(node, layer).push_back(target);
        return;
    }
    const float* tv = vec(target);
    Slot farthest = node;
    float far_dist = 1.0f - dot_f(tv, vec(node), params_.dim);
    for (Slot n : target_links) {
        const float d = 1.0f - dot_f(tv, vec(n), params_.dim);
        if (d > far_dist || (d == far_dist && n > farthest)) {
            far_dist = d;
            farthest = n;
        }
    }
    if (farthest == node) return;
    std::erase(target_links, farthest);
    std::erase(links(farthest, layer), target);
    target_links.push_back(node);
    links(node, layer).push_back(target);
}

void HnswIndex::insert_slot(std::uint64_t id, std::span<const double> v) {
    const auto slot = static_cast<Slot>(ids_.size());
    const int level = draw_level();
    const std::vector<float> q = normalized(v);
    data_.insert(data_.end(), q.begin(), q.end());
    ids_.push_back(id);
    const std::uint32_t version = version_of_[id]++;
    versions_.push_back(version);
    levels_.push_back(level);
    live_.push_back(true);
    links_.emplace_back(static_cast<std::size_t>(level) + 1);
    for (int l = 0; l <= level; ++l) links(slot, l).reserve(layer_cap(l));
    live_slot_[id] = slot;

    if (max_level_ < 0) {
        entry_ = slot;
        max_level_ = level;
        return;
    }
    const float* qp = vec(slot);
    Slot ep = entry_;
    if (level < max_level_) ep = greedy_descend(qp, ep, max_level_, level);
    std::vector<Candidate> entries{{distance(qp, ep), ep}};
    for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
        std::vector<Candidate> found = search_layer(qp, entries, params_.ef_construction, layer, false);
        const std::size_t take = std::min(params_.M, found.size());
        for (std::size_t i = 0; i < take; ++i) link(slot, found[i].slot, layer);
        if (links(slot, layer).empty() && take > 0) {
            // Every chosen neighbor was full of closer links; take the nearest one anyway.
            const Slot target = found[0].slot;
            auto& tl = links(target, layer);
            const float* tv = vec(target);
            auto worst = std::max_element(tl.begin(), tl.end(), [&](Slot a, Slot b) {
                return 1.0f - dot_f(tv, vec(a), params_.dim) < 1.0f - dot_f(tv, vec(b), params_.dim);
            });
            const Slot dropped = *worst;
            tl.erase(worst);
            std::erase(links(dropped, layer), target);
            tl.push_back(slot);
            links(slot, layer).push_back(target);
        }
        entries = std::move(found);
    }
    if (level > max_level_) {
        entry_ = slot;
        max_level_ = level;
    }
}

void HnswIndex::insert(std::uint64_t id, std::span<const double> v) {
    if (v.size() != params_.dim) throw DimError("vector", params_.dim, v.size());
    if (live_slot_.count(id) != 0) throw Error(ErrorCode::DuplicateId, "id " + std::to_string(id) + " already indexed");
    insert_slot(id, v);
}

void HnswIndex::replace(std::uint64_t id, std::span<const double> v) {
    if (v.size() != params_.dim) throw DimError("vector", params_.dim, v.size());
    if (auto it = live_slot_.find(id); it != live_slot_.end()) {
        live_[it->second] = false;
        live_slot_.erase(it);
    }
    insert_slot(id, v);
}

std::vector<Neighbor> HnswIndex::search(std::span<const double> query, std::size_t k, std::size_t ef) const {
    if (query.size() != params_.dim) throw DimError("query", params_.dim, query.size());
    if (live_slot_.empty()) throw Error(ErrorCode::EmptyIndex, "search on empty index");
    if (k == 0) return {};
    t_evaluations = 0;
    const std::vector<float> q = normalized(query);
    const Slot ep = greedy_descend(q.data(), entry_, max_level_, 0);
    const std::size_t beam = std::max(ef == 0 ? params_.ef_search : ef, k);
    const auto found = search_layer(q.data(), {{distance(q.data(), ep), ep}}, beam, 0, true);
    std::vector<Neighbor> out;
    for (std::size_t i = 0; i < found.size() && out.size() < k; ++i) {
        out.push_back({ids_[found[i].slot], static_cast<double>(found[i].dist)});
    }
    return out;
}

std::vector<Neighbor> HnswIndex::linear_scan(std::span<const double> query, std::size_t k) const {
    if (query.size() != params_.dim) throw DimError("query", params_.dim, query.size());
    const std::vector<float> q = normalized(query);
    std::vector<Candidate> all;
    all.reserve(live_slot_.size());
    for (Slot s = 0; s < ids_.size(); ++s) {
        if (live_[s]) all.push_back({1.0f - dot_f(q.data(), vec(s), params_.dim), s});
    }
    const std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
    std::vector<Neighbor> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) out.push_back({ids_[all[i].slot], static_cast<double>(all[i].dist)});
    return out;
}

}  // namespace spmem
