#include "spmem/stm_cache.hpp"

#include <algorithm>
#include <cmath>

namespace spmem {

double stm_score(const StmEntry& e, double lambda, std::uint64_t now) {
    const double age = now >= e.timestamp ? static_cast<double>(now - e.timestamp) : 0.0;
    return lambda * static_cast<double>(e.freq) - (1.0 - lambda) * age;
}

StmCache::StmCache(std::size_t capacity, double lambda, double epsilon, std::size_t dim)
    : capacity_(capacity), lambda_(lambda), epsilon_(epsilon), dim_(dim) {
    if (capacity_ == 0) throw Error(ErrorCode::InvalidConfig, "STM capacity must be > 0");
}

StmCache::StmCache(const StmCache& other)
    : capacity_(other.capacity_), lambda_(other.lambda_), epsilon_(other.epsilon_), dim_(other.dim_) {
    std::lock_guard lock(other.hit_mutex_);
    entries_ = other.entries_;
}

StmCache& StmCache::operator=(const StmCache& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(hit_mutex_, other.hit_mutex_);
    capacity_ = other.capacity_;
    lambda_ = other.lambda_;
    epsilon_ = other.epsilon_;
    dim_ = other.dim_;
    entries_ = other.entries_;
    return *this;
}

std::optional<StmEntry> StmCache::insert(const std::string& object_id, const Position& p, std::span<const double> v,
                                         std::uint64_t now) {
    require_dim("v", v, dim_);
    std::lock_guard lock(hit_mutex_);
    for (auto& e : entries_) {
        if (e.object_id == object_id) {
            e.embedding.assign(v.begin(), v.end());
            e.timestamp = now;
            ++e.freq;
            return std::nullopt;
        }
    }
    StmEntry fresh{object_id, p, Embedding(v.begin(), v.end()), now, 1};
    if (entries_.size() < capacity_) {
        entries_.push_back(std::move(fresh));
        return std::nullopt;
    }
    std::size_t victim = 0;
    double victim_score = stm_score(entries_[0], lambda_, now);
    for (std::size_t i = 1; i < entries_.size(); ++i) {
        const double s = stm_score(entries_[i], lambda_, now);
        if (s < victim_score || (s == victim_score && entries_[i].timestamp < entries_[victim].timestamp)) {
            victim = i;
            victim_score = s;
        }
    }
    StmEntry evicted = std::move(entries_[victim]);
    entries_[victim] = std::move(fresh);
    return evicted;
}

std::vector<StmHit> StmCache::retrieve(std::span<const double> v_now, const Position& p_now,
                                       const Position& current_node_pos, std::size_t k, bool record_hits) const {
    require_dim("v_now", v_now, dim_);
    std::lock_guard lock(hit_mutex_);
    const Position q_rel = p_now - current_node_pos;
    std::vector<StmHit> hits;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const Position rel = entries_[i].position - current_node_pos;
        if (distance(rel, q_rel) <= epsilon_) {
            hits.push_back({i, {}, cosine_similarity(v_now, entries_[i].embedding)});
        }
    }
    std::stable_sort(hits.begin(), hits.end(),
                     [](const StmHit& a, const StmHit& b) { return a.similarity > b.similarity; });
    if (hits.size() > k) hits.resize(k);
    for (auto& h : hits) {
        if (record_hits) ++entries_[h.index].freq;
        h.entry = entries_[h.index];
    }
    return hits;
}

void StmCache::restore(std::vector<StmEntry> entries) {
    if (entries.size() > capacity_) throw Error(ErrorCode::RangeError, "more STM entries than capacity");
    for (const auto& e : entries) require_dim("stm embedding", e.embedding, dim_);
    std::lock_guard lock(hit_mutex_);
    entries_ = std::move(entries);
}

}  // namespace spmem
