#include "spmem/sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace spmem {

namespace {

constexpr double kOnStreetTol = 1e-9;

bool on_line(double v, double bs) {
    const double r = v / bs;
    return std::abs(r - std::round(r)) * bs < kOnStreetTol;
}

double snap_line(double v, double bs) { return std::round(v / bs) * bs; }

double manhattan(const Position& a, const Position& b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

void append_segment(Path& out, const Position& to, double step) {
    const Position from = out.back();
    const double len = distance(from, to);
    if (len <= 0.0) return;
    const auto n = static_cast<std::size_t>(std::ceil(len / step - 1e-12));
    for (std::size_t k = 1; k <= n; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(n);
        out.push_back({from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t, from.z + (to.z - from.z) * t});
    }
    out.back() = to;
}

// Appends `leg` (which starts at out.back()) without repeating the junction.
void extend(Path& out, const Path& leg) {
    if (leg.empty()) return;
    std::size_t first = (!out.empty() && out.back() == leg.front()) ? 1 : 0;
    out.insert(out.end(), leg.begin() + static_cast<std::ptrdiff_t>(first), leg.end());
}

bool has_turn(const Path& leg) {
    int heading = -1;
    for (std::size_t i = 1; i < leg.size(); ++i) {
        const double dx = leg[i].x - leg[i - 1].x;
        const double dy = leg[i].y - leg[i - 1].y;
        if (dx == 0.0 && dy == 0.0) continue;
        const int h = std::abs(dx) >= std::abs(dy) ? (dx > 0 ? 0 : 1) : (dy > 0 ? 2 : 3);
        if (heading >= 0 && h != heading) return true;
        heading = h;
    }
    return false;
}

}  // namespace

Embedding SyntheticWorld::observe(const Landmark& lm, Rng& rng) const {
    Embedding v = lm.embedding;
    std::normal_distribution<double> noise(0.0, options.jitter);
    for (std::size_t i = 3; i < v.size(); ++i) v[i] += noise(rng);
    return v;
}

Position SyntheticWorld::snap_to_street(const Position& p) const {
    const double bs = options.block_size;
    const double ext = extent();
    const double cx = std::clamp(p.x, 0.0, ext);
    const double cy = std::clamp(p.y, 0.0, ext);
    const Position vertical{std::clamp(snap_line(cx, bs), 0.0, ext), cy, 0.0};
    const Position horizontal{cx, std::clamp(snap_line(cy, bs), 0.0, ext), 0.0};
    const Position flat{p.x, p.y, 0.0};
    return distance(flat, vertical) <= distance(flat, horizontal) ? vertical : horizontal;
}

std::vector<Position> SyntheticWorld::intersections() const {
    std::vector<Position> out;
    for (std::size_t j = 0; j <= grid_side; ++j) {
        for (std::size_t i = 0; i <= grid_side; ++i) {
            out.push_back({static_cast<double>(i) * options.block_size, static_cast<double>(j) * options.block_size, 0.0});
        }
    }
    return out;
}

namespace {

std::vector<Position> street_exits(const SyntheticWorld& w, const Position& p) {
    const double bs = w.options.block_size;
    const bool vert = on_line(p.x, bs);
    const bool horiz = on_line(p.y, bs);
    if (vert && horiz) return {p};
    std::vector<Position> out;
    if (vert) {
        out.push_back({p.x, std::floor(p.y / bs) * bs, 0.0});
        out.push_back({p.x, std::ceil(p.y / bs) * bs, 0.0});
    } else {
        out.push_back({std::floor(p.x / bs) * bs, p.y, 0.0});
        out.push_back({std::ceil(p.x / bs) * bs, p.y, 0.0});
    }
    return out;
}

std::vector<Position> adjacent_intersections(const SyntheticWorld& w, const Position& p) {
    const double bs = w.options.block_size;
    const double ext = w.extent();
    std::vector<Position> out;
    const Position cand[4] = {{p.x + bs, p.y, 0.0}, {p.x - bs, p.y, 0.0}, {p.x, p.y + bs, 0.0}, {p.x, p.y - bs, 0.0}};
    for (const auto& c : cand) {
        if (c.x >= -kOnStreetTol && c.x <= ext + kOnStreetTol && c.y >= -kOnStreetTol && c.y <= ext + kOnStreetTol) {
            out.push_back(c);
        }
    }
    return out;
}

}  // namespace

Path SyntheticWorld::route(const Position& from, const Position& to, double step) const {
    if (!(step > 0.0)) throw Error(ErrorCode::InvalidConfig, "route step must be positive");
    const double bs = options.block_size;
    const Position a = snap_to_street(from);
    const Position b = snap_to_street(to);
    std::vector<Position> vertices{a};
    const bool same_vertical = on_line(a.x, bs) && on_line(b.x, bs) && std::abs(a.x - b.x) < kOnStreetTol;
    const bool same_horizontal = on_line(a.y, bs) && on_line(b.y, bs) && std::abs(a.y - b.y) < kOnStreetTol;
    if (!same_vertical && !same_horizontal) {
        double best = std::numeric_limits<double>::infinity();
        Position ba, bb;
        for (const auto& ea : street_exits(*this, a)) {
            for (const auto& eb : street_exits(*this, b)) {
                const double cost = manhattan(a, ea) + manhattan(ea, eb) + manhattan(eb, b);
                if (cost < best) {
                    best = cost;
                    ba = ea;
                    bb = eb;
                }
            }
        }
        vertices.push_back(ba);
        vertices.push_back({bb.x, ba.y, 0.0});
        vertices.push_back(bb);
    }
    vertices.push_back(b);
    Path out{a};
    for (std::size_t i = 1; i < vertices.size(); ++i) append_segment(out, vertices[i], step);
    return out;
}

double required_margin(const WorldOptions& options) {
    const double free_dims = options.d > 3 ? static_cast<double>(options.d - 3) : 0.0;
    return 2.0 * options.jitter * std::sqrt(free_dims);
}

double landmark_margin(const SyntheticWorld& world) {
    double margin = std::numeric_limits<double>::infinity();
    const auto& lms = world.landmarks;
    if (world.cluster_centers.size() < 2) return margin;
    for (std::size_t i = 0; i < lms.size(); ++i) {
        double foreign = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < world.cluster_centers.size(); ++c) {
            if (c == lms[i].cluster) continue;
            foreign = std::min(foreign, l2_distance(lms[i].embedding, world.cluster_centers[c]));
        }
        double own = 0.0;
        for (std::size_t j = 0; j < lms.size(); ++j) {
            if (j != i && lms[j].cluster == lms[i].cluster) own = std::max(own, l2_distance(lms[i].embedding, lms[j].embedding));
        }
        margin = std::min(margin, foreign - own);
    }
    return margin;
}

SyntheticWorld generate_world(std::uint64_t seed, std::size_t blocks, std::size_t landmarks_per_block,
                              const WorldOptions& options) {
    if (blocks == 0) throw Error(ErrorCode::InvalidConfig, "blocks must be >= 1");
    if (options.d < 4) throw Error(ErrorCode::InvalidConfig, "world embeddings need d >= 4");
    if (options.landmarks_per_cluster == 0) throw Error(ErrorCode::InvalidConfig, "landmarks_per_cluster must be >= 1");
    SyntheticWorld w;
    w.seed = seed;
    w.options = options;
    w.grid_side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(blocks))));
    if (w.grid_side * w.grid_side < blocks) ++w.grid_side;
    const double bs = options.block_size;

    Rng rng(mix_seed(seed, 0x574f524cULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t total = blocks * landmarks_per_block;
    for (std::size_t b = 0; b < blocks; ++b) {
        const double bx = static_cast<double>(b % w.grid_side) * bs;
        const double by = static_cast<double>(b / w.grid_side) * bs;
        for (std::size_t k = 0; k < landmarks_per_block; ++k) {
            Landmark lm;
            lm.id = "lm" + std::to_string(w.landmarks.size());
            const int side = static_cast<int>(unit(rng) * 4.0) % 4;
            const double along = bs * (0.1 + 0.8 * unit(rng));
            switch (side) {
                case 0: lm.street_point = {bx + along, by, 0.0}; break;
                case 1: lm.street_point = {bx + along, by + bs, 0.0}; break;
                case 2: lm.street_point = {bx, by + along, 0.0}; break;
                default: lm.street_point = {bx + bs, by + along, 0.0}; break;
            }
            lm.position = lm.street_point;
            lm.position.z = options.max_height * unit(rng);
            w.landmarks.push_back(std::move(lm));
        }
    }

    const std::size_t clusters = std::max<std::size_t>(1, (total + options.landmarks_per_cluster - 1) / options.landmarks_per_cluster);
    const double needed = required_margin(options);
    for (;;) {
        w.cluster_centers.clear();
        for (std::size_t c = 0; c < clusters; ++c) w.cluster_centers.push_back(gaussian_vector(rng, options.d, 1.0));
        for (std::size_t i = 0; i < total; ++i) {
            Landmark& lm = w.landmarks[i];
            lm.cluster = i % clusters;
            lm.embedding = gaussian_vector(rng, options.d, options.spread);
            for (std::size_t c = 0; c < options.d; ++c) lm.embedding[c] += w.cluster_centers[lm.cluster][c];
            for (int a = 0; a < 3; ++a) lm.embedding[a] = lm.position[a] / options.position_scale;
        }
        if (landmark_margin(w) > needed) break;
    }
    return w;
}

Episode plan_episode(const SyntheticWorld& world, std::uint64_t seed, std::size_t count) {
    if (world.landmarks.empty()) throw Error(ErrorCode::EmptyInput, "world has no landmarks");
    Rng rng(mix_seed(seed, 0x45504953ULL));
    const auto corners = world.intersections();
    Episode ep;
    const Position start = corners[std::uniform_int_distribution<std::size_t>(0, corners.size() - 1)(rng)];
    std::vector<std::size_t> order(world.landmarks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(count, order.size()));

    ep.expert_path = {start};
    for (std::size_t idx : order) {
        const Path leg = world.route(ep.expert_path.back(), world.landmarks[idx].street_point);
        ep.instructions.push_back({idx, has_turn(leg)});
        extend(ep.expert_path, leg);
    }
    ep.goal = ep.expert_path.back();
    ep.stop = start;
    return ep;
}

namespace {

class Walker {
public:
    Walker(const SyntheticWorld& world, Position start, double step)
        : world_(world), step_(step), path_{start} {}

    const Position& pos() const { return path_.back(); }
    Path& path() { return path_; }

    void follow(const Path& leg) { extend(path_, leg); }

    void go_street(const Position& target) { follow(world_.route(pos(), target, step_)); }

    void go_straight(const Position& target) {
        Path leg{pos()};
        append_segment(leg, target, step_);
        follow(leg);
    }

    void explore(std::size_t steps, Rng& rng) {
        const std::size_t goal = path_.size() + steps;
        while (path_.size() < goal) {
            const Position here = world_.snap_to_street(pos());
            auto options = street_exits(world_, here);
            if (options.size() == 1) options = adjacent_intersections(world_, here);
            if (options.empty()) break;
            const Position next = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
            Path leg = world_.route(pos(), next, step_);
            const std::size_t room = goal - path_.size() + 1;
            if (leg.size() > room) leg.resize(room);
            follow(leg);
            if (leg.size() <= 1) break;
        }
    }

private:
    const SyntheticWorld& world_;
    double step_;
    Path path_;
};

Embedding instruction_query(const Landmark& lm, double jitter, Rng& rng) {
    Embedding q = lm.embedding;
    std::normal_distribution<double> noise(0.0, jitter);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = i < 3 ? 0.0 : q[i] + noise(rng);
    return q;
}

}  // namespace

Episode run_episode(const SyntheticWorld& world, const Episode& plan, const MemoryStore* store, Policy policy,
                    const AgentOptions& options, std::uint64_t seed) {
    if (plan.expert_path.empty()) throw Error(ErrorCode::EmptyInput, "episode has no expert path");
    Episode ep = plan;
    Rng rng(mix_seed(seed, 0x4147454eULL));
    Walker walker(world, plan.expert_path.front(), options.step);

    switch (policy) {
        case Policy::Expert:
            walker.path() = plan.expert_path;
            break;
        case Policy::Random:
            walker.explore(plan.expert_path.size() - 1, rng);
            break;
        case Policy::MemoryGreedy:
            for (const auto& ins : plan.instructions) {
                const Landmark& lm = world.landmarks[ins.landmark];
                for (std::size_t attempt = 0; attempt < options.max_queries; ++attempt) {
                    const Embedding q = instruction_query(lm, options.query_jitter, rng);
                    std::optional<Position> target;
                    if (store != nullptr && store->step() > 0) {
                        const RetrievalResult res = store->retrieve(q, walker.pos());
                        double best = -2.0;
                        for (const auto& item : res.items) {
                            const double s = cosine_similarity(q, item.embedding);
                            if (s > best) {
                                best = s;
                                target = item.position;
                            }
                        }
                    }
                    if (target) {
                        const Position dest = world.snap_to_street(*target);
                        if (options.street_routing) {
                            walker.go_street(dest);
                        } else {
                            walker.go_straight(dest);
                        }
                        break;
                    }
                    walker.explore(options.explore_steps, rng);
                }
            }
            break;
    }
    ep.agent_path = walker.path();
    ep.stop = ep.agent_path.back();
    return ep;
}

std::vector<Observation> survey_observations(const SyntheticWorld& world, std::uint64_t seed, double sight_radius,
                                             double step) {
    Rng rng(mix_seed(seed, 0x53555256ULL));
    Path tour{Position{}};
    std::vector<bool> visited(world.landmarks.size(), false);
    for (std::size_t n = 0; n < world.landmarks.size(); ++n) {
        std::size_t next = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < world.landmarks.size(); ++i) {
            if (visited[i]) continue;
            const double c = manhattan(tour.back(), world.landmarks[i].street_point);
            if (c < best) {
                best = c;
                next = i;
            }
        }
        visited[next] = true;
        extend(tour, world.route(tour.back(), world.landmarks[next].street_point, step));
    }
    std::vector<Observation> out;
    for (const auto& wp : tour) {
        for (const auto& lm : world.landmarks) {
            if (distance(wp, lm.street_point) <= sight_radius) out.push_back({lm.position, lm.id, world.observe(lm, rng)});
        }
    }
    return out;
}

void populate_store(MemoryStore& store, const std::vector<Observation>& observations) {
    for (const auto& o : observations) store.write(o.embedding, o.position, o.object_id);
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::NoOctree: return "w/o octree";
        case Variant::NoGraph: return "w/o graph";
        case Variant::NoLtm: return "w/o LTM";
        case Variant::NoStm: return "w/o STM";
        case Variant::RandomPolicy: return "random policy";
    }
    return "unknown";
}

std::vector<Variant> all_variants() {
    return {Variant::Full, Variant::NoOctree, Variant::NoGraph, Variant::NoLtm, Variant::NoStm, Variant::RandomPolicy};
}

EngineConfig harness_config(const AblationOptions& options) {
    EngineConfig cfg;
    cfg.d = options.world.d;
    cfg.L = 256.0;
    cfg.Lambda = 16;
    cfg.tau_sim = 0.9;
    cfg.position_scale = options.world.position_scale;
    cfg.rng_seed = options.seed;
    cfg.validate();
    return cfg;
}

std::vector<AblationRow> run_ablation(const AblationOptions& options, const std::vector<Variant>& variants) {
    std::vector<std::vector<Episode>> results(variants.size());
    const EngineConfig base = harness_config(options);
    for (std::size_t wi = 0; wi < options.worlds; ++wi) {
        const std::uint64_t world_seed = mix_seed(options.seed, 0x1000 + wi);
        const SyntheticWorld world =
            generate_world(world_seed, options.blocks, options.landmarks_per_block, options.world);
        if (world.extent() >= base.L) throw Error(ErrorCode::InvalidConfig, "world does not fit in the store volume");
        const auto survey = survey_observations(world, world_seed, options.sight_radius, options.agent.step);

        std::vector<Episode> plans;
        for (std::size_t e = 0; e < options.episodes_per_world; ++e) {
            plans.push_back(plan_episode(world, mix_seed(world_seed, 0x2000 + e), options.landmarks_per_episode));
        }

        for (std::size_t vi = 0; vi < variants.size(); ++vi) {
            const Variant v = variants[vi];
            EngineConfig cfg = base;
            MemoryFeatures features;
            AgentOptions agent = options.agent;
            Policy policy = Policy::MemoryGreedy;
            switch (v) {
                case Variant::Full: break;
                case Variant::NoOctree: cfg.Lambda = options.coarse_lambda; break;
                case Variant::NoGraph:
                    features.graph = false;
                    agent.street_routing = false;
                    break;
                case Variant::NoLtm: features.ltm = false; break;
                case Variant::NoStm: features.stm = false; break;
                case Variant::RandomPolicy: policy = Policy::Random; break;
            }
            std::optional<MemoryStore> store;
            if (policy == Policy::MemoryGreedy) {
                store.emplace(cfg, features);
                populate_store(*store, survey);
            }
            for (std::size_t e = 0; e < plans.size(); ++e) {
                results[vi].push_back(run_episode(world, plans[e], store ? &*store : nullptr, policy, agent,
                                                  mix_seed(world_seed, 0x3000 + e)));
            }
        }
    }
    std::vector<AblationRow> rows;
    for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        const auto& eps = results[vi];
        rows.push_back({variants[vi], eps.size(), task_completion(eps), spd(eps), ndtw(eps)});
    }
    return rows;
}

void write_ablation_table(std::ostream& out, const std::vector<AblationRow>& rows) {
    const AblationRow* full = nullptr;
    for (const auto& r : rows) {
        if (r.variant == Variant::Full) full = &r;
    }
    out << std::left << std::setw(16) << "variant" << std::right << std::setw(9) << "episodes" << std::setw(9)
        << "TC(%)" << std::setw(9) << "SPD(m)" << std::setw(10) << "nDTW(%)";
    if (full) out << std::setw(9) << "dTC" << std::setw(9) << "dSPD" << std::setw(9) << "dnDTW";
    out << '\n';
    out << std::fixed << std::setprecision(2);
    for (const auto& r : rows) {
        out << std::left << std::setw(16) << variant_name(r.variant) << std::right << std::setw(9) << r.episodes
            << std::setw(9) << 100.0 * r.tc << std::setw(9) << r.spd << std::setw(10) << 100.0 * r.ndtw;
        if (full) {
            out << std::showpos << std::setw(9) << 100.0 * (r.tc - full->tc) << std::setw(9) << r.spd - full->spd
                << std::setw(9) << 100.0 * (r.ndtw - full->ndtw) << std::noshowpos;
        }
        out << '\n';
    }
    out.unsetf(std::ios::floatfield);
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "variant,episodes,tc,spd,ndtw\n";
    out << std::setprecision(10);
    for (const auto& r : rows) {
        out << variant_name(r.variant) << ',' << r.episodes << ',' << r.tc << ',' << r.spd << ',' << r.ndtw << '\n';
    }
}

}  // namespace spmem
