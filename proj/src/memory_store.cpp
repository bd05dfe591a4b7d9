#include "spmem/memory_store.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <unordered_set>

namespace spmem {

std::string_view source_name(RetrievalSource s) {
    switch (s) {
        case RetrievalSource::Stm: return "stm";
        case RetrievalSource::Ltm: return "ltm";
        case RetrievalSource::None: return "none";
    }
    return "none";
}

namespace {

Embedding mean_of(const std::vector<RetrievalItem>& items, std::size_t d) {
    Embedding out(d, 0.0);
    if (items.empty()) return out;
    for (const auto& it : items) {
        for (std::size_t i = 0; i < d; ++i) out[i] += it.embedding[i];
    }
    const double inv = 1.0 / static_cast<double>(items.size());
    for (auto& x : out) x *= inv;
    return out;
}

}  // namespace

MemoryStore::MemoryStore(const EngineConfig& cfg, MemoryFeatures features)
    : MemoryStore(cfg, features, RevBlockParams::from_config(cfg),
                  DecoderSet::passthrough(cfg.d, cfg.effective_position_scale())) {}

MemoryStore::MemoryStore(const EngineConfig& cfg, MemoryFeatures features, RevBlockParams params,
                         DecoderSet decoders)
    : cfg_(cfg),
      features_(features),
      params_(std::move(params)),
      decoders_(std::move(decoders)),
      octree_((cfg.validate(), cfg)),
      graph_(cfg),
      stm_(cfg.K_cache, cfg.lambda_cache, cfg.epsilon, cfg.d),
      index_(index_params()) {
    if (params_.d != cfg_.d) throw DimError("rev params d", cfg_.d, params_.d);
}

MemoryStore::MemoryStore(const MemoryStore& other)
    : cfg_(other.cfg_),
      features_(other.features_),
      params_(other.params_),
      decoders_(other.decoders_),
      octree_(other.cfg_),
      graph_(other.cfg_),
      stm_(other.stm_),
      index_(other.index_params()) {
    std::shared_lock lock(other.mutex_);
    octree_ = other.octree_;
    graph_ = other.graph_;
    stm_ = other.stm_;
    index_ = other.index_;
    step_ = other.step_;
}

HnswParams MemoryStore::index_params() const {
    HnswParams hp;
    hp.dim = 2 * cfg_.d;
    hp.M = cfg_.hnsw_M;
    hp.ef_construction = cfg_.hnsw_efConstruction;
    hp.ef_search = cfg_.hnsw_efSearch;
    hp.layer0_cap = cfg_.layer0_cap();
    hp.seed = mix_seed(cfg_.rng_seed, 0x484e5357ULL);
    return hp;
}

void MemoryStore::ensure_vector(std::string_view field, std::span<const double> v) const {
    require_dim(field, v, cfg_.d);
    require_finite(field, v);
}

void MemoryStore::set_decoders(DecoderSet decoders) {
    std::unique_lock lock(mutex_);
    decoders_ = std::move(decoders);
}

std::uint64_t MemoryStore::step() const {
    std::shared_lock lock(mutex_);
    return step_;
}

WriteReceipt MemoryStore::write(std::span<const double> v, const Position& p, const std::string& object_id,
                                double c_instr, bool force_node) {
    ensure_vector("v", v);
    if (!p.finite()) throw Error(ErrorCode::InvalidConfig, "position must be finite");
    const Position local = normalize_position(p, cfg_);

    std::unique_lock lock(mutex_);
    WriteReceipt receipt;
    const auto [key, created] = octree_.write(local, v, params_);
    receipt.leaf_key = key;
    receipt.leaf_created = created;
    if (features_.graph) {
        const ObserveResult obs = graph_.observe(v, local, c_instr, params_, force_node);
        receipt.node = obs.node;
        receipt.node_created = obs.created;
    }

    if (features_.ltm) {
        index_.replace(TokenRef{TokenSource::Leaf, key}.encode(), octree_.find(key)->token.state());
        if (receipt.node) {
            index_.replace(TokenRef{TokenSource::Node, *receipt.node}.encode(), graph_.node(*receipt.node)->token.state());
        }
    }

    if (features_.stm && !object_id.empty()) {
        receipt.evicted = stm_.insert(object_id, local, v, step_);
        receipt.stm_inserted = true;
    }
    receipt.step = step_++;
    return receipt;
}

Position MemoryStore::current_node_position() const {
    if (const auto cur = graph_.current()) return graph_.node(*cur)->position;
    return {};
}

const TokenChain* MemoryStore::token(TokenRef ref) const {
    if (ref.source == TokenSource::Leaf) {
        const OctreeLeaf* leaf = octree_.find(ref.key);
        return leaf ? &leaf->token : nullptr;
    }
    const GraphNode* node = graph_.node(ref.key);
    return node ? &node->token : nullptr;
}

Embedding MemoryStore::project_query(std::span<const double> v, const Position& p) const {
    require_dim("v", v, cfg_.d);
    const std::size_t d = cfg_.d;
    Embedding q(2 * d, 0.0);
    std::copy(v.begin(), v.end(), q.begin() + static_cast<std::ptrdiff_t>(d));
    const double scale = cfg_.effective_position_scale();
    for (int i = 0; i < 3 && static_cast<std::size_t>(i) < d; ++i) q[d + i] += p[i] / scale;
    return q;
}

std::vector<StmHit> MemoryStore::stm_lookup(std::span<const double> v_now, const Position& p_now,
                                            bool record_hits) const {
    require_dim("v_now", v_now, cfg_.d);
    const Position local = normalize_position(p_now, cfg_);
    std::shared_lock lock(mutex_);
    return stm_.retrieve(v_now, local, current_node_position(), cfg_.k_stm, record_hits);
}

std::vector<Neighbor> MemoryStore::token_scan(std::span<const double> query, std::size_t k) const {
    require_dim("query", query, 2 * cfg_.d);
    double qn = 0.0;
    for (double x : query) qn += x * x;
    qn = std::sqrt(qn);
    std::vector<Neighbor> all;
    all.reserve(octree_.size() + graph_.node_count());
    auto score = [&](TokenRef ref, const TokenChain& tok) {
        const double* s = tok.state().data();
        const std::size_t n = tok.state().size();
        double dot[4] = {0, 0, 0, 0};
        double sq[4] = {0, 0, 0, 0};
        std::size_t i = 0;
        for (; i + 4 <= n; i += 4) {
            for (std::size_t j = 0; j < 4; ++j) {
                dot[j] += query[i + j] * s[i + j];
                sq[j] += s[i + j] * s[i + j];
            }
        }
        for (; i < n; ++i) {
            dot[0] += query[i] * s[i];
            sq[0] += s[i] * s[i];
        }
        const double dsum = (dot[0] + dot[1]) + (dot[2] + dot[3]);
        const double sn = (sq[0] + sq[1]) + (sq[2] + sq[3]);
        const double denom = qn * std::sqrt(sn);
        all.push_back({ref.encode(), denom > 0.0 ? 1.0 - dsum / denom : 1.0});
    };
    for (MortonKey key : octree_.creation_order()) score({TokenSource::Leaf, key}, octree_.find(key)->token);
    for (const auto& node : graph_.nodes()) score({TokenSource::Node, node.id}, node.token);
    const std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(),
                      [](const Neighbor& a, const Neighbor& b) {
                          return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
                      });
    all.resize(take);
    return all;
}

std::vector<Neighbor> MemoryStore::search_locked(std::span<const double> query, std::size_t k,
                                                 LtmSearch mode) const {
    if (!features_.ltm || index_.empty()) return {};
    switch (mode) {
        case LtmSearch::Hnsw: return index_.search(query, k);
        case LtmSearch::LinearScan: return index_.linear_scan(query, k);
        case LtmSearch::TokenScan: return token_scan(query, k);
    }
    return {};
}

std::vector<Neighbor> MemoryStore::ltm_candidates(std::span<const double> query, std::size_t k,
                                                  LtmSearch mode) const {
    std::shared_lock lock(mutex_);
    return search_locked(query, k, mode);
}

std::vector<RetrievalItem> MemoryStore::decode_tokens(const std::vector<Neighbor>& hits) const {
    const std::size_t d = cfg_.d;
    struct Pending {
        TokenRef ref;
        const TokenChain* tok;
        double similarity;
    };
    std::vector<Pending> pending;
    for (const auto& h : hits) {
        const TokenRef ref = TokenRef::decode(h.id);
        const TokenChain* tok = token(ref);
        if (tok && tok->depth() > 0) pending.push_back({ref, tok, 1.0 - h.distance});
    }
    // First unroll step for every hit at once so the block weights are read once.
    std::vector<double> inverted;
    inverted.reserve(pending.size() * 2 * d);
    for (const auto& p : pending) inverted.insert(inverted.end(), p.tok->state().begin(), p.tok->state().end());
    rev_inverse_batch(params_, inverted, pending.size());

    std::vector<RetrievalItem> items;
    const std::size_t want = std::max<std::size_t>(cfg_.ltm_decode_depth, 1);
    for (std::size_t n = 0; n < pending.size(); ++n) {
        const Pending& p = pending[n];
        const std::span<const double> row(inverted.data() + n * 2 * d, 2 * d);
        const std::size_t steps = std::min<std::size_t>(want, p.tok->depth());
        std::vector<Embedding> history;
        if (steps == 1) {
            history.emplace_back(row.begin() + static_cast<std::ptrdiff_t>(d), row.end());
        } else {
            history = p.tok->unroll(params_, steps);
        }
        if (decoders_.mode == DecoderMode::Trained) history.front() = decoders_.reconstruct(row);
        for (auto& v_hat : history) {
            RetrievalItem item;
            item.position = decoders_.decode_position(v_hat);
            item.descriptor = decoders_.decode_descriptor(v_hat);
            item.similarity = p.similarity;
            item.token = p.ref;
            item.embedding = std::move(v_hat);
            if (item.embedding.size() != d) throw DimError("recovered embedding", d, item.embedding.size());
            items.push_back(std::move(item));
        }
    }
    return items;
}

RetrievalResult MemoryStore::ltm_retrieve(std::span<const double> v_now, const Position& p_now,
                                          LtmSearch mode) const {
    ensure_vector("v_now", v_now);
    const Embedding q = project_query(v_now, p_now);
    std::shared_lock lock(mutex_);
    RetrievalResult result;
    result.source = RetrievalSource::Ltm;
    result.items = decode_tokens(search_locked(q, cfg_.m_ltm, mode));
    result.aggregate = mean_of(result.items, cfg_.d);
    return result;
}

RetrievalResult MemoryStore::retrieve(std::span<const double> v_now, const Position& p_now) const {
    ensure_vector("v_now", v_now);
    const Position local = normalize_position(p_now, cfg_);
    const Embedding q = project_query(v_now, p_now);

    std::shared_lock lock(mutex_);
    if (step_ == 0) throw Error(ErrorCode::EmptyStore, "retrieve on a store with no writes");

    RetrievalResult result;
    if (features_.stm && !stm_.empty()) {
        auto hits = stm_.retrieve(v_now, local, current_node_position(), cfg_.k_stm, true);
        if (!hits.empty()) {
            result.best_stm_similarity = hits.front().similarity;
            if (hits.front().similarity >= cfg_.tau_sim) {
                result.source = RetrievalSource::Stm;
                for (auto& h : hits) {
                    RetrievalItem item;
                    item.embedding = h.entry.embedding;
                    item.position = denormalize_position(h.entry.position, cfg_);
                    item.descriptor = std::move(h.entry.embedding);
                    item.similarity = h.similarity;
                    item.object_id = std::move(h.entry.object_id);
                    result.items.push_back(std::move(item));
                }
                result.aggregate = mean_of(result.items, cfg_.d);
                return result;
            }
        }
    }
    if (features_.ltm && !index_.empty()) {
        result.source = RetrievalSource::Ltm;
        result.items = decode_tokens(index_.search(q, cfg_.m_ltm));
    }
    result.aggregate = mean_of(result.items, cfg_.d);
    return result;
}

void MemoryStore::rebuild_index() {
    std::unique_lock lock(mutex_);
    HnswIndex fresh(index_params());
    if (features_.ltm) {
        for (MortonKey key : octree_.creation_order()) {
            fresh.insert(TokenRef{TokenSource::Leaf, key}.encode(), octree_.find(key)->token.state());
        }
        for (const auto& node : graph_.nodes()) {
            fresh.insert(TokenRef{TokenSource::Node, node.id}.encode(), node.token.state());
        }
    }
    index_ = std::move(fresh);
}

double MemoryStore::index_recall(const std::vector<Embedding>& queries, std::size_t k) const {
    std::shared_lock lock(mutex_);
    if (queries.empty() || index_.empty() || k == 0) return 1.0;
    std::size_t found = 0;
    std::size_t wanted = 0;
    for (const auto& q : queries) {
        const auto exact = index_.linear_scan(q, k);
        const auto approx = index_.search(q, k);
        std::unordered_set<std::uint64_t> got;
        for (const auto& n : approx) got.insert(n.id);
        for (const auto& n : exact) found += got.count(n.id);
        wanted += exact.size();
    }
    return wanted == 0 ? 1.0 : static_cast<double>(found) / static_cast<double>(wanted);
}

StoreStats MemoryStore::stats() const {
    std::shared_lock lock(mutex_);
    StoreStats s;
    s.steps = step_;
    s.leaves = octree_.size();
    s.nodes = graph_.node_count();
    s.edges = graph_.edge_count();
    s.stm_entries = stm_.size();
    s.indexed_tokens = index_.size();
    s.index_slots = index_.slot_count();
    return s;
}

void MemoryStore::restore(SparseOctree octree, SemanticGraph graph, std::vector<StmEntry> stm_entries,
                          std::uint64_t step) {
    {
        std::unique_lock lock(mutex_);
        octree_ = std::move(octree);
        graph_ = std::move(graph);
        stm_.restore(std::move(stm_entries));
        step_ = step;
    }
    rebuild_index();
}

}  // namespace spmem
