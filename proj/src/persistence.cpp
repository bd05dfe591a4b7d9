#include "spmem/persistence.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace spmem {

static_assert(std::endian::native == std::endian::little, "store files assume a little-endian host");

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (size > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
        crc = crc32(crc, data, chunk);
        data += chunk;
        size -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

constexpr char kMagic[4] = {'M', '4', 'N', 'V'};
constexpr std::size_t kLengthOffset = 6;

class Writer {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
        buf.insert(buf.end(), p, p + sizeof(T));
    }
    void u8(std::uint8_t v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f64(double v) { put(v); }
    void doubles(std::span<const double> v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
        buf.insert(buf.end(), p, p + v.size() * sizeof(double));
    }
    void pos(const Position& p) {
        f64(p.x);
        f64(p.y);
        f64(p.z);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf.insert(buf.end(), s.begin(), s.end());
    }

    std::vector<std::uint8_t> buf;
};

class Reader {
public:
    Reader(const std::vector<std::uint8_t>& b, std::size_t end) : buf_(b), end_(end) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + at_, sizeof(T));
        at_ += sizeof(T);
        return v;
    }
    std::uint8_t u8() { return get<std::uint8_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    double f64() { return get<double>(); }
    std::vector<double> doubles(std::uint64_t n) {
        if (n > (end_ - at_) / sizeof(double)) truncated();
        std::vector<double> v(n);
        std::memcpy(v.data(), buf_.data() + at_, n * sizeof(double));
        at_ += n * sizeof(double);
        return v;
    }
    Position pos() {
        const double x = f64();
        const double y = f64();
        const double z = f64();
        return {x, y, z};
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + at_), n);
        at_ += n;
        return s;
    }
    std::size_t offset() const { return at_; }

private:
    [[noreturn]] void truncated() const { throw Error(ErrorCode::TruncatedFile, "store file ends inside a record"); }
    void need(std::size_t n) const {
        if (n > end_ - at_) truncated();
    }

    const std::vector<std::uint8_t>& buf_;
    std::size_t end_;
    std::size_t at_ = 0;
};

void put_config(Writer& w, const EngineConfig& c) {
    w.u64(c.d);
    w.put<std::int32_t>(c.Lambda);
    w.f64(c.L);
    w.pos(c.origin);
    w.f64(c.delta);
    w.f64(c.alpha_w);
    w.f64(c.beta_w);
    w.f64(c.lambda_cache);
    w.u64(c.K_cache);
    w.f64(c.epsilon);
    w.f64(c.tau_sim);
    w.u64(c.k_stm);
    w.u64(c.m_ltm);
    w.u64(c.hnsw_M);
    w.u64(c.hnsw_efConstruction);
    w.u64(c.hnsw_efSearch);
    w.u64(c.hnsw_layer0_factor);
    w.u64(c.rev_layers);
    w.u64(c.rev_hidden);
    w.f64(c.rev_init_scale);
    w.f64(c.position_scale);
    w.u64(c.ltm_decode_depth);
    w.u64(c.rng_seed);
}

EngineConfig get_config(Reader& r) {
    EngineConfig c;
    c.d = r.u64();
    c.Lambda = r.get<std::int32_t>();
    c.L = r.f64();
    c.origin = r.pos();
    c.delta = r.f64();
    c.alpha_w = r.f64();
    c.beta_w = r.f64();
    c.lambda_cache = r.f64();
    c.K_cache = r.u64();
    c.epsilon = r.f64();
    c.tau_sim = r.f64();
    c.k_stm = r.u64();
    c.m_ltm = r.u64();
    c.hnsw_M = r.u64();
    c.hnsw_efConstruction = r.u64();
    c.hnsw_efSearch = r.u64();
    c.hnsw_layer0_factor = r.u64();
    c.rev_layers = r.u64();
    c.rev_hidden = r.u64();
    c.rev_init_scale = r.f64();
    c.position_scale = r.f64();
    c.ltm_decode_depth = r.u64();
    c.rng_seed = r.u64();
    c.validate();
    return c;
}

void put_perceptron(Writer& w, const Perceptron& p) {
    w.u64(p.in);
    w.u64(p.hidden);
    w.u64(p.out);
    w.u8(static_cast<std::uint8_t>(p.act));
    w.u8(p.has_skip() ? 1 : 0);
    w.doubles(p.flatten());
}

Perceptron get_perceptron(Reader& r) {
    const std::uint64_t in = r.u64();
    const std::uint64_t hidden = r.u64();
    const std::uint64_t out = r.u64();
    const std::uint8_t act = r.u8();
    const std::uint8_t skip = r.u8();
    if (act > static_cast<std::uint8_t>(Activation::Identity)) throw Error(ErrorCode::ParseError, "unknown activation");
    if (in > (1u << 20) || hidden > (1u << 20) || out > (1u << 20)) throw Error(ErrorCode::ParseError, "layer too wide");
    Perceptron p = Perceptron::zeros(in, hidden, out, static_cast<Activation>(act), skip != 0);
    p.assign(r.doubles(p.parameter_count()));
    return p;
}

void put_token(Writer& w, const TokenChain& t) {
    w.u64(t.state().size());
    w.u32(t.depth());
    w.doubles(t.state());
    for (const auto& e : t.displaced()) w.doubles(e);
}

TokenChain get_token(Reader& r, std::size_t d) {
    const std::uint64_t len = r.u64();
    if (len != 2 * d) throw DimError("token state", 2 * d, len);
    const std::uint32_t depth = r.u32();
    auto state = r.doubles(len);
    std::vector<Embedding> displaced;
    for (std::uint32_t i = 0; i < depth; ++i) displaced.push_back(r.doubles(d));
    return TokenChain::restore(std::move(state), depth, std::move(displaced));
}

}  // namespace

std::vector<std::uint8_t> serialize_store(const MemoryStore& store) {
    const EngineConfig& cfg = store.config();
    Writer w;
    w.buf.insert(w.buf.end(), kMagic, kMagic + 4);
    w.put<std::uint16_t>(kStoreFormatVersion);
    w.u64(0);  // file length, patched below
    put_config(w, cfg);
    const MemoryFeatures& f = store.features();
    w.u8(static_cast<std::uint8_t>((f.graph ? 1 : 0) | (f.stm ? 2 : 0) | (f.ltm ? 4 : 0)));

    const RevBlockParams& rp = store.rev_params();
    w.u64(rp.d);
    w.u64(rp.hidden);
    w.u64(rp.layers.size());
    for (const auto& layer : rp.layers) {
        put_perceptron(w, layer.F);
        put_perceptron(w, layer.G);
    }

    const DecoderSet& dec = store.decoders();
    w.u8(static_cast<std::uint8_t>(dec.mode));
    w.f64(dec.position_scale);
    put_perceptron(w, dec.pi_p);
    put_perceptron(w, dec.pi_d);
    put_perceptron(w, dec.pi_v);

    const SparseOctree& oct = store.octree();
    w.u64(oct.size());
    for (MortonKey key : oct.creation_order()) {
        const OctreeLeaf* leaf = oct.find(key);
        w.u64(key);
        w.u32(leaf->write_count);
        put_token(w, leaf->token);
    }

    const SemanticGraph& g = store.graph();
    w.u64(g.node_count());
    for (const auto& n : g.nodes()) {
        w.u64(n.id);
        w.pos(n.position);
        w.doubles(n.descriptor);
        w.u32(n.visit_count);
        put_token(w, n.token);
    }
    const auto edges = g.edges();
    w.u64(edges.size());
    for (const auto& e : edges) {
        w.u64(e.from);
        w.u64(e.to);
        w.f64(e.weight);
        w.u32(e.observation_count);
    }
    w.u8(g.current() ? 1 : 0);
    w.u64(g.current().value_or(0));

    const auto& entries = store.stm().entries();
    w.u64(entries.size());
    for (const auto& e : entries) {
        w.str(e.object_id);
        w.pos(e.position);
        w.doubles(e.embedding);
        w.u64(e.timestamp);
        w.u32(e.freq);
    }
    w.u64(store.step());

    const std::uint64_t total = w.buf.size() + sizeof(std::uint32_t);
    std::memcpy(w.buf.data() + kLengthOffset, &total, sizeof(total));
    w.u32(crc32_of(w.buf.data(), w.buf.size()));
    return std::move(w.buf);
}

MemoryStore deserialize_store(const std::vector<std::uint8_t>& bytes) {
    const std::size_t header = 4 + sizeof(std::uint16_t) + sizeof(std::uint64_t);
    if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, "store file shorter than its magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not a store file");
    if (bytes.size() < header) throw Error(ErrorCode::TruncatedFile, "store file shorter than its header");
    std::uint16_t version = 0;
    std::memcpy(&version, bytes.data() + 4, sizeof(version));
    if (version == 0 || version > kStoreFormatVersion) {
        throw Error(ErrorCode::UnsupportedVersion, "store format version " + std::to_string(version));
    }
    std::uint64_t declared = 0;
    std::memcpy(&declared, bytes.data() + kLengthOffset, sizeof(declared));
    if (bytes.size() < declared) {
        throw Error(ErrorCode::TruncatedFile,
                    "store file has " + std::to_string(bytes.size()) + " of " + std::to_string(declared) + " bytes");
    }
    if (declared < header + sizeof(std::uint32_t) || bytes.size() != declared) {
        throw Error(ErrorCode::BadChecksum, "store file length does not match its header");
    }
    const std::size_t body = bytes.size() - sizeof(std::uint32_t);
    std::uint32_t stored = 0;
    std::memcpy(&stored, bytes.data() + body, sizeof(stored));
    if (crc32_of(bytes.data(), body) != stored) throw Error(ErrorCode::BadChecksum, "store file checksum mismatch");

    Reader r(bytes, body);
    r.get<std::array<std::uint8_t, header>>();
    const EngineConfig cfg = get_config(r);
    const std::uint8_t flags = r.u8();
    MemoryFeatures features{(flags & 1) != 0, (flags & 2) != 0, (flags & 4) != 0};

    RevBlockParams rp;
    rp.d = r.u64();
    rp.hidden = r.u64();
    const std::uint64_t layers = r.u64();
    for (std::uint64_t i = 0; i < layers; ++i) {
        CouplingLayer layer;
        layer.F = get_perceptron(r);
        layer.G = get_perceptron(r);
        rp.layers.push_back(std::move(layer));
    }

    DecoderSet dec;
    const std::uint8_t mode = r.u8();
    if (mode > static_cast<std::uint8_t>(DecoderMode::Trained)) throw Error(ErrorCode::ParseError, "unknown decoder mode");
    dec.mode = static_cast<DecoderMode>(mode);
    dec.position_scale = r.f64();
    dec.pi_p = get_perceptron(r);
    dec.pi_d = get_perceptron(r);
    dec.pi_v = get_perceptron(r);

    MemoryStore store(cfg, features, std::move(rp), std::move(dec));
    const std::size_t d = cfg.d;

    SparseOctree octree(cfg);
    const std::uint64_t leaves = r.u64();
    for (std::uint64_t i = 0; i < leaves; ++i) {
        OctreeLeaf leaf;
        leaf.key = r.u64();
        leaf.write_count = r.u32();
        leaf.token = get_token(r, d);
        octree.restore_leaf(std::move(leaf));
    }

    SemanticGraph graph(cfg);
    const std::uint64_t nodes = r.u64();
    for (std::uint64_t i = 0; i < nodes; ++i) {
        GraphNode n;
        n.id = r.u64();
        n.position = r.pos();
        n.descriptor = r.doubles(d);
        n.visit_count = r.u32();
        n.token = get_token(r, d);
        graph.restore_node(std::move(n));
    }
    const std::uint64_t edges = r.u64();
    for (std::uint64_t i = 0; i < edges; ++i) {
        GraphEdge e;
        e.from = r.u64();
        e.to = r.u64();
        e.weight = r.f64();
        e.observation_count = r.u32();
        graph.restore_edge(e);
    }
    const bool has_current = r.u8() != 0;
    const std::uint64_t current = r.u64();
    graph.restore_current(has_current ? std::optional<NodeId>(current) : std::nullopt);

    std::vector<StmEntry> entries;
    const std::uint64_t stm_count = r.u64();
    for (std::uint64_t i = 0; i < stm_count; ++i) {
        StmEntry e;
        e.object_id = r.str();
        e.position = r.pos();
        e.embedding = r.doubles(d);
        e.timestamp = r.u64();
        e.freq = r.u32();
        entries.push_back(std::move(e));
    }
    const std::uint64_t step = r.u64();
    if (r.offset() != body) throw Error(ErrorCode::ParseError, "trailing bytes before checksum");

    store.restore(std::move(octree), std::move(graph), std::move(entries), step);
    return store;
}

std::size_t save_store(const MemoryStore& store, const std::string& path) {
    const auto bytes = serialize_store(store);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
    return bytes.size();
}

MemoryStore load_store(const std::string& path, std::size_t verify_samples, LoadReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    MemoryStore store = deserialize_store(bytes);
    LoadReport rep;
    rep.bytes = bytes.size();
    if (verify_samples > 0 && !store.index().empty()) {
        std::vector<Embedding> queries;
        std::vector<const TokenChain*> tokens;
        for (MortonKey key : store.octree().creation_order()) tokens.push_back(&store.octree().find(key)->token);
        for (const auto& n : store.graph().nodes()) tokens.push_back(&n.token);
        const std::size_t n = std::min(verify_samples, tokens.size());
        for (std::size_t i = 0; i < n; ++i) queries.push_back(tokens[i * tokens.size() / n]->state());
        rep.verify_queries = queries.size();
        rep.recall = store.index_recall(queries, store.config().m_ltm);
    }
    if (report) *report = rep;
    return store;
}

}  // namespace spmem
