#include "spmem/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace spmem {

bool Position::finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
}

double distance(const Position& a, const Position& b) {
    const Position d = a - b;
    return std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
}

double EngineConfig::effective_delta() const {
    return delta > 0.0 ? delta : 0.5 * std::sqrt(static_cast<double>(d));
}

std::size_t EngineConfig::effective_hidden() const {
    return rev_hidden > 0 ? rev_hidden : d;
}

double EngineConfig::effective_position_scale() const {
    return position_scale > 0.0 ? position_scale : L;
}

void EngineConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
    if (d == 0) fail("d must be > 0");
    if (Lambda <= 0 || Lambda > 21) fail("Lambda must be in (0, 21]");
    if (!(L > 0.0) || !std::isfinite(L)) fail("L must be > 0");
    if (!origin.finite()) fail("origin must be finite");
    if (lambda_cache < 0.0 || lambda_cache > 1.0) fail("lambda_cache must be in [0, 1]");
    if (K_cache == 0) fail("K_cache must be > 0");
    if (!(epsilon > 0.0)) fail("epsilon must be > 0");
    if (tau_sim < 0.0 || tau_sim > 1.0) fail("tau_sim must be in [0, 1]");
    if (k_stm == 0) fail("k_stm must be > 0");
    if (m_ltm == 0) fail("m_ltm must be > 0");
    if (hnsw_M < 2) fail("hnsw_M must be >= 2");
    if (hnsw_efSearch < m_ltm) fail("hnsw_efSearch must be >= m_ltm");
    if (hnsw_efConstruction == 0) fail("hnsw_efConstruction must be > 0");
    if (hnsw_layer0_factor == 0) fail("hnsw_layer0_factor must be > 0");
    if (rev_layers == 0) fail("rev_layers must be > 0");
    if (ltm_decode_depth == 0) fail("ltm_decode_depth must be > 0");
    if (alpha_w < 0.0 || beta_w < 0.0) fail("alpha_w and beta_w must be >= 0");
}

namespace {

using Setter = std::function<void(EngineConfig&, const std::string&)>;

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T value{};
    is >> value;
    if (is.fail() || !(is >> std::ws).eof()) {
        throw Error(ErrorCode::ParseError, "bad value for '" + key + "': " + text);
    }
    return value;
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
#define SPMEM_FIELD(name, type) \
    t[#name] = [](EngineConfig& c, const std::string& v) { c.name = parse_number<type>(#name, v); };
        SPMEM_FIELD(d, std::size_t)
        SPMEM_FIELD(Lambda, int)
        SPMEM_FIELD(L, double)
        SPMEM_FIELD(delta, double)
        SPMEM_FIELD(alpha_w, double)
        SPMEM_FIELD(beta_w, double)
        SPMEM_FIELD(lambda_cache, double)
        SPMEM_FIELD(K_cache, std::size_t)
        SPMEM_FIELD(epsilon, double)
        SPMEM_FIELD(tau_sim, double)
        SPMEM_FIELD(k_stm, std::size_t)
        SPMEM_FIELD(m_ltm, std::size_t)
        SPMEM_FIELD(hnsw_M, std::size_t)
        SPMEM_FIELD(hnsw_efConstruction, std::size_t)
        SPMEM_FIELD(hnsw_efSearch, std::size_t)
        SPMEM_FIELD(hnsw_layer0_factor, std::size_t)
        SPMEM_FIELD(rev_layers, std::size_t)
        SPMEM_FIELD(rev_hidden, std::size_t)
        SPMEM_FIELD(rev_init_scale, double)
        SPMEM_FIELD(position_scale, double)
        SPMEM_FIELD(ltm_decode_depth, std::size_t)
        SPMEM_FIELD(rng_seed, std::uint64_t)
#undef SPMEM_FIELD
        t["origin_x"] = [](EngineConfig& c, const std::string& v) { c.origin.x = parse_number<double>("origin_x", v); };
        t["origin_y"] = [](EngineConfig& c, const std::string& v) { c.origin.y = parse_number<double>("origin_y", v); };
        t["origin_z"] = [](EngineConfig& c, const std::string& v) { c.origin.z = parse_number<double>("origin_z", v); };
        return t;
    }();
    return table;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

EngineConfig parse_config(std::istream& in) {
    EngineConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        it->second(cfg, value);
    }
    cfg.validate();
    return cfg;
}

EngineConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path);
    return parse_config(in);
}

namespace {

// Shortest text that parses back to the same double.
std::string exact(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

void write_config(std::ostream& out, const EngineConfig& c) {
    out << "d=" << c.d << "\nLambda=" << c.Lambda << "\nL=" << exact(c.L) << "\norigin_x=" << exact(c.origin.x)
        << "\norigin_y=" << exact(c.origin.y) << "\norigin_z=" << exact(c.origin.z) << "\ndelta=" << exact(c.delta)
        << "\nalpha_w=" << exact(c.alpha_w) << "\nbeta_w=" << exact(c.beta_w)
        << "\nlambda_cache=" << exact(c.lambda_cache) << "\nK_cache=" << c.K_cache
        << "\nepsilon=" << exact(c.epsilon) << "\ntau_sim=" << exact(c.tau_sim) << "\nk_stm=" << c.k_stm
        << "\nm_ltm=" << c.m_ltm << "\nhnsw_M=" << c.hnsw_M << "\nhnsw_efConstruction=" << c.hnsw_efConstruction
        << "\nhnsw_efSearch=" << c.hnsw_efSearch << "\nhnsw_layer0_factor=" << c.hnsw_layer0_factor
        << "\nrev_layers=" << c.rev_layers << "\nrev_hidden=" << c.rev_hidden
        << "\nrev_init_scale=" << exact(c.rev_init_scale) << "\nposition_scale=" << exact(c.position_scale)
        << "\nltm_decode_depth=" << c.ltm_decode_depth << "\nrng_seed=" << c.rng_seed << "\n";
}

double dot(std::span<const double> a, std::span<const double> b) {
    // Four partial sums keep the reduction pipelined.
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    const std::size_t n = a.size();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimError("b", a.size(), b.size());
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

Position normalize_position(const Position& raw, const EngineConfig& cfg) {
    const Position local = raw - cfg.origin;
    for (int axis = 0; axis < 3; ++axis) {
        const double v = local[axis];
        if (!std::isfinite(v) || v < 0.0 || v >= cfg.L) throw OutOfWorldError(axis, raw[axis]);
    }
    return local;
}

Position denormalize_position(const Position& local, const EngineConfig& cfg) {
    return local + cfg.origin;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Embedding gaussian_vector(Rng& rng, std::size_t n, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    Embedding v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

void require_dim(std::string_view field, std::span<const double> v, std::size_t expected) {
    if (v.size() != expected) throw DimError(std::string(field), expected, v.size());
}

void require_finite(std::string_view what, std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorCode::NumericOverflow, std::string(what) + " is not finite");
    }
}

}  // namespace spmem
