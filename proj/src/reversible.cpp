#include "spmem/reversible.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spmem {

namespace {

double activate(Activation act, double x) {
    return act == Activation::Tanh ? std::tanh(x) : x;
}

void axpy(double a, const double* __restrict x, double* __restrict y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// y += x[0..cols) weighted rows of w (row stride n), four rows per pass.
void gemv_t(const double* __restrict x, std::size_t cols, const double* __restrict w, double* __restrict y,
            std::size_t n) {
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
        const double a0 = x[j], a1 = x[j + 1], a2 = x[j + 2], a3 = x[j + 3];
        const double* w0 = w + j * n;
        const double* w1 = w0 + n;
        const double* w2 = w1 + n;
        const double* w3 = w2 + n;
        for (std::size_t i = 0; i < n; ++i) y[i] += a0 * w0[i] + a1 * w1[i] + a2 * w2[i] + a3 * w3[i];
    }
    for (; j < cols; ++j) axpy(x[j], w + j * n, y, n);
}

void check_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorCode::NumericOverflow, "non-finite value in reversible block");
    }
}

}  // namespace

Perceptron Perceptron::zeros(std::size_t in, std::size_t hidden, std::size_t out, Activation act,
                             bool with_skip) {
    Perceptron p;
    p.in = in;
    p.hidden = hidden;
    p.out = out;
    p.act = act;
    p.w1t.assign(in * hidden, 0.0);
    p.b1.assign(hidden, 0.0);
    p.w2t.assign(hidden * out, 0.0);
    p.b2.assign(out, 0.0);
    if (with_skip) p.skipt.assign(in * out, 0.0);
    return p;
}

Perceptron Perceptron::random(std::size_t in, std::size_t hidden, std::size_t out, Activation act,
                              bool with_skip, double scale, Rng& rng) {
    Perceptron p = zeros(in, hidden, out, act, with_skip);
    std::normal_distribution<double> first(0.0, scale / std::sqrt(static_cast<double>(in)));
    std::normal_distribution<double> second(0.0, scale / std::sqrt(static_cast<double>(hidden)));
    for (double& w : p.w1t) w = first(rng);
    for (double& w : p.w2t) w = second(rng);
    for (double& w : p.skipt) w = first(rng);
    return p;
}

std::size_t Perceptron::parameter_count() const {
    return w1t.size() + b1.size() + w2t.size() + b2.size() + skipt.size();
}

void Perceptron::apply(std::span<const double> x, std::span<double> y, std::span<double> h) const {
    for (std::size_t k = 0; k < hidden; ++k) h[k] = b1[k];
    gemv_t(x.data(), in, w1t.data(), h.data(), hidden);
    for (std::size_t k = 0; k < hidden; ++k) h[k] = activate(act, h[k]);
    for (std::size_t o = 0; o < out; ++o) y[o] = b2[o];
    gemv_t(h.data(), hidden, w2t.data(), y.data(), out);
    if (has_skip()) gemv_t(x.data(), in, skipt.data(), y.data(), out);
}

void Perceptron::apply_batch(const double* x, std::size_t x_stride, std::size_t rows, double* y,
                             double* h) const {
    for (std::size_t r = 0; r < rows; ++r) std::copy(b1.begin(), b1.end(), h + r * hidden);
    // Column blocks small enough that each weight block stays cached across rows.
    constexpr std::size_t kBlock = 32;
    for (std::size_t j = 0; j < in; j += kBlock) {
        const std::size_t cols = std::min(kBlock, in - j);
        for (std::size_t r = 0; r < rows; ++r) {
            gemv_t(x + r * x_stride + j, cols, &w1t[j * hidden], h + r * hidden, hidden);
        }
    }
    for (std::size_t i = 0; i < rows * hidden; ++i) h[i] = activate(act, h[i]);
    for (std::size_t r = 0; r < rows; ++r) std::copy(b2.begin(), b2.end(), y + r * out);
    for (std::size_t k = 0; k < hidden; k += kBlock) {
        const std::size_t cols = std::min(kBlock, hidden - k);
        for (std::size_t r = 0; r < rows; ++r) gemv_t(h + r * hidden + k, cols, &w2t[k * out], y + r * out, out);
    }
    if (has_skip()) {
        for (std::size_t j = 0; j < in; j += kBlock) {
            const std::size_t cols = std::min(kBlock, in - j);
            for (std::size_t r = 0; r < rows; ++r) {
                gemv_t(x + r * x_stride + j, cols, &skipt[j * out], y + r * out, out);
            }
        }
    }
}

std::vector<double> Perceptron::operator()(std::span<const double> x) const {
    require_dim("perceptron input", x, in);
    std::vector<double> y(out);
    std::vector<double> h(hidden);
    apply(x, y, h);
    return y;
}

std::vector<double> Perceptron::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto* part : {&w1t, &b1, &w2t, &b2, &skipt}) flat.insert(flat.end(), part->begin(), part->end());
    return flat;
}

void Perceptron::assign(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw DimError("perceptron parameters", parameter_count(), flat.size());
    std::size_t pos = 0;
    for (auto* part : {&w1t, &b1, &w2t, &b2, &skipt}) {
        for (double& w : *part) w = flat[pos++];
    }
}

RevBlockParams RevBlockParams::random(std::size_t d, std::size_t hidden, std::size_t layers,
                                      double init_scale, std::uint64_t seed) {
    RevBlockParams p;
    p.d = d;
    p.hidden = hidden;
    Rng rng(mix_seed(seed, 0x5245565fULL));
    for (std::size_t l = 0; l < layers; ++l) {
        CouplingLayer layer;
        layer.F = Perceptron::random(d, hidden, d, Activation::Tanh, false, init_scale, rng);
        layer.G = Perceptron::random(d, hidden, d, Activation::Tanh, false, init_scale, rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

RevBlockParams RevBlockParams::zeros(std::size_t d, std::size_t hidden, std::size_t layers) {
    RevBlockParams p;
    p.d = d;
    p.hidden = hidden;
    for (std::size_t l = 0; l < layers; ++l) {
        p.layers.push_back({Perceptron::zeros(d, hidden, d, Activation::Tanh),
                            Perceptron::zeros(d, hidden, d, Activation::Tanh)});
    }
    return p;
}

RevBlockParams RevBlockParams::from_config(const EngineConfig& cfg) {
    return random(cfg.d, cfg.effective_hidden(), cfg.rev_layers, cfg.rev_init_scale, cfg.rng_seed);
}

void rev_forward_inplace(const RevBlockParams& params, std::span<double> h1, std::span<double> h2,
                         std::span<double> scratch) {
    const std::size_t d = params.d;
    std::span<double> delta = scratch.subspan(0, d);
    std::span<double> hid = scratch.subspan(d);
    for (const auto& layer : params.layers) {
        layer.F.apply(h2, delta, hid);
        for (std::size_t i = 0; i < d; ++i) h1[i] += delta[i];
        layer.G.apply(h1, delta, hid);
        for (std::size_t i = 0; i < d; ++i) h2[i] += delta[i];
    }
    check_finite(h1);
    check_finite(h2);
}

void rev_inverse_inplace(const RevBlockParams& params, std::span<double> h1, std::span<double> h2,
                         std::span<double> scratch) {
    const std::size_t d = params.d;
    std::span<double> delta = scratch.subspan(0, d);
    std::span<double> hid = scratch.subspan(d);
    for (auto it = params.layers.rbegin(); it != params.layers.rend(); ++it) {
        it->G.apply(h1, delta, hid);
        for (std::size_t i = 0; i < d; ++i) h2[i] -= delta[i];
        it->F.apply(h2, delta, hid);
        for (std::size_t i = 0; i < d; ++i) h1[i] -= delta[i];
    }
    check_finite(h1);
    check_finite(h2);
}

HalfPair rev_forward(const RevBlockParams& params, std::span<const double> x1, std::span<const double> x2) {
    require_dim("x1", x1, params.d);
    require_dim("x2", x2, params.d);
    HalfPair out{Embedding(x1.begin(), x1.end()), Embedding(x2.begin(), x2.end())};
    std::vector<double> scratch(params.d + params.hidden);
    rev_forward_inplace(params, out.first, out.second, scratch);
    return out;
}

HalfPair rev_inverse(const RevBlockParams& params, std::span<const double> y1, std::span<const double> y2) {
    require_dim("y1", y1, params.d);
    require_dim("y2", y2, params.d);
    HalfPair out{Embedding(y1.begin(), y1.end()), Embedding(y2.begin(), y2.end())};
    std::vector<double> scratch(params.d + params.hidden);
    rev_inverse_inplace(params, out.first, out.second, scratch);
    return out;
}

void rev_inverse_batch(const RevBlockParams& params, std::span<double> states, std::size_t rows) {
    const std::size_t d = params.d;
    if (states.size() != rows * 2 * d) throw DimError("stacked states", rows * 2 * d, states.size());
    std::vector<double> delta(rows * d);
    std::vector<double> hid(rows * params.hidden);
    double* base = states.data();
    for (auto it = params.layers.rbegin(); it != params.layers.rend(); ++it) {
        it->G.apply_batch(base, 2 * d, rows, delta.data(), hid.data());
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < d; ++i) base[r * 2 * d + d + i] -= delta[r * d + i];
        }
        it->F.apply_batch(base + d, 2 * d, rows, delta.data(), hid.data());
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < d; ++i) base[r * 2 * d + i] -= delta[r * d + i];
        }
    }
    check_finite(states);
}

TokenChain TokenChain::fresh(std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    TokenChain chain;
    chain.state_ = gaussian_vector(rng, 2 * d);
    return chain;
}

TokenChain TokenChain::restore(std::vector<double> state, std::uint32_t depth, std::vector<Embedding> displaced) {
    if (state.size() % 2 != 0) throw Error(ErrorCode::DimError, "token state length must be even");
    if (displaced.size() != depth) throw Error(ErrorCode::DimError, "displaced history must match depth");
    TokenChain chain;
    chain.state_ = std::move(state);
    chain.depth_ = depth;
    chain.displaced_ = std::move(displaced);
    return chain;
}

void TokenChain::write(const RevBlockParams& params, std::span<const double> v) {
    const std::size_t d = dim();
    require_dim("v", v, d);
    if (params.d != d) throw DimError("params.d", d, params.d);
    std::vector<double> next(state_.begin(), state_.begin() + static_cast<std::ptrdiff_t>(d));
    next.insert(next.end(), v.begin(), v.end());
    std::vector<double> scratch(d + params.hidden);
    rev_forward_inplace(params, std::span(next).first(d), std::span(next).subspan(d), scratch);
    displaced_.emplace_back(state_.begin() + static_cast<std::ptrdiff_t>(d), state_.end());
    state_ = std::move(next);
    ++depth_;
}

std::vector<Embedding> TokenChain::unroll(const RevBlockParams& params, std::size_t steps) const {
    if (steps > depth_) {
        throw Error(ErrorCode::Underflow,
                    "unroll of " + std::to_string(steps) + " steps on depth " + std::to_string(depth_));
    }
    const std::size_t d = dim();
    std::vector<double> cur = state_;
    std::vector<double> scratch(d + params.hidden);
    std::vector<Embedding> recovered;
    recovered.reserve(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        std::span<double> s(cur);
        rev_inverse_inplace(params, s.first(d), s.subspan(d), scratch);
        recovered.emplace_back(cur.begin() + static_cast<std::ptrdiff_t>(d), cur.end());
        const Embedding& prev_second = displaced_[depth_ - 1 - i];
        std::copy(prev_second.begin(), prev_second.end(), cur.begin() + static_cast<std::ptrdiff_t>(d));
    }
    return recovered;
}

std::vector<double> TokenChain::initial_state(const RevBlockParams& params) const {
    const std::size_t d = dim();
    std::vector<double> cur = state_;
    std::vector<double> scratch(d + params.hidden);
    for (std::size_t i = 0; i < depth_; ++i) {
        std::span<double> s(cur);
        rev_inverse_inplace(params, s.first(d), s.subspan(d), scratch);
        const Embedding& prev_second = displaced_[depth_ - 1 - i];
        std::copy(prev_second.begin(), prev_second.end(), cur.begin() + static_cast<std::ptrdiff_t>(d));
    }
    return cur;
}

Embedding TokenChain::pop(const RevBlockParams& params) {
    if (depth_ == 0) throw Error(ErrorCode::Underflow, "pop on depth 0");
    const std::size_t d = dim();
    std::vector<double> scratch(d + params.hidden);
    std::span<double> s(state_);
    rev_inverse_inplace(params, s.first(d), s.subspan(d), scratch);
    Embedding v(state_.begin() + static_cast<std::ptrdiff_t>(d), state_.end());
    std::copy(displaced_.back().begin(), displaced_.back().end(), state_.begin() + static_cast<std::ptrdiff_t>(d));
    displaced_.pop_back();
    --depth_;
    return v;
}

DecoderSet DecoderSet::passthrough(std::size_t d, double position_scale) {
    DecoderSet set;
    set.mode = DecoderMode::Passthrough;
    set.position_scale = position_scale;
    set.pi_p = Perceptron::zeros(d, 0, 3, Activation::Identity);
    set.pi_d = Perceptron::zeros(d, 0, d, Activation::Identity);
    set.pi_v = Perceptron::zeros(2 * d, 0, d, Activation::Identity);
    return set;
}

DecoderSet DecoderSet::untrained(std::size_t d, std::size_t hidden, double position_scale, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x4445434fULL));
    DecoderSet set;
    set.mode = DecoderMode::Untrained;
    set.position_scale = position_scale;
    set.pi_p = Perceptron::random(d, hidden, 3, Activation::Tanh, true, 0.5, rng);
    set.pi_d = Perceptron::random(d, hidden, d, Activation::Tanh, true, 0.5, rng);
    set.pi_v = Perceptron::random(2 * d, hidden, d, Activation::Tanh, true, 0.5, rng);
    return set;
}

void DecoderSet::set_exact_inverse_projection() {
    const std::size_t d = pi_v.out;
    if (!pi_v.has_skip()) pi_v.skipt.assign(pi_v.in * d, 0.0);
    std::fill(pi_v.w2t.begin(), pi_v.w2t.end(), 0.0);
    std::fill(pi_v.b2.begin(), pi_v.b2.end(), 0.0);
    std::fill(pi_v.skipt.begin(), pi_v.skipt.end(), 0.0);
    for (std::size_t i = 0; i < d; ++i) pi_v.skipt[(d + i) * d + i] = 1.0;
}

Position DecoderSet::decode_position(std::span<const double> v_hat) const {
    if (mode == DecoderMode::Untrained) throw Error(ErrorCode::NotTrained, "position decoder not trained");
    if (mode == DecoderMode::Passthrough) {
        if (v_hat.size() < 3) throw DimError("v_hat", 3, v_hat.size());
        return {v_hat[0] * position_scale, v_hat[1] * position_scale, v_hat[2] * position_scale};
    }
    const auto p = pi_p(v_hat);
    return {p[0] * position_scale, p[1] * position_scale, p[2] * position_scale};
}

Embedding DecoderSet::decode_descriptor(std::span<const double> v_hat) const {
    if (mode == DecoderMode::Untrained) throw Error(ErrorCode::NotTrained, "descriptor decoder not trained");
    if (mode == DecoderMode::Passthrough) return Embedding(v_hat.begin(), v_hat.end());
    return pi_d(v_hat);
}

Embedding DecoderSet::reconstruct(std::span<const double> hidden_state) const {
    if (mode == DecoderMode::Untrained) throw Error(ErrorCode::NotTrained, "embedding decoder not trained");
    if (mode == DecoderMode::Passthrough) {
        const std::size_t d = hidden_state.size() / 2;
        return Embedding(hidden_state.begin() + static_cast<std::ptrdiff_t>(d), hidden_state.end());
    }
    return pi_v(hidden_state);
}

}  // namespace spmem
