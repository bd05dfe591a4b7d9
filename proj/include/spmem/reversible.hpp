#pragma once
// Additive-coupling reversible block, token chains built from it, and the
// decoders that map recovered embeddings back to position/descriptor space.
//
// One coupling layer maps (x1, x2) -> (y1, y2) with
//   y1 = x1 + F(x2),  y2 = x2 + G(y1)
// and is undone by
//   x2 = y2 - G(y1),  x1 = y1 - F(x2)
// whatever F and G compute, so the block is a bijection on 2d values.

#include <cstdint>
#include <span>
#include <vector>

#include "spmem/core.hpp"

namespace spmem {

enum class Activation : std::uint8_t { Tanh = 0, Identity = 1 };

// y = W2 act(W1 x + b1) + b2 [+ S x]
// Weights are stored input-major (w1t[j * hidden + k] is the weight from
// input j to hidden unit k) so evaluation is a sequence of contiguous axpys.
struct Perceptron {
    std::size_t in = 0;
    std::size_t hidden = 0;
    std::size_t out = 0;
    Activation act = Activation::Tanh;
    std::vector<double> w1t;    // in x hidden
    std::vector<double> b1;     // hidden
    std::vector<double> w2t;    // hidden x out
    std::vector<double> b2;     // out
    std::vector<double> skipt;  // in x out, empty when there is no linear skip

    static Perceptron zeros(std::size_t in, std::size_t hidden, std::size_t out, Activation act,
                            bool with_skip = false);
    static Perceptron random(std::size_t in, std::size_t hidden, std::size_t out, Activation act,
                             bool with_skip, double scale, Rng& rng);

    bool has_skip() const { return !skipt.empty(); }
    std::size_t parameter_count() const;

    // Writes out.size() == this->out values; hidden_buf must hold `hidden` values.
    void apply(std::span<const double> x, std::span<double> y, std::span<double> hidden_buf) const;
    // Row-major batch: x is rows*in (row stride x_stride), y is rows*out, hidden_buf is rows*hidden.
    void apply_batch(const double* x, std::size_t x_stride, std::size_t rows, double* y,
                     double* hidden_buf) const;
    std::vector<double> operator()(std::span<const double> x) const;

    // Flat parameter view in a fixed order: w1t, b1, w2t, b2, skipt.
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);

    bool operator==(const Perceptron&) const = default;
};

struct CouplingLayer {
    Perceptron F;
    Perceptron G;
    bool operator==(const CouplingLayer&) const = default;
};

struct RevBlockParams {
    std::size_t d = 0;
    std::size_t hidden = 0;
    std::vector<CouplingLayer> layers;

    static RevBlockParams random(std::size_t d, std::size_t hidden, std::size_t layers,
                                 double init_scale, std::uint64_t seed);
    static RevBlockParams zeros(std::size_t d, std::size_t hidden, std::size_t layers);
    static RevBlockParams from_config(const EngineConfig& cfg);

    bool operator==(const RevBlockParams&) const = default;
};

struct HalfPair {
    Embedding first;
    Embedding second;
};

HalfPair rev_forward(const RevBlockParams& params, std::span<const double> x1, std::span<const double> x2);
HalfPair rev_inverse(const RevBlockParams& params, std::span<const double> y1, std::span<const double> y2);
// Inverts `rows` stacked 2d states in place; each row is [y1; y2].
void rev_inverse_batch(const RevBlockParams& params, std::span<double> states, std::size_t rows);

// In-place variants used on hot paths. scratch must hold hidden + d values.
void rev_forward_inplace(const RevBlockParams& params, std::span<double> h1, std::span<double> h2,
                         std::span<double> scratch);
void rev_inverse_inplace(const RevBlockParams& params, std::span<double> h1, std::span<double> h2,
                         std::span<double> scratch);

// Reversible memory token. `state` is the 2d output of the last write; the
// first half is the read half fed back into the next write and the second
// half carries the most recent embedding. Each write displaces the previous
// second half, which is kept so that unrolling can continue past depth 1.
class TokenChain {
public:
    TokenChain() = default;
    static TokenChain fresh(std::size_t d, std::uint64_t seed);

    std::size_t dim() const { return state_.size() / 2; }
    std::uint32_t depth() const { return depth_; }
    const std::vector<double>& state() const { return state_; }
    std::span<const double> read_half() const { return {state_.data(), dim()}; }
    std::span<const double> write_half() const { return {state_.data() + dim(), dim()}; }
    const std::vector<Embedding>& displaced() const { return displaced_; }

    void write(const RevBlockParams& params, std::span<const double> v);

    // Most recent first. Throws Error(Underflow) when steps > depth.
    std::vector<Embedding> unroll(const RevBlockParams& params, std::size_t steps) const;

    // Unrolls every write and returns the state before the first one.
    std::vector<double> initial_state(const RevBlockParams& params) const;

    // Undoes the most recent write.
    Embedding pop(const RevBlockParams& params);

    static TokenChain restore(std::vector<double> state, std::uint32_t depth, std::vector<Embedding> displaced);

    bool operator==(const TokenChain&) const = default;

private:
    std::vector<double> state_;
    std::uint32_t depth_ = 0;
    std::vector<Embedding> displaced_;
};

enum class DecoderMode : std::uint8_t {
    // Position stamped into v[0..2] (scaled by position_scale); descriptor is v itself.
    Passthrough = 0,
    // Decoders exist but have not been trained; decoding throws NotTrained.
    Untrained = 1,
    Trained = 2,
};

// pi_p: d -> 3 (in units of position_scale), pi_d: d -> d, pi_v: 2d -> d.
struct DecoderSet {
    DecoderMode mode = DecoderMode::Passthrough;
    double position_scale = 1.0;
    Perceptron pi_p;
    Perceptron pi_d;
    Perceptron pi_v;

    static DecoderSet passthrough(std::size_t d, double position_scale);
    static DecoderSet untrained(std::size_t d, std::size_t hidden, double position_scale, std::uint64_t seed);

    // pi_v set to "take the embedding half of the inverse".
    void set_exact_inverse_projection();

    Position decode_position(std::span<const double> v_hat) const;
    Embedding decode_descriptor(std::span<const double> v_hat) const;
    Embedding reconstruct(std::span<const double> hidden_state) const;

    bool operator==(const DecoderSet&) const = default;
};

}  // namespace spmem
