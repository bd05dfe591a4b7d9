#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spmem/cycle_training.hpp"
#include "spmem/reversible.hpp"

using namespace spmem;

namespace {

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// One layer with F(x) = x and G(y) = y on d = 2.
RevBlockParams identity_adapters() {
    RevBlockParams p = RevBlockParams::zeros(2, 2, 1);
    for (Perceptron* f : {&p.layers[0].F, &p.layers[0].G}) {
        f->act = Activation::Identity;
        f->w1t = {1, 0, 0, 1};
        f->w2t = {1, 0, 0, 1};
    }
    return p;
}

}  // namespace

TEST_CASE("hand-evaluated coupling on d = 2") {
    const RevBlockParams p = identity_adapters();
    const Embedding x1{1, 0};
    const Embedding x2{0, 1};
    const HalfPair y = rev_forward(p, x1, x2);
    CHECK(y.first == Embedding{1, 1});
    CHECK(y.second == Embedding{1, 2});
    const HalfPair x = rev_inverse(p, y.first, y.second);
    CHECK(x.first == x1);
    CHECK(x.second == x2);
}

TEST_CASE("zero adapters are the identity") {
    const RevBlockParams p = RevBlockParams::zeros(8, 8, 4);
    Rng rng(1);
    const Embedding a = gaussian_vector(rng, 8);
    const Embedding b = gaussian_vector(rng, 8);
    const HalfPair y = rev_forward(p, a, b);
    CHECK(y.first == a);
    CHECK(y.second == b);
    const HalfPair x = rev_inverse(p, a, b);
    CHECK(x.first == a);
    CHECK(x.second == b);
}

TEST_CASE("forward then inverse is the identity") {
    for (std::size_t d : {4u, 64u, 256u}) {
        const RevBlockParams p = RevBlockParams::random(d, d, 4, 0.5, d);
        Rng rng(d + 1);
        for (int t = 0; t < 1000; ++t) {
            const Embedding a = gaussian_vector(rng, d);
            const Embedding b = gaussian_vector(rng, d);
            const HalfPair y = rev_forward(p, a, b);
            const HalfPair x = rev_inverse(p, y.first, y.second);
            REQUIRE(max_abs_diff(x.first, a) <= 1e-5);
            REQUIRE(max_abs_diff(x.second, b) <= 1e-5);
        }
    }
}

TEST_CASE("batched inverse matches the single inverse") {
    const std::size_t d = 32;
    const RevBlockParams p = RevBlockParams::random(d, 24, 3, 0.4, 9);
    Rng rng(2);
    std::vector<double> stacked;
    std::vector<HalfPair> expected;
    for (int r = 0; r < 5; ++r) {
        const Embedding a = gaussian_vector(rng, d);
        const Embedding b = gaussian_vector(rng, d);
        stacked.insert(stacked.end(), a.begin(), a.end());
        stacked.insert(stacked.end(), b.begin(), b.end());
        expected.push_back(rev_inverse(p, a, b));
    }
    rev_inverse_batch(p, stacked, 5);
    for (std::size_t r = 0; r < 5; ++r) {
        const std::span<const double> row(stacked.data() + r * 2 * d, 2 * d);
        CHECK(max_abs_diff(row.first(d), expected[r].first) <= 1e-12);
        CHECK(max_abs_diff(row.subspan(d), expected[r].second) <= 1e-12);
    }
    CHECK_THROWS_AS(rev_inverse_batch(p, stacked, 4), DimError);
}

TEST_CASE("non-finite values raise NumericOverflow") {
    const RevBlockParams p = RevBlockParams::random(4, 4, 1, 0.1, 1);
    const Embedding a{1, 2, 3, std::numeric_limits<double>::infinity()};
    const Embedding b{0, 0, 0, 0};
    try {
        rev_forward(p, a, b);
        FAIL("expected NumericOverflow");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NumericOverflow);
    }
}

TEST_CASE("token write and unroll") {
    const std::size_t d = 16;
    const RevBlockParams p = RevBlockParams::random(d, d, 4, 0.3, 4);
    Rng rng(3);

    TokenChain fresh = TokenChain::fresh(d, 99);
    CHECK(fresh.depth() == 0);
    CHECK(fresh.state().size() == 2 * d);
    CHECK(fresh == TokenChain::fresh(d, 99));
    CHECK_FALSE(fresh == TokenChain::fresh(d, 100));
    try {
        (void)fresh.unroll(p, 1);
        FAIL("expected Underflow");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Underflow);
    }

    TokenChain chain = fresh;
    const Embedding v1 = gaussian_vector(rng, d);
    chain.write(p, v1);
    CHECK(chain.depth() == 1);
    CHECK(max_abs_diff(chain.unroll(p, 1)[0], v1) <= 1e-5);
    CHECK(max_abs_diff(chain.initial_state(p), fresh.state()) <= 1e-9);

    std::vector<Embedding> vs{v1};
    for (int i = 0; i < 9; ++i) {
        vs.push_back(gaussian_vector(rng, d));
        chain.write(p, vs.back());
    }
    const auto all = chain.unroll(p, 10);
    REQUIRE(all.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(max_abs_diff(all[i], vs[9 - i]) <= 1e-5);

    const auto two = chain.unroll(p, 2);
    CHECK(two.size() == 2);
    CHECK(max_abs_diff(two[0], vs[9]) <= 1e-5);
    CHECK(max_abs_diff(two[1], vs[8]) <= 1e-5);
    CHECK_THROWS_AS((void)chain.unroll(p, 11), Error);
    CHECK(max_abs_diff(chain.initial_state(p), fresh.state()) <= 1e-9);
}

TEST_CASE("write is deterministic and uses the read half") {
    const std::size_t d = 8;
    const RevBlockParams p = RevBlockParams::random(d, d, 2, 0.3, 4);
    Rng rng(6);
    const Embedding v = gaussian_vector(rng, d);
    TokenChain a = TokenChain::fresh(d, 1);
    TokenChain b = TokenChain::fresh(d, 1);
    a.write(p, v);
    b.write(p, v);
    CHECK(a == b);
    const TokenChain before = TokenChain::fresh(d, 1);
    const HalfPair expect = rev_forward(p, before.read_half(), v);
    CHECK(std::vector<double>(a.read_half().begin(), a.read_half().end()) == expect.first);
    CHECK(std::vector<double>(a.write_half().begin(), a.write_half().end()) == expect.second);
}

TEST_CASE("depth tracks writes minus pops") {
    const std::size_t d = 6;
    const RevBlockParams p = RevBlockParams::random(d, d, 2, 0.3, 4);
    Rng rng(8);
    std::uniform_int_distribution<int> coin(0, 2);
    TokenChain chain = TokenChain::fresh(d, 5);
    std::vector<Embedding> stack;
    for (int t = 0; t < 300; ++t) {
        if (coin(rng) == 0 && !stack.empty()) {
            const Embedding v = chain.pop(p);
            CHECK(max_abs_diff(v, stack.back()) <= 1e-6);
            stack.pop_back();
        } else {
            stack.push_back(gaussian_vector(rng, d));
            chain.write(p, stack.back());
        }
        CHECK(chain.depth() == stack.size());
    }
    while (!stack.empty()) {
        chain.pop(p);
        stack.pop_back();
    }
    CHECK(chain.depth() == 0);
    CHECK_THROWS_AS(chain.pop(p), Error);
    CHECK(max_abs_diff(chain.state(), TokenChain::fresh(d, 5).state()) <= 1e-6);
}

TEST_CASE("long histories are recovered within tolerance") {
    const std::size_t d = 32;
    const RevBlockParams p = RevBlockParams::random(d, d, 4, 0.1, 12);
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial) * 3;
        TokenChain chain = TokenChain::fresh(d, static_cast<std::uint64_t>(trial));
        std::vector<Embedding> vs;
        for (std::size_t i = 0; i < n; ++i) {
            vs.push_back(gaussian_vector(rng, d));
            chain.write(p, vs.back());
        }
        const auto back = chain.unroll(p, n);
        for (std::size_t i = 0; i < n; ++i) CHECK(max_abs_diff(back[i], vs[n - 1 - i]) <= 1e-4);
    }
}

TEST_CASE("passthrough decoders read the position stamp") {
    const DecoderSet dec = DecoderSet::passthrough(8, 100.0);
    Embedding v(8, 0.0);
    v[0] = 0.25;
    v[1] = 0.5;
    v[2] = 0.125;
    v[5] = 3.0;
    const Position p = dec.decode_position(v);
    CHECK(p == Position{25, 50, 12.5});
    CHECK(dec.decode_descriptor(v) == v);
    CHECK(dec.decode_descriptor(v).size() == 8);
    std::vector<double> hidden(16, 1.0);
    std::copy(v.begin(), v.end(), hidden.begin() + 8);
    CHECK(dec.reconstruct(hidden) == v);
}

TEST_CASE("untrained decoders refuse to decode") {
    const DecoderSet dec = DecoderSet::untrained(8, 8, 1.0, 1);
    const Embedding v(8, 0.1);
    for (auto attempt : {0, 1, 2}) {
        try {
            if (attempt == 0) dec.decode_position(v);
            if (attempt == 1) dec.decode_descriptor(v);
            if (attempt == 2) dec.reconstruct(std::vector<double>(16, 0.1));
            FAIL("expected NotTrained");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NotTrained);
        }
    }
}

TEST_CASE("exact inverse projection gives zero cycle loss") {
    const std::size_t d = 16;
    const RevBlockParams params = RevBlockParams::random(d, d, 4, 0.3, 2);
    DecoderSet dec = DecoderSet::untrained(d, d, 50.0, 4);
    dec.set_exact_inverse_projection();
    dec.mode = DecoderMode::Trained;
    const auto samples = synthetic_cycle_samples(64, d, 50.0, 50.0, 3);
    const auto hidden = cycle_hidden_states(params, samples);
    const CycleLosses loss = evaluate_cycle_losses(dec, samples, hidden);
    CHECK(loss.cycle <= 1e-8);

    TrainOptions o;
    o.steps = 5;
    o.lr = 1e-3;
    const TrainReport rep = train_cycle(params, dec, samples, o);
    CHECK(rep.cycle_history.front() <= 1e-8);
}

TEST_CASE("analytic decoder gradient matches central differences") {
    const std::size_t d = 4;
    const RevBlockParams params = RevBlockParams::random(d, d, 2, 0.5, 7);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        DecoderSet dec = DecoderSet::untrained(d, 5, 10.0, seed);
        dec.mode = DecoderMode::Trained;
        const auto samples = synthetic_cycle_samples(6, d, 10.0, 10.0, seed + 10);
        const auto hidden = cycle_hidden_states(params, samples);
        const std::vector<double> grad = decoder_gradient(dec, samples, hidden);
        std::vector<double> flat = flatten_decoders(dec);
        REQUIRE(grad.size() == flat.size());
        const double h = 1e-4;
        double worst = 0.0;
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const double keep = flat[i];
            flat[i] = keep + h;
            assign_decoders(dec, flat);
            const double up = evaluate_cycle_losses(dec, samples, hidden).total();
            flat[i] = keep - h;
            assign_decoders(dec, flat);
            const double down = evaluate_cycle_losses(dec, samples, hidden).total();
            flat[i] = keep;
            assign_decoders(dec, flat);
            const double fd = (up - down) / (2 * h);
            const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
            worst = std::max(worst, std::abs(fd - grad[i]) / scale);
        }
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("cycle training lowers the loss") {
    const std::size_t d = 16;
    const RevBlockParams params = RevBlockParams::random(d, d, 4, 0.1, 1);
    DecoderSet dec = DecoderSet::untrained(d, d, 1.0, 2);
    const auto samples = synthetic_cycle_samples(64, d, 1.0, 1.0, 3);
    TrainOptions o;
    o.steps = 100;
    o.lr = 1e-3;
    const TrainReport rep = train_cycle(params, dec, samples, o);
    CHECK(rep.final.cycle < rep.initial.cycle);
    CHECK(rep.final.total() < rep.initial.total());
    CHECK(rep.cycle_history.size() == 101);
    CHECK(dec.mode == DecoderMode::Trained);
    // Non-increasing over the run at this step size.
    for (std::size_t i = 1; i < rep.total_history.size(); ++i) {
        CHECK(rep.total_history[i] <= rep.total_history[i - 1] + 1e-12);
    }
}

TEST_CASE("trained position decoder generalizes to held-out samples") {
    const std::size_t d = 16;
    const double world = 100.0;
    const RevBlockParams params = RevBlockParams::random(d, d, 4, 0.1, 1);
    DecoderSet dec = DecoderSet::untrained(d, d, world, 3);
    const auto train = synthetic_cycle_samples(256, d, world, world, 5);
    const auto held_out = synthetic_cycle_samples(128, d, world, world, 6);
    TrainOptions o;
    o.steps = 300;
    o.lr = 0.05;
    train_cycle(params, dec, train, o);
    const auto hidden = cycle_hidden_states(params, held_out);
    double err = 0.0;
    for (std::size_t i = 0; i < held_out.size(); ++i) {
        const std::span<const double> v_hat(hidden[i].data() + d, d);
        err += distance(dec.decode_position(v_hat), held_out[i].position);
        CHECK(dec.decode_descriptor(v_hat).size() == d);
    }
    err /= static_cast<double>(held_out.size());
    CHECK(err <= 0.1 * world);
}

TEST_CASE("diverging training is reported") {
    const std::size_t d = 4;
    const RevBlockParams params = RevBlockParams::random(d, d, 1, 0.1, 1);
    DecoderSet dec = DecoderSet::untrained(d, d, 1.0, 2);
    const auto samples = synthetic_cycle_samples(16, d, 1.0, 1.0, 3);
    TrainOptions o;
    o.steps = 200;
    o.lr = 1e6;
    try {
        train_cycle(params, dec, samples, o);
        FAIL("expected TrainingDiverged");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::TrainingDiverged);
    }
}

TEST_CASE("perceptron parameters flatten and assign symmetrically") {
    Rng rng(4);
    const Perceptron p = Perceptron::random(3, 5, 2, Activation::Tanh, true, 1.0, rng);
    CHECK(p.parameter_count() == 3 * 5 + 5 + 5 * 2 + 2 + 3 * 2);
    Perceptron q = Perceptron::zeros(3, 5, 2, Activation::Tanh, true);
    q.assign(p.flatten());
    CHECK(q == p);
    CHECK_THROWS_AS(q.assign(std::vector<double>(3)), DimError);
}
