#include "spmem/cycle_training.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace spmem {

namespace {

// Accumulates dL/dparams for one evaluation of p at x given dL/dy into grad
// (laid out like Perceptron::flatten()).
void accumulate_gradient(const Perceptron& p, std::span<const double> x, std::span<const double> grad_y,
                         std::span<double> grad) {
    std::vector<double> pre(p.hidden);
    for (std::size_t k = 0; k < p.hidden; ++k) pre[k] = p.b1[k];
    for (std::size_t j = 0; j < p.in; ++j) {
        for (std::size_t k = 0; k < p.hidden; ++k) pre[k] += x[j] * p.w1t[j * p.hidden + k];
    }
    std::vector<double> a(p.hidden);
    for (std::size_t k = 0; k < p.hidden; ++k) a[k] = p.act == Activation::Tanh ? std::tanh(pre[k]) : pre[k];

    const std::size_t off_w1 = 0;
    const std::size_t off_b1 = off_w1 + p.w1t.size();
    const std::size_t off_w2 = off_b1 + p.b1.size();
    const std::size_t off_b2 = off_w2 + p.w2t.size();
    const std::size_t off_skip = off_b2 + p.b2.size();

    for (std::size_t o = 0; o < p.out; ++o) grad[off_b2 + o] += grad_y[o];
    std::vector<double> dpre(p.hidden, 0.0);
    for (std::size_t k = 0; k < p.hidden; ++k) {
        double da = 0.0;
        for (std::size_t o = 0; o < p.out; ++o) {
            grad[off_w2 + k * p.out + o] += a[k] * grad_y[o];
            da += p.w2t[k * p.out + o] * grad_y[o];
        }
        dpre[k] = p.act == Activation::Tanh ? da * (1.0 - a[k] * a[k]) : da;
        grad[off_b1 + k] += dpre[k];
    }
    for (std::size_t j = 0; j < p.in; ++j) {
        for (std::size_t k = 0; k < p.hidden; ++k) grad[off_w1 + j * p.hidden + k] += x[j] * dpre[k];
    }
    if (p.has_skip()) {
        for (std::size_t j = 0; j < p.in; ++j) {
            for (std::size_t o = 0; o < p.out; ++o) grad[off_skip + j * p.out + o] += x[j] * grad_y[o];
        }
    }
}

std::span<const double> embedding_half(const std::vector<double>& z) {
    const std::size_t d = z.size() / 2;
    return std::span<const double>(z).subspan(d);
}

}  // namespace

std::vector<std::vector<double>> cycle_hidden_states(const RevBlockParams& params,
                                                     const std::vector<CycleSample>& samples) {
    std::vector<std::vector<double>> hidden;
    hidden.reserve(samples.size());
    std::vector<double> scratch(params.d + params.hidden);
    for (const auto& s : samples) {
        require_dim("read_state", s.read_state, params.d);
        require_dim("v", s.v, params.d);
        std::vector<double> z(s.read_state);
        z.insert(z.end(), s.v.begin(), s.v.end());
        std::span<double> zs(z);
        rev_forward_inplace(params, zs.first(params.d), zs.subspan(params.d), scratch);
        rev_inverse_inplace(params, zs.first(params.d), zs.subspan(params.d), scratch);
        hidden.push_back(std::move(z));
    }
    return hidden;
}

CycleLosses evaluate_cycle_losses(const DecoderSet& dec, const std::vector<CycleSample>& samples,
                                  const std::vector<std::vector<double>>& hidden) {
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no cycle samples");
    CycleLosses loss;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const auto v_rec = dec.pi_v(hidden[i]);
        const auto v_hat = embedding_half(hidden[i]);
        const auto p_hat = dec.pi_p(v_hat);
        const auto d_hat = dec.pi_d(v_hat);
        for (std::size_t j = 0; j < s.v.size(); ++j) {
            loss.cycle += (s.v[j] - v_rec[j]) * (s.v[j] - v_rec[j]);
            loss.descriptor += (s.v[j] - d_hat[j]) * (s.v[j] - d_hat[j]);
        }
        for (int a = 0; a < 3; ++a) {
            const double diff = s.position[a] / dec.position_scale - p_hat[static_cast<std::size_t>(a)];
            loss.position += diff * diff;
        }
    }
    const double n = static_cast<double>(samples.size());
    loss.cycle /= n;
    loss.position /= n;
    loss.descriptor /= n;
    return loss;
}

std::vector<double> flatten_decoders(const DecoderSet& dec) {
    std::vector<double> flat = dec.pi_p.flatten();
    const auto d = dec.pi_d.flatten();
    const auto v = dec.pi_v.flatten();
    flat.insert(flat.end(), d.begin(), d.end());
    flat.insert(flat.end(), v.begin(), v.end());
    return flat;
}

void assign_decoders(DecoderSet& dec, std::span<const double> flat) {
    const std::size_t np = dec.pi_p.parameter_count();
    const std::size_t nd = dec.pi_d.parameter_count();
    const std::size_t nv = dec.pi_v.parameter_count();
    if (flat.size() != np + nd + nv) throw DimError("decoder parameters", np + nd + nv, flat.size());
    dec.pi_p.assign(flat.subspan(0, np));
    dec.pi_d.assign(flat.subspan(np, nd));
    dec.pi_v.assign(flat.subspan(np + nd, nv));
}

std::vector<double> decoder_gradient(const DecoderSet& dec, const std::vector<CycleSample>& samples,
                                     const std::vector<std::vector<double>>& hidden) {
    const std::size_t np = dec.pi_p.parameter_count();
    const std::size_t nd = dec.pi_d.parameter_count();
    const std::size_t nv = dec.pi_v.parameter_count();
    std::vector<double> grad(np + nd + nv, 0.0);
    std::span<double> gp(grad.data(), np);
    std::span<double> gd(grad.data() + np, nd);
    std::span<double> gv(grad.data() + np + nd, nv);
    const double scale = 2.0 / static_cast<double>(samples.size());

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        const auto v_hat = embedding_half(hidden[i]);

        auto v_rec = dec.pi_v(hidden[i]);
        for (std::size_t j = 0; j < v_rec.size(); ++j) v_rec[j] = scale * (v_rec[j] - s.v[j]);
        accumulate_gradient(dec.pi_v, hidden[i], v_rec, gv);

        auto p_hat = dec.pi_p(v_hat);
        for (int a = 0; a < 3; ++a) {
            const auto idx = static_cast<std::size_t>(a);
            p_hat[idx] = scale * (p_hat[idx] - s.position[a] / dec.position_scale);
        }
        accumulate_gradient(dec.pi_p, v_hat, p_hat, gp);

        auto d_hat = dec.pi_d(v_hat);
        for (std::size_t j = 0; j < d_hat.size(); ++j) d_hat[j] = scale * (d_hat[j] - s.v[j]);
        accumulate_gradient(dec.pi_d, v_hat, d_hat, gd);
    }
    return grad;
}

std::vector<CycleSample> synthetic_cycle_samples(std::size_t n, std::size_t d, double world_side,
                                                 double position_scale, std::uint64_t seed) {
    if (d < 3) throw Error(ErrorCode::InvalidConfig, "cycle samples need d >= 3");
    Rng rng(mix_seed(seed, 0x4359434cULL));
    std::uniform_real_distribution<double> unit(0.0, world_side);
    std::vector<CycleSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        CycleSample s;
        s.read_state = gaussian_vector(rng, d);
        s.v = gaussian_vector(rng, d);
        s.position = {unit(rng), unit(rng), unit(rng)};
        for (int a = 0; a < 3; ++a) s.v[a] = s.position[a] / position_scale;
        out.push_back(std::move(s));
    }
    return out;
}

TrainReport train_cycle(const RevBlockParams& params, DecoderSet& dec, const std::vector<CycleSample>& samples,
                        const TrainOptions& options) {
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no cycle samples");
    if (dec.mode == DecoderMode::Passthrough) {
        throw Error(ErrorCode::NotTrained, "passthrough decoders have no trainable parameters");
    }
    const auto hidden = cycle_hidden_states(params, samples);
    const std::size_t np = dec.pi_p.parameter_count();
    const std::size_t nd = dec.pi_d.parameter_count();

    TrainReport report;
    std::vector<double> flat = flatten_decoders(dec);
    for (std::size_t step = 0; step <= options.steps; ++step) {
        const CycleLosses loss = evaluate_cycle_losses(dec, samples, hidden);
        if (!std::isfinite(loss.total())) {
            throw Error(ErrorCode::TrainingDiverged, "loss became non-finite at step " + std::to_string(step));
        }
        if (step == 0) report.initial = loss;
        report.final = loss;
        report.cycle_history.push_back(loss.cycle);
        report.total_history.push_back(loss.total());
        if (step == options.steps) break;

        auto grad = decoder_gradient(dec, samples, hidden);
        if (!options.train_position) std::fill(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(np), 0.0);
        if (!options.train_descriptor) {
            std::fill(grad.begin() + static_cast<std::ptrdiff_t>(np),
                      grad.begin() + static_cast<std::ptrdiff_t>(np + nd), 0.0);
        }
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] -= options.lr * grad[i];
        assign_decoders(dec, flat);
    }
    dec.mode = DecoderMode::Trained;
    return report;
}

}  // namespace spmem
