#pragma once
// Desk-scale cycle-consistency training of the decoder heads.
//
// The objective per sample (theta, v, p) is
//   z      = R^-1(R(theta; v))            (2d hidden state)
//   v_hat  = second half of z
//   cycle  = |v - pi_v(z)|^2
//   pos    = |p / position_scale - pi_p(v_hat)|^2
//   desc   = |v - pi_d(v_hat)|^2
// averaged over the batch. R^-1 o R is the identity, so the gradient with
// respect to the coupling parameters vanishes and only the heads are updated.

#include <vector>

#include "spmem/reversible.hpp"

namespace spmem {

struct CycleSample {
    Embedding read_state;  // theta^r, length d
    Embedding v;           // length d
    Position position;     // world frame, same scale the decoders report
};

struct CycleLosses {
    double cycle = 0.0;
    double position = 0.0;
    double descriptor = 0.0;
    double total() const { return cycle + position + descriptor; }
};

struct TrainOptions {
    std::size_t steps = 100;
    double lr = 1e-3;
    bool train_position = true;
    bool train_descriptor = true;
};

struct TrainReport {
    CycleLosses initial;
    CycleLosses final;
    std::vector<double> cycle_history;  // cycle loss before each step, then the final value
    std::vector<double> total_history;
};

// Hidden states z for each sample (the inverse of the forward pass).
std::vector<std::vector<double>> cycle_hidden_states(const RevBlockParams& params,
                                                     const std::vector<CycleSample>& samples);

CycleLosses evaluate_cycle_losses(const DecoderSet& decoders, const std::vector<CycleSample>& samples,
                                  const std::vector<std::vector<double>>& hidden);

// Analytic gradient of the total loss with respect to the flat decoder
// parameters (pi_p, then pi_d, then pi_v).
std::vector<double> decoder_gradient(const DecoderSet& decoders, const std::vector<CycleSample>& samples,
                                     const std::vector<std::vector<double>>& hidden);

std::vector<double> flatten_decoders(const DecoderSet& decoders);
void assign_decoders(DecoderSet& decoders, std::span<const double> flat);

// Random read states and embeddings with positions drawn uniformly from
// [0, world_side)^3 and stamped into v[0..2] as p / position_scale.
std::vector<CycleSample> synthetic_cycle_samples(std::size_t n, std::size_t d, double world_side,
                                                 double position_scale, std::uint64_t seed);

// Full-batch gradient descent. Throws Error(TrainingDiverged) on a non-finite loss.
// Leaves decoders in Trained mode.
TrainReport train_cycle(const RevBlockParams& params, DecoderSet& decoders,
                        const std::vector<CycleSample>& samples, const TrainOptions& options);

}  // namespace spmem
