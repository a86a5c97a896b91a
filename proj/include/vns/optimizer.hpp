#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vns/functional.hpp"

namespace vns::opt {

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    // theta -= lr * mhat / sqrt(vhat + eps); the flag moves eps outside the
    // root (the cited reference's variant).
    bool epsilon_inside_sqrt = true;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

void adam_step(AdamState& state, std::vector<double>& theta, const std::vector<double>& grad,
               double learning_rate);

struct SchedulePhase {
    long epochs = 0;
    double learning_rate = 1e-3;
};

struct TrainOptions {
    std::vector<SchedulePhase> schedule;
    std::uint64_t seed = 1;
    int threads = 0;
    long checkpoint_every = 0;  // 0 = no periodic checkpoints
    std::function<void(long epoch, const std::vector<double>& theta)> checkpoint_writer;
    std::function<void(long epoch, double total)> progress;
};

struct TrainResult {
    std::vector<double> theta;
    // one row per epoch: total loss followed by the per-term losses
    std::vector<std::vector<double>> history;
    std::vector<std::string> term_names;
    bool diverged = false;
    long epochs_run = 0;
};

// Xavier-initialized parameters for every network of the spec, concatenated
// in network order (network i seeded with seed + i).
std::vector<double> init_parameters(const fn::EnergySpec& spec, std::uint64_t seed);

// Full-batch Adam on the assembled loss; deterministic given (spec, plan,
// options). Stops early and flags divergence when the loss or gradient
// turns non-finite.
TrainResult train(const fn::EnergySpec& spec, const samp::SamplePlan& plan,
                  const TrainOptions& options);

}  // namespace vns::opt
