#include "vns/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace vns::opt {

void adam_step(AdamState& state, std::vector<double>& theta, const std::vector<double>& grad,
               double learning_rate) {
    const std::size_t n = theta.size();
    if (grad.size() != n || state.m.size() != n || state.v.size() != n)
        throw std::invalid_argument("adam_step: size mismatch");
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, double(state.step));
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        const double denom = state.epsilon_inside_sqrt ? std::sqrt(vhat + state.epsilon)
                                                       : std::sqrt(vhat) + state.epsilon;
        theta[i] -= learning_rate * mhat / denom;
    }
}

std::vector<double> init_parameters(const fn::EnergySpec& spec, std::uint64_t seed) {
    std::vector<double> theta;
    theta.reserve(spec.total_parameters());
    for (std::size_t i = 0; i < spec.networks.size(); ++i) {
        const net::ParamSet p = net::init_xavier(spec.networks[i], seed + i);
        theta.insert(theta.end(), p.values.begin(), p.values.end());
    }
    return theta;
}

namespace {

bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace

TrainResult train(const fn::EnergySpec& spec, const samp::SamplePlan& plan,
                  const TrainOptions& options) {
    if (options.schedule.empty())
        throw std::invalid_argument("train: schedule must not be empty");

    TrainResult result;
    result.theta = init_parameters(spec, options.seed);

    fn::LossEvaluator evaluator(spec, plan, options.threads);
    result.term_names = evaluator.term_names();
    AdamState state(result.theta.size());

    std::vector<double> grad;
    long epoch = 0;
    for (const SchedulePhase& phase : options.schedule) {
        for (long e = 0; e < phase.epochs; ++e, ++epoch) {
            const auto r = evaluator.value_and_grad(result.theta, grad);

            std::vector<double> row;
            row.reserve(1 + r.terms.size());
            row.push_back(r.total);
            row.insert(row.end(), r.terms.begin(), r.terms.end());
            result.history.push_back(std::move(row));

            if (!std::isfinite(r.total) || !all_finite(grad)) {
                result.diverged = true;
                result.epochs_run = epoch + 1;
                return result;
            }

            adam_step(state, result.theta, grad, phase.learning_rate);

            if (options.progress) options.progress(epoch, r.total);
            if (options.checkpoint_every > 0 && options.checkpoint_writer &&
                (epoch + 1) % options.checkpoint_every == 0)
                options.checkpoint_writer(epoch + 1, result.theta);
        }
    }
    result.epochs_run = epoch;
    return result;
}

}  // namespace vns::opt
