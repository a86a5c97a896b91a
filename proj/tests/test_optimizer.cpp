#include "doctest.h"

#include <cmath>

#include "vns/optimizer.hpp"
#include "vns/problems.hpp"

using namespace vns;
using opt::AdamState;

namespace {

samp::SamplePlan one_edge_plan() {
    const geom::Patch sq = geom::make_bilinear_patch({0, 0}, {1, 0}, {0, 1}, {1, 1});
    samp::SamplePlan plan;
    auto edge = samp::sample_edge(sq, 0, geom::Edge::South, 1);
    edge.tag = geom::EdgeTag::Dirichlet;
    plan.edges.push_back(edge);
    return plan;
}

fn::EnergySpec toy_spec(double target, double beta = 1.0) {
    fn::EnergySpec spec;
    spec.networks = {net::NetworkConfig{2, 1, 2, true, 1}};
    spec.network_labels = {"toy"};
    spec.patch_subdomain = {0};
    spec.subdomain_network = {0};
    spec.subdomain_names = {"all"};
    fn::EnergyTerm term;
    term.kind = fn::TermKind::DirichletPenalty;
    term.beta = beta;
    term.sets = {0};
    term.load = [target](Vec2, Vec2) { return target; };
    spec.terms = {term};
    return spec;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    AdamState state(3);
    std::vector<double> theta = {1.0, -2.0, 0.5};
    const std::vector<double> grad = {0.0, 0.0, 0.0};
    const auto before = theta;
    opt::adam_step(state, theta, grad, 1e-3);
    CHECK(theta == before);
}

TEST_CASE("adam: hand-derived first step with eps inside the root") {
    AdamState state(1);
    std::vector<double> theta = {0.0};
    opt::adam_step(state, theta, {1.0}, 1e-3);
    const double expected = -1e-3 / std::sqrt(1.0 + 1e-8);
    CHECK(std::abs(theta[0] - expected) < 1e-18);
    CHECK(std::abs(theta[0] - (-9.99999995e-4)) < 1e-12);

    // eps outside the root differs in the 9th digit
    AdamState outside(1);
    outside.epsilon_inside_sqrt = false;
    std::vector<double> theta2 = {0.0};
    opt::adam_step(outside, theta2, {1.0}, 1e-3);
    CHECK(theta2[0] == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    CHECK(theta2[0] != theta[0]);
}

TEST_CASE("adam: odd symmetry of updates") {
    AdamState state(2);
    std::vector<double> theta = {0.0, 0.0};
    opt::adam_step(state, theta, {1.0, -1.0}, 1e-3);
    CHECK(theta[0] == -theta[1]);
    CHECK(theta[0] < 0.0);
}

TEST_CASE("adam: bias correction after one step") {
    AdamState state(1);
    std::vector<double> theta = {0.0};
    const double g = 0.37;
    opt::adam_step(state, theta, {g}, 1e-3);
    const double mhat = state.m[0] / (1.0 - 0.9);
    const double vhat = state.v[0] / (1.0 - 0.999);
    CHECK(mhat == doctest::Approx(g).epsilon(1e-15));
    CHECK(vhat == doctest::Approx(g * g).epsilon(1e-15));
}

TEST_CASE("adam: step magnitude bounded by the learning rate after warm-up") {
    AdamState state(1);
    std::vector<double> theta = {0.0};
    const double lr = 1e-3;
    for (int k = 0; k < 200; ++k) {
        const double before = theta[0];
        opt::adam_step(state, theta, {2.5}, lr);  // constant bounded gradient
        if (k > 50) CHECK(std::abs(theta[0] - before) <= lr * 1.001);
    }
}

TEST_CASE("train: zero epochs returns the xavier initialization") {
    const auto spec = toy_spec(0.4);
    const auto plan = one_edge_plan();
    opt::TrainOptions options;
    options.schedule = {{0, 1e-3}};
    options.seed = 9;
    const auto result = opt::train(spec, plan, options);
    CHECK(result.theta == opt::init_parameters(spec, 9));
    CHECK(result.history.empty());
    CHECK_FALSE(result.diverged);
}

TEST_CASE("train: quadratic toy loss converges below 1e-8") {
    const auto spec = toy_spec(0.75);
    const auto plan = one_edge_plan();
    opt::TrainOptions options;
    options.schedule = {{5000, 1e-2}};
    options.seed = 4;
    options.threads = 1;
    const auto result = opt::train(spec, plan, options);
    REQUIRE_FALSE(result.diverged);
    CHECK(result.history.back().front() < 1e-8);
}

TEST_CASE("train: bit-identical histories for identical seeds, different otherwise") {
    auto built = prob::build_cylinder(prob::Preset::Dg);
    for (auto& cfg : built.networks) cfg = net::NetworkConfig{2, 1, 4, true, 1};
    const auto plan = prob::build_plan(built, {40, 12, 12, 10, 0});
    const auto spec = prob::make_energy_spec(built, plan);

    opt::TrainOptions options;
    options.schedule = {{25, 1e-3}};
    options.seed = 21;

    options.threads = 1;
    const auto a = opt::train(spec, plan, options);
    options.threads = 2;  // thread count must not affect the arithmetic
    const auto b = opt::train(spec, plan, options);
    CHECK(a.history == b.history);
    CHECK(a.theta == b.theta);

    options.seed = 22;
    const auto c = opt::train(spec, plan, options);
    CHECK(a.history != c.history);
}

TEST_CASE("train: divergence guard stops and reports") {
    const auto spec = toy_spec(0.5);
    const auto plan = one_edge_plan();
    opt::TrainOptions options;
    options.schedule = {{500, 1e160}};  // absurd step size blows the loss up
    options.seed = 2;
    const auto result = opt::train(spec, plan, options);
    CHECK(result.diverged);
    CHECK(result.epochs_run < 500);
    CHECK_FALSE(result.history.empty());
}

TEST_CASE("train: periodic checkpoint callback") {
    const auto spec = toy_spec(0.1);
    const auto plan = one_edge_plan();
    opt::TrainOptions options;
    options.schedule = {{10, 1e-3}};
    options.checkpoint_every = 4;
    int calls = 0;
    options.checkpoint_writer = [&](long, const std::vector<double>&) { ++calls; };
    opt::train(spec, plan, options);
    CHECK(calls == 2);  // epochs 4 and 8
}
