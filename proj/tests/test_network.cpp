#include "doctest.h"

#include <array>
#include <cmath>
#include <random>

#include "vns/network.hpp"

using namespace vns;
using net::MlpKernel;
using net::NetworkConfig;
using net::ParamLayout;
using net::ParamSet;

namespace {

std::vector<ad::NodeId> param_vars(ad::ExprGraph& g, const ParamSet& p) {
    std::vector<ad::NodeId> ids;
    ids.reserve(p.values.size());
    for (double v : p.values) ids.push_back(g.var(v));
    return ids;
}

ParamSet random_params(const NetworkConfig& cfg, std::uint64_t seed, double scl = 1.0) {
    ParamSet p = net::init_xavier(cfg, seed);
    std::mt19937_64 rng(seed + 99);
    for (double& v : p.values) {
        v += 0.1 * (double(rng() >> 11) * 0x1.0p-53 - 0.5);  // nonzero biases/slopes too
        v *= scl;
    }
    return p;
}

}  // namespace

TEST_CASE("parameter count reproduces the published architectures") {
    CHECK(net::count_parameters({2, 8, 15, true, 1}) == 3872);
    CHECK(net::count_parameters({2, 15, 15, true, 1}) == 7246);
    CHECK(net::count_parameters({2, 30, 24, false, 1}) == 36025);
}

TEST_CASE("parameter count identity over a grid") {
    for (int blocks = 1; blocks <= 4; ++blocks) {
        for (int neurons = 2; neurons <= 7; ++neurons) {
            for (bool adaptive : {false, true}) {
                const NetworkConfig cfg{2, blocks, neurons, adaptive, 1};
                const std::size_t expect = 2 * blocks * (neurons * neurons + neurons) +
                                           (neurons + 1) + (adaptive ? 2 * blocks : 0);
                CHECK(net::count_parameters(cfg) == expect);
                CHECK(net::init_xavier(cfg, 3).values.size() == expect);
            }
        }
    }
    CHECK_THROWS(net::count_parameters({2, 0, 3, true, 1}));
    CHECK_THROWS(net::count_parameters({2, 1, 1, true, 1}));  // neurons < input_dim
}

TEST_CASE("xavier initialization properties") {
    const NetworkConfig cfg{2, 3, 15, true, 1};
    const ParamSet p = net::init_xavier(cfg, 42);
    const ParamLayout lay(cfg);

    const double bound = std::sqrt(6.0 / 30.0);
    CHECK(bound == doctest::Approx(0.44721).epsilon(1e-4));
    double max_abs = 0.0;
    for (int l = 0; l < lay.layers; ++l) {
        for (int i = 0; i < 15 * 15; ++i)
            max_abs = std::max(max_abs, std::abs(p.values[lay.weights(l) + i]));
        for (int i = 0; i < 15; ++i) CHECK(p.values[lay.bias(l) + i] == 0.0);
        CHECK(p.values[lay.slope(l)] == 1.0);
    }
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.5 * bound);  // actually random, not degenerate
    CHECK(p.values[lay.out_bias()] == 0.0);

    const ParamSet q = net::init_xavier(cfg, 42);
    CHECK(p.values == q.values);  // deterministic
    const ParamSet r = net::init_xavier(cfg, 43);
    CHECK(p.values != r.values);
}

TEST_CASE("forward: constant network") {
    const NetworkConfig cfg{2, 2, 4, true, 1};
    ParamSet p{cfg, std::vector<double>(net::count_parameters(cfg), 0.0)};
    const ParamLayout lay(cfg);
    p.values[lay.out_bias()] = 3.25;

    ad::ExprGraph g;
    const auto ids = param_vars(g, p);
    for (Vec2 x : {Vec2{0, 0}, Vec2{0.3, -0.7}, Vec2{1, 1}}) {
        const ad::NodeId u = net::forward(g, cfg, ids, {g.var(x.x), g.var(x.y)});
        CHECK(g.value(u) == 3.25);
    }
}

TEST_CASE("forward: zero slopes give an affine function of the input") {
    const NetworkConfig cfg{2, 3, 5, true, 1};
    ParamSet p = random_params(cfg, 5);
    const ParamLayout lay(cfg);
    for (int l = 0; l < lay.layers; ++l) p.values[lay.slope(l)] = 0.0;
    // with tanh(0 * s) = 0 every block reduces to its skip, so
    // u = out_w . pad(x) + out_b
    const double w1 = p.values[lay.out_weights() + 0];
    const double w2 = p.values[lay.out_weights() + 1];
    const double c = p.values[lay.out_bias()];

    ad::ExprGraph g;
    const auto ids = param_vars(g, p);
    for (Vec2 x : {Vec2{0.2, 0.9}, Vec2{-1.5, 0.4}, Vec2{2.0, -3.0}}) {
        const ad::NodeId u = net::forward(g, cfg, ids, {g.var(x.x), g.var(x.y)});
        CHECK(g.value(u) == doctest::Approx(w1 * x.x + w2 * x.y + c).epsilon(1e-14));
    }

    // and the spatial gradient is constant over x
    MlpKernel kernel(cfg);
    auto ws = kernel.make_workspace();
    kernel.forward(p.values.data(), {0.1, 0.2}, ws, true);
    const Vec2 g1{ws.ux, ws.uy};
    kernel.forward(p.values.data(), {-0.8, 0.55}, ws, true);
    CHECK(ws.ux == doctest::Approx(g1.x).epsilon(1e-14));
    CHECK(ws.uy == doctest::Approx(g1.y).epsilon(1e-14));
    CHECK(g1.x == doctest::Approx(w1).epsilon(1e-14));
}

TEST_CASE("skip connections: zeroed blocks act as the identity") {
    const NetworkConfig cfg{2, 4, 3, true, 1};
    ParamSet p{cfg, std::vector<double>(net::count_parameters(cfg), 0.0)};
    const ParamLayout lay(cfg);
    for (int l = 0; l < lay.layers; ++l) p.values[lay.slope(l)] = 1.0;  // tanh(b)=0 anyway
    p.values[lay.out_weights() + 0] = 2.0;
    p.values[lay.out_weights() + 1] = -1.0;
    p.values[lay.out_bias()] = 0.5;

    MlpKernel kernel(cfg);
    auto ws = kernel.make_workspace();
    kernel.forward(p.values.data(), {0.7, 0.3}, ws, false);
    CHECK(ws.u == doctest::Approx(2.0 * 0.7 - 1.0 * 0.3 + 0.5).epsilon(1e-14));
}

TEST_CASE("forward stays finite on the unit square") {
    const NetworkConfig cfg{2, 4, 8, true, 1};
    const ParamSet p = random_params(cfg, 11);
    MlpKernel kernel(cfg);
    auto ws = kernel.make_workspace();
    for (int i = 0; i < 25; ++i) {
        const Vec2 x{(i % 5) / 4.0, (i / 5) / 4.0};
        kernel.forward(p.values.data(), x, ws, true);
        CHECK(std::isfinite(ws.u));
        CHECK(std::isfinite(ws.ux));
        CHECK(std::isfinite(ws.uy));
    }
}

TEST_CASE("kernel forward agrees with the tape route") {
    for (bool adaptive : {true, false}) {
        const NetworkConfig cfg{2, 2, 5, adaptive, 1};
        const ParamSet p = random_params(cfg, 17 + adaptive);
        MlpKernel kernel(cfg);
        auto ws = kernel.make_workspace();

        ad::ExprGraph g;
        const auto ids = param_vars(g, p);
        const std::array<ad::NodeId, 2> xv = {g.var(0.35), g.var(-0.15)};
        const ad::NodeId u = net::forward(g, cfg, ids, xv);
        const auto grad = net::spatial_gradient(g, u, xv);

        kernel.forward(p.values.data(), {0.35, -0.15}, ws, true);
        CHECK(ws.u == doctest::Approx(g.value(u)).epsilon(1e-13));
        CHECK(ws.ux == doctest::Approx(g.value(grad[0])).epsilon(1e-12));
        CHECK(ws.uy == doctest::Approx(g.value(grad[1])).epsilon(1e-12));
    }
}

TEST_CASE("kernel backward agrees with the tape adjoints") {
    for (bool adaptive : {true, false}) {
        const NetworkConfig cfg{2, 2, 4, adaptive, 1};
        const ParamSet p = random_params(cfg, 23 + adaptive);
        const std::size_t n = p.values.size();

        const double gu = 0.8, gx = -1.3, gy = 0.45;
        const Vec2 x{0.6, 0.2};

        // tape: seeds applied to u, ux, uy
        ad::ExprGraph g;
        const auto ids = param_vars(g, p);
        const std::array<ad::NodeId, 2> xv = {g.var(x.x), g.var(x.y)};
        const ad::NodeId u = net::forward(g, cfg, ids, xv);
        const auto sg = net::spatial_gradient(g, u, xv);
        const ad::NodeId seeded =
            g.add(g.scale(u, gu), g.add(g.scale(sg[0], gx), g.scale(sg[1], gy)));
        const auto adj = g.backward(seeded);

        MlpKernel kernel(cfg);
        auto ws = kernel.make_workspace();
        std::vector<double> grad(n, 0.0);
        kernel.forward(p.values.data(), x, ws, true);
        kernel.backward(p.values.data(), ws, gu, gx, gy, grad.data());

        for (std::size_t i = 0; i < n; ++i) {
            CHECK(grad[i] ==
                  doctest::Approx(adj[ids[i].index]).epsilon(1e-11).scale(
                      std::max(1.0, std::abs(grad[i]))));
        }

        // u-only backward path (no tangents)
        std::vector<double> grad_u(n, 0.0);
        kernel.forward(p.values.data(), x, ws, false);
        kernel.backward(p.values.data(), ws, 1.0, 0.0, 0.0, grad_u.data());
        const auto adj_u = g.backward(u);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(grad_u[i] == doctest::Approx(adj_u[ids[i].index]).epsilon(1e-11));
    }
}

TEST_CASE("spatial gradient matches finite differences") {
    const NetworkConfig cfg{2, 3, 6, true, 1};
    const ParamSet p = random_params(cfg, 31);
    MlpKernel kernel(cfg);
    auto ws = kernel.make_workspace();

    const Vec2 x{0.42, 0.77};
    kernel.forward(p.values.data(), x, ws, true);
    const double ux = ws.ux, uy = ws.uy;

    const double h = 1e-6;
    auto eval = [&](Vec2 q) {
        kernel.forward(p.values.data(), q, ws, false);
        return ws.u;
    };
    const double fdx = (eval({x.x + h, x.y}) - eval({x.x - h, x.y})) / (2 * h);
    const double fdy = (eval({x.x, x.y + h}) - eval({x.x, x.y - h})) / (2 * h);
    CHECK(ux == doctest::Approx(fdx).epsilon(1e-6));
    CHECK(uy == doctest::Approx(fdy).epsilon(1e-6));
}

TEST_CASE("parameter serialization round trip") {
    const NetworkConfig cfg{2, 2, 5, true, 1};
    const ParamSet p = random_params(cfg, 77);
    const std::string text = net::params_to_json(p, "disk");
    std::string label;
    const ParamSet q = net::params_from_json(text, &label);
    CHECK(label == "disk");
    CHECK(q.config.blocks == cfg.blocks);
    CHECK(q.config.neurons == cfg.neurons);
    CHECK(q.config.adaptive_activations == cfg.adaptive_activations);
    CHECK(q.values == p.values);  // bit-exact via JSON doubles

    CHECK_THROWS(net::params_from_json("{\"blocks\":1}"));
}
