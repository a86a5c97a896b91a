#include "doctest.h"

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "vns/autodiff.hpp"

using namespace vns;
using ad::ExprGraph;
using ad::NodeId;
using ad::Op;

namespace {

// central finite differences of a graph node w.r.t. one variable
double fd(ExprGraph& g, NodeId out, NodeId var, double h = 1e-6) {
    const double x0 = g.value(var);
    g.set_value(var, x0 + h);
    const double fp = g.eval_value(out);
    g.set_value(var, x0 - h);
    const double fm = g.eval_value(out);
    g.set_value(var, x0);
    g.eval();
    return (fp - fm) / (2.0 * h);
}

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace

TEST_CASE("basic op values") {
    ExprGraph g;
    CHECK(g.value(g.add(g.constant(1.0), g.constant(2.0))) == 3.0);
    CHECK(g.value(g.tanh(g.constant(0.0))) == 0.0);
    const NodeId x = g.var(3.0);
    CHECK(g.value(g.square(x)) == 9.0);
    CHECK(g.value(g.sub(g.constant(5.0), g.constant(2.0))) == 3.0);
    CHECK(g.value(g.div(g.constant(1.0), g.constant(4.0))) == 0.25);
    CHECK(g.value(g.neg(x)) == -3.0);
    CHECK(g.value(g.sqrt(g.constant(16.0))) == 4.0);
    CHECK(g.value(g.scale(x, 2.5)) == 7.5);

    const std::array<NodeId, 2> a = {g.constant(1.0), g.constant(2.0)};
    const std::array<NodeId, 2> b = {g.constant(3.0), g.constant(4.0)};
    CHECK(g.value(g.dot(a, b)) == 11.0);
}

TEST_CASE("generic build and structural errors") {
    ExprGraph g;
    const NodeId one = g.constant(1.0);
    const NodeId two = g.constant(2.0);
    const std::array<NodeId, 2> ops = {one, two};
    CHECK(g.value(g.build(Op::Mul, ops)) == 2.0);

    NodeId bogus{12345};
    CHECK_THROWS_AS(g.add(one, bogus), std::invalid_argument);
    CHECK_THROWS_AS(g.build(Op::Tanh, ops), std::invalid_argument);  // wrong arity
    CHECK_THROWS_AS(g.set_value(one, 2.0), std::invalid_argument);   // not a var
}

TEST_CASE("grad_nodes hand examples") {
    ExprGraph g;
    const NodeId x = g.var(0.0);
    const NodeId t = g.tanh(x);
    const std::array<NodeId, 1> wrt = {x};
    const auto grad = g.grad_nodes(t, wrt);
    CHECK(g.value(grad[0]) == doctest::Approx(1.0).epsilon(1e-14));

    // second derivative of x^2 via grad of grad
    ExprGraph g2;
    const NodeId y = g2.var(1.7);
    const NodeId sq = g2.square(y);
    const std::array<NodeId, 1> wrt2 = {y};
    const auto g1 = g2.grad_nodes(sq, wrt2);
    const auto g2nd = g2.grad_nodes(g1[0], wrt2);
    CHECK(g2.value(g2nd[0]) == doctest::Approx(2.0).epsilon(1e-14));
    g2.set_value(y, -3.3);
    g2.eval();
    CHECK(g2.value(g2nd[0]) == doctest::Approx(2.0).epsilon(1e-14));

    CHECK_THROWS_AS(g2.grad_nodes(sq, std::array<NodeId, 1>{sq}), std::invalid_argument);
}

TEST_CASE("grad matches finite differences on a random 3-parameter expression") {
    ExprGraph g;
    const NodeId a = g.var(0.7);
    const NodeId b = g.var(-0.4);
    const NodeId c = g.var(1.3);
    // f = tanh(a*b) + c^2/(1 + b^2) - sqrt(1 + a^2) * c
    const NodeId f = g.add(
        g.tanh(g.mul(a, b)),
        g.sub(g.div(g.square(c), g.add(g.constant(1.0), g.square(b))),
              g.mul(g.sqrt(g.add(g.constant(1.0), g.square(a))), c)));
    const std::array<NodeId, 3> wrt = {a, b, c};
    const auto grad = g.grad_nodes(f, wrt);
    g.eval();
    for (int i = 0; i < 3; ++i) {
        const double want = fd(g, f, wrt[i]);
        CHECK(rel_err(g.value(grad[i]), want) <= 1e-6);
    }
}

TEST_CASE("numeric backward agrees with emitted gradient nodes") {
    ExprGraph g;
    const NodeId a = g.var(0.9);
    const NodeId b = g.var(0.2);
    const std::array<NodeId, 2> la = {a, g.tanh(b)};
    const std::array<NodeId, 2> lb = {g.square(b), a};
    const NodeId f = g.div(g.dot(la, lb), g.add(g.constant(2.0), g.square(a)));
    const std::array<NodeId, 2> wrt = {a, b};
    const auto grad = g.grad_nodes(f, wrt);
    g.eval();
    const auto adj = g.backward(f);
    CHECK(adj[a.index] == doctest::Approx(g.value(grad[0])).epsilon(1e-14));
    CHECK(adj[b.index] == doctest::Approx(g.value(grad[1])).epsilon(1e-14));
}

TEST_CASE("jvp hand examples") {
    ExprGraph g;
    const NodeId x = g.var(2.0);
    const NodeId y = g.var(3.0);
    const NodeId f = g.mul(x, y);
    const std::array<NodeId, 2> inputs = {x, y};
    const std::array<NodeId, 2> dir = {g.constant(1.0), g.constant(0.0)};
    const auto jvp = g.jvp_nodes(std::array<NodeId, 1>{f}, inputs, dir);
    CHECK(g.value(jvp[0]) == doctest::Approx(3.0));

    // identity map maps the direction to itself
    const std::array<NodeId, 2> outs = {x, y};
    const std::array<NodeId, 2> e1 = {g.constant(1.0), g.constant(0.0)};
    const auto ident = g.jvp_nodes(outs, inputs, e1);
    CHECK(g.value(ident[0]) == 1.0);
    CHECK(g.value(ident[1]) == 0.0);

    CHECK_THROWS_AS(g.jvp_nodes(outs, inputs, std::array<NodeId, 1>{x}), std::invalid_argument);
}

TEST_CASE("jvp of a small tanh composition matches finite differences") {
    std::mt19937_64 rng(7);
    auto u = [&] { return 2.0 * double(rng() >> 11) * 0x1.0p-53 - 1.0; };

    ExprGraph g;
    const NodeId x1 = g.var(0.3);
    const NodeId x2 = g.var(-0.6);
    // 2-layer tanh net with fixed random weights
    std::array<NodeId, 4> h{};
    for (int i = 0; i < 4; ++i) {
        const std::array<NodeId, 2> w = {g.constant(u()), g.constant(u())};
        const std::array<NodeId, 2> in = {x1, x2};
        h[i] = g.tanh(g.add(g.dot(w, in), g.constant(u())));
    }
    std::array<NodeId, 2> out{};
    for (int i = 0; i < 2; ++i) {
        const std::array<NodeId, 4> w = {g.constant(u()), g.constant(u()), g.constant(u()),
                                         g.constant(u())};
        out[i] = g.tanh(g.add(g.dot(w, h), g.constant(u())));
    }
    const NodeId f = g.add(out[0], g.scale(out[1], 0.5));

    const std::array<NodeId, 2> inputs = {x1, x2};
    const std::array<NodeId, 2> dx = {g.constant(1.0), g.constant(0.0)};
    const std::array<NodeId, 2> dy = {g.constant(0.0), g.constant(1.0)};
    const auto jx = g.jvp_nodes(std::array<NodeId, 1>{f}, inputs, dx);
    const auto jy = g.jvp_nodes(std::array<NodeId, 1>{f}, inputs, dy);
    g.eval();
    CHECK(rel_err(g.value(jx[0]), fd(g, f, x1)) <= 1e-6);
    CHECK(rel_err(g.value(jy[0]), fd(g, f, x2)) <= 1e-6);
}

TEST_CASE("linearity of the gradient") {
    ExprGraph g;
    const NodeId x = g.var(0.8);
    const NodeId y = g.var(-1.1);
    const NodeId f = g.mul(g.tanh(x), y);
    const NodeId h = g.add(g.square(x), g.div(y, g.constant(2.0)));
    const double a = 1.7, b = -0.3;
    const NodeId combo = g.add(g.scale(f, a), g.scale(h, b));

    const std::array<NodeId, 2> wrt = {x, y};
    const auto gf = g.grad_nodes(f, wrt);
    const auto gh = g.grad_nodes(h, wrt);
    const auto gc = g.grad_nodes(combo, wrt);
    for (double bind : {0.8, -0.25, 2.0}) {
        g.set_value(x, bind);
        g.set_value(y, bind * 0.5 - 1.0);
        g.eval();
        for (int i = 0; i < 2; ++i)
            CHECK(g.value(gc[i]) ==
                  doctest::Approx(a * g.value(gf[i]) + b * g.value(gh[i])).epsilon(1e-12));
    }
}

TEST_CASE("tape replay is bit-identical for identical bindings") {
    ExprGraph g;
    const NodeId x = g.var(0.123456);
    const NodeId y = g.var(-0.654321);
    const NodeId f = g.mul(g.tanh(g.mul(x, y)), g.sqrt(g.add(g.square(x), g.constant(0.5))));
    const auto grad = g.grad_nodes(f, std::array<NodeId, 2>{x, y});
    g.eval();
    const double f0 = g.value(f);
    const double g0 = g.value(grad[0]);

    g.set_value(x, 9.0);
    g.set_value(y, -2.0);
    g.eval();
    CHECK(g.value(f) != f0);

    g.set_value(x, 0.123456);
    g.set_value(y, -0.654321);
    g.eval();
    CHECK(g.value(f) == f0);        // bit-identical
    CHECK(g.value(grad[0]) == g0);  // bit-identical
}
