#include "vns/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace vns::ad {

NodeId ExprGraph::push(Op op, std::uint32_t a, std::uint32_t b, double value) {
    ops_.push_back({op, a, b});
    values_.push_back(value);
    return NodeId{static_cast<std::uint32_t>(ops_.size() - 1)};
}

void ExprGraph::check(NodeId id) const {
    if (!id.valid() || id.index >= ops_.size())
        throw std::invalid_argument("autodiff: operand id does not belong to this graph");
}

bool ExprGraph::is_const(NodeId id, double* out) const {
    if (ops_[id.index].op != Op::Const) return false;
    if (out) *out = values_[id.index];
    return true;
}

NodeId ExprGraph::constant(double v) { return push(Op::Const, 0, 0, v); }

NodeId ExprGraph::var(double v) { return push(Op::Var, 0, 0, v); }

bool ExprGraph::is_var(NodeId id) const {
    check(id);
    return ops_[id.index].op == Op::Var;
}

double ExprGraph::value(NodeId id) const {
    check(id);
    return values_[id.index];
}

void ExprGraph::set_value(NodeId var_id, double v) {
    check(var_id);
    if (ops_[var_id.index].op != Op::Var)
        throw std::invalid_argument("autodiff: set_value requires a variable node");
    values_[var_id.index] = v;
}

NodeId ExprGraph::add(NodeId a, NodeId b) {
    check(a);
    check(b);
    return push(Op::Add, a.index, b.index, values_[a.index] + values_[b.index]);
}

NodeId ExprGraph::sub(NodeId a, NodeId b) {
    check(a);
    check(b);
    return push(Op::Sub, a.index, b.index, values_[a.index] - values_[b.index]);
}

NodeId ExprGraph::mul(NodeId a, NodeId b) {
    check(a);
    check(b);
    return push(Op::Mul, a.index, b.index, values_[a.index] * values_[b.index]);
}

NodeId ExprGraph::div(NodeId a, NodeId b) {
    check(a);
    check(b);
    return push(Op::Div, a.index, b.index, values_[a.index] / values_[b.index]);
}

NodeId ExprGraph::neg(NodeId a) {
    check(a);
    return push(Op::Neg, a.index, 0, -values_[a.index]);
}

NodeId ExprGraph::tanh(NodeId a) {
    check(a);
    return push(Op::Tanh, a.index, 0, std::tanh(values_[a.index]));
}

NodeId ExprGraph::square(NodeId a) {
    check(a);
    const double v = values_[a.index];
    return push(Op::Square, a.index, 0, v * v);
}

NodeId ExprGraph::sqrt(NodeId a) {
    check(a);
    return push(Op::Sqrt, a.index, 0, std::sqrt(values_[a.index]));
}

NodeId ExprGraph::dot(std::span<const NodeId> a, std::span<const NodeId> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("autodiff: dot requires equally sized operand lists");
    double v = 0.0;
    const auto offset = static_cast<std::uint32_t>(pool_.size());
    for (const NodeId id : a) {
        check(id);
        pool_.push_back(id.index);
    }
    for (const NodeId id : b) {
        check(id);
        pool_.push_back(id.index);
    }
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i)
        v += values_[pool_[offset + i]] * values_[pool_[offset + n + i]];
    return push(Op::Dot, offset, static_cast<std::uint32_t>(n), v);
}

NodeId ExprGraph::scale(NodeId a, double factor) {
    check(a);
    const auto imm_index = static_cast<std::uint32_t>(imm_.size());
    imm_.push_back(factor);
    return push(Op::Scale, a.index, imm_index, values_[a.index] * factor);
}

NodeId ExprGraph::build(Op op, std::span<const NodeId> operands) {
    auto need = [&](std::size_t n) {
        if (operands.size() != n)
            throw std::invalid_argument("autodiff: wrong operand count for op");
    };
    switch (op) {
        case Op::Const:
        case Op::Var:
        case Op::Scale:
            throw std::invalid_argument("autodiff: op requires a dedicated builder");
        case Op::Add: need(2); return add(operands[0], operands[1]);
        case Op::Sub: need(2); return sub(operands[0], operands[1]);
        case Op::Mul: need(2); return mul(operands[0], operands[1]);
        case Op::Div: need(2); return div(operands[0], operands[1]);
        case Op::Neg: need(1); return neg(operands[0]);
        case Op::Tanh: need(1); return tanh(operands[0]);
        case Op::Square: need(1); return square(operands[0]);
        case Op::Sqrt: need(1); return sqrt(operands[0]);
        case Op::Dot: {
            if (operands.size() % 2 != 0)
                throw std::invalid_argument("autodiff: dot needs an even operand count");
            const std::size_t n = operands.size() / 2;
            return dot(operands.subspan(0, n), operands.subspan(n));
        }
    }
    throw std::invalid_argument("autodiff: unknown op");
}

double ExprGraph::compute(std::size_t i) const {
    const Entry& e = ops_[i];
    switch (e.op) {
        case Op::Const:
        case Op::Var: return values_[i];
        case Op::Add: return values_[e.a] + values_[e.b];
        case Op::Sub: return values_[e.a] - values_[e.b];
        case Op::Mul: return values_[e.a] * values_[e.b];
        case Op::Div: return values_[e.a] / values_[e.b];
        case Op::Neg: return -values_[e.a];
        case Op::Tanh: return std::tanh(values_[e.a]);
        case Op::Square: return values_[e.a] * values_[e.a];
        case Op::Sqrt: return std::sqrt(values_[e.a]);
        case Op::Dot: {
            double v = 0.0;
            const std::uint32_t* p = pool_.data() + e.a;
            for (std::uint32_t i2 = 0; i2 < e.b; ++i2) v += values_[p[i2]] * values_[p[e.b + i2]];
            return v;
        }
        case Op::Scale: return values_[e.a] * imm_[e.b];
    }
    return 0.0;
}

void ExprGraph::eval() {
    const std::size_t n = ops_.size();
    for (std::size_t i = 0; i < n; ++i) values_[i] = compute(i);
}

std::vector<double> ExprGraph::backward(NodeId scalar) const {
    check(scalar);
    std::vector<double> adj(ops_.size(), 0.0);
    adj[scalar.index] = 1.0;
    for (std::size_t i = scalar.index + 1; i-- > 0;) {
        const double g = adj[i];
        if (g == 0.0) continue;
        const Entry& e = ops_[i];
        switch (e.op) {
            case Op::Const:
            case Op::Var: break;
            case Op::Add:
                adj[e.a] += g;
                adj[e.b] += g;
                break;
            case Op::Sub:
                adj[e.a] += g;
                adj[e.b] -= g;
                break;
            case Op::Mul:
                adj[e.a] += g * values_[e.b];
                adj[e.b] += g * values_[e.a];
                break;
            case Op::Div: {
                const double inv_b = 1.0 / values_[e.b];
                adj[e.a] += g * inv_b;
                adj[e.b] -= g * values_[i] * inv_b;
                break;
            }
            case Op::Neg: adj[e.a] -= g; break;
            case Op::Tanh: adj[e.a] += g * (1.0 - values_[i] * values_[i]); break;
            case Op::Square: adj[e.a] += g * 2.0 * values_[e.a]; break;
            case Op::Sqrt: adj[e.a] += g * 0.5 / values_[i]; break;
            case Op::Dot: {
                const std::uint32_t* p = pool_.data() + e.a;
                for (std::uint32_t k = 0; k < e.b; ++k) {
                    adj[p[k]] += g * values_[p[e.b + k]];
                    adj[p[e.b + k]] += g * values_[p[k]];
                }
                break;
            }
            case Op::Scale: adj[e.a] += g * imm_[e.b]; break;
        }
    }
    return adj;
}

NodeId ExprGraph::fold_add(NodeId a, NodeId b) {
    if (!a.valid()) return b;
    if (!b.valid()) return a;
    double ca, cb;
    const bool fa = is_const(a, &ca), fb = is_const(b, &cb);
    if (fa && fb) return constant(ca + cb);
    if (fa && ca == 0.0) return b;
    if (fb && cb == 0.0) return a;
    return add(a, b);
}

NodeId ExprGraph::fold_mul(NodeId a, NodeId b) {
    if (!a.valid() || !b.valid()) return NodeId{};
    double ca, cb;
    const bool fa = is_const(a, &ca), fb = is_const(b, &cb);
    if (fa && fb) return constant(ca * cb);
    if (fa) return fold_scale(b, ca);
    if (fb) return fold_scale(a, cb);
    return mul(a, b);
}

NodeId ExprGraph::fold_scale(NodeId a, double f) {
    if (!a.valid() || f == 0.0) return f == 0.0 ? NodeId{} : a;
    if (f == 1.0) return a;
    double ca;
    if (is_const(a, &ca)) return constant(ca * f);
    return scale(a, f);
}

std::vector<NodeId> ExprGraph::grad_nodes(NodeId scalar, std::span<const NodeId> wrt) {
    check(scalar);
    for (const NodeId id : wrt)
        if (!is_var(id)) throw std::invalid_argument("autodiff: grad_nodes wrt must be variables");

    // Adjoint node per tape entry; invalid means identically zero. Nodes
    // emitted during the sweep carry indices above `scalar` and are never
    // revisited, so a single reverse pass suffices.
    std::vector<NodeId> adj(scalar.index + 1);
    adj[scalar.index] = constant(1.0);
    for (std::size_t i = scalar.index + 1; i-- > 0;) {
        const NodeId g = adj[i];
        if (!g.valid()) continue;
        const Entry& e = ops_[i];
        auto acc = [&](std::uint32_t target, NodeId contrib) {
            if (!contrib.valid()) return;
            adj[target] = fold_add(adj[target], contrib);
        };
        switch (e.op) {
            case Op::Const:
            case Op::Var: break;
            case Op::Add:
                acc(e.a, g);
                acc(e.b, g);
                break;
            case Op::Sub:
                acc(e.a, g);
                acc(e.b, fold_scale(g, -1.0));
                break;
            case Op::Mul:
                acc(e.a, fold_mul(g, NodeId{e.b}));
                acc(e.b, fold_mul(g, NodeId{e.a}));
                break;
            case Op::Div: {
                // d(a/b) = da/b - (a/b) db / b
                acc(e.a, div(g, NodeId{e.b}));
                acc(e.b, fold_scale(div(fold_mul(g, NodeId{static_cast<std::uint32_t>(i)}), NodeId{e.b}), -1.0));
                break;
            }
            case Op::Neg: acc(e.a, fold_scale(g, -1.0)); break;
            case Op::Tanh: {
                NodeId one_minus = sub(constant(1.0), square(NodeId{static_cast<std::uint32_t>(i)}));
                acc(e.a, fold_mul(g, one_minus));
                break;
            }
            case Op::Square: acc(e.a, fold_mul(g, fold_scale(NodeId{e.a}, 2.0))); break;
            case Op::Sqrt:
                acc(e.a, div(g, scale(NodeId{static_cast<std::uint32_t>(i)}, 2.0)));
                break;
            case Op::Dot: {
                const std::uint32_t base = e.a;
                for (std::uint32_t k = 0; k < e.b; ++k) {
                    const std::uint32_t ai = pool_[base + k];
                    const std::uint32_t bi = pool_[base + e.b + k];
                    acc(ai, fold_mul(g, NodeId{bi}));
                    acc(bi, fold_mul(g, NodeId{ai}));
                }
                break;
            }
            case Op::Scale: acc(e.a, fold_scale(g, imm_[e.b])); break;
        }
    }

    std::vector<NodeId> out;
    out.reserve(wrt.size());
    for (const NodeId id : wrt) {
        NodeId g = id.index < adj.size() ? adj[id.index] : NodeId{};
        out.push_back(g.valid() ? g : constant(0.0));
    }
    return out;
}

std::vector<NodeId> ExprGraph::jvp_nodes(std::span<const NodeId> outputs,
                                         std::span<const NodeId> inputs,
                                         std::span<const NodeId> direction) {
    if (inputs.size() != direction.size())
        throw std::invalid_argument("autodiff: jvp inputs/direction length mismatch");
    for (const NodeId id : inputs)
        if (!is_var(id)) throw std::invalid_argument("autodiff: jvp inputs must be variables");

    std::uint32_t last = 0;
    for (const NodeId id : outputs) {
        check(id);
        last = std::max(last, id.index);
    }

    std::vector<NodeId> tan(last + 1);  // invalid = zero tangent
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (inputs[i].index <= last) tan[inputs[i].index] = direction[i];

    for (std::uint32_t i = 0; i <= last; ++i) {
        const Entry& e = ops_[i];
        if (e.op == Op::Const) continue;
        if (e.op == Op::Var) continue;  // non-input vars have zero tangent
        const NodeId self{i};
        switch (e.op) {
            case Op::Add: tan[i] = fold_add(tan[e.a], tan[e.b]); break;
            case Op::Sub: {
                NodeId tb = tan[e.b].valid() ? fold_scale(tan[e.b], -1.0) : NodeId{};
                tan[i] = fold_add(tan[e.a], tb);
                break;
            }
            case Op::Mul:
                tan[i] = fold_add(fold_mul(tan[e.a], NodeId{e.b}), fold_mul(NodeId{e.a}, tan[e.b]));
                break;
            case Op::Div: {
                // d(a/b) = da/b - self*db/b
                NodeId t1 = tan[e.a].valid() ? div(tan[e.a], NodeId{e.b}) : NodeId{};
                NodeId t2 = tan[e.b].valid()
                                ? fold_scale(div(fold_mul(self, tan[e.b]), NodeId{e.b}), -1.0)
                                : NodeId{};
                tan[i] = fold_add(t1, t2);
                break;
            }
            case Op::Neg: tan[i] = tan[e.a].valid() ? fold_scale(tan[e.a], -1.0) : NodeId{}; break;
            case Op::Tanh:
                if (tan[e.a].valid()) {
                    NodeId one_minus = sub(constant(1.0), square(self));
                    tan[i] = fold_mul(one_minus, tan[e.a]);
                }
                break;
            case Op::Square:
                tan[i] = fold_mul(fold_scale(NodeId{e.a}, 2.0), tan[e.a]);
                break;
            case Op::Sqrt:
                if (tan[e.a].valid()) tan[i] = div(tan[e.a], scale(self, 2.0));
                break;
            case Op::Dot: {
                // d(sum a_k b_k) = dot(da, b) + dot(a, db), dropping zero-tangent pairs
                std::vector<NodeId> la, lb;
                NodeId total{};
                for (int side = 0; side < 2; ++side) {
                    la.clear();
                    lb.clear();
                    for (std::uint32_t k = 0; k < e.b; ++k) {
                        const std::uint32_t ai = pool_[e.a + k];
                        const std::uint32_t bi = pool_[e.a + e.b + k];
                        const std::uint32_t d = side == 0 ? ai : bi;
                        const std::uint32_t other = side == 0 ? bi : ai;
                        if (d <= last && tan[d].valid()) {
                            la.push_back(tan[d]);
                            lb.push_back(NodeId{other});
                        }
                    }
                    if (la.size() == 1)
                        total = fold_add(total, fold_mul(la[0], lb[0]));
                    else if (!la.empty())
                        total = fold_add(total, dot(la, lb));
                }
                tan[i] = total;
                break;
            }
            case Op::Scale: tan[i] = fold_scale(tan[e.a], imm_[e.b]); break;
            default: break;
        }
    }

    std::vector<NodeId> out;
    out.reserve(outputs.size());
    for (const NodeId id : outputs) {
        NodeId t = tan[id.index];
        out.push_back(t.valid() ? t : constant(0.0));
    }
    return out;
}

}  // namespace vns::ad
