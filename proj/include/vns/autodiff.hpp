#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vns::ad {

enum class Op : std::uint8_t {
    Const,
    Var,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Tanh,
    Square,
    Sqrt,
    Dot,    // sum_i a_i * b_i over an even operand list (a..., b...)
    Scale,  // immediate * operand
};

struct NodeId {
    std::uint32_t index = invalid_index;
    static constexpr std::uint32_t invalid_index = 0xffffffffu;

    bool valid() const { return index != invalid_index; }
    bool operator==(const NodeId&) const = default;
};

// Append-only scalar expression tape. Values are cached eagerly on
// construction and recomputed in index order by eval(), so replaying the
// tape with identical variable bindings is bit-identical. Derivative
// extraction (grad_nodes / jvp_nodes) emits new nodes, which keeps losses
// containing spatial gradients differentiable w.r.t. parameters; backward()
// is the numeric adjoint sweep used where only gradient values are needed.
class ExprGraph {
public:
    NodeId constant(double v);
    NodeId var(double v);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);
    NodeId neg(NodeId a);
    NodeId tanh(NodeId a);
    NodeId square(NodeId a);
    NodeId sqrt(NodeId a);
    NodeId dot(std::span<const NodeId> a, std::span<const NodeId> b);
    NodeId scale(NodeId a, double factor);

    // Generic builder; `Scale` is not constructible here since it carries an
    // immediate factor.
    NodeId build(Op op, std::span<const NodeId> operands);

    bool is_var(NodeId id) const;
    double value(NodeId id) const;
    std::size_t size() const { return ops_.size(); }

    void set_value(NodeId var_id, double v);
    // Recompute every cached value in index order.
    void eval();
    double eval_value(NodeId id) {
        eval();
        return value(id);
    }

    // Reverse sweep from `scalar`; returns adjoints for all nodes.
    std::vector<double> backward(NodeId scalar) const;

    // d scalar / d wrt_i as new nodes (each wrt must be a Var).
    std::vector<NodeId> grad_nodes(NodeId scalar, std::span<const NodeId> wrt);

    // Directional derivatives of `outputs` along `direction` seeded at the
    // variable nodes `inputs`; emitted as new nodes.
    std::vector<NodeId> jvp_nodes(std::span<const NodeId> outputs,
                                  std::span<const NodeId> inputs,
                                  std::span<const NodeId> direction);

private:
    struct Entry {
        Op op;
        std::uint32_t a = 0;
        std::uint32_t b = 0;
    };

    std::vector<Entry> ops_;
    std::vector<double> values_;
    std::vector<std::uint32_t> pool_;  // dot operands
    std::vector<double> imm_;          // scale factors

    NodeId push(Op op, std::uint32_t a, std::uint32_t b, double value);
    double compute(std::size_t i) const;
    void check(NodeId id) const;
    bool is_const(NodeId id, double* out = nullptr) const;

    // folding helpers used by derivative emission
    NodeId fold_add(NodeId a, NodeId b);  // either side may be invalid (= zero)
    NodeId fold_mul(NodeId a, NodeId b);
    NodeId fold_scale(NodeId a, double f);
};

}  // namespace vns::ad
