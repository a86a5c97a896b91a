#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vns/autodiff.hpp"
#include "vns/common.hpp"

namespace vns::net {

// Residual-block trial-function network: `blocks` blocks of two fully
// connected layers (width `neurons`) with a skip connection around each
// block, tanh activations with an optional trainable per-layer slope, and a
// final affine map to a scalar. The input is zero-padded from `input_dim`
// to `neurons`, so `neurons >= input_dim` is required.
struct NetworkConfig {
    int input_dim = 2;
    int blocks = 1;
    int neurons = 2;
    bool adaptive_activations = true;
    int output_dim = 1;
};

std::size_t count_parameters(const NetworkConfig& config);

// Flat parameter vector. Layout, per hidden layer l = 0..2*blocks-1:
// W^(l) row-major (neurons x neurons, row i = weights into neuron i),
// b^(l), then the slope a_l when adaptive; finally the output weights
// (neurons) and output bias.
struct ParamSet {
    NetworkConfig config;
    std::vector<double> values;
};

ParamSet init_xavier(const NetworkConfig& config, std::uint64_t seed);

std::string params_to_json(const ParamSet& params, const std::string& label = "");
ParamSet params_from_json(const std::string& json_text, std::string* label = nullptr);

// Offsets into the flat layout.
struct ParamLayout {
    explicit ParamLayout(const NetworkConfig& config);
    int n;           // neurons
    int layers;      // 2 * blocks
    bool adaptive;
    std::size_t layer_stride;
    std::size_t weights(int layer) const { return layer * layer_stride; }
    std::size_t bias(int layer) const { return layer * layer_stride + std::size_t(n) * n; }
    std::size_t slope(int layer) const { return bias(layer) + n; }
    std::size_t out_weights() const { return std::size_t(layers) * layer_stride; }
    std::size_t out_bias() const { return out_weights() + n; }
    std::size_t total() const { return out_bias() + 1; }
};

// --- tape route ------------------------------------------------------------

// u_theta(x) emitted on the tape; `params` follows the flat layout and `x`
// holds the two input nodes (typically variables, so spatial gradients can
// be taken afterwards).
ad::NodeId forward(ad::ExprGraph& graph, const NetworkConfig& config,
                   std::span<const ad::NodeId> params, std::array<ad::NodeId, 2> x);

// (du/dx, du/dy) via forward-mode sweeps recorded on the tape; the result
// stays differentiable w.r.t. the parameter nodes.
std::array<ad::NodeId, 2> spatial_gradient(ad::ExprGraph& graph, ad::NodeId u,
                                           std::array<ad::NodeId, 2> x);

// --- fused kernel route ----------------------------------------------------

// Per-thread scratch for MlpKernel; reusable across samples.
struct MlpWorkspace {
    std::vector<double> block_in;   // (blocks+1) x n
    std::vector<double> h, d, s;    // layers x n each
    std::vector<double> st, qt;     // 2 dims x layers x n (spatial tangent chains)
    std::vector<double> bt;         // 2 dims x (blocks+1) x n (block-input tangents)
    std::vector<double> acc, acc2, acc3;  // n-sized temporaries
    double u = 0, ux = 0, uy = 0;
    bool has_tangents = false;
};

// Hand-fused evaluation of the identical composition the tape route builds:
// forward pass, optional spatial tangents, and reverse accumulation of
// parameter gradients seeded at (u, du/dx, du/dy). Exists because full-batch
// training evaluates the network tens of millions of times per run; it is
// cross-checked against the tape route and finite differences in the tests.
class MlpKernel {
public:
    explicit MlpKernel(const NetworkConfig& config);

    const NetworkConfig& config() const { return config_; }
    std::size_t param_count() const { return layout_.total(); }

    // Evaluates u (and du/dx, du/dy when with_tangents) into ws.
    void forward(const double* params, Vec2 x, MlpWorkspace& ws, bool with_tangents) const;

    // Accumulates d(gu*u + gx*ux + gy*uy)/dparams into `grad`; must follow a
    // forward() on the same workspace (with tangents whenever gx or gy is
    // used).
    void backward(const double* params, const MlpWorkspace& ws, double gu, double gx, double gy,
                  double* grad) const;

    MlpWorkspace make_workspace() const;

private:
    NetworkConfig config_;
    ParamLayout layout_;
};

}  // namespace vns::net
