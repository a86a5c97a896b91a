#include "vns/network.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

#include "json.hpp"

namespace vns::net {

namespace {

void check_config(const NetworkConfig& c) {
    if (c.blocks < 1) throw std::invalid_argument("network: blocks must be >= 1");
    if (c.neurons < c.input_dim)
        throw std::invalid_argument("network: neurons must be >= input_dim (zero padding)");
    if (c.input_dim != 2 || c.output_dim != 1)
        throw std::invalid_argument("network: only scalar networks on 2-D inputs are supported");
}

double uniform01(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

ParamLayout::ParamLayout(const NetworkConfig& config)
    : n(config.neurons),
      layers(2 * config.blocks),
      adaptive(config.adaptive_activations),
      layer_stride(std::size_t(config.neurons) * config.neurons + config.neurons +
                   (config.adaptive_activations ? 1 : 0)) {}

std::size_t count_parameters(const NetworkConfig& config) {
    check_config(config);
    return ParamLayout(config).total();
}

ParamSet init_xavier(const NetworkConfig& config, std::uint64_t seed) {
    check_config(config);
    const ParamLayout lay(config);
    ParamSet p{config, std::vector<double>(lay.total(), 0.0)};
    std::mt19937_64 rng(seed);

    const int n = config.neurons;
    const double hidden_bound = std::sqrt(6.0 / (n + n));
    for (int l = 0; l < lay.layers; ++l) {
        double* w = p.values.data() + lay.weights(l);
        for (int i = 0; i < n * n; ++i) w[i] = (2.0 * uniform01(rng) - 1.0) * hidden_bound;
        if (lay.adaptive) p.values[lay.slope(l)] = 1.0;
    }
    const double out_bound = std::sqrt(6.0 / (n + 1));
    double* w = p.values.data() + lay.out_weights();
    for (int i = 0; i < n; ++i) w[i] = (2.0 * uniform01(rng) - 1.0) * out_bound;
    return p;
}

std::string params_to_json(const ParamSet& params, const std::string& label) {
    nlohmann::json j;
    j["label"] = label;
    j["input_dim"] = params.config.input_dim;
    j["blocks"] = params.config.blocks;
    j["neurons"] = params.config.neurons;
    j["adaptive_activations"] = params.config.adaptive_activations;
    j["output_dim"] = params.config.output_dim;
    j["params"] = params.values;
    return j.dump();
}

ParamSet params_from_json(const std::string& json_text, std::string* label) {
    const auto j = nlohmann::json::parse(json_text);
    NetworkConfig c;
    c.input_dim = j.at("input_dim").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.neurons = j.at("neurons").get<int>();
    c.adaptive_activations = j.at("adaptive_activations").get<bool>();
    c.output_dim = j.at("output_dim").get<int>();
    ParamSet p{c, j.at("params").get<std::vector<double>>()};
    if (p.values.size() != count_parameters(c))
        throw std::invalid_argument("network: parameter count does not match the header config");
    if (label) *label = j.value("label", "");
    return p;
}

ad::NodeId forward(ad::ExprGraph& graph, const NetworkConfig& config,
                   std::span<const ad::NodeId> params, std::array<ad::NodeId, 2> x) {
    check_config(config);
    const ParamLayout lay(config);
    if (params.size() != lay.total())
        throw std::invalid_argument("network: flat parameter span has the wrong size");
    const int n = config.neurons;

    std::vector<ad::NodeId> z(n);
    z[0] = x[0];
    z[1] = x[1];
    const ad::NodeId zero = graph.constant(0.0);
    for (int i = 2; i < n; ++i) z[i] = zero;

    std::vector<ad::NodeId> row(n), h(n);
    for (int b = 0; b < config.blocks; ++b) {
        std::vector<ad::NodeId> block_in = z;
        for (int half = 0; half < 2; ++half) {
            const int l = 2 * b + half;
            const ad::NodeId* w = params.data() + lay.weights(l);
            const ad::NodeId* bias = params.data() + lay.bias(l);
            for (int i = 0; i < n; ++i) {
                for (int jj = 0; jj < n; ++jj) row[jj] = w[std::size_t(i) * n + jj];
                ad::NodeId s = graph.add(graph.dot(row, z), bias[i]);
                if (lay.adaptive) s = graph.mul(params[lay.slope(l)], s);
                h[i] = graph.tanh(s);
            }
            z = h;
        }
        for (int i = 0; i < n; ++i) z[i] = graph.add(z[i], block_in[i]);
    }

    const ad::NodeId* w = params.data() + lay.out_weights();
    for (int jj = 0; jj < n; ++jj) row[jj] = w[jj];
    return graph.add(graph.dot(row, z), params[lay.out_bias()]);
}

std::array<ad::NodeId, 2> spatial_gradient(ad::ExprGraph& graph, ad::NodeId u,
                                           std::array<ad::NodeId, 2> x) {
    const ad::NodeId one = graph.constant(1.0);
    const ad::NodeId zero = graph.constant(0.0);
    const std::array<ad::NodeId, 1> outs = {u};
    const std::array<ad::NodeId, 2> dir_x = {one, zero};
    const std::array<ad::NodeId, 2> dir_y = {zero, one};
    const auto gx = graph.jvp_nodes(outs, x, dir_x);
    const auto gy = graph.jvp_nodes(outs, x, dir_y);
    return {gx[0], gy[0]};
}

// --- fused kernel ------------------------------------------------------------

MlpKernel::MlpKernel(const NetworkConfig& config) : config_(config), layout_(config) {
    check_config(config);
}

MlpWorkspace MlpKernel::make_workspace() const {
    MlpWorkspace ws;
    const std::size_t n = layout_.n;
    const std::size_t layers = layout_.layers;
    const std::size_t blocks = config_.blocks;
    ws.block_in.assign((blocks + 1) * n, 0.0);
    ws.h.assign(layers * n, 0.0);
    ws.d.assign(layers * n, 0.0);
    ws.s.assign(layers * n, 0.0);
    ws.st.assign(2 * layers * n, 0.0);
    ws.qt.assign(2 * layers * n, 0.0);
    ws.bt.assign(2 * (blocks + 1) * n, 0.0);
    ws.acc.assign(n, 0.0);
    ws.acc2.assign(n, 0.0);
    ws.acc3.assign(n, 0.0);
    return ws;
}

void MlpKernel::forward(const double* p, Vec2 x, MlpWorkspace& ws, bool with_tangents) const {
    const int n = layout_.n;
    ws.has_tangents = with_tangents;

    double* q = ws.block_in.data();
    q[0] = x.x;
    q[1] = x.y;
    for (int i = 2; i < n; ++i) q[i] = 0.0;
    if (with_tangents) {
        for (int dim = 0; dim < 2; ++dim) {
            double* qt = ws.bt.data() + std::size_t(dim) * (config_.blocks + 1) * n;
            for (int i = 0; i < n; ++i) qt[i] = 0.0;
            qt[dim] = 1.0;
        }
    }

    for (int b = 0; b < config_.blocks; ++b) {
        const double* block_in = ws.block_in.data() + std::size_t(b) * n;
        for (int half = 0; half < 2; ++half) {
            const int l = 2 * b + half;
            const double* w = p + layout_.weights(l);
            const double* bias = p + layout_.bias(l);
            const double a = layout_.adaptive ? p[layout_.slope(l)] : 1.0;
            const double* in = half == 0 ? block_in : ws.h.data() + std::size_t(l - 1) * n;
            double* s = ws.s.data() + std::size_t(l) * n;
            double* h = ws.h.data() + std::size_t(l) * n;
            double* d = ws.d.data() + std::size_t(l) * n;
            for (int i = 0; i < n; ++i) {
                const double* wi = w + std::size_t(i) * n;
                double acc = bias[i];
                for (int j = 0; j < n; ++j) acc += wi[j] * in[j];
                s[i] = acc;
                const double t = std::tanh(a * acc);
                h[i] = t;
                d[i] = 1.0 - t * t;
            }
            if (with_tangents) {
                for (int dim = 0; dim < 2; ++dim) {
                    const double* qin =
                        half == 0 ? ws.bt.data() + (std::size_t(dim) * (config_.blocks + 1) + b) * n
                                  : ws.qt.data() + (std::size_t(dim) * layout_.layers + l - 1) * n;
                    double* st = ws.st.data() + (std::size_t(dim) * layout_.layers + l) * n;
                    double* qt = ws.qt.data() + (std::size_t(dim) * layout_.layers + l) * n;
                    for (int i = 0; i < n; ++i) {
                        const double* wi = w + std::size_t(i) * n;
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += wi[j] * qin[j];
                        st[i] = acc;
                        qt[i] = a * d[i] * acc;
                    }
                }
            }
        }
        // skip connection
        const double* h2 = ws.h.data() + std::size_t(2 * b + 1) * n;
        double* out = ws.block_in.data() + std::size_t(b + 1) * n;
        for (int i = 0; i < n; ++i) out[i] = h2[i] + block_in[i];
        if (with_tangents) {
            for (int dim = 0; dim < 2; ++dim) {
                const double* ht = ws.qt.data() + (std::size_t(dim) * layout_.layers + 2 * b + 1) * n;
                const double* bin = ws.bt.data() + (std::size_t(dim) * (config_.blocks + 1) + b) * n;
                double* bout = ws.bt.data() + (std::size_t(dim) * (config_.blocks + 1) + b + 1) * n;
                for (int i = 0; i < n; ++i) bout[i] = ht[i] + bin[i];
            }
        }
    }

    const double* w = p + layout_.out_weights();
    const double* zout = ws.block_in.data() + std::size_t(config_.blocks) * n;
    double u = p[layout_.out_bias()];
    for (int i = 0; i < n; ++i) u += w[i] * zout[i];
    ws.u = u;
    if (with_tangents) {
        for (int dim = 0; dim < 2; ++dim) {
            const double* zt = ws.bt.data() + (std::size_t(dim) * (config_.blocks + 1) + config_.blocks) * n;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += w[i] * zt[i];
            (dim == 0 ? ws.ux : ws.uy) = acc;
        }
    } else {
        ws.ux = ws.uy = 0.0;
    }
}

void MlpKernel::backward(const double* p, const MlpWorkspace& ws, double gu, double gx, double gy,
                         double* grad) const {
    const int n = layout_.n;
    const bool tang = (gx != 0.0 || gy != 0.0);
    if (tang && !ws.has_tangents)
        throw std::invalid_argument("network: backward with spatial seeds needs a tangent forward");
    const double gdim[2] = {gx, gy};

    // output layer
    const double* w = p + layout_.out_weights();
    const double* zout = ws.block_in.data() + std::size_t(config_.blocks) * n;
    double* gw = grad + layout_.out_weights();
    for (int i = 0; i < n; ++i) gw[i] += gu * zout[i];
    grad[layout_.out_bias()] += gu;

    // block-input adjoints (primal and per-dim tangent)
    std::vector<double> pbar(n), tbar0(n, 0.0), tbar1(n, 0.0);
    for (int i = 0; i < n; ++i) pbar[i] = gu * w[i];
    if (tang) {
        for (int dim = 0; dim < 2; ++dim) {
            const double* zt = ws.bt.data() + (std::size_t(dim) * (config_.blocks + 1) + config_.blocks) * n;
            double* tb = dim == 0 ? tbar0.data() : tbar1.data();
            for (int i = 0; i < n; ++i) {
                gw[i] += gdim[dim] * zt[i];
                tb[i] = gdim[dim] * w[i];
            }
        }
    }

    std::vector<double> hbar(n), qbar(n), sbar(n);
    std::vector<double> tq0(n), tq1(n);  // tangent adjoints flowing to the layer input

    for (int b = config_.blocks - 1; b >= 0; --b) {
        // through the skip: block output = h(2b+1) + block input
        std::vector<double> hb = pbar;        // adjoint of h(2b+1)
        std::vector<double> htb0 = tbar0, htb1 = tbar1;

        for (int half = 1; half >= 0; --half) {
            const int l = 2 * b + half;
            const double* wl = p + layout_.weights(l);
            const double a = layout_.adaptive ? p[layout_.slope(l)] : 1.0;
            const double* in = half == 0 ? ws.block_in.data() + std::size_t(b) * n
                                         : ws.h.data() + std::size_t(l - 1) * n;
            const double* h = ws.h.data() + std::size_t(l) * n;
            const double* d = ws.d.data() + std::size_t(l) * n;
            const double* s = ws.s.data() + std::size_t(l) * n;
            double* gwl = grad + layout_.weights(l);
            double* gbl = grad + layout_.bias(l);

            std::fill(qbar.begin(), qbar.end(), 0.0);
            if (tang) {
                std::fill(tq0.begin(), tq0.end(), 0.0);
                std::fill(tq1.begin(), tq1.end(), 0.0);
                for (int dim = 0; dim < 2; ++dim) {
                    const double* ht = dim == 0 ? htb0.data() : htb1.data();
                    const double* st = ws.st.data() + (std::size_t(dim) * layout_.layers + l) * n;
                    const double* qt =
                        half == 0 ? ws.bt.data() + (std::size_t(dim) * (config_.blocks + 1) + b) * n
                                  : ws.qt.data() + (std::size_t(dim) * layout_.layers + l - 1) * n;
                    double* tq = dim == 0 ? tq0.data() : tq1.data();
                    double slope_acc = 0.0;
                    for (int i = 0; i < n; ++i) {
                        const double g = ht[i];
                        const double stbar = a * d[i] * g;                 // adjoint of st
                        hb[i] += -2.0 * a * h[i] * st[i] * g;              // tangent -> primal h
                        slope_acc += d[i] * st[i] * g;
                        const double* wi = wl + std::size_t(i) * n;
                        for (int j = 0; j < n; ++j) {
                            gwl[std::size_t(i) * n + j] += stbar * qt[j];
                            tq[j] += wi[j] * stbar;
                        }
                    }
                    if (layout_.adaptive) grad[layout_.slope(l)] += slope_acc;
                }
            }

            double slope_acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double sb = a * d[i] * hb[i];
                sbar[i] = sb;
                slope_acc += s[i] * d[i] * hb[i];
                gbl[i] += sb;
                const double* wi = wl + std::size_t(i) * n;
                for (int j = 0; j < n; ++j) {
                    gwl[std::size_t(i) * n + j] += sb * in[j];
                    qbar[j] += wi[j] * sb;
                }
            }
            if (layout_.adaptive) grad[layout_.slope(l)] += slope_acc;

            if (half == 1) {
                hb = qbar;
                if (tang) {
                    htb0 = tq0;
                    htb1 = tq1;
                }
            } else {
                // add the skip path: adjoint of the block input
                for (int i = 0; i < n; ++i) pbar[i] += qbar[i];
                if (tang)
                    for (int i = 0; i < n; ++i) {
                        tbar0[i] += tq0[i];
                        tbar1[i] += tq1[i];
                    }
            }
        }
    }
}

}  // namespace vns::net
