#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vns/autodiff.hpp"
#include "vns/common.hpp"
#include "vns/network.hpp"
#include "vns/sampling.hpp"

namespace vns::fn {

enum class TermKind {
    Interior,            // mean of w * (coef |grad u|^2 + mag du/dx - f u)
    Neumann,             // -mean of speed * u * g_N
    DirichletPenalty,    // beta * mean of speed * (u - g_D)^2
    DgInterface,         // -{grad u}.n [u] + (beta/2) [u]^2,  [u] = u_k - u_l
    DgDirichlet,         // -(grad u.n)(u - g_D) + (beta/2)(u - g_D)^2
    DgAntiperiodic,      // as DgInterface with [u] = u(x_L) + u(x_R)
    CouplingPenalty,     // beta * mean of speed * (u_k - u_l)^2
    AntiperiodicPenalty, // beta * mean of speed * (u(x_L) + u(x_R))^2
};

// The DG kinds bundle a consistency integral and a penalty integral; the
// presets keep them as separate terms for per-term logging.
enum class TermPiece { Full, Consistency, Penalty };

// Boundary/source data; the normal argument is meaningful for Neumann data
// and ignored elsewhere.
using BoundaryFn = std::function<double(Vec2 x, Vec2 n)>;

struct EnergyTerm {
    TermKind kind = TermKind::Interior;
    TermPiece piece = TermPiece::Full;
    std::string name;
    std::vector<int> sets;       // indices into the matching plan list
    std::vector<double> betas;   // per set; empty = use `beta` for all
    double beta = 0.0;
    double coefficient = 1.0;    // interior |grad u|^2 factor (eps/2 or nu/2)
    double magnetization = 0.0;  // interior + mag * du/dx source
    BoundaryFn load;             // f, g_N or g_D; null = 0

    double beta_for(std::size_t pos) const {
        return betas.empty() ? beta : betas.at(pos);
    }
};

struct EnergySpec {
    std::vector<net::NetworkConfig> networks;
    std::vector<std::string> network_labels;
    std::vector<int> patch_subdomain;
    std::vector<int> subdomain_network;
    std::vector<std::string> subdomain_names;
    std::vector<EnergyTerm> terms;

    int network_of_patch(int patch) const {
        return subdomain_network.at(patch_subdomain.at(patch));
    }
    std::size_t total_parameters() const;
    // offset of each network's slice in the concatenated parameter vector
    std::vector<std::size_t> network_offsets() const;
};

// --- tape route --------------------------------------------------------------

struct AssembledLoss {
    ad::NodeId total;
    std::vector<ad::NodeId> term_nodes;
    std::vector<std::vector<ad::NodeId>> network_params;  // variable nodes per network
};

// Emits the whole discretized functional on one tape. Parameter variables
// are bound to `theta` (concatenated per-network, layout as in
// EnergySpec::network_offsets).
AssembledLoss assemble_loss(const EnergySpec& spec, const samp::SamplePlan& plan,
                            ad::ExprGraph& graph, const std::vector<double>& theta);

// --- compiled route ----------------------------------------------------------

// Evaluates the identical functional with the fused network kernel,
// data-parallel over fixed-size sample chunks with an ordered reduction
// (bit-identical results for any thread count). This is the trainer's path.
class LossEvaluator {
public:
    LossEvaluator(const EnergySpec& spec, const samp::SamplePlan& plan, int threads = 0);

    struct Result {
        double total = 0.0;
        std::vector<double> terms;
    };

    Result value(const std::vector<double>& theta);
    // grad is resized and overwritten
    Result value_and_grad(const std::vector<double>& theta, std::vector<double>& grad);

    std::size_t total_parameters() const { return total_params_; }
    const std::vector<std::size_t>& offsets() const { return offsets_; }
    const std::vector<std::string>& term_names() const { return term_names_; }

private:
    struct Sample {
        Vec2 xa, xb;      // xb used by paired kinds
        Vec2 normal;
        double wfac = 0;  // weight/M or speed/J
        double load = 0;  // f, g_N or g_D at the sample
        double beta = 0;
    };
    struct SetTask {
        TermKind kind;
        TermPiece piece;
        int term = -1;
        int net_a = -1, net_b = -1;
        double coefficient = 1.0, magnetization = 0.0;
        std::vector<Sample> samples;
    };
    struct Chunk {
        int task = -1;
        std::size_t begin = 0, end = 0;
        std::size_t grad_a = 0, grad_b = 0;  // offsets into the chunk arena
        double value = 0.0;
    };

    void run(const std::vector<double>& theta, bool with_grad);

    std::vector<net::MlpKernel> kernels_;
    std::vector<std::size_t> offsets_;
    std::size_t total_params_ = 0;
    std::vector<SetTask> tasks_;
    std::vector<Chunk> chunks_;
    std::vector<double> arena_;  // per-chunk gradient slices
    std::vector<std::string> term_names_;
    std::size_t num_terms_ = 0;
    std::vector<double> term_values_;
    int threads_ = 0;
};

// Helper for evaluation/metrics: point evaluation of the trained solution
// on a given patch (resolves the owning network).
class SolutionEvaluator {
public:
    SolutionEvaluator(const EnergySpec& spec, std::vector<double> theta);
    double value(int patch, Vec2 x) const;
    // returns u and fills grad
    double value_and_gradient(int patch, Vec2 x, Vec2& grad) const;

private:
    const EnergySpec* spec_;
    std::vector<double> theta_;
    std::vector<std::size_t> offsets_;
    std::vector<net::MlpKernel> kernels_;
    mutable std::vector<net::MlpWorkspace> ws_;
};

}  // namespace vns::fn
