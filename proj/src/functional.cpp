#include "vns/functional.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace vns::fn {

namespace {

constexpr std::size_t kChunk = 256;

}  // namespace

std::size_t EnergySpec::total_parameters() const {
    std::size_t total = 0;
    for (const auto& c : networks) total += net::count_parameters(c);
    return total;
}

std::vector<std::size_t> EnergySpec::network_offsets() const {
    std::vector<std::size_t> off(networks.size() + 1, 0);
    for (std::size_t i = 0; i < networks.size(); ++i)
        off[i + 1] = off[i] + net::count_parameters(networks[i]);
    return off;
}

// --- tape route --------------------------------------------------------------

namespace {

struct GraphNet {
    std::vector<ad::NodeId> params;
};

struct GraphEval {
    ad::NodeId u, ux, uy;
};

GraphEval eval_network(ad::ExprGraph& g, const net::NetworkConfig& cfg, const GraphNet& pn,
                       Vec2 x, bool with_grad) {
    const std::array<ad::NodeId, 2> xv = {g.var(x.x), g.var(x.y)};
    const ad::NodeId u = net::forward(g, cfg, pn.params, xv);
    if (!with_grad) return {u, ad::NodeId{}, ad::NodeId{}};
    const auto grad = net::spatial_gradient(g, u, xv);
    return {u, grad[0], grad[1]};
}

ad::NodeId add_to(ad::ExprGraph& g, ad::NodeId acc, ad::NodeId contrib) {
    return acc.valid() ? g.add(acc, contrib) : contrib;
}

}  // namespace

AssembledLoss assemble_loss(const EnergySpec& spec, const samp::SamplePlan& plan,
                            ad::ExprGraph& graph, const std::vector<double>& theta) {
    const auto offsets = spec.network_offsets();
    if (theta.size() != offsets.back())
        throw std::invalid_argument("assemble_loss: theta size does not match the spec networks");

    AssembledLoss out;
    std::vector<GraphNet> nets(spec.networks.size());
    for (std::size_t n = 0; n < spec.networks.size(); ++n) {
        const std::size_t count = net::count_parameters(spec.networks[n]);
        nets[n].params.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            nets[n].params.push_back(graph.var(theta[offsets[n] + i]));
        out.network_params.push_back(nets[n].params);
    }

    auto net_of_patch = [&](int patch) -> int {
        const int n = spec.network_of_patch(patch);
        if (n < 0 || n >= static_cast<int>(nets.size()))
            throw ConfigError("assemble_loss: missing network for a referenced subdomain");
        return n;
    };

    ad::NodeId total{};
    for (const EnergyTerm& term : spec.terms) {
        ad::NodeId term_node{};
        for (std::size_t pos = 0; pos < term.sets.size(); ++pos) {
            const int s = term.sets[pos];
            const double beta = term.beta_for(pos);
            switch (term.kind) {
                case TermKind::Interior: {
                    const samp::InteriorSet& set = plan.interior.at(s);
                    const int n = net_of_patch(set.patch);
                    const double inv_m = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        const GraphEval e =
                            eval_network(graph, spec.networks[n], nets[n], set.phys[m], true);
                        ad::NodeId integrand = graph.scale(
                            graph.add(graph.square(e.ux), graph.square(e.uy)), term.coefficient);
                        if (term.magnetization != 0.0)
                            integrand =
                                graph.add(integrand, graph.scale(e.ux, term.magnetization));
                        if (term.load) {
                            const double f = term.load(set.phys[m], Vec2{0, 0});
                            if (f != 0.0)
                                integrand = graph.sub(integrand, graph.scale(e.u, f));
                        }
                        term_node = add_to(graph, term_node,
                                           graph.scale(integrand, set.weight[m] * inv_m));
                    }
                    break;
                }
                case TermKind::Neumann: {
                    const samp::EdgeSet& set = plan.edges.at(s);
                    const int n = net_of_patch(set.patch);
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        const double gn = term.load ? term.load(set.phys[m], set.normal[m]) : 0.0;
                        const GraphEval e =
                            eval_network(graph, spec.networks[n], nets[n], set.phys[m], false);
                        term_node = add_to(graph, term_node,
                                           graph.scale(e.u, -set.speed[m] * gn * inv_j));
                    }
                    break;
                }
                case TermKind::DirichletPenalty: {
                    const samp::EdgeSet& set = plan.edges.at(s);
                    const int n = net_of_patch(set.patch);
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        const double gd = term.load ? term.load(set.phys[m], set.normal[m]) : 0.0;
                        const GraphEval e =
                            eval_network(graph, spec.networks[n], nets[n], set.phys[m], false);
                        const ad::NodeId r = graph.sub(e.u, graph.constant(gd));
                        term_node = add_to(graph, term_node,
                                           graph.scale(graph.square(r),
                                                       beta * set.speed[m] * inv_j));
                    }
                    break;
                }
                case TermKind::DgDirichlet: {
                    const samp::EdgeSet& set = plan.edges.at(s);
                    const int n = net_of_patch(set.patch);
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        const double gd = term.load ? term.load(set.phys[m], set.normal[m]) : 0.0;
                        const GraphEval e =
                            eval_network(graph, spec.networks[n], nets[n], set.phys[m], true);
                        const ad::NodeId r = graph.sub(e.u, graph.constant(gd));
                        ad::NodeId contrib{};
                        if (term.piece != TermPiece::Penalty) {
                            const ad::NodeId gn = graph.add(graph.scale(e.ux, set.normal[m].x),
                                                            graph.scale(e.uy, set.normal[m].y));
                            contrib = graph.scale(graph.mul(gn, r), -1.0);
                        }
                        if (term.piece != TermPiece::Consistency) {
                            const ad::NodeId pen = graph.scale(graph.square(r), 0.5 * beta);
                            contrib = contrib.valid() ? graph.add(contrib, pen) : pen;
                        }
                        term_node = add_to(graph, term_node,
                                           graph.scale(contrib, set.speed[m] * inv_j));
                    }
                    break;
                }
                case TermKind::DgInterface:
                case TermKind::CouplingPenalty: {
                    const samp::InterfaceSet& set = plan.interfaces.at(s);
                    const int nk = net_of_patch(set.iface.patch_k);
                    const int nl = net_of_patch(set.iface.patch_l);
                    const bool grad = term.kind == TermKind::DgInterface;
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        const GraphEval ek = eval_network(graph, spec.networks[nk], nets[nk],
                                                          set.phys_k[m], grad);
                        const GraphEval el = eval_network(graph, spec.networks[nl], nets[nl],
                                                          set.phys_l[m], grad);
                        const ad::NodeId jump = graph.sub(ek.u, el.u);
                        ad::NodeId contrib{};
                        if (term.kind == TermKind::CouplingPenalty) {
                            contrib = graph.scale(graph.square(jump), beta);
                        } else {
                            if (term.piece != TermPiece::Penalty) {
                                const ad::NodeId avg = graph.add(
                                    graph.scale(graph.add(ek.ux, el.ux), 0.5 * set.normal[m].x),
                                    graph.scale(graph.add(ek.uy, el.uy), 0.5 * set.normal[m].y));
                                contrib = graph.scale(graph.mul(avg, jump), -1.0);
                            }
                            if (term.piece != TermPiece::Consistency) {
                                const ad::NodeId pen =
                                    graph.scale(graph.square(jump), 0.5 * beta);
                                contrib = contrib.valid() ? graph.add(contrib, pen) : pen;
                            }
                        }
                        term_node = add_to(graph, term_node,
                                           graph.scale(contrib, set.speed[m] * inv_j));
                    }
                    break;
                }
                case TermKind::DgAntiperiodic:
                case TermKind::AntiperiodicPenalty: {
                    const samp::MirrorSet& set = plan.antiperiodic.at(s);
                    const int nl = net_of_patch(set.patch_left);
                    const int nr = net_of_patch(set.patch_right);
                    const bool grad = term.kind == TermKind::DgAntiperiodic;
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        const GraphEval eleft = eval_network(graph, spec.networks[nl], nets[nl],
                                                             set.phys_left[m], grad);
                        const GraphEval eright = eval_network(graph, spec.networks[nr], nets[nr],
                                                              set.phys_right[m], grad);
                        const ad::NodeId jump = graph.add(eleft.u, eright.u);
                        ad::NodeId contrib{};
                        if (term.kind == TermKind::AntiperiodicPenalty) {
                            contrib = graph.scale(graph.square(jump), beta);
                        } else {
                            if (term.piece != TermPiece::Penalty) {
                                const ad::NodeId avg = graph.add(
                                    graph.scale(graph.add(eleft.ux, eright.ux),
                                                0.5 * set.normal[m].x),
                                    graph.scale(graph.add(eleft.uy, eright.uy),
                                                0.5 * set.normal[m].y));
                                contrib = graph.scale(graph.mul(avg, jump), -1.0);
                            }
                            if (term.piece != TermPiece::Consistency) {
                                const ad::NodeId pen =
                                    graph.scale(graph.square(jump), 0.5 * beta);
                                contrib = contrib.valid() ? graph.add(contrib, pen) : pen;
                            }
                        }
                        term_node = add_to(graph, term_node,
                                           graph.scale(contrib, set.speed[m] * inv_j));
                    }
                    break;
                }
            }
        }
        if (!term_node.valid()) term_node = graph.constant(0.0);
        out.term_nodes.push_back(term_node);
        total = add_to(graph, total, term_node);
    }
    out.total = total.valid() ? total : graph.constant(0.0);
    return out;
}

// --- compiled route ----------------------------------------------------------

LossEvaluator::LossEvaluator(const EnergySpec& spec, const samp::SamplePlan& plan, int threads)
    : threads_(threads) {
    for (const auto& cfg : spec.networks) kernels_.emplace_back(cfg);
    offsets_ = spec.network_offsets();
    total_params_ = offsets_.back();
    num_terms_ = spec.terms.size();
    term_values_.assign(num_terms_, 0.0);

    for (std::size_t t = 0; t < spec.terms.size(); ++t) {
        const EnergyTerm& term = spec.terms[t];
        term_names_.push_back(term.name.empty() ? std::string("term_") + std::to_string(t)
                                                : term.name);
        for (std::size_t pos = 0; pos < term.sets.size(); ++pos) {
            const int s = term.sets[pos];
            SetTask task;
            task.kind = term.kind;
            task.piece = term.piece;
            task.term = static_cast<int>(t);
            task.coefficient = term.coefficient;
            task.magnetization = term.magnetization;
            const double beta = term.beta_for(pos);

            switch (term.kind) {
                case TermKind::Interior: {
                    const samp::InteriorSet& set = plan.interior.at(s);
                    task.net_a = spec.network_of_patch(set.patch);
                    const double inv_m = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        Sample smp;
                        smp.xa = set.phys[m];
                        smp.wfac = set.weight[m] * inv_m;
                        smp.load = term.load ? term.load(set.phys[m], Vec2{0, 0}) : 0.0;
                        task.samples.push_back(smp);
                    }
                    break;
                }
                case TermKind::Neumann:
                case TermKind::DirichletPenalty:
                case TermKind::DgDirichlet: {
                    const samp::EdgeSet& set = plan.edges.at(s);
                    task.net_a = spec.network_of_patch(set.patch);
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        Sample smp;
                        smp.xa = set.phys[m];
                        smp.normal = set.normal[m];
                        smp.wfac = set.speed[m] * inv_j;
                        smp.load = term.load ? term.load(set.phys[m], set.normal[m]) : 0.0;
                        smp.beta = beta;
                        task.samples.push_back(smp);
                    }
                    break;
                }
                case TermKind::DgInterface:
                case TermKind::CouplingPenalty: {
                    const samp::InterfaceSet& set = plan.interfaces.at(s);
                    task.net_a = spec.network_of_patch(set.iface.patch_k);
                    task.net_b = spec.network_of_patch(set.iface.patch_l);
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        Sample smp;
                        smp.xa = set.phys_k[m];
                        smp.xb = set.phys_l[m];
                        smp.normal = set.normal[m];
                        smp.wfac = set.speed[m] * inv_j;
                        smp.beta = beta;
                        task.samples.push_back(smp);
                    }
                    break;
                }
                case TermKind::DgAntiperiodic:
                case TermKind::AntiperiodicPenalty: {
                    const samp::MirrorSet& set = plan.antiperiodic.at(s);
                    task.net_a = spec.network_of_patch(set.patch_left);
                    task.net_b = spec.network_of_patch(set.patch_right);
                    const double inv_j = 1.0 / double(set.size());
                    for (std::size_t m = 0; m < set.size(); ++m) {
                        Sample smp;
                        smp.xa = set.phys_left[m];
                        smp.xb = set.phys_right[m];
                        smp.normal = set.normal[m];
                        smp.wfac = set.speed[m] * inv_j;
                        smp.beta = beta;
                        task.samples.push_back(smp);
                    }
                    break;
                }
            }
            tasks_.push_back(std::move(task));
        }
    }

    // fixed-size chunks with preassigned gradient arena slices
    std::size_t arena = 0;
    for (std::size_t ti = 0; ti < tasks_.size(); ++ti) {
        const SetTask& task = tasks_[ti];
        const std::size_t na = kernels_[task.net_a].param_count();
        const bool two = task.net_b >= 0 && task.net_b != task.net_a;
        const std::size_t nb = two ? kernels_[task.net_b].param_count() : 0;
        for (std::size_t begin = 0; begin < task.samples.size(); begin += kChunk) {
            Chunk c;
            c.task = static_cast<int>(ti);
            c.begin = begin;
            c.end = std::min(task.samples.size(), begin + kChunk);
            c.grad_a = arena;
            arena += na;
            c.grad_b = arena;
            if (two) arena += nb;
            chunks_.push_back(c);
        }
    }
    arena_.assign(arena, 0.0);
}

void LossEvaluator::run(const std::vector<double>& theta, bool with_grad) {
    if (theta.size() != total_params_)
        throw std::invalid_argument("LossEvaluator: theta has the wrong size");
    std::fill(term_values_.begin(), term_values_.end(), 0.0);
    if (with_grad) std::fill(arena_.begin(), arena_.end(), 0.0);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        // two slots per network: paired terms may evaluate both sides with
        // the same network and must not clobber the first side's caches
        std::vector<net::MlpWorkspace> ws_a(kernels_.size()), ws_b(kernels_.size());
        std::vector<bool> ready_a(kernels_.size(), false), ready_b(kernels_.size(), false);
        auto workspace_a = [&](int n) -> net::MlpWorkspace& {
            if (!ready_a[n]) {
                ws_a[n] = kernels_[n].make_workspace();
                ready_a[n] = true;
            }
            return ws_a[n];
        };
        auto workspace_b = [&](int n) -> net::MlpWorkspace& {
            if (!ready_b[n]) {
                ws_b[n] = kernels_[n].make_workspace();
                ready_b[n] = true;
            }
            return ws_b[n];
        };

        for (;;) {
            const std::size_t ci = next.fetch_add(1);
            if (ci >= chunks_.size()) break;
            Chunk& chunk = chunks_[ci];
            const SetTask& task = tasks_[chunk.task];
            const net::MlpKernel& ka = kernels_[task.net_a];
            const double* pa = theta.data() + offsets_[task.net_a];
            double* ga = arena_.data() + chunk.grad_a;
            const bool two = task.net_b >= 0 && task.net_b != task.net_a;
            const net::MlpKernel* kb = task.net_b >= 0 ? &kernels_[task.net_b] : nullptr;
            const double* pb = task.net_b >= 0 ? theta.data() + offsets_[task.net_b] : nullptr;
            double* gb = two ? arena_.data() + chunk.grad_b : ga;

            double value = 0.0;
            net::MlpWorkspace& wa = workspace_a(task.net_a);
            for (std::size_t m = chunk.begin; m < chunk.end; ++m) {
                const Sample& smp = task.samples[m];
                switch (task.kind) {
                    case TermKind::Interior: {
                        ka.forward(pa, smp.xa, wa, true);
                        value += smp.wfac *
                                 (task.coefficient * (wa.ux * wa.ux + wa.uy * wa.uy) +
                                  task.magnetization * wa.ux - smp.load * wa.u);
                        if (with_grad)
                            ka.backward(pa, wa, -smp.wfac * smp.load,
                                        smp.wfac * (2.0 * task.coefficient * wa.ux +
                                                    task.magnetization),
                                        smp.wfac * 2.0 * task.coefficient * wa.uy, ga);
                        break;
                    }
                    case TermKind::Neumann: {
                        ka.forward(pa, smp.xa, wa, false);
                        value += -smp.wfac * smp.load * wa.u;
                        if (with_grad) ka.backward(pa, wa, -smp.wfac * smp.load, 0, 0, ga);
                        break;
                    }
                    case TermKind::DirichletPenalty: {
                        ka.forward(pa, smp.xa, wa, false);
                        const double r = wa.u - smp.load;
                        value += smp.wfac * smp.beta * r * r;
                        if (with_grad)
                            ka.backward(pa, wa, 2.0 * smp.wfac * smp.beta * r, 0, 0, ga);
                        break;
                    }
                    case TermKind::DgDirichlet: {
                        ka.forward(pa, smp.xa, wa, true);
                        const double r = wa.u - smp.load;
                        const double gn = wa.ux * smp.normal.x + wa.uy * smp.normal.y;
                        double g = 0, gu = 0, gx = 0, gy = 0;
                        if (task.piece != TermPiece::Penalty) {
                            g += -gn * r;
                            gu += -gn;
                            gx += -smp.normal.x * r;
                            gy += -smp.normal.y * r;
                        }
                        if (task.piece != TermPiece::Consistency) {
                            g += 0.5 * smp.beta * r * r;
                            gu += smp.beta * r;
                        }
                        value += smp.wfac * g;
                        if (with_grad)
                            ka.backward(pa, wa, smp.wfac * gu, smp.wfac * gx, smp.wfac * gy, ga);
                        break;
                    }
                    case TermKind::DgInterface:
                    case TermKind::DgAntiperiodic: {
                        net::MlpWorkspace& wb = workspace_b(task.net_b);
                        ka.forward(pa, smp.xa, wa, true);
                        kb->forward(pb, smp.xb, wb, true);
                        const double sgn = task.kind == TermKind::DgInterface ? -1.0 : 1.0;
                        const double jump = wa.u + sgn * wb.u;
                        const double avg = 0.5 * ((wa.ux + wb.ux) * smp.normal.x +
                                                  (wa.uy + wb.uy) * smp.normal.y);
                        double g = 0, gua = 0, gub = 0;
                        double gxa = 0, gya = 0, gavg = 0;
                        if (task.piece != TermPiece::Penalty) {
                            g += -avg * jump;
                            gua += -avg;
                            gub += -sgn * avg;
                            gavg = -jump;  // seeds 0.5*n*gavg on both gradients
                        }
                        if (task.piece != TermPiece::Consistency) {
                            g += 0.5 * smp.beta * jump * jump;
                            gua += smp.beta * jump;
                            gub += sgn * smp.beta * jump;
                        }
                        gxa = 0.5 * smp.normal.x * gavg;
                        gya = 0.5 * smp.normal.y * gavg;
                        value += smp.wfac * g;
                        if (with_grad) {
                            ka.backward(pa, wa, smp.wfac * gua, smp.wfac * gxa, smp.wfac * gya,
                                        ga);
                            kb->backward(pb, wb, smp.wfac * gub, smp.wfac * gxa, smp.wfac * gya,
                                         gb);
                        }
                        break;
                    }
                    case TermKind::CouplingPenalty:
                    case TermKind::AntiperiodicPenalty: {
                        net::MlpWorkspace& wb = workspace_b(task.net_b);
                        ka.forward(pa, smp.xa, wa, false);
                        kb->forward(pb, smp.xb, wb, false);
                        const double sgn = task.kind == TermKind::CouplingPenalty ? -1.0 : 1.0;
                        const double jump = wa.u + sgn * wb.u;
                        value += smp.wfac * smp.beta * jump * jump;
                        if (with_grad) {
                            ka.backward(pa, wa, 2.0 * smp.wfac * smp.beta * jump, 0, 0, ga);
                            kb->backward(pb, wb, sgn * 2.0 * smp.wfac * smp.beta * jump, 0, 0,
                                         gb);
                        }
                        break;
                    }
                }
            }
            chunk.value = value;
        }
    };

    int nthreads = threads_ > 0 ? threads_ : static_cast<int>(std::thread::hardware_concurrency());
    if (nthreads < 1) nthreads = 1;
    nthreads = std::min<std::size_t>(nthreads, chunks_.size() ? chunks_.size() : 1);
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nthreads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // deterministic ordered reduction over chunks
    for (const Chunk& chunk : chunks_) term_values_[tasks_[chunk.task].term] += chunk.value;
}

LossEvaluator::Result LossEvaluator::value(const std::vector<double>& theta) {
    run(theta, false);
    Result r;
    r.terms = term_values_;
    for (double v : r.terms) r.total += v;
    return r;
}

LossEvaluator::Result LossEvaluator::value_and_grad(const std::vector<double>& theta,
                                                    std::vector<double>& grad) {
    run(theta, true);
    grad.assign(total_params_, 0.0);
    for (const Chunk& chunk : chunks_) {
        const SetTask& task = tasks_[chunk.task];
        const std::size_t na = kernels_[task.net_a].param_count();
        double* dst_a = grad.data() + offsets_[task.net_a];
        const double* src_a = arena_.data() + chunk.grad_a;
        for (std::size_t i = 0; i < na; ++i) dst_a[i] += src_a[i];
        if (task.net_b >= 0 && task.net_b != task.net_a) {
            const std::size_t nb = kernels_[task.net_b].param_count();
            double* dst_b = grad.data() + offsets_[task.net_b];
            const double* src_b = arena_.data() + chunk.grad_b;
            for (std::size_t i = 0; i < nb; ++i) dst_b[i] += src_b[i];
        }
    }
    Result r;
    r.terms = term_values_;
    for (double v : r.terms) r.total += v;
    return r;
}

// --- solution evaluation -----------------------------------------------------

SolutionEvaluator::SolutionEvaluator(const EnergySpec& spec, std::vector<double> theta)
    : spec_(&spec), theta_(std::move(theta)), offsets_(spec.network_offsets()) {
    if (theta_.size() != offsets_.back())
        throw std::invalid_argument("SolutionEvaluator: theta has the wrong size");
    for (const auto& cfg : spec.networks) {
        kernels_.emplace_back(cfg);
        ws_.push_back(kernels_.back().make_workspace());
    }
}

double SolutionEvaluator::value(int patch, Vec2 x) const {
    const int n = spec_->network_of_patch(patch);
    kernels_[n].forward(theta_.data() + offsets_[n], x, ws_[n], false);
    return ws_[n].u;
}

double SolutionEvaluator::value_and_gradient(int patch, Vec2 x, Vec2& grad) const {
    const int n = spec_->network_of_patch(patch);
    kernels_[n].forward(theta_.data() + offsets_[n], x, ws_[n], true);
    grad = {ws_[n].ux, ws_[n].uy};
    return ws_[n].u;
}

}  // namespace vns::fn
