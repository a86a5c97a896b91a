#include "vns/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace vns::prob {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) {
        const double lo = *std::max_element(v.begin(), v.begin() + mid);
        m = 0.5 * (m + lo);
    }
    return m;
}

double edge_length(const geom::Patch& patch, geom::Edge edge) {
    const geom::NurbsCurve c = geom::edge_curve(patch, edge);
    std::vector<double> x, w;
    geom::gauss_legendre(16, x, w);
    double len = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) len += w[i] * geom::curve_speed(c, x[i]);
    return len;
}

double interface_length(const geom::MultiPatchDomain& domain, const geom::Interface& f) {
    return edge_length(domain.patches[f.patch_k], f.edge_k);
}

}  // namespace

Preset preset_from_string(const std::string& s) {
    if (s == "single") return Preset::Single;
    if (s == "dg") return Preset::Dg;
    if (s == "coupling") return Preset::Coupling;
    throw ConfigError("unknown preset: " + s + " (expected single|dg|coupling)");
}

std::string to_string(Preset p) {
    switch (p) {
        case Preset::Single: return "single";
        case Preset::Dg: return "dg";
        case Preset::Coupling: return "coupling";
    }
    return "?";
}

int BuiltProblem::subdomain_index(const std::string& name) const {
    for (std::size_t i = 0; i < subdomain_names.size(); ++i)
        if (subdomain_names[i] == name) return static_cast<int>(i);
    return -1;
}

int BuiltProblem::representative_patch(int subdomain) const {
    for (std::size_t p = 0; p < patch_subdomain.size(); ++p)
        if (patch_subdomain[p] == subdomain) return static_cast<int>(p);
    return -1;
}

// --- dielectric cylinder -------------------------------------------------------

namespace {

constexpr double kCylRadius = 0.5;
constexpr double kEpsCyl = 100.0;
constexpr double kEpsOut = 1.0;
constexpr double kFieldInf = 10.0;

}  // namespace

std::pair<double, Vec2> cylinder_analytic(Vec2 x) {
    const double eps_ratio = kEpsCyl / kEpsOut;
    const double r2 = x.norm2();
    if (r2 <= kCylRadius * kCylRadius) {
        const double c = 2.0 / (eps_ratio + 1.0);
        return {-kFieldInf * x.x * c, {-kFieldInf * c, 0.0}};
    }
    const double c = (eps_ratio - 1.0) / (eps_ratio + 1.0);
    const double k = c * kCylRadius * kCylRadius;
    const double u = -kFieldInf * x.x * (1.0 - k / r2);
    const double r4 = r2 * r2;
    const double ux = -kFieldInf * (1.0 - k * (x.y * x.y - x.x * x.x) / r4);
    const double uy = -kFieldInf * k * (-2.0 * x.x * x.y) / r4;
    return {u, {ux, uy}};
}

namespace {

// 9-patch layout: 5-patch disk (central square of half-side r0/2 plus four
// ruled quads out to the circle) and four exterior quads between the circle
// and the outer square.
std::vector<geom::Patch> cylinder_patches() {
    const double c = 0.5 * kCylRadius;
    std::vector<geom::Patch> patches;

    geom::Patch center = geom::make_bilinear_patch({-c, -c}, {c, -c}, {-c, c}, {c, c});
    center.material = "cylinder";
    patches.push_back(center);

    struct Side {
        double a0, a1;
        Vec2 s0, s1;       // central square edge endpoints
        Vec2 o0, o1;       // outer square edge endpoints
        geom::EdgeTag outer_tag;
    };
    const std::vector<Side> sides = {
        {-kPi / 4, kPi / 4, {c, -c}, {c, c}, {1, -1}, {1, 1}, geom::EdgeTag::Dirichlet},
        {kPi / 4, 3 * kPi / 4, {c, c}, {-c, c}, {1, 1}, {-1, 1}, geom::EdgeTag::Neumann},
        {3 * kPi / 4, 5 * kPi / 4, {-c, c}, {-c, -c}, {-1, 1}, {-1, -1}, geom::EdgeTag::Dirichlet},
        {5 * kPi / 4, 7 * kPi / 4, {-c, -c}, {c, -c}, {-1, -1}, {1, -1}, geom::EdgeTag::Neumann},
    };

    for (const Side& side : sides) {
        geom::Patch disk = geom::make_ruled_patch(geom::make_segment(side.s0, side.s1),
                                                  geom::make_arc({0, 0}, kCylRadius, side.a0, side.a1));
        disk.material = "cylinder";
        disk.edge_tags[int(geom::Edge::North)] = geom::EdgeTag::Interface;
        patches.push_back(disk);

        geom::Patch ext = geom::make_ruled_patch(geom::make_arc({0, 0}, kCylRadius, side.a0, side.a1),
                                                 geom::make_segment(side.o0, side.o1));
        ext.material = "exterior";
        ext.edge_tags[int(geom::Edge::South)] = geom::EdgeTag::Interface;
        ext.edge_tags[int(geom::Edge::North)] = side.outer_tag;
        patches.push_back(ext);
    }
    return patches;
}

void tag_material_interfaces(geom::MultiPatchDomain& domain) {
    for (const geom::Interface& f : domain.interfaces) {
        if (domain.patches[f.patch_k].material != domain.patches[f.patch_l].material) {
            domain.patches[f.patch_k].edge_tags[int(f.edge_k)] = geom::EdgeTag::Interface;
            domain.patches[f.patch_l].edge_tags[int(f.edge_l)] = geom::EdgeTag::Interface;
        }
    }
}

void group_by_material(BuiltProblem& built, const std::vector<std::string>& order) {
    std::vector<std::string> names;
    for (const auto& p : built.domain.patches) {
        if (std::find(names.begin(), names.end(), p.material) == names.end())
            names.push_back(p.material);
    }
    if (!order.empty()) {
        std::vector<std::string> sorted;
        for (const auto& n : order)
            if (std::find(names.begin(), names.end(), n) != names.end()) sorted.push_back(n);
        for (const auto& n : names)
            if (std::find(sorted.begin(), sorted.end(), n) == sorted.end()) sorted.push_back(n);
        names = sorted;
    }
    built.subdomain_names = names;
    built.patch_subdomain.clear();
    for (const auto& p : built.domain.patches) {
        const auto it = std::find(names.begin(), names.end(), p.material);
        built.patch_subdomain.push_back(static_cast<int>(it - names.begin()));
    }
}

}  // namespace

BuiltProblem build_cylinder(Preset preset) {
    BuiltProblem built;
    built.problem = "cylinder";
    built.preset = preset;
    built.domain = geom::match_interfaces(cylinder_patches());
    tag_material_interfaces(built.domain);
    group_by_material(built, {"cylinder", "exterior"});

    built.subdomain_coefficient = {kEpsCyl / 2.0, kEpsOut / 2.0};
    if (preset == Preset::Single) {
        built.networks = {net::NetworkConfig{2, 6, 10, true, 1}};
        built.network_labels = {"single"};
        built.subdomain_network = {0, 0};
    } else {
        built.networks = {net::NetworkConfig{2, 4, 10, true, 1},
                          net::NetworkConfig{2, 4, 10, true, 1}};
        built.network_labels = {"cylinder", "exterior"};
        built.subdomain_network = {0, 1};
    }

    built.beta_dirichlet = 1e3;
    built.beta_interface = 1e3;
    built.dirichlet_data = [](Vec2 x, Vec2) { return cylinder_analytic(x).first; };
    built.neumann_data = [](Vec2 x, Vec2 n) { return cylinder_analytic(x).second.dot(n); };
    built.reference_u = [](Vec2 x) { return cylinder_analytic(x).first; };
    built.reference_grad = [](Vec2 x) { return cylinder_analytic(x).second; };
    built.point_subdomain = [](Vec2 x) {
        return x.norm2() <= kCylRadius * kCylRadius ? 0 : 1;
    };

    built.budgets = {4000, 1200, 1200, 600, 0};
    built.desk_budgets = {2000, 600, 600, 300, 0};
    built.schedule = {{30000, 1e-3}, {10000, 1e-4}};
    built.desk_schedule = {{4000, 1e-3}, {1000, 1e-4}};
    return built;
}

// --- machine sector ------------------------------------------------------------

namespace {

struct MachineLayout {
    std::vector<double> alpha;            // angular breakpoints (deg, sector-relative)
    std::vector<double> radius;           // radial breakpoints (m)
    std::vector<std::vector<std::string>> material;  // [ring][column]
};

MachineLayout machine_layout(const PmsmCase& m) {
    MachineLayout lay;

    const double r_pm_out = m.r_rotor_outer - m.magnet_depth;
    const double r_pm_in = r_pm_out - m.magnet_height;
    lay.radius = {m.r_rotor_inner, r_pm_in,          r_pm_out,       m.r_rotor_outer,
                  m.r_airgap,      m.r_stator_inner, m.r_stator_inner + m.slot_depth,
                  m.r_stator_outer};

    const double sector = m.sector_end_deg - m.sector_start_deg;
    const double magnet_span =
        m.magnet_width / (0.5 * (r_pm_in + r_pm_out)) * 180.0 / kPi;
    const double m_lo = 0.5 * sector - 0.5 * magnet_span;
    const double m_hi = 0.5 * sector + 0.5 * magnet_span;

    std::set<double> breaks = {0.0, sector, m_lo, m_hi};
    const double pitch = sector / m.slots;
    std::vector<std::pair<double, double>> slot_spans;
    for (int k = 0; k < m.slots; ++k) {
        const double mid = (k + 0.5) * pitch;
        slot_spans.emplace_back(mid - 0.5 * m.slot_angle_deg, mid + 0.5 * m.slot_angle_deg);
        breaks.insert(slot_spans.back().first);
        breaks.insert(slot_spans.back().second);
    }
    lay.alpha.assign(breaks.begin(), breaks.end());

    // slit columns: immediately left/right of the magnet span
    const auto col_of = [&](double a) {
        for (std::size_t c = 0; c + 1 < lay.alpha.size(); ++c)
            if (a >= lay.alpha[c] && a < lay.alpha[c + 1]) return static_cast<int>(c);
        return static_cast<int>(lay.alpha.size()) - 2;
    };
    const int magnet_first = col_of(m_lo);
    const int magnet_last = col_of(m_hi - 1e-9);
    const int slit_left = magnet_first - 1;
    const int slit_right = magnet_last + 1;

    const int cols = static_cast<int>(lay.alpha.size()) - 1;
    auto in_slot = [&](double mid) {
        for (const auto& [lo, hi] : slot_spans)
            if (mid > lo && mid < hi) return true;
        return false;
    };

    lay.material.assign(7, std::vector<std::string>(cols));
    for (int c = 0; c < cols; ++c) {
        const double mid = 0.5 * (lay.alpha[c] + lay.alpha[c + 1]);
        const bool in_magnet = c >= magnet_first && c <= magnet_last;
        const bool in_slit = c == slit_left || c == slit_right;
        lay.material[0][c] = "inner_rotor_yoke";
        lay.material[1][c] = in_magnet ? "magnet" : (in_slit ? "air" : "inner_rotor_yoke");
        lay.material[2][c] = in_slit ? "air" : "outer_rotor_yoke";
        lay.material[3][c] = "air";
        lay.material[4][c] = "air";
        lay.material[5][c] = in_slot(mid) ? "stator_windings" : "stator_yoke";
        lay.material[6][c] = "stator_yoke";
    }
    return lay;
}

net::NetworkConfig machine_network(const std::string& label) {
    // Larger networks on the spatially extended groups.
    const bool wide = label.find("air") != std::string::npos ||
                      label.find("stator") != std::string::npos ||
                      label.find("winding") != std::string::npos ||
                      label.find("copper") != std::string::npos;
    return net::NetworkConfig{2, wide ? 15 : 8, 15, true, 1};
}

double machine_coefficient(const PmsmCase& m, const std::string& label) {
    if (label.find("iron") != std::string::npos || label.find("yoke") != std::string::npos)
        return 0.5 * m.nu_iron;
    if (label.find("magnet") != std::string::npos) return 0.5 * m.nu_magnet;
    if (label.find("winding") != std::string::npos || label.find("copper") != std::string::npos)
        return 0.5 * m.nu_copper;
    if (label.find("air") != std::string::npos) return 0.5 * m.nu_air;
    throw ConfigError("cannot infer a reluctivity from material label: " + label);
}

void finish_machine_problem(BuiltProblem& built, const PmsmCase& m, Preset preset) {
    tag_material_interfaces(built.domain);
    group_by_material(built,
                      {"outer_rotor_yoke", "inner_rotor_yoke", "air", "magnet", "stator_yoke",
                       "stator_windings"});

    built.subdomain_coefficient.clear();
    for (const auto& name : built.subdomain_names)
        built.subdomain_coefficient.push_back(machine_coefficient(m, name));

    for (std::size_t i = 0; i < built.subdomain_names.size(); ++i)
        if (built.subdomain_names[i].find("magnet") != std::string::npos)
            built.magnet_subdomain = static_cast<int>(i);
    built.magnetization = m.nu0 * m.remanence;

    if (preset == Preset::Single) {
        built.networks = {net::NetworkConfig{2, 30, 24, false, 1}};
        built.network_labels = {"single"};
        built.subdomain_network.assign(built.subdomain_names.size(), 0);
    } else {
        for (const auto& name : built.subdomain_names) {
            built.networks.push_back(machine_network(name));
            built.network_labels.push_back(name);
        }
        built.subdomain_network.resize(built.subdomain_names.size());
        std::iota(built.subdomain_network.begin(), built.subdomain_network.end(), 0);
    }

    built.machine_betas = true;
    built.beta_rotor = m.beta_rotor;
    built.beta_stator = m.beta_stator;
    built.rotor_radius = m.r_airgap;
    built.beta_dirichlet = m.beta_stator;
    built.beta_interface = m.beta_stator;
    built.dirichlet_data = [](Vec2, Vec2) { return 0.0; };

    // Table-style interior allocation, exact at the published total.
    const std::map<std::string, double> shares = {
        {"outer_rotor_yoke", 2.0}, {"inner_rotor_yoke", 6.0}, {"air", 26.0},
        {"magnet", 2.0},           {"stator_yoke", 21.0},     {"stator_windings", 6.0}};
    built.interior_fractions.assign(built.subdomain_names.size(), 0.0);
    bool known = true;
    for (std::size_t i = 0; i < built.subdomain_names.size(); ++i) {
        const auto it = shares.find(built.subdomain_names[i]);
        if (it == shares.end()) {
            known = false;
            break;
        }
        built.interior_fractions[i] = it->second;
    }
    if (!known) built.interior_fractions.clear();

    built.budgets = {63000, 1100, 0, 13500, 2800};
    built.desk_budgets = {8000, 140, 0, 1714, 356};
    built.schedule = {{5000, 1e-3}};
    built.desk_schedule = {{2000, 1e-3}};
}

}  // namespace

BuiltProblem build_pmsm(const PmsmCase& m, Preset preset) {
    BuiltProblem built;
    built.problem = "pmsm";
    built.preset = preset;

    const MachineLayout lay = machine_layout(m);
    const double start = m.sector_start_deg;
    std::vector<geom::Patch> patches;
    const int cols = static_cast<int>(lay.alpha.size()) - 1;
    for (int ring = 0; ring < static_cast<int>(lay.radius.size()) - 1; ++ring) {
        for (int c = 0; c < cols; ++c) {
            geom::Patch p = geom::make_annulus_patch(lay.radius[ring], lay.radius[ring + 1],
                                                     deg2rad(start + lay.alpha[c]),
                                                     deg2rad(start + lay.alpha[c + 1]));
            p.material = lay.material[ring][c];
            if (ring == 0) p.edge_tags[int(geom::Edge::South)] = geom::EdgeTag::Dirichlet;
            if (ring == static_cast<int>(lay.radius.size()) - 2)
                p.edge_tags[int(geom::Edge::North)] = geom::EdgeTag::Dirichlet;
            if (c == 0) p.edge_tags[int(geom::Edge::West)] = geom::EdgeTag::AntiperiodicRight;
            if (c == cols - 1)
                p.edge_tags[int(geom::Edge::East)] = geom::EdgeTag::AntiperiodicLeft;
            patches.push_back(std::move(p));
        }
    }
    built.domain = geom::match_interfaces(std::move(patches));
    built.domain.symmetry =
        geom::SymmetryMap{deg2rad(0.5 * (m.sector_start_deg + m.sector_end_deg))};

    finish_machine_problem(built, m, preset);
    return built;
}

BuiltProblem build_pmsm_from_file(const PmsmCase& m, Preset preset,
                                  const std::string& geometry_path) {
    BuiltProblem built;
    built.problem = "imported";
    built.preset = preset;
    built.domain = geom::load_domain(geometry_path);
    if (!built.domain.symmetry) {
        // default pairing frame: reflection about the y-axis
        built.domain.symmetry = geom::SymmetryMap{kPi / 2};
    }
    finish_machine_problem(built, m, preset);
    return built;
}

// --- plan construction ----------------------------------------------------------

samp::SamplePlan build_plan(const BuiltProblem& built, const SampleBudgets& budgets,
                            std::uint64_t skip) {
    const geom::MultiPatchDomain& domain = built.domain;
    samp::SamplePlan plan;

    // interior allocation
    const std::size_t np = domain.patches.size();
    std::vector<double> areas(np);
    for (std::size_t p = 0; p < np; ++p) areas[p] = geom::patch_area(domain.patches[p], 16);

    std::vector<std::size_t> interior_counts(np, 0);
    if (!built.interior_fractions.empty()) {
        const auto sub_counts = samp::apportion(built.interior_fractions, budgets.interior);
        for (std::size_t s = 0; s < built.subdomain_names.size(); ++s) {
            std::vector<double> sub_area(np, 0.0);
            for (std::size_t p = 0; p < np; ++p)
                if (built.patch_subdomain[p] == static_cast<int>(s)) sub_area[p] = areas[p];
            const auto counts = samp::apportion(sub_area, sub_counts[s]);
            for (std::size_t p = 0; p < np; ++p) interior_counts[p] += counts[p];
        }
    } else {
        interior_counts = samp::apportion(areas, budgets.interior);
    }
    for (std::size_t p = 0; p < np; ++p)
        if (interior_counts[p] > 0)
            plan.interior.push_back(
                samp::sample_interior(domain.patches[p], static_cast<int>(p), interior_counts[p], skip));

    // boundary edges by tag
    auto add_edges = [&](geom::EdgeTag tag, std::size_t total) {
        const std::vector<int> edges = domain.edges_tagged(tag);
        if (edges.empty() || total == 0) return;
        std::vector<double> lengths;
        for (int enc : edges)
            lengths.push_back(edge_length(domain.patches[enc / 4], geom::Edge(enc % 4)));
        const auto counts = samp::apportion(lengths, total);
        for (std::size_t i = 0; i < edges.size(); ++i)
            if (counts[i] > 0)
                plan.edges.push_back(samp::sample_edge(domain.patches[edges[i] / 4], edges[i] / 4,
                                                       geom::Edge(edges[i] % 4), counts[i], skip));
    };
    add_edges(geom::EdgeTag::Dirichlet, budgets.dirichlet);
    add_edges(geom::EdgeTag::Neumann, budgets.neumann);

    // inter-subdomain interfaces
    std::vector<const geom::Interface*> active;
    std::vector<double> ilen;
    for (const geom::Interface& f : domain.interfaces) {
        if (built.patch_subdomain[f.patch_k] == built.patch_subdomain[f.patch_l]) continue;
        active.push_back(&f);
        ilen.push_back(interface_length(domain, f));
    }
    if (!active.empty() && budgets.interfaces > 0) {
        const auto counts = samp::apportion(ilen, budgets.interfaces);
        for (std::size_t i = 0; i < active.size(); ++i)
            if (counts[i] > 0)
                plan.interfaces.push_back(
                    samp::sample_interface(domain, *active[i], counts[i], skip));
    }

    // anti-periodic pairs (left edge matched to its mirrored right edge)
    if (budgets.antiperiodic > 0) {
        const auto lefts = domain.edges_tagged(geom::EdgeTag::AntiperiodicLeft);
        const auto rights = domain.edges_tagged(geom::EdgeTag::AntiperiodicRight);
        if (!lefts.empty() && !domain.symmetry)
            throw GeometryError("anti-periodic edges need a domain symmetry map");
        std::vector<double> lengths;
        for (int enc : lefts)
            lengths.push_back(edge_length(domain.patches[enc / 4], geom::Edge(enc % 4)));
        const auto counts = samp::apportion(lengths, budgets.antiperiodic);
        for (std::size_t i = 0; i < lefts.size(); ++i) {
            if (counts[i] == 0) continue;
            const int lp = lefts[i] / 4;
            const geom::Edge le = geom::Edge(lefts[i] % 4);
            const geom::NurbsCurve lc = geom::edge_curve(domain.patches[lp], le);
            const Vec2 m0 = domain.symmetry->apply(lc.eval(0.5));
            int best = -1;
            double best_d = 1e30;
            for (int enc : rights) {
                const geom::NurbsCurve rc =
                    geom::edge_curve(domain.patches[enc / 4], geom::Edge(enc % 4));
                // distance of the mirrored midpoint to the candidate edge
                double d = 1e30;
                for (int s = 0; s <= 16; ++s) d = std::min(d, (rc.eval(s / 16.0) - m0).norm());
                if (d < best_d) {
                    best_d = d;
                    best = enc;
                }
            }
            if (best < 0 || best_d > 1e-6)
                throw GeometryError("anti-periodic left edge has no mirrored right partner");
            plan.antiperiodic.push_back(samp::sample_antiperiodic(
                domain, lp, le, best / 4, geom::Edge(best % 4), counts[i], skip));
        }
    }
    return plan;
}

// --- energy specs ---------------------------------------------------------------

namespace {

double beta_for_patch(const BuiltProblem& built, int patch, double fallback) {
    if (!built.machine_betas) return fallback;
    const Vec2 mid = geom::surface_eval(built.domain.patches[patch], {0.5, 0.5});
    return mid.norm() < built.rotor_radius ? built.beta_rotor : built.beta_stator;
}

}  // namespace

fn::EnergySpec make_energy_spec(const BuiltProblem& built, const samp::SamplePlan& plan) {
    fn::EnergySpec spec;
    spec.networks = built.networks;
    spec.network_labels = built.network_labels;
    spec.patch_subdomain = built.patch_subdomain;
    spec.subdomain_network = built.subdomain_network;
    spec.subdomain_names = built.subdomain_names;

    // interior energy, one term per subdomain
    for (std::size_t s = 0; s < built.subdomain_names.size(); ++s) {
        fn::EnergyTerm term;
        term.kind = fn::TermKind::Interior;
        term.name = "interior_" + built.subdomain_names[s];
        term.coefficient = built.subdomain_coefficient[s];
        if (static_cast<int>(s) == built.magnet_subdomain)
            term.magnetization = built.magnetization;
        for (std::size_t i = 0; i < plan.interior.size(); ++i)
            if (built.patch_subdomain[plan.interior[i].patch] == static_cast<int>(s))
                term.sets.push_back(static_cast<int>(i));
        if (!term.sets.empty()) spec.terms.push_back(std::move(term));
    }

    auto edge_sets_tagged = [&](geom::EdgeTag tag) {
        std::vector<int> out;
        for (std::size_t i = 0; i < plan.edges.size(); ++i)
            if (plan.edges[i].tag == tag) out.push_back(static_cast<int>(i));
        return out;
    };
    const auto dirichlet_sets = edge_sets_tagged(geom::EdgeTag::Dirichlet);
    const auto neumann_sets = edge_sets_tagged(geom::EdgeTag::Neumann);

    std::vector<double> dirichlet_betas;
    for (int s : dirichlet_sets)
        dirichlet_betas.push_back(beta_for_patch(built, plan.edges[s].patch, built.beta_dirichlet));
    std::vector<double> interface_betas;
    for (const auto& set : plan.interfaces)
        interface_betas.push_back(beta_for_patch(built, set.iface.patch_k, built.beta_interface));
    std::vector<int> interface_sets(plan.interfaces.size());
    std::iota(interface_sets.begin(), interface_sets.end(), 0);
    std::vector<double> ap_betas;
    for (const auto& set : plan.antiperiodic)
        ap_betas.push_back(beta_for_patch(built, set.patch_left, built.beta_interface));
    std::vector<int> ap_sets(plan.antiperiodic.size());
    std::iota(ap_sets.begin(), ap_sets.end(), 0);

    if (!neumann_sets.empty()) {
        fn::EnergyTerm term;
        term.kind = fn::TermKind::Neumann;
        term.name = "neumann";
        term.sets = neumann_sets;
        term.load = built.neumann_data;
        spec.terms.push_back(std::move(term));
    }

    auto add_split = [&](fn::TermKind kind, const std::string& stem, std::vector<int> sets,
                         std::vector<double> betas, fn::BoundaryFn load) {
        for (fn::TermPiece piece : {fn::TermPiece::Consistency, fn::TermPiece::Penalty}) {
            fn::EnergyTerm term;
            term.kind = kind;
            term.piece = piece;
            term.name = stem + (piece == fn::TermPiece::Consistency ? "_consistency" : "_penalty");
            term.sets = sets;
            term.betas = betas;
            term.load = load;
            spec.terms.push_back(std::move(term));
        }
    };

    const bool dd = built.preset != Preset::Single;
    switch (built.preset) {
        case Preset::Single:
        case Preset::Coupling: {
            if (!dirichlet_sets.empty()) {
                fn::EnergyTerm term;
                term.kind = fn::TermKind::DirichletPenalty;
                term.name = "dirichlet_penalty";
                term.sets = dirichlet_sets;
                term.betas = dirichlet_betas;
                term.load = built.dirichlet_data;
                spec.terms.push_back(std::move(term));
            }
            if (dd && !plan.interfaces.empty()) {
                fn::EnergyTerm term;
                term.kind = fn::TermKind::CouplingPenalty;
                term.name = "coupling";
                term.sets = interface_sets;
                term.betas = interface_betas;
                spec.terms.push_back(std::move(term));
            }
            if (!plan.antiperiodic.empty()) {
                fn::EnergyTerm term;
                term.kind = fn::TermKind::AntiperiodicPenalty;
                term.name = "antiperiodic_penalty";
                term.sets = ap_sets;
                term.betas = ap_betas;
                spec.terms.push_back(std::move(term));
            }
            break;
        }
        case Preset::Dg: {
            if (!dirichlet_sets.empty())
                add_split(fn::TermKind::DgDirichlet, "dg_dirichlet", dirichlet_sets,
                          dirichlet_betas, built.dirichlet_data);
            if (!plan.interfaces.empty())
                add_split(fn::TermKind::DgInterface, "dg_interface", interface_sets,
                          interface_betas, nullptr);
            if (!plan.antiperiodic.empty())
                add_split(fn::TermKind::DgAntiperiodic, "dg_antiperiodic", ap_sets, ap_betas,
                          nullptr);
            break;
        }
    }
    return spec;
}

// --- metrics --------------------------------------------------------------------

ErrorMetrics error_metrics(const SolutionField& solution,
                           const std::function<double(Vec2)>& reference,
                           const samp::SamplePlan& eval_plan) {
    ErrorMetrics metrics;
    double num = 0.0, den = 0.0, abs_sum = 0.0;
    std::size_t count = 0;
    for (const auto& set : eval_plan.interior) {
        const double inv_m = 1.0 / double(set.size());
        for (std::size_t m = 0; m < set.size(); ++m) {
            const double u = solution(set.patch, set.phys[m]);
            const double ref = reference ? reference(set.phys[m]) : 0.0;
            const double r = u - ref;
            num += set.weight[m] * inv_m * r * r;
            den += set.weight[m] * inv_m * ref * ref;
            abs_sum += std::abs(r);
            metrics.max_abs = std::max(metrics.max_abs, std::abs(r));
            ++count;
        }
    }
    metrics.mean_abs = count ? abs_sum / double(count) : 0.0;
    metrics.rel_l2 = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    return metrics;
}

ErrorMetrics error_metrics(const fn::SolutionEvaluator& solution,
                           const std::function<double(Vec2)>& reference,
                           const samp::SamplePlan& eval_plan) {
    return error_metrics(
        [&](int patch, Vec2 x) { return solution.value(patch, x); }, reference, eval_plan);
}

FluxStats interface_flux_check(const BuiltProblem& built, const samp::SamplePlan& plan,
                               const GradientField& gradient) {
    FluxStats stats;
    double low_side_max = 0.0;
    for (const auto& set : plan.interfaces) {
        const double coef_k =
            2.0 * built.subdomain_coefficient[built.patch_subdomain[set.iface.patch_k]];
        const double coef_l =
            2.0 * built.subdomain_coefficient[built.patch_subdomain[set.iface.patch_l]];
        for (std::size_t m = 0; m < set.size(); ++m) {
            const Vec2 gk = gradient(set.iface.patch_k, set.phys_k[m]);
            const Vec2 gl = gradient(set.iface.patch_l, set.phys_l[m]);
            const double fk = coef_k * gk.dot(set.normal[m]);
            const double fl = coef_l * gl.dot(set.normal[m]);
            stats.residuals.push_back(std::abs(fk - fl));
            const double low = coef_k <= coef_l ? fk : fl;
            low_side_max = std::max(low_side_max, std::abs(low));
        }
    }
    if (stats.residuals.empty()) return stats;
    stats.median = median_of(stats.residuals);
    stats.mean = std::accumulate(stats.residuals.begin(), stats.residuals.end(), 0.0) /
                 double(stats.residuals.size());
    stats.max = *std::max_element(stats.residuals.begin(), stats.residuals.end());
    stats.median_normalized = low_side_max > 0.0 ? stats.median / low_side_max : stats.median;
    return stats;
}

FluxStats interface_flux_check(const BuiltProblem& built, const samp::SamplePlan& plan,
                               const fn::SolutionEvaluator& solution) {
    return interface_flux_check(built, plan, [&](int patch, Vec2 x) {
        Vec2 g;
        solution.value_and_gradient(patch, x, g);
        return g;
    });
}

std::vector<LineScanRow> cylinder_line_scan(const BuiltProblem& built,
                                            const fn::SolutionEvaluator& solution, int points,
                                            double y_line) {
    if (!built.point_subdomain)
        throw ConfigError("line scan needs a point->subdomain classifier");
    std::vector<LineScanRow> rows;
    rows.reserve(points);
    for (int i = 0; i < points; ++i) {
        const double x = -1.0 + 2.0 * double(i) / double(points - 1);
        const Vec2 p{x, y_line};
        const int sub = built.point_subdomain(p);
        const int patch = built.representative_patch(sub);
        Vec2 g;
        const double u = solution.value_and_gradient(patch, p, g);
        LineScanRow row{};
        row.x = x;
        row.y = y_line;
        row.u = u;
        row.ex = -g.x;
        row.ey = -g.y;
        const Vec2 rhat = p.norm() > 0 ? p.normalized() : Vec2{1, 0};
        row.en = -(g.dot(rhat));
        row.eps_en = 2.0 * built.subdomain_coefficient[sub] * row.en;
        if (built.reference_u) {
            row.u_ref = built.reference_u(p);
            row.en_ref = -(built.reference_grad(p).dot(rhat));
        }
        rows.push_back(row);
    }
    return rows;
}

void write_line_scan_csv(const std::vector<LineScanRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write line scan CSV: " + path);
    out.precision(17);
    out << "x,y,u,ex,ey,en,eps_en,u_ref,en_ref\n";
    for (const auto& r : rows)
        out << r.x << ',' << r.y << ',' << r.u << ',' << r.ex << ',' << r.ey << ',' << r.en << ','
            << r.eps_en << ',' << r.u_ref << ',' << r.en_ref << '\n';
}

void write_field_csv(const BuiltProblem& built, const samp::SamplePlan& plan,
                     const fn::SolutionEvaluator& solution, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write field CSV: " + path);
    out.precision(17);
    const bool with_ref = static_cast<bool>(built.reference_u);
    out << "x,y,subdomain,u,ux,uy";
    if (with_ref) out << ",u_ref,abs_err";
    out << '\n';
    for (const auto& set : plan.interior) {
        const int sub = built.patch_subdomain[set.patch];
        for (std::size_t m = 0; m < set.size(); ++m) {
            Vec2 g;
            const double u = solution.value_and_gradient(set.patch, set.phys[m], g);
            out << set.phys[m].x << ',' << set.phys[m].y << ',' << built.subdomain_names[sub]
                << ',' << u << ',' << g.x << ',' << g.y;
            if (with_ref) {
                const double ref = built.reference_u(set.phys[m]);
                out << ',' << ref << ',' << std::abs(u - ref);
            }
            out << '\n';
        }
    }
}

BoundaryResiduals boundary_residuals(const BuiltProblem& built, const samp::SamplePlan& plan,
                                     const fn::SolutionEvaluator& solution) {
    BoundaryResiduals res;
    double lo = 1e300, hi = -1e300;
    for (const auto& set : plan.interior)
        for (std::size_t m = 0; m < set.size(); ++m) {
            const double u = solution.value(set.patch, set.phys[m]);
            lo = std::min(lo, u);
            hi = std::max(hi, u);
        }
    res.range = hi > lo ? hi - lo : 0.0;

    std::vector<double> jumps;
    for (const auto& set : plan.interfaces)
        for (std::size_t m = 0; m < set.size(); ++m)
            jumps.push_back(std::abs(solution.value(set.iface.patch_k, set.phys_k[m]) -
                                     solution.value(set.iface.patch_l, set.phys_l[m])));
    res.interface_jump_median = median_of(std::move(jumps));

    std::vector<double> bc;
    for (const auto& set : plan.edges) {
        if (set.tag != geom::EdgeTag::Dirichlet) continue;
        for (std::size_t m = 0; m < set.size(); ++m) {
            const double gd =
                built.dirichlet_data ? built.dirichlet_data(set.phys[m], set.normal[m]) : 0.0;
            bc.push_back(std::abs(solution.value(set.patch, set.phys[m]) - gd));
        }
    }
    res.dirichlet_median = median_of(std::move(bc));

    std::vector<double> ap;
    for (const auto& set : plan.antiperiodic)
        for (std::size_t m = 0; m < set.size(); ++m)
            ap.push_back(std::abs(solution.value(set.patch_left, set.phys_left[m]) +
                                  solution.value(set.patch_right, set.phys_right[m])));
    res.antiperiodic_median = median_of(std::move(ap));
    return res;
}

}  // namespace vns::prob
