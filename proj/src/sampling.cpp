#include "vns/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace vns::samp {

namespace {

constexpr int kBits = 32;

// Direction numbers in 32-bit fixed point. Dimension 1 is the van der
// Corput sequence; dimension 2 uses the degree-1 primitive polynomial with
// initial m = 1 (m_k = m_{k-1} xor 2 m_{k-1}).
struct Directions {
    std::uint32_t v[2][kBits];
    Directions() {
        std::uint32_t m[kBits];
        for (int k = 0; k < kBits; ++k) v[0][k] = 1u << (31 - k);
        m[0] = 1;
        for (int k = 1; k < kBits; ++k) m[k] = m[k - 1] ^ (m[k - 1] << 1);
        for (int k = 0; k < kBits; ++k) v[1][k] = m[k] << (31 - k);
    }
};

const Directions kDirections;

}  // namespace

std::vector<double> sobol(int dim, std::size_t count, std::size_t skip) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("sobol: dim must be 1 or 2");
    if (count < 1) throw std::invalid_argument("sobol: count must be >= 1");
    std::vector<double> out;
    out.reserve(count * dim);
    std::uint32_t state[2] = {0, 0};
    for (std::size_t n = 1; n < skip + count; ++n) {
        const int c = std::countr_zero(static_cast<std::uint32_t>(n));
        for (int d = 0; d < dim; ++d) state[d] ^= kDirections.v[d][c];
        if (n >= skip)
            for (int d = 0; d < dim; ++d) out.push_back(state[d] * 0x1.0p-32);
    }
    if (skip == 0) out.insert(out.begin(), dim, 0.0);  // the all-zeros point
    if (out.size() > count * std::size_t(dim)) out.resize(count * dim);
    return out;
}

std::vector<double> sobol1(std::size_t count, std::size_t skip) { return sobol(1, count, skip); }

std::vector<Vec2> sobol2(std::size_t count, std::size_t skip) {
    const std::vector<double> flat = sobol(2, count, skip);
    std::vector<Vec2> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = {flat[2 * i], flat[2 * i + 1]};
    return out;
}

InteriorSet sample_interior(const geom::Patch& patch, int patch_index, std::size_t count,
                            std::size_t skip) {
    InteriorSet set;
    set.patch = patch_index;
    set.ref = sobol2(count, skip);
    set.phys.reserve(count);
    set.weight.reserve(count);
    for (const Vec2& y : set.ref) {
        set.phys.push_back(geom::surface_eval(patch, y));
        set.weight.push_back(std::abs(geom::jacobian_det(patch, y)));
    }
    return set;
}

EdgeSet sample_edge(const geom::Patch& patch, int patch_index, geom::Edge edge, std::size_t count,
                    std::size_t skip) {
    EdgeSet set;
    set.patch = patch_index;
    set.edge = edge;
    set.tag = patch.tag(edge);
    set.xi = sobol1(count, skip);
    const geom::NurbsCurve curve = geom::edge_curve(patch, edge);
    set.phys.reserve(count);
    set.speed.reserve(count);
    set.normal.reserve(count);
    for (double xi : set.xi) {
        set.phys.push_back(curve.eval(xi));
        set.speed.push_back(geom::curve_speed(curve, xi));
        set.normal.push_back(geom::edge_outward_normal(patch, edge, xi));
    }
    return set;
}

InterfaceSet sample_interface(const geom::MultiPatchDomain& domain, const geom::Interface& iface,
                              std::size_t count, std::size_t skip, double geom_tol) {
    InterfaceSet set;
    set.iface = iface;
    set.xi = sobol1(count, skip);
    const geom::Patch& pk = domain.patches.at(iface.patch_k);
    const geom::Patch& pl = domain.patches.at(iface.patch_l);
    const geom::NurbsCurve ck = geom::edge_curve(pk, iface.edge_k);
    const geom::NurbsCurve cl = geom::edge_curve(pl, iface.edge_l);
    for (double xi : set.xi) {
        const double xl = iface.reversed ? 1.0 - xi : xi;
        const Vec2 a = ck.eval(xi);
        const Vec2 b = cl.eval(xl);
        if ((a - b).norm() > geom_tol)
            throw GeometryError("sample_interface: paired points exceed geom_tol");
        set.phys_k.push_back(a);
        set.phys_l.push_back(b);
        set.speed.push_back(geom::curve_speed(ck, xi));
        set.normal.push_back(geom::edge_outward_normal(pk, iface.edge_k, xi));
    }
    return set;
}

MirrorSet sample_antiperiodic(const geom::MultiPatchDomain& domain, int left_patch,
                              geom::Edge left_edge, int right_patch, geom::Edge right_edge,
                              std::size_t count, std::size_t skip, double geom_tol) {
    if (!domain.symmetry)
        throw GeometryError("sample_antiperiodic: domain has no symmetry map");
    MirrorSet set;
    set.patch_left = left_patch;
    set.edge_left = left_edge;
    set.patch_right = right_patch;
    set.edge_right = right_edge;
    set.xi = sobol1(count, skip);
    const geom::Patch& pl = domain.patches.at(left_patch);
    const geom::Patch& pr = domain.patches.at(right_patch);
    const geom::NurbsCurve cl = geom::edge_curve(pl, left_edge);
    const geom::NurbsCurve cr = geom::edge_curve(pr, right_edge);

    // Orientation of the right edge under the symmetry map, decided from an
    // endpoint.
    const Vec2 image0 = domain.symmetry->apply(cl.eval(0.0));
    const bool reversed = (image0 - cr.eval(0.0)).norm() > (image0 - cr.eval(1.0)).norm();

    for (double xi : set.xi) {
        const Vec2 xl = cl.eval(xi);
        const Vec2 xr = domain.symmetry->apply(xl);
        const double xir = reversed ? 1.0 - xi : xi;
        if ((xr - cr.eval(xir)).norm() > geom_tol)
            throw GeometryError("sample_antiperiodic: mirrored point misses the right boundary");
        set.phys_left.push_back(xl);
        set.phys_right.push_back(xr);
        set.speed.push_back(geom::curve_speed(cl, xi));
        set.normal.push_back(geom::edge_outward_normal(pl, left_edge, xi));
    }
    return set;
}

void export_csv(const SamplePlan& plan, std::ostream& out) {
    out << "patch,k,y1,y2,x1,x2,weight\n";
    out.precision(17);
    for (const InteriorSet& s : plan.interior)
        for (std::size_t m = 0; m < s.size(); ++m)
            out << s.patch << ',' << m << ',' << s.ref[m].x << ',' << s.ref[m].y << ','
                << s.phys[m].x << ',' << s.phys[m].y << ',' << s.weight[m] << '\n';
    for (const EdgeSet& s : plan.edges)
        for (std::size_t m = 0; m < s.size(); ++m)
            out << s.patch << ',' << m << ',' << s.xi[m] << ",," << s.phys[m].x << ','
                << s.phys[m].y << ',' << s.speed[m] << '\n';
}

void export_csv(const SamplePlan& plan, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write sample CSV: " + path);
    export_csv(plan, out);
}

std::vector<std::size_t> apportion(const std::vector<double>& measure, std::size_t total) {
    const double sum = std::accumulate(measure.begin(), measure.end(), 0.0);
    std::vector<std::size_t> counts(measure.size(), 0);
    if (measure.empty() || sum <= 0.0) return counts;
    std::vector<std::pair<double, std::size_t>> rem(measure.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < measure.size(); ++i) {
        const double share = measure[i] / sum * double(total);
        counts[i] = static_cast<std::size_t>(std::floor(share));
        rem[i] = {share - double(counts[i]), i};
        assigned += counts[i];
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) counts[rem[r % rem.size()].second]++;
    // no empty sets: steal from the largest for zero-count positive measures
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] == 0 && measure[i] > 0.0) {
            const std::size_t big =
                std::max_element(counts.begin(), counts.end()) - counts.begin();
            if (counts[big] > 1) {
                counts[big]--;
                counts[i] = 1;
            }
        }
    }
    return counts;
}

}  // namespace vns::samp
