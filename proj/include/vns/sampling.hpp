#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vns/common.hpp"
#include "vns/geometry.hpp"

namespace vns::samp {

// Sobol sequence (Gray-code order, new-Joe-Kuo direction numbers) for
// dim 1 or 2. `skip` drops the leading points of the sequence; the default
// of 1 used throughout the library drops the all-zeros point.
std::vector<double> sobol(int dim, std::size_t count, std::size_t skip);
std::vector<double> sobol1(std::size_t count, std::size_t skip = 1);
std::vector<Vec2> sobol2(std::size_t count, std::size_t skip = 1);

struct InteriorSet {
    int patch = -1;
    std::vector<Vec2> ref;      // y_m on the unit square
    std::vector<Vec2> phys;     // x_m = F(y_m)
    std::vector<double> weight; // |det J_F(y_m)|
    std::size_t size() const { return ref.size(); }
};

struct EdgeSet {
    int patch = -1;
    geom::Edge edge = geom::Edge::South;
    geom::EdgeTag tag = geom::EdgeTag::InteriorFree;
    std::vector<double> xi;
    std::vector<Vec2> phys;
    std::vector<double> speed;   // |C'(xi)|
    std::vector<Vec2> normal;    // outward unit normal of the owning patch
    std::size_t size() const { return xi.size(); }
};

// One Sobol stream mapped through both sides of an interface; the paired
// points coincide within geom_tol and share side-k speeds and normals.
struct InterfaceSet {
    geom::Interface iface;
    std::vector<double> xi;      // side-k edge parameter
    std::vector<Vec2> phys_k, phys_l;
    std::vector<double> speed;
    std::vector<Vec2> normal;    // outward from patch k
    std::size_t size() const { return xi.size(); }
};

// Left anti-periodic boundary samples mirrored onto the right boundary by
// the domain's symmetry map.
struct MirrorSet {
    int patch_left = -1, patch_right = -1;
    geom::Edge edge_left = geom::Edge::West, edge_right = geom::Edge::East;
    std::vector<double> xi;      // left edge parameter
    std::vector<Vec2> phys_left, phys_right;
    std::vector<double> speed;   // left edge speeds
    std::vector<Vec2> normal;    // outward from the left patch
    std::size_t size() const { return xi.size(); }
};

struct SamplePlan {
    std::vector<InteriorSet> interior;
    std::vector<EdgeSet> edges;
    std::vector<InterfaceSet> interfaces;
    std::vector<MirrorSet> antiperiodic;
};

InteriorSet sample_interior(const geom::Patch& patch, int patch_index, std::size_t count,
                            std::size_t skip = 1);
EdgeSet sample_edge(const geom::Patch& patch, int patch_index, geom::Edge edge, std::size_t count,
                    std::size_t skip = 1);
InterfaceSet sample_interface(const geom::MultiPatchDomain& domain, const geom::Interface& iface,
                              std::size_t count, std::size_t skip = 1,
                              double geom_tol = kGeomTol);
MirrorSet sample_antiperiodic(const geom::MultiPatchDomain& domain, int left_patch,
                              geom::Edge left_edge, int right_patch, geom::Edge right_edge,
                              std::size_t count, std::size_t skip = 1,
                              double geom_tol = kGeomTol);

// `patch,k,y1,y2,x1,x2,weight` rows for the interior sets (edge sets follow
// with y2 empty); the format feeds external scatter plotting.
void export_csv(const SamplePlan& plan, std::ostream& out);
void export_csv(const SamplePlan& plan, const std::string& path);

// Splits `total` into shares proportional to `measure` (largest remainder,
// every positive-measure entry gets at least one when total allows).
std::vector<std::size_t> apportion(const std::vector<double>& measure, std::size_t total);

}  // namespace vns::samp
