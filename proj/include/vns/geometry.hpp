#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "vns/common.hpp"

namespace vns::geom {

// Clamped (open) knot vector on [0,1]: first and last knot repeated
// degree+1 times.
struct KnotVector {
    int degree = 0;
    std::vector<double> knots;

    int num_basis() const { return static_cast<int>(knots.size()) - degree - 1; }
    void validate() const;

    static KnotVector clamped_uniform(int degree, int num_basis);
};

// B_{i,p}(xi), 0-based i in [0, num_basis). The 0/0 convention of the
// recursion maps to a zero term; the closed end xi = 1 evaluates as the
// left-limit so that the clamped basis still sums to one there.
double bspline_basis(const KnotVector& kv, int i, double xi);
double bspline_basis_derivative(const KnotVector& kv, int i, double xi);

// Rational basis w_i B_i / sum_j w_j B_j.
double nurbs_basis(const KnotVector& kv, const std::vector<double>& weights, int i, double xi);

struct NurbsCurve {
    KnotVector knots;
    std::vector<Vec2> control_points;
    std::vector<double> weights;

    void validate() const;
    Vec2 eval(double xi) const;
    Vec2 derivative(double xi) const;
};

double curve_speed(const NurbsCurve& curve, double xi);

enum class Edge : int { South = 0, East = 1, North = 2, West = 3 };

enum class EdgeTag : int {
    Dirichlet,
    Neumann,
    AntiperiodicLeft,
    AntiperiodicRight,
    Interface,
    InteriorFree,
};

std::string to_string(Edge e);
std::string to_string(EdgeTag t);
EdgeTag edge_tag_from_string(const std::string& s);

// Tensor-product NURBS surface patch mapping [0,1]^2 to the plane.
// Control net is stored row-major over v: index(i,j) = j*nu + i with i the
// u index.
struct Patch {
    KnotVector knots_u;
    KnotVector knots_v;
    std::vector<Vec2> control_points;
    std::vector<double> weights;
    std::string material;
    std::array<EdgeTag, 4> edge_tags{EdgeTag::InteriorFree, EdgeTag::InteriorFree,
                                     EdgeTag::InteriorFree, EdgeTag::InteriorFree};

    int nu() const { return knots_u.num_basis(); }
    int nv() const { return knots_v.num_basis(); }
    void validate() const;

    EdgeTag tag(Edge e) const { return edge_tags[static_cast<int>(e)]; }
};

Vec2 surface_eval(const Patch& patch, Vec2 y);
Mat2 jacobian(const Patch& patch, Vec2 y);
// Signed determinant of the jacobian; throws GeometryError below kDetFloor.
double jacobian_det(const Patch& patch, Vec2 y);

NurbsCurve edge_curve(const Patch& patch, Edge edge);

// Physical point of an edge parameter and the outward unit normal of the
// patch at that point.
Vec2 edge_point(const Patch& patch, Edge edge, double xi);
Vec2 edge_outward_normal(const Patch& patch, Edge edge, double xi);

// Patch area via tensor Gauss-Legendre quadrature of |det J|.
double patch_area(const Patch& patch, int order = 32);

// Nodes/weights of the n-point Gauss-Legendre rule on [0,1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

struct Interface {
    int patch_k = -1;
    Edge edge_k = Edge::South;
    int patch_l = -1;
    Edge edge_l = Edge::South;
    bool reversed = false;  // side l runs the edge parameter backwards
};

// Reflection about the line through the origin at `axis_angle` (radians);
// pairs anti-periodic boundaries of rotationally symmetric sectors.
struct SymmetryMap {
    double axis_angle = 0.0;
    Vec2 apply(Vec2 x) const;
};

struct MultiPatchDomain {
    std::vector<Patch> patches;
    std::vector<Interface> interfaces;
    std::optional<SymmetryMap> symmetry;

    std::vector<int> edges_tagged(EdgeTag tag) const;  // encoded as patch*4+edge
};

// Pairs geometrically coinciding untagged/interface edges (sampled
// coincidence within geom_tol, forward or reversed). Boundary-tagged edges
// never pair; an edge with more than one candidate partner is an error.
MultiPatchDomain match_interfaces(std::vector<Patch> patches, double geom_tol = kGeomTol);

// Patch file format (JSON), the ingestion path for external CAD data.
std::string domain_to_json(const MultiPatchDomain& domain);
std::vector<Patch> patches_from_json(const std::string& json_text);
MultiPatchDomain load_domain(const std::string& path, double geom_tol = kGeomTol);
void save_domain(const MultiPatchDomain& domain, const std::string& path);

// Builders used by the built-in problems and the tests.
Patch make_bilinear_patch(Vec2 p00, Vec2 p10, Vec2 p01, Vec2 p11);
// Annular sector r in [r0, r1], theta in [a0, a1] (radians, |a1-a0| < pi);
// u runs along theta, v along r; exact circular arcs.
Patch make_annulus_patch(double r0, double r1, double a0, double a1);
// Ruled patch between two degree-2 rational curves sharing a knot vector
// (v=0 maps to `bottom`, v=1 to `top`).
Patch make_ruled_patch(const NurbsCurve& bottom, const NurbsCurve& top);
// Quadratic arc of a circle centered at c, radius r, from angle a0 to a1.
NurbsCurve make_arc(Vec2 c, double r, double a0, double a1);
NurbsCurve make_segment(Vec2 a, Vec2 b);  // degree-2 straight segment

}  // namespace vns::geom
