#include "vns/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace vns::geom {

namespace {

// Treat the closed end of the clamped interval as part of the last span.
bool in_span(const KnotVector& kv, int i, double xi) {
    const double lo = kv.knots[i];
    const double hi = kv.knots[i + 1];
    if (xi >= lo && xi < hi) return true;
    return xi == kv.knots.back() && hi == kv.knots.back() && lo < hi;
}

}  // namespace

void KnotVector::validate() const {
    if (degree < 0) throw GeometryError("knot vector: negative degree");
    if (static_cast<int>(knots.size()) < 2 * (degree + 1))
        throw GeometryError("knot vector: too few knots for a clamped basis");
    for (std::size_t i = 1; i < knots.size(); ++i)
        if (knots[i] < knots[i - 1]) throw GeometryError("knot vector: knots must be nondecreasing");
    for (int i = 0; i <= degree; ++i) {
        if (knots[i] != knots.front() || knots[knots.size() - 1 - i] != knots.back())
            throw GeometryError("knot vector: clamped (open) form required");
    }
}

KnotVector KnotVector::clamped_uniform(int degree, int num_basis) {
    if (num_basis < degree + 1) throw GeometryError("knot vector: num_basis < degree+1");
    KnotVector kv;
    kv.degree = degree;
    const int interior = num_basis - degree - 1;
    for (int i = 0; i <= degree; ++i) kv.knots.push_back(0.0);
    for (int i = 1; i <= interior; ++i) kv.knots.push_back(double(i) / (interior + 1));
    for (int i = 0; i <= degree; ++i) kv.knots.push_back(1.0);
    return kv;
}

double bspline_basis(const KnotVector& kv, int i, double xi) {
    const int n = kv.num_basis();
    if (i < 0 || i >= n) throw std::invalid_argument("bspline_basis: index out of range");
    const int p = kv.degree;
    if (p == 0) return in_span(kv, i, xi) ? 1.0 : 0.0;

    // Cox-de-Boor, iterative over degree with the 0/0 -> 0 convention.
    std::vector<double> tmp(p + 1);
    for (int j = 0; j <= p; ++j) tmp[j] = in_span(kv, i + j, xi) ? 1.0 : 0.0;
    for (int deg = 1; deg <= p; ++deg) {
        for (int j = 0; j <= p - deg; ++j) {
            const double den1 = kv.knots[i + j + deg] - kv.knots[i + j];
            const double den2 = kv.knots[i + j + deg + 1] - kv.knots[i + j + 1];
            double v = 0.0;
            if (den1 > 0.0) v += (xi - kv.knots[i + j]) / den1 * tmp[j];
            if (den2 > 0.0) v += (kv.knots[i + j + deg + 1] - xi) / den2 * tmp[j + 1];
            tmp[j] = v;
        }
    }
    return tmp[0];
}

double bspline_basis_derivative(const KnotVector& kv, int i, double xi) {
    const int n = kv.num_basis();
    if (i < 0 || i >= n) throw std::invalid_argument("bspline_basis_derivative: index out of range");
    const int p = kv.degree;
    if (p == 0) return 0.0;
    // B'_{i,p} = p/(x_{i+p}-x_i) B_{i,p-1} - p/(x_{i+p+1}-x_{i+1}) B_{i+1,p-1},
    // where the degree-(p-1) functions live on the same knots (0/0 terms drop).
    const KnotVector lower{p - 1, kv.knots};
    double v = 0.0;
    const double den1 = kv.knots[i + p] - kv.knots[i];
    const double den2 = kv.knots[i + p + 1] - kv.knots[i + 1];
    if (den1 > 0.0) v += p / den1 * bspline_basis(lower, i, xi);
    if (den2 > 0.0) v -= p / den2 * bspline_basis(lower, i + 1, xi);
    return v;
}

double nurbs_basis(const KnotVector& kv, const std::vector<double>& weights, int i, double xi) {
    const int n = kv.num_basis();
    if (static_cast<int>(weights.size()) != n)
        throw std::invalid_argument("nurbs_basis: weight count mismatch");
    double den = 0.0;
    for (int j = 0; j < n; ++j) den += weights[j] * bspline_basis(kv, j, xi);
    return weights[i] * bspline_basis(kv, i, xi) / den;
}

void NurbsCurve::validate() const {
    knots.validate();
    const int n = knots.num_basis();
    if (static_cast<int>(control_points.size()) != n || static_cast<int>(weights.size()) != n)
        throw GeometryError("nurbs curve: control point / weight count mismatch");
    for (double w : weights)
        if (!(w > 0.0)) throw GeometryError("nurbs curve: weights must be positive");
}

Vec2 NurbsCurve::eval(double xi) const {
    const int n = knots.num_basis();
    Vec2 num{0, 0};
    double den = 0.0;
    for (int i = 0; i < n; ++i) {
        const double wb = weights[i] * bspline_basis(knots, i, xi);
        num = num + control_points[i] * wb;
        den += wb;
    }
    return num / den;
}

Vec2 NurbsCurve::derivative(double xi) const {
    const int n = knots.num_basis();
    Vec2 a{0, 0}, da{0, 0};
    double w = 0.0, dw = 0.0;
    for (int i = 0; i < n; ++i) {
        const double b = bspline_basis(knots, i, xi);
        const double db = bspline_basis_derivative(knots, i, xi);
        a = a + control_points[i] * (weights[i] * b);
        da = da + control_points[i] * (weights[i] * db);
        w += weights[i] * b;
        dw += weights[i] * db;
    }
    // C = A/W  =>  C' = (A' - C W') / W
    const Vec2 c = a / w;
    return (da - c * dw) / w;
}

double curve_speed(const NurbsCurve& curve, double xi) { return curve.derivative(xi).norm(); }

std::string to_string(Edge e) {
    switch (e) {
        case Edge::South: return "south";
        case Edge::East: return "east";
        case Edge::North: return "north";
        case Edge::West: return "west";
    }
    return "?";
}

std::string to_string(EdgeTag t) {
    switch (t) {
        case EdgeTag::Dirichlet: return "dirichlet";
        case EdgeTag::Neumann: return "neumann";
        case EdgeTag::AntiperiodicLeft: return "antiperiodic_left";
        case EdgeTag::AntiperiodicRight: return "antiperiodic_right";
        case EdgeTag::Interface: return "interface";
        case EdgeTag::InteriorFree: return "interior-free";
    }
    return "?";
}

EdgeTag edge_tag_from_string(const std::string& s) {
    if (s == "dirichlet") return EdgeTag::Dirichlet;
    if (s == "neumann") return EdgeTag::Neumann;
    if (s == "antiperiodic_left") return EdgeTag::AntiperiodicLeft;
    if (s == "antiperiodic_right") return EdgeTag::AntiperiodicRight;
    if (s == "interface") return EdgeTag::Interface;
    if (s == "interior-free" || s == "interior_free") return EdgeTag::InteriorFree;
    throw GeometryError("unknown edge tag: " + s);
}

void Patch::validate() const {
    knots_u.validate();
    knots_v.validate();
    const std::size_t expect = std::size_t(nu()) * nv();
    if (control_points.size() != expect || weights.size() != expect)
        throw GeometryError("patch: control net size mismatch");
    for (double w : weights)
        if (!(w > 0.0)) throw GeometryError("patch: weights must be positive");
}

Vec2 surface_eval(const Patch& patch, Vec2 y) {
    const int nu = patch.nu(), nv = patch.nv();
    Vec2 num{0, 0};
    double den = 0.0;
    for (int j = 0; j < nv; ++j) {
        const double bv = bspline_basis(patch.knots_v, j, y.y);
        if (bv == 0.0) continue;
        for (int i = 0; i < nu; ++i) {
            const double bu = bspline_basis(patch.knots_u, i, y.x);
            if (bu == 0.0) continue;
            const std::size_t idx = std::size_t(j) * nu + i;
            const double wb = patch.weights[idx] * bu * bv;
            num = num + patch.control_points[idx] * wb;
            den += wb;
        }
    }
    return num / den;
}

Mat2 jacobian(const Patch& patch, Vec2 y) {
    const int nu = patch.nu(), nv = patch.nv();
    Vec2 a{0, 0}, au{0, 0}, av{0, 0};
    double w = 0.0, wu = 0.0, wv = 0.0;
    for (int j = 0; j < nv; ++j) {
        const double bv = bspline_basis(patch.knots_v, j, y.y);
        const double dbv = bspline_basis_derivative(patch.knots_v, j, y.y);
        if (bv == 0.0 && dbv == 0.0) continue;
        for (int i = 0; i < nu; ++i) {
            const double bu = bspline_basis(patch.knots_u, i, y.x);
            const double dbu = bspline_basis_derivative(patch.knots_u, i, y.x);
            if (bu == 0.0 && dbu == 0.0) continue;
            const std::size_t idx = std::size_t(j) * nu + i;
            const double wi = patch.weights[idx];
            const Vec2 p = patch.control_points[idx];
            a = a + p * (wi * bu * bv);
            au = au + p * (wi * dbu * bv);
            av = av + p * (wi * bu * dbv);
            w += wi * bu * bv;
            wu += wi * dbu * bv;
            wv += wi * bu * dbv;
        }
    }
    const Vec2 s = a / w;
    const Vec2 su = (au - s * wu) / w;
    const Vec2 sv = (av - s * wv) / w;
    return Mat2{su.x, sv.x, su.y, sv.y};
}

double jacobian_det(const Patch& patch, Vec2 y) {
    const double det = jacobian(patch, y).det();
    if (std::abs(det) < kDetFloor)
        throw GeometryError("patch: degenerate map (|det J| below det_floor)");
    return det;
}

NurbsCurve edge_curve(const Patch& patch, Edge edge) {
    NurbsCurve c;
    const int nu = patch.nu(), nv = patch.nv();
    auto push = [&](int i, int j) {
        const std::size_t idx = std::size_t(j) * nu + i;
        c.control_points.push_back(patch.control_points[idx]);
        c.weights.push_back(patch.weights[idx]);
    };
    switch (edge) {
        case Edge::South:
            c.knots = patch.knots_u;
            for (int i = 0; i < nu; ++i) push(i, 0);
            break;
        case Edge::North:
            c.knots = patch.knots_u;
            for (int i = 0; i < nu; ++i) push(i, nv - 1);
            break;
        case Edge::West:
            c.knots = patch.knots_v;
            for (int j = 0; j < nv; ++j) push(0, j);
            break;
        case Edge::East:
            c.knots = patch.knots_v;
            for (int j = 0; j < nv; ++j) push(nu - 1, j);
            break;
    }
    return c;
}

namespace {

Vec2 edge_reference_point(Edge edge, double xi) {
    switch (edge) {
        case Edge::South: return {xi, 0.0};
        case Edge::North: return {xi, 1.0};
        case Edge::West: return {0.0, xi};
        case Edge::East: return {1.0, xi};
    }
    return {0, 0};
}

// Reference-domain direction pointing into the patch interior.
Vec2 edge_inward_ref(Edge edge) {
    switch (edge) {
        case Edge::South: return {0.0, 1.0};
        case Edge::North: return {0.0, -1.0};
        case Edge::West: return {1.0, 0.0};
        case Edge::East: return {-1.0, 0.0};
    }
    return {0, 0};
}

}  // namespace

Vec2 edge_point(const Patch& patch, Edge edge, double xi) {
    return surface_eval(patch, edge_reference_point(edge, xi));
}

Vec2 edge_outward_normal(const Patch& patch, Edge edge, double xi) {
    const Vec2 y = edge_reference_point(edge, xi);
    const Mat2 jac = jacobian(patch, y);
    // Tangent of the edge curve, rotated -90 degrees, then oriented away
    // from the interior.
    const Vec2 tangent =
        (edge == Edge::South || edge == Edge::North) ? jac.col(0) : jac.col(1);
    Vec2 n = tangent.rot_cw();
    const Vec2 ref_in = edge_inward_ref(edge);
    const Vec2 inward = jac.col(0) * ref_in.x + jac.col(1) * ref_in.y;
    if (n.dot(inward) > 0.0) n = n * -1.0;
    return n.normalized();
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    // Newton iteration on P_n, then map from [-1,1] to [0,1].
    nodes.assign(n, 0.0);
    weights.assign(n, 0.0);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        const double w = 2.0 / ((1.0 - x * x) * pp * pp);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
}

double patch_area(const Patch& patch, int order) {
    std::vector<double> x, w;
    gauss_legendre(order, x, w);
    double area = 0.0;
    for (int j = 0; j < order; ++j)
        for (int i = 0; i < order; ++i)
            area += w[i] * w[j] * std::abs(jacobian(patch, {x[i], x[j]}).det());
    return area;
}

Vec2 SymmetryMap::apply(Vec2 x) const {
    const Vec2 d{std::cos(axis_angle), std::sin(axis_angle)};
    return d * (2.0 * x.dot(d)) - x;
}

std::vector<int> MultiPatchDomain::edges_tagged(EdgeTag tag) const {
    std::vector<int> out;
    for (std::size_t p = 0; p < patches.size(); ++p)
        for (int e = 0; e < 4; ++e)
            if (patches[p].edge_tags[e] == tag) out.push_back(static_cast<int>(p) * 4 + e);
    return out;
}

namespace {

constexpr int kMatchSamples = 9;

std::array<Vec2, kMatchSamples> edge_samples(const Patch& patch, Edge edge) {
    std::array<Vec2, kMatchSamples> pts;
    for (int s = 0; s < kMatchSamples; ++s)
        pts[s] = edge_point(patch, edge, (s + 0.5) / kMatchSamples);
    return pts;
}

bool coincide(const std::array<Vec2, kMatchSamples>& a, const std::array<Vec2, kMatchSamples>& b,
              bool reversed, double tol) {
    for (int s = 0; s < kMatchSamples; ++s) {
        const Vec2& q = reversed ? b[kMatchSamples - 1 - s] : b[s];
        if ((a[s] - q).norm() > tol) return false;
    }
    return true;
}

void validate_patch_map(const Patch& patch, int index) {
    // Sampled bijectivity check: the determinant keeps one sign and stays
    // above the floor.
    double sign = 0.0;
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
            const Vec2 y{(i + 0.5) / 7.0, (j + 0.5) / 7.0};
            const double det = jacobian(patch, y).det();
            if (std::abs(det) < kDetFloor)
                throw GeometryError("patch " + std::to_string(index) +
                                    ": degenerate map (|det J| below det_floor)");
            if (sign == 0.0) sign = det > 0 ? 1.0 : -1.0;
            if (det * sign < 0.0)
                throw GeometryError("patch " + std::to_string(index) +
                                    ": jacobian determinant changes sign");
        }
    }
}

}  // namespace

MultiPatchDomain match_interfaces(std::vector<Patch> patches, double geom_tol) {
    MultiPatchDomain domain;
    for (std::size_t p = 0; p < patches.size(); ++p) {
        patches[p].validate();
        validate_patch_map(patches[p], static_cast<int>(p));
    }

    const std::size_t np = patches.size();
    std::vector<std::array<Vec2, kMatchSamples>> samples(np * 4);
    std::vector<bool> eligible(np * 4, false);
    for (std::size_t p = 0; p < np; ++p) {
        for (int e = 0; e < 4; ++e) {
            const EdgeTag tag = patches[p].edge_tags[e];
            if (tag == EdgeTag::Interface || tag == EdgeTag::InteriorFree) {
                eligible[p * 4 + e] = true;
                samples[p * 4 + e] = edge_samples(patches[p], static_cast<Edge>(e));
            }
        }
    }

    std::vector<int> partner(np * 4, -1);
    std::vector<bool> rev(np * 4, false);
    for (std::size_t a = 0; a < np * 4; ++a) {
        if (!eligible[a]) continue;
        for (std::size_t b = a + 1; b < np * 4; ++b) {
            if (!eligible[b] || a / 4 == b / 4) continue;
            bool matched = false, reversed = false;
            if (coincide(samples[a], samples[b], false, geom_tol)) {
                matched = true;
            } else if (coincide(samples[a], samples[b], true, geom_tol)) {
                matched = true;
                reversed = true;
            }
            if (!matched) continue;
            if (partner[a] != -1 || partner[b] != -1)
                throw GeometryError("match_interfaces: edge matches more than one partner");
            partner[a] = static_cast<int>(b);
            partner[b] = static_cast<int>(a);
            rev[a] = reversed;
        }
    }

    for (std::size_t a = 0; a < np * 4; ++a) {
        if (partner[a] < 0 && patches[a / 4].edge_tags[a % 4] == EdgeTag::Interface)
            throw GeometryError("match_interfaces: edge tagged 'interface' has no partner (patch " +
                                std::to_string(a / 4) + ", " + to_string(static_cast<Edge>(a % 4)) +
                                ")");
        if (partner[a] < 0 || static_cast<std::size_t>(partner[a]) < a) continue;
        Interface f;
        f.patch_k = static_cast<int>(a / 4);
        f.edge_k = static_cast<Edge>(a % 4);
        f.patch_l = partner[a] / 4;
        f.edge_l = static_cast<Edge>(partner[a] % 4);
        f.reversed = rev[a];
        domain.interfaces.push_back(f);
    }
    domain.patches = std::move(patches);
    return domain;
}

std::string domain_to_json(const MultiPatchDomain& domain) {
    nlohmann::json j;
    j["patches"] = nlohmann::json::array();
    for (const Patch& p : domain.patches) {
        nlohmann::json jp;
        jp["degree_u"] = p.knots_u.degree;
        jp["degree_v"] = p.knots_v.degree;
        jp["knots_u"] = p.knots_u.knots;
        jp["knots_v"] = p.knots_v.knots;
        auto pts = nlohmann::json::array();
        for (std::size_t i = 0; i < p.control_points.size(); ++i)
            pts.push_back({p.control_points[i].x, p.control_points[i].y, p.weights[i]});
        jp["control_points"] = pts;
        jp["material"] = p.material;
        nlohmann::json edges;
        for (int e = 0; e < 4; ++e)
            edges[to_string(static_cast<Edge>(e))] = to_string(p.edge_tags[e]);
        jp["edges"] = edges;
        j["patches"].push_back(jp);
    }
    return j.dump(2);
}

std::vector<Patch> patches_from_json(const std::string& json_text) {
    const auto j = nlohmann::json::parse(json_text);
    std::vector<Patch> patches;
    for (const auto& jp : j.at("patches")) {
        Patch p;
        p.knots_u.degree = jp.at("degree_u").get<int>();
        p.knots_v.degree = jp.at("degree_v").get<int>();
        p.knots_u.knots = jp.at("knots_u").get<std::vector<double>>();
        p.knots_v.knots = jp.at("knots_v").get<std::vector<double>>();
        for (const auto& row : jp.at("control_points")) {
            p.control_points.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
            p.weights.push_back(row.at(2).get<double>());
        }
        p.material = jp.value("material", "");
        if (jp.contains("edges")) {
            for (const auto& [key, val] : jp.at("edges").items()) {
                Edge e;
                if (key == "south") e = Edge::South;
                else if (key == "east") e = Edge::East;
                else if (key == "north") e = Edge::North;
                else if (key == "west") e = Edge::West;
                else throw GeometryError("patch file: unknown edge name " + key);
                p.edge_tags[static_cast<int>(e)] = edge_tag_from_string(val.get<std::string>());
            }
        }
        p.validate();
        patches.push_back(std::move(p));
    }
    return patches;
}

MultiPatchDomain load_domain(const std::string& path, double geom_tol) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open geometry file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return match_interfaces(patches_from_json(ss.str()), geom_tol);
}

void save_domain(const MultiPatchDomain& domain, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write geometry file: " + path);
    out << domain_to_json(domain);
}

Patch make_bilinear_patch(Vec2 p00, Vec2 p10, Vec2 p01, Vec2 p11) {
    Patch p;
    p.knots_u = KnotVector{1, {0, 0, 1, 1}};
    p.knots_v = KnotVector{1, {0, 0, 1, 1}};
    p.control_points = {p00, p10, p01, p11};
    p.weights = {1, 1, 1, 1};
    return p;
}

NurbsCurve make_arc(Vec2 c, double r, double a0, double a1) {
    const double half = 0.5 * (a1 - a0);
    const double mid = 0.5 * (a0 + a1);
    const double w = std::cos(half);
    NurbsCurve curve;
    curve.knots = KnotVector{2, {0, 0, 0, 1, 1, 1}};
    curve.control_points = {c + Vec2{r * std::cos(a0), r * std::sin(a0)},
                            c + Vec2{(r / w) * std::cos(mid), (r / w) * std::sin(mid)},
                            c + Vec2{r * std::cos(a1), r * std::sin(a1)}};
    curve.weights = {1.0, w, 1.0};
    return curve;
}

NurbsCurve make_segment(Vec2 a, Vec2 b) {
    NurbsCurve curve;
    curve.knots = KnotVector{2, {0, 0, 0, 1, 1, 1}};
    curve.control_points = {a, (a + b) * 0.5, b};
    curve.weights = {1.0, 1.0, 1.0};
    return curve;
}

Patch make_ruled_patch(const NurbsCurve& bottom, const NurbsCurve& top) {
    if (bottom.knots.degree != top.knots.degree ||
        bottom.knots.knots != top.knots.knots)
        throw GeometryError("ruled patch: curves must share degree and knots");
    Patch p;
    p.knots_u = bottom.knots;
    p.knots_v = KnotVector{1, {0, 0, 1, 1}};
    p.control_points = bottom.control_points;
    p.control_points.insert(p.control_points.end(), top.control_points.begin(),
                            top.control_points.end());
    p.weights = bottom.weights;
    p.weights.insert(p.weights.end(), top.weights.begin(), top.weights.end());
    return p;
}

Patch make_annulus_patch(double r0, double r1, double a0, double a1) {
    return make_ruled_patch(make_arc({0, 0}, r0, a0, a1), make_arc({0, 0}, r1, a0, a1));
}

}  // namespace vns::geom
