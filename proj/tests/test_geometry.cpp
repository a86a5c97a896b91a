#include "doctest.h"

#include <cmath>
#include <random>

#include "vns/geometry.hpp"
#include "vns/problems.hpp"
#include "vns/sampling.hpp"

using namespace vns;
using geom::Edge;
using geom::EdgeTag;
using geom::KnotVector;
using geom::Patch;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::mt19937_64 rng(2024);
double u01() { return double(rng() >> 11) * 0x1.0p-53; }

Patch identity_patch() {
    return geom::make_bilinear_patch({0, 0}, {1, 0}, {0, 1}, {1, 1});
}

}  // namespace

TEST_CASE("degree-1 hand evaluation of the recursion") {
    KnotVector kv{1, {0, 0, 1, 1}};
    CHECK(geom::bspline_basis(kv, 0, 0.5) == doctest::Approx(0.5));
    CHECK(geom::bspline_basis(kv, 1, 0.5) == doctest::Approx(0.5));
    CHECK(geom::bspline_basis(kv, 0, 0.0) == 1.0);
    CHECK(geom::bspline_basis(kv, 1, 1.0) == 1.0);  // closed end
    CHECK_THROWS_AS(geom::bspline_basis(kv, 2, 0.5), std::invalid_argument);
}

TEST_CASE("partition of unity and nonnegativity") {
    for (int degree : {0, 1, 2, 3}) {
        const KnotVector kv = KnotVector::clamped_uniform(degree, degree + 4);
        const std::vector<double> w = {1.0, 2.0, 0.5, 1.5, 1.0, 3.0, 0.9};
        const std::vector<double> weights(w.begin(), w.begin() + kv.num_basis());
        for (int s = 0; s < 1000; ++s) {
            const double xi = u01();
            double bsum = 0.0, nsum = 0.0;
            for (int i = 0; i < kv.num_basis(); ++i) {
                const double b = geom::bspline_basis(kv, i, xi);
                CHECK(b >= 0.0);
                bsum += b;
                nsum += geom::nurbs_basis(kv, weights, i, xi);
            }
            CHECK(bsum == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(nsum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("equal weights reduce NURBS to B-splines") {
    const KnotVector kv = KnotVector::clamped_uniform(2, 6);
    const std::vector<double> weights(6, 2.5);
    for (double xi : {0.1, 0.42, 0.9}) {
        for (int i = 0; i < 6; ++i)
            CHECK(geom::nurbs_basis(kv, weights, i, xi) ==
                  doctest::Approx(geom::bspline_basis(kv, i, xi)).epsilon(1e-14));
    }
}

TEST_CASE("quarter-circle arc stays on the circle") {
    const geom::NurbsCurve arc = geom::make_arc({0, 0}, 1.0, 0.0, kPi / 2);
    CHECK(arc.weights[1] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-15));
    for (double xi : {0.0, 0.25, 0.5, 0.75, 1.0})
        CHECK(arc.eval(xi).norm() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("surface evaluation: bilinear and identity patches") {
    const Patch bil = geom::make_bilinear_patch({0, 0}, {2, 0}, {0, 2}, {4, 4});
    const Vec2 mid = geom::surface_eval(bil, {0.5, 0.5});
    CHECK(mid.x == doctest::Approx((0 + 2 + 0 + 4) / 4.0));
    CHECK(mid.y == doctest::Approx((0 + 0 + 2 + 4) / 4.0));

    const Patch id = identity_patch();
    for (int i = 0; i < 20; ++i) {
        const Vec2 y{u01(), u01()};
        const Vec2 x = geom::surface_eval(id, y);
        CHECK(x.x == doctest::Approx(y.x).epsilon(1e-15));
        CHECK(x.y == doctest::Approx(y.y).epsilon(1e-15));
    }
    CHECK(geom::jacobian_det(id, {0.3, 0.8}) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("quarter-annulus patch: points, jacobian, area") {
    const Patch ann = geom::make_annulus_patch(0.5, 1.0, 0.0, kPi / 2);
    // inner edge lies on the inner circle
    CHECK(geom::surface_eval(ann, {0.5, 0.0}).norm() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(geom::surface_eval(ann, {0.25, 1.0}).norm() == doctest::Approx(1.0).epsilon(1e-12));

    const double area = kPi * (1.0 - 0.25) / 4.0;  // 0.58905
    CHECK(area == doctest::Approx(0.58905).epsilon(1e-4));
    CHECK(geom::patch_area(ann, 32) == doctest::Approx(area).epsilon(1e-12));

    // QMC importance identity: mean of |det J| over Sobol points -> area
    const auto pts = samp::sobol2(1 << 14);
    double acc = 0.0;
    for (const Vec2& y : pts) acc += std::abs(geom::jacobian_det(ann, y));
    acc /= double(pts.size());
    CHECK(std::abs(acc - area) / area < 0.005);
}

TEST_CASE("affine patch has constant jacobian determinant") {
    const Patch p = geom::make_bilinear_patch({0, 0}, {2, 0}, {0, 1}, {2, 1});
    for (int i = 0; i < 10; ++i)
        CHECK(geom::jacobian_det(p, {u01(), u01()}) == doctest::Approx(2.0).epsilon(1e-13));
}

TEST_CASE("analytic jacobian matches finite differences of the map") {
    auto patches = std::vector<Patch>{identity_patch(),
                                      geom::make_annulus_patch(0.5, 1.0, 0.0, kPi / 2),
                                      geom::make_annulus_patch(0.016, 0.03, 1.1, 1.6)};
    const auto cyl = prob::build_cylinder(prob::Preset::Dg);
    for (const auto& p : cyl.domain.patches) patches.push_back(p);

    const double h = 1e-7;
    for (const Patch& p : patches) {
        for (int s = 0; s < 100; ++s) {
            const Vec2 y{0.05 + 0.9 * u01(), 0.05 + 0.9 * u01()};
            const Mat2 jac = geom::jacobian(p, y);
            const Vec2 du = (geom::surface_eval(p, {y.x + h, y.y}) -
                             geom::surface_eval(p, {y.x - h, y.y})) /
                            (2 * h);
            const Vec2 dv = (geom::surface_eval(p, {y.x, y.y + h}) -
                             geom::surface_eval(p, {y.x, y.y - h})) /
                            (2 * h);
            const double scale = std::max({1.0, std::abs(jac.a11), std::abs(jac.a21),
                                           std::abs(jac.a12), std::abs(jac.a22)});
            CHECK(std::abs(jac.a11 - du.x) / scale < 1e-7);
            CHECK(std::abs(jac.a21 - du.y) / scale < 1e-7);
            CHECK(std::abs(jac.a12 - dv.x) / scale < 1e-7);
            CHECK(std::abs(jac.a22 - dv.y) / scale < 1e-7);
        }
    }
}

TEST_CASE("edge curves and their speeds") {
    const Patch id = identity_patch();
    for (Edge e : {Edge::South, Edge::East, Edge::North, Edge::West})
        CHECK(geom::curve_speed(geom::edge_curve(id, e), 0.37) == doctest::Approx(1.0));

    const Patch stretched = geom::make_bilinear_patch({0, 0}, {3, 0}, {0, 1}, {3, 1});
    CHECK(geom::curve_speed(geom::edge_curve(stretched, Edge::South), 0.5) ==
          doctest::Approx(3.0));

    // quarter-circle arc length via Gauss quadrature of the speed
    const double r = 0.7;
    const geom::NurbsCurve arc = geom::make_arc({0, 0}, r, kPi / 4, 3 * kPi / 4);
    std::vector<double> x, w;
    geom::gauss_legendre(48, x, w);
    double len = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) len += w[i] * geom::curve_speed(arc, x[i]);
    CHECK(std::abs(len - kPi * r / 2) < 1e-10);
}

TEST_CASE("edge outward normals") {
    const Patch id = identity_patch();
    CHECK((geom::edge_outward_normal(id, Edge::South, 0.5) - Vec2{0, -1}).norm() < 1e-14);
    CHECK((geom::edge_outward_normal(id, Edge::East, 0.5) - Vec2{1, 0}).norm() < 1e-14);
    CHECK((geom::edge_outward_normal(id, Edge::North, 0.5) - Vec2{0, 1}).norm() < 1e-14);
    CHECK((geom::edge_outward_normal(id, Edge::West, 0.5) - Vec2{-1, 0}).norm() < 1e-14);

    // inner edge of an annulus points toward the center
    const Patch ann = geom::make_annulus_patch(0.5, 1.0, 0.2, 0.9);
    const Vec2 p = geom::edge_point(ann, Edge::South, 0.4);
    const Vec2 n = geom::edge_outward_normal(ann, Edge::South, 0.4);
    CHECK((n + p.normalized()).norm() < 1e-12);
}

TEST_CASE("match_interfaces: pairs, counts, errors") {
    // single patch: no interfaces
    CHECK(geom::match_interfaces({identity_patch()}).interfaces.empty());

    // two unit squares sharing x=1
    Patch left = identity_patch();
    Patch right = geom::make_bilinear_patch({1, 0}, {2, 0}, {1, 1}, {2, 1});
    const auto two = geom::match_interfaces({left, right});
    REQUIRE(two.interfaces.size() == 1);
    CHECK(two.interfaces[0].patch_k == 0);
    CHECK(two.interfaces[0].edge_k == Edge::East);
    CHECK(two.interfaces[0].edge_l == Edge::West);
    CHECK_FALSE(two.interfaces[0].reversed);

    // flipped construction is detected as reversed
    Patch right_flipped = geom::make_bilinear_patch({1, 1}, {2, 1}, {1, 0}, {2, 0});
    const auto rev = geom::match_interfaces({left, right_flipped});
    REQUIRE(rev.interfaces.size() == 1);
    CHECK(rev.interfaces[0].reversed);

    // triple-coincident edges are ambiguous
    CHECK_THROWS_AS(geom::match_interfaces({left, right, right}), GeometryError);

    // an explicitly tagged interface edge must find a partner
    Patch lonely = identity_patch();
    lonely.edge_tags[int(Edge::East)] = EdgeTag::Interface;
    CHECK_THROWS_AS(geom::match_interfaces({lonely}), GeometryError);
}

TEST_CASE("cylinder layout: interface census and coincidence") {
    const auto built = prob::build_cylinder(prob::Preset::Dg);
    const auto& dom = built.domain;
    CHECK(dom.patches.size() == 9);
    CHECK(dom.interfaces.size() == 16);

    int on_circle = 0;
    for (const auto& f : dom.interfaces) {
        if (dom.patches[f.patch_k].material != dom.patches[f.patch_l].material) ++on_circle;
        // paired edge parameters agree within geom_tol at 50 samples
        const auto ck = geom::edge_curve(dom.patches[f.patch_k], f.edge_k);
        const auto cl = geom::edge_curve(dom.patches[f.patch_l], f.edge_l);
        for (int s = 0; s < 50; ++s) {
            const double xi = (s + 0.5) / 50.0;
            const double xl = f.reversed ? 1.0 - xi : xi;
            CHECK((ck.eval(xi) - cl.eval(xl)).norm() <= kGeomTol);
        }
    }
    CHECK(on_circle == 4);
    for (const auto& f : dom.interfaces) {
        if (dom.patches[f.patch_k].material != dom.patches[f.patch_l].material) {
            for (double xi : {0.1, 0.5, 0.9})
                CHECK(geom::edge_point(dom.patches[f.patch_k], f.edge_k, xi).norm() ==
                      doctest::Approx(0.5).epsilon(1e-12));
        }
    }
}

TEST_CASE("degenerate maps are rejected") {
    Patch collapsed = geom::make_bilinear_patch({0, 0}, {1, 0}, {0, 0}, {1, 0});
    CHECK_THROWS_AS(geom::match_interfaces({collapsed}), GeometryError);
    CHECK_THROWS_AS(geom::jacobian_det(collapsed, {0.5, 0.5}), GeometryError);
}

TEST_CASE("patch file round trip") {
    const auto built = prob::build_cylinder(prob::Preset::Dg);
    const std::string text = geom::domain_to_json(built.domain);
    const auto patches = geom::patches_from_json(text);
    REQUIRE(patches.size() == built.domain.patches.size());
    const auto redone = geom::match_interfaces(patches);
    CHECK(redone.interfaces.size() == built.domain.interfaces.size());
    for (std::size_t p = 0; p < patches.size(); ++p) {
        CHECK(patches[p].material == built.domain.patches[p].material);
        CHECK(patches[p].edge_tags == built.domain.patches[p].edge_tags);
        for (double v : {0.2, 0.8}) {
            const Vec2 a = geom::surface_eval(patches[p], {v, 1 - v});
            const Vec2 b = geom::surface_eval(built.domain.patches[p], {v, 1 - v});
            CHECK((a - b).norm() < 1e-15);
        }
    }
    CHECK_THROWS(geom::patches_from_json("{\"patches\": [ {\"degree_u\": 1} ]}"));
    CHECK_THROWS_AS(geom::load_domain("/nonexistent/file.json"), ConfigError);
}

TEST_CASE("symmetry map is an involution") {
    const geom::SymmetryMap sym{kPi / 2};
    for (int i = 0; i < 10; ++i) {
        const Vec2 x{u01() * 2 - 1, u01() * 2 - 1};
        const Vec2 y = sym.apply(x);
        CHECK(y.x == doctest::Approx(-x.x).epsilon(1e-15));
        CHECK(y.y == doctest::Approx(x.y).epsilon(1e-15));
        CHECK((sym.apply(y) - x).norm() < 1e-12);
    }
}
