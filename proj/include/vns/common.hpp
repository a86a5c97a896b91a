#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace vns {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    double norm2() const { return x * x + y * y; }
    Vec2 normalized() const {
        const double n = norm();
        return {x / n, y / n};
    }
    // 90 degree clockwise rotation (tangent -> candidate normal).
    Vec2 rot_cw() const { return {y, -x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

struct Mat2 {
    // column j is the derivative of the map w.r.t. reference coordinate j
    double a11 = 0, a12 = 0, a21 = 0, a22 = 0;

    double det() const { return a11 * a22 - a12 * a21; }
    Vec2 col(int j) const { return j == 0 ? Vec2{a11, a21} : Vec2{a12, a22}; }
};

// Geometry construction / pairing failures (degenerate maps, unmatched interfaces).
struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (unknown problem, missing files, invalid budgets).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kDetFloor = 1e-10;
constexpr double kGeomTol = 1e-9;

}  // namespace vns
