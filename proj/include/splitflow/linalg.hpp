#pragma once

#include <array>
#include <cmath>

namespace splitflow {

// Plane vectors and 2x2 matrices. Everything in this library lives in R^2,
// so fixed-size value types are all we need.

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    constexpr Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
    constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
    friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};

constexpr Vec2 operator+(Vec2 a, const Vec2& b) { return a += b; }
constexpr Vec2 operator-(Vec2 a, const Vec2& b) { return a -= b; }
constexpr Vec2 operator-(const Vec2& a) { return {-a.x, -a.y}; }
constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }

constexpr double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
constexpr double norm2(const Vec2& a) { return dot(a, a); }
inline double norm(const Vec2& a) { return std::hypot(a.x, a.y); }
inline bool is_finite(const Vec2& a) { return std::isfinite(a.x) && std::isfinite(a.y); }

/// Row-major 2x2 matrix [[a11, a12], [a21, a22]].
struct Mat2 {
    double a11 = 0.0, a12 = 0.0;
    double a21 = 0.0, a22 = 0.0;

    static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static constexpr Mat2 diag(double d1, double d2) { return {d1, 0.0, 0.0, d2}; }
    static constexpr Mat2 outer(const Vec2& u, const Vec2& v) {
        return {u.x * v.x, u.x * v.y, u.y * v.x, u.y * v.y};
    }

    constexpr Mat2& operator+=(const Mat2& o) {
        a11 += o.a11; a12 += o.a12; a21 += o.a21; a22 += o.a22;
        return *this;
    }
    constexpr Mat2& operator-=(const Mat2& o) {
        a11 -= o.a11; a12 -= o.a12; a21 -= o.a21; a22 -= o.a22;
        return *this;
    }
    constexpr Mat2& operator*=(double s) {
        a11 *= s; a12 *= s; a21 *= s; a22 *= s;
        return *this;
    }
    friend constexpr bool operator==(const Mat2&, const Mat2&) = default;
};

constexpr Mat2 operator+(Mat2 a, const Mat2& b) { return a += b; }
constexpr Mat2 operator-(Mat2 a, const Mat2& b) { return a -= b; }
constexpr Mat2 operator*(double s, Mat2 a) { return a *= s; }
constexpr Mat2 operator*(Mat2 a, double s) { return a *= s; }

constexpr Mat2 operator*(const Mat2& a, const Mat2& b) {
    return {a.a11 * b.a11 + a.a12 * b.a21, a.a11 * b.a12 + a.a12 * b.a22,
            a.a21 * b.a11 + a.a22 * b.a21, a.a21 * b.a12 + a.a22 * b.a22};
}

constexpr Vec2 operator*(const Mat2& a, const Vec2& v) {
    return {a.a11 * v.x + a.a12 * v.y, a.a21 * v.x + a.a22 * v.y};
}

constexpr Mat2 transpose(const Mat2& a) { return {a.a11, a.a21, a.a12, a.a22}; }
constexpr double trace(const Mat2& a) { return a.a11 + a.a22; }
constexpr double det(const Mat2& a) { return a.a11 * a.a22 - a.a12 * a.a21; }
constexpr Mat2 symmetric_part(const Mat2& a) {
    const double off = 0.5 * (a.a12 + a.a21);
    return {a.a11, off, off, a.a22};
}

inline double frobenius(const Mat2& a) {
    return std::sqrt(a.a11 * a.a11 + a.a12 * a.a12 + a.a21 * a.a21 + a.a22 * a.a22);
}

inline double max_abs_diff(const Mat2& a, const Mat2& b) {
    return std::fmax(std::fmax(std::fabs(a.a11 - b.a11), std::fabs(a.a12 - b.a12)),
                     std::fmax(std::fabs(a.a21 - b.a21), std::fabs(a.a22 - b.a22)));
}

inline bool is_finite(const Mat2& a) {
    return std::isfinite(a.a11) && std::isfinite(a.a12) && std::isfinite(a.a21) &&
           std::isfinite(a.a22);
}

}  // namespace splitflow
