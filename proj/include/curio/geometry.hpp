#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace curio {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2& a) { return std::sqrt(dot(a, a)); }
inline double dist(const Vec2& a, const Vec2& b) { return norm(a - b); }

inline Vec2 rotated(const Vec2& v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline Vec2 normalized(const Vec2& v) {
    const double n = norm(v);
    return n > 0.0 ? Vec2{v.x / n, v.y / n} : Vec2{0.0, 0.0};
}

inline double wrap_angle(double a) {
    while (a > M_PI) a -= 2.0 * M_PI;
    while (a < -M_PI) a += 2.0 * M_PI;
    return a;
}

// Axis-aligned rectangle, used for the room. Interior is x in [xmin,xmax],
// y in [ymin,ymax].
struct Rect {
    double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;

    double width() const { return xmax - xmin; }
    double height() const { return ymax - ymin; }
    double diagonal() const { return std::hypot(width(), height()); }
    bool contains(const Vec2& p) const {
        return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
    }
    Vec2 clamped(const Vec2& p, double margin) const {
        return {std::clamp(p.x, xmin + margin, xmax - margin),
                std::clamp(p.y, ymin + margin, ymax - margin)};
    }
};

// First hit of the ray origin + t*dir (t > 0) against a circle.
inline std::optional<double> ray_circle(const Vec2& origin, const Vec2& dir,
                                        const Vec2& center, double radius) {
    const Vec2 oc = origin - center;
    const double a = dot(dir, dir);
    const double b = 2.0 * dot(oc, dir);
    const double c = dot(oc, oc) - radius * radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0 || a == 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    const double t1 = (-b - sq) / (2.0 * a);
    const double t2 = (-b + sq) / (2.0 * a);
    if (t1 > 1e-12) return t1;
    if (t2 > 1e-12) return t2;
    return std::nullopt;
}

// Distance along a unit ray from a point inside the rectangle to its walls.
inline double ray_rect_inside(const Vec2& origin, const Vec2& dir, const Rect& r) {
    double best = std::numeric_limits<double>::infinity();
    if (dir.x > 1e-15) best = std::min(best, (r.xmax - origin.x) / dir.x);
    if (dir.x < -1e-15) best = std::min(best, (r.xmin - origin.x) / dir.x);
    if (dir.y > 1e-15) best = std::min(best, (r.ymax - origin.y) / dir.y);
    if (dir.y < -1e-15) best = std::min(best, (r.ymin - origin.y) / dir.y);
    return best;
}

}  // namespace curio
