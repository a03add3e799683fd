#pragma once

#include <cmath>
#include <numbers>

namespace hyprap {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 &operator+=(const Vec2 &o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2 &operator-=(const Vec2 &o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr Vec2 &operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }

  friend constexpr Vec2 operator+(Vec2 a, const Vec2 &b) { return a += b; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2 &b) { return a -= b; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return a *= s; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return a *= s; }
  friend constexpr Vec2 operator-(const Vec2 &a) { return {-a.x, -a.y}; }
  friend constexpr bool operator==(const Vec2 &, const Vec2 &) = default;
};

constexpr double dot(const Vec2 &a, const Vec2 &b) { return a.x * b.x + a.y * b.y; }
constexpr double squared_norm(const Vec2 &a) { return dot(a, a); }
inline double norm(const Vec2 &a) { return std::hypot(a.x, a.y); }
inline double distance(const Vec2 &a, const Vec2 &b) { return norm(a - b); }

/// Maps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::remainder(a, two_pi); // [-pi, pi]
  if (w <= -std::numbers::pi) {
    w += two_pi;
  }
  return w;
}

struct Bounds {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 20.0;
  double y_max = 20.0;

  bool contains(const Vec2 &p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

/// Mirror-folds a coordinate into [lo, hi], as a ball bouncing between two walls.
inline double fold_into(double v, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0.0) {
    return lo;
  }
  double r = std::fmod(v - lo, 2.0 * span);
  if (r < 0.0) {
    r += 2.0 * span;
  }
  return r <= span ? lo + r : hi - (r - span);
}

inline Vec2 fold_into(const Vec2 &p, const Bounds &b) {
  return {fold_into(p.x, b.x_min, b.x_max), fold_into(p.y, b.y_min, b.y_max)};
}

} // namespace hyprap
