#pragma once

#include <algorithm>
#include <cmath>

namespace fedtraj {

struct vec2 {
  double x = 0.0;
  double y = 0.0;

  friend vec2 operator+(vec2 a, vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend vec2 operator-(vec2 a, vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend vec2 operator*(double s, vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(vec2 a, vec2 b) { return a.x == b.x && a.y == b.y; }
};

inline double dot(vec2 a, vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(vec2 a) { return std::sqrt(dot(a, a)); }
inline double distance(vec2 a, vec2 b) { return norm(a - b); }

inline vec2 lerp(vec2 a, vec2 b, double t) { return a + t * (b - a); }

// Clamped projection ratio of p onto segment [a,b]; 0 for degenerate segments.
inline double project_ratio(vec2 p, vec2 a, vec2 b) {
  const vec2 d = b - a;
  const double len2 = dot(d, d);
  if (len2 <= 0.0) return 0.0;
  return std::clamp(dot(p - a, d) / len2, 0.0, 1.0);
}

inline double point_segment_distance(vec2 p, vec2 a, vec2 b) {
  return distance(p, lerp(a, b, project_ratio(p, a, b)));
}

// Local equirectangular projection to planar meters around a reference
// latitude; good enough at desk scale, keeps all geometry Euclidean.
struct equirectangular {
  double ref_lat_deg = 0.0;
  static constexpr double earth_radius_m = 6371000.0;

  vec2 to_meters(double lat_deg, double lng_deg) const {
    const double rad = std::acos(-1.0) / 180.0;
    return {earth_radius_m * lng_deg * rad * std::cos(ref_lat_deg * rad),
            earth_radius_m * lat_deg * rad};
  }
};

}  // namespace fedtraj
