#pragma once
// Specular-reflection geometry: points, planar wall patches, scenes, mirror
// images of the anchor, path validation and isometries.

#include <array>
#include <cmath>
#include <initializer_list>
#include <span>
#include <vector>

#include "rfslam/common.hpp"

namespace rfslam::geometry {

// A point or vector in 2 or 3 dimensions (meters).
class Point {
 public:
  Point() = default;
  Point(std::initializer_list<double> coords);
  static Point zeros(int dim);

  int dim() const { return dim_; }
  double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }
  std::span<const double> coords() const {
    return {c_.data(), static_cast<std::size_t>(dim_)};
  }

  Point operator+(const Point& o) const;
  Point operator-(const Point& o) const;
  Point operator*(double s) const;
  Point& operator+=(const Point& o);
  Point& operator-=(const Point& o);
  bool operator==(const Point& o) const = default;

  double dot(const Point& o) const;
  double norm() const { return std::sqrt(dot(*this)); }
  bool finite() const;

 private:
  std::array<double, 3> c_{};
  int dim_ = 0;
};

inline Point operator*(double s, const Point& p) { return p * s; }

double distance(const Point& a, const Point& b);

// Planar reflecting patch. The normal points into the room. `extents` bound
// the patch in the wall's tangent frame: [s_min, s_max] in 2D, and
// [u_min, u_max, v_min, v_max] in 3D, measured from `origin`.
struct Wall {
  Point origin;
  Point normal;
  std::vector<double> extents;
  double gamma = 0.7;

  int dim() const { return origin.dim(); }
  double signed_distance(const Point& p) const;
  // Tangent-frame coordinates of p (projected onto the plane).
  std::array<double, 2> local(const Point& p) const;
  bool patch_contains(const Point& p, double tol = 1e-9) const;
  void validate() const;
};

// Tangent basis of a wall plane: t1 (and t2 in 3D).
std::array<Point, 2> tangent_frame(const Point& normal);

struct Scene {
  std::vector<Wall> walls;
  Point anchor;
  int dim = 2;

  // Strictly inside every wall half-space by more than `margin`.
  bool contains(const Point& p, double margin = 0.0) const;
  // Checks unit normals, nonempty patches and that the anchor is inside.
  void validate() const;
  // Axis-aligned bounding box of the room: {lo, hi}.
  std::array<Point, 2> bounds() const;
  double diagonal() const;

  // Axis-aligned rectangle / box with full-face walls.
  static Scene rectangle(const Point& lo, const Point& hi, const Point& anchor,
                         double gamma = 0.7);
  static Scene box(const Point& lo, const Point& hi, const Point& anchor,
                   double gamma = 0.7);
};

Point mirror_point(const Point& p, const Wall& w);

struct ImageSource {
  Point position;
  std::vector<int> walls;  // reflection order: anchor -> walls[0] -> ... -> user
};

// All mirror images of the anchor over wall sequences of length 1..max_bounce
// without immediate repeats, ordered by length and then lexicographically.
std::vector<ImageSource> image_sources(const Scene& scene, int max_bounce);

// Distinct image positions (first occurrence wins), in image_sources order.
std::vector<Point> distinct_positions(std::span<const ImageSource> images,
                                      double tol = 1e-9);

// True iff the specular path from the anchor via `walls` to `user`, unfolded
// as the straight segment user -> va, reflects inside every wall patch in order.
bool validate_path(const Scene& scene, const Point& user, const Point& va,
                   std::span<const int> walls);

// Reflection points of a validated path, ordered from the anchor side.
std::vector<Point> reflection_points(const Scene& scene, const Point& user,
                                     const Point& va, std::span<const int> walls);

double tof(const Point& a, const Point& b);

// p -> R p + t with R orthogonal.
class Isometry {
 public:
  Isometry() = default;
  static Isometry identity(int dim);
  // Row-major rotation block; throws if not orthogonal to 1e-10.
  Isometry(int dim, std::span<const double> rotation, const Point& translation);
  static Isometry rotation_2d(double angle, const Point& translation);

  int dim() const { return dim_; }
  double r(int i, int j) const { return r_[static_cast<std::size_t>(3 * i + j)]; }
  const Point& translation() const { return t_; }
  double determinant() const;

  Point apply(const Point& p) const;
  // Rotation only (for directions).
  Point rotate(const Point& v) const;
  Isometry compose(const Isometry& inner) const;  // this o inner
  Isometry inverse() const;

 private:
  std::array<double, 9> r_{};
  Point t_;
  int dim_ = 0;
};

Point apply_isometry(const Isometry& t, const Point& p);

}  // namespace rfslam::geometry
