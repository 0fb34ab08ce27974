#include "rfslam/geometry.hpp"

#include <algorithm>
#include <limits>

namespace rfslam::geometry {

Point::Point(std::initializer_list<double> coords) {
  if (coords.size() < 2 || coords.size() > 3) {
    throw ConfigError("Point must have 2 or 3 coordinates");
  }
  dim_ = static_cast<int>(coords.size());
  std::copy(coords.begin(), coords.end(), c_.begin());
}

Point Point::zeros(int dim) {
  if (dim < 2 || dim > 3) throw ConfigError("dimension must be 2 or 3");
  Point p;
  p.dim_ = dim;
  return p;
}

Point Point::operator+(const Point& o) const {
  Point r = *this;
  r += o;
  return r;
}

Point Point::operator-(const Point& o) const {
  Point r = *this;
  r -= o;
  return r;
}

Point Point::operator*(double s) const {
  Point r = *this;
  for (int i = 0; i < dim_; ++i) r[i] *= s;
  return r;
}

Point& Point::operator+=(const Point& o) {
  for (int i = 0; i < dim_; ++i) (*this)[i] += o[i];
  return *this;
}

Point& Point::operator-=(const Point& o) {
  for (int i = 0; i < dim_; ++i) (*this)[i] -= o[i];
  return *this;
}

double Point::dot(const Point& o) const {
  double acc = 0.0;
  for (int i = 0; i < dim_; ++i) acc += (*this)[i] * o[i];
  return acc;
}

bool Point::finite() const {
  for (int i = 0; i < dim_; ++i) {
    if (!std::isfinite((*this)[i])) return false;
  }
  return true;
}

double distance(const Point& a, const Point& b) { return (a - b).norm(); }

namespace {

Point cross(const Point& a, const Point& b) {
  return Point{a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
               a[0] * b[1] - a[1] * b[0]};
}

Wall make_wall(const Point& origin, const Point& normal,
               std::span<const Point> corners, double gamma) {
  Wall w{origin, normal, {}, gamma};
  const int tdim = origin.dim() - 1;
  std::array<double, 2> lo{std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity()};
  std::array<double, 2> hi{-lo[0], -lo[1]};
  for (const Point& c : corners) {
    const auto uv = w.local(c);
    for (int k = 0; k < tdim; ++k) {
      lo[k] = std::min(lo[k], uv[k]);
      hi[k] = std::max(hi[k], uv[k]);
    }
  }
  for (int k = 0; k < tdim; ++k) {
    w.extents.push_back(lo[k]);
    w.extents.push_back(hi[k]);
  }
  return w;
}

}  // namespace

std::array<Point, 2> tangent_frame(const Point& n) {
  if (n.dim() == 2) {
    return {Point{-n[1], n[0]}, Point::zeros(2)};
  }
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(n[i]) < std::abs(n[k])) k = i;
  }
  Point axis = Point::zeros(3);
  axis[k] = 1.0;
  Point t1 = cross(n, axis);
  t1 = t1 * (1.0 / t1.norm());
  return {t1, cross(n, t1)};
}

double Wall::signed_distance(const Point& p) const {
  return (p - origin).dot(normal);
}

std::array<double, 2> Wall::local(const Point& p) const {
  const auto frame = tangent_frame(normal);
  const Point d = p - origin;
  return {d.dot(frame[0]), dim() == 3 ? d.dot(frame[1]) : 0.0};
}

bool Wall::patch_contains(const Point& p, double tol) const {
  const auto uv = local(p);
  const int tdim = dim() - 1;
  for (int k = 0; k < tdim; ++k) {
    const auto i = static_cast<std::size_t>(2 * k);
    if (uv[static_cast<std::size_t>(k)] < extents[i] - tol ||
        uv[static_cast<std::size_t>(k)] > extents[i + 1] + tol) {
      return false;
    }
  }
  return true;
}

void Wall::validate() const {
  if (origin.dim() != normal.dim()) throw ConfigError("wall: dimension mismatch");
  if (std::abs(normal.norm() - 1.0) > 1e-12) {
    throw ConfigError("wall: normal must have unit length");
  }
  if (extents.size() != static_cast<std::size_t>(2 * (dim() - 1))) {
    throw ConfigError("wall: wrong number of extents");
  }
  for (std::size_t k = 0; k + 1 < extents.size(); k += 2) {
    if (!(extents[k] < extents[k + 1])) throw ConfigError("wall: empty patch");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("wall: reflection coefficient must lie in (0, 1]");
  }
}

bool Scene::contains(const Point& p, double margin) const {
  return std::all_of(walls.begin(), walls.end(), [&](const Wall& w) {
    return w.signed_distance(p) > margin;
  });
}

void Scene::validate() const {
  if (dim != 2 && dim != 3) throw ConfigError("scene: dim must be 2 or 3");
  if (walls.size() < static_cast<std::size_t>(dim + 1)) {
    throw ConfigError("scene: too few walls for an enclosure");
  }
  if (anchor.dim() != dim || !anchor.finite()) {
    throw ConfigError("scene: anchor dimension mismatch");
  }
  for (const Wall& w : walls) {
    if (w.dim() != dim) throw ConfigError("scene: wall dimension mismatch");
    w.validate();
  }
  if (!contains(anchor)) {
    throw ConfigError("scene: anchor must lie strictly inside the enclosure");
  }
}

std::array<Point, 2> Scene::bounds() const {
  // Walls bound a convex region; for the axis-aligned presets the patch
  // origins and extents span the box, so sample the patch corners.
  Point lo = Point::zeros(dim), hi = Point::zeros(dim);
  for (int i = 0; i < dim; ++i) {
    lo[i] = std::numeric_limits<double>::infinity();
    hi[i] = -std::numeric_limits<double>::infinity();
  }
  for (const Wall& w : walls) {
    const auto frame = tangent_frame(w.normal);
    const int ncorner = dim == 2 ? 2 : 4;
    for (int c = 0; c < ncorner; ++c) {
      Point p = w.origin + frame[0] * w.extents[static_cast<std::size_t>(c & 1)];
      if (dim == 3) p += frame[1] * w.extents[static_cast<std::size_t>(2 + (c >> 1))];
      for (int i = 0; i < dim; ++i) {
        lo[i] = std::min(lo[i], p[i]);
        hi[i] = std::max(hi[i], p[i]);
      }
    }
  }
  return {lo, hi};
}

double Scene::diagonal() const {
  const auto b = bounds();
  return distance(b[0], b[1]);
}

Scene Scene::rectangle(const Point& lo, const Point& hi, const Point& anchor,
                       double gamma) {
  Scene s;
  s.dim = 2;
  s.anchor = anchor;
  const Point c00 = lo, c10{hi[0], lo[1]}, c01{lo[0], hi[1]}, c11 = hi;
  const Point corners_x0[] = {c00, c01}, corners_x1[] = {c10, c11};
  const Point corners_y0[] = {c00, c10}, corners_y1[] = {c01, c11};
  s.walls.push_back(make_wall(c00, Point{1, 0}, corners_x0, gamma));
  s.walls.push_back(make_wall(c10, Point{-1, 0}, corners_x1, gamma));
  s.walls.push_back(make_wall(c00, Point{0, 1}, corners_y0, gamma));
  s.walls.push_back(make_wall(c01, Point{0, -1}, corners_y1, gamma));
  s.validate();
  return s;
}

Scene Scene::box(const Point& lo, const Point& hi, const Point& anchor,
                 double gamma) {
  Scene s;
  s.dim = 3;
  s.anchor = anchor;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Point origin = lo;
      Point normal = Point::zeros(3);
      origin[axis] = side == 0 ? lo[axis] : hi[axis];
      normal[axis] = side == 0 ? 1.0 : -1.0;
      const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
      std::array<Point, 4> corners;
      for (int c = 0; c < 4; ++c) {
        Point p = origin;
        p[a1] = (c & 1) ? hi[a1] : lo[a1];
        p[a2] = (c & 2) ? hi[a2] : lo[a2];
        corners[static_cast<std::size_t>(c)] = p;
      }
      s.walls.push_back(make_wall(origin, normal, corners, gamma));
    }
  }
  s.validate();
  return s;
}

Point mirror_point(const Point& p, const Wall& w) {
  return p - w.normal * (2.0 * (p - w.origin).dot(w.normal));
}

std::vector<ImageSource> image_sources(const Scene& scene, int max_bounce) {
  if (max_bounce < 1 || max_bounce > 2) {
    throw ConfigError("image_sources: max_bounce must be 1 or 2");
  }
  const int nw = static_cast<int>(scene.walls.size());
  std::vector<ImageSource> out;
  for (int i = 0; i < nw; ++i) {
    out.push_back({mirror_point(scene.anchor, scene.walls[static_cast<std::size_t>(i)]), {i}});
  }
  if (max_bounce == 2) {
    for (int i = 0; i < nw; ++i) {
      const Point first = out[static_cast<std::size_t>(i)].position;
      for (int j = 0; j < nw; ++j) {
        if (j == i) continue;
        out.push_back({mirror_point(first, scene.walls[static_cast<std::size_t>(j)]), {i, j}});
      }
    }
  }
  return out;
}

std::vector<Point> distinct_positions(std::span<const ImageSource> images,
                                      double tol) {
  std::vector<Point> out;
  for (const ImageSource& im : images) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](const Point& p) {
      return distance(p, im.position) <= tol;
    });
    if (!seen) out.push_back(im.position);
  }
  return out;
}

namespace {

// Unfolds the path; returns false (and leaves `points` partial) on failure.
bool unfold(const Scene& scene, const Point& user, const Point& va,
            std::span<const int> walls, std::vector<Point>* points) {
  const std::size_t k = walls.size();
  if (k == 0) return false;
  std::vector<Point> images(k + 1);
  images[k] = va;
  for (std::size_t i = k; i > 0; --i) {
    images[i - 1] = mirror_point(images[i], scene.walls.at(static_cast<std::size_t>(walls[i - 1])));
  }
  if (distance(images[0], scene.anchor) > 1e-7) return false;

  std::vector<Point> refl(k);
  Point p = user;
  for (std::size_t i = k; i > 0; --i) {
    const Wall& w = scene.walls.at(static_cast<std::size_t>(walls[i - 1]));
    const double sp = w.signed_distance(p);
    const double si = w.signed_distance(images[i]);
    if (!(sp > 0.0) || !(si < 0.0)) return false;
    const double t = sp / (sp - si);
    const Point r = p + (images[i] - p) * t;
    if (!w.patch_contains(r)) return false;
    // The reflection point must also be inside (or on) every other wall.
    for (const Wall& other : scene.walls) {
      if (&other != &w && other.signed_distance(r) < -1e-9) return false;
    }
    refl[i - 1] = r;
    p = r;
  }
  if (points) *points = std::move(refl);
  return true;
}

}  // namespace

bool validate_path(const Scene& scene, const Point& user, const Point& va,
                   std::span<const int> walls) {
  return unfold(scene, user, va, walls, nullptr);
}

std::vector<Point> reflection_points(const Scene& scene, const Point& user,
                                     const Point& va,
                                     std::span<const int> walls) {
  std::vector<Point> pts;
  if (!unfold(scene, user, va, walls, &pts)) {
    throw NumericalError("reflection_points: path does not validate");
  }
  return pts;
}

double tof(const Point& a, const Point& b) {
  if (a.dim() != b.dim()) throw ConfigError("tof: dimension mismatch");
  return distance(a, b) / kSpeedOfLight;
}

Isometry Isometry::identity(int dim) {
  Isometry t;
  t.dim_ = dim;
  t.t_ = Point::zeros(dim);
  for (int i = 0; i < dim; ++i) t.r_[static_cast<std::size_t>(4 * i)] = 1.0;
  return t;
}

Isometry::Isometry(int dim, std::span<const double> rotation,
                   const Point& translation)
    : t_(translation), dim_(dim) {
  if (dim < 2 || dim > 3 || translation.dim() != dim ||
      rotation.size() != static_cast<std::size_t>(dim * dim)) {
    throw ConfigError("Isometry: inconsistent dimensions");
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      r_[static_cast<std::size_t>(3 * i + j)] = rotation[static_cast<std::size_t>(dim * i + j)];
    }
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      double acc = 0.0;
      for (int k = 0; k < dim; ++k) acc += r(k, i) * r(k, j);
      if (std::abs(acc - (i == j ? 1.0 : 0.0)) > 1e-10) {
        throw ConfigError("Isometry: rotation block is not orthogonal");
      }
    }
  }
}

Isometry Isometry::rotation_2d(double angle, const Point& translation) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double r[] = {c, -s, s, c};
  return Isometry(2, r, translation);
}

double Isometry::determinant() const {
  if (dim_ == 2) return r(0, 0) * r(1, 1) - r(0, 1) * r(1, 0);
  return r(0, 0) * (r(1, 1) * r(2, 2) - r(1, 2) * r(2, 1)) -
         r(0, 1) * (r(1, 0) * r(2, 2) - r(1, 2) * r(2, 0)) +
         r(0, 2) * (r(1, 0) * r(2, 1) - r(1, 1) * r(2, 0));
}

Point Isometry::rotate(const Point& v) const {
  if (v.dim() != dim_) throw ConfigError("Isometry: dimension mismatch");
  Point out = Point::zeros(dim_);
  for (int i = 0; i < dim_; ++i) {
    double acc = 0.0;
    for (int j = 0; j < dim_; ++j) acc += r(i, j) * v[j];
    out[i] = acc;
  }
  return out;
}

Point Isometry::apply(const Point& p) const { return rotate(p) + t_; }

Isometry Isometry::compose(const Isometry& inner) const {
  if (inner.dim_ != dim_) throw ConfigError("Isometry: dimension mismatch");
  Isometry out;
  out.dim_ = dim_;
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) {
      double acc = 0.0;
      for (int k = 0; k < dim_; ++k) acc += r(i, k) * inner.r(k, j);
      out.r_[static_cast<std::size_t>(3 * i + j)] = acc;
    }
  }
  out.t_ = rotate(inner.t_) + t_;
  return out;
}

Isometry Isometry::inverse() const {
  Isometry out;
  out.dim_ = dim_;
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < dim_; ++j) out.r_[static_cast<std::size_t>(3 * i + j)] = r(j, i);
  }
  out.t_ = out.rotate(t_) * -1.0;
  return out;
}

Point apply_isometry(const Isometry& t, const Point& p) { return t.apply(p); }

}  // namespace rfslam::geometry
