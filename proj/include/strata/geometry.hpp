#pragma once

// Coordinate frames, grid containers, contour primitives, signed distance
// fields and the shared numerical utilities used by every other module.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strata/common.hpp"

namespace strata {

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
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
    double norm2() const { return x * x + y * y; }
};

inline double dist(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

// A labeled observation: planar easting/northing, bench elevation, geozone.
struct SamplePoint {
    double x = 0.0;      // easting [m]
    double y = 0.0;      // northing [m]
    double z = 0.0;      // bench elevation [m]
    std::string geozone;
};

// Uniform 2D raster frame. Pixel i sits at origin + i * pixel_size; the
// continuous grid coordinate of a physical point is (p - origin)/pixel_size.
struct GridFrame {
    Vec2 origin;             // physical position of pixel (0, 0) [m]
    double pixel_size = 1.0; // [m / pixel]
    int nx = 0;
    int ny = 0;
    int margin = 0;          // pixels of padding included in nx/ny

    bool valid() const { return pixel_size > 0.0 && nx > 0 && ny > 0; }
    bool operator==(const GridFrame& o) const {
        return origin.x == o.origin.x && origin.y == o.origin.y &&
               pixel_size == o.pixel_size && nx == o.nx && ny == o.ny;
    }
};

Vec2 world_to_grid(const Vec2& p, const GridFrame& frame);
Vec2 grid_to_world(const Vec2& g, const GridFrame& frame);
// Nearest-pixel index of a physical point.
std::array<int, 2> world_to_index(const Vec2& p, const GridFrame& frame);

// Frame that covers the given physical points with `margin` pixels of padding,
// with the longer side of the data extent mapped to `target_px` pixels.
GridFrame fit_frame(const std::vector<Vec2>& points, int target_px, int margin);

enum class FrameTag { Physical, Grid };

// Closed polygon of ordered control points. Consecutive duplicates are not
// allowed on closed contours.
struct Contour {
    std::vector<Vec2> points;
    bool closed = true;
    FrameTag frame = FrameTag::Physical;

    std::size_t size() const { return points.size(); }
    const Vec2& operator[](std::size_t i) const { return points[i]; }
    Vec2& operator[](std::size_t i) { return points[i]; }

    double perimeter() const;
    bool is_simple() const;  // no self intersections
};

Contour contour_to_grid(const Contour& c, const GridFrame& frame);
Contour contour_to_world(const Contour& c, const GridFrame& frame);

struct ScalarGrid {
    GridFrame frame;
    std::vector<double> values;  // row-major, index = iy * nx + ix

    ScalarGrid() = default;
    ScalarGrid(const GridFrame& f, double fill = 0.0)
        : frame(f), values(std::size_t(f.nx) * f.ny, fill) {}

    double& at(int ix, int iy) { return values[std::size_t(iy) * frame.nx + ix]; }
    double at(int ix, int iy) const { return values[std::size_t(iy) * frame.nx + ix]; }
    bool in_bounds(int ix, int iy) const {
        return ix >= 0 && iy >= 0 && ix < frame.nx && iy < frame.ny;
    }
    // Bilinear sample at continuous grid coordinates, clamped to the border.
    double sample(double gx, double gy) const;
    double max_abs() const;
};

struct VectorGrid {
    GridFrame frame;
    std::vector<double> u, v;

    VectorGrid() = default;
    explicit VectorGrid(const GridFrame& f)
        : frame(f), u(std::size_t(f.nx) * f.ny, 0.0), v(std::size_t(f.nx) * f.ny, 0.0) {}

    Vec2 at(int ix, int iy) const {
        std::size_t k = std::size_t(iy) * frame.nx + ix;
        return {u[k], v[k]};
    }
    Vec2 sample(double gx, double gy) const;
};

// ---- Polygon measures -------------------------------------------------------

struct AreaCentroid {
    double area = 0.0;   // absolute area
    Vec2 centroid;
    double span = 0.0;   // sqrt(area / pi)
};

// Shoelace area, area centroid and equivalent-disc span of a closed simple
// contour. Throws DegenerateContour below 1e-12 area.
AreaCentroid polygon_area_centroid(const Contour& c);

// Winding-independent even-odd point-in-polygon test.
bool point_in_polygon(const Vec2& p, const Contour& c);

// Signed area (positive for counter-clockwise orientation).
double signed_area(const Contour& c);

// Returns a copy wound counter-clockwise.
Contour ensure_ccw(const Contour& c);

// ---- Resampling -------------------------------------------------------------

// n points uniformly spaced in arc length, starting from the northernmost
// vertex (ties broken by smallest x), preserving orientation.
Contour resample_contour(const Contour& c, int n);

// Point at arc-length fraction t in [0, 1) measured around the closed contour
// from vertex 0.
Vec2 point_at_arc_fraction(const Contour& c, double t);

// ---- Signed distance --------------------------------------------------------

// Euclidean signed distance to the contour sampled at every pixel center of
// `frame`; positive inside, negative outside. The contour must be closed,
// simple and expressed in grid coordinates of `frame`. Exact distance to the
// polygon's point-segment set (bucketed search over segments).
ScalarGrid signed_distance(const Contour& contour, const GridFrame& frame);

// Unsigned exact distance from every pixel center to a set of segments.
// Shared by signed_distance and level-set re-initialization.
class SegmentDistanceField {
public:
    SegmentDistanceField(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                         const GridFrame& frame);
    // Distance from continuous grid point.
    double distance(const Vec2& g) const;

private:
    std::vector<Vec2> a_, b_;
    GridFrame frame_;
    double cell_ = 8.0;  // bucket size in pixels
    int bnx_ = 0, bny_ = 0;
    std::vector<std::vector<int>> buckets_;
    double seg_dist(const Vec2& p, int s) const;
};

// ---- Iso-contour extraction (marching squares) ------------------------------

// Closed polylines of the level set {grid == level}, vertices in continuous
// grid coordinates with linear interpolation along cell edges. Open chains
// that terminate on the grid border are closed along the border. Deterministic
// ordering: loops sorted by their minimum vertex.
std::vector<Contour> extract_iso_contours(const ScalarGrid& grid, double level);

// ---- Rasterization ----------------------------------------------------------

// Even-odd scanline fill of a closed contour given in grid coordinates.
// Returns row-major boolean mask over the frame.
std::vector<std::uint8_t> rasterize_polygon(const Contour& c, const GridFrame& frame);

// Union fill of several contours (even-odd within each, OR across contours).
std::vector<std::uint8_t> rasterize_polygons(const std::vector<Contour>& cs, const GridFrame& frame);

// ---- Misc -------------------------------------------------------------------

std::vector<Vec2> convex_hull(std::vector<Vec2> pts);

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

// Largest distance from any point of `pts` to the closed polyline `c`
// (one-sided; used for interface-vs-contour comparisons).
double max_distance_to_contour(const std::vector<Vec2>& pts, const Contour& c);

}  // namespace strata
