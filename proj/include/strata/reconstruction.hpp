#pragma once

// Turns trajectory bundles into iso-contours, triangulated surfaces,
// extrapolated contour predictions and precision/recall scores, plus the
// synthetic ground-truth scene generator.

#include <map>
#include <string>
#include <vector>

#include "strata/geometry.hpp"
#include "strata/morphing.hpp"

namespace strata {

// A bundle positioned in elevation: level 0 at z_top, level L at z_bottom.
// Trajectory points are physical (meters).
struct ElevatedBundle {
    TrajectoryBundle bundle;
    double z_top = 0.0;
    double z_bottom = 0.0;
};

// Converts a grid-frame bundle to physical coordinates and attaches the
// elevation interval.
ElevatedBundle elevate_bundle(const TrajectoryBundle& grid_bundle, double z_top,
                              double z_bottom);

// Iso-contours of constant elevation, one closed contour per trajectory ring.
// Depths must lie within [z_bottom, z_top]; physical frame output.
std::vector<Contour> iso_contours(const ElevatedBundle& eb,
                                  const std::vector<double>& depths_abs,
                                  std::vector<double>* out_depth_of = nullptr);

struct SurfaceMesh {
    std::vector<std::array<double, 3>> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::string geozone;

    double surface_area() const;
    // Divergence-theorem volume of the ring stack (caps contribute nothing).
    double volume() const;
};

// Lateral triangle strips between consecutive rings of equal point count;
// quads split along the shorter diagonal. `rings[l]` is the closed ring at
// level l with vertex elevations `z[l]`.
SurfaceMesh triangulate(const std::vector<std::vector<Vec2>>& rings,
                        const std::vector<double>& z);

// Mesh for every ring of a bundle stack.
SurfaceMesh triangulate_bundle(const ElevatedBundle& eb);

// Linear extrapolation below the bundle's last level using each trajectory's
// terminal segment direction. depth_below in (0, 10] m beyond z_bottom.
// Self-intersections are resolved by dropping loop knots.
std::vector<Contour> predict_contour(const ElevatedBundle& eb, double depth_below,
                                     bool* degenerate = nullptr);

struct PrIn {
    std::vector<Contour> predicted;
    std::vector<Contour> truth;
};

struct PrRow {
    double precision = 0.0;  // area-weighted over predicted regions
    double recall = 0.0;     // area-weighted over truth regions
    double pred_area = 0.0;  // m^2, for pooled aggregation across scenes
    double truth_area = 0.0;
    bool empty_truth = false;
    bool empty_prediction = false;
};

// Region precision/recall on a shared evaluation raster.
PrRow precision_recall(const std::vector<Contour>& predicted,
                       const std::vector<Contour>& truth, double raster_m);

// ---- Synthetic scene generation ---------------------------------------------

struct SceneSpec {
    std::string primitive;      // tilted-ellipsoid | bent-slab | twin-merge | split-lobe
    double z_top = 690.0;       // elevation of the first bench [m]
    int n_benches = 6;
    double bench_height = 10.0;
    double extent = 200.0;      // side of the sampled square [m]
    double hex_spacing = 5.0;   // lattice pitch [m]
    double jitter_sigma = 0.5;  // positional noise [m]
    double dropout = 0.05;      // fraction of lattice sites omitted

    // Primitive geometry
    double radius_xy = 40.0;    // ellipsoid semi-axis in x [m]
    double aspect = 0.8;        // y semi-axis = aspect * radius_xy
    double radius_z = 45.0;     // ellipsoid semi-axis in z [m]
    double slope = 0.8;         // lateral drift per meter of depth
    double slab_width = 30.0;
    double bend_amp = 12.0;
    double bend_wavelength = 130.0;
    double slab_xfrac = 0.42;   // half-length as a fraction of extent; > 0.5 crosses the window
    double lobe_radius = 26.0;
    double lobe_separation = 70.0;  // center separation at z_top
    double sep_rate = 0.9;          // separation change per meter of depth
};

struct SyntheticScene {
    std::vector<SamplePoint> samples;               // all benches
    std::vector<double> bench_elevations;           // descending
    // Analytic truth at arbitrary elevation.
    std::vector<Contour> truth_contours(double z) const;
    double truth_area(double z) const;

    SceneSpec spec;
    // Implicit volume: f(x, y, z) > 0 inside the g1 region.
    double implicit(double x, double y, double z) const;
};

SyntheticScene generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed);

}  // namespace strata
