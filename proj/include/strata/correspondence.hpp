#pragma once

// Associates source regions (upper cross-section) with target regions (lower
// cross-section) and estimates per-source translations that maximize
// constrained overlap. Alignment works on rasterized masks and signed
// distance value maps; shift search is FFT cross-correlation.

#include <optional>
#include <vector>

#include "strata/geometry.hpp"

namespace strata {

// Region summary shared by association and alignment.
struct RegionShape {
    int id = 0;
    Contour contour_physical;
    double area = 0.0;   // m^2
    Vec2 centroid;       // m
    double span = 0.0;   // sqrt(area/pi), m
};

RegionShape make_region_shape(int id, const Contour& contour_physical);

struct AssociationModel {
    std::vector<double> d_min;  // per-source nearest target distance [m]
    double mu_dmin = 0.0;
    double sigma_dmin = 0.0;
    double s_dmin = 0.0;        // standard error
    double nu = 2.0;            // in [2, 4]
    double mu_lower = 0.0;      // anticipated lateral movement [m]
    std::vector<double> lambda; // per-source association radius [m]
};

// Distance statistics over centroid-to-centroid source/target distances and
// the derived noise parameter.
AssociationModel compute_dmin_stats(const std::vector<RegionShape>& sources,
                                    const std::vector<RegionShape>& targets,
                                    double mu_lower);

// Unnormalized association likelihood of physical location x for source s.
double association_likelihood(const Vec2& x, const RegionShape& source,
                              const AssociationModel& model, int source_index);

struct AssociationMatrix {
    int n_sources = 0;
    int n_targets = 0;
    std::vector<std::uint8_t> a;  // row-major [s * n_targets + t]

    std::uint8_t& at(int s, int t) { return a[std::size_t(s) * n_targets + t]; }
    std::uint8_t at(int s, int t) const { return a[std::size_t(s) * n_targets + t]; }
};

// A(s,t) = 1 iff the area-ratio percentile of the source likelihood over the
// target's interior pixels reaches 0.5. Percentiles use linear interpolation
// on sorted values.
AssociationMatrix build_association_matrix(const std::vector<RegionShape>& sources,
                                           const std::vector<RegionShape>& targets,
                                           const AssociationModel& model,
                                           const GridFrame& frame);

// Linear-interpolated percentile (k in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double k);

// Full cross-correlation surface r[m] = sum_i u[i] * v[i + m] via padded FFTs.
// Lag (0,0) sits at index (nx-1, ny-1) of the returned grid.
ScalarGrid cross_correlate_fft(const ScalarGrid& source_mask, const ScalarGrid& value_map);

struct DisplacementEstimate {
    int source_id = 0;
    std::array<int, 2> shift_px{0, 0};
    Vec2 shift_m;
    double score = 0.0;
    bool constrained = false;
    bool straddles = false;  // shifted mask overlaps two or more targets
};

// Peak of the correlation surface over admissible lags (mask support must stay
// inside the frame). Ties break toward the smallest shift norm, then
// lexicographically.
DisplacementEstimate estimate_shift(const ScalarGrid& source_mask,
                                    const ScalarGrid& value_map);

struct Port {
    int source_id = 0;
    double begin = 0.0;  // radians, sector [begin, begin + width) about centroid
    double width = 0.0;
};

// Contiguous angular sectors about the target centroid, widths proportional
// to source areas, arranged to minimize total circular deviation from the
// source bearings. Exhaustive over circular orderings up to 6 sources.
std::vector<Port> allocate_ports(const RegionShape& target,
                                 const std::vector<RegionShape>& sources);

struct AlignmentConfig {
    double penalty = -1.0e6;
    double reward_scale = 2.0;      // reward = scale * max(target SDF)
    double corridor_width_px = 10.0;
    double prune_overlap_fraction = 0.01;
    int grid_target_px = 240;
    int grid_margin_px = 16;
};

// Shared raster workspace for one source/target family.
struct AlignmentScene {
    GridFrame frame;
    std::vector<RegionShape> sources;
    std::vector<RegionShape> targets;
    std::vector<std::vector<std::uint8_t>> source_masks;  // rasterized interiors
    std::vector<std::vector<std::uint8_t>> target_masks;
    std::vector<ScalarGrid> target_sdfs;
};

AlignmentScene build_alignment_scene(const std::vector<RegionShape>& sources,
                                     const std::vector<RegionShape>& targets,
                                     const AlignmentConfig& cfg);

// Multiple sources sharing one target: sector penalties keep each source in
// its own port. Returns estimates in input order.
std::vector<DisplacementEstimate> align_multi_source_single_target(
    const AlignmentScene& scene, const std::vector<int>& source_idx, int target_idx,
    const AlignmentConfig& cfg);

// One source associated with several targets: composite value map with a
// corridor reward promotes straddling.
DisplacementEstimate align_single_source_multi_target(const AlignmentScene& scene,
                                                      int source_idx,
                                                      const std::vector<int>& target_idx,
                                                      const AlignmentConfig& cfg);

struct Subtree {
    int root_source = 0;
    std::vector<int> targets;                   // t-nodes connected to the root
    std::vector<std::vector<int>> co_sources;   // per-target other s-nodes
};

struct AssociationResult {
    AssociationMatrix pruned;
    std::vector<Subtree> subtrees;
    std::vector<DisplacementEstimate> displacements;  // one per source
    std::vector<std::array<int, 2>> pruned_edges;     // (s, t) removed for zero overlap
};

// Decomposes the association graph into one subtree per source, applies the
// per-scenario alignment strategy (largest source first) and prunes edges
// whose realized overlap stays below the configured fraction.
AssociationResult decompose_and_align(const AssociationMatrix& a,
                                      const std::vector<RegionShape>& sources,
                                      const std::vector<RegionShape>& targets,
                                      const AlignmentConfig& cfg);

}  // namespace strata
