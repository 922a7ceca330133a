#pragma once

// Converts unordered labeled samples of one cross-section into regularized
// closed contours: clustering, entropy boundary detection, orientation-based
// gap closure, edge-map synthesis, gradient vector flow and active contours.

#include <vector>

#include "strata/geometry.hpp"

namespace strata {

// Cluster of same-geozone samples reachable through hops of length <= r.
struct Component {
    int id = 0;
    std::vector<int> sample_indices;          // indices into the section sample list
    std::vector<Vec2> positions;              // planar coordinates, same order
    std::vector<std::uint8_t> boundary_flags;     // entropy detector
    std::vector<std::uint8_t> gap_closure_flags;  // orientation analysis
};

struct SnakeParams {
    double alpha = 0.1;   // elasticity
    double beta = 0.5;    // rigidity
    double tau = 1.0;     // step size
    double force_weight = 0.3;  // external (GVF) force scale
    int points = 200;
    int max_iters = 600;
    double converge_px = 0.05;  // mean net displacement per iteration
};

struct ExtractionParams {
    double neighbor_radius = 0.0;       // meters; <= 0 selects the data-driven default
    double entropy_threshold = 0.5;     // bits
    int orient_neighbors = 12;          // K for orientation analysis
    double orient_gap = 2.0943951023931953;  // radians (2*pi/3)
    int struct_neighbors = 5;           // K nearest neighbors in edge synthesis
    int joint_neighbors = 4;            // closure-to-entropy junction links
    int grid_target_px = 240;
    int grid_margin_px = 16;
    int init_inflate_px = 8;            // bounding-box inflation for the snake seed
    double gvf_mu = 0.2;
    int gvf_iters = 400;
    double gvf_force_floor = 0.002;     // saturating normalization constant
    SnakeParams snake;
    int min_component_samples = 5;
};

// 2.2x the median nearest-neighbor spacing of the cross-section.
double default_neighbor_radius(const std::vector<Vec2>& section_points);

// Partition of same-geozone samples into distance-r connected components,
// ordered by smallest member index.
std::vector<Component> connect_components(const std::vector<Vec2>& points, double r);

// Entropy flags for component samples. Neighborhoods span samples of all
// geozones in the section; labels are encoded as integers.
std::vector<std::uint8_t> detect_boundary_samples(const Component& component,
                                                  const std::vector<Vec2>& all_points,
                                                  const std::vector<int>& all_labels,
                                                  double r, double entropy_threshold);

// Per-sample local entropy over every sample in a section (exposed for tests).
std::vector<double> local_entropy(const std::vector<Vec2>& all_points,
                                  const std::vector<int>& all_labels, double r);

// Flags samples on open outskirts: neighbor bearings leave a circular gap of
// at least `orient_gap`.
std::vector<std::uint8_t> close_open_edges(const Component& component,
                                           int orient_neighbors, double orient_gap);

// Binary edge image built from nearest-neighbor segments between boundary
// samples, with 3x3 morphological closing. `junction_from`/`junction_to` add
// links from gap-closure samples to entropy samples (K = joint_neighbors).
ScalarGrid synthesize_edge_map(const std::vector<Vec2>& boundary_samples,
                               int struct_neighbors, const GridFrame& frame,
                               const std::vector<Vec2>& junction_from = {},
                               const std::vector<Vec2>& junction_to = {},
                               int joint_neighbors = 0);

// Gradient vector flow of an edge map: diffusion of the edge gradient with
// data fidelity weighted by squared gradient magnitude.
VectorGrid compute_gvf(const ScalarGrid& edge_map, double mu, int iters);

struct SnakeResult {
    Contour contour;           // closed, grid frame
    bool converged = false;
    bool self_intersecting = false;
    int iterations = 0;
};

// Semi-implicit active contour evolution under the GVF external force.
SnakeResult evolve_active_contour(const VectorGrid& gvf, const Contour& init,
                                  const SnakeParams& params,
                                  double force_floor = 0.002);

// One extracted region of a cross-section.
struct ExtractedRegion {
    int component_id = 0;
    Contour contour_physical;   // closed, physical frame
    GridFrame frame;
    int n_samples = 0;
    bool converged = true;
    bool self_intersecting = false;
};

struct SectionExtraction {
    std::vector<ExtractedRegion> regions;
    std::vector<int> rejected_components;  // too few samples
    double neighbor_radius = 0.0;          // resolved value
};

// Full per-geozone boundary extraction for one cross-section. `points` and
// `labels` cover every sample in the section; `geozone_label` selects the
// components to contour.
SectionExtraction extract_section_boundaries(const std::vector<Vec2>& points,
                                             const std::vector<int>& labels,
                                             int geozone_label,
                                             const ExtractionParams& params);

}  // namespace strata
