#pragma once

// Level-set contour metamorphosis: evolves a source region into a target
// region, tracks the moving zero-interface with particles, and repairs
// branching-induced tracking failures by backtracking curvelets.

#include <array>
#include <cstdint>
#include <vector>

#include "strata/geometry.hpp"

namespace strata {

struct MorphParams {
    double cfl = 0.45;             // dt * max|speed| bound, px
    int max_steps = 2000;
    int redistance_interval = 20;  // steps between re-initializations
    double band_px = 2.0;          // narrow band half-width about the target
    double band_tol_px = 0.5;      // convergence tolerance on the band
    int particles_min = 64;
    double particle_spacing_px = 2.0;   // one particle per this much perimeter
    double divergence_px = 2.0;         // particle-to-interface coverage radius
    double branch_attach_px = 3.0;      // trunk attachment radius
    double source_attach_px = 10.0;     // straight-trunk fallback radius
    int curvelet_min_points = 8;        // floor for N_c
    double curvelet_px_per_point = 3.0; // chain pixels per regularized point
    double curvelet_assoc_px = 3.0;     // association radius between steps
    int curvelet_lookback_steps = 16;   // steps to bridge coverage flicker
    int branch_attach_steps = 8;        // temporal slack when hunting a trunk
    int levels = 8;                     // progress intervals per trajectory
    bool backtracking = true;
};

struct LevelSetState {
    ScalarGrid phi;         // current level set, inside positive
    ScalarGrid speed;       // signed distance of the target region set
    double dt = 0.0;
    int step_index = 0;
    bool converged = false;
    double band_deviation = 0.0;  // max |phi - speed| over the band, updated
                                  // at re-distancing epochs
};

// Initializes phi to the signed distance of the source region set and dt from
// the CFL bound.
LevelSetState init_level_set(const std::vector<Contour>& sources_grid,
                             const std::vector<Contour>& targets_grid,
                             const GridFrame& frame, const MorphParams& params);

// One upwind update phi += dt * speed * |grad phi| with Godunov switching,
// re-distancing and band bookkeeping on the configured interval.
void morph_step(LevelSetState& state, const MorphParams& params);

using PixelCoord = std::array<std::int16_t, 2>;

// Interface pixel with its sub-pixel front position (the pixel center
// projected onto the zero level). Coverage checks run against `front`, chain
// topology and counts against `px`.
struct InterfaceSample {
    PixelCoord px;
    Vec2 front;
};

struct MorphRun {
    std::vector<std::vector<InterfaceSample>> interface_pixels;  // per recorded step
    ScalarGrid arrival;      // first step index the interface touched the pixel, -1 never
    ScalarGrid final_phi;
    bool converged = false;
    int steps = 0;
    double dt = 0.0;
};

struct Particle {
    std::vector<Vec2> history;  // grid coords, one entry per recorded step
    bool alive = true;
    int ring = 0;               // source contour index
    double arc = 0.0;           // seed arc fraction on the source contour
};

// n particles at uniform arc positions on each source contour; n derives from
// the perimeter unless below the configured minimum.
std::vector<Particle> seed_particles(const std::vector<Contour>& sources_grid,
                                     const MorphParams& params);

// One advection step x += dt * speed(x) * outward_normal(x), then projection
// back onto the current zero-interface (capped at 1 px; particles needing
// more are flagged lost).
void advect_particles(std::vector<Particle>& particles, const LevelSetState& state);

struct TrackedMorph {
    MorphRun run;
    std::vector<Particle> particles;
    GridFrame frame;
    ScalarGrid target_sdf;
};

// Full morph with particle tracking; interface snapshots are recorded every
// step (step 0 holds the initial interface).
TrackedMorph track_morph(const std::vector<Contour>& sources_grid,
                         const std::vector<Contour>& targets_grid,
                         const GridFrame& frame, const MorphParams& params);

struct Curvelet {
    int step = 0;
    std::vector<PixelCoord> pixels;   // ordered 8-connected chain
    std::vector<Vec2> regular;        // N_c evenly spaced smoothed points
};

// Interface samples whose front position is farther than divergence_px from
// every live particle, chained per step. Index k of the result corresponds to
// snapshot k.
std::vector<std::vector<Curvelet>> detect_uncovered_curvelets(
    const std::vector<std::vector<InterfaceSample>>& interface_pixels,
    const std::vector<Particle>& particles, const MorphParams& params);

struct CurveletTrack {
    std::vector<Vec2> points;  // earliest (branching point) to final step
    int begin_step = 0;        // step of points.front()
    int end_step = 0;          // step of points.back()
    bool orphan = false;       // family appeared after the first step with no match
};

// Walks curvelet families backward from the final snapshot, mapping regular
// points across steps by nearest-neighbor association (interval mappings
// handle merges). Tracks end where their family vanishes.
std::vector<CurveletTrack> backtrack_curvelets(
    const std::vector<std::vector<Curvelet>>& per_step, const MorphParams& params);

enum class Provenance : std::uint8_t { ParticleTrack, CurveletBacktrack };

struct Trajectory {
    std::vector<Vec2> levels;      // exactly params.levels + 1 points, grid frame
    int ring = 0;
    double arc = 0.0;              // ring sort key
    double sub_order = 0.0;        // tie-break within one arc position
    Provenance provenance = Provenance::ParticleTrack;
};

struct TrajectoryBundle {
    std::vector<Trajectory> trajectories;  // ring order
    GridFrame frame;
    int levels = 8;                  // intervals; levels + 1 points each
    int n_dropped_particles = 0;
    int n_dropped_tracks = 0;        // unanchored curvelet tracks
};

// Fuses particle trajectories with backtracked curvelet tracks (trunk
// attachment at branching points) and normalizes every trajectory to uniform
// progress over levels+1 points, snapping endpoints onto source and target.
TrajectoryBundle merge_trajectories(const TrackedMorph& tracked,
                                    const std::vector<CurveletTrack>& tracks,
                                    const std::vector<Contour>& sources_grid,
                                    const std::vector<Contour>& targets_grid,
                                    const MorphParams& params);

// Fraction of target perimeter within `radius_px` of a trajectory endpoint.
double target_coverage(const TrajectoryBundle& bundle,
                       const std::vector<Contour>& targets_grid, double radius_px);

}  // namespace strata
