#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "strata/morphing.hpp"

using namespace strata;

namespace {

constexpr double kPi = 3.14159265358979323846;

GridFrame frame_px(int nx, int ny) {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = nx;
    f.ny = ny;
    f.margin = 16;
    return f;
}

Contour gcircle(Vec2 c, double r, int n = 96) {
    Contour out = oracles::circle_contour(c, r, n);
    out.frame = FrameTag::Grid;
    return out;
}

double mean_interface_radius(const std::vector<InterfaceSample>& samples, Vec2 center) {
    double acc = 0.0;
    for (const InterfaceSample& s : samples) acc += dist(s.front, center);
    return acc / double(samples.size());
}

int positive_region_components(const ScalarGrid& phi) {
    const GridFrame& f = phi.frame;
    std::vector<int> label(phi.values.size(), 0);
    int comps = 0;
    for (int start = 0; start < int(phi.values.size()); ++start) {
        if (phi.values[start] <= 0.0 || label[start]) continue;
        ++comps;
        std::vector<int> stack{start};
        label[start] = comps;
        while (!stack.empty()) {
            int k = stack.back();
            stack.pop_back();
            int ix = k % f.nx, iy = k / f.nx;
            for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                int jx = ix + dx, jy = iy + dy;
                if (jx < 0 || jy < 0 || jx >= f.nx || jy >= f.ny) continue;
                int j = jy * f.nx + jx;
                if (phi.values[j] > 0.0 && !label[j]) {
                    label[j] = comps;
                    stack.push_back(j);
                }
            }
        }
    }
    return comps;
}

}  // namespace

TEST_CASE("stationary morph: interface stays put and converges fast") {
    GridFrame f = frame_px(128, 128);
    Contour c = gcircle({64, 64}, 30);
    MorphParams p;
    TrackedMorph tm = track_morph({c}, {c}, f, p);
    CHECK(tm.run.converged);
    CHECK(tm.run.steps <= 20);
    // Zero-interface displacement: final interface within half a pixel of the
    // circle.
    for (const InterfaceSample& s : tm.run.interface_pixels.back()) {
        CHECK(std::fabs(dist(s.front, {64, 64}) - 30.0) <= 1.0);
    }
    // Arrival defined only on the interface band.
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            if (tm.run.arrival.at(ix, iy) < 0.0) continue;
            double r = std::hypot(ix - 64.0, iy - 64.0);
            CHECK(std::fabs(r - 30.0) <= 1.5);
        }
}

TEST_CASE("circle-to-circle follows the analytic radius law") {
    GridFrame f = frame_px(164, 164);
    Vec2 c{82, 82};
    Contour src = gcircle(c, 20);
    Contour dst = gcircle(c, 50, 128);
    MorphParams p;
    TrackedMorph tm = track_morph({src}, {dst}, f, p);
    CHECK(tm.run.converged);
    double dt = tm.run.dt;
    for (double t : {0.5, 1.0, 2.0}) {
        int step = int(std::lround(t / dt));
        REQUIRE(step < int(tm.run.interface_pixels.size()));
        double expect = 50.0 - 30.0 * std::exp(-double(step) * dt);
        double got = mean_interface_radius(tm.run.interface_pixels[step], c);
        CHECK(std::fabs(got - expect) / expect <= 0.02);
    }
    // Arrival time is monotone in radius between r0 and R.
    double prev = -1.0;
    for (double r : {24.0, 30.0, 36.0, 42.0, 48.0}) {
        double a = tm.run.arrival.at(int(c.x + r), int(c.y));
        CHECK(a >= 0.0);
        CHECK(a > prev);
        prev = a;
    }
    // Converged interface vs target contour.
    std::vector<Vec2> final_pts;
    for (const InterfaceSample& s : tm.run.interface_pixels.back())
        final_pts.push_back(s.front);
    CHECK(max_distance_to_contour(final_pts, dst) <= 1.5);
}

TEST_CASE("band deviation is non-increasing across re-distancing epochs") {
    GridFrame f = frame_px(164, 164);
    Contour src = gcircle({82, 82}, 20);
    Contour dst = gcircle({82, 82}, 50, 128);
    MorphParams p;
    LevelSetState st = init_level_set({src}, {dst}, f, p);
    double prev = 1e300;
    while (st.step_index < p.max_steps && !st.converged) {
        morph_step(st, p);
        if (st.step_index % p.redistance_interval == 0) {
            CHECK(st.band_deviation <= prev + 1e-9);
            prev = st.band_deviation;
        }
    }
    CHECK(st.converged);
}

TEST_CASE("topology change: source splits into two lobes") {
    GridFrame f = frame_px(220, 124);
    Contour src = gcircle({110, 62}, 30);
    Contour t1 = gcircle({75, 62}, 24);
    Contour t2 = gcircle({145, 62}, 24);
    MorphParams p;
    TrackedMorph tm = track_morph({src}, {t1, t2}, f, p);
    CHECK(tm.run.converged);
    CHECK(positive_region_components(tm.run.final_phi) == 2);
    std::vector<Vec2> final_pts;
    for (const InterfaceSample& s : tm.run.interface_pixels.back())
        final_pts.push_back(s.front);
    double worst = 1e300;
    for (const Vec2& q : final_pts) {
        double d = std::min(max_distance_to_contour({q}, t1), max_distance_to_contour({q}, t2));
        worst = std::min(worst, d);
    }
    // Every final interface pixel lies near one of the target contours.
    for (const Vec2& q : final_pts) {
        double d = std::min(max_distance_to_contour({q}, t1), max_distance_to_contour({q}, t2));
        CHECK(d <= 1.5);
    }
}

TEST_CASE("arrival map covers the target interior on a bi-lobed scene") {
    GridFrame f = frame_px(220, 124);
    Contour src = gcircle({110, 62}, 30);
    Contour t1 = gcircle({75, 62}, 24);
    Contour t2 = gcircle({145, 62}, 24);
    MorphParams p;
    TrackedMorph tm = track_morph({src}, {t1, t2}, f, p);
    ScalarGrid src_sdf = signed_distance(src, f);
    int interior = 0, uncovered = 0;
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            double dt1 = tm.target_sdf.at(ix, iy);
            if (dt1 < 1.0) continue;               // target interior, off the rim
            if (src_sdf.at(ix, iy) > -1.0) continue;  // outside the source only
            ++interior;
            if (tm.run.arrival.at(ix, iy) < 0.0) ++uncovered;
        }
    REQUIRE(interior > 1000);
    CHECK(double(uncovered) / double(interior) <= 0.01);
}

TEST_CASE("particles seed uniformly on the source") {
    Contour sq;
    sq.closed = true;
    sq.frame = FrameTag::Grid;
    sq.points = {{10, 10}, {50, 10}, {50, 50}, {10, 50}};
    MorphParams p;
    p.particles_min = 4;
    p.particle_spacing_px = 40.0;  // forces n = 4
    auto parts = seed_particles({sq}, p);
    REQUIRE(parts.size() == 4);
    // Start convention: northernmost vertex, smallest x -> (10, 50); spacing
    // is the perimeter quarter.
    CHECK(parts[0].history[0].x == doctest::Approx(10.0));
    CHECK(parts[0].history[0].y == doctest::Approx(50.0));
    for (int k = 1; k < 4; ++k)
        CHECK(dist(parts[k].history[0], parts[k - 1].history[0]) == doctest::Approx(40.0));
}

TEST_CASE("particle nesting under doubled counts") {
    Contour c = gcircle({40, 40}, 25, 128);
    MorphParams p;
    p.particles_min = 32;
    p.particle_spacing_px = 1e9;
    auto small = seed_particles({c}, p);
    p.particles_min = 64;
    auto big = seed_particles({c}, p);
    for (const Particle& s : small) {
        double best = 1e300;
        for (const Particle& b : big) best = std::min(best, dist(s.history[0], b.history[0]));
        CHECK(best <= 0.5);
    }
}

TEST_CASE("stationary particles do not move") {
    GridFrame f = frame_px(128, 128);
    Contour c = gcircle({64, 64}, 30);
    MorphParams p;
    TrackedMorph tm = track_morph({c}, {c}, f, p);
    for (const Particle& part : tm.particles) {
        REQUIRE(part.alive);
        CHECK(dist(part.history.front(), part.history.back()) <= 0.2);
    }
}

TEST_CASE("circle-to-circle trajectories are radial") {
    GridFrame f = frame_px(164, 164);
    Vec2 c{82, 82};
    MorphParams p;
    TrackedMorph tm = track_morph({gcircle(c, 20)}, {gcircle(c, 50, 128)}, f, p);
    for (const Particle& part : tm.particles) {
        if (!part.alive) continue;
        Vec2 a = part.history.front() - c;
        Vec2 b = part.history.back() - c;
        double cross = std::fabs(a.cross(b)) / (a.norm() * b.norm());
        CHECK(std::asin(std::min(1.0, cross)) <= kPi / 180.0);
        CHECK(b.norm() > 45.0);  // reached the outer circle
    }
}

TEST_CASE("full particle coverage yields no curvelets") {
    GridFrame f = frame_px(164, 164);
    Vec2 c{82, 82};
    MorphParams p;
    TrackedMorph tm = track_morph({gcircle(c, 30)}, {gcircle(c, 44, 128)}, f, p);
    auto curvelets = detect_uncovered_curvelets(tm.run.interface_pixels, tm.particles, p);
    std::size_t total = 0;
    for (const auto& step : curvelets) total += step.size();
    CHECK(total == 0);
}

TEST_CASE("a synthetic lost arc produces exactly one curvelet") {
    GridFrame f = frame_px(128, 128);
    Vec2 c{64, 64};
    double R = 40.0;
    ScalarGrid phi = signed_distance(gcircle(c, R, 256), f);
    std::vector<std::vector<InterfaceSample>> snapshots(1);
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix)
            if (std::fabs(phi.at(ix, iy)) <= 0.5) {
                InterfaceSample s;
                s.px = {std::int16_t(ix), std::int16_t(iy)};
                Vec2 p{double(ix), double(iy)};
                Vec2 radial = p - c;
                s.front = c + radial * (R / radial.norm());
                snapshots[0].push_back(s);
            }

    // Particles everywhere except an arc window of length 34 px; the detector
    // trims divergence_px at each end.
    double gap = 30.0 / R;  // radians
    std::vector<Particle> particles;
    int n = int(2.0 * kPi * R / 1.5);
    for (int k = 0; k < n; ++k) {
        double a = 2.0 * kPi * k / n;
        if (a < gap) continue;
        Particle part;
        part.history.push_back({c.x + R * std::cos(a), c.y + R * std::sin(a)});
        particles.push_back(std::move(part));
    }
    MorphParams p;
    auto curvelets = detect_uncovered_curvelets(snapshots, particles, p);
    REQUIRE(curvelets.size() == 1);
    REQUIRE(curvelets[0].size() == 1);
    CHECK(curvelets[0][0].pixels.size() >= 28);
    CHECK(curvelets[0][0].pixels.size() <= 32);
}

TEST_CASE("backtracking a rigid translation gives straight parallel tracks") {
    // Fabricated curvelet history: a horizontal chain translated 1 px/step.
    std::vector<std::vector<Curvelet>> per_step(10);
    MorphParams p;
    for (int t = 0; t < 10; ++t) {
        Curvelet c;
        c.step = t;
        for (int x = 10; x <= 40; ++x)
            c.pixels.push_back({std::int16_t(x), std::int16_t(10 + t)});
        int n_pts = std::max(p.curvelet_min_points,
                             int(std::lround(c.pixels.size() / p.curvelet_px_per_point)));
        c.regular.clear();
        for (int k = 0; k < n_pts; ++k)
            c.regular.push_back({10.0 + 30.0 * k / (n_pts - 1), 10.0 + t});
        per_step[t].push_back(std::move(c));
    }
    auto tracks = backtrack_curvelets(per_step, p);
    REQUIRE(tracks.size() == 10);  // N_c = max(8, 31/3) = 10
    for (const auto& tr : tracks) {
        CHECK(tr.points.size() == 10);
        CHECK(tr.begin_step == 0);
        double x0 = tr.points.front().x;
        for (std::size_t i = 0; i < tr.points.size(); ++i) {
            CHECK(std::fabs(tr.points[i].x - x0) <= 0.75);
            CHECK(tr.points[i].y == doctest::Approx(10.0 + i).epsilon(0.05));
        }
    }
}

TEST_CASE("two curvelets merging are matched via interval mappings") {
    std::vector<std::vector<Curvelet>> per_step(2);
    MorphParams p;
    auto make = [&](int step, int x0, int x1, double y) {
        Curvelet c;
        c.step = step;
        for (int x = x0; x <= x1; ++x) c.pixels.push_back({std::int16_t(x), std::int16_t(y)});
        int n_pts = std::max(p.curvelet_min_points,
                             int(std::lround(c.pixels.size() / p.curvelet_px_per_point)));
        for (int k = 0; k < n_pts; ++k)
            c.regular.push_back({x0 + double(x1 - x0) * k / (n_pts - 1), y});
        return c;
    };
    per_step[0].push_back(make(0, 10, 24, 10));  // A
    per_step[0].push_back(make(0, 28, 42, 10));  // B
    per_step[1].push_back(make(1, 10, 42, 11));  // merged C

    auto tracks = backtrack_curvelets(per_step, p);
    REQUIRE(tracks.size() >= 8);
    int hit_a = 0, hit_b = 0;
    for (const auto& tr : tracks) {
        REQUIRE(tr.points.size() == 2);
        double x = tr.points.front().x;  // matched point at t = 0
        bool in_a = x <= 24.5, in_b = x >= 27.5;
        CHECK((in_a || in_b));
        if (in_a) ++hit_a;
        if (in_b) ++hit_b;
    }
    CHECK(hit_a > 0);
    CHECK(hit_b > 0);
}

TEST_CASE("backtracking empty input yields empty output") {
    MorphParams p;
    CHECK(backtrack_curvelets({}, p).empty());
    std::vector<std::vector<Curvelet>> empty_steps(5);
    CHECK(backtrack_curvelets(empty_steps, p).empty());
}

TEST_CASE("bundle without curvelets equals normalized particle trajectories") {
    GridFrame f = frame_px(164, 164);
    Vec2 c{82, 82};
    Contour src = gcircle(c, 20);
    Contour dst = gcircle(c, 50, 128);
    MorphParams p;
    TrackedMorph tm = track_morph({src}, {dst}, f, p);
    TrajectoryBundle bundle = merge_trajectories(tm, {}, {src}, {dst}, p);

    int alive = 0;
    for (const Particle& part : tm.particles)
        if (part.alive) ++alive;
    CHECK(int(bundle.trajectories.size()) + bundle.n_dropped_particles == int(tm.particles.size()));
    CHECK(int(bundle.trajectories.size()) <= alive);
    for (const Trajectory& t : bundle.trajectories) {
        CHECK(t.provenance == Provenance::ParticleTrack);
        REQUIRE(int(t.levels.size()) == p.levels + 1);
    }
}

TEST_CASE("bundle endpoints sit on source and target; levels are radial") {
    GridFrame f = frame_px(164, 164);
    Vec2 c{82, 82};
    Contour src = gcircle(c, 20, 128);
    Contour dst = gcircle(c, 50, 128);
    MorphParams p;
    TrackedMorph tm = track_morph({src}, {dst}, f, p);
    TrajectoryBundle bundle = merge_trajectories(tm, {}, {src}, {dst}, p);
    ScalarGrid src_sdf = signed_distance(src, f);
    for (const Trajectory& t : bundle.trajectories) {
        CHECK(std::fabs(src_sdf.sample(t.levels.front().x, t.levels.front().y)) <= 0.5);
        CHECK(std::fabs(tm.target_sdf.sample(t.levels.back().x, t.levels.back().y)) <= 0.5);
        for (int l = 0; l <= p.levels; ++l) {
            double expect = 20.0 + (50.0 - 20.0) * double(l) / double(p.levels);
            CHECK(std::fabs(dist(t.levels[l], c) - expect) <= 1.0);
        }
    }
    // Level rings stay simple: consecutive distinct trajectories never collide.
    for (int l = 0; l <= p.levels; ++l) {
        for (std::size_t i = 0; i + 1 < bundle.trajectories.size(); ++i) {
            double d = dist(bundle.trajectories[i].levels[l],
                            bundle.trajectories[i + 1].levels[l]);
            CHECK(d > 0.01);
        }
    }
}

namespace {

// Bi-lobed splitting fixture shared with the acceptance suite: one source
// overlapping two target lobes.
struct SplitScene {
    GridFrame frame = frame_px(220, 124);
    Contour source = gcircle({110, 62}, 30);
    std::vector<Contour> targets{gcircle({75, 62}, 24, 128), gcircle({145, 62}, 24, 128)};
};

}  // namespace

TEST_CASE("branching recovery restores target coverage") {
    SplitScene scene;
    MorphParams p;
    TrackedMorph tm = track_morph({scene.source}, scene.targets, scene.frame, p);
    REQUIRE(tm.run.converged);

    TrajectoryBundle plain = merge_trajectories(tm, {}, {scene.source}, scene.targets, p);
    double cov_plain = target_coverage(plain, scene.targets, 2.0);
    CHECK(cov_plain < 0.90);

    auto curvelets = detect_uncovered_curvelets(tm.run.interface_pixels, tm.particles, p);
    std::size_t total = 0;
    for (const auto& s : curvelets) total += s.size();
    REQUIRE(total > 0);

    auto tracks = backtrack_curvelets(curvelets, p);
    REQUIRE(!tracks.empty());
    TrajectoryBundle full = merge_trajectories(tm, tracks, {scene.source}, scene.targets, p);
    double cov_full = target_coverage(full, scene.targets, 2.0);
    CHECK(cov_full >= 0.99);

    // Recovered trajectories still run source to target.
    ScalarGrid src_sdf = signed_distance(scene.source, scene.frame);
    for (const Trajectory& t : full.trajectories) {
        CHECK(std::fabs(src_sdf.sample(t.levels.front().x, t.levels.front().y)) <= 0.5);
        CHECK(std::fabs(tm.target_sdf.sample(t.levels.back().x, t.levels.back().y)) <= 0.5);
    }

    // Backtracking is additive: particle trajectories are identical in both
    // bundles.
    std::size_t particle_count = 0;
    for (const Trajectory& t : full.trajectories)
        if (t.provenance == Provenance::ParticleTrack) ++particle_count;
    CHECK(particle_count == plain.trajectories.size());
}

TEST_CASE("earliest curvelet of a branching family is short") {
    SplitScene scene;
    MorphParams p;
    TrackedMorph tm = track_morph({scene.source}, scene.targets, scene.frame, p);
    auto curvelets = detect_uncovered_curvelets(tm.run.interface_pixels, tm.particles, p);
    int first_step = -1;
    for (int s = 0; s < int(curvelets.size()); ++s)
        if (!curvelets[s].empty()) { first_step = s; break; }
    REQUIRE(first_step >= 0);
    for (const Curvelet& c : curvelets[first_step])
        CHECK(c.pixels.size() <= 6);
}

TEST_CASE("morph pipeline is deterministic") {
    SplitScene scene;
    MorphParams p;
    TrackedMorph a = track_morph({scene.source}, scene.targets, scene.frame, p);
    TrackedMorph b = track_morph({scene.source}, scene.targets, scene.frame, p);
    REQUIRE(a.run.steps == b.run.steps);
    CHECK(a.run.final_phi.values == b.run.final_phi.values);
    auto ca = detect_uncovered_curvelets(a.run.interface_pixels, a.particles, p);
    auto cb = detect_uncovered_curvelets(b.run.interface_pixels, b.particles, p);
    auto ta = backtrack_curvelets(ca, p);
    auto tb = backtrack_curvelets(cb, p);
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        REQUIRE(ta[i].points.size() == tb[i].points.size());
        for (std::size_t k = 0; k < ta[i].points.size(); ++k) {
            CHECK(ta[i].points[k].x == tb[i].points[k].x);
            CHECK(ta[i].points[k].y == tb[i].points[k].y);
        }
    }
}
