#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "strata/correspondence.hpp"

using namespace strata;

namespace {

constexpr double kPi = 3.14159265358979323846;

RegionShape disc(int id, Vec2 center, double radius) {
    return make_region_shape(id, oracles::circle_contour(center, radius, 96));
}

}  // namespace

TEST_CASE("dmin stats for a single pair") {
    std::vector<RegionShape> s{disc(0, {0, 0}, 5)};
    std::vector<RegionShape> t{disc(0, {10, 0}, 5)};
    AssociationModel m = compute_dmin_stats(s, t, 5.0);
    CHECK(m.mu_dmin == doctest::Approx(10.0));
    CHECK(m.sigma_dmin == doctest::Approx(0.0));
    CHECK(m.s_dmin == doctest::Approx(0.0));
    CHECK(m.nu == doctest::Approx(2.0));
}

TEST_CASE("nu saturates toward 4 with high variability") {
    // Large standard error relative to mu_lower pushes the sigmoid high.
    std::vector<RegionShape> s{disc(0, {0, 0}, 5), disc(1, {100, 0}, 5), disc(2, {0, 100}, 5)};
    std::vector<RegionShape> t{disc(0, {1, 0}, 5), disc(1, {500, 0}, 5)};
    AssociationModel m = compute_dmin_stats(s, t, 0.01);
    CHECK(m.nu > 3.99);
    CHECK(m.nu <= 4.0);
}

TEST_CASE("dmin stats hand-computed case") {
    std::vector<RegionShape> s{disc(0, {0, 0}, 3), disc(1, {0, 20}, 3), disc(2, {0, 40}, 3)};
    std::vector<RegionShape> t{disc(0, {4, 0}, 3), disc(1, {6, 20}, 3), disc(2, {8, 40}, 3)};
    AssociationModel m = compute_dmin_stats(s, t, 1.0);
    CHECK(m.mu_dmin == doctest::Approx(6.0));
    CHECK(m.sigma_dmin == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(m.s_dmin == doctest::Approx(std::sqrt(8.0 / 3.0) / std::sqrt(3.0)));
}

TEST_CASE("association likelihood peak and half-width") {
    std::vector<RegionShape> s{disc(0, {0, 0}, 20)};
    std::vector<RegionShape> t{disc(0, {30, 0}, 20)};
    AssociationModel m = compute_dmin_stats(s, t, 5.0);
    CHECK(association_likelihood({0, 0}, s[0], m, 0) == doctest::Approx(1.0));

    // lambda clamp: mu=30, span=20, mu_lower=5 -> lambda = 20.
    CHECK(m.lambda[0] == doctest::Approx(s[0].span));
    double r_half = m.lambda[0] * m.nu * std::sqrt(2.0 * std::log(2.0));
    CHECK(association_likelihood({r_half, 0}, s[0], m, 0) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("nu is monotone in the standard error and bounded") {
    double prev = 0.0;
    for (double sd : {0.0, 0.5, 1.0, 2.0, 5.0, 50.0}) {
        double nu = 4.0 / (1.0 + std::exp(-sd / 1.5));
        CHECK(nu >= 2.0);
        CHECK(nu <= 4.0);
        CHECK(nu >= prev);
        prev = nu;
    }
}

TEST_CASE("association matrix: equal areas use the median, far targets drop") {
    std::vector<RegionShape> s{disc(0, {50, 50}, 10)};
    std::vector<RegionShape> near{disc(0, {58, 50}, 10)};
    AssociationModel m = compute_dmin_stats(s, near, 4.0);
    std::vector<Vec2> pts;
    for (auto& r : s) pts.insert(pts.end(), r.contour_physical.points.begin(), r.contour_physical.points.end());
    for (auto& r : near) pts.insert(pts.end(), r.contour_physical.points.begin(), r.contour_physical.points.end());
    GridFrame frame = fit_frame(pts, 128, 8);
    AssociationMatrix a = build_association_matrix(s, near, m, frame);
    CHECK(a.at(0, 0) == 1);

    // Target entirely beyond 3 lambda nu: likelihood < 0.5 everywhere.
    std::vector<RegionShape> far{disc(0, {50 + 3.2 * m.lambda[0] * m.nu + 10, 50}, 10)};
    std::vector<Vec2> pts2;
    for (auto& r : s) pts2.insert(pts2.end(), r.contour_physical.points.begin(), r.contour_physical.points.end());
    for (auto& r : far) pts2.insert(pts2.end(), r.contour_physical.points.begin(), r.contour_physical.points.end());
    GridFrame frame2 = fit_frame(pts2, 192, 8);
    AssociationMatrix a2 = build_association_matrix(s, far, m, frame2);
    CHECK(a2.at(0, 0) == 0);
}

TEST_CASE("percentile is linear-interpolated") {
    std::vector<double> v{1, 2, 3, 4};
    CHECK(percentile(v, 50) == doctest::Approx(2.5));
    CHECK(percentile(v, 100) == doctest::Approx(4.0));
    CHECK(percentile(v, 0) == doctest::Approx(1.0));
    CHECK(percentile(v, 75) == doctest::Approx(3.25));
}

namespace {

GridFrame unit_frame(int n) {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = n;
    return f;
}

}  // namespace

TEST_CASE("delta correlation peaks at the separation lag") {
    GridFrame f = unit_frame(16);
    ScalarGrid u(f), v(f);
    u.at(3, 4) = 1.0;
    v.at(9, 11) = 1.0;
    ScalarGrid r = cross_correlate_fft(u, v);
    double best = -1e300;
    std::array<int, 2> best_m{0, 0};
    for (int my = -(f.ny - 1); my <= f.ny - 1; ++my)
        for (int mx = -(f.nx - 1); mx <= f.nx - 1; ++mx) {
            double val = r.at(mx + f.nx - 1, my + f.ny - 1);
            if (val > best) { best = val; best_m = {mx, my}; }
        }
    CHECK(best_m[0] == 6);
    CHECK(best_m[1] == 7);
    CHECK(best == doctest::Approx(1.0));
}

TEST_CASE("autocorrelation of a mask peaks at zero with pixel count") {
    GridFrame f = unit_frame(32);
    ScalarGrid u(f);
    Rng rng(3);
    int count = 0;
    for (double& val : u.values)
        if (rng.uniform() < 0.3) { val = 1.0; ++count; }
    ScalarGrid r = cross_correlate_fft(u, u);
    CHECK(r.at(f.nx - 1, f.ny - 1) == doctest::Approx(double(count)).epsilon(1e-9));
    for (int my = -(f.ny - 1); my <= f.ny - 1; ++my)
        for (int mx = -(f.nx - 1); mx <= f.nx - 1; ++mx)
            CHECK(r.at(mx + f.nx - 1, my + f.ny - 1) <= double(count) + 1e-6);
}

TEST_CASE("fft correlation equals the direct double loop") {
    GridFrame f = unit_frame(64);
    Rng rng(17);
    ScalarGrid u(f), v(f);
    for (double& val : u.values) val = rng.uniform() < 0.25 ? 1.0 : 0.0;
    for (double& val : v.values) val = rng.uniform(-2.0, 2.0);
    ScalarGrid r = cross_correlate_fft(u, v);
    auto ref = oracles::cross_correlate_direct(u.values, v.values, f.nx, f.ny);
    double max_ref = 0.0;
    for (double x : ref) max_ref = std::max(max_ref, std::fabs(x));
    for (std::size_t k = 0; k < ref.size(); ++k)
        CHECK(std::fabs(r.values[k] - ref[k]) <= 1e-6 * max_ref);
}

TEST_CASE("estimate_shift recovers an exact translation") {
    GridFrame f = unit_frame(64);
    Rng rng(5);
    Contour blob = oracles::fourier_blob(rng, {24, 26}, 10.0, 0.3, 3, 64);
    blob.frame = FrameTag::Grid;
    ScalarGrid mask(f);
    auto m = rasterize_polygon(blob, f);
    for (std::size_t k = 0; k < m.size(); ++k) mask.values[k] = m[k];

    Contour shifted = blob;
    for (Vec2& p : shifted.points) p = p + Vec2{11, 7};
    ScalarGrid sdf = signed_distance(shifted, f);
    DisplacementEstimate est = estimate_shift(mask, sdf);
    CHECK(est.shift_px[0] == 11);
    CHECK(est.shift_px[1] == 7);
}

TEST_CASE("estimate_shift of identity prefers zero lag") {
    GridFrame f = unit_frame(48);
    Contour blob = oracles::circle_contour({24, 24}, 10, 64);
    blob.frame = FrameTag::Grid;
    ScalarGrid mask(f);
    auto m = rasterize_polygon(blob, f);
    for (std::size_t k = 0; k < m.size(); ++k) mask.values[k] = m[k];
    ScalarGrid sdf = signed_distance(blob, f);
    DisplacementEstimate est = estimate_shift(mask, sdf);
    CHECK(est.shift_px[0] == 0);
    CHECK(est.shift_px[1] == 0);
}

TEST_CASE("shift estimation is translation-equivariant") {
    GridFrame f = unit_frame(96);
    Rng rng(23);
    Contour blob = oracles::fourier_blob(rng, {30, 30}, 11.0, 0.25, 3, 64);
    blob.frame = FrameTag::Grid;
    ScalarGrid mask(f);
    auto mk = rasterize_polygon(blob, f);
    for (std::size_t k = 0; k < mk.size(); ++k) mask.values[k] = mk[k];

    std::array<int, 2> base{9, 5};
    Contour target = blob;
    for (Vec2& p : target.points) p = p + Vec2{double(base[0]), double(base[1])};
    DisplacementEstimate e1 = estimate_shift(mask, signed_distance(target, f));

    for (Vec2& p : target.points) p = p + Vec2{13, 17};
    DisplacementEstimate e2 = estimate_shift(mask, signed_distance(target, f));
    CHECK(e2.shift_px[0] == e1.shift_px[0] + 13);
    CHECK(e2.shift_px[1] == e1.shift_px[1] + 17);
}

TEST_CASE("penalty stripe forces a constrained optimum") {
    GridFrame f = unit_frame(72);
    Contour blob = oracles::circle_contour({20, 36}, 8, 48);
    blob.frame = FrameTag::Grid;
    ScalarGrid mask(f);
    auto mk = rasterize_polygon(blob, f);
    for (std::size_t k = 0; k < mk.size(); ++k) mask.values[k] = mk[k];

    Contour target = oracles::circle_contour({44, 36}, 14, 64);
    target.frame = FrameTag::Grid;
    ScalarGrid value = signed_distance(target, f);
    DisplacementEstimate unconstrained = estimate_shift(mask, value);

    // Penalize the right half of the target interior.
    auto tmask = rasterize_polygon(target, f);
    ScalarGrid penalized = value;
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 44; ix < f.nx; ++ix)
            if (tmask[std::size_t(iy) * f.nx + ix]) penalized.at(ix, iy) = -1e6;
    DisplacementEstimate constrained = estimate_shift(mask, penalized);

    CHECK(constrained.shift_px != unconstrained.shift_px);
    // Shifted mask must avoid the penalty stripe entirely.
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            if (!mk[std::size_t(iy) * f.nx + ix]) continue;
            int jx = ix + constrained.shift_px[0], jy = iy + constrained.shift_px[1];
            bool in_stripe = jx >= 44 && tmask[std::size_t(jy) * f.nx + jx];
            CHECK_FALSE(in_stripe);
        }
}

TEST_CASE("single source takes the whole port") {
    RegionShape target = disc(0, {0, 0}, 20);
    std::vector<RegionShape> sources{disc(7, {10, 0}, 5)};
    auto ports = allocate_ports(target, sources);
    REQUIRE(ports.size() == 1);
    CHECK(ports[0].source_id == 7);
    CHECK(ports[0].width == doctest::Approx(2 * kPi));
}

TEST_CASE("two opposite equal sources get half-plane sectors") {
    RegionShape target = disc(0, {0, 0}, 20);
    std::vector<RegionShape> sources{disc(0, {30, 0}, 8), disc(1, {-30, 0}, 8)};
    auto ports = allocate_ports(target, sources);
    REQUIRE(ports.size() == 2);
    for (const Port& p : ports) {
        CHECK(p.width == doctest::Approx(kPi));
        double mid = p.begin + p.width / 2.0;
        while (mid >= 2 * kPi) mid -= 2 * kPi;
        double expect = p.source_id == 0 ? 0.0 : kPi;
        double diff = std::fabs(std::remainder(mid - expect, 2 * kPi));
        CHECK(diff < 1e-9);
    }
}

TEST_CASE("ports partition the circle and contain their bearings") {
    RegionShape target = disc(0, {0, 0}, 30);
    std::vector<RegionShape> sources{disc(0, {40, 5}, 6), disc(1, {-5, 42}, 9),
                                     disc(2, {-38, -8}, 7), disc(3, {6, -45}, 8)};
    auto ports = allocate_ports(target, sources);
    REQUIRE(ports.size() == 4);
    double total = 0.0;
    for (const Port& p : ports) total += p.width;
    CHECK(total == doctest::Approx(2 * kPi).epsilon(1e-9));
    // Each source's bearing angle falls in its own sector.
    for (const RegionShape& s : sources) {
        Vec2 d = s.centroid - target.centroid;
        double bearing = std::atan2(d.y, d.x);
        for (const Port& p : ports) {
            if (p.source_id != s.id) continue;
            double a = bearing - p.begin;
            while (a < 0) a += 2 * kPi;
            CHECK(a <= p.width + 1e-9);
        }
    }
}

TEST_CASE("two discs merging into a stadium stay disjoint") {
    // Two equal sources and a wide target: sector penalties keep the shifted
    // masks apart.
    Contour stadium;
    stadium.closed = true;
    for (int i = 0; i <= 48; ++i) {
        double a = -kPi / 2 + kPi * i / 48.0;
        stadium.points.push_back({25.0 + 12.0 * std::cos(a), 12.0 * std::sin(a)});
    }
    for (int i = 0; i <= 48; ++i) {
        double a = kPi / 2 + kPi * i / 48.0;
        stadium.points.push_back({-25.0 + 12.0 * std::cos(a), 12.0 * std::sin(a)});
    }
    std::vector<RegionShape> targets{make_region_shape(0, stadium)};
    std::vector<RegionShape> sources{disc(0, {-22, 3}, 10), disc(1, {24, -2}, 10)};
    AlignmentConfig cfg;
    AlignmentScene scene = build_alignment_scene(sources, targets, cfg);
    auto ests = align_multi_source_single_target(scene, {0, 1}, 0, cfg);
    REQUIRE(ests.size() == 2);

    // Shifted masks must not overlap.
    const GridFrame& f = scene.frame;
    int shared = 0;
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            int x0 = ix - ests[0].shift_px[0], y0 = iy - ests[0].shift_px[1];
            int x1 = ix - ests[1].shift_px[0], y1 = iy - ests[1].shift_px[1];
            bool in0 = x0 >= 0 && y0 >= 0 && x0 < f.nx && y0 < f.ny &&
                       scene.source_masks[0][std::size_t(y0) * f.nx + x0];
            bool in1 = x1 >= 0 && y1 >= 0 && x1 < f.nx && y1 < f.ny &&
                       scene.source_masks[1][std::size_t(y1) * f.nx + x1];
            if (in0 && in1) ++shared;
        }
    CHECK(shared == 0);
}

TEST_CASE("large source straddles two nearby targets") {
    std::vector<RegionShape> sources{disc(0, {0, 30}, 16)};
    std::vector<RegionShape> targets{disc(0, {-13, 0}, 9), disc(1, {13, 0}, 9)};
    AlignmentConfig cfg;
    AlignmentScene scene = build_alignment_scene(sources, targets, cfg);
    DisplacementEstimate est = align_single_source_multi_target(scene, 0, {0, 1}, cfg);
    CHECK(est.straddles);

    // Coverage of the union beats the best single-target coverage.
    const GridFrame& f = scene.frame;
    auto coverage = [&](const std::array<int, 2>& sh, int t) {
        int c = 0;
        for (int iy = 0; iy < f.ny; ++iy)
            for (int ix = 0; ix < f.nx; ++ix) {
                if (!scene.source_masks[0][std::size_t(iy) * f.nx + ix]) continue;
                int jx = ix + sh[0], jy = iy + sh[1];
                if (jx < 0 || jy < 0 || jx >= f.nx || jy >= f.ny) continue;
                if (scene.target_masks[t][std::size_t(jy) * f.nx + jx]) ++c;
            }
        return c;
    };
    int both = coverage(est.shift_px, 0) + coverage(est.shift_px, 1);
    ScalarGrid mask(f);
    for (std::size_t k = 0; k < scene.source_masks[0].size(); ++k)
        mask.values[k] = scene.source_masks[0][k];
    int best_single = 0;
    for (int t = 0; t < 2; ++t) {
        DisplacementEstimate single = estimate_shift(mask, scene.target_sdfs[t]);
        best_single = std::max(best_single,
                               coverage(single.shift_px, 0) + coverage(single.shift_px, 1));
    }
    CHECK(both > best_single);
}

TEST_CASE("far-apart targets degenerate to the best single alignment") {
    std::vector<RegionShape> sources{disc(0, {0, 60}, 8)};
    std::vector<RegionShape> targets{disc(0, {-60, 0}, 9), disc(1, {60, 0}, 9)};
    AlignmentConfig cfg;
    AlignmentScene scene = build_alignment_scene(sources, targets, cfg);
    DisplacementEstimate est = align_single_source_multi_target(scene, 0, {0, 1}, cfg);
    CHECK_FALSE(est.straddles);
}

TEST_CASE("diagonal association aligns independently without pruning") {
    std::vector<RegionShape> sources{disc(0, {-30, 0}, 9), disc(1, {30, 0}, 9)};
    std::vector<RegionShape> targets{disc(0, {-27, 4}, 9), disc(1, {34, -3}, 9)};
    AssociationMatrix a;
    a.n_sources = a.n_targets = 2;
    a.a = {1, 0, 0, 1};
    AlignmentConfig cfg;
    AssociationResult res = decompose_and_align(a, sources, targets, cfg);
    CHECK(res.pruned_edges.empty());
    CHECK(res.pruned.a == a.a);
    REQUIRE(res.displacements.size() == 2);
    // Each source recovers its own target's offset.
    CHECK(res.displacements[0].shift_m.x == doctest::Approx(3.0).epsilon(0.35));
    CHECK(res.displacements[0].shift_m.y == doctest::Approx(4.0).epsilon(0.35));
    CHECK(res.displacements[1].shift_m.x == doctest::Approx(4.0).epsilon(0.35));
    CHECK(res.displacements[1].shift_m.y == doctest::Approx(-3.0).epsilon(0.35));
}

TEST_CASE("type-C intersection graph decomposes into four subtrees") {
    // s0-t0, s1-{t0,t2}, s2-t2, s3-{t2,t3}.
    std::vector<RegionShape> sources{disc(0, {-40, 20}, 8), disc(1, {-10, 22}, 10),
                                     disc(2, {20, 18}, 9), disc(3, {50, 21}, 10)};
    std::vector<RegionShape> targets{disc(0, {-30, -15}, 10), disc(1, {-70, -40}, 6),
                                     disc(2, {15, -18}, 11), disc(3, {55, -16}, 8)};
    AssociationMatrix a;
    a.n_sources = a.n_targets = 4;
    a.a.assign(16, 0);
    a.at(0, 0) = 1;
    a.at(1, 0) = 1;
    a.at(1, 2) = 1;
    a.at(2, 2) = 1;
    a.at(3, 2) = 1;
    a.at(3, 3) = 1;
    AlignmentConfig cfg;
    AssociationResult res = decompose_and_align(a, sources, targets, cfg);
    REQUIRE(res.subtrees.size() == 4);

    // Subtree of s1: targets {t0, t2}; co-sources {s0} at t0, {s2, s3} at t2.
    const Subtree& s1 = res.subtrees[1];
    CHECK(s1.targets == std::vector<int>{0, 2});
    CHECK(s1.co_sources[0] == std::vector<int>{0});
    CHECK(s1.co_sources[1] == std::vector<int>{2, 3});

    const Subtree& s0 = res.subtrees[0];
    CHECK(s0.targets == std::vector<int>{0});
    CHECK(s0.co_sources[0] == std::vector<int>{1});

    const Subtree& s2 = res.subtrees[2];
    CHECK(s2.targets == std::vector<int>{2});
    CHECK(s2.co_sources[0] == std::vector<int>{1, 3});

    const Subtree& s3 = res.subtrees[3];
    CHECK(s3.targets == std::vector<int>{2, 3});
    CHECK(s3.co_sources[0] == std::vector<int>{1, 2});
    CHECK(s3.co_sources[1].empty());
}

TEST_CASE("association blocked by a larger co-source is pruned") {
    // s1 is tentatively linked to both targets, but s0 occupies most of t0;
    // the sliver of t0 left to s1 loses to a full fit in t1, so the s1-t0
    // edge realizes no overlap and is pruned.
    std::vector<RegionShape> sources{disc(0, {-2, 18}, 13), disc(1, {30, 20}, 6)};
    std::vector<RegionShape> targets{disc(0, {0, -2}, 14), disc(1, {32, -6}, 7)};
    AssociationMatrix a;
    a.n_sources = 2;
    a.n_targets = 2;
    a.a = {1, 0,
           1, 1};
    AlignmentConfig cfg;
    AssociationResult res = decompose_and_align(a, sources, targets, cfg);
    REQUIRE(res.pruned_edges.size() == 1);
    CHECK(res.pruned_edges[0] == std::array<int, 2>{1, 0});
    CHECK(res.pruned.at(0, 0) == 1);
    CHECK(res.pruned.at(1, 0) == 0);
    CHECK(res.pruned.at(1, 1) == 1);
}
