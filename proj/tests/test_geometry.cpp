#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "strata/geometry.hpp"

using namespace strata;

TEST_CASE("world/grid mapping") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = 16;
    Vec2 g = world_to_grid({5.0, 7.0}, f);
    CHECK(g.x == doctest::Approx(5.0));
    CHECK(g.y == doctest::Approx(7.0));

    GridFrame f2;
    f2.origin = {100, 200};
    f2.pixel_size = 0.5;
    f2.nx = f2.ny = 16;
    auto idx = world_to_index({101.0, 201.0}, f2);
    CHECK(idx[0] == 2);
    CHECK(idx[1] == 2);
}

TEST_CASE("round trip bound at half pixel") {
    GridFrame f;
    f.origin = {13.0, -7.5};
    f.pixel_size = 0.5;
    f.nx = f.ny = 512;
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        Vec2 p{rng.uniform(13.0, 13.0 + 200.0), rng.uniform(-7.5, -7.5 + 200.0)};
        auto idx = world_to_index(p, f);
        Vec2 back = grid_to_world({double(idx[0]), double(idx[1])}, f);
        CHECK(std::fabs(back.x - p.x) <= 0.25 + 1e-12);
        CHECK(std::fabs(back.y - p.y) <= 0.25 + 1e-12);
    }
}

TEST_CASE("area and centroid basics") {
    Contour sq = oracles::rect_contour(0, 0, 1, 1);
    auto ac = polygon_area_centroid(sq);
    CHECK(ac.area == doctest::Approx(1.0));
    CHECK(ac.centroid.x == doctest::Approx(0.5));
    CHECK(ac.centroid.y == doctest::Approx(0.5));

    Contour circ = oracles::circle_contour({0, 0}, 2.0, 360);
    auto ac2 = polygon_area_centroid(circ);
    CHECK(ac2.area == doctest::Approx(4.0 * 3.14159265358979).epsilon(0.005));
    CHECK(ac2.span == doctest::Approx(2.0).epsilon(0.005));
}

TEST_CASE("area equals Monte-Carlo estimate") {
    Rng rng(7);
    Contour poly = oracles::random_star_polygon(rng, {10, 10}, 3.0, 8.0, 17);
    auto ac = polygon_area_centroid(poly);
    Rng mc(99);
    double est = oracles::area_monte_carlo(poly, 1000000, mc);
    CHECK(std::fabs(est - ac.area) / ac.area < 0.01);
}

TEST_CASE("area/centroid invariant under reversal and rotation of start") {
    Rng rng(3);
    Contour poly = oracles::random_star_polygon(rng, {0, 0}, 2.0, 5.0, 11);
    auto base = polygon_area_centroid(poly);

    Contour rev = poly;
    std::reverse(rev.points.begin(), rev.points.end());
    auto r = polygon_area_centroid(rev);
    CHECK(r.area == doctest::Approx(base.area));
    CHECK(r.centroid.x == doctest::Approx(base.centroid.x));
    CHECK(r.centroid.y == doctest::Approx(base.centroid.y));

    Contour rot = poly;
    std::rotate(rot.points.begin(), rot.points.begin() + 4, rot.points.end());
    auto q = polygon_area_centroid(rot);
    CHECK(q.area == doctest::Approx(base.area));
    CHECK(q.centroid.x == doctest::Approx(base.centroid.x));
}

TEST_CASE("resample square to four points") {
    Contour sq = oracles::rect_contour(0, 0, 10, 10);  // perimeter 40
    Contour r = resample_contour(sq, 4);
    REQUIRE(r.points.size() == 4);
    // Start at northernmost vertex with smallest x: (0, 10).
    CHECK(r.points[0].x == doctest::Approx(0.0));
    CHECK(r.points[0].y == doctest::Approx(10.0));
    // Points at arc positions 0, 10, 20, 30 along the ring.
    for (int k = 1; k < 4; ++k) {
        double d = dist(r.points[k - 1], r.points[k]);
        CHECK(d == doctest::Approx(10.0));
    }
}

TEST_CASE("resample preserves perimeter and circle radius") {
    Contour circ = oracles::circle_contour({5, 5}, 10.0, 123);
    Contour a = resample_contour(circ, 200);
    Contour b = resample_contour(a, 400);
    CHECK(std::fabs(a.perimeter() - b.perimeter()) / a.perimeter() < 0.001);

    Contour c360 = resample_contour(circ, 360);
    for (const Vec2& p : c360.points) {
        CHECK(std::fabs(dist(p, {5, 5}) - 10.0) < 0.05);
    }
}

TEST_CASE("resample idempotent in shape") {
    Rng rng(11);
    Contour poly = oracles::fourier_blob(rng, {30, 30}, 18.0, 0.3, 4, 256);
    Contour once = resample_contour(poly, 128);
    Contour twice = resample_contour(once, 128);
    CHECK(hausdorff_distance(once.points, twice.points) <= 0.1);
}

TEST_CASE("signed distance of centered square") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = 32;
    Contour sq = oracles::rect_contour(11, 11, 21, 21);  // side 10, center (16,16)
    sq.frame = FrameTag::Grid;
    ScalarGrid g = signed_distance(sq, f);
    CHECK(g.at(16, 16) == doctest::Approx(5.0));
    // Diagonally outside a corner by k pixels: distance -sqrt(2)*k.
    for (int k = 1; k <= 3; ++k) {
        CHECK(g.at(11 - k, 11 - k) == doctest::Approx(-std::sqrt(2.0) * k));
    }
    // Value at a vertex pixel.
    CHECK(std::fabs(g.at(11, 11)) <= 0.5 * std::sqrt(2.0));
}

TEST_CASE("signed distance matches brute-force oracle") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = 64;
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        Contour poly = oracles::random_star_polygon(rng, {32, 32}, 8.0, 26.0, 15);
        poly.frame = FrameTag::Grid;
        ScalarGrid mine = signed_distance(poly, f);
        ScalarGrid ref = oracles::sdf_brute_force(poly, f);
        double worst = 0.0;
        for (std::size_t i = 0; i < mine.values.size(); ++i)
            worst = std::max(worst, std::fabs(mine.values[i] - ref.values[i]));
        CHECK(worst <= 0.5);
    }
}

TEST_CASE("sdf eikonal and sign properties") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = 96;
    Rng rng(5);
    Contour poly = oracles::fourier_blob(rng, {48, 48}, 32.0, 0.22, 3, 128);
    poly.frame = FrameTag::Grid;
    ScalarGrid g = signed_distance(poly, f);

    int total = 0, ok = 0;
    for (int iy = 1; iy < f.ny - 1; ++iy) {
        for (int ix = 1; ix < f.nx - 1; ++ix) {
            if (std::fabs(g.at(ix, iy)) <= 2.0) continue;
            double gx = 0.5 * (g.at(ix + 1, iy) - g.at(ix - 1, iy));
            double gy = 0.5 * (g.at(ix, iy + 1) - g.at(ix, iy - 1));
            double mag = std::sqrt(gx * gx + gy * gy);
            ++total;
            if (mag >= 0.9 && mag <= 1.1) ++ok;
        }
    }
    CHECK(double(ok) / double(total) >= 0.99);

    for (int iy = 0; iy < f.ny; ++iy) {
        for (int ix = 0; ix < f.nx; ++ix) {
            if (std::fabs(g.at(ix, iy)) <= 1.0) continue;
            bool inside = point_in_polygon({double(ix), double(iy)}, poly);
            CHECK(inside == (g.at(ix, iy) > 0.0));
        }
    }
}

TEST_CASE("signed distance rejects degenerate input") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = 16;
    Contour open_c;
    open_c.closed = false;
    open_c.points = {{1, 1}, {5, 1}, {5, 5}};
    CHECK_THROWS_AS(signed_distance(open_c, f), Error);

    Contour tiny;
    tiny.closed = true;
    tiny.points = {{1, 1}, {1.3, 1}, {1.3, 1.3}};
    CHECK_THROWS_AS(signed_distance(tiny, f), Error);
}

TEST_CASE("marching squares recovers a circle") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = 64;
    ScalarGrid g(f);
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix)
            g.at(ix, iy) = 20.0 - std::hypot(ix - 32.0, iy - 32.0);
    auto loops = extract_iso_contours(g, 0.0);
    REQUIRE(loops.size() == 1);
    for (const Vec2& p : loops[0].points) {
        CHECK(std::fabs(dist(p, {32, 32}) - 20.0) < 0.1);
    }
}

TEST_CASE("marching squares splits disjoint lobes") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = 96;
    f.ny = 48;
    ScalarGrid g(f);
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix)
            g.at(ix, iy) = std::max(10.0 - std::hypot(ix - 24.0, iy - 24.0),
                                    10.0 - std::hypot(ix - 72.0, iy - 24.0));
    auto loops = extract_iso_contours(g, 0.0);
    CHECK(loops.size() == 2);
}

TEST_CASE("rasterize matches point-in-polygon") {
    GridFrame f;
    f.origin = {0, 0};
    f.pixel_size = 1.0;
    f.nx = f.ny = 48;
    Rng rng(17);
    Contour poly = oracles::random_star_polygon(rng, {24, 24}, 6.0, 20.0, 9);
    auto mask = rasterize_polygon(poly, f);
    int disagreements = 0;
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            bool pip = oracles::point_in_polygon_crossing({double(ix), double(iy)}, poly);
            if (pip != bool(mask[std::size_t(iy) * f.nx + ix])) ++disagreements;
        }
    CHECK(disagreements == 0);
}

TEST_CASE("contour simplicity detection") {
    Contour bow;
    bow.closed = true;
    bow.points = {{0, 0}, {4, 4}, {4, 0}, {0, 4}};
    CHECK_FALSE(bow.is_simple());
    Contour sq = oracles::rect_contour(0, 0, 2, 2);
    CHECK(sq.is_simple());
}
