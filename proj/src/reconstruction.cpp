#include "strata/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace strata {

ElevatedBundle elevate_bundle(const TrajectoryBundle& grid_bundle, double z_top,
                              double z_bottom) {
    ElevatedBundle eb;
    eb.bundle = grid_bundle;
    eb.z_top = z_top;
    eb.z_bottom = z_bottom;
    for (Trajectory& t : eb.bundle.trajectories)
        for (Vec2& p : t.levels) p = grid_to_world(p, grid_bundle.frame);
    return eb;
}

std::vector<Contour> iso_contours(const ElevatedBundle& eb,
                                  const std::vector<double>& depths_abs,
                                  std::vector<double>* out_depth_of) {
    const int levels = eb.bundle.levels;
    std::vector<Contour> out;
    if (out_depth_of) out_depth_of->clear();
    for (double z : depths_abs) {
        if (z > eb.z_top + 1e-9 || z < eb.z_bottom - 1e-9)
            throw Error(ErrorKind::DepthOutOfRange, "iso_contours: depth outside bundle span");
        double g = (eb.z_top - z) / (eb.z_top - eb.z_bottom) * double(levels);
        int l0 = std::clamp(int(std::floor(g)), 0, levels);
        int l1 = std::min(l0 + 1, levels);
        double frac = std::clamp(g - double(l0), 0.0, 1.0);

        // One closed contour per trajectory ring, ring order preserved.
        int max_ring = 0;
        for (const Trajectory& t : eb.bundle.trajectories) max_ring = std::max(max_ring, t.ring);
        for (int ring = 0; ring <= max_ring; ++ring) {
            Contour c;
            c.closed = true;
            c.frame = FrameTag::Physical;
            for (const Trajectory& t : eb.bundle.trajectories) {
                if (t.ring != ring) continue;
                Vec2 p = t.levels[l0] * (1.0 - frac) + t.levels[l1] * frac;
                if (!c.points.empty() && dist(c.points.back(), p) <= 1e-12) continue;
                c.points.push_back(p);
            }
            while (c.points.size() > 1 && dist(c.points.front(), c.points.back()) <= 1e-12)
                c.points.pop_back();
            if (c.points.size() >= 3) {
                out.push_back(std::move(c));
                if (out_depth_of) out_depth_of->push_back(z);
            }
        }
    }
    return out;
}

// ---- Surface meshes -----------------------------------------------------------

double SurfaceMesh::surface_area() const {
    double acc = 0.0;
    for (const auto& t : triangles) {
        const auto& a = vertices[t[0]];
        const auto& b = vertices[t[1]];
        const auto& c = vertices[t[2]];
        double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
        double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
        double nx = uy * vz - uz * vy;
        double ny = uz * vx - ux * vz;
        double nz = ux * vy - uy * vx;
        acc += 0.5 * std::sqrt(nx * nx + ny * ny + nz * nz);
    }
    return acc;
}

double SurfaceMesh::volume() const {
    // Flux of F = (x, y, 0)/2 through the lateral shell; end caps carry no
    // flux for this field, so open ring stacks measure their enclosed volume.
    double acc = 0.0;
    for (const auto& t : triangles) {
        const auto& a = vertices[t[0]];
        const auto& b = vertices[t[1]];
        const auto& c = vertices[t[2]];
        double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
        double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
        double nx = uy * vz - uz * vy;
        double ny = uz * vx - ux * vz;
        double cx = (a[0] + b[0] + c[0]) / 3.0;
        double cy = (a[1] + b[1] + c[1]) / 3.0;
        acc += (cx * nx + cy * ny) / 4.0;
    }
    return std::fabs(acc);
}

SurfaceMesh triangulate(const std::vector<std::vector<Vec2>>& rings,
                        const std::vector<double>& z) {
    if (rings.size() < 2 || rings.size() != z.size())
        throw Error(ErrorKind::RingMismatch, "triangulate: need >= 2 levels with elevations");
    std::size_t n = rings[0].size();
    for (const auto& r : rings)
        if (r.size() != n || n < 3)
            throw Error(ErrorKind::RingMismatch, "triangulate: ring sizes differ");

    SurfaceMesh mesh;
    for (std::size_t l = 0; l < rings.size(); ++l)
        for (std::size_t i = 0; i < n; ++i)
            mesh.vertices.push_back({rings[l][i].x, rings[l][i].y, z[l]});

    auto vid = [&](std::size_t l, std::size_t i) { return int(l * n + i % n); };
    auto tri_area2 = [&](int a, int b, int c) {
        const auto& A = mesh.vertices[a];
        const auto& B = mesh.vertices[b];
        const auto& C = mesh.vertices[c];
        double ux = B[0] - A[0], uy = B[1] - A[1], uz = B[2] - A[2];
        double vx = C[0] - A[0], vy = C[1] - A[1], vz = C[2] - A[2];
        double nx = uy * vz - uz * vy, ny = uz * vx - ux * vz, nz = ux * vy - uy * vx;
        return nx * nx + ny * ny + nz * nz;
    };
    auto push = [&](int a, int b, int c) {
        if (tri_area2(a, b, c) > 1e-24) mesh.triangles.push_back({a, b, c});
    };

    for (std::size_t l = 0; l + 1 < rings.size(); ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            int a = vid(l, i), b = vid(l, i + 1);
            int c = vid(l + 1, i + 1), d = vid(l + 1, i);
            // Shorter-diagonal split.
            const auto& A = mesh.vertices[a];
            const auto& B = mesh.vertices[b];
            const auto& C = mesh.vertices[c];
            const auto& D = mesh.vertices[d];
            double ac = std::hypot(A[0] - C[0], A[1] - C[1]);
            double bd = std::hypot(B[0] - D[0], B[1] - D[1]);
            if (ac <= bd) {
                push(a, b, c);
                push(a, c, d);
            } else {
                push(a, b, d);
                push(b, c, d);
            }
        }
    }
    return mesh;
}

SurfaceMesh triangulate_bundle(const ElevatedBundle& eb) {
    SurfaceMesh mesh;
    int max_ring = 0;
    for (const Trajectory& t : eb.bundle.trajectories) max_ring = std::max(max_ring, t.ring);
    const int levels = eb.bundle.levels;
    for (int ring = 0; ring <= max_ring; ++ring) {
        std::vector<const Trajectory*> ts;
        for (const Trajectory& t : eb.bundle.trajectories)
            if (t.ring == ring) ts.push_back(&t);
        if (ts.size() < 3) continue;
        std::vector<std::vector<Vec2>> rings(levels + 1);
        std::vector<double> z(levels + 1);
        for (int l = 0; l <= levels; ++l) {
            z[l] = eb.z_top + (eb.z_bottom - eb.z_top) * double(l) / double(levels);
            for (const Trajectory* t : ts) rings[l].push_back(t->levels[l]);
        }
        SurfaceMesh part = triangulate(rings, z);
        int base = int(mesh.vertices.size());
        mesh.vertices.insert(mesh.vertices.end(), part.vertices.begin(), part.vertices.end());
        for (auto t : part.triangles)
            mesh.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
    }
    return mesh;
}

// ---- Prediction -----------------------------------------------------------------

namespace {

// Removes loop knots: when two non-adjacent edges properly intersect, the
// shorter arc between them is cut.
Contour remove_loop_knots(Contour c) {
    auto proper = [](const Vec2& a, const Vec2& b, const Vec2& p, const Vec2& q) {
        auto orient = [](const Vec2& o, const Vec2& s, const Vec2& t) {
            return (s - o).cross(t - o);
        };
        double o1 = orient(a, b, p), o2 = orient(a, b, q);
        double o3 = orient(p, q, a), o4 = orient(p, q, b);
        return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) &&
               o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
    };
    for (int pass = 0; pass < 8; ++pass) {
        std::size_t n = c.points.size();
        if (n < 5) break;
        bool changed = false;
        for (std::size_t i = 0; i < n && !changed; ++i) {
            for (std::size_t j = i + 2; j < n; ++j) {
                if (i == 0 && j == n - 1) continue;
                if (!proper(c.points[i], c.points[(i + 1) % n], c.points[j],
                            c.points[(j + 1) % n]))
                    continue;
                std::size_t inner = j - i;  // points i+1 .. j
                if (inner <= n - inner) {
                    c.points.erase(c.points.begin() + i + 1, c.points.begin() + j + 1);
                } else {
                    c.points.erase(c.points.begin() + j + 1, c.points.end());
                    c.points.erase(c.points.begin(), c.points.begin() + i + 1);
                }
                changed = true;
                break;
            }
        }
        if (!changed) break;
    }
    return c;
}

}  // namespace

std::vector<Contour> predict_contour(const ElevatedBundle& eb, double depth_below,
                                     bool* degenerate) {
    if (depth_below <= 0.0 || depth_below > 10.0 + 1e-9)
        throw Error(ErrorKind::DepthOutOfRange, "predict_contour: depth_below outside (0, 10] m");
    const int levels = eb.bundle.levels;
    double level_spacing = (eb.z_top - eb.z_bottom) / double(levels);
    double scale = depth_below / level_spacing;
    if (degenerate) *degenerate = false;

    int max_ring = 0;
    for (const Trajectory& t : eb.bundle.trajectories) max_ring = std::max(max_ring, t.ring);
    std::vector<Contour> out;
    for (int ring = 0; ring <= max_ring; ++ring) {
        Contour c;
        c.closed = true;
        c.frame = FrameTag::Physical;
        double source_area = 0.0;
        Contour source_ring;
        source_ring.closed = true;
        for (const Trajectory& t : eb.bundle.trajectories) {
            if (t.ring != ring) continue;
            Vec2 dir = t.levels[levels] - t.levels[levels - 1];
            c.points.push_back(t.levels[levels] + dir * scale);
            source_ring.points.push_back(t.levels.front());
        }
        if (c.points.size() < 3) continue;
        c = remove_loop_knots(std::move(c));
        if (c.points.size() < 3) continue;
        try {
            source_area = polygon_area_centroid(source_ring).area;
            double area = polygon_area_centroid(c).area;
            if (degenerate && area < 0.01 * source_area) *degenerate = true;
        } catch (const Error&) {
            if (degenerate) *degenerate = true;
        }
        out.push_back(std::move(c));
    }
    return out;
}

// ---- Precision / recall -----------------------------------------------------------

PrRow precision_recall(const std::vector<Contour>& predicted,
                       const std::vector<Contour>& truth, double raster_m) {
    PrRow row;
    if (truth.empty()) {
        row.empty_truth = true;
        return row;
    }
    if (predicted.empty()) {
        row.empty_prediction = true;
        return row;
    }
    std::vector<Vec2> all;
    for (const Contour& c : predicted) all.insert(all.end(), c.points.begin(), c.points.end());
    for (const Contour& c : truth) all.insert(all.end(), c.points.begin(), c.points.end());
    double xmin = all[0].x, xmax = all[0].x, ymin = all[0].y, ymax = all[0].y;
    for (const Vec2& p : all) {
        xmin = std::min(xmin, p.x); xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y); ymax = std::max(ymax, p.y);
    }
    GridFrame f;
    f.pixel_size = raster_m;
    f.origin = {xmin - 2.0 * raster_m, ymin - 2.0 * raster_m};
    f.nx = int(std::ceil((xmax - xmin) / raster_m)) + 5;
    f.ny = int(std::ceil((ymax - ymin) / raster_m)) + 5;

    auto rasterize_set = [&](const std::vector<Contour>& cs) {
        std::vector<Contour> grid_cs;
        for (const Contour& c : cs) grid_cs.push_back(contour_to_grid(c, f));
        return rasterize_polygons(grid_cs, f);
    };
    std::vector<std::uint8_t> pred_mask = rasterize_set(predicted);
    std::vector<std::uint8_t> truth_mask = rasterize_set(truth);

    long np = 0, nt = 0, inter = 0;
    for (std::size_t k = 0; k < pred_mask.size(); ++k) {
        if (pred_mask[k]) ++np;
        if (truth_mask[k]) ++nt;
        if (pred_mask[k] && truth_mask[k]) ++inter;
    }
    double px_area = raster_m * raster_m;
    row.pred_area = double(np) * px_area;
    row.truth_area = double(nt) * px_area;
    row.precision = np > 0 ? double(inter) / double(np) : 0.0;
    row.recall = nt > 0 ? double(inter) / double(nt) : 0.0;
    if (np == 0) row.empty_prediction = true;
    if (nt == 0) row.empty_truth = true;
    return row;
}

// ---- Synthetic scenes --------------------------------------------------------------

namespace {

enum class Primitive { TiltedEllipsoid, BentSlab, TwinMerge, SplitLobe };

Primitive parse_primitive(const std::string& name) {
    if (name == "tilted-ellipsoid") return Primitive::TiltedEllipsoid;
    if (name == "bent-slab") return Primitive::BentSlab;
    if (name == "twin-merge") return Primitive::TwinMerge;
    if (name == "split-lobe") return Primitive::SplitLobe;
    throw Error(ErrorKind::UnknownPrimitive, "unknown primitive: " + name);
}

}  // namespace

double SyntheticScene::implicit(double x, double y, double z) const {
    const SceneSpec& s = spec;
    double cx = s.extent / 2.0, cy = s.extent / 2.0;
    double depth = s.z_top - z;
    double total_depth = s.n_benches * s.bench_height;
    switch (parse_primitive(s.primitive)) {
        case Primitive::TiltedEllipsoid: {
            double ex = cx + s.slope * depth;
            double ey = cy;
            double cz = s.z_top - total_depth / 2.0;
            double dx = (x - ex) / s.radius_xy;
            double dy = (y - ey) / (s.aspect * s.radius_xy);
            double dz = (z - cz) / s.radius_z;
            return 1.0 - dx * dx - dy * dy - dz * dz;
        }
        case Primitive::BentSlab: {
            double ym = cy + s.slope * depth +
                        s.bend_amp * std::sin(2.0 * 3.14159265358979323846 *
                                              (x - cx) / s.bend_wavelength);
            double x0 = cx - s.slab_xfrac * s.extent, x1 = cx + s.slab_xfrac * s.extent;
            return std::min({s.slab_width / 2.0 - std::fabs(y - ym), x - x0, x1 - x});
        }
        case Primitive::TwinMerge:
        case Primitive::SplitLobe: {
            double sep = parse_primitive(s.primitive) == Primitive::TwinMerge
                             ? std::max(0.0, s.lobe_separation - s.sep_rate * depth)
                             : s.lobe_separation + s.sep_rate * depth;
            double r = s.lobe_radius;
            auto lobe = [&](double lx) {
                double dx = (x - lx) / r, dy = (y - cy) / r;
                return 1.0 - dx * dx - dy * dy;
            };
            return std::max(lobe(cx - sep / 2.0), lobe(cx + sep / 2.0));
        }
    }
    return -1.0;
}

std::vector<Contour> SyntheticScene::truth_contours(double z) const {
    GridFrame f;
    f.pixel_size = 0.25;
    f.origin = {-2.0, -2.0};
    f.nx = int(spec.extent / f.pixel_size) + 17;
    f.ny = f.nx;
    ScalarGrid g(f);
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            Vec2 w = grid_to_world({double(ix), double(iy)}, f);
            g.at(ix, iy) = implicit(w.x, w.y, z);
        }
    std::vector<Contour> loops = extract_iso_contours(g, 0.0);
    std::vector<Contour> out;
    for (Contour& loop : loops) {
        Contour w = contour_to_world(loop, f);
        if (w.points.size() >= 8) out.push_back(std::move(w));
    }
    return out;
}

double SyntheticScene::truth_area(double z) const {
    double acc = 0.0;
    for (const Contour& c : truth_contours(z)) acc += polygon_area_centroid(c).area;
    return acc;
}

SyntheticScene generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed) {
    parse_primitive(spec.primitive);  // validate up front
    SyntheticScene scene;
    scene.spec = spec;
    Rng rng(seed ^ 0x5374726174614141ULL);

    for (int k = 0; k < spec.n_benches; ++k)
        scene.bench_elevations.push_back(spec.z_top - k * spec.bench_height);

    double row_h = spec.hex_spacing * std::sqrt(3.0) / 2.0;
    for (double z : scene.bench_elevations) {
        int rows = int(spec.extent / row_h) + 1;
        for (int r = 0; r <= rows; ++r) {
            double y = r * row_h;
            double x0 = (r % 2) ? spec.hex_spacing / 2.0 : 0.0;
            for (double x = x0; x <= spec.extent + 1e-9; x += spec.hex_spacing) {
                double jx = x + spec.jitter_sigma * rng.gaussian();
                double jy = y + spec.jitter_sigma * rng.gaussian();
                bool drop = rng.uniform() < spec.dropout;
                if (drop) continue;
                SamplePoint p;
                p.x = jx;
                p.y = jy;
                p.z = z;
                p.geozone = scene.implicit(jx, jy, z) > 0.0 ? "g1" : "g2";
                scene.samples.push_back(std::move(p));
            }
        }
    }
    return scene;
}

}  // namespace strata
