#include "strata/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

namespace strata {

Vec2 world_to_grid(const Vec2& p, const GridFrame& frame) {
    return {(p.x - frame.origin.x) / frame.pixel_size,
            (p.y - frame.origin.y) / frame.pixel_size};
}

Vec2 grid_to_world(const Vec2& g, const GridFrame& frame) {
    return {frame.origin.x + g.x * frame.pixel_size,
            frame.origin.y + g.y * frame.pixel_size};
}

std::array<int, 2> world_to_index(const Vec2& p, const GridFrame& frame) {
    Vec2 g = world_to_grid(p, frame);
    return {int(std::lround(g.x)), int(std::lround(g.y))};
}

GridFrame fit_frame(const std::vector<Vec2>& points, int target_px, int margin) {
    if (points.empty()) throw Error(ErrorKind::EmptyInput, "fit_frame: no points");
    double xmin = points[0].x, xmax = points[0].x;
    double ymin = points[0].y, ymax = points[0].y;
    for (const Vec2& p : points) {
        xmin = std::min(xmin, p.x); xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y); ymax = std::max(ymax, p.y);
    }
    double ext = std::max(xmax - xmin, ymax - ymin);
    double ps = ext > 0.0 ? ext / double(target_px) : 1.0;
    GridFrame f;
    f.pixel_size = ps;
    f.margin = margin;
    f.origin = {xmin - margin * ps, ymin - margin * ps};
    f.nx = int(std::ceil((xmax - xmin) / ps)) + 1 + 2 * margin;
    f.ny = int(std::ceil((ymax - ymin) / ps)) + 1 + 2 * margin;
    return f;
}

// ---- Contour ----------------------------------------------------------------

double Contour::perimeter() const {
    if (points.size() < 2) return 0.0;
    double len = 0.0;
    std::size_t n = points.size();
    std::size_t last = closed ? n : n - 1;
    for (std::size_t i = 0; i < last; ++i) len += dist(points[i], points[(i + 1) % n]);
    return len;
}

namespace {

bool proper_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return (q - p).cross(r - p);
    };
    double o1 = orient(a, b, c), o2 = orient(a, b, d);
    double o3 = orient(c, d, a), o4 = orient(c, d, b);
    return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) &&
           o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

}  // namespace

bool Contour::is_simple() const {
    std::size_t n = points.size();
    if (n < 4) return true;
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 a = points[i], b = points[(i + 1) % n];
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;  // adjacent around the wrap
            Vec2 c = points[j], d = points[(j + 1) % n];
            if (proper_intersect(a, b, c, d)) return false;
        }
    }
    return true;
}

Contour contour_to_grid(const Contour& c, const GridFrame& frame) {
    Contour out = c;
    out.frame = FrameTag::Grid;
    for (Vec2& p : out.points) p = world_to_grid(p, frame);
    return out;
}

Contour contour_to_world(const Contour& c, const GridFrame& frame) {
    Contour out = c;
    out.frame = FrameTag::Physical;
    for (Vec2& p : out.points) p = grid_to_world(p, frame);
    return out;
}

// ---- Grids ------------------------------------------------------------------

double ScalarGrid::sample(double gx, double gy) const {
    double cx = std::clamp(gx, 0.0, double(frame.nx - 1));
    double cy = std::clamp(gy, 0.0, double(frame.ny - 1));
    int ix = std::min(int(cx), frame.nx - 2 >= 0 ? frame.nx - 2 : 0);
    int iy = std::min(int(cy), frame.ny - 2 >= 0 ? frame.ny - 2 : 0);
    double fx = cx - ix, fy = cy - iy;
    if (frame.nx == 1) { ix = 0; fx = 0.0; }
    if (frame.ny == 1) { iy = 0; fy = 0.0; }
    double v00 = at(ix, iy);
    double v10 = at(std::min(ix + 1, frame.nx - 1), iy);
    double v01 = at(ix, std::min(iy + 1, frame.ny - 1));
    double v11 = at(std::min(ix + 1, frame.nx - 1), std::min(iy + 1, frame.ny - 1));
    return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) +
           v01 * (1 - fx) * fy + v11 * fx * fy;
}

double ScalarGrid::max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::fabs(v));
    return m;
}

Vec2 VectorGrid::sample(double gx, double gy) const {
    double cx = std::clamp(gx, 0.0, double(frame.nx - 1));
    double cy = std::clamp(gy, 0.0, double(frame.ny - 1));
    int ix = std::min(int(cx), frame.nx - 2 >= 0 ? frame.nx - 2 : 0);
    int iy = std::min(int(cy), frame.ny - 2 >= 0 ? frame.ny - 2 : 0);
    double fx = cx - ix, fy = cy - iy;
    auto bil = [&](const std::vector<double>& a) {
        std::size_t k00 = std::size_t(iy) * frame.nx + ix;
        std::size_t k10 = k00 + (ix + 1 < frame.nx ? 1 : 0);
        std::size_t k01 = k00 + (iy + 1 < frame.ny ? std::size_t(frame.nx) : 0);
        std::size_t k11 = k01 + (ix + 1 < frame.nx ? 1 : 0);
        return a[k00] * (1 - fx) * (1 - fy) + a[k10] * fx * (1 - fy) +
               a[k01] * (1 - fx) * fy + a[k11] * fx * fy;
    };
    return {bil(u), bil(v)};
}

// ---- Polygon measures -------------------------------------------------------

double signed_area(const Contour& c) {
    double a = 0.0;
    std::size_t n = c.points.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = c.points[i];
        const Vec2& q = c.points[(i + 1) % n];
        a += p.cross(q);
    }
    return 0.5 * a;
}

Contour ensure_ccw(const Contour& c) {
    if (signed_area(c) >= 0.0) return c;
    Contour out = c;
    std::reverse(out.points.begin(), out.points.end());
    return out;
}

AreaCentroid polygon_area_centroid(const Contour& c) {
    if (!c.closed || c.points.size() < 3)
        throw Error(ErrorKind::NonClosedContour, "polygon_area_centroid: need a closed contour");
    double a = signed_area(c);
    if (std::fabs(a) < 1e-12)
        throw Error(ErrorKind::DegenerateContour, "polygon_area_centroid: zero area");
    double cx = 0.0, cy = 0.0;
    std::size_t n = c.points.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& p = c.points[i];
        const Vec2& q = c.points[(i + 1) % n];
        double w = p.cross(q);
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    AreaCentroid out;
    out.area = std::fabs(a);
    out.centroid = {cx / (6.0 * a), cy / (6.0 * a)};
    out.span = std::sqrt(out.area / 3.14159265358979323846);
    return out;
}

bool point_in_polygon(const Vec2& p, const Contour& c) {
    bool inside = false;
    std::size_t n = c.points.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = c.points[i];
        const Vec2& b = c.points[(i + 1) % n];
        if ((a.y <= p.y) != (b.y <= p.y)) {
            double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < xc) inside = !inside;
        }
    }
    return inside;
}

// ---- Resampling -------------------------------------------------------------

namespace {

std::vector<Vec2> dedup_ring(const std::vector<Vec2>& pts) {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (const Vec2& p : pts) {
        if (out.empty() || dist(out.back(), p) > 1e-12) out.push_back(p);
    }
    while (out.size() > 1 && dist(out.front(), out.back()) <= 1e-12) out.pop_back();
    return out;
}

}  // namespace

Contour resample_contour(const Contour& c, int n) {
    if (!c.closed) throw Error(ErrorKind::NonClosedContour, "resample_contour: open contour");
    std::vector<Vec2> ring = dedup_ring(c.points);
    if (int(ring.size()) < 3 || n < 3)
        throw Error(ErrorKind::DegenerateContour, "resample_contour: too few points");

    // Start-point convention: northernmost vertex, ties broken by smallest x.
    std::size_t start = 0;
    for (std::size_t i = 1; i < ring.size(); ++i) {
        if (ring[i].y > ring[start].y ||
            (ring[i].y == ring[start].y && ring[i].x < ring[start].x))
            start = i;
    }
    std::rotate(ring.begin(), ring.begin() + start, ring.end());

    std::size_t m = ring.size();
    std::vector<double> cum(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        cum[i + 1] = cum[i] + dist(ring[i], ring[(i + 1) % m]);
    double total = cum[m];
    if (total <= 0.0) throw Error(ErrorKind::DegenerateContour, "resample_contour: zero perimeter");

    Contour out;
    out.closed = true;
    out.frame = c.frame;
    out.points.reserve(n);
    std::size_t seg = 0;
    for (int k = 0; k < n; ++k) {
        double s = total * double(k) / double(n);
        while (seg + 1 < m && cum[seg + 1] <= s) ++seg;
        double t = (cum[seg + 1] > cum[seg]) ? (s - cum[seg]) / (cum[seg + 1] - cum[seg]) : 0.0;
        const Vec2& a = ring[seg];
        const Vec2& b = ring[(seg + 1) % m];
        out.points.push_back(a + (b - a) * t);
    }
    return out;
}

Vec2 point_at_arc_fraction(const Contour& c, double t) {
    std::size_t n = c.points.size();
    double total = c.perimeter();
    double s = total * (t - std::floor(t));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = c.points[i];
        const Vec2& b = c.points[(i + 1) % n];
        double len = dist(a, b);
        if (acc + len >= s || i + 1 == n) {
            double u = len > 0.0 ? (s - acc) / len : 0.0;
            return a + (b - a) * std::clamp(u, 0.0, 1.0);
        }
        acc += len;
    }
    return c.points.front();
}

// ---- Segment distance field ---------------------------------------------------

SegmentDistanceField::SegmentDistanceField(const std::vector<Vec2>& a,
                                           const std::vector<Vec2>& b,
                                           const GridFrame& frame)
    : a_(a), b_(b), frame_(frame) {
    bnx_ = std::max(1, int(std::ceil(frame.nx / cell_)));
    bny_ = std::max(1, int(std::ceil(frame.ny / cell_)));
    buckets_.assign(std::size_t(bnx_) * bny_, {});
    for (int s = 0; s < int(a_.size()); ++s) {
        double x0 = std::min(a_[s].x, b_[s].x), x1 = std::max(a_[s].x, b_[s].x);
        double y0 = std::min(a_[s].y, b_[s].y), y1 = std::max(a_[s].y, b_[s].y);
        int cx0 = std::clamp(int(std::floor(x0 / cell_)), 0, bnx_ - 1);
        int cx1 = std::clamp(int(std::floor(x1 / cell_)), 0, bnx_ - 1);
        int cy0 = std::clamp(int(std::floor(y0 / cell_)), 0, bny_ - 1);
        int cy1 = std::clamp(int(std::floor(y1 / cell_)), 0, bny_ - 1);
        for (int cy = cy0; cy <= cy1; ++cy)
            for (int cx = cx0; cx <= cx1; ++cx)
                buckets_[std::size_t(cy) * bnx_ + cx].push_back(s);
    }
}

double SegmentDistanceField::seg_dist(const Vec2& p, int s) const {
    const Vec2& a = a_[s];
    const Vec2& b = b_[s];
    Vec2 ab = b - a;
    double len2 = ab.norm2();
    double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return dist(p, a + ab * t);
}

double SegmentDistanceField::distance(const Vec2& g) const {
    if (a_.empty()) return std::numeric_limits<double>::max();
    int qx = std::clamp(int(std::floor(g.x / cell_)), 0, bnx_ - 1);
    int qy = std::clamp(int(std::floor(g.y / cell_)), 0, bny_ - 1);
    double best = std::numeric_limits<double>::max();
    int max_ring = std::max(bnx_, bny_);
    for (int ring = 0; ring <= max_ring; ++ring) {
        if (ring >= 2 && double(ring - 1) * cell_ > best) break;
        int x0 = qx - ring, x1 = qx + ring;
        int y0 = qy - ring, y1 = qy + ring;
        for (int cy = y0; cy <= y1; ++cy) {
            if (cy < 0 || cy >= bny_) continue;
            for (int cx = x0; cx <= x1; ++cx) {
                if (cx < 0 || cx >= bnx_) continue;
                if (ring > 0 && cx != x0 && cx != x1 && cy != y0 && cy != y1) continue;
                for (int s : buckets_[std::size_t(cy) * bnx_ + cx])
                    best = std::min(best, seg_dist(g, s));
            }
        }
    }
    return best;
}

// ---- Signed distance ----------------------------------------------------------

ScalarGrid signed_distance(const Contour& contour, const GridFrame& frame) {
    if (!contour.closed)
        throw Error(ErrorKind::NonClosedContour, "signed_distance: open contour");
    std::vector<Vec2> ring = dedup_ring(contour.points);
    if (ring.size() < 3)
        throw Error(ErrorKind::DegenerateContour, "signed_distance: too few points");
    Contour ringc;
    ringc.points = ring;
    ringc.closed = true;
    ringc.frame = contour.frame;
    if (std::fabs(signed_area(ringc)) < 1.0)
        throw Error(ErrorKind::DegenerateContour, "signed_distance: area below 1 px^2");

    std::size_t n = ring.size();
    std::vector<Vec2> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = ring[i];
        b[i] = ring[(i + 1) % n];
    }
    SegmentDistanceField field(a, b, frame);
    std::vector<std::uint8_t> inside = rasterize_polygon(ringc, frame);

    ScalarGrid out(frame);
    for (int iy = 0; iy < frame.ny; ++iy) {
        for (int ix = 0; ix < frame.nx; ++ix) {
            double d = field.distance({double(ix), double(iy)});
            out.at(ix, iy) = inside[std::size_t(iy) * frame.nx + ix] ? d : -d;
        }
    }
    return out;
}

// ---- Marching squares ----------------------------------------------------------

namespace {

struct EdgeKey {
    // Edge from lattice point (x, y) toward +x (dir 0) or +y (dir 1).
    // Lattice indices are offset by 1 to accommodate the virtual border ring.
    std::int64_t packed;
    bool operator==(const EdgeKey& o) const { return packed == o.packed; }
};

struct EdgeKeyHash {
    std::size_t operator()(const EdgeKey& k) const {
        return std::hash<std::int64_t>()(k.packed);
    }
};

EdgeKey make_key(int x, int y, int dir, int ny) {
    return {((std::int64_t(x + 1) * (ny + 3) + (y + 1)) << 1) | dir};
}

}  // namespace

std::vector<Contour> extract_iso_contours(const ScalarGrid& grid, double level) {
    const int nx = grid.frame.nx, ny = grid.frame.ny;
    // Values outside the grid are treated as below the level so every crossing
    // closes into a loop.
    auto value = [&](int x, int y) -> double {
        if (x < 0 || y < 0 || x >= nx || y >= ny) return level - 1.0;
        return grid.at(x, y);
    };

    std::vector<Vec2> verts;
    std::unordered_map<EdgeKey, int, EdgeKeyHash> edge_vertex;
    auto vertex_on_edge = [&](int x, int y, int dir) {
        EdgeKey key = make_key(x, y, dir, ny);
        auto it = edge_vertex.find(key);
        if (it != edge_vertex.end()) return it->second;
        double f0 = value(x, y);
        double f1 = dir == 0 ? value(x + 1, y) : value(x, y + 1);
        double t = (level - f0) / (f1 - f0);
        Vec2 p = dir == 0 ? Vec2{x + t, double(y)} : Vec2{double(x), y + t};
        verts.push_back(p);
        int id = int(verts.size()) - 1;
        edge_vertex.emplace(key, id);
        return id;
    };

    std::vector<std::array<int, 2>> adjacency;  // two slots per vertex
    auto link = [&](int va, int vb) {
        while (int(adjacency.size()) < int(verts.size())) adjacency.push_back({-1, -1});
        auto attach = [&](int v, int other) {
            if (adjacency[v][0] < 0) adjacency[v][0] = other;
            else if (adjacency[v][1] < 0) adjacency[v][1] = other;
        };
        attach(va, vb);
        attach(vb, va);
    };

    // Cell (cx, cy) spans lattice corners (cx, cy) .. (cx+1, cy+1); the scan
    // includes the virtual ring.
    for (int cy = -1; cy < ny; ++cy) {
        for (int cx = -1; cx < nx; ++cx) {
            int b0 = value(cx, cy) > level ? 1 : 0;
            int b1 = value(cx + 1, cy) > level ? 1 : 0;
            int b2 = value(cx + 1, cy + 1) > level ? 1 : 0;
            int b3 = value(cx, cy + 1) > level ? 1 : 0;
            int code = b0 | (b1 << 1) | (b2 << 2) | (b3 << 3);
            if (code == 0 || code == 15) continue;
            // Edge ids: B = bottom, R = right, T = top, L = left.
            auto B = [&] { return vertex_on_edge(cx, cy, 0); };
            auto R = [&] { return vertex_on_edge(cx + 1, cy, 1); };
            auto T = [&] { return vertex_on_edge(cx, cy + 1, 0); };
            auto L = [&] { return vertex_on_edge(cx, cy, 1); };
            switch (code) {
                case 1:  link(L(), B()); break;
                case 2:  link(B(), R()); break;
                case 3:  link(L(), R()); break;
                case 4:  link(R(), T()); break;
                case 6:  link(B(), T()); break;
                case 7:  link(L(), T()); break;
                case 8:  link(T(), L()); break;
                case 9:  link(B(), T()); break;
                case 11: link(R(), T()); break;
                case 12: link(R(), L()); break;
                case 13: link(B(), R()); break;
                case 14: link(L(), B()); break;
                case 5: {  // saddle, resolved by the cell-center average
                    double center = 0.25 * (value(cx, cy) + value(cx + 1, cy) +
                                            value(cx + 1, cy + 1) + value(cx, cy + 1));
                    if (center > level) { link(L(), T()); link(B(), R()); }
                    else { link(L(), B()); link(R(), T()); }
                    break;
                }
                case 10: {
                    double center = 0.25 * (value(cx, cy) + value(cx + 1, cy) +
                                            value(cx + 1, cy + 1) + value(cx, cy + 1));
                    if (center > level) { link(B(), R()); link(T(), L()); }
                    else { link(B(), L()); link(R(), T()); }
                    break;
                }
                default: break;
            }
        }
    }
    while (int(adjacency.size()) < int(verts.size())) adjacency.push_back({-1, -1});

    std::vector<Contour> loops;
    std::vector<char> used(verts.size(), 0);
    for (int v0 = 0; v0 < int(verts.size()); ++v0) {
        if (used[v0] || adjacency[v0][0] < 0) continue;
        Contour loop;
        loop.closed = true;
        loop.frame = FrameTag::Grid;
        int prev = -1, cur = v0;
        while (cur >= 0 && !used[cur]) {
            used[cur] = 1;
            loop.points.push_back(verts[cur]);
            int n0 = adjacency[cur][0], n1 = adjacency[cur][1];
            int nxt = (n0 != prev && n0 >= 0) ? n0 : n1;
            prev = cur;
            cur = nxt;
        }
        loop.points = dedup_ring(loop.points);
        if (loop.points.size() >= 3) loops.push_back(std::move(loop));
    }

    std::sort(loops.begin(), loops.end(), [](const Contour& a, const Contour& b) {
        Vec2 ma = a.points[0], mb = b.points[0];
        for (const Vec2& p : a.points)
            if (p.x < ma.x || (p.x == ma.x && p.y < ma.y)) ma = p;
        for (const Vec2& p : b.points)
            if (p.x < mb.x || (p.x == mb.x && p.y < mb.y)) mb = p;
        return ma.x < mb.x || (ma.x == mb.x && ma.y < mb.y);
    });
    return loops;
}

// ---- Rasterization -------------------------------------------------------------

std::vector<std::uint8_t> rasterize_polygon(const Contour& c, const GridFrame& frame) {
    return rasterize_polygons({c}, frame);
}

std::vector<std::uint8_t> rasterize_polygons(const std::vector<Contour>& cs,
                                             const GridFrame& frame) {
    std::vector<std::uint8_t> mask(std::size_t(frame.nx) * frame.ny, 0);
    std::vector<double> xs;
    for (const Contour& c : cs) {
        std::size_t n = c.points.size();
        if (n < 3) continue;
        for (int iy = 0; iy < frame.ny; ++iy) {
            double y = double(iy);
            xs.clear();
            for (std::size_t i = 0; i < n; ++i) {
                const Vec2& a = c.points[i];
                const Vec2& b = c.points[(i + 1) % n];
                if ((a.y <= y) != (b.y <= y)) {
                    xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            std::sort(xs.begin(), xs.end());
            for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
                int x0 = int(std::ceil(xs[k]));
                int x1 = int(std::floor(xs[k + 1]));
                x0 = std::max(x0, 0);
                x1 = std::min(x1, frame.nx - 1);
                for (int x = x0; x <= x1; ++x) mask[std::size_t(iy) * frame.nx + x] = 1;
            }
        }
    }
    return mask;
}

// ---- Misc ---------------------------------------------------------------------

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
                  return a.x == b.x && a.y == b.y;
              }),
              pts.end());
    std::size_t n = pts.size();
    if (n < 3) return pts;
    std::vector<Vec2> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && (hull[k - 1] - hull[k - 2]).cross(pts[i] - hull[k - 2]) <= 0) --k;
        hull[k++] = pts[i];
    }
    std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && (hull[k - 1] - hull[k - 2]).cross(pts[i] - hull[k - 2]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
    auto one_sided = [](const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
        double worst = 0.0;
        for (const Vec2& x : p) {
            double best = std::numeric_limits<double>::max();
            for (const Vec2& y : q) best = std::min(best, dist(x, y));
            worst = std::max(worst, best);
        }
        return worst;
    };
    return std::max(one_sided(a, b), one_sided(b, a));
}

double max_distance_to_contour(const std::vector<Vec2>& pts, const Contour& c) {
    std::size_t n = c.points.size();
    double worst = 0.0;
    for (const Vec2& p : pts) {
        double best = std::numeric_limits<double>::max();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec2& a = c.points[i];
            const Vec2& b = c.points[(i + 1) % n];
            Vec2 ab = b - a;
            double len2 = ab.norm2();
            double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
            best = std::min(best, dist(p, a + ab * t));
        }
        worst = std::max(worst, best);
    }
    return worst;
}

}  // namespace strata
