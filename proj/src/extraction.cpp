#include "strata/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace strata {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEntropyEps = 1e-12;

// Uniform bucket grid for radius and k-nearest queries on planar points.
class PointGrid {
public:
    PointGrid(const std::vector<Vec2>& pts, double cell) : pts_(pts), cell_(cell) {
        if (pts.empty()) return;
        xmin_ = ymin_ = std::numeric_limits<double>::max();
        double xmax = -xmin_, ymax = -ymin_;
        for (const Vec2& p : pts) {
            xmin_ = std::min(xmin_, p.x); xmax = std::max(xmax, p.x);
            ymin_ = std::min(ymin_, p.y); ymax = std::max(ymax, p.y);
        }
        nx_ = std::max(1, int((xmax - xmin_) / cell_) + 1);
        ny_ = std::max(1, int((ymax - ymin_) / cell_) + 1);
        cells_.assign(std::size_t(nx_) * ny_, {});
        for (int i = 0; i < int(pts.size()); ++i)
            cells_[cell_of(pts[i])].push_back(i);
    }

    // Indices within distance r, ascending index order; excludes `self` if >= 0.
    std::vector<int> radius_query(const Vec2& q, double r, int self = -1) const {
        std::vector<int> out;
        if (pts_.empty()) return out;
        int cx0 = std::clamp(int((q.x - r - xmin_) / cell_), 0, nx_ - 1);
        int cx1 = std::clamp(int((q.x + r - xmin_) / cell_), 0, nx_ - 1);
        int cy0 = std::clamp(int((q.y - r - ymin_) / cell_), 0, ny_ - 1);
        int cy1 = std::clamp(int((q.y + r - ymin_) / cell_), 0, ny_ - 1);
        double r2 = r * r;
        for (int cy = cy0; cy <= cy1; ++cy)
            for (int cx = cx0; cx <= cx1; ++cx)
                for (int i : cells_[std::size_t(cy) * nx_ + cx])
                    if (i != self && (pts_[i] - q).norm2() <= r2) out.push_back(i);
        std::sort(out.begin(), out.end());
        return out;
    }

    // k nearest indices (excluding self), sorted by (distance, index).
    std::vector<int> knn(const Vec2& q, int k, int self = -1) const {
        std::vector<std::pair<double, int>> cand;
        double r = cell_;
        while (true) {
            cand.clear();
            for (int i : radius_query(q, r, self)) cand.push_back({(pts_[i] - q).norm2(), i});
            if (int(cand.size()) >= k || r > 4.0 * cell_ * std::max(nx_, ny_)) break;
            r *= 2.0;
        }
        std::sort(cand.begin(), cand.end());
        if (int(cand.size()) > k) cand.resize(k);
        std::vector<int> out;
        out.reserve(cand.size());
        for (auto& [d, i] : cand) out.push_back(i);
        return out;
    }

private:
    std::size_t cell_of(const Vec2& p) const {
        int cx = std::clamp(int((p.x - xmin_) / cell_), 0, nx_ - 1);
        int cy = std::clamp(int((p.y - ymin_) / cell_), 0, ny_ - 1);
        return std::size_t(cy) * nx_ + cx;
    }
    const std::vector<Vec2>& pts_;
    double cell_ = 1.0;
    double xmin_ = 0.0, ymin_ = 0.0;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<int>> cells_;
};

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double default_neighbor_radius(const std::vector<Vec2>& section_points) {
    if (section_points.size() < 2) return 1.0;
    double xmin = section_points[0].x, xmax = xmin;
    double ymin = section_points[0].y, ymax = ymin;
    for (const Vec2& p : section_points) {
        xmin = std::min(xmin, p.x); xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y); ymax = std::max(ymax, p.y);
    }
    double extent = std::max(xmax - xmin, ymax - ymin);
    double cell = std::max(extent / 64.0, 1e-9);
    PointGrid grid(section_points, cell);
    std::vector<double> nn;
    nn.reserve(section_points.size());
    for (int i = 0; i < int(section_points.size()); ++i) {
        auto k1 = grid.knn(section_points[i], 1, i);
        if (!k1.empty()) nn.push_back(dist(section_points[i], section_points[k1[0]]));
    }
    return 2.2 * median_of(std::move(nn));
}

std::vector<Component> connect_components(const std::vector<Vec2>& points, double r) {
    if (points.empty()) throw Error(ErrorKind::EmptyInput, "connect_components: no samples");
    if (r <= 0.0) throw Error(ErrorKind::ConfigError, "connect_components: radius must be positive");
    PointGrid grid(points, r);
    std::vector<int> label(points.size(), -1);
    std::vector<Component> out;
    for (int seed = 0; seed < int(points.size()); ++seed) {
        if (label[seed] >= 0) continue;
        int id = int(out.size());
        std::vector<int> members;
        std::queue<int> frontier;
        frontier.push(seed);
        label[seed] = id;
        while (!frontier.empty()) {
            int cur = frontier.front();
            frontier.pop();
            members.push_back(cur);
            for (int nb : grid.radius_query(points[cur], r, cur)) {
                if (label[nb] < 0) {
                    label[nb] = id;
                    frontier.push(nb);
                }
            }
        }
        std::sort(members.begin(), members.end());
        Component c;
        c.id = id;
        c.sample_indices = members;
        c.positions.reserve(members.size());
        for (int m : members) c.positions.push_back(points[m]);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<double> local_entropy(const std::vector<Vec2>& all_points,
                                  const std::vector<int>& all_labels, double r) {
    int max_label = 0;
    for (int l : all_labels) max_label = std::max(max_label, l);
    PointGrid grid(all_points, std::max(r, 1e-9));
    std::vector<double> h(all_points.size(), 0.0);
    std::vector<int> counts(max_label + 1, 0);
    for (int i = 0; i < int(all_points.size()); ++i) {
        auto nbs = grid.radius_query(all_points[i], r, i);
        if (nbs.empty()) continue;  // isolated: entropy defined as zero
        std::fill(counts.begin(), counts.end(), 0);
        for (int nb : nbs) ++counts[all_labels[nb]];
        double hn = 0.0;
        for (int c : counts) {
            if (c == 0) continue;
            double p = double(c) / double(nbs.size());
            hn -= p * std::log2(p + kEntropyEps);
        }
        h[i] = hn;
    }
    return h;
}

std::vector<std::uint8_t> detect_boundary_samples(const Component& component,
                                                  const std::vector<Vec2>& all_points,
                                                  const std::vector<int>& all_labels,
                                                  double r, double entropy_threshold) {
    std::vector<double> h = local_entropy(all_points, all_labels, r);
    PointGrid grid(all_points, std::max(r, 1e-9));
    std::vector<std::uint8_t> flags(component.sample_indices.size(), 0);
    for (std::size_t k = 0; k < component.sample_indices.size(); ++k) {
        int i = component.sample_indices[k];
        auto nbs = grid.radius_query(all_points[i], r, i);
        if (nbs.empty()) continue;  // never flagged
        std::vector<double> window;
        window.reserve(nbs.size() + 1);
        for (int nb : nbs) window.push_back(h[nb]);
        window.push_back(h[i]);
        double suppress = std::max(entropy_threshold, median_of(std::move(window)));
        if (h[i] >= suppress) flags[k] = 1;
    }
    return flags;
}

std::vector<std::uint8_t> close_open_edges(const Component& component,
                                           int orient_neighbors, double orient_gap) {
    std::size_t n = component.positions.size();
    std::vector<std::uint8_t> flags(n, 0);
    if (int(n) < orient_neighbors + 1) {
        std::fill(flags.begin(), flags.end(), 1);
        return flags;
    }
    double extent = 1.0;
    {
        double xmin = component.positions[0].x, xmax = xmin;
        for (const Vec2& p : component.positions) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
        }
        extent = std::max(xmax - xmin, 1e-9);
    }
    PointGrid grid(component.positions, extent / 16.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto nbs = grid.knn(component.positions[i], orient_neighbors, int(i));
        std::vector<double> dirs;
        dirs.reserve(nbs.size());
        for (int nb : nbs) {
            Vec2 d = component.positions[nb] - component.positions[i];
            dirs.push_back(std::atan2(d.y, d.x));
        }
        std::sort(dirs.begin(), dirs.end());
        double max_gap = dirs.front() + 2.0 * kPi - dirs.back();
        for (std::size_t j = 1; j < dirs.size(); ++j)
            max_gap = std::max(max_gap, dirs[j] - dirs[j - 1]);
        if (max_gap >= orient_gap) flags[i] = 1;
    }
    return flags;
}

namespace {

void stamp_segment(ScalarGrid& grid, const Vec2& a, const Vec2& b) {
    double len = dist(a, b);
    int steps = std::max(1, int(std::ceil(len / 0.5)));
    for (int s = 0; s <= steps; ++s) {
        Vec2 p = a + (b - a) * (double(s) / steps);
        int ix = int(std::lround(p.x));
        int iy = int(std::lround(p.y));
        if (grid.in_bounds(ix, iy)) grid.at(ix, iy) += 1.0;
    }
}

ScalarGrid morphological_close_3x3(const ScalarGrid& in) {
    const GridFrame& f = in.frame;
    ScalarGrid dil(f), out(f);
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            double m = 0.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int jx = ix + dx, jy = iy + dy;
                    if (in.in_bounds(jx, jy)) m = std::max(m, in.at(jx, jy));
                }
            dil.at(ix, iy) = m;
        }
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            double m = 1.0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int jx = ix + dx, jy = iy + dy;
                    m = std::min(m, dil.in_bounds(jx, jy) ? dil.at(jx, jy) : 0.0);
                }
            out.at(ix, iy) = m;
        }
    return out;
}

}  // namespace

ScalarGrid synthesize_edge_map(const std::vector<Vec2>& boundary_samples,
                               int struct_neighbors, const GridFrame& frame,
                               const std::vector<Vec2>& junction_from,
                               const std::vector<Vec2>& junction_to,
                               int joint_neighbors) {
    if (boundary_samples.size() < 3)
        throw Error(ErrorKind::TooFewBoundarySamples, "synthesize_edge_map: need >= 3 samples");

    std::vector<Vec2> grid_pts(boundary_samples.size());
    for (std::size_t i = 0; i < boundary_samples.size(); ++i)
        grid_pts[i] = world_to_grid(boundary_samples[i], frame);

    ScalarGrid energy(frame);
    PointGrid nbrs(grid_pts, std::max(4.0, frame.nx / 16.0));
    for (int i = 0; i < int(grid_pts.size()); ++i) {
        for (int j : nbrs.knn(grid_pts[i], struct_neighbors, i))
            stamp_segment(energy, grid_pts[i], grid_pts[j]);
    }

    if (joint_neighbors > 0 && !junction_from.empty() && !junction_to.empty()) {
        std::vector<Vec2> to_pts(junction_to.size());
        for (std::size_t i = 0; i < junction_to.size(); ++i)
            to_pts[i] = world_to_grid(junction_to[i], frame);
        PointGrid to_grid(to_pts, std::max(4.0, frame.nx / 16.0));
        for (const Vec2& fw : junction_from) {
            Vec2 fg = world_to_grid(fw, frame);
            for (int j : to_grid.knn(fg, joint_neighbors))
                stamp_segment(energy, fg, to_pts[j]);
        }
    }

    for (double& v : energy.values) v = v > 0.0 ? 1.0 : 0.0;
    return morphological_close_3x3(energy);
}

VectorGrid compute_gvf(const ScalarGrid& edge_map, double mu, int iters) {
    const GridFrame& f = edge_map.frame;
    const int nx = f.nx, ny = f.ny;
    auto clampx = [&](int x) { return std::clamp(x, 0, nx - 1); };
    auto clampy = [&](int y) { return std::clamp(y, 0, ny - 1); };

    std::vector<double> fx(std::size_t(nx) * ny), fy(fx.size()), b(fx.size());
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            std::size_t k = std::size_t(iy) * nx + ix;
            fx[k] = 0.5 * (edge_map.at(clampx(ix + 1), iy) - edge_map.at(clampx(ix - 1), iy));
            fy[k] = 0.5 * (edge_map.at(ix, clampy(iy + 1)) - edge_map.at(ix, clampy(iy - 1)));
            b[k] = fx[k] * fx[k] + fy[k] * fy[k];
        }

    VectorGrid field(f);
    field.u = fx;
    field.v = fy;
    // Explicit scheme stability needs dt * (8 mu + b_max) <= 2 on a unit grid
    // (diffusion plus the reaction term); stay inside the pure-diffusion bound
    // 1/(4 mu) as well.
    double b_max = 0.0;
    for (double v : b) b_max = std::max(b_max, v);
    const double dt = 0.9 * std::min(1.0 / (4.0 * mu), 2.0 / (8.0 * mu + b_max));
    std::vector<double> nu(fx.size()), nv(fx.size());
    for (int it = 0; it < iters; ++it) {
        double max_update = 0.0;
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                std::size_t k = std::size_t(iy) * nx + ix;
                auto lap = [&](const std::vector<double>& a) {
                    return a[std::size_t(iy) * nx + clampx(ix + 1)] +
                           a[std::size_t(iy) * nx + clampx(ix - 1)] +
                           a[std::size_t(clampy(iy + 1)) * nx + ix] +
                           a[std::size_t(clampy(iy - 1)) * nx + ix] - 4.0 * a[k];
                };
                double du = dt * (mu * lap(field.u) - b[k] * (field.u[k] - fx[k]));
                double dv = dt * (mu * lap(field.v) - b[k] * (field.v[k] - fy[k]));
                nu[k] = field.u[k] + du;
                nv[k] = field.v[k] + dv;
                max_update = std::max(max_update, std::max(std::fabs(du), std::fabs(dv)));
            }
        }
        field.u.swap(nu);
        field.v.swap(nv);
        if (max_update < 1e-4) break;
    }
    return field;
}

// ---- Active contour ----------------------------------------------------------

namespace {

// Dense LU with partial pivoting; factored once per snake run.
class LuSolver {
public:
    explicit LuSolver(std::vector<double> a, int n) : a_(std::move(a)), n_(n), piv_(n) {
        for (int i = 0; i < n_; ++i) piv_[i] = i;
        for (int col = 0; col < n_; ++col) {
            int pivot = col;
            for (int r = col + 1; r < n_; ++r)
                if (std::fabs(a_[idx(r, col)]) > std::fabs(a_[idx(pivot, col)])) pivot = r;
            if (pivot != col) {
                for (int c = 0; c < n_; ++c) std::swap(a_[idx(col, c)], a_[idx(pivot, c)]);
                std::swap(piv_[col], piv_[pivot]);
            }
            double d = a_[idx(col, col)];
            for (int r = col + 1; r < n_; ++r) {
                double m = a_[idx(r, col)] / d;
                a_[idx(r, col)] = m;
                for (int c = col + 1; c < n_; ++c) a_[idx(r, c)] -= m * a_[idx(col, c)];
            }
        }
    }

    std::vector<double> solve(const std::vector<double>& rhs) const {
        std::vector<double> x(n_);
        for (int i = 0; i < n_; ++i) x[i] = rhs[piv_[i]];
        for (int r = 1; r < n_; ++r)
            for (int c = 0; c < r; ++c) x[r] -= a_[idx(r, c)] * x[c];
        for (int r = n_ - 1; r >= 0; --r) {
            for (int c = r + 1; c < n_; ++c) x[r] -= a_[idx(r, c)] * x[c];
            x[r] /= a_[idx(r, r)];
        }
        return x;
    }

private:
    std::size_t idx(int r, int c) const { return std::size_t(r) * n_ + c; }
    std::vector<double> a_;
    int n_;
    std::vector<int> piv_;
};

}  // namespace

SnakeResult evolve_active_contour(const VectorGrid& gvf, const Contour& init,
                                  const SnakeParams& params, double force_floor) {
    const int n = params.points;
    Contour cur = resample_contour(init, n);
    cur.frame = FrameTag::Grid;

    // Cyclic pentadiagonal internal-energy matrix from elasticity/rigidity.
    const double al = params.alpha, be = params.beta;
    std::vector<double> m(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        auto add = [&](int j, double v) { m[std::size_t(i) * n + ((j % n) + n) % n] += v; };
        add(i - 2, be);
        add(i - 1, -al - 4.0 * be);
        add(i, 2.0 * al + 6.0 * be);
        add(i + 1, -al - 4.0 * be);
        add(i + 2, be);
    }
    for (std::size_t k = 0; k < m.size(); ++k) m[k] *= params.tau;
    for (int i = 0; i < n; ++i) m[std::size_t(i) * n + i] += 1.0;
    LuSolver solver(std::move(m), n);

    SnakeResult result;
    std::vector<double> bx(n), by(n);
    // Convergence is judged on window-averaged shapes: per-iteration ridge
    // oscillation cancels in the mean, slow drift does not.
    std::vector<Vec2> window_sum(n, Vec2{0, 0});
    Contour prev_mean;
    int it = 0;
    for (; it < params.max_iters; ++it) {
        for (int i = 0; i < n; ++i) {
            Vec2 g = gvf.sample(cur.points[i].x, cur.points[i].y);
            double mag = g.norm();
            Vec2 f = mag > 0.0 ? g * (params.force_weight / (mag + force_floor)) : Vec2{0, 0};
            bx[i] = cur.points[i].x + params.tau * f.x;
            by[i] = cur.points[i].y + params.tau * f.y;
        }
        std::vector<double> sx = solver.solve(bx);
        std::vector<double> sy = solver.solve(by);
        for (int i = 0; i < n; ++i) {
            cur.points[i] = {sx[i], sy[i]};
            window_sum[i] = window_sum[i] + cur.points[i];
        }
        if ((it + 1) % 10 == 0) {
            Contour mean_shape;
            mean_shape.closed = true;
            mean_shape.frame = FrameTag::Grid;
            mean_shape.points.reserve(n);
            for (int i = 0; i < n; ++i) mean_shape.points.push_back(window_sum[i] / 10.0);
            std::fill(window_sum.begin(), window_sum.end(), Vec2{0, 0});
            double net = 1e300;
            if (!prev_mean.points.empty()) {
                net = 0.0;
                for (const Vec2& p : mean_shape.points)
                    net += max_distance_to_contour({p}, prev_mean);
                net /= double(n) * 10.0;
            }
            prev_mean = mean_shape;
            cur = resample_contour(cur, n);
            if (net < params.converge_px) {
                result.converged = true;
                ++it;
                break;
            }
        }
    }
    cur = resample_contour(cur, n);
    if (!cur.is_simple()) {
        cur = resample_contour(cur, n);
        if (!cur.is_simple()) result.self_intersecting = true;
    }
    result.contour = cur;
    result.iterations = it;
    return result;
}

SectionExtraction extract_section_boundaries(const std::vector<Vec2>& points,
                                             const std::vector<int>& labels,
                                             int geozone_label,
                                             const ExtractionParams& params) {
    SectionExtraction out;
    out.neighbor_radius = params.neighbor_radius > 0.0 ? params.neighbor_radius
                                                       : default_neighbor_radius(points);
    std::vector<Vec2> zone_points;
    std::vector<int> zone_to_section;
    for (int i = 0; i < int(points.size()); ++i) {
        if (labels[i] == geozone_label) {
            zone_points.push_back(points[i]);
            zone_to_section.push_back(i);
        }
    }
    if (zone_points.empty()) return out;

    std::vector<Component> components = connect_components(zone_points, out.neighbor_radius);
    for (Component& comp : components) {
        if (int(comp.sample_indices.size()) < params.min_component_samples) {
            out.rejected_components.push_back(comp.id);
            continue;
        }
        // Entropy runs against the full section, so remap the component's
        // zone-local indices to section indices first.
        Component comp_section = comp;
        for (int& si : comp_section.sample_indices) si = zone_to_section[si];
        comp.boundary_flags = detect_boundary_samples(comp_section, points, labels,
                                                      out.neighbor_radius,
                                                      params.entropy_threshold);
        comp.gap_closure_flags = close_open_edges(comp, params.orient_neighbors,
                                                  params.orient_gap);

        std::vector<Vec2> boundary, entropy_pts, closure_only;
        for (std::size_t k = 0; k < comp.positions.size(); ++k) {
            bool e = comp.boundary_flags[k], gcl = comp.gap_closure_flags[k];
            if (e || gcl) boundary.push_back(comp.positions[k]);
            if (e) entropy_pts.push_back(comp.positions[k]);
            if (gcl && !e) closure_only.push_back(comp.positions[k]);
        }
        if (boundary.size() < 3) {
            out.rejected_components.push_back(comp.id);
            continue;
        }

        GridFrame frame = fit_frame(comp.positions, params.grid_target_px,
                                    params.grid_margin_px);
        ScalarGrid edge_map = synthesize_edge_map(boundary, params.struct_neighbors, frame,
                                                  closure_only, entropy_pts,
                                                  params.joint_neighbors);
        VectorGrid gvf = compute_gvf(edge_map, params.gvf_mu, params.gvf_iters);

        // Snake seed: sample bounding box inflated by init_inflate_px.
        double gx0 = 1e300, gx1 = -1e300, gy0 = 1e300, gy1 = -1e300;
        for (const Vec2& p : comp.positions) {
            Vec2 g = world_to_grid(p, frame);
            gx0 = std::min(gx0, g.x); gx1 = std::max(gx1, g.x);
            gy0 = std::min(gy0, g.y); gy1 = std::max(gy1, g.y);
        }
        double inf = params.init_inflate_px;
        Contour init;
        init.closed = true;
        init.frame = FrameTag::Grid;
        init.points = {{gx0 - inf, gy0 - inf}, {gx1 + inf, gy0 - inf},
                       {gx1 + inf, gy1 + inf}, {gx0 - inf, gy1 + inf}};
        SnakeResult snake = evolve_active_contour(gvf, init, params.snake,
                                                  params.gvf_force_floor);

        ExtractedRegion region;
        region.component_id = comp.id;
        region.frame = frame;
        region.n_samples = int(comp.positions.size());
        region.converged = snake.converged;
        region.self_intersecting = snake.self_intersecting;
        region.contour_physical = contour_to_world(snake.contour, frame);
        out.regions.push_back(std::move(region));
    }
    return out;
}

}  // namespace strata
