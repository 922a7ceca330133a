#include "strata/correspondence.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>

namespace strata {

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
    while (a <= -kPi) a += 2.0 * kPi;
    while (a > kPi) a -= 2.0 * kPi;
    return a;
}

}  // namespace

RegionShape make_region_shape(int id, const Contour& contour_physical) {
    RegionShape r;
    r.id = id;
    r.contour_physical = contour_physical;
    AreaCentroid ac = polygon_area_centroid(contour_physical);
    r.area = ac.area;
    r.centroid = ac.centroid;
    r.span = ac.span;
    return r;
}

AssociationModel compute_dmin_stats(const std::vector<RegionShape>& sources,
                                    const std::vector<RegionShape>& targets,
                                    double mu_lower) {
    if (targets.empty()) throw Error(ErrorKind::NoTargets, "compute_dmin_stats: no targets");
    if (sources.empty()) throw Error(ErrorKind::EmptyInput, "compute_dmin_stats: no sources");

    AssociationModel m;
    m.mu_lower = mu_lower;
    m.d_min.reserve(sources.size());
    for (const RegionShape& s : sources) {
        double best = std::numeric_limits<double>::max();
        for (const RegionShape& t : targets) best = std::min(best, dist(s.centroid, t.centroid));
        m.d_min.push_back(best);
    }
    double n = double(m.d_min.size());
    double sum = std::accumulate(m.d_min.begin(), m.d_min.end(), 0.0);
    m.mu_dmin = sum / n;
    double sq = 0.0;
    for (double d : m.d_min) sq += (d - m.mu_dmin) * (d - m.mu_dmin);
    m.sigma_dmin = std::sqrt(sq / n);
    m.s_dmin = m.sigma_dmin / std::sqrt(n);
    m.nu = 4.0 / (1.0 + std::exp(-m.s_dmin / mu_lower));

    m.lambda.reserve(sources.size());
    for (const RegionShape& s : sources)
        m.lambda.push_back(std::max(std::min(m.mu_dmin, s.span), mu_lower));
    return m;
}

double association_likelihood(const Vec2& x, const RegionShape& source,
                              const AssociationModel& model, int source_index) {
    double lambda = model.lambda[source_index];
    double a = dist(x, source.centroid) / lambda;
    return std::exp(-(a * a) / (2.0 * model.nu * model.nu));
}

double percentile(std::vector<double> values, double k) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    double rank = std::clamp(k, 0.0, 100.0) / 100.0 * double(values.size() - 1);
    std::size_t lo = std::size_t(rank);
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = rank - double(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

AssociationMatrix build_association_matrix(const std::vector<RegionShape>& sources,
                                           const std::vector<RegionShape>& targets,
                                           const AssociationModel& model,
                                           const GridFrame& frame) {
    AssociationMatrix out;
    out.n_sources = int(sources.size());
    out.n_targets = int(targets.size());
    out.a.assign(std::size_t(out.n_sources) * out.n_targets, 0);

    for (int t = 0; t < out.n_targets; ++t) {
        Contour grid_c = contour_to_grid(targets[t].contour_physical, frame);
        std::vector<std::uint8_t> mask = rasterize_polygon(grid_c, frame);
        std::vector<Vec2> region_pts;
        for (int iy = 0; iy < frame.ny; ++iy)
            for (int ix = 0; ix < frame.nx; ++ix)
                if (mask[std::size_t(iy) * frame.nx + ix])
                    region_pts.push_back(grid_to_world({double(ix), double(iy)}, frame));
        if (region_pts.empty())
            throw Error(ErrorKind::EmptyTargetRegion, "build_association_matrix: target rasterizes empty");

        for (int s = 0; s < out.n_sources; ++s) {
            std::vector<double> lik;
            lik.reserve(region_pts.size());
            for (const Vec2& x : region_pts)
                lik.push_back(association_likelihood(x, sources[s], model, s));
            double ratio = std::min(sources[s].area / targets[t].area, 1.0);
            double k = 50.0 * (1.0 + (1.0 - ratio));
            if (percentile(std::move(lik), k) >= 0.5) out.at(s, t) = 1;
        }
    }
    return out;
}

// ---- FFT cross-correlation ------------------------------------------------------

namespace {

std::mutex g_fftw_mutex;  // FFTW plan creation is not thread-safe

int next_pow2(int v) {
    int p = 1;
    while (p < v) p <<= 1;
    return p;
}

// 2D complex FFT through FFTW, forward or inverse (unnormalized).
void fft2d(std::vector<std::complex<double>>& data, int nx, int ny, bool inverse) {
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        plan = fftw_plan_dft_2d(ny, nx,
                                reinterpret_cast<fftw_complex*>(data.data()),
                                reinterpret_cast<fftw_complex*>(data.data()),
                                inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_destroy_plan(plan);
    }
}

}  // namespace

ScalarGrid cross_correlate_fft(const ScalarGrid& source_mask, const ScalarGrid& value_map) {
    if (!(source_mask.frame == value_map.frame))
        throw Error(ErrorKind::FrameMismatch, "cross_correlate_fft: frames differ");
    const int nx = source_mask.frame.nx, ny = source_mask.frame.ny;
    const int px = next_pow2(2 * nx - 1);
    const int py = next_pow2(2 * ny - 1);

    std::vector<std::complex<double>> u(std::size_t(px) * py, 0.0), v(u.size(), 0.0);
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            u[std::size_t(iy) * px + ix] = source_mask.at(ix, iy);
            v[std::size_t(iy) * px + ix] = value_map.at(ix, iy);
        }
    fft2d(u, px, py, false);
    fft2d(v, px, py, false);
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = std::conj(u[k]) * v[k];
    fft2d(u, px, py, true);

    // Lag (mx, my) lives at surface index (mx + nx - 1, my + ny - 1).
    GridFrame lag_frame;
    lag_frame.pixel_size = source_mask.frame.pixel_size;
    lag_frame.origin = {-(double(nx) - 1.0), -(double(ny) - 1.0)};
    lag_frame.nx = 2 * nx - 1;
    lag_frame.ny = 2 * ny - 1;
    ScalarGrid surface(lag_frame);
    const double norm = 1.0 / (double(px) * double(py));
    for (int my = -(ny - 1); my <= ny - 1; ++my) {
        int wy = (my + py) % py;
        for (int mx = -(nx - 1); mx <= nx - 1; ++mx) {
            int wx = (mx + px) % px;
            surface.at(mx + nx - 1, my + ny - 1) = u[std::size_t(wy) * px + wx].real() * norm;
        }
    }
    return surface;
}

DisplacementEstimate estimate_shift(const ScalarGrid& source_mask,
                                    const ScalarGrid& value_map) {
    const int nx = source_mask.frame.nx, ny = source_mask.frame.ny;
    // Mask support bounding box limits the admissible lags.
    int bx0 = nx, bx1 = -1, by0 = ny, by1 = -1;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            if (source_mask.at(ix, iy) != 0.0) {
                bx0 = std::min(bx0, ix); bx1 = std::max(bx1, ix);
                by0 = std::min(by0, iy); by1 = std::max(by1, iy);
            }
    if (bx1 < 0) throw Error(ErrorKind::EmptyInput, "estimate_shift: empty source mask");

    ScalarGrid surface = cross_correlate_fft(source_mask, value_map);
    DisplacementEstimate best;
    bool found = false;
    double best_score = -std::numeric_limits<double>::max();
    for (int my = -by0; my <= ny - 1 - by1; ++my) {
        for (int mx = -bx0; mx <= nx - 1 - bx1; ++mx) {
            double score = surface.at(mx + nx - 1, my + ny - 1);
            if (!found) {
                found = true;
            } else if (score < best_score) {
                continue;
            } else if (score == best_score) {
                long cur = long(mx) * mx + long(my) * my;
                long prev = long(best.shift_px[0]) * best.shift_px[0] +
                            long(best.shift_px[1]) * best.shift_px[1];
                if (cur > prev) continue;
                if (cur == prev &&
                    std::array<int, 2>{mx, my} >= best.shift_px)
                    continue;
            }
            best_score = score;
            best.shift_px = {mx, my};
        }
    }
    if (!found) throw Error(ErrorKind::AllInadmissible, "estimate_shift: no admissible lag");
    best.score = best_score;
    best.shift_m = {best.shift_px[0] * source_mask.frame.pixel_size,
                    best.shift_px[1] * source_mask.frame.pixel_size};
    return best;
}

// ---- Port allocation --------------------------------------------------------------

namespace {

double circular_diff(double a, double b) { return std::fabs(wrap_angle(a - b)); }

// Cost of one circular ordering with sector start offset theta0.
double ordering_cost(const std::vector<int>& order, const std::vector<double>& widths,
                     const std::vector<double>& bearings, double theta0) {
    double cost = 0.0;
    double acc = theta0;
    for (int idx : order) {
        double mid = acc + widths[idx] / 2.0;
        cost += circular_diff(mid, bearings[idx]);
        acc += widths[idx];
    }
    return cost;
}

}  // namespace

std::vector<Port> allocate_ports(const RegionShape& target,
                                 const std::vector<RegionShape>& sources) {
    std::vector<Port> ports;
    if (sources.empty()) return ports;
    if (sources.size() == 1) {
        ports.push_back({sources[0].id, 0.0, 2.0 * kPi});
        return ports;
    }
    const int n = int(sources.size());
    double total_area = 0.0;
    for (const RegionShape& s : sources) total_area += s.area;
    std::vector<double> widths(n), bearings(n);
    for (int i = 0; i < n; ++i) {
        widths[i] = 2.0 * kPi * sources[i].area / total_area;
        Vec2 d = sources[i].centroid - target.centroid;
        bearings[i] = std::atan2(d.y, d.x);
    }

    std::vector<int> best_order;
    double best_theta0 = 0.0;
    double best_cost = std::numeric_limits<double>::max();

    auto consider = [&](const std::vector<int>& order) {
        // The optimal offset aligns some sector mid-angle with its bearing;
        // scan those candidates.
        double acc = 0.0;
        for (int k = 0; k < n; ++k) {
            double theta0 = bearings[order[k]] - (acc + widths[order[k]] / 2.0);
            double cost = ordering_cost(order, widths, bearings, theta0);
            if (cost < best_cost - 1e-12) {
                best_cost = cost;
                best_order = order;
                best_theta0 = theta0;
            }
            acc += widths[order[k]];
        }
    };

    if (n <= 6) {
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        // First element fixed: circular orderings only.
        std::vector<int> rest(perm.begin() + 1, perm.end());
        std::sort(rest.begin(), rest.end());
        do {
            std::vector<int> order{0};
            order.insert(order.end(), rest.begin(), rest.end());
            consider(order);
        } while (std::next_permutation(rest.begin(), rest.end()));
    } else {
        // Greedy: sectors in bearing order.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return bearings[a] < bearings[b]; });
        consider(order);
    }

    double acc = best_theta0;
    for (int idx : best_order) {
        ports.push_back({sources[idx].id, acc, widths[idx]});
        acc += widths[idx];
    }
    // Normalize sector starts into [0, 2 pi).
    for (Port& p : ports) {
        while (p.begin < 0.0) p.begin += 2.0 * kPi;
        while (p.begin >= 2.0 * kPi) p.begin -= 2.0 * kPi;
    }
    std::sort(ports.begin(), ports.end(), [](const Port& a, const Port& b) {
        return a.begin < b.begin;
    });
    return ports;
}

namespace {

bool angle_in_port(double angle, const Port& p) {
    double a = angle - p.begin;
    while (a < 0.0) a += 2.0 * kPi;
    while (a >= 2.0 * kPi) a -= 2.0 * kPi;
    return a < p.width;
}

}  // namespace

// ---- Alignment scenes ---------------------------------------------------------------

AlignmentScene build_alignment_scene(const std::vector<RegionShape>& sources,
                                     const std::vector<RegionShape>& targets,
                                     const AlignmentConfig& cfg) {
    AlignmentScene scene;
    scene.sources = sources;
    scene.targets = targets;
    std::vector<Vec2> all_pts;
    for (const RegionShape& r : sources)
        all_pts.insert(all_pts.end(), r.contour_physical.points.begin(),
                       r.contour_physical.points.end());
    for (const RegionShape& r : targets)
        all_pts.insert(all_pts.end(), r.contour_physical.points.begin(),
                       r.contour_physical.points.end());
    scene.frame = fit_frame(all_pts, cfg.grid_target_px, cfg.grid_margin_px);

    for (const RegionShape& r : sources)
        scene.source_masks.push_back(
            rasterize_polygon(contour_to_grid(r.contour_physical, scene.frame), scene.frame));
    for (const RegionShape& r : targets) {
        Contour g = contour_to_grid(r.contour_physical, scene.frame);
        scene.target_masks.push_back(rasterize_polygon(g, scene.frame));
        scene.target_sdfs.push_back(signed_distance(g, scene.frame));
    }
    return scene;
}

namespace {

ScalarGrid mask_to_grid(const std::vector<std::uint8_t>& mask, const GridFrame& frame) {
    ScalarGrid g(frame);
    for (std::size_t k = 0; k < mask.size(); ++k) g.values[k] = mask[k] ? 1.0 : 0.0;
    return g;
}

// Value map for one source: max over its targets' SDFs, sector penalties for
// co-sources, corridor rewards between multiple targets.
ScalarGrid build_value_map(const AlignmentScene& scene, int source_idx,
                           const std::vector<int>& target_idx,
                           const std::vector<std::vector<int>>& co_sources,
                           const AlignmentConfig& cfg, bool* constrained) {
    const GridFrame& f = scene.frame;
    *constrained = false;

    // Per-target SDF copies with sector penalties inside the target interior.
    std::vector<ScalarGrid> vmaps;
    for (std::size_t k = 0; k < target_idx.size(); ++k) {
        int t = target_idx[k];
        ScalarGrid v = scene.target_sdfs[t];
        if (!co_sources[k].empty()) {
            *constrained = true;
            std::vector<RegionShape> participants{scene.sources[source_idx]};
            for (int cs : co_sources[k]) participants.push_back(scene.sources[cs]);
            std::vector<Port> ports = allocate_ports(scene.targets[t], participants);
            Vec2 center = world_to_grid(scene.targets[t].centroid, f);
            for (int iy = 0; iy < f.ny; ++iy)
                for (int ix = 0; ix < f.nx; ++ix) {
                    if (!scene.target_masks[t][std::size_t(iy) * f.nx + ix]) continue;
                    double ang = std::atan2(iy - center.y, ix - center.x);
                    for (const Port& p : ports) {
                        if (p.source_id != scene.sources[source_idx].id &&
                            angle_in_port(ang, p)) {
                            v.at(ix, iy) = cfg.penalty;
                            break;
                        }
                    }
                }
        }
        vmaps.push_back(std::move(v));
    }

    if (vmaps.size() == 1) return vmaps[0];

    // Composite map: pointwise max, then boost the inter-target corridor.
    *constrained = true;
    double max_sdf = 0.0;
    for (int t : target_idx) max_sdf = std::max(max_sdf, scene.target_sdfs[t].max_abs());
    double reward = cfg.reward_scale * max_sdf;

    ScalarGrid out(f);
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            double top1 = -std::numeric_limits<double>::max();
            double top2 = top1;
            for (const ScalarGrid& v : vmaps) {
                double val = v.at(ix, iy);
                if (val > top1) { top2 = top1; top1 = val; }
                else if (val > top2) { top2 = val; }
            }
            double val = top1;
            if (top1 > -cfg.corridor_width_px && top2 > -cfg.corridor_width_px)
                val += reward;
            out.at(ix, iy) = val;
        }
    return out;
}

int count_mask_overlap(const std::vector<std::uint8_t>& shifted_from,
                       const std::vector<std::uint8_t>& target_mask,
                       const GridFrame& f, const std::array<int, 2>& shift) {
    int overlap = 0;
    for (int iy = 0; iy < f.ny; ++iy)
        for (int ix = 0; ix < f.nx; ++ix) {
            if (!shifted_from[std::size_t(iy) * f.nx + ix]) continue;
            int jx = ix + shift[0], jy = iy + shift[1];
            if (jx < 0 || jy < 0 || jx >= f.nx || jy >= f.ny) continue;
            if (target_mask[std::size_t(jy) * f.nx + jx]) ++overlap;
        }
    return overlap;
}

}  // namespace

std::vector<DisplacementEstimate> align_multi_source_single_target(
    const AlignmentScene& scene, const std::vector<int>& source_idx, int target_idx,
    const AlignmentConfig& cfg) {
    // Descending area processing order.
    std::vector<int> order = source_idx;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scene.sources[a].area != scene.sources[b].area)
            return scene.sources[a].area > scene.sources[b].area;
        return a < b;
    });
    std::vector<DisplacementEstimate> by_input(source_idx.size());
    for (int s : order) {
        std::vector<int> peers;
        for (int o : source_idx)
            if (o != s) peers.push_back(o);
        bool constrained = false;
        ScalarGrid v = build_value_map(scene, s, {target_idx}, {peers}, cfg, &constrained);
        ScalarGrid mask = mask_to_grid(scene.source_masks[s], scene.frame);
        DisplacementEstimate est = estimate_shift(mask, v);
        est.source_id = scene.sources[s].id;
        est.constrained = constrained;
        for (std::size_t i = 0; i < source_idx.size(); ++i)
            if (source_idx[i] == s) by_input[i] = est;
    }
    return by_input;
}

DisplacementEstimate align_single_source_multi_target(const AlignmentScene& scene,
                                                      int source_idx,
                                                      const std::vector<int>& target_idx,
                                                      const AlignmentConfig& cfg) {
    bool constrained = false;
    std::vector<std::vector<int>> no_peers(target_idx.size());
    ScalarGrid v = build_value_map(scene, source_idx, target_idx, no_peers, cfg, &constrained);
    ScalarGrid mask = mask_to_grid(scene.source_masks[source_idx], scene.frame);
    DisplacementEstimate est = estimate_shift(mask, v);
    est.source_id = scene.sources[source_idx].id;
    est.constrained = constrained;
    int touched = 0;
    for (int t : target_idx)
        if (count_mask_overlap(scene.source_masks[source_idx], scene.target_masks[t],
                               scene.frame, est.shift_px) > 0)
            ++touched;
    est.straddles = touched >= 2;
    return est;
}

AssociationResult decompose_and_align(const AssociationMatrix& a,
                                      const std::vector<RegionShape>& sources,
                                      const std::vector<RegionShape>& targets,
                                      const AlignmentConfig& cfg) {
    AssociationResult out;
    out.pruned = a;
    out.displacements.assign(sources.size(), {});
    if (sources.empty()) return out;

    AlignmentScene scene = build_alignment_scene(sources, targets, cfg);

    // One subtree per source: its targets plus co-sources at each target.
    for (int s = 0; s < int(sources.size()); ++s) {
        Subtree st;
        st.root_source = s;
        for (int t = 0; t < a.n_targets; ++t) {
            if (!a.at(s, t)) continue;
            st.targets.push_back(t);
            std::vector<int> co;
            for (int o = 0; o < a.n_sources; ++o)
                if (o != s && a.at(o, t)) co.push_back(o);
            st.co_sources.push_back(std::move(co));
        }
        out.subtrees.push_back(std::move(st));
    }

    std::vector<int> order(sources.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        if (sources[x].area != sources[y].area) return sources[x].area > sources[y].area;
        return x < y;
    });

    for (int s : order) {
        const Subtree& st = out.subtrees[s];
        DisplacementEstimate est;
        est.source_id = sources[s].id;
        if (!st.targets.empty()) {
            bool constrained = false;
            ScalarGrid v = build_value_map(scene, s, st.targets, st.co_sources, cfg, &constrained);
            ScalarGrid mask = mask_to_grid(scene.source_masks[s], scene.frame);
            est = estimate_shift(mask, v);
            est.source_id = sources[s].id;
            est.constrained = constrained;
            int touched = 0;
            for (int t : st.targets)
                if (count_mask_overlap(scene.source_masks[s], scene.target_masks[t],
                                       scene.frame, est.shift_px) > 0)
                    ++touched;
            est.straddles = touched >= 2;

            // Prune association edges with no realized overlap.
            int source_px = 0;
            for (std::uint8_t m : scene.source_masks[s]) source_px += m;
            for (int t : st.targets) {
                int overlap = count_mask_overlap(scene.source_masks[s], scene.target_masks[t],
                                                 scene.frame, est.shift_px);
                if (double(overlap) < cfg.prune_overlap_fraction * double(source_px)) {
                    out.pruned.at(s, t) = 0;
                    out.pruned_edges.push_back({s, t});
                }
            }
        }
        out.displacements[s] = est;
    }
    std::sort(out.pruned_edges.begin(), out.pruned_edges.end());
    return out;
}

}  // namespace strata
