#include "strata/morphing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

namespace strata {

namespace {

// Union signed distance of several closed contours (pointwise max).
ScalarGrid union_sdf(const std::vector<Contour>& contours, const GridFrame& frame) {
    if (contours.empty()) throw Error(ErrorKind::EmptyInput, "union_sdf: no contours");
    ScalarGrid out = signed_distance(contours[0], frame);
    for (std::size_t i = 1; i < contours.size(); ++i) {
        ScalarGrid s = signed_distance(contours[i], frame);
        for (std::size_t k = 0; k < out.values.size(); ++k)
            out.values[k] = std::max(out.values[k], s.values[k]);
    }
    return out;
}

// Gradient of the bilinear surface, centered stencil of half a pixel.
Vec2 sampled_gradient(const ScalarGrid& g, const Vec2& p) {
    const double h = 0.5;
    double gx = (g.sample(p.x + h, p.y) - g.sample(p.x - h, p.y)) / (2.0 * h);
    double gy = (g.sample(p.x, p.y + h) - g.sample(p.x, p.y - h)) / (2.0 * h);
    return {gx, gy};
}

// Re-initialize phi to exact distance from its current zero-interface
// polylines, keeping the existing sign.
void redistance(ScalarGrid& phi) {
    std::vector<Contour> loops = extract_iso_contours(phi, 0.0);
    if (loops.empty()) return;
    std::vector<Vec2> a, b;
    for (const Contour& loop : loops) {
        std::size_t n = loop.points.size();
        for (std::size_t i = 0; i < n; ++i) {
            a.push_back(loop.points[i]);
            b.push_back(loop.points[(i + 1) % n]);
        }
    }
    SegmentDistanceField field(a, b, phi.frame);
    for (int iy = 0; iy < phi.frame.ny; ++iy)
        for (int ix = 0; ix < phi.frame.nx; ++ix) {
            double d = field.distance({double(ix), double(iy)});
            double old = phi.at(ix, iy);
            phi.at(ix, iy) = old >= 0.0 ? d : -d;
        }
}

double band_deviation(const ScalarGrid& phi, const ScalarGrid& target, double band_px) {
    double dev = 0.0;
    for (std::size_t k = 0; k < phi.values.size(); ++k)
        if (std::fabs(target.values[k]) <= band_px)
            dev = std::max(dev, std::fabs(phi.values[k] - target.values[k]));
    return dev;
}

std::vector<InterfaceSample> interface_pixels_of(const ScalarGrid& phi) {
    // The half-pixel band plus, on diagonal stretches where the band skips a
    // zero crossing, the nearer pixel of the sign-change pair. Keeps the band
    // one pixel wide while leaving no crossing unrepresented. Each sample
    // carries its center projected onto the zero level.
    const int nx = phi.frame.nx, ny = phi.frame.ny;
    std::vector<InterfaceSample> out;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            double v = phi.at(ix, iy);
            double av = std::fabs(v);
            bool take = av <= 0.5;
            if (!take && av <= 0.7072) {
                for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                    int jx = ix + dx, jy = iy + dy;
                    if (jx < 0 || jy < 0 || jx >= nx || jy >= ny) continue;
                    double w = phi.at(jx, jy);
                    if (v * w >= 0.0) continue;
                    double aw = std::fabs(w);
                    if (av < aw || (av == aw && (iy < jy || (iy == jy && ix < jx)))) {
                        take = true;
                        break;
                    }
                }
            }
            if (!take) continue;
            InterfaceSample s;
            s.px = {std::int16_t(ix), std::int16_t(iy)};
            Vec2 p{double(ix), double(iy)};
            Vec2 g = sampled_gradient(phi, p);
            double g2 = g.norm2();
            s.front = g2 > 1e-12 ? p - g * (v / g2) : p;
            out.push_back(s);
        }
    return out;
}

}  // namespace

LevelSetState init_level_set(const std::vector<Contour>& sources_grid,
                             const std::vector<Contour>& targets_grid,
                             const GridFrame& frame, const MorphParams& params) {
    LevelSetState state;
    state.phi = union_sdf(sources_grid, frame);
    state.speed = union_sdf(targets_grid, frame);
    double max_speed = state.speed.max_abs();
    state.dt = max_speed > 0.0 ? params.cfl / max_speed : params.cfl;
    state.step_index = 0;
    state.band_deviation = band_deviation(state.phi, state.speed, params.band_px);
    return state;
}

void morph_step(LevelSetState& state, const MorphParams& params) {
    const GridFrame& f = state.phi.frame;
    const int nx = f.nx, ny = f.ny;
    if (state.dt * state.speed.max_abs() > params.cfl + 1e-12)
        throw Error(ErrorKind::CflViolation, "morph_step: dt violates the CFL bound");

    ScalarGrid next(f);
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            double d = state.speed.at(ix, iy);
            if (d == 0.0) {
                next.at(ix, iy) = state.phi.at(ix, iy);
                continue;
            }
            double c = state.phi.at(ix, iy);
            double dxm = c - state.phi.at(std::max(ix - 1, 0), iy);
            double dxp = state.phi.at(std::min(ix + 1, nx - 1), iy) - c;
            double dym = c - state.phi.at(ix, std::max(iy - 1, 0));
            double dyp = state.phi.at(ix, std::min(iy + 1, ny - 1)) - c;
            double grad;
            if (d > 0.0) {
                // phi grows here; upwind direction follows the expanding front.
                double gx = std::max(std::min(dxm, 0.0) * std::min(dxm, 0.0),
                                     std::max(dxp, 0.0) * std::max(dxp, 0.0));
                double gy = std::max(std::min(dym, 0.0) * std::min(dym, 0.0),
                                     std::max(dyp, 0.0) * std::max(dyp, 0.0));
                grad = std::sqrt(gx + gy);
            } else {
                double gx = std::max(std::max(dxm, 0.0) * std::max(dxm, 0.0),
                                     std::min(dxp, 0.0) * std::min(dxp, 0.0));
                double gy = std::max(std::max(dym, 0.0) * std::max(dym, 0.0),
                                     std::min(dyp, 0.0) * std::min(dyp, 0.0));
                grad = std::sqrt(gx + gy);
            }
            next.at(ix, iy) = c + state.dt * d * grad;
        }
    }
    state.phi.values.swap(next.values);
    ++state.step_index;

    if (state.step_index % params.redistance_interval == 0) {
        redistance(state.phi);
        double dev = band_deviation(state.phi, state.speed, params.band_px);
        state.band_deviation = dev;
        if (dev <= params.band_tol_px) state.converged = true;
    }
}

std::vector<Particle> seed_particles(const std::vector<Contour>& sources_grid,
                                     const MorphParams& params) {
    std::vector<Particle> out;
    for (int ring = 0; ring < int(sources_grid.size()); ++ring) {
        const Contour& c = sources_grid[ring];
        int n = std::max(params.particles_min,
                         int(std::lround(c.perimeter() / params.particle_spacing_px)));
        Contour seeds = resample_contour(c, n);
        for (int k = 0; k < n; ++k) {
            Particle p;
            p.ring = ring;
            p.arc = double(k) / double(n);
            p.history.push_back(seeds.points[k]);
            out.push_back(std::move(p));
        }
    }
    return out;
}

void advect_particles(std::vector<Particle>& particles, const LevelSetState& state) {
    // Callers advance particles with the pre-step phi for direction and
    // project onto the post-step interface; here state.phi is the current
    // (post-step) field and direction sampling uses it directly, which is
    // equivalent at CFL-limited step sizes.
    const GridFrame& f = state.phi.frame;
    for (Particle& p : particles) {
        if (!p.alive) continue;
        Vec2 x = p.history.back();
        Vec2 g = sampled_gradient(state.phi, x);
        double mag = g.norm();
        if (mag > 1e-12) {
            Vec2 outward{-g.x / mag, -g.y / mag};
            double d = state.speed.sample(x.x, x.y);
            x = x + outward * (state.dt * d);
        }
        if (x.x < 1.0 || x.y < 1.0 || x.x > f.nx - 2.0 || x.y > f.ny - 2.0) {
            p.alive = false;
            continue;
        }
        // Project back onto the zero-interface along the gradient.
        Vec2 proj = x;
        bool ok = false;
        for (int it = 0; it < 8; ++it) {
            double v = state.phi.sample(proj.x, proj.y);
            if (std::fabs(v) < 0.05) {
                ok = true;
                break;
            }
            Vec2 gr = sampled_gradient(state.phi, proj);
            double g2 = gr.norm2();
            if (g2 < 1e-12) break;
            proj = proj - gr * (v / g2);
        }
        if (!ok || dist(proj, x) > 1.0) {
            p.alive = false;  // lost the wavefront
            continue;
        }
        if (proj.x < 1.0 || proj.y < 1.0 || proj.x > f.nx - 2.0 || proj.y > f.ny - 2.0) {
            p.alive = false;
            continue;
        }
        p.history.push_back(proj);
    }
}

TrackedMorph track_morph(const std::vector<Contour>& sources_grid,
                         const std::vector<Contour>& targets_grid,
                         const GridFrame& frame, const MorphParams& params) {
    TrackedMorph out;
    out.frame = frame;
    LevelSetState state = init_level_set(sources_grid, targets_grid, frame, params);
    out.particles = seed_particles(sources_grid, params);

    out.run.dt = state.dt;
    out.run.arrival = ScalarGrid(frame, -1.0);
    out.run.interface_pixels.push_back(interface_pixels_of(state.phi));
    for (const InterfaceSample& s : out.run.interface_pixels.back())
        out.run.arrival.at(s.px[0], s.px[1]) = 0.0;

    while (state.step_index < params.max_steps && !state.converged) {
        morph_step(state, params);
        advect_particles(out.particles, state);
        out.run.interface_pixels.push_back(interface_pixels_of(state.phi));
        for (const InterfaceSample& s : out.run.interface_pixels.back())
            if (out.run.arrival.at(s.px[0], s.px[1]) < 0.0)
                out.run.arrival.at(s.px[0], s.px[1]) = double(state.step_index);
    }
    out.run.converged = state.converged;
    out.run.steps = state.step_index;
    out.run.final_phi = state.phi;
    out.target_sdf = state.speed;
    return out;
}

// ---- Curvelets ---------------------------------------------------------------------

namespace {

// Deviation-capped binomial smoothing followed by even arc-length resampling.
std::vector<Vec2> regularize_chain(const std::vector<PixelCoord>& pixels, int n_points) {
    std::vector<Vec2> pts;
    pts.reserve(pixels.size());
    for (const PixelCoord& p : pixels) pts.push_back({double(p[0]), double(p[1])});
    if (pts.size() == 1) return std::vector<Vec2>(n_points, pts[0]);

    std::vector<Vec2> smooth = pts;
    for (int pass = 0; pass < 25; ++pass) {
        std::vector<Vec2> next = smooth;
        for (std::size_t i = 1; i + 1 < smooth.size(); ++i)
            next[i] = (smooth[i - 1] + smooth[i] * 2.0 + smooth[i + 1]) / 4.0;
        double worst = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) worst = std::max(worst, dist(next[i], pts[i]));
        if (worst > 1.0) break;
        smooth.swap(next);
    }

    // Uniform arc-length resample of the open polyline, endpoints included.
    std::vector<double> cum(smooth.size(), 0.0);
    for (std::size_t i = 1; i < smooth.size(); ++i)
        cum[i] = cum[i - 1] + dist(smooth[i - 1], smooth[i]);
    double total = cum.back();
    std::vector<Vec2> out;
    out.reserve(n_points);
    std::size_t seg = 0;
    for (int k = 0; k < n_points; ++k) {
        double s = total * double(k) / double(n_points - 1);
        while (seg + 1 < cum.size() - 1 && cum[seg + 1] < s) ++seg;
        double len = cum[seg + 1] - cum[seg];
        double t = len > 0.0 ? (s - cum[seg]) / len : 0.0;
        out.push_back(smooth[seg] + (smooth[seg + 1] - smooth[seg]) * t);
    }
    return out;
}

// Point of an open polyline at arc fraction u in [0, 1].
Vec2 polyline_at(const std::vector<Vec2>& pts, double u) {
    if (pts.size() == 1) return pts[0];
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + dist(pts[i - 1], pts[i]);
    double s = std::clamp(u, 0.0, 1.0) * cum.back();
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (cum[i] >= s || i + 1 == pts.size()) {
            double len = cum[i] - cum[i - 1];
            double t = len > 0.0 ? (s - cum[i - 1]) / len : 0.0;
            return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
        }
    }
    return pts.back();
}

// Arc fraction of the polyline point nearest to q.
double nearest_param(const std::vector<Vec2>& pts, const Vec2& q) {
    if (pts.size() == 1) return 0.0;
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + dist(pts[i - 1], pts[i]);
    double best_d = std::numeric_limits<double>::max();
    double best_s = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        Vec2 ab = pts[i + 1] - pts[i];
        double len2 = ab.norm2();
        double t = len2 > 0.0 ? std::clamp((q - pts[i]).dot(ab) / len2, 0.0, 1.0) : 0.0;
        Vec2 p = pts[i] + ab * t;
        double d = dist(q, p);
        if (d < best_d) {
            best_d = d;
            best_s = cum[i] + t * std::sqrt(len2);
        }
    }
    return cum.back() > 0.0 ? best_s / cum.back() : 0.0;
}

}  // namespace

std::vector<std::vector<Curvelet>> detect_uncovered_curvelets(
    const std::vector<std::vector<InterfaceSample>>& interface_pixels,
    const std::vector<Particle>& particles, const MorphParams& params) {
    std::vector<std::vector<Curvelet>> out(interface_pixels.size());
    // The converged interface can sit band_tol_px off the target contour, so
    // coverage must be judged that much tighter than the divergence radius or
    // borderline segments get missed.
    const double r = std::max(params.divergence_px - params.band_tol_px, 0.5);
    const double cell = std::max(r + 1.0, 1.0);

    for (std::size_t step = 0; step < interface_pixels.size(); ++step) {
        // Live particle positions at this step, hashed on a coarse lattice.
        std::unordered_map<std::int64_t, std::vector<Vec2>> hash;
        for (const Particle& p : particles) {
            if (p.history.size() <= step) continue;
            const Vec2& x = p.history[step];
            std::int64_t cx = std::int64_t(std::floor(x.x / cell));
            std::int64_t cy = std::int64_t(std::floor(x.y / cell));
            hash[(cx << 24) ^ cy].push_back(x);
        }
        auto covered = [&](const Vec2& q) {
            std::int64_t cx = std::int64_t(std::floor(q.x / cell));
            std::int64_t cy = std::int64_t(std::floor(q.y / cell));
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                    auto it = hash.find(((cx + dx) << 24) ^ (cy + dy));
                    if (it == hash.end()) continue;
                    for (const Vec2& x : it->second)
                        if (dist(q, x) <= r) return true;
                }
            return false;
        };

        std::vector<PixelCoord> uncovered;
        for (const InterfaceSample& s : interface_pixels[step])
            if (!covered(s.front)) uncovered.push_back(s.px);
        if (uncovered.empty()) continue;

        // 8-connected chains in deterministic order.
        std::map<std::pair<int, int>, int> index;
        for (int i = 0; i < int(uncovered.size()); ++i)
            index[{uncovered[i][0], uncovered[i][1]}] = i;
        std::vector<char> visited(uncovered.size(), 0);
        auto neighbors = [&](const PixelCoord& p) {
            std::vector<int> nb;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!dx && !dy) continue;
                    auto it = index.find({p[0] + dx, p[1] + dy});
                    if (it != index.end()) nb.push_back(it->second);
                }
            return nb;
        };

        for (int seed = 0; seed < int(uncovered.size()); ++seed) {
            if (visited[seed]) continue;
            // Collect the connected group.
            std::vector<int> group, stack{seed};
            visited[seed] = 1;
            while (!stack.empty()) {
                int cur = stack.back();
                stack.pop_back();
                group.push_back(cur);
                for (int nb : neighbors(uncovered[cur]))
                    if (!visited[nb]) { visited[nb] = 1; stack.push_back(nb); }
            }
            std::sort(group.begin(), group.end());

            // Prefer a degree-1 endpoint as the walk start.
            int start = group[0];
            for (int g : group) {
                int deg = 0;
                for (int nb : neighbors(uncovered[g])) {
                    (void)nb;
                    ++deg;
                }
                if (deg == 1) { start = g; break; }
            }
            std::vector<char> walked(uncovered.size(), 0);
            std::vector<PixelCoord> chain;
            int cur = start;
            walked[cur] = 1;
            chain.push_back(uncovered[cur]);
            for (;;) {
                int next = -1;
                double best = std::numeric_limits<double>::max();
                for (int nb : neighbors(uncovered[cur])) {
                    if (walked[nb]) continue;
                    double d = std::hypot(uncovered[nb][0] - uncovered[cur][0],
                                          uncovered[nb][1] - uncovered[cur][1]);
                    if (d < best || (d == best && nb < next)) { best = d; next = nb; }
                }
                if (next < 0) break;
                walked[next] = 1;
                chain.push_back(uncovered[next]);
                cur = next;
            }

            Curvelet c;
            c.step = int(step);
            c.pixels = chain;
            int n_pts = std::max(params.curvelet_min_points,
                                 int(std::lround(double(chain.size()) / params.curvelet_px_per_point)));
            c.regular = regularize_chain(chain, n_pts);
            out[step].push_back(std::move(c));
        }
    }
    return out;
}

namespace {

// Pixel buckets of one step's curvelets, built lazily during backtracking.
struct StepBuckets {
    std::unordered_map<std::int64_t, std::vector<std::pair<Vec2, int>>> hash;
    double cell = 1.0;

    static StepBuckets build(const std::vector<Curvelet>& curvelets, double cell) {
        StepBuckets b;
        b.cell = cell;
        for (int k = 0; k < int(curvelets.size()); ++k)
            for (const PixelCoord& px : curvelets[k].pixels) {
                Vec2 p{double(px[0]), double(px[1])};
                std::int64_t cx = std::int64_t(std::floor(p.x / cell));
                std::int64_t cy = std::int64_t(std::floor(p.y / cell));
                b.hash[(cx << 24) ^ cy].push_back({p, k});
            }
        return b;
    }

    int nearest(const Vec2& q, double radius) const {
        std::int64_t cx = std::int64_t(std::floor(q.x / cell));
        std::int64_t cy = std::int64_t(std::floor(q.y / cell));
        double best = radius;
        int id = -1;
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                auto it = hash.find(((cx + dx) << 24) ^ (cy + dy));
                if (it == hash.end()) continue;
                for (const auto& [p, k] : it->second) {
                    double d = dist(q, p);
                    if (d < best || (d == best && k < id)) {
                        best = d;
                        id = k;
                    }
                }
            }
        return id;
    }
};

// Association of one curvelet to the nearest earlier step carrying a match;
// coverage flicker is bridged by the lookback window.
struct StepMatch {
    int t = -1;                      // matched step, -1 when the family ends
    std::vector<int> ids;            // per regularized index
    std::vector<double> params;
};

}  // namespace

std::vector<CurveletTrack> backtrack_curvelets(
    const std::vector<std::vector<Curvelet>>& per_step, const MorphParams& params) {
    std::vector<CurveletTrack> tracks;
    if (per_step.empty()) return tracks;
    int last = int(per_step.size()) - 1;
    if (per_step[last].empty()) return tracks;

    const double cell = std::max(params.curvelet_assoc_px, 1.0);
    std::map<int, StepBuckets> buckets;
    auto buckets_at = [&](int t) -> const StepBuckets& {
        auto it = buckets.find(t);
        if (it == buckets.end())
            it = buckets.emplace(t, StepBuckets::build(per_step[t], cell)).first;
        return it->second;
    };

    std::map<std::pair<int, int>, StepMatch> memo;  // (step, curvelet) -> match
    auto match_of = [&](int s, int c) -> const StepMatch& {
        auto it = memo.find({s, c});
        if (it != memo.end()) return it->second;
        StepMatch m;
        const std::vector<Vec2>& reg = per_step[s][c].regular;
        int n = int(reg.size());
        for (int t = s - 1; t >= std::max(0, s - 1 - params.curvelet_lookback_steps); --t) {
            if (per_step[t].empty()) continue;
            const StepBuckets& b = buckets_at(t);
            std::vector<int> ids(n, -1);
            bool any = false;
            for (int i = 0; i < n; ++i) {
                ids[i] = b.nearest(reg[i], params.curvelet_assoc_px);
                if (ids[i] >= 0) any = true;
            }
            if (!any) continue;
            m.t = t;
            m.ids.assign(n, -1);
            m.params.assign(n, 0.0);
            // Interval mapping per contiguous run of one matched curvelet:
            // the run is collectively mapped onto the earlier regularized
            // curvelet rather than point-by-point.
            int i = 0;
            while (i < n) {
                if (ids[i] < 0) { ++i; continue; }
                int j = i;
                while (j + 1 < n && ids[j + 1] == ids[i]) ++j;
                const std::vector<Vec2>& prev_reg = per_step[t][ids[i]].regular;
                double ua = nearest_param(prev_reg, reg[i]);
                double ub = nearest_param(prev_reg, reg[j]);
                for (int k = i; k <= j; ++k) {
                    double frac = j > i ? double(k - i) / double(j - i) : 0.0;
                    m.ids[k] = ids[i];
                    m.params[k] = ua + (ub - ua) * frac;
                }
                i = j + 1;
            }
            break;
        }
        return memo.emplace(std::pair{s, c}, std::move(m)).first->second;
    };

    for (int c = 0; c < int(per_step[last].size()); ++c) {
        const Curvelet& cv = per_step[last][c];
        for (int n = 0; n < int(cv.regular.size()); ++n) {
            CurveletTrack track;
            track.points.push_back(cv.regular[n]);
            track.begin_step = last;
            track.end_step = last;

            int s = last;
            int cur_c = c;
            double u = cv.regular.size() > 1 ? double(n) / double(cv.regular.size() - 1) : 0.0;
            while (s > 0) {
                const StepMatch& m = match_of(s, cur_c);
                if (m.t < 0) break;
                const std::vector<Vec2>& reg = per_step[s][cur_c].regular;
                int nn = int(reg.size());
                double ci = u * double(nn - 1);
                int i0 = std::clamp(int(std::floor(ci)), 0, nn - 1);
                int i1 = std::min(i0 + 1, nn - 1);
                int k = -1;
                double nu = 0.0;
                if (m.ids[i0] >= 0 && m.ids[i0] == m.ids[i1]) {
                    double frac = ci - double(i0);
                    k = m.ids[i0];
                    nu = m.params[i0] * (1.0 - frac) + m.params[i1] * frac;
                } else if (m.ids[i0] >= 0) {
                    k = m.ids[i0];
                    nu = m.params[i0];
                } else if (m.ids[i1] >= 0) {
                    k = m.ids[i1];
                    nu = m.params[i1];
                }
                if (k < 0) break;
                track.points.push_back(polyline_at(per_step[m.t][k].regular, nu));
                track.begin_step = m.t;
                s = m.t;
                cur_c = k;
                u = nu;
            }
            std::reverse(track.points.begin(), track.points.end());
            track.orphan = track.begin_step == track.end_step;
            tracks.push_back(std::move(track));
        }
    }
    return tracks;
}

// ---- Trajectory assembly --------------------------------------------------------------

namespace {

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, int n_points) {
    if (pts.empty()) return {};
    if (pts.size() == 1) return std::vector<Vec2>(n_points, pts[0]);
    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + dist(pts[i - 1], pts[i]);
    double total = cum.back();
    std::vector<Vec2> out;
    out.reserve(n_points);
    if (total <= 0.0) return std::vector<Vec2>(n_points, pts[0]);
    std::size_t seg = 0;
    for (int k = 0; k < n_points; ++k) {
        double s = total * double(k) / double(n_points - 1);
        while (seg + 1 < cum.size() - 1 && cum[seg + 1] < s) ++seg;
        double len = cum[seg + 1] - cum[seg];
        double t = len > 0.0 ? (s - cum[seg]) / len : 0.0;
        out.push_back(pts[seg] + (pts[seg + 1] - pts[seg]) * t);
    }
    return out;
}

// Newton projection onto the zero level of an SDF; returns the moved point
// and the displacement used.
Vec2 project_to_zero(const ScalarGrid& sdf, const Vec2& start, double* moved) {
    Vec2 x = start;
    for (int it = 0; it < 8; ++it) {
        double v = sdf.sample(x.x, x.y);
        if (std::fabs(v) < 0.02) break;
        Vec2 g = sampled_gradient(sdf, x);
        double g2 = g.norm2();
        if (g2 < 1e-12) break;
        x = x - g * (v / g2);
    }
    if (moved) *moved = dist(start, x);
    return x;
}

}  // namespace

TrajectoryBundle merge_trajectories(const TrackedMorph& tracked,
                                    const std::vector<CurveletTrack>& tracks,
                                    const std::vector<Contour>& sources_grid,
                                    const std::vector<Contour>& targets_grid,
                                    const MorphParams& params) {
    TrajectoryBundle bundle;
    bundle.frame = tracked.frame;
    bundle.levels = params.levels;
    const int n_pts = params.levels + 1;

    // Final interface loops give endpoint ordering keys.
    std::vector<Contour> final_loops = extract_iso_contours(tracked.run.final_phi, 0.0);
    auto endpoint_key = [&](const Vec2& e) -> std::pair<int, double> {
        int best_loop = 0;
        double best_d = std::numeric_limits<double>::max();
        double best_u = 0.0;
        for (int l = 0; l < int(final_loops.size()); ++l) {
            double d = max_distance_to_contour({e}, final_loops[l]);
            if (d < best_d) {
                best_d = d;
                best_loop = l;
                std::vector<Vec2> closed = final_loops[l].points;
                closed.push_back(closed.front());
                best_u = nearest_param(closed, e);
            }
        }
        return {best_loop, best_u};
    };

    struct Pending {
        Trajectory traj;
        int ring;
        double arc;
        double sub;
    };
    std::vector<Pending> pending;

    // Branch points inside the source region (e.g. a collapsing corridor
    // between lobes) anchor by a straight trunk regardless of distance; the
    // source_attach_px guard applies only outside.
    ScalarGrid source_sdf = union_sdf(sources_grid, tracked.frame);

    // Reference rings share the particle seeds' start-point convention so arc
    // fractions are comparable across provenances.
    std::vector<std::vector<Vec2>> ref_rings;
    for (const Contour& c : sources_grid) {
        Contour ref = resample_contour(c, std::max<int>(128, int(c.perimeter())));
        std::vector<Vec2> closed = ref.points;
        closed.push_back(closed.front());
        ref_rings.push_back(std::move(closed));
    }

    // Particle trajectories. Endpoint keys are remembered for trunk lookups.
    std::vector<std::pair<int, double>> particle_keys(tracked.particles.size(), {0, 0.0});
    for (std::size_t i = 0; i < tracked.particles.size(); ++i) {
        const Particle& p = tracked.particles[i];
        if (!p.alive) {
            ++bundle.n_dropped_particles;
            continue;
        }
        std::vector<Vec2> path = p.history;
        double moved = 0.0;
        Vec2 snapped = project_to_zero(tracked.target_sdf, path.back(), &moved);
        if (moved > 1.5) {
            ++bundle.n_dropped_particles;
            continue;
        }
        path.push_back(snapped);
        particle_keys[i] = endpoint_key(snapped);
        Pending pe;
        pe.traj.levels = resample_polyline(path, n_pts);
        pe.traj.ring = p.ring;
        pe.traj.arc = p.arc;
        pe.traj.sub_order = 0.0;
        pe.traj.provenance = Provenance::ParticleTrack;
        pe.ring = p.ring;
        pe.arc = p.arc;
        pe.sub = 0.0;
        pending.push_back(std::move(pe));
    }

    // Curvelet tracks: attach a trunk, then normalize.
    for (const CurveletTrack& tr : tracks) {
        if (tr.points.empty()) continue;
        Vec2 branch = tr.points.front();
        int t_b = tr.begin_step;

        // Trunk donors include particles that died losing the front: a lost
        // particle's final position marks exactly where tracking failed.
        int trunk_particle = -1;
        int trunk_step = t_b;
        double best = params.branch_attach_px;
        for (int i = 0; i < int(tracked.particles.size()); ++i) {
            const Particle& p = tracked.particles[i];
            for (int dt = 0; dt <= params.branch_attach_steps; ++dt) {
                int t = t_b - dt;
                if (t < 0) break;
                int idx = std::min(t, int(p.history.size()) - 1);
                double d = dist(p.history[idx], branch);
                if (d < best) {
                    best = d;
                    trunk_particle = i;
                    trunk_step = idx;
                }
            }
        }

        std::vector<Vec2> path;
        int ring = 0;
        double arc = 0.0, sub = 0.0;
        if (trunk_particle >= 0) {
            const Particle& p = tracked.particles[trunk_particle];
            path.assign(p.history.begin(), p.history.begin() + trunk_step + 1);
            ring = p.ring;
            arc = p.arc;
        } else {
            // Straight trunk from the nearest source-contour point.
            bool interior = source_sdf.sample(branch.x, branch.y) > 0.0;
            double best_d = interior ? std::numeric_limits<double>::max()
                                     : params.source_attach_px;
            bool found = false;
            for (int r = 0; r < int(ref_rings.size()); ++r) {
                double u = nearest_param(ref_rings[r], branch);
                Vec2 q = polyline_at(ref_rings[r], u);
                double d = dist(q, branch);
                if (d < best_d) {
                    best_d = d;
                    found = true;
                    ring = r;
                    arc = u;
                    path.assign(1, q);
                }
            }
            if (!found) {
                ++bundle.n_dropped_tracks;
                continue;
            }
        }
        path.insert(path.end(), tr.points.begin(), tr.points.end());
        double moved = 0.0;
        Vec2 snapped = project_to_zero(tracked.target_sdf, path.back(), &moved);
        if (moved > 1.5) {
            ++bundle.n_dropped_tracks;
            continue;
        }
        path.push_back(snapped);

        auto key = endpoint_key(snapped);
        if (trunk_particle >= 0) {
            auto pk = particle_keys[trunk_particle];
            if (key.first == pk.first) {
                double d = key.second - pk.second;
                while (d < -0.5) d += 1.0;
                while (d >= 0.5) d -= 1.0;
                sub = d;
            } else {
                sub = double(key.first - pk.first);
            }
        } else {
            sub = key.second - 0.5;
        }

        Pending pe;
        pe.traj.levels = resample_polyline(path, n_pts);
        pe.traj.ring = ring;
        pe.traj.arc = arc;
        pe.traj.sub_order = sub;
        pe.traj.provenance = Provenance::CurveletBacktrack;
        pe.ring = ring;
        pe.arc = arc;
        pe.sub = sub;
        pending.push_back(std::move(pe));
    }

    std::sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
        if (a.ring != b.ring) return a.ring < b.ring;
        if (a.arc != b.arc) return a.arc < b.arc;
        return a.sub < b.sub;
    });
    for (Pending& p : pending) bundle.trajectories.push_back(std::move(p.traj));
    return bundle;
}

double target_coverage(const TrajectoryBundle& bundle,
                       const std::vector<Contour>& targets_grid, double radius_px) {
    std::vector<Vec2> endpoints;
    for (const Trajectory& t : bundle.trajectories)
        if (!t.levels.empty()) endpoints.push_back(t.levels.back());
    int covered = 0, total = 0;
    for (const Contour& c : targets_grid) {
        double perim = c.perimeter();
        int n = std::max(16, int(perim));
        for (int k = 0; k < n; ++k) {
            Vec2 q = point_at_arc_fraction(c, double(k) / n);
            ++total;
            for (const Vec2& e : endpoints) {
                if (dist(q, e) <= radius_px) {
                    ++covered;
                    break;
                }
            }
        }
    }
    return total > 0 ? double(covered) / double(total) : 0.0;
}

}  // namespace strata
