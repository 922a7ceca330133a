#include "strata/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "strata/serialize.hpp"

namespace strata {

using nlohmann::json;

namespace {

json config_to_json(const PipelineConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["geozones"] = c.geozones;
    j["bench_height"] = c.bench_height;
    j["mu_lower"] = c.mu_lower;
    j["extraction"] = json{
        {"neighbor_radius", c.extraction.neighbor_radius},
        {"entropy_threshold", c.extraction.entropy_threshold},
        {"orient_neighbors", c.extraction.orient_neighbors},
        {"orient_gap", c.extraction.orient_gap},
        {"struct_neighbors", c.extraction.struct_neighbors},
        {"joint_neighbors", c.extraction.joint_neighbors},
        {"grid_target_px", c.extraction.grid_target_px},
        {"grid_margin_px", c.extraction.grid_margin_px},
        {"init_inflate_px", c.extraction.init_inflate_px},
        {"gvf_mu", c.extraction.gvf_mu},
        {"gvf_iters", c.extraction.gvf_iters},
        {"gvf_force_floor", c.extraction.gvf_force_floor},
        {"min_component_samples", c.extraction.min_component_samples},
        {"snake",
         json{{"alpha", c.extraction.snake.alpha},
              {"beta", c.extraction.snake.beta},
              {"tau", c.extraction.snake.tau},
              {"force_weight", c.extraction.snake.force_weight},
              {"points", c.extraction.snake.points},
              {"max_iters", c.extraction.snake.max_iters},
              {"converge_px", c.extraction.snake.converge_px}}},
    };
    j["alignment"] = json{
        {"penalty", c.alignment.penalty},
        {"reward_scale", c.alignment.reward_scale},
        {"corridor_width_px", c.alignment.corridor_width_px},
        {"prune_overlap_fraction", c.alignment.prune_overlap_fraction},
        {"grid_target_px", c.alignment.grid_target_px},
        {"grid_margin_px", c.alignment.grid_margin_px},
    };
    j["morph"] = json{
        {"cfl", c.morph.cfl},
        {"max_steps", c.morph.max_steps},
        {"redistance_interval", c.morph.redistance_interval},
        {"band_px", c.morph.band_px},
        {"band_tol_px", c.morph.band_tol_px},
        {"particles_min", c.morph.particles_min},
        {"particle_spacing_px", c.morph.particle_spacing_px},
        {"divergence_px", c.morph.divergence_px},
        {"branch_attach_px", c.morph.branch_attach_px},
        {"source_attach_px", c.morph.source_attach_px},
        {"curvelet_min_points", c.morph.curvelet_min_points},
        {"curvelet_px_per_point", c.morph.curvelet_px_per_point},
        {"curvelet_assoc_px", c.morph.curvelet_assoc_px},
        {"curvelet_lookback_steps", c.morph.curvelet_lookback_steps},
        {"branch_attach_steps", c.morph.branch_attach_steps},
        {"levels", c.morph.levels},
        {"backtracking", c.morph.backtracking},
    };
    j["eval"] = json{
        {"raster_m", c.eval.raster_m},
        {"depth_step_m", c.eval.depth_step_m},
        {"max_depth_m", c.eval.max_depth_m},
    };
    return j;
}

void reject_unknown_keys(const json& input, const json& reference, const std::string& prefix) {
    for (auto it = input.begin(); it != input.end(); ++it) {
        if (!reference.contains(it.key()))
            throw Error(ErrorKind::ConfigError, "unknown config key: " + prefix + it.key());
        if (it.value().is_object() && reference[it.key()].is_object())
            reject_unknown_keys(it.value(), reference[it.key()], prefix + it.key() + ".");
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j[key].get<T>();
}

}  // namespace

void PipelineConfig::validate() const {
    auto fail = [](const std::string& msg) {
        throw Error(ErrorKind::ConfigError, "config: " + msg);
    };
    if (bench_height <= 0) fail("bench_height must be positive");
    if (extraction.entropy_threshold <= 0) fail("entropy_threshold must be positive");
    if (extraction.orient_gap <= 0 || extraction.orient_gap >= 2 * 3.14159265358979323846)
        fail("orient_gap must lie in (0, 2*pi)");
    if (extraction.orient_neighbors < 1) fail("orient_neighbors must be >= 1");
    if (extraction.struct_neighbors < 1) fail("struct_neighbors must be >= 1");
    if (extraction.grid_target_px < 32) fail("grid_target_px must be >= 32");
    if (extraction.gvf_mu <= 0) fail("gvf_mu must be positive");
    if (extraction.gvf_iters < 1) fail("gvf_iters must be >= 1");
    if (extraction.snake.points < 8) fail("snake.points must be >= 8");
    if (extraction.snake.tau <= 0) fail("snake.tau must be positive");
    if (alignment.prune_overlap_fraction < 0 || alignment.prune_overlap_fraction > 1)
        fail("prune_overlap_fraction must lie in [0, 1]");
    if (morph.cfl <= 0 || morph.cfl > 0.9) fail("morph.cfl must lie in (0, 0.9]");
    if (morph.max_steps < 1) fail("morph.max_steps must be >= 1");
    if (morph.redistance_interval < 1) fail("morph.redistance_interval must be >= 1");
    if (morph.levels < 1) fail("morph.levels must be >= 1");
    if (morph.divergence_px <= 0) fail("morph.divergence_px must be positive");
    if (eval.raster_m <= 0) fail("eval.raster_m must be positive");
    if (eval.depth_step_m <= 0 || eval.max_depth_m < eval.depth_step_m)
        fail("eval depth ladder is empty");
}

std::string PipelineConfig::canonical_json() const {
    json j = config_to_json(*this);
    j.erase("threads");  // execution parameter; results never depend on it
    return j.dump();
}

std::string PipelineConfig::digest() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical_json())));
    return buf;
}

PipelineConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("config parse: ") + e.what());
    }
    PipelineConfig c;
    reject_unknown_keys(j, config_to_json(c), "");

    maybe(j, "seed", c.seed);
    maybe(j, "threads", c.threads);
    maybe(j, "geozones", c.geozones);
    maybe(j, "bench_height", c.bench_height);
    maybe(j, "mu_lower", c.mu_lower);
    if (j.contains("extraction")) {
        const json& e = j["extraction"];
        maybe(e, "neighbor_radius", c.extraction.neighbor_radius);
        maybe(e, "entropy_threshold", c.extraction.entropy_threshold);
        maybe(e, "orient_neighbors", c.extraction.orient_neighbors);
        maybe(e, "orient_gap", c.extraction.orient_gap);
        maybe(e, "struct_neighbors", c.extraction.struct_neighbors);
        maybe(e, "joint_neighbors", c.extraction.joint_neighbors);
        maybe(e, "grid_target_px", c.extraction.grid_target_px);
        maybe(e, "grid_margin_px", c.extraction.grid_margin_px);
        maybe(e, "init_inflate_px", c.extraction.init_inflate_px);
        maybe(e, "gvf_mu", c.extraction.gvf_mu);
        maybe(e, "gvf_iters", c.extraction.gvf_iters);
        maybe(e, "gvf_force_floor", c.extraction.gvf_force_floor);
        maybe(e, "min_component_samples", c.extraction.min_component_samples);
        if (e.contains("snake")) {
            const json& s = e["snake"];
            maybe(s, "alpha", c.extraction.snake.alpha);
            maybe(s, "beta", c.extraction.snake.beta);
            maybe(s, "tau", c.extraction.snake.tau);
            maybe(s, "force_weight", c.extraction.snake.force_weight);
            maybe(s, "points", c.extraction.snake.points);
            maybe(s, "max_iters", c.extraction.snake.max_iters);
            maybe(s, "converge_px", c.extraction.snake.converge_px);
        }
    }
    if (j.contains("alignment")) {
        const json& a = j["alignment"];
        maybe(a, "penalty", c.alignment.penalty);
        maybe(a, "reward_scale", c.alignment.reward_scale);
        maybe(a, "corridor_width_px", c.alignment.corridor_width_px);
        maybe(a, "prune_overlap_fraction", c.alignment.prune_overlap_fraction);
        maybe(a, "grid_target_px", c.alignment.grid_target_px);
        maybe(a, "grid_margin_px", c.alignment.grid_margin_px);
    }
    if (j.contains("morph")) {
        const json& m = j["morph"];
        maybe(m, "cfl", c.morph.cfl);
        maybe(m, "max_steps", c.morph.max_steps);
        maybe(m, "redistance_interval", c.morph.redistance_interval);
        maybe(m, "band_px", c.morph.band_px);
        maybe(m, "band_tol_px", c.morph.band_tol_px);
        maybe(m, "particles_min", c.morph.particles_min);
        maybe(m, "particle_spacing_px", c.morph.particle_spacing_px);
        maybe(m, "divergence_px", c.morph.divergence_px);
        maybe(m, "branch_attach_px", c.morph.branch_attach_px);
        maybe(m, "source_attach_px", c.morph.source_attach_px);
        maybe(m, "curvelet_min_points", c.morph.curvelet_min_points);
        maybe(m, "curvelet_px_per_point", c.morph.curvelet_px_per_point);
        maybe(m, "curvelet_assoc_px", c.morph.curvelet_assoc_px);
        maybe(m, "curvelet_lookback_steps", c.morph.curvelet_lookback_steps);
        maybe(m, "branch_attach_steps", c.morph.branch_attach_steps);
        maybe(m, "levels", c.morph.levels);
        maybe(m, "backtracking", c.morph.backtracking);
    }
    if (j.contains("eval")) {
        const json& e = j["eval"];
        maybe(e, "raster_m", c.eval.raster_m);
        maybe(e, "depth_step_m", c.eval.depth_step_m);
        maybe(e, "max_depth_m", c.eval.max_depth_m);
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    return config_from_json_text(read_text_file(path));
}

// ---- Input ------------------------------------------------------------------------

std::vector<SamplePoint> load_samples(const std::string& path) {
    std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::ParseError, path + ": empty input");
    // Header check, tolerant of whitespace.
    std::string header = line;
    header.erase(std::remove_if(header.begin(), header.end(),
                                [](char ch) { return ch == ' ' || ch == '\r'; }),
                 header.end());
    if (header != "x,y,z,geozone")
        throw Error(ErrorKind::ParseError, path + ": expected header 'x,y,z,geozone'");
    std::vector<SamplePoint> samples;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string fx, fy, fz, fg;
        if (!std::getline(row, fx, ',') || !std::getline(row, fy, ',') ||
            !std::getline(row, fz, ',') || !std::getline(row, fg))
            throw Error(ErrorKind::ParseError,
                        path + ": malformed row at line " + std::to_string(lineno));
        SamplePoint p;
        char* end = nullptr;
        p.x = std::strtod(fx.c_str(), &end);
        if (end == fx.c_str()) throw Error(ErrorKind::ParseError, path + ": bad x at line " + std::to_string(lineno));
        p.y = std::strtod(fy.c_str(), &end);
        if (end == fy.c_str()) throw Error(ErrorKind::ParseError, path + ": bad y at line " + std::to_string(lineno));
        p.z = std::strtod(fz.c_str(), &end);
        if (end == fz.c_str()) throw Error(ErrorKind::ParseError, path + ": bad z at line " + std::to_string(lineno));
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw Error(ErrorKind::ParseError, path + ": non-finite coordinate at line " + std::to_string(lineno));
        while (!fg.empty() && (fg.front() == ' ')) fg.erase(fg.begin());
        while (!fg.empty() && (fg.back() == ' ')) fg.pop_back();
        if (fg.empty()) throw Error(ErrorKind::ParseError, path + ": empty geozone at line " + std::to_string(lineno));
        p.geozone = fg;
        samples.push_back(std::move(p));
    }
    if (samples.empty()) throw Error(ErrorKind::ParseError, path + ": no samples");
    return samples;
}

// ---- Extract stage ------------------------------------------------------------------

namespace {

double median_nn_spacing(const std::vector<std::vector<Vec2>>& per_section) {
    std::vector<double> nn;
    for (const auto& pts : per_section) {
        if (pts.size() < 2) continue;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double best = std::numeric_limits<double>::max();
            for (std::size_t k = 0; k < pts.size(); ++k) {
                if (k == i) continue;
                best = std::min(best, dist(pts[i], pts[k]));
            }
            nn.push_back(best);
        }
    }
    if (nn.empty()) return 1.0;
    std::sort(nn.begin(), nn.end());
    std::size_t n = nn.size();
    return n % 2 ? nn[n / 2] : 0.5 * (nn[n / 2 - 1] + nn[n / 2]);
}

}  // namespace

ExtractOutput stage_extract(const std::vector<SamplePoint>& samples,
                            const PipelineConfig& cfg, RunManifest* manifest) {
    if (samples.empty()) throw Error(ErrorKind::EmptyInput, "extract: no samples");
    ExtractOutput out;

    // Benches by distinct elevation, descending.
    std::map<double, std::vector<int>, std::greater<double>> benches;
    for (int i = 0; i < int(samples.size()); ++i) benches[samples[i].z].push_back(i);

    // Global label universe (entropy needs every geozone present).
    std::set<std::string> label_set;
    for (const SamplePoint& p : samples) label_set.insert(p.geozone);
    std::vector<std::string> labels(label_set.begin(), label_set.end());
    auto label_id = [&](const std::string& g) {
        return int(std::lower_bound(labels.begin(), labels.end(), g) - labels.begin());
    };

    std::vector<std::string> selected = cfg.geozones.empty() ? labels : cfg.geozones;
    for (const std::string& g : selected)
        if (!label_set.count(g))
            throw Error(ErrorKind::ConfigError, "config geozone not present in input: " + g);
    out.geozones = selected;

    struct SectionTask {
        double z;
        std::vector<Vec2> points;
        std::vector<int> point_labels;
    };
    std::vector<SectionTask> tasks;
    for (const auto& [z, idx] : benches) {
        SectionTask t;
        t.z = z;
        for (int i : idx) {
            t.points.push_back({samples[i].x, samples[i].y});
            t.point_labels.push_back(label_id(samples[i].geozone));
        }
        tasks.push_back(std::move(t));
    }

    {
        std::vector<std::vector<Vec2>> per_section;
        for (const auto& t : tasks) per_section.push_back(t.points);
        double med = median_nn_spacing(per_section);
        out.mu_lower = cfg.mu_lower > 0.0 ? cfg.mu_lower : 1.5 * med;
        out.neighbor_radius = cfg.extraction.neighbor_radius > 0.0
                                  ? cfg.extraction.neighbor_radius
                                  : 2.2 * med;
    }

    out.sections.resize(tasks.size());
    parallel_for(tasks.size(), cfg.threads, [&](std::size_t k) {
        const SectionTask& t = tasks[k];
        SectionData sd;
        sd.z = t.z;
        for (const std::string& zone : selected) {
            bool present = false;
            int zid = label_id(zone);
            for (int l : t.point_labels)
                if (l == zid) present = true;
            if (!present) continue;
            sd.by_geozone[zone] =
                extract_section_boundaries(t.points, t.point_labels, zid, cfg.extraction);
        }
        out.sections[k] = std::move(sd);
    });

    if (manifest) {
        for (const SectionData& sd : out.sections) {
            for (const auto& [zone, se] : sd.by_geozone) {
                char buf[160];
                for (int rid : se.rejected_components) {
                    std::snprintf(buf, sizeof(buf), "extract z=%.2f %s: component %d rejected",
                                  sd.z, zone.c_str(), rid);
                    manifest->warnings.push_back(buf);
                }
                for (const ExtractedRegion& r : se.regions) {
                    if (!r.converged) {
                        std::snprintf(buf, sizeof(buf),
                                      "extract z=%.2f %s: component %d snake not converged",
                                      sd.z, zone.c_str(), r.component_id);
                        manifest->warnings.push_back(buf);
                    }
                    if (r.self_intersecting) {
                        std::snprintf(buf, sizeof(buf),
                                      "extract z=%.2f %s: component %d self-intersecting",
                                      sd.z, zone.c_str(), r.component_id);
                        manifest->warnings.push_back(buf);
                    }
                }
            }
        }
    }
    return out;
}

// ---- Correspond stage ----------------------------------------------------------------

CorrespondOutput stage_correspond(const ExtractOutput& ex, const PipelineConfig& cfg,
                                  RunManifest* manifest) {
    struct PairTask {
        int upper;
        std::string geozone;
    };
    std::vector<PairTask> tasks;
    for (std::size_t k = 0; k + 1 < ex.sections.size(); ++k) {
        for (const std::string& zone : ex.geozones) {
            auto su = ex.sections[k].by_geozone.find(zone);
            auto sl = ex.sections[k + 1].by_geozone.find(zone);
            if (su == ex.sections[k].by_geozone.end() ||
                sl == ex.sections[k + 1].by_geozone.end())
                continue;
            if (su->second.regions.empty() || sl->second.regions.empty()) continue;
            tasks.push_back({int(k), zone});
        }
    }

    CorrespondOutput out;
    out.pairs.resize(tasks.size());
    parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
        const PairTask& t = tasks[i];
        const SectionExtraction& upper = ex.sections[t.upper].by_geozone.at(t.geozone);
        const SectionExtraction& lower = ex.sections[t.upper + 1].by_geozone.at(t.geozone);
        PairCorrespondence pc;
        pc.z_source = ex.sections[t.upper].z;
        pc.z_target = ex.sections[t.upper + 1].z;
        pc.geozone = t.geozone;
        for (int r = 0; r < int(upper.regions.size()); ++r)
            pc.sources.push_back(make_region_shape(r, upper.regions[r].contour_physical));
        for (int r = 0; r < int(lower.regions.size()); ++r)
            pc.targets.push_back(make_region_shape(r, lower.regions[r].contour_physical));

        AssociationModel model = compute_dmin_stats(pc.sources, pc.targets, ex.mu_lower);
        std::vector<Vec2> all_pts;
        for (const RegionShape& r : pc.sources)
            all_pts.insert(all_pts.end(), r.contour_physical.points.begin(),
                           r.contour_physical.points.end());
        for (const RegionShape& r : pc.targets)
            all_pts.insert(all_pts.end(), r.contour_physical.points.begin(),
                           r.contour_physical.points.end());
        GridFrame frame = fit_frame(all_pts, cfg.alignment.grid_target_px,
                                    cfg.alignment.grid_margin_px);
        pc.initial = build_association_matrix(pc.sources, pc.targets, model, frame);
        pc.result = decompose_and_align(pc.initial, pc.sources, pc.targets, cfg.alignment);
        out.pairs[i] = std::move(pc);
    });

    if (manifest) {
        for (const PairCorrespondence& pc : out.pairs) {
            char buf[160];
            for (const auto& e : pc.result.pruned_edges) {
                std::snprintf(buf, sizeof(buf),
                              "correspond %.2f->%.2f %s: pruned edge s%d->t%d", pc.z_source,
                              pc.z_target, pc.geozone.c_str(), e[0], e[1]);
                manifest->warnings.push_back(buf);
            }
        }
    }
    return out;
}

// ---- Morph stage ----------------------------------------------------------------------

namespace {

struct InstanceTask {
    const PairCorrespondence* pair;
    std::vector<int> sources;
    std::vector<int> targets;
};

std::vector<InstanceTask> split_instances(const CorrespondOutput& co,
                                          RunManifest* manifest) {
    std::vector<InstanceTask> tasks;
    for (const PairCorrespondence& pc : co.pairs) {
        int ns = pc.initial.n_sources, nt = pc.initial.n_targets;
        // Union-find over the pruned bipartite graph.
        std::vector<int> parent(ns + nt);
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int x) {
            return parent[x] == x ? x : parent[x] = find(parent[x]);
        };
        for (int s = 0; s < ns; ++s)
            for (int t = 0; t < nt; ++t)
                if (pc.result.pruned.at(s, t)) parent[find(s)] = find(ns + t);
        std::map<int, InstanceTask> groups;
        for (int s = 0; s < ns; ++s) groups[find(s)].sources.push_back(s);
        for (int t = 0; t < nt; ++t) groups[find(ns + t)].targets.push_back(t);
        for (auto& [root, g] : groups) {
            if (g.sources.empty() || g.targets.empty()) {
                if (manifest) {
                    char buf[160];
                    if (g.targets.empty() && !g.sources.empty())
                        std::snprintf(buf, sizeof(buf),
                                      "morph %.2f->%.2f %s: source region(s) vanish (no target)",
                                      pc.z_source, pc.z_target, pc.geozone.c_str());
                    else
                        std::snprintf(buf, sizeof(buf),
                                      "morph %.2f->%.2f %s: target region(s) emerge (no source)",
                                      pc.z_source, pc.z_target, pc.geozone.c_str());
                    manifest->warnings.push_back(buf);
                }
                continue;
            }
            g.pair = &pc;
            tasks.push_back(std::move(g));
        }
    }
    return tasks;
}

}  // namespace

MorphOutput stage_morph(const ExtractOutput& ex, const CorrespondOutput& co,
                        const PipelineConfig& cfg, RunManifest* manifest) {
    (void)ex;
    std::vector<InstanceTask> tasks = split_instances(co, manifest);
    MorphOutput out;
    out.instances.resize(tasks.size());

    parallel_for(tasks.size(), cfg.threads, [&](std::size_t i) {
        const InstanceTask& task = tasks[i];
        const PairCorrespondence& pc = *task.pair;
        MorphInstanceResult res;
        res.geozone = pc.geozone;
        res.z_source = pc.z_source;
        res.z_target = pc.z_target;
        res.source_ids = task.sources;
        res.target_ids = task.targets;

        // Shift-compensated source contours and the target set in one frame.
        std::vector<Contour> shifted_sources, targets_phys;
        std::vector<Vec2> all_pts;
        for (int s : task.sources) {
            Contour c = pc.sources[s].contour_physical;
            Vec2 shift = pc.result.displacements[s].shift_m;
            for (Vec2& p : c.points) p = p + shift;
            all_pts.insert(all_pts.end(), c.points.begin(), c.points.end());
            shifted_sources.push_back(std::move(c));
        }
        for (int t : task.targets) {
            targets_phys.push_back(pc.targets[t].contour_physical);
            all_pts.insert(all_pts.end(), targets_phys.back().points.begin(),
                           targets_phys.back().points.end());
        }
        GridFrame frame = fit_frame(all_pts, cfg.alignment.grid_target_px,
                                    cfg.alignment.grid_margin_px);
        std::vector<Contour> sources_grid, targets_grid;
        for (const Contour& c : shifted_sources) sources_grid.push_back(contour_to_grid(c, frame));
        for (const Contour& c : targets_phys) targets_grid.push_back(contour_to_grid(c, frame));

        TrackedMorph tm = track_morph(sources_grid, targets_grid, frame, cfg.morph);
        std::vector<CurveletTrack> tracks;
        if (cfg.morph.backtracking) {
            auto curvelets =
                detect_uncovered_curvelets(tm.run.interface_pixels, tm.particles, cfg.morph);
            tracks = backtrack_curvelets(curvelets, cfg.morph);
        }
        TrajectoryBundle bundle =
            merge_trajectories(tm, tracks, sources_grid, targets_grid, cfg.morph);
        res.converged = tm.run.converged;
        res.coverage = target_coverage(bundle, targets_grid, 2.0);
        res.n_dropped_particles = bundle.n_dropped_particles;
        res.n_dropped_tracks = bundle.n_dropped_tracks;

        // Express trajectories in the unshifted physical frame: the rigid
        // displacement is spread linearly across levels, so level 0 sits on
        // the original source contour and terminal segments carry translation
        // plus deformation (slope-informed prediction needs both).
        const int levels = bundle.levels;
        for (Trajectory& t : bundle.trajectories) {
            Vec2 m = pc.result.displacements[task.sources[t.ring]].shift_m / frame.pixel_size;
            for (int l = 0; l <= levels; ++l) {
                double back = 1.0 - double(l) / double(levels);
                t.levels[l] = t.levels[l] - m * back;
            }
        }
        res.elevated = elevate_bundle(bundle, pc.z_source, pc.z_target);
        out.instances[i] = std::move(res);
    });

    if (manifest) {
        for (const MorphInstanceResult& m : out.instances) {
            char buf[200];
            if (!m.converged) {
                std::snprintf(buf, sizeof(buf), "morph %.2f->%.2f %s: not converged",
                              m.z_source, m.z_target, m.geozone.c_str());
                manifest->warnings.push_back(buf);
            }
            if (m.n_dropped_particles > 0 || m.n_dropped_tracks > 0) {
                std::snprintf(buf, sizeof(buf),
                              "morph %.2f->%.2f %s: dropped %d particles, %d tracks",
                              m.z_source, m.z_target, m.geozone.c_str(),
                              m.n_dropped_particles, m.n_dropped_tracks);
                manifest->warnings.push_back(buf);
            }
        }
    }
    return out;
}

// ---- Predict stage -----------------------------------------------------------------

PredictOutput stage_predict(const MorphOutput& mo, const PipelineConfig& cfg,
                            RunManifest* manifest) {
    PredictOutput out;
    // Group instances by (geozone, informed elevation).
    std::map<std::pair<std::string, double>, std::vector<const MorphInstanceResult*>> groups;
    for (const MorphInstanceResult& m : mo.instances)
        groups[{m.geozone, m.z_target}].push_back(&m);

    std::vector<double> depths;
    for (double d = cfg.eval.depth_step_m; d <= cfg.eval.max_depth_m + 1e-9;
         d += cfg.eval.depth_step_m)
        depths.push_back(d);

    for (const auto& [key, instances] : groups) {
        BenchPrediction bp;
        bp.geozone = key.first;
        bp.z_known = key.second;
        bp.depths = depths;
        for (double d : depths) {
            std::vector<Contour> model, nil;
            for (const MorphInstanceResult* m : instances) {
                bool degenerate = false;
                std::vector<Contour> pred = predict_contour(m->elevated, d, &degenerate);
                if (degenerate && manifest) {
                    char buf[160];
                    std::snprintf(buf, sizeof(buf),
                                  "predict %s z=%.2f d=%.2f: degenerate prediction",
                                  m->geozone.c_str(), m->z_target, d);
                    manifest->warnings.push_back(buf);
                }
                model.insert(model.end(), pred.begin(), pred.end());
                std::vector<Contour> hold = iso_contours(m->elevated, {m->elevated.z_bottom});
                nil.insert(nil.end(), hold.begin(), hold.end());
            }
            bp.model.push_back(std::move(model));
            bp.nil.push_back(std::move(nil));
        }
        out.benches.push_back(std::move(bp));
    }
    return out;
}

// ---- Eval stage --------------------------------------------------------------------

EvalReport stage_eval(const PredictOutput& po, const TruthFn& truth,
                      const PipelineConfig& cfg, RunManifest* manifest) {
    EvalReport report;
    std::vector<double> depths;
    for (double d = cfg.eval.depth_step_m; d <= cfg.eval.max_depth_m + 1e-9;
         d += cfg.eval.depth_step_m)
        depths.push_back(d);

    for (std::size_t di = 0; di < depths.size(); ++di) {
        EvalRow row;
        row.depth = depths[di];
        double wp_m = 0, p_m = 0, wr_m = 0, r_m = 0;
        double wp_n = 0, p_n = 0, wr_n = 0, r_n = 0;
        for (const BenchPrediction& bp : po.benches) {
            if (di >= bp.depths.size()) continue;
            std::vector<Contour> g = truth(bp.geozone, bp.z_known - depths[di]);
            if (g.empty()) {
                if (manifest) {
                    char buf[160];
                    std::snprintf(buf, sizeof(buf), "eval %s z=%.2f: no truth contours",
                                  bp.geozone.c_str(), bp.z_known - depths[di]);
                    manifest->warnings.push_back(buf);
                }
                continue;
            }
            PrRow m = precision_recall(bp.model[di], g, cfg.eval.raster_m);
            PrRow n = precision_recall(bp.nil[di], g, cfg.eval.raster_m);
            p_m += m.precision * m.pred_area;
            wp_m += m.pred_area;
            r_m += m.recall * m.truth_area;
            wr_m += m.truth_area;
            p_n += n.precision * n.pred_area;
            wp_n += n.pred_area;
            r_n += n.recall * n.truth_area;
            wr_n += n.truth_area;
        }
        row.precision_model = wp_m > 0 ? p_m / wp_m : 0.0;
        row.recall_model = wr_m > 0 ? r_m / wr_m : 0.0;
        row.precision_nil = wp_n > 0 ? p_n / wp_n : 0.0;
        row.recall_nil = wr_n > 0 ? r_n / wr_n : 0.0;
        report.rows.push_back(row);
    }
    return report;
}

// ---- Full pipeline ------------------------------------------------------------------

RunManifest run_pipeline(const std::string& input_path, const PipelineConfig& cfg,
                         const std::string& out_dir, const std::string& truth_path) {
    namespace fs = std::filesystem;
    RunManifest manifest;
    manifest.config_digest = cfg.digest();
    fs::create_directories(out_dir);

    auto timed = [&](const char* name, auto&& fn) {
        auto t0 = std::chrono::steady_clock::now();
        fn();
        auto t1 = std::chrono::steady_clock::now();
        manifest.stage_seconds[name] = std::chrono::duration<double>(t1 - t0).count();
    };

    std::string input_text = read_text_file(input_path);
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a(input_text)));
        manifest.input_digest = buf;
    }
    std::vector<SamplePoint> samples = load_samples(input_path);

    std::string digest = cfg.digest();
    auto emit = [&](const std::string& name, const std::string& text) {
        write_text_file(out_dir + "/" + name, text);
        manifest.outputs.push_back(name);
    };

    ExtractOutput ex;
    timed("extract", [&] { ex = stage_extract(samples, cfg, &manifest); });
    emit("extract.json", extract_to_json(ex, digest));

    CorrespondOutput co;
    timed("correspond", [&] { co = stage_correspond(ex, cfg, &manifest); });
    emit("correspond.json", correspond_to_json(co, digest));

    MorphOutput mo;
    timed("morph", [&] { mo = stage_morph(ex, co, cfg, &manifest); });
    emit("morph.json", morph_to_json(mo, digest));

    // Surfaces per geozone.
    timed("mesh", [&] {
        std::map<std::string, SurfaceMesh> meshes;
        for (const MorphInstanceResult& m : mo.instances) {
            SurfaceMesh part = triangulate_bundle(m.elevated);
            SurfaceMesh& acc = meshes[m.geozone];
            acc.geozone = m.geozone;
            int base = int(acc.vertices.size());
            acc.vertices.insert(acc.vertices.end(), part.vertices.begin(), part.vertices.end());
            for (auto t : part.triangles)
                acc.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
        }
        for (const auto& [zone, mesh] : meshes)
            emit("mesh_" + zone + ".obj", mesh_to_obj(mesh));
    });

    PredictOutput po;
    timed("predict", [&] { po = stage_predict(mo, cfg, &manifest); });
    emit("predict.json", predict_to_json(po, digest));

    if (!truth_path.empty()) {
        TruthTable table = truth_from_json(read_text_file(truth_path));
        EvalReport report;
        timed("eval", [&] {
            report = stage_eval(
                po,
                [&table](const std::string& zone, double z) { return table.lookup(zone, z); },
                cfg, &manifest);
        });
        emit("eval.csv", eval_to_csv(report));
    }

    manifest.outputs.push_back("manifest.json");
    write_text_file(out_dir + "/manifest.json", manifest_to_json(manifest));
    return manifest;
}

}  // namespace strata
