#include "strata/serialize.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace strata {

using nlohmann::json;

void write_text_file(const std::string& path, const std::string& text) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::ParseError, "cannot open for writing: " + path);
    out << text;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::ParseError, "cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

json contour_to_json(const Contour& c) {
    json pts = json::array();
    for (const Vec2& p : c.points) pts.push_back(json::array({p.x, p.y}));
    return pts;
}

Contour contour_from_json(const json& j) {
    Contour c;
    c.closed = true;
    c.frame = FrameTag::Physical;
    for (const auto& p : j) c.points.push_back({p[0].get<double>(), p[1].get<double>()});
    return c;
}

json frame_to_json(const GridFrame& f) {
    return json{{"origin", {f.origin.x, f.origin.y}},
                {"pixel_size", f.pixel_size},
                {"nx", f.nx},
                {"ny", f.ny},
                {"margin", f.margin}};
}

GridFrame frame_from_json(const json& j) {
    GridFrame f;
    f.origin = {j["origin"][0].get<double>(), j["origin"][1].get<double>()};
    f.pixel_size = j["pixel_size"].get<double>();
    f.nx = j["nx"].get<int>();
    f.ny = j["ny"].get<int>();
    f.margin = j["margin"].get<int>();
    return f;
}

json parse_with_digest(const std::string& text, const std::string& digest,
                       const char* what) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string(what) + ": " + e.what());
    }
    if (!j.contains("config_digest") || j["config_digest"].get<std::string>() != digest)
        throw Error(ErrorKind::ConfigError,
                    std::string(what) + ": config digest mismatch (stage outputs from a "
                                        "different configuration)");
    return j;
}

}  // namespace

// ---- extract --------------------------------------------------------------------

std::string extract_to_json(const ExtractOutput& ex, const std::string& digest) {
    json j;
    j["config_digest"] = digest;
    j["neighbor_radius"] = ex.neighbor_radius;
    j["mu_lower"] = ex.mu_lower;
    j["geozones"] = ex.geozones;
    json sections = json::array();
    for (const SectionData& s : ex.sections) {
        json js;
        js["z"] = s.z;
        json zones;
        for (const auto& [zone, se] : s.by_geozone) {
            json jz;
            jz["neighbor_radius"] = se.neighbor_radius;
            jz["rejected"] = se.rejected_components;
            json regions = json::array();
            for (const ExtractedRegion& r : se.regions) {
                regions.push_back(json{{"component_id", r.component_id},
                                       {"n_samples", r.n_samples},
                                       {"converged", r.converged},
                                       {"self_intersecting", r.self_intersecting},
                                       {"frame", frame_to_json(r.frame)},
                                       {"contour", contour_to_json(r.contour_physical)}});
            }
            jz["regions"] = regions;
            zones[zone] = jz;
        }
        js["geozones"] = zones;
        sections.push_back(js);
    }
    j["sections"] = sections;
    return j.dump(1);
}

ExtractOutput extract_from_json(const std::string& text, const std::string& digest) {
    json j = parse_with_digest(text, digest, "extract");
    ExtractOutput ex;
    ex.neighbor_radius = j["neighbor_radius"].get<double>();
    ex.mu_lower = j["mu_lower"].get<double>();
    ex.geozones = j["geozones"].get<std::vector<std::string>>();
    for (const auto& js : j["sections"]) {
        SectionData s;
        s.z = js["z"].get<double>();
        for (auto it = js["geozones"].begin(); it != js["geozones"].end(); ++it) {
            SectionExtraction se;
            se.neighbor_radius = it.value()["neighbor_radius"].get<double>();
            se.rejected_components = it.value()["rejected"].get<std::vector<int>>();
            for (const auto& jr : it.value()["regions"]) {
                ExtractedRegion r;
                r.component_id = jr["component_id"].get<int>();
                r.n_samples = jr["n_samples"].get<int>();
                r.converged = jr["converged"].get<bool>();
                r.self_intersecting = jr["self_intersecting"].get<bool>();
                r.frame = frame_from_json(jr["frame"]);
                r.contour_physical = contour_from_json(jr["contour"]);
                se.regions.push_back(std::move(r));
            }
            s.by_geozone[it.key()] = std::move(se);
        }
        ex.sections.push_back(std::move(s));
    }
    return ex;
}

// ---- correspond -------------------------------------------------------------------

namespace {

json shape_to_json(const RegionShape& r) {
    return json{{"id", r.id},
                {"area", r.area},
                {"centroid", {r.centroid.x, r.centroid.y}},
                {"span", r.span},
                {"contour", contour_to_json(r.contour_physical)}};
}

RegionShape shape_from_json(const json& j) {
    RegionShape r;
    r.id = j["id"].get<int>();
    r.area = j["area"].get<double>();
    r.centroid = {j["centroid"][0].get<double>(), j["centroid"][1].get<double>()};
    r.span = j["span"].get<double>();
    r.contour_physical = contour_from_json(j["contour"]);
    return r;
}

json matrix_to_json(const AssociationMatrix& a) {
    json rows = json::array();
    for (int s = 0; s < a.n_sources; ++s) {
        json row = json::array();
        for (int t = 0; t < a.n_targets; ++t) row.push_back(int(a.at(s, t)));
        rows.push_back(row);
    }
    return rows;
}

AssociationMatrix matrix_from_json(const json& j) {
    AssociationMatrix a;
    a.n_sources = int(j.size());
    a.n_targets = a.n_sources > 0 ? int(j[0].size()) : 0;
    for (const auto& row : j)
        for (const auto& v : row) a.a.push_back(std::uint8_t(v.get<int>()));
    return a;
}

}  // namespace

std::string correspond_to_json(const CorrespondOutput& co, const std::string& digest) {
    json j;
    j["config_digest"] = digest;
    json pairs = json::array();
    for (const PairCorrespondence& p : co.pairs) {
        json jp;
        jp["z_source"] = p.z_source;
        jp["z_target"] = p.z_target;
        jp["geozone"] = p.geozone;
        json srcs = json::array(), tgts = json::array();
        for (const RegionShape& r : p.sources) srcs.push_back(shape_to_json(r));
        for (const RegionShape& r : p.targets) tgts.push_back(shape_to_json(r));
        jp["sources"] = srcs;
        jp["targets"] = tgts;
        jp["association"] = matrix_to_json(p.initial);
        jp["pruned"] = matrix_to_json(p.result.pruned);
        json subtrees = json::array();
        for (const Subtree& st : p.result.subtrees) {
            subtrees.push_back(json{{"root_source", st.root_source},
                                    {"targets", st.targets},
                                    {"co_sources", st.co_sources}});
        }
        jp["subtrees"] = subtrees;
        json disp = json::array();
        for (const DisplacementEstimate& d : p.result.displacements) {
            disp.push_back(json{{"source_id", d.source_id},
                                {"shift_px", {d.shift_px[0], d.shift_px[1]}},
                                {"shift_m", {d.shift_m.x, d.shift_m.y}},
                                {"score", d.score},
                                {"constrained", d.constrained},
                                {"straddles", d.straddles}});
        }
        jp["displacements"] = disp;
        json pruned_edges = json::array();
        for (const auto& e : p.result.pruned_edges)
            pruned_edges.push_back(json::array({e[0], e[1]}));
        jp["pruned_edges"] = pruned_edges;
        pairs.push_back(jp);
    }
    j["pairs"] = pairs;
    return j.dump(1);
}

CorrespondOutput correspond_from_json(const std::string& text, const std::string& digest) {
    json j = parse_with_digest(text, digest, "correspond");
    CorrespondOutput co;
    for (const auto& jp : j["pairs"]) {
        PairCorrespondence p;
        p.z_source = jp["z_source"].get<double>();
        p.z_target = jp["z_target"].get<double>();
        p.geozone = jp["geozone"].get<std::string>();
        for (const auto& js : jp["sources"]) p.sources.push_back(shape_from_json(js));
        for (const auto& jt : jp["targets"]) p.targets.push_back(shape_from_json(jt));
        p.initial = matrix_from_json(jp["association"]);
        p.result.pruned = matrix_from_json(jp["pruned"]);
        for (const auto& jst : jp["subtrees"]) {
            Subtree st;
            st.root_source = jst["root_source"].get<int>();
            st.targets = jst["targets"].get<std::vector<int>>();
            st.co_sources = jst["co_sources"].get<std::vector<std::vector<int>>>();
            p.result.subtrees.push_back(std::move(st));
        }
        for (const auto& jd : jp["displacements"]) {
            DisplacementEstimate d;
            d.source_id = jd["source_id"].get<int>();
            d.shift_px = {jd["shift_px"][0].get<int>(), jd["shift_px"][1].get<int>()};
            d.shift_m = {jd["shift_m"][0].get<double>(), jd["shift_m"][1].get<double>()};
            d.score = jd["score"].get<double>();
            d.constrained = jd["constrained"].get<bool>();
            d.straddles = jd["straddles"].get<bool>();
            p.result.displacements.push_back(d);
        }
        for (const auto& je : jp["pruned_edges"])
            p.result.pruned_edges.push_back({je[0].get<int>(), je[1].get<int>()});
        co.pairs.push_back(std::move(p));
    }
    return co;
}

// ---- morph -----------------------------------------------------------------------

std::string morph_to_json(const MorphOutput& mo, const std::string& digest) {
    json j;
    j["config_digest"] = digest;
    json instances = json::array();
    for (const MorphInstanceResult& m : mo.instances) {
        json jm;
        jm["geozone"] = m.geozone;
        jm["z_source"] = m.z_source;
        jm["z_target"] = m.z_target;
        jm["source_ids"] = m.source_ids;
        jm["target_ids"] = m.target_ids;
        jm["converged"] = m.converged;
        jm["coverage"] = m.coverage;
        jm["dropped_particles"] = m.n_dropped_particles;
        jm["dropped_tracks"] = m.n_dropped_tracks;
        jm["z_top"] = m.elevated.z_top;
        jm["z_bottom"] = m.elevated.z_bottom;
        jm["levels"] = m.elevated.bundle.levels;
        jm["frame"] = frame_to_json(m.elevated.bundle.frame);
        json trajs = json::array();
        for (const Trajectory& t : m.elevated.bundle.trajectories) {
            json pts = json::array();
            for (const Vec2& p : t.levels) pts.push_back(json::array({p.x, p.y}));
            trajs.push_back(json{{"ring", t.ring},
                                 {"arc", t.arc},
                                 {"sub_order", t.sub_order},
                                 {"provenance",
                                  t.provenance == Provenance::ParticleTrack ? "particle"
                                                                            : "curvelet"},
                                 {"points", pts}});
        }
        jm["trajectories"] = trajs;
        instances.push_back(jm);
    }
    j["instances"] = instances;
    return j.dump(1);
}

MorphOutput morph_from_json(const std::string& text, const std::string& digest) {
    json j = parse_with_digest(text, digest, "morph");
    MorphOutput mo;
    for (const auto& jm : j["instances"]) {
        MorphInstanceResult m;
        m.geozone = jm["geozone"].get<std::string>();
        m.z_source = jm["z_source"].get<double>();
        m.z_target = jm["z_target"].get<double>();
        m.source_ids = jm["source_ids"].get<std::vector<int>>();
        m.target_ids = jm["target_ids"].get<std::vector<int>>();
        m.converged = jm["converged"].get<bool>();
        m.coverage = jm["coverage"].get<double>();
        m.n_dropped_particles = jm["dropped_particles"].get<int>();
        m.n_dropped_tracks = jm["dropped_tracks"].get<int>();
        m.elevated.z_top = jm["z_top"].get<double>();
        m.elevated.z_bottom = jm["z_bottom"].get<double>();
        m.elevated.bundle.levels = jm["levels"].get<int>();
        m.elevated.bundle.frame = frame_from_json(jm["frame"]);
        for (const auto& jt : jm["trajectories"]) {
            Trajectory t;
            t.ring = jt["ring"].get<int>();
            t.arc = jt["arc"].get<double>();
            t.sub_order = jt["sub_order"].get<double>();
            t.provenance = jt["provenance"].get<std::string>() == "particle"
                               ? Provenance::ParticleTrack
                               : Provenance::CurveletBacktrack;
            for (const auto& p : jt["points"])
                t.levels.push_back({p[0].get<double>(), p[1].get<double>()});
            m.elevated.bundle.trajectories.push_back(std::move(t));
        }
        mo.instances.push_back(std::move(m));
    }
    return mo;
}

// ---- predict ----------------------------------------------------------------------

std::string predict_to_json(const PredictOutput& po, const std::string& digest) {
    json j;
    j["config_digest"] = digest;
    json benches = json::array();
    for (const BenchPrediction& b : po.benches) {
        json jb;
        jb["geozone"] = b.geozone;
        jb["z_known"] = b.z_known;
        jb["depths"] = b.depths;
        json model = json::array(), nil = json::array();
        for (const auto& contours : b.model) {
            json arr = json::array();
            for (const Contour& c : contours) arr.push_back(contour_to_json(c));
            model.push_back(arr);
        }
        for (const auto& contours : b.nil) {
            json arr = json::array();
            for (const Contour& c : contours) arr.push_back(contour_to_json(c));
            nil.push_back(arr);
        }
        jb["model"] = model;
        jb["nil"] = nil;
        benches.push_back(jb);
    }
    j["benches"] = benches;
    return j.dump(1);
}

PredictOutput predict_from_json(const std::string& text, const std::string& digest) {
    json j = parse_with_digest(text, digest, "predict");
    PredictOutput po;
    for (const auto& jb : j["benches"]) {
        BenchPrediction b;
        b.geozone = jb["geozone"].get<std::string>();
        b.z_known = jb["z_known"].get<double>();
        b.depths = jb["depths"].get<std::vector<double>>();
        for (const auto& arr : jb["model"]) {
            std::vector<Contour> cs;
            for (const auto& jc : arr) cs.push_back(contour_from_json(jc));
            b.model.push_back(std::move(cs));
        }
        for (const auto& arr : jb["nil"]) {
            std::vector<Contour> cs;
            for (const auto& jc : arr) cs.push_back(contour_from_json(jc));
            b.nil.push_back(std::move(cs));
        }
        po.benches.push_back(std::move(b));
    }
    return po;
}

// ---- reports ----------------------------------------------------------------------

std::string eval_to_csv(const EvalReport& report) {
    std::string out =
        "depth_m,precision_nil,precision_model,precision_gain,recall_nil,recall_model,"
        "recall_gain\n";
    char line[256];
    for (const EvalRow& r : report.rows) {
        std::snprintf(line, sizeof(line), "%.2f,%.4f,%.4f,%+.4f,%.4f,%.4f,%+.4f\n", r.depth,
                      r.precision_nil, r.precision_model, r.precision_model - r.precision_nil,
                      r.recall_nil, r.recall_model, r.recall_model - r.recall_nil);
        out += line;
    }
    return out;
}

std::string manifest_to_json(const RunManifest& m) {
    json j;
    j["config_digest"] = m.config_digest;
    j["input_digest"] = m.input_digest;
    j["stage_seconds"] = m.stage_seconds;
    j["warnings"] = m.warnings;
    j["outputs"] = m.outputs;
    j["hard_errors"] = m.hard_errors;
    return j.dump(1);
}

std::string mesh_to_obj(const SurfaceMesh& mesh) {
    std::string out;
    out.reserve(mesh.vertices.size() * 40 + mesh.triangles.size() * 24);
    char line[128];
    for (const auto& v : mesh.vertices) {
        std::snprintf(line, sizeof(line), "v %.6f %.6f %.6f\n", v[0], v[1], v[2]);
        out += line;
    }
    for (const auto& t : mesh.triangles) {
        std::snprintf(line, sizeof(line), "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
        out += line;
    }
    return out;
}

// ---- truth ------------------------------------------------------------------------

std::vector<Contour> TruthTable::lookup(const std::string& geozone, double z) const {
    auto it = entries.find(geozone);
    if (it == entries.end()) return {};
    for (const auto& [ez, contours] : it->second)
        if (std::fabs(ez - z) < 1e-6) return contours;
    return {};
}

std::string truth_to_json(const TruthTable& t) {
    json j;
    for (const auto& [zone, list] : t.entries) {
        json arr = json::array();
        for (const auto& [z, contours] : list) {
            json cs = json::array();
            for (const Contour& c : contours) cs.push_back(contour_to_json(c));
            arr.push_back(json{{"z", z}, {"contours", cs}});
        }
        j[zone] = arr;
    }
    return j.dump(1);
}

TruthTable truth_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("truth: ") + e.what());
    }
    TruthTable t;
    for (auto it = j.begin(); it != j.end(); ++it) {
        for (const auto& entry : it.value()) {
            std::vector<Contour> cs;
            for (const auto& jc : entry["contours"]) cs.push_back(contour_from_json(jc));
            t.entries[it.key()].push_back({entry["z"].get<double>(), std::move(cs)});
        }
    }
    return t;
}

std::string samples_to_csv(const std::vector<SamplePoint>& samples) {
    std::string out = "x,y,z,geozone\n";
    char line[160];
    for (const SamplePoint& p : samples) {
        std::snprintf(line, sizeof(line), "%.10g,%.10g,%.10g,%s\n", p.x, p.y, p.z,
                      p.geozone.c_str());
        out += line;
    }
    return out;
}

}  // namespace strata
