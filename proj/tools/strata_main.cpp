// strata: reconstructs volumetric region boundaries from sparse labeled
// cross-section samples. Subcommands mirror the pipeline stages; `run`
// executes everything.

#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "strata/pipeline.hpp"
#include "strata/serialize.hpp"

namespace {

using namespace strata;

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::ConfigError:
            return 1;
        case ErrorKind::ParseError:
            return 2;
        default:
            return 3;
    }
}

PipelineConfig resolve_config(const std::string& config_path, int threads_override,
                              std::int64_t seed_override) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (threads_override > 0) cfg.threads = threads_override;
    if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Subsurface boundary reconstruction from sparse labeled samples"};
    app.require_subcommand(1);

    std::string config_path, out_dir, input_path, truth_path;
    int threads = 0;
    std::int64_t seed = -1;
    app.add_option("--config", config_path, "Pipeline configuration JSON");
    app.add_option("--threads", threads, "Worker thread count (1 forces sequential)");
    app.add_option("--seed", seed, "Seed override for generators");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled scene");
    std::string primitive = "tilted-ellipsoid";
    SceneSpec scene_spec;
    synth->add_option("--primitive", primitive,
                      "tilted-ellipsoid | bent-slab | twin-merge | split-lobe");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--benches", scene_spec.n_benches, "Number of benches");
    synth->add_option("--extent", scene_spec.extent, "Scene extent [m]");
    synth->add_option("--hex-spacing", scene_spec.hex_spacing, "Lattice pitch [m]");
    synth->add_option("--jitter", scene_spec.jitter_sigma, "Positional noise sigma [m]");
    synth->add_option("--dropout", scene_spec.dropout, "Dropout fraction");
    synth->add_option("--slope", scene_spec.slope, "Lateral drift per meter of depth");
    synth->add_option("--radius-xy", scene_spec.radius_xy, "Ellipsoid x semi-axis [m]");
    synth->add_option("--radius-z", scene_spec.radius_z, "Ellipsoid z semi-axis [m]");
    synth->add_option("--aspect", scene_spec.aspect, "Ellipsoid y/x aspect");
    synth->add_option("--lobe-radius", scene_spec.lobe_radius, "Lobe radius [m]");
    synth->add_option("--lobe-separation", scene_spec.lobe_separation,
                      "Lobe separation at the top bench [m]");
    synth->add_option("--sep-rate", scene_spec.sep_rate, "Separation change per meter depth");

    auto* extract = app.add_subcommand("extract", "Boundary extraction per cross-section");
    extract->add_option("--input", input_path, "Samples CSV (x,y,z,geozone)")->required();
    extract->add_option("--out", out_dir, "Output directory")->required();

    auto* correspond = app.add_subcommand("correspond", "Region association and alignment");
    std::string extract_path;
    correspond->add_option("--extract", extract_path, "extract.json from the extract stage")
        ->required();
    correspond->add_option("--out", out_dir, "Output directory")->required();

    auto* morph = app.add_subcommand("morph", "Contour metamorphosis and tracking");
    std::string correspond_path;
    morph->add_option("--correspond", correspond_path, "correspond.json")->required();
    morph->add_option("--out", out_dir, "Output directory")->required();

    auto* predict = app.add_subcommand("predict", "Iso-contours and slope predictions");
    std::string morph_path;
    predict->add_option("--morph", morph_path, "morph.json")->required();
    predict->add_option("--out", out_dir, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Precision/recall against truth contours");
    std::string predict_path;
    eval->add_option("--predict", predict_path, "predict.json")->required();
    eval->add_option("--truth", truth_path, "truth.json")->required();
    eval->add_option("--out", out_dir, "Output directory")->required();

    auto* run = app.add_subcommand("run", "Full pipeline");
    run->add_option("--input", input_path, "Samples CSV")->required();
    run->add_option("--truth", truth_path, "Optional truth.json for evaluation");
    run->add_option("--out", out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = resolve_config(config_path, threads, seed);
        std::string digest = cfg.digest();

        if (synth->parsed()) {
            scene_spec.primitive = primitive;
            SyntheticScene scene = generate_synthetic_scene(scene_spec, cfg.seed);
            write_text_file(out_dir + "/samples.csv", samples_to_csv(scene.samples));
            TruthTable table;
            for (std::size_t k = 1; k < scene.bench_elevations.size() + 1; ++k) {
                double z_known = scene.spec.z_top - double(k) * scene.spec.bench_height;
                for (double d = cfg.eval.depth_step_m; d <= cfg.eval.max_depth_m + 1e-9;
                     d += cfg.eval.depth_step_m) {
                    double z = z_known - d;
                    table.entries["g1"].push_back({z, scene.truth_contours(z)});
                }
            }
            write_text_file(out_dir + "/truth.json", truth_to_json(table));
            std::printf("synth: %zu samples over %d benches -> %s\n", scene.samples.size(),
                        scene.spec.n_benches, out_dir.c_str());
        } else if (extract->parsed()) {
            std::vector<SamplePoint> samples = load_samples(input_path);
            ExtractOutput ex = stage_extract(samples, cfg);
            write_text_file(out_dir + "/extract.json", extract_to_json(ex, digest));
            std::printf("extract: %zu sections -> %s/extract.json\n", ex.sections.size(),
                        out_dir.c_str());
        } else if (correspond->parsed()) {
            ExtractOutput ex = extract_from_json(read_text_file(extract_path), digest);
            CorrespondOutput co = stage_correspond(ex, cfg);
            write_text_file(out_dir + "/correspond.json", correspond_to_json(co, digest));
            std::printf("correspond: %zu pairs -> %s/correspond.json\n", co.pairs.size(),
                        out_dir.c_str());
        } else if (morph->parsed()) {
            CorrespondOutput co = correspond_from_json(read_text_file(correspond_path), digest);
            ExtractOutput dummy;  // morph consumes contours through correspond.json
            MorphOutput mo = stage_morph(dummy, co, cfg);
            write_text_file(out_dir + "/morph.json", morph_to_json(mo, digest));
            std::printf("morph: %zu instances -> %s/morph.json\n", mo.instances.size(),
                        out_dir.c_str());
        } else if (predict->parsed()) {
            MorphOutput mo = morph_from_json(read_text_file(morph_path), digest);
            PredictOutput po = stage_predict(mo, cfg);
            write_text_file(out_dir + "/predict.json", predict_to_json(po, digest));
            std::printf("predict: %zu bench groups -> %s/predict.json\n", po.benches.size(),
                        out_dir.c_str());
        } else if (eval->parsed()) {
            PredictOutput po = predict_from_json(read_text_file(predict_path), digest);
            TruthTable table = truth_from_json(read_text_file(truth_path));
            EvalReport report = stage_eval(
                po,
                [&table](const std::string& zone, double z) { return table.lookup(zone, z); },
                cfg);
            write_text_file(out_dir + "/eval.csv", eval_to_csv(report));
            std::printf("eval: %zu depth rows -> %s/eval.csv\n", report.rows.size(),
                        out_dir.c_str());
        } else if (run->parsed()) {
            RunManifest manifest = run_pipeline(input_path, cfg, out_dir, truth_path);
            std::printf("run: %zu outputs, %zu warnings -> %s\n", manifest.outputs.size(),
                        manifest.warnings.size(), out_dir.c_str());
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", error_kind_name(e.kind()), e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
