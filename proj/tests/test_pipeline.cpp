#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "strata/pipeline.hpp"
#include "strata/serialize.hpp"

using namespace strata;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("strata_test_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

PipelineConfig fast_config() {
    // Small scene settings keep the suite quick. mu_lower reflects the
    // anticipated lateral movement of these scenes (region spans ~30 m).
    PipelineConfig cfg;
    cfg.geozones = {"g1"};
    cfg.threads = 1;
    cfg.mu_lower = 15.0;
    return cfg;
}

SceneSpec small_sphere_spec() {
    SceneSpec spec;
    spec.primitive = "tilted-ellipsoid";
    spec.extent = 120.0;
    spec.radius_xy = 34.0;
    spec.radius_z = 60.0;
    spec.aspect = 1.0;
    spec.slope = 0.6;
    spec.n_benches = 3;
    return spec;
}

}  // namespace

TEST_CASE("config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(config_from_json_text("{\"no_such_key\": 1}"), Error);
    CHECK_THROWS_AS(config_from_json_text("{\"extraction\": {\"orient_gap\": 7.0}}"), Error);
    CHECK_THROWS_AS(config_from_json_text("not json at all"), Error);
    PipelineConfig ok = config_from_json_text("{\"seed\": 7, \"morph\": {\"levels\": 4}}");
    CHECK(ok.seed == 7);
    CHECK(ok.morph.levels == 4);
}

TEST_CASE("config digest tracks content") {
    PipelineConfig a, b;
    CHECK(a.digest() == b.digest());
    b.morph.levels = 5;
    CHECK(a.digest() != b.digest());
}

TEST_CASE("sample loading validates input") {
    std::string dir = temp_dir("csv");
    write_text_file(dir + "/empty.csv", "");
    CHECK_THROWS_AS(load_samples(dir + "/empty.csv"), Error);
    write_text_file(dir + "/badheader.csv", "a,b,c\n1,2,3\n");
    CHECK_THROWS_AS(load_samples(dir + "/badheader.csv"), Error);
    write_text_file(dir + "/badrow.csv", "x,y,z,geozone\n1,2,oops,g1\n");
    CHECK_THROWS_AS(load_samples(dir + "/badrow.csv"), Error);
    write_text_file(dir + "/ok.csv", "x,y,z,geozone\n1.5,2.5,690,g1\n3,4,680,g2\n");
    auto samples = load_samples(dir + "/ok.csv");
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].geozone == "g1");
    CHECK(samples[1].z == 680.0);
}

TEST_CASE("stage round trips are lossless") {
    SyntheticScene scene = generate_synthetic_scene(small_sphere_spec(), 21);
    PipelineConfig cfg = fast_config();
    std::string digest = cfg.digest();

    ExtractOutput ex = stage_extract(scene.samples, cfg);
    ExtractOutput ex2 = extract_from_json(extract_to_json(ex, digest), digest);
    CHECK(extract_to_json(ex, digest) == extract_to_json(ex2, digest));

    CorrespondOutput co = stage_correspond(ex, cfg);
    CorrespondOutput co2 = correspond_from_json(correspond_to_json(co, digest), digest);
    CHECK(correspond_to_json(co, digest) == correspond_to_json(co2, digest));

    MorphOutput mo = stage_morph(ex, co, cfg);
    MorphOutput mo2 = morph_from_json(morph_to_json(mo, digest), digest);
    CHECK(morph_to_json(mo, digest) == morph_to_json(mo2, digest));

    PredictOutput po = stage_predict(mo, cfg);
    PredictOutput po2 = predict_from_json(predict_to_json(po, digest), digest);
    CHECK(predict_to_json(po, digest) == predict_to_json(po2, digest));
}

TEST_CASE("digest mismatch is rejected across stages") {
    SyntheticScene scene = generate_synthetic_scene(small_sphere_spec(), 22);
    PipelineConfig cfg = fast_config();
    ExtractOutput ex = stage_extract(scene.samples, cfg);
    std::string text = extract_to_json(ex, cfg.digest());
    PipelineConfig other = cfg;
    other.morph.levels = 6;
    CHECK_THROWS_AS(extract_from_json(text, other.digest()), Error);
}

TEST_CASE("end-to-end sphere run produces all artifacts") {
    std::string dir = temp_dir("run");
    SyntheticScene scene = generate_synthetic_scene(small_sphere_spec(), 23);
    write_text_file(dir + "/samples.csv", samples_to_csv(scene.samples));

    PipelineConfig cfg = fast_config();
    TruthTable table;
    for (int k = 1; k <= scene.spec.n_benches; ++k) {
        double z_known = scene.spec.z_top - k * scene.spec.bench_height;
        for (double d = cfg.eval.depth_step_m; d <= cfg.eval.max_depth_m + 1e-9;
             d += cfg.eval.depth_step_m)
            table.entries["g1"].push_back({z_known - d, scene.truth_contours(z_known - d)});
    }
    write_text_file(dir + "/truth.json", truth_to_json(table));

    RunManifest manifest = run_pipeline(dir + "/samples.csv", cfg, dir + "/out",
                                        dir + "/truth.json");
    CHECK(manifest.hard_errors == 0);
    for (const char* name : {"extract.json", "correspond.json", "morph.json", "predict.json",
                             "eval.csv", "mesh_g1.obj", "manifest.json"}) {
        CHECK(fs::exists(fs::path(dir) / "out" / name));
    }

    // The eval table has one row per depth with sane rates.
    std::string csv = read_text_file(dir + "/out/eval.csv");
    int lines = int(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == 9);  // header + 8 depths
}

TEST_CASE("stage piping equals the monolithic run") {
    std::string dir = temp_dir("pipe");
    SyntheticScene scene = generate_synthetic_scene(small_sphere_spec(), 24);
    write_text_file(dir + "/samples.csv", samples_to_csv(scene.samples));
    PipelineConfig cfg = fast_config();
    std::string digest = cfg.digest();

    run_pipeline(dir + "/samples.csv", cfg, dir + "/mono");

    // Staged: extract -> correspond -> morph -> predict, each through disk.
    std::vector<SamplePoint> samples = load_samples(dir + "/samples.csv");
    ExtractOutput ex = stage_extract(samples, cfg);
    write_text_file(dir + "/staged_extract.json", extract_to_json(ex, digest));
    ExtractOutput ex_r = extract_from_json(read_text_file(dir + "/staged_extract.json"), digest);
    CorrespondOutput co = stage_correspond(ex_r, cfg);
    write_text_file(dir + "/staged_correspond.json", correspond_to_json(co, digest));
    CorrespondOutput co_r =
        correspond_from_json(read_text_file(dir + "/staged_correspond.json"), digest);
    MorphOutput mo = stage_morph(ex_r, co_r, cfg);
    write_text_file(dir + "/staged_morph.json", morph_to_json(mo, digest));
    MorphOutput mo_r = morph_from_json(read_text_file(dir + "/staged_morph.json"), digest);
    PredictOutput po = stage_predict(mo_r, cfg);
    write_text_file(dir + "/staged_predict.json", predict_to_json(po, digest));

    CHECK(read_text_file(dir + "/mono/extract.json") ==
          read_text_file(dir + "/staged_extract.json"));
    CHECK(read_text_file(dir + "/mono/correspond.json") ==
          read_text_file(dir + "/staged_correspond.json"));
    CHECK(read_text_file(dir + "/mono/morph.json") == read_text_file(dir + "/staged_morph.json"));
    CHECK(read_text_file(dir + "/mono/predict.json") ==
          read_text_file(dir + "/staged_predict.json"));
}

TEST_CASE("prediction is causal: removing deeper benches changes nothing above") {
    std::string dir = temp_dir("causal");
    SceneSpec spec = small_sphere_spec();
    spec.n_benches = 4;
    SyntheticScene scene = generate_synthetic_scene(spec, 25);

    // Full input vs input truncated below bench 2's floor.
    std::vector<SamplePoint> full = scene.samples;
    std::vector<SamplePoint> truncated;
    double floor_z = spec.z_top - 2.0 * spec.bench_height;
    for (const SamplePoint& p : full)
        if (p.z >= floor_z - 1e-9) truncated.push_back(p);
    REQUIRE(truncated.size() < full.size());

    PipelineConfig cfg = fast_config();
    std::string digest = cfg.digest();
    auto predictions_at = [&](const std::vector<SamplePoint>& samples, double z_known) {
        ExtractOutput ex = stage_extract(samples, cfg);
        CorrespondOutput co = stage_correspond(ex, cfg);
        MorphOutput mo = stage_morph(ex, co, cfg);
        PredictOutput po = stage_predict(mo, cfg);
        for (const BenchPrediction& b : po.benches)
            if (b.geozone == "g1" && std::fabs(b.z_known - z_known) < 1e-9) return predict_to_json(
                PredictOutput{{b}}, digest);
        return std::string();
    };

    // Predictions informed by benches above z=670 only.
    std::string with_all = predictions_at(full, floor_z);
    std::string with_truncated = predictions_at(truncated, floor_z);
    REQUIRE(!with_all.empty());
    CHECK(with_all == with_truncated);
}

TEST_CASE("synthetic twin-merge run is bitwise reproducible") {
    std::string dir = temp_dir("repro");
    SceneSpec spec;
    spec.primitive = "twin-merge";
    spec.extent = 150.0;
    spec.n_benches = 3;
    spec.lobe_radius = 24.0;
    spec.lobe_separation = 60.0;
    spec.sep_rate = 1.2;
    SyntheticScene scene = generate_synthetic_scene(spec, 31);
    write_text_file(dir + "/samples.csv", samples_to_csv(scene.samples));

    PipelineConfig cfg = fast_config();
    run_pipeline(dir + "/samples.csv", cfg, dir + "/a");
    run_pipeline(dir + "/samples.csv", cfg, dir + "/b");
    PipelineConfig cfg4 = cfg;
    cfg4.threads = 4;
    run_pipeline(dir + "/samples.csv", cfg4, dir + "/c");

    for (const char* name : {"extract.json", "correspond.json", "morph.json", "predict.json",
                             "mesh_g1.obj"}) {
        std::string a = read_text_file(dir + "/a/" + name);
        CHECK(a == read_text_file(dir + "/b/" + name));
        CHECK(a == read_text_file(dir + "/c/" + name));
    }
}
