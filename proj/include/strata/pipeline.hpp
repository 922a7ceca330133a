#pragma once

// End-to-end orchestration: configuration, stage drivers, run manifest and
// the on-disk artifact layout shared by the CLI subcommands.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "strata/correspondence.hpp"
#include "strata/extraction.hpp"
#include "strata/morphing.hpp"
#include "strata/reconstruction.hpp"

namespace strata {

struct EvalParams {
    double raster_m = 0.25;
    double depth_step_m = 1.25;
    double max_depth_m = 10.0;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    int threads = 0;                     // <= 0: hardware concurrency
    std::vector<std::string> geozones;   // empty: all labels found in the input
    double bench_height = 10.0;
    double mu_lower = 0.0;               // <= 0: 1.5x median sample spacing
    ExtractionParams extraction;
    AlignmentConfig alignment;
    MorphParams morph;
    EvalParams eval;

    void validate() const;               // throws ConfigError
    std::string canonical_json() const;  // stable dump used for the digest
    std::string digest() const;
};

PipelineConfig config_from_json_text(const std::string& text);  // rejects unknown keys
PipelineConfig load_config(const std::string& path);

// ---- Stage artifacts ----------------------------------------------------------

struct SectionData {
    double z = 0.0;
    std::map<std::string, SectionExtraction> by_geozone;
};

struct ExtractOutput {
    std::vector<SectionData> sections;  // descending elevation
    std::vector<std::string> geozones;
    double neighbor_radius = 0.0;       // resolved
    double mu_lower = 0.0;              // resolved (forwarded to correspondence)
};

struct PairCorrespondence {
    double z_source = 0.0;
    double z_target = 0.0;
    std::string geozone;
    std::vector<RegionShape> sources;
    std::vector<RegionShape> targets;
    AssociationMatrix initial;
    AssociationResult result;
};

struct CorrespondOutput {
    std::vector<PairCorrespondence> pairs;
};

struct MorphInstanceResult {
    std::string geozone;
    double z_source = 0.0;
    double z_target = 0.0;
    std::vector<int> source_ids;
    std::vector<int> target_ids;
    ElevatedBundle elevated;            // physical-frame trajectories
    bool converged = true;
    double coverage = 0.0;              // target perimeter coverage fraction
    int n_dropped_particles = 0;
    int n_dropped_tracks = 0;
};

struct MorphOutput {
    std::vector<MorphInstanceResult> instances;
};

struct BenchPrediction {
    std::string geozone;
    double z_known = 0.0;                   // last informed elevation
    std::vector<double> depths;             // relative depths below z_known
    std::vector<std::vector<Contour>> model;  // per depth
    std::vector<std::vector<Contour>> nil;    // zero-order hold per depth
};

struct PredictOutput {
    std::vector<BenchPrediction> benches;
};

struct EvalRow {
    double depth = 0.0;
    double precision_nil = 0.0, precision_model = 0.0;
    double recall_nil = 0.0, recall_model = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

struct RunManifest {
    std::string config_digest;
    std::string input_digest;
    std::map<std::string, double> stage_seconds;
    std::vector<std::string> warnings;
    std::vector<std::string> outputs;
    int hard_errors = 0;
};

// ---- Stage drivers --------------------------------------------------------------

std::vector<SamplePoint> load_samples(const std::string& path);  // throws ParseError

ExtractOutput stage_extract(const std::vector<SamplePoint>& samples,
                            const PipelineConfig& cfg, RunManifest* manifest = nullptr);

CorrespondOutput stage_correspond(const ExtractOutput& ex, const PipelineConfig& cfg,
                                  RunManifest* manifest = nullptr);

MorphOutput stage_morph(const ExtractOutput& ex, const CorrespondOutput& co,
                        const PipelineConfig& cfg, RunManifest* manifest = nullptr);

PredictOutput stage_predict(const MorphOutput& mo, const PipelineConfig& cfg,
                            RunManifest* manifest = nullptr);

// Truth supplier: contours of one geozone at an absolute elevation.
using TruthFn = std::function<std::vector<Contour>(const std::string& geozone, double z)>;

EvalReport stage_eval(const PredictOutput& po, const TruthFn& truth,
                      const PipelineConfig& cfg, RunManifest* manifest = nullptr);

// Full pipeline: reads samples, runs every stage, writes all artifacts under
// out_dir and returns the manifest. truth_path may be empty (eval skipped).
RunManifest run_pipeline(const std::string& input_path, const PipelineConfig& cfg,
                         const std::string& out_dir, const std::string& truth_path = "");

}  // namespace strata
