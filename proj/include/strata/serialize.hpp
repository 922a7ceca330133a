#pragma once

// JSON/CSV/OBJ serialization of stage artifacts. Every stage file carries the
// config digest; loaders verify it against the active configuration.

#include <string>

#include "strata/pipeline.hpp"

namespace strata {

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);  // throws ParseError

std::string extract_to_json(const ExtractOutput& ex, const std::string& digest);
ExtractOutput extract_from_json(const std::string& text, const std::string& digest);

std::string correspond_to_json(const CorrespondOutput& co, const std::string& digest);
CorrespondOutput correspond_from_json(const std::string& text, const std::string& digest);

std::string morph_to_json(const MorphOutput& mo, const std::string& digest);
MorphOutput morph_from_json(const std::string& text, const std::string& digest);

std::string predict_to_json(const PredictOutput& po, const std::string& digest);
PredictOutput predict_from_json(const std::string& text, const std::string& digest);

std::string eval_to_csv(const EvalReport& report);

std::string manifest_to_json(const RunManifest& m);

std::string mesh_to_obj(const SurfaceMesh& mesh);

// Truth file: per geozone, contours at a ladder of absolute elevations.
struct TruthTable {
    // geozone -> sorted list of (z, contours)
    std::map<std::string, std::vector<std::pair<double, std::vector<Contour>>>> entries;
    std::vector<Contour> lookup(const std::string& geozone, double z) const;
};

std::string truth_to_json(const TruthTable& t);
TruthTable truth_from_json(const std::string& text);

std::string samples_to_csv(const std::vector<SamplePoint>& samples);

}  // namespace strata
