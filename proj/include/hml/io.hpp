#pragma once

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

#include "hml/annotations.hpp"
#include "hml/baseline.hpp"
#include "hml/datagen.hpp"
#include "hml/hierarchy.hpp"
#include "hml/metrics.hpp"
#include "hml/model.hpp"
#include "hml/types.hpp"

namespace hml::io {

using json = nlohmann::ordered_json;

std::string slurp(const std::string& path);                    // errors: file-not-found
void spit(const std::string& path, std::string_view content);  // errors: io-error

Hierarchy load_hierarchy(const std::string& path);

// Annotation CSV: header `sample_id,<category>,...`; a cell holds ";"-joined
// full paths (quoted RFC-4180 style when needed; CATAMI names may contain
// commas); an empty cell marks a missing category.
struct AnnotationCsv {
    std::vector<std::string> categories;
    std::vector<std::string> sample_ids;
    std::vector<std::vector<std::vector<std::string>>> paths;  // [row][category]
};

AnnotationCsv read_annotation_csv(const std::string& path);
void write_annotation_csv(const std::string& path, const AnnotationCsv& table);

// Resolves the CSV against hierarchies (masks re-derived from the paths).
// The hierarchy order defines the category order of the result; every
// hierarchy category must appear in the file. errors: schema-mismatch.
AnnotationTable bind_annotations(const AnnotationCsv& raw,
                                 std::span<const Hierarchy* const> hierarchies,
                                 const std::string& source_name);

// Features CSV: header `sample_id,f0,...`; values round-trip doubles (%.17g).
struct FeatureTable {
    std::vector<std::string> sample_ids;
    Matrix features;
};

FeatureTable read_features_csv(const std::string& path);
void write_features_csv(const std::string& path, const FeatureTable& table);

// Prediction JSON-lines: a header record pinning category names, node counts
// and score kind, then one record per sample.
struct PredictionFile {
    std::string score_kind;  // "probabilities" or "binary"
    std::vector<std::string> categories;
    std::vector<int> node_counts;
    std::vector<std::string> sample_ids;
    std::vector<std::vector<Vector>> scores;  // [row][category]
};

PredictionFile read_predictions(const std::string& path);
void write_predictions(const std::string& path, const PredictionFile& preds);

void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

// Report builders (all keys ordered and versioned so reruns are
// byte-identical).
json hierarchy_report(const Hierarchy& h);
json count_report(const Hierarchy& h, const mpz_class& count, const mpz_class* brute);
json metrics_report_json(const MetricsReport& report);
json baseline_report_json(const BaselineReport& report,
                          std::span<const Hierarchy* const> hierarchies, double p,
                          std::uint64_t seed);
std::string history_jsonl(const History& history);
std::string per_node_csv(const MetricsReport& report);

// CSV/dataset writers for the generator.
AnnotationCsv annotations_from_bits(std::span<const Hierarchy* const> hierarchies,
                                    std::span<const std::string> sample_ids,
                                    std::span<const BitMatrix> targets,
                                    std::span<const BitVec> present);
void write_generated(const std::string& dir, std::span<const Hierarchy* const> hierarchies,
                     const GeneratedData& data);

}  // namespace hml::io
