#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "retstack/gbdt.hpp"
#include "retstack/hyperopt.hpp"
#include "retstack/schema.hpp"
#include "retstack/simulate.hpp"
#include "retstack/stacking.hpp"
#include "retstack/taxonomy.hpp"
#include "retstack/trainer.hpp"

namespace retstack {

struct PipelineOptions {
    PipelineConfig config;
    bool tune = false;
    SearchConfig search;
    GbdtParams gbdt;
    double threshold = 0.5;
    int jobs = 0;
    int importance_top_k = 10;
    std::string run_dir;
};

struct RunLedger {
    std::string run_id;
    std::string run_dir;
    std::uint64_t root_seed = 0;
    std::vector<std::pair<std::string, std::string>> artifacts;  // name -> path
    std::vector<std::pair<std::string, std::string>> stages;     // stage -> timestamp

    void add_artifact(const std::string& name, const std::string& path);
    const std::string* artifact(const std::string& name) const;
    void mark_stage(const std::string& stage);
};

// The desk-scale stand-ins for the six architectures: varying hidden widths,
// dropout, seeds and per-model feature subsets.
std::vector<BaseLearnerSpec> default_roster(int n_models, std::uint64_t seed);

// Reorder feature rows to manifest sample order; every manifest sample must
// be present.
Matrix align_features(const Manifest& manifest, const FeatureTable& features);

// Median-pruned random search for one base learner on a stratified subset;
// writes the winning hyperparameters back into the spec.
SearchResult tune_model(BaseLearnerSpec& spec, const Matrix& feats,
                        const BinaryLabelMatrix& truth, const SearchConfig& search,
                        int batch_size, std::uint64_t root_seed);

// split -> (tune) -> train per (model, fold) -> OOF -> holdout -> meta -> reports.
RunLedger run_pipeline(const PipelineOptions& opts, const Manifest& manifest,
                       const FeatureTable& features);

void save_ledger(const RunLedger& ledger, const std::string& path);
RunLedger load_ledger(const std::string& path);

// Consolidated machine-readable report; validated against the bundled schema,
// a copy of which is written next to the report.
void write_consolidated_report(const RunLedger& ledger, const std::string& path);

// Structural validator for the subset of JSON Schema the report schema uses
// (type / required / properties / items).
bool validate_json_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                          std::string* error);

const nlohmann::json& report_schema();

// Macro report restricted to an evaluated-label mask; masked-out labels are
// listed as skipped. Optionally writes per-label ROC CSVs (prefix + label + .csv).
MetricsReport masked_macro_report(const PredictionMatrix& pred, const BinaryLabelMatrix& truth,
                                  double threshold, const std::vector<std::string>& label_names,
                                  const std::vector<std::uint8_t>& evaluated,
                                  const std::string& roc_prefix = "");

}  // namespace retstack
