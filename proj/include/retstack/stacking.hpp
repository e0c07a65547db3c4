#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "retstack/gbdt.hpp"
#include "retstack/matrix.hpp"
#include "retstack/metrics.hpp"
#include "retstack/schema.hpp"
#include "retstack/stratify.hpp"

namespace retstack {

// Meta-features: one column per (model, label), model-major.
struct OofMatrix {
    std::vector<std::string> sample_ids;
    Matrix features;
    std::vector<std::string> feature_names;  // "model_id:label"
};

// Stitches per-fold validation predictions into a full-coverage matrix.
// Every sample's row must come from models that did not train on it; a
// prediction covering anything outside its own validation fold is rejected.
OofMatrix assemble_oof(const std::vector<std::string>& model_ids,
                       const std::map<std::pair<std::string, int>, PredictionMatrix>& predictions,
                       const FoldAssignment& fa, const std::vector<std::string>& label_names);

struct HoldoutSplit {
    std::vector<std::size_t> fit_idx;
    std::vector<std::size_t> eval_idx;
};

// Multilabel-stratified hold-out; eval gets roughly `fraction` of the samples.
HoldoutSplit holdout_split(const OofMatrix& oof, const BinaryLabelMatrix& truth, double fraction,
                           std::uint64_t seed);

struct GbdtMetaLearner {
    std::vector<std::string> label_names;
    std::vector<std::string> feature_names;
    GbdtParams params;
    std::vector<GbdtForest> forests;      // one per label; empty when degenerate
    std::vector<std::uint8_t> degenerate; // per label
    std::vector<double> prevalence;       // fallback prediction for degenerate labels
};

// One forest per output label. Labels whose fit targets are all-0 or all-1
// are flagged and predicted at observed prevalence.
GbdtMetaLearner fit_meta(const Matrix& features, const BinaryLabelMatrix& truth,
                         const std::vector<std::size_t>& rows,
                         const std::vector<std::string>& label_names,
                         const std::vector<std::string>& feature_names, const GbdtParams& params,
                         int jobs = 0);

PredictionMatrix predict_meta(const GbdtMetaLearner& m, const Matrix& features,
                              const std::vector<std::string>& sample_ids);

std::vector<std::pair<std::string, double>> feature_importance(const GbdtMetaLearner& m,
                                                               std::size_t label);

void save_oof(const OofMatrix& oof, const std::string& path);
OofMatrix load_oof(const std::string& path);

void save_meta(const GbdtMetaLearner& m, const std::string& path);
GbdtMetaLearner load_meta(const std::string& path);

}  // namespace retstack
