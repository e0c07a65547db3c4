#pragma once

#include <span>
#include <string>
#include <vector>

#include "retstack/matrix.hpp"
#include "retstack/schema.hpp"

namespace retstack {

struct RocPoint {
    double fpr;
    double tpr;
    double threshold;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

struct ClassMetrics {
    double auc = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    bool degenerate = false;
};

struct MetricsReport {
    std::vector<std::string> label_names;
    std::vector<ClassMetrics> per_class;
    double macro_auc = 0.0;
    double macro_f1 = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    std::vector<std::string> skipped_labels;
};

// Mann-Whitney AUC with mid-rank tie handling, O(n log n).
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);

ClassMetrics class_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                           double threshold);

struct PredictionMatrix {
    std::vector<std::string> sample_ids;
    Matrix probs;  // n_samples x n_labels
    std::string model_id;
};

MetricsReport macro_report(const PredictionMatrix& pred, const BinaryLabelMatrix& truth,
                           double threshold, const std::vector<std::string>& label_names);

void save_roc_csv(const RocCurve& curve, const std::string& path);

// Prediction file: header `sample_id,<label...>`; model_id comes from the caller.
void save_predictions(const PredictionMatrix& pm, const std::vector<std::string>& label_names,
                      const std::string& path);
PredictionMatrix load_predictions(const std::string& path, const std::string& model_id);

std::string report_to_json(const MetricsReport& r);
void save_report_json(const MetricsReport& r, const std::string& path);

}  // namespace retstack
