#include "retstack/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "retstack/csv.hpp"
#include "retstack/errors.hpp"

namespace retstack {

namespace {

void check_lengths(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size())
        throw LengthMismatch("scores and labels differ in length: " +
                             std::to_string(scores.size()) + " vs " +
                             std::to_string(labels.size()));
}

std::pair<std::size_t, std::size_t> count_classes(std::span<const std::uint8_t> labels) {
    std::size_t pos = 0;
    for (auto y : labels) pos += y;
    return {pos, labels.size() - pos};
}

}  // namespace

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_lengths(scores, labels);
    auto [n_pos, n_neg] = count_classes(labels);
    if (n_pos == 0 || n_neg == 0)
        throw DegenerateClass("auc needs at least one positive and one negative");

    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mid-rank sum over positives.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t t = i; t < j; ++t)
            if (labels[idx[t]]) rank_sum_pos += mid_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

RocCurve roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    check_lengths(scores, labels);
    auto [n_pos, n_neg] = count_classes(labels);
    if (n_pos == 0 || n_neg == 0)
        throw DegenerateClass("roc_curve needs at least one positive and one negative");

    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[idx[t]])
                ++tp;
            else
                ++fp;
        }
        curve.points.push_back({static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos,
                                scores[idx[i]]});
        i = j;
    }

    double area = 0.0;
    for (std::size_t p = 1; p < curve.points.size(); ++p) {
        const auto& a = curve.points[p - 1];
        const auto& b = curve.points[p];
        area += (b.fpr - a.fpr) * 0.5 * (a.tpr + b.tpr);
    }
    curve.auc = area;
    return curve;
}

ClassMetrics class_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                           double threshold) {
    check_lengths(scores, labels);
    ClassMetrics m;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        const bool truth = labels[i] != 0;
        if (pred && truth)
            ++m.tp;
        else if (pred && !truth)
            ++m.fp;
        else if (!pred && truth)
            ++m.fn;
        else
            ++m.tn;
    }
    m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / (m.tp + m.fn) : 0.0;
    m.f1 = (m.precision + m.recall > 0.0)
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    auto [n_pos, n_neg] = count_classes(labels);
    if (n_pos == 0 || n_neg == 0) {
        m.degenerate = true;
    } else {
        m.auc = auc(scores, labels);
    }
    return m;
}

MetricsReport macro_report(const PredictionMatrix& pred, const BinaryLabelMatrix& truth,
                           double threshold, const std::vector<std::string>& label_names) {
    if (pred.probs.rows != truth.n_samples() || pred.probs.cols != truth.n_labels)
        throw ShapeMismatch("prediction matrix shape does not match truth");
    if (label_names.size() != truth.n_labels)
        throw ShapeMismatch("label name count does not match truth");

    MetricsReport r;
    r.label_names = label_names;
    const std::size_t n = truth.n_samples();
    std::vector<double> scores(n);
    std::vector<std::uint8_t> labels(n);
    double sum_auc = 0, sum_f1 = 0, sum_p = 0, sum_r = 0;
    std::size_t used = 0;
    for (std::size_t l = 0; l < truth.n_labels; ++l) {
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = pred.probs(i, l);
            labels[i] = truth.at(i, l);
        }
        auto cm = class_metrics(scores, labels, threshold);
        if (cm.degenerate) {
            r.skipped_labels.push_back(label_names[l]);
        } else {
            sum_auc += cm.auc;
            sum_f1 += cm.f1;
            sum_p += cm.precision;
            sum_r += cm.recall;
            ++used;
        }
        r.per_class.push_back(cm);
    }
    if (used > 0) {
        r.macro_auc = sum_auc / used;
        r.macro_f1 = sum_f1 / used;
        r.macro_precision = sum_p / used;
        r.macro_recall = sum_r / used;
    }
    return r;
}

void save_predictions(const PredictionMatrix& pm, const std::vector<std::string>& label_names,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write predictions: " + path);
    out.precision(17);
    out << "sample_id";
    for (const auto& l : label_names) out << "," << l;
    out << "\n";
    for (std::size_t i = 0; i < pm.sample_ids.size(); ++i) {
        out << pm.sample_ids[i];
        for (std::size_t j = 0; j < pm.probs.cols; ++j) out << "," << pm.probs(i, j);
        out << "\n";
    }
}

PredictionMatrix load_predictions(const std::string& path, const std::string& model_id) {
    auto table = csv::read_file(path);
    const int id_col = table.column("sample_id");
    if (id_col < 0) throw MissingColumn("sample_id");
    PredictionMatrix pm;
    pm.model_id = model_id;
    pm.probs = Matrix(table.rows.size(), table.header.size() - 1);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        pm.sample_ids.push_back(table.rows[r][id_col]);
        std::size_t jj = 0;
        for (std::size_t j = 0; j < table.rows[r].size(); ++j) {
            if (static_cast<int>(j) == id_col) continue;
            pm.probs(r, jj++) = csv::parse_double(table.rows[r][j], r + 2);
        }
    }
    return pm;
}

void save_roc_csv(const RocCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write roc file: " + path);
    out.precision(17);
    out << "fpr,tpr,threshold\n";
    for (const auto& p : curve.points)
        out << p.fpr << "," << p.tpr << "," << p.threshold << "\n";
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["macro"] = {{"auc", r.macro_auc},
                  {"f1", r.macro_f1},
                  {"precision", r.macro_precision},
                  {"recall", r.macro_recall}};
    j["skipped_labels"] = r.skipped_labels;
    nlohmann::json per = nlohmann::json::object();
    for (std::size_t l = 0; l < r.per_class.size(); ++l) {
        const auto& c = r.per_class[l];
        per[r.label_names[l]] = {{"auc", c.auc},       {"f1", c.f1},
                                 {"precision", c.precision}, {"recall", c.recall},
                                 {"tp", c.tp},         {"fp", c.fp},
                                 {"tn", c.tn},         {"fn", c.fn},
                                 {"degenerate", c.degenerate}};
    }
    j["per_class"] = per;
    return j.dump(2);
}

void save_report_json(const MetricsReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write report: " + path);
    out << report_to_json(r) << "\n";
}

}  // namespace retstack
