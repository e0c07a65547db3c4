#include "retstack/stacking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "retstack/csv.hpp"
#include "retstack/errors.hpp"

namespace retstack {

OofMatrix assemble_oof(const std::vector<std::string>& model_ids,
                       const std::map<std::pair<std::string, int>, PredictionMatrix>& predictions,
                       const FoldAssignment& fa, const std::vector<std::string>& label_names) {
    const std::size_t n = fa.sample_ids.size();
    const std::size_t n_labels = label_names.size();

    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < n; ++i) row_of[fa.sample_ids[i]] = i;

    OofMatrix oof;
    oof.sample_ids = fa.sample_ids;
    oof.features = Matrix(n, model_ids.size() * n_labels);
    for (const auto& model : model_ids)
        for (const auto& label : label_names) oof.feature_names.push_back(model + ":" + label);

    std::vector<std::uint8_t> covered(n);
    for (std::size_t m = 0; m < model_ids.size(); ++m) {
        const auto& model = model_ids[m];
        std::fill(covered.begin(), covered.end(), 0);
        for (int fold = 0; fold < fa.k; ++fold) {
            auto it = predictions.find({model, fold});
            if (it == predictions.end()) throw MissingFoldPrediction(model, fold);
            const auto& pm = it->second;
            if (pm.probs.cols != n_labels)
                throw ShapeMismatch("prediction for model '" + model + "' has wrong label count");
            for (std::size_t r = 0; r < pm.sample_ids.size(); ++r) {
                const auto& id = pm.sample_ids[r];
                auto rit = row_of.find(id);
                if (rit == row_of.end())
                    throw CoverageGap(id);
                const std::size_t row = rit->second;
                // A sample may only be predicted by the model that held it out.
                if (fa.fold_of[row] != fold || covered[row])
                    throw LeakageDetected(id, model);
                covered[row] = 1;
                for (std::size_t l = 0; l < n_labels; ++l)
                    oof.features(row, m * n_labels + l) = pm.probs(r, l);
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            if (!covered[i]) throw CoverageGap(fa.sample_ids[i]);
    }
    return oof;
}

HoldoutSplit holdout_split(const OofMatrix& oof, const BinaryLabelMatrix& truth, double fraction,
                           std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw DegenerateInput("holdout fraction must be in (0, 1)");
    if (truth.n_samples() != oof.sample_ids.size())
        throw ShapeMismatch("holdout_split: truth rows vs oof rows");
    const int k = std::max(2, static_cast<int>(std::lround(1.0 / fraction)));
    FoldAssignment fa = stratified_kfold(truth, k, seed);
    HoldoutSplit split;
    for (std::size_t i = 0; i < fa.fold_of.size(); ++i) {
        if (fa.fold_of[i] == 0)
            split.eval_idx.push_back(i);
        else
            split.fit_idx.push_back(i);
    }
    return split;
}

GbdtMetaLearner fit_meta(const Matrix& features, const BinaryLabelMatrix& truth,
                         const std::vector<std::size_t>& rows,
                         const std::vector<std::string>& label_names,
                         const std::vector<std::string>& feature_names, const GbdtParams& params,
                         int jobs) {
    const std::size_t n_labels = label_names.size();
    if (truth.n_labels != n_labels) throw ShapeMismatch("fit_meta: label names vs truth");
    if (features.cols != feature_names.size())
        throw ShapeMismatch("fit_meta: feature names vs feature width");

    Matrix fit_x(rows.size(), features.cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t j = 0; j < features.cols; ++j) fit_x(r, j) = features(rows[r], j);

    GbdtMetaLearner meta;
    meta.label_names = label_names;
    meta.feature_names = feature_names;
    meta.params = params;
    meta.forests.resize(n_labels);
    meta.degenerate.assign(n_labels, 0);
    meta.prevalence.assign(n_labels, 0.0);

    auto fit_label = [&](std::size_t l) {
        std::vector<std::uint8_t> y(rows.size());
        std::size_t pos = 0;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            y[r] = truth.at(rows[r], l);
            pos += y[r];
        }
        meta.prevalence[l] = rows.empty() ? 0.0 : static_cast<double>(pos) / rows.size();
        if (pos == 0 || pos == rows.size()) {
            meta.degenerate[l] = 1;
            return;
        }
        meta.forests[l] = fit_gbdt(fit_x, y, params);
    };

    if (jobs == 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
    if (jobs <= 1) {
        for (std::size_t l = 0; l < n_labels; ++l) fit_label(l);
    } else {
        std::vector<std::future<void>> futures;
        for (std::size_t l = 0; l < n_labels; ++l)
            futures.push_back(std::async(std::launch::async, fit_label, l));
        for (auto& f : futures) f.get();
    }
    return meta;
}

PredictionMatrix predict_meta(const GbdtMetaLearner& m, const Matrix& features,
                              const std::vector<std::string>& sample_ids) {
    if (features.cols != m.feature_names.size())
        throw DimensionMismatch("predict_meta: feature width " + std::to_string(features.cols) +
                                " does not match model " +
                                std::to_string(m.feature_names.size()));
    PredictionMatrix pm;
    pm.model_id = "meta_ensemble";
    pm.sample_ids = sample_ids;
    pm.probs = Matrix(features.rows, m.label_names.size());
    for (std::size_t r = 0; r < features.rows; ++r) {
        for (std::size_t l = 0; l < m.label_names.size(); ++l) {
            pm.probs(r, l) = m.degenerate[l] ? m.prevalence[l]
                                             : forest_prob(m.forests[l], features.row(r));
        }
    }
    return pm;
}

std::vector<std::pair<std::string, double>> feature_importance(const GbdtMetaLearner& m,
                                                               std::size_t label) {
    if (label >= m.forests.size()) throw DimensionMismatch("feature_importance: label index");
    auto gains = forest_gain_by_feature(m.forests[label], m.feature_names.size());
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t j = 0; j < gains.size(); ++j) out.emplace_back(m.feature_names[j], gains[j]);
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

void save_oof(const OofMatrix& oof, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write oof file: " + path);
    out.precision(17);
    out << "sample_id";
    for (const auto& n : oof.feature_names) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < oof.sample_ids.size(); ++i) {
        out << oof.sample_ids[i];
        for (std::size_t j = 0; j < oof.features.cols; ++j) out << "," << oof.features(i, j);
        out << "\n";
    }
}

OofMatrix load_oof(const std::string& path) {
    auto t = load_features(path);
    OofMatrix oof;
    oof.sample_ids = std::move(t.sample_ids);
    oof.feature_names = std::move(t.feature_names);
    oof.features = std::move(t.features);
    return oof;
}

namespace {

nlohmann::json forest_to_json(const GbdtForest& f) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : f.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& nd : t.nodes)
            nodes.push_back({{"feature", nd.split_feature},
                             {"threshold", nd.split_threshold},
                             {"gain", nd.split_gain},
                             {"left", nd.left},
                             {"right", nd.right},
                             {"value", nd.leaf_value}});
        trees.push_back(std::move(nodes));
    }
    return {{"base_score", f.base_score}, {"trees", std::move(trees)}};
}

GbdtForest forest_from_json(const nlohmann::json& j) {
    GbdtForest f;
    f.base_score = j.at("base_score");
    for (const auto& tj : j.at("trees")) {
        GbdtTree t;
        for (const auto& nj : tj) {
            GbdtNode nd;
            nd.split_feature = nj.at("feature");
            nd.split_threshold = nj.at("threshold");
            nd.split_gain = nj.at("gain");
            nd.left = nj.at("left");
            nd.right = nj.at("right");
            nd.leaf_value = nj.at("value");
            t.nodes.push_back(nd);
        }
        f.trees.push_back(std::move(t));
    }
    return f;
}

}  // namespace

void save_meta(const GbdtMetaLearner& m, const std::string& path) {
    nlohmann::json j;
    j["label_names"] = m.label_names;
    j["feature_names"] = m.feature_names;
    j["params"] = {{"rounds", m.params.rounds},
                   {"max_depth", m.params.max_depth},
                   {"eta", m.params.eta},
                   {"lambda", m.params.lambda},
                   {"gamma", m.params.gamma},
                   {"min_child_weight", m.params.min_child_weight}};
    j["degenerate"] = m.degenerate;
    j["prevalence"] = m.prevalence;
    j["forests"] = nlohmann::json::array();
    for (const auto& f : m.forests) j["forests"].push_back(forest_to_json(f));
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write meta model: " + path);
    out << j.dump(2) << "\n";
}

GbdtMetaLearner load_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open meta model: " + path);
    nlohmann::json j;
    in >> j;
    GbdtMetaLearner m;
    m.label_names = j.at("label_names").get<std::vector<std::string>>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto& p = j.at("params");
    m.params.rounds = p.at("rounds");
    m.params.max_depth = p.at("max_depth");
    m.params.eta = p.at("eta");
    m.params.lambda = p.at("lambda");
    m.params.gamma = p.at("gamma");
    m.params.min_child_weight = p.at("min_child_weight");
    m.degenerate = j.at("degenerate").get<std::vector<std::uint8_t>>();
    m.prevalence = j.at("prevalence").get<std::vector<double>>();
    for (const auto& fj : j.at("forests")) m.forests.push_back(forest_from_json(fj));
    return m;
}

}  // namespace retstack
