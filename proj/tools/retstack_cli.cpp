// retstack: stage-wise CLI over the stacking pipeline. Stages share a run
// directory and keep a ledger there, so each arrow of the workflow is
// independently runnable and the whole chain stays reproducible.
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "retstack/csv.hpp"
#include "retstack/errors.hpp"
#include "retstack/explain.hpp"
#include "retstack/pipeline.hpp"
#include "retstack/rng.hpp"
#include "retstack/simulate.hpp"
#include "retstack/stacking.hpp"
#include "retstack/taxonomy.hpp"
#include "retstack/trainer.hpp"

using namespace retstack;
namespace fs = std::filesystem;

namespace {

PipelineConfig load_config(const std::string& explicit_path) {
    if (!explicit_path.empty()) return PipelineConfig::from_json_file(explicit_path);
    if (const char* env = std::getenv("RETSTACK_CONFIG"))
        return PipelineConfig::from_json_file(env);
    return PipelineConfig{};
}

RunLedger open_ledger(const std::string& run_dir, std::uint64_t seed) {
    const auto path = fs::path(run_dir) / "ledger.json";
    if (fs::exists(path)) return load_ledger(path.string());
    RunLedger l;
    l.run_id = "run_" + std::to_string(seed);
    l.run_dir = run_dir;
    l.root_seed = seed;
    return l;
}

void close_ledger(RunLedger& ledger, const std::string& stage) {
    ledger.mark_stage(stage);
    std::sort(ledger.artifacts.begin(), ledger.artifacts.end());
    ledger.artifacts.erase(std::unique(ledger.artifacts.begin(), ledger.artifacts.end()),
                           ledger.artifacts.end());
    save_ledger(ledger, (fs::path(ledger.run_dir) / "ledger.json").string());
}

const std::string& require_artifact(const RunLedger& ledger, const std::string& name) {
    const auto* p = ledger.artifact(name);
    if (!p) throw IncompleteRun("run is missing artifact '" + name + "'; run earlier stages");
    return *p;
}

std::vector<std::string> schema_label_names(const LabelSchema& schema) {
    std::vector<std::string> names;
    for (const auto& l : schema.labels) names.push_back(l.id);
    return names;
}

void save_roster(const std::vector<BaseLearnerSpec>& roster, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : roster)
        j.push_back({{"model_id", s.model_id},
                     {"hidden_units", s.hidden_units},
                     {"dropout_rate", s.dropout_rate},
                     {"learning_rate", s.learning_rate},
                     {"weight_decay", s.weight_decay},
                     {"feature_subset_seed", s.feature_subset_seed},
                     {"feature_subset_fraction", s.feature_subset_fraction}});
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write roster: " + path);
    out << j.dump(2) << "\n";
}

std::vector<BaseLearnerSpec> load_roster(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open roster: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<BaseLearnerSpec> roster;
    for (const auto& e : j) {
        BaseLearnerSpec s;
        s.model_id = e.at("model_id");
        s.hidden_units = e.at("hidden_units");
        s.dropout_rate = e.at("dropout_rate");
        s.learning_rate = e.at("learning_rate");
        s.weight_decay = e.at("weight_decay");
        s.feature_subset_seed = e.at("feature_subset_seed");
        s.feature_subset_fraction = e.at("feature_subset_fraction");
        roster.push_back(s);
    }
    if (roster.empty()) throw ValidationError("roster is empty");
    return roster;
}

std::vector<BaseLearnerSpec> roster_for(const RunLedger& ledger, const PipelineConfig& cfg) {
    if (const auto* p = ledger.artifact("roster")) return load_roster(*p);
    return default_roster(cfg.n_models, cfg.seed);
}

// mean fold-model probabilities per base model, stitched into the meta layout
PredictionMatrix mean_base_prediction(const std::vector<BaseLearnerModel>& folds,
                                      const Matrix& x,
                                      const std::vector<std::string>& sample_ids) {
    PredictionMatrix acc = predict(folds[0], x, sample_ids);
    for (std::size_t f = 1; f < folds.size(); ++f) {
        auto pm = predict(folds[f], x, sample_ids);
        for (std::size_t i = 0; i < acc.probs.data.size(); ++i)
            acc.probs.data[i] += pm.probs.data[i];
    }
    for (auto& v : acc.probs.data) v /= static_cast<double>(folds.size());
    return acc;
}

// ---------------- subcommand bodies ----------------

int cmd_validate(const std::string& manifest_path, const std::string& features_path,
                 const std::string& config_path) {
    auto cfg = load_config(config_path);
    cfg.validate();
    auto manifest = load_manifest(manifest_path, LabelSchema::canonical());
    std::cout << "manifest: " << manifest.n_samples() << " samples, "
              << manifest.schema.size() << " labels\n";
    if (!features_path.empty()) {
        auto features = load_features(features_path);
        (void)align_features(manifest, features);
        std::cout << "features: " << features.features.rows << " x "
                  << features.features.cols << ", aligned\n";
    }
    std::cout << "ok\n";
    return 0;
}

int cmd_simulate(SyntheticBenchmarkSpec spec, double uniform_prevalence, std::uint64_t seed,
                 const std::string& out_manifest, const std::string& out_features) {
    if (uniform_prevalence > 0.0) spec.prevalence.assign(spec.n_labels, uniform_prevalence);
    auto data = simulate(spec, seed);
    save_manifest(data.manifest, out_manifest);
    save_features(data.features, out_features);
    std::cout << "wrote " << out_manifest << " and " << out_features << " ("
              << data.manifest.n_samples() << " samples)\n";
    return 0;
}

int cmd_split(const std::string& manifest_path, const PipelineConfig& cfg,
              const std::string& run_dir) {
    fs::create_directories(run_dir);
    auto manifest = load_manifest(manifest_path, LabelSchema::canonical());
    auto truth = binarize_manifest(manifest);
    auto fa = stratified_kfold(truth, cfg.k_folds, sub_seed(cfg.seed, "split"));
    auto ledger = open_ledger(run_dir, cfg.seed);
    const auto path = (fs::path(run_dir) / "folds.csv").string();
    save_folds(fa, path);
    ledger.add_artifact("folds", path);
    cfg.save_json((fs::path(run_dir) / "config.json").string());
    ledger.add_artifact("config", (fs::path(run_dir) / "config.json").string());
    close_ledger(ledger, "split");
    std::cout << "wrote " << path << " (k=" << cfg.k_folds << ")\n";
    return 0;
}

int cmd_tune(const std::string& manifest_path, const std::string& features_path,
             const PipelineConfig& cfg, const SearchConfig& search,
             const std::string& run_dir) {
    fs::create_directories(run_dir);
    auto manifest = load_manifest(manifest_path, LabelSchema::canonical());
    auto features = load_features(features_path);
    auto truth = binarize_manifest(manifest);
    auto feats = align_features(manifest, features);
    auto ledger = open_ledger(run_dir, cfg.seed);
    auto roster = default_roster(cfg.n_models, cfg.seed);
    for (auto& spec : roster) {
        auto result = tune_model(spec, feats, truth, search, cfg.batch_size, cfg.seed);
        const auto p = (fs::path(run_dir) / ("trials_" + spec.model_id + ".json")).string();
        save_trial_log(result, p);
        ledger.add_artifact("trials:" + spec.model_id, p);
        std::cout << spec.model_id << ": best lr=" << spec.learning_rate
                  << " wd=" << spec.weight_decay << " dropout=" << spec.dropout_rate << "\n";
    }
    const auto roster_path = (fs::path(run_dir) / "roster.json").string();
    save_roster(roster, roster_path);
    ledger.add_artifact("roster", roster_path);
    close_ledger(ledger, "tune");
    return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& features_path,
              const PipelineConfig& cfg, const std::string& run_dir, int jobs) {
    auto manifest = load_manifest(manifest_path, LabelSchema::canonical());
    auto features = load_features(features_path);
    auto truth = binarize_manifest(manifest);
    auto feats = align_features(manifest, features);
    auto ledger = open_ledger(run_dir, cfg.seed);
    auto fa = load_folds(require_artifact(ledger, "folds"));
    auto roster = roster_for(ledger, cfg);
    const auto label_names = schema_label_names(manifest.schema);

    (void)jobs;  // fold jobs are cheap at desk scale; sequential keeps this simple
    nlohmann::json summary;
    summary["model_ids"] = nlohmann::json::array();
    for (const auto& spec : roster) {
        std::vector<double> fold_aucs;
        for (int f = 0; f < fa.k; ++f) {
            SplitView view = split_views(fa, f);
            auto model = train_fold(
                spec, feats, truth, view, cfg.epochs, cfg.batch_size,
                sub_seed(cfg.seed, "train:" + spec.model_id + ":" + std::to_string(f)));
            Matrix valid_x(view.valid_idx.size(), feats.cols);
            std::vector<std::string> valid_ids;
            for (std::size_t r = 0; r < view.valid_idx.size(); ++r) {
                valid_ids.push_back(fa.sample_ids[view.valid_idx[r]]);
                for (std::size_t c = 0; c < feats.cols; ++c)
                    valid_x(r, c) = feats(view.valid_idx[r], c);
            }
            auto pm = predict(model, valid_x, valid_ids);
            const auto tag = spec.model_id + "_fold" + std::to_string(f);
            const auto model_path = (fs::path(run_dir) / ("model_" + tag + ".json")).string();
            const auto pred_path = (fs::path(run_dir) / ("pred_" + tag + ".csv")).string();
            save_model(model, model_path);
            save_predictions(pm, label_names, pred_path);
            ledger.add_artifact("model:" + spec.model_id + ":" + std::to_string(f), model_path);
            ledger.add_artifact("pred:" + spec.model_id + ":" + std::to_string(f), pred_path);
            fold_aucs.push_back(model.best_macro_auc);
            std::cout << tag << ": valid macro-AUC " << model.best_macro_auc << "\n";
        }
        summary["model_ids"].push_back(spec.model_id);
        double mean = 0.0;
        for (double a : fold_aucs) mean += a;
        mean /= fa.k;
        double var = 0.0;
        for (double a : fold_aucs) var += (a - mean) * (a - mean);
        summary["models"][spec.model_id] = {
            {"hidden_units", spec.hidden_units},
            {"dropout_rate", spec.dropout_rate},
            {"learning_rate", spec.learning_rate},
            {"weight_decay", spec.weight_decay},
            {"fold_auc", fold_aucs},
            {"mean_auc", mean},
            {"sd_auc", fa.k > 1 ? std::sqrt(var / (fa.k - 1)) : 0.0}};
    }
    const auto summary_path = (fs::path(run_dir) / "models_summary.json").string();
    std::ofstream(summary_path) << summary.dump(2) << "\n";
    ledger.add_artifact("models_summary", summary_path);
    close_ledger(ledger, "train");
    return 0;
}

int cmd_oof(const std::string& manifest_path, const PipelineConfig& cfg,
            const std::string& run_dir) {
    auto manifest = load_manifest(manifest_path, LabelSchema::canonical());
    auto ledger = open_ledger(run_dir, cfg.seed);
    auto fa = load_folds(require_artifact(ledger, "folds"));
    const auto label_names = schema_label_names(manifest.schema);

    std::map<std::pair<std::string, int>, PredictionMatrix> preds;
    std::vector<std::string> model_ids;
    for (const auto& [name, path] : ledger.artifacts) {
        if (name.rfind("pred:", 0) != 0) continue;
        const auto rest = name.substr(5);
        const auto colon = rest.rfind(':');
        const std::string model_id = rest.substr(0, colon);
        const int fold = std::stoi(rest.substr(colon + 1));
        if (std::find(model_ids.begin(), model_ids.end(), model_id) == model_ids.end())
            model_ids.push_back(model_id);
        preds[{model_id, fold}] = load_predictions(path, model_id);
    }
    if (model_ids.empty()) throw IncompleteRun("no per-fold predictions; run `train` first");

    auto oof = assemble_oof(model_ids, preds, fa, label_names);
    const auto path = (fs::path(run_dir) / "oof.csv").string();
    save_oof(oof, path);
    ledger.add_artifact("oof", path);

    // per-model OOF reports feed the consolidated report
    auto truth = binarize_manifest(manifest);
    for (std::size_t m = 0; m < model_ids.size(); ++m) {
        PredictionMatrix pm;
        pm.model_id = model_ids[m];
        pm.sample_ids = oof.sample_ids;
        pm.probs = Matrix(oof.features.rows, label_names.size());
        for (std::size_t i = 0; i < oof.features.rows; ++i)
            for (std::size_t l = 0; l < label_names.size(); ++l)
                pm.probs(i, l) = oof.features(i, m * label_names.size() + l);
        auto r = macro_report(pm, truth, 0.5, label_names);
        const auto p = (fs::path(run_dir) / ("report_" + model_ids[m] + ".json")).string();
        save_report_json(r, p);
        ledger.add_artifact("report:" + model_ids[m], p);
    }
    close_ledger(ledger, "oof");
    std::cout << "wrote " << path << " (" << oof.features.rows << " x " << oof.features.cols
              << ")\n";
    return 0;
}

int cmd_stack(const std::string& manifest_path, const PipelineConfig& cfg,
              const GbdtParams& gbdt, const std::string& run_dir, int jobs) {
    auto manifest = load_manifest(manifest_path, LabelSchema::canonical());
    auto truth = binarize_manifest(manifest);
    auto ledger = open_ledger(run_dir, cfg.seed);
    auto oof = load_oof(require_artifact(ledger, "oof"));
    const auto label_names = schema_label_names(manifest.schema);

    auto hs = holdout_split(oof, truth, cfg.oof_holdout_fraction, sub_seed(cfg.seed, "holdout"));
    {
        std::ofstream out((fs::path(run_dir) / "holdout.csv").string());
        out << "sample_id,part\n";
        std::vector<const char*> part(oof.sample_ids.size(), "fit");
        for (std::size_t i : hs.eval_idx) part[i] = "eval";
        for (std::size_t i = 0; i < oof.sample_ids.size(); ++i)
            out << oof.sample_ids[i] << "," << part[i] << "\n";
        ledger.add_artifact("holdout", (fs::path(run_dir) / "holdout.csv").string());
    }
    auto meta = fit_meta(oof.features, truth, hs.fit_idx, label_names, oof.feature_names, gbdt,
                         jobs);
    const auto path = (fs::path(run_dir) / "meta_model.json").string();
    save_meta(meta, path);
    ledger.add_artifact("meta_model", path);
    close_ledger(ledger, "stack");
    std::cout << "wrote " << path << "\n";
    return 0;
}

int cmd_eval(const std::string& manifest_path, const PipelineConfig& cfg, double threshold,
             int top_k, const std::string& run_dir) {
    auto manifest = load_manifest(manifest_path, LabelSchema::canonical());
    auto truth = binarize_manifest(manifest);
    auto ledger = open_ledger(run_dir, cfg.seed);
    auto oof = load_oof(require_artifact(ledger, "oof"));
    auto meta = load_meta(require_artifact(ledger, "meta_model"));
    const auto label_names = schema_label_names(manifest.schema);

    // eval part from the holdout file
    std::map<std::string, bool> is_eval;
    {
        auto table = csv::read_file(require_artifact(ledger, "holdout"));
        const int idc = table.column("sample_id"), pc = table.column("part");
        for (const auto& row : table.rows) is_eval[row[idc]] = row[pc] == "eval";
    }
    std::map<std::string, std::size_t> truth_row;
    for (std::size_t i = 0; i < truth.sample_ids.size(); ++i)
        truth_row[truth.sample_ids[i]] = i;

    std::vector<std::size_t> eval_rows;
    for (std::size_t i = 0; i < oof.sample_ids.size(); ++i)
        if (is_eval[oof.sample_ids[i]]) eval_rows.push_back(i);
    if (eval_rows.empty()) throw ValidationError("holdout file marks no eval samples");

    Matrix eval_x(eval_rows.size(), oof.features.cols);
    std::vector<std::string> eval_ids;
    BinaryLabelMatrix eval_truth;
    eval_truth.n_labels = truth.n_labels;
    for (std::size_t r = 0; r < eval_rows.size(); ++r) {
        const std::size_t i = eval_rows[r];
        eval_ids.push_back(oof.sample_ids[i]);
        eval_truth.sample_ids.push_back(oof.sample_ids[i]);
        for (std::size_t c = 0; c < oof.features.cols; ++c) eval_x(r, c) = oof.features(i, c);
        const std::size_t t = truth_row.at(oof.sample_ids[i]);
        for (std::size_t l = 0; l < truth.n_labels; ++l)
            eval_truth.values.push_back(truth.at(t, l));
    }

    auto meta_pred = predict_meta(meta, eval_x, eval_ids);
    auto report = macro_report(meta_pred, eval_truth, threshold, label_names);
    const auto report_path = (fs::path(run_dir) / "report_meta.json").string();
    save_report_json(report, report_path);
    ledger.add_artifact("report:meta", report_path);
    std::cout << "meta macro-AUC on hold-out: " << report.macro_auc << "\n";

    nlohmann::json cmp;
    cmp["holdout_fraction"] = cfg.oof_holdout_fraction;
    cmp["meta_macro_auc"] = report.macro_auc;
    const std::size_t n_models = oof.features.cols / truth.n_labels;
    std::vector<std::size_t> all_rows(eval_rows.size());
    for (std::size_t r = 0; r < all_rows.size(); ++r) all_rows[r] = r;
    for (std::size_t m = 0; m < n_models; ++m) {
        Matrix probs(eval_rows.size(), truth.n_labels);
        for (std::size_t r = 0; r < eval_rows.size(); ++r)
            for (std::size_t l = 0; l < truth.n_labels; ++l)
                probs(r, l) = eval_x(r, m * truth.n_labels + l);
        const auto& col = oof.feature_names[m * truth.n_labels];
        cmp["single_macro_auc"][col.substr(0, col.find(':'))] =
            macro_auc_on(probs, eval_truth, all_rows);
    }
    std::ofstream((fs::path(run_dir) / "eval_summary.json").string()) << cmp.dump(2) << "\n";
    ledger.add_artifact("eval_summary", (fs::path(run_dir) / "eval_summary.json").string());

    // per-label ROC and importance exports
    std::vector<double> scores(eval_rows.size());
    std::vector<std::uint8_t> ys(eval_rows.size());
    for (std::size_t l = 0; l < label_names.size(); ++l) {
        if (report.per_class[l].degenerate) continue;
        for (std::size_t r = 0; r < eval_rows.size(); ++r) {
            scores[r] = meta_pred.probs(r, l);
            ys[r] = eval_truth.at(r, l);
        }
        const auto p = (fs::path(run_dir) / ("roc_" + label_names[l] + ".csv")).string();
        save_roc_csv(roc_curve(scores, ys), p);
        ledger.add_artifact("roc:" + label_names[l], p);
    }
    for (std::size_t l = 0; l < label_names.size(); ++l) {
        if (meta.degenerate[l]) continue;
        auto ranked = feature_importance(meta, l);
        if (static_cast<int>(ranked.size()) > top_k) ranked.resize(top_k);
        const auto p = (fs::path(run_dir) / ("importance_" + label_names[l] + ".csv")).string();
        std::ofstream out(p);
        out.precision(17);
        out << "feature,gain_share\n";
        for (const auto& [name, share] : ranked) out << name << "," << share << "\n";
        ledger.add_artifact("importance:" + label_names[l], p);
    }
    close_ledger(ledger, "eval");
    return 0;
}

int cmd_eval_external(const std::string& model_path, const std::string& run_dir_models,
                      const std::string& features_path, const std::string& truth_path,
                      const std::string& mapping_arg, double threshold,
                      const std::string& out_dir) {
    fs::create_directories(out_dir);
    auto schema = LabelSchema::canonical();
    const auto label_names = schema_label_names(schema);
    auto features = load_features(features_path);
    auto external = load_external_manifest(truth_path);
    if (external.n_samples() == 0) throw ValidationError("external manifest is empty");

    // ground truth through the taxonomy mapping; absent a mapping, external
    // labels matching schema ids map one-to-one
    LabelMapping mapping;
    if (mapping_arg == "rfmid") {
        mapping = rfmid_mapping();
    } else if (!mapping_arg.empty()) {
        mapping = load_mapping(mapping_arg, schema);
    } else {
        for (const auto& id : label_names)
            if (std::find(external.label_names.begin(), external.label_names.end(), id) !=
                external.label_names.end())
                mapping.entries.push_back({id, {id}});
    }
    auto mapped = map_ground_truth(external, mapping, schema);

    // features aligned to the external sample order
    std::map<std::string, std::size_t> feat_row;
    for (std::size_t i = 0; i < features.sample_ids.size(); ++i)
        feat_row[features.sample_ids[i]] = i;
    Matrix x(external.n_samples(), features.features.cols);
    for (std::size_t i = 0; i < external.n_samples(); ++i) {
        auto it = feat_row.find(external.sample_ids[i]);
        if (it == feat_row.end())
            throw ValidationError("no features for external sample " + external.sample_ids[i]);
        for (std::size_t c = 0; c < x.cols; ++c) x(i, c) = features.features(it->second, c);
    }

    PredictionMatrix pred;
    if (!model_path.empty()) {
        auto model = load_model(model_path);
        pred = predict(model, x, external.sample_ids);
    } else {
        auto ledger = load_ledger((fs::path(run_dir_models) / "ledger.json").string());
        auto meta = load_meta(require_artifact(ledger, "meta_model"));
        // meta features: per-model fold-averaged probabilities on the
        // external inputs, in the OOF column layout
        std::map<std::string, std::vector<BaseLearnerModel>> base;
        for (const auto& [name, path] : ledger.artifacts) {
            if (name.rfind("model:", 0) != 0) continue;
            const auto rest = name.substr(6);
            base[rest.substr(0, rest.rfind(':'))].push_back(load_model(path));
        }
        if (base.empty()) throw IncompleteRun("no base models in run dir");
        std::vector<std::string> ids;
        for (const auto& [id, _] : base) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        Matrix meta_x(x.rows, ids.size() * schema.size());
        for (std::size_t m = 0; m < ids.size(); ++m) {
            auto pm = mean_base_prediction(base[ids[m]], x, external.sample_ids);
            for (std::size_t i = 0; i < x.rows; ++i)
                for (std::size_t l = 0; l < schema.size(); ++l)
                    meta_x(i, m * schema.size() + l) = pm.probs(i, l);
        }
        if (meta_x.cols != meta.feature_names.size())
            throw DimensionMismatch("meta model expects " +
                                    std::to_string(meta.feature_names.size()) +
                                    " features, run dir provides " +
                                    std::to_string(meta_x.cols));
        pred = predict_meta(meta, meta_x, external.sample_ids);
    }

    const auto roc_prefix = (fs::path(out_dir) / "roc_").string();
    auto report = masked_macro_report(pred, mapped.matrix, threshold, label_names,
                                      mapped.evaluated, roc_prefix);
    save_report_json(report, (fs::path(out_dir) / "report_external.json").string());
    std::cout << "external macro-AUC: " << report.macro_auc << " ("
              << report.skipped_labels.size() << " labels skipped)\n";
    return 0;
}

int cmd_explain(const std::string& model_path, const std::string& features_path,
                const std::string& sample_id, const std::string& label,
                const std::string& method, int steps, double baseline_value,
                const std::string& out_path) {
    auto model = load_model(model_path);
    auto features = load_features(features_path);
    auto schema = LabelSchema::canonical();
    const std::size_t label_idx = schema.index_of(label);

    std::size_t row = features.sample_ids.size();
    for (std::size_t i = 0; i < features.sample_ids.size(); ++i)
        if (features.sample_ids[i] == sample_id) row = i;
    if (row == features.sample_ids.size())
        throw ValidationError("sample not found: " + sample_id);
    std::vector<double> x(features.features.row(row).begin(),
                          features.features.row(row).end());

    AttributionMap a;
    if (method == "saliency") {
        a = saliency(model, x, label_idx);
    } else if (method == "ig") {
        std::vector<double> baseline(x.size(), baseline_value);
        a = integrated_gradients(model, x, baseline, steps, label_idx);
    } else {
        // occlusion fill: per-feature means over the feature table
        std::vector<double> fill(x.size(), 0.0);
        for (std::size_t i = 0; i < features.features.rows; ++i)
            for (std::size_t c = 0; c < x.size(); ++c) fill[c] += features.features(i, c);
        for (auto& v : fill) v /= static_cast<double>(features.features.rows);
        a = occlusion(model, x, label_idx, singleton_windows(x.size()), fill);
    }
    a.sample_id = sample_id;
    a.label = label;
    save_attribution(a, features.feature_names, out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& out_path) {
    auto ledger = load_ledger((fs::path(run_dir) / "ledger.json").string());
    const auto path = out_path.empty() ? (fs::path(run_dir) / "report.json").string() : out_path;
    write_consolidated_report(ledger, path);
    ledger.add_artifact("report", path);
    close_ledger(ledger, "report");
    std::cout << "wrote " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stacked multilabel classification pipeline"};
    app.require_subcommand(1);

    std::string manifest_path, features_path, config_path, run_dir = "run";
    std::uint64_t seed_flag = 0;
    bool seed_set = false;
    double threshold = 0.5;
    int jobs = 0;

    auto add_common = [&](CLI::App* sub, bool with_features) {
        sub->add_option("--manifest", manifest_path, "label manifest CSV")->required();
        if (with_features)
            sub->add_option("--features", features_path, "feature table CSV")->required();
        sub->add_option("--config", config_path,
                        "pipeline config JSON (default: $RETSTACK_CONFIG)");
        sub->add_option("--run-dir", run_dir, "run directory");
        sub->add_flag_callback("--deterministic", [] {});  // reserved, always on
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](std::uint64_t v) { seed_flag = v; seed_set = true; },
            "override config seed");
    };

    // validate
    auto* validate = app.add_subcommand("validate", "check manifest / features / config");
    validate->add_option("--manifest", manifest_path)->required();
    validate->add_option("--features", features_path);
    validate->add_option("--config", config_path);

    // simulate
    SyntheticBenchmarkSpec sim_spec;
    double sim_prevalence = 0.0;
    std::uint64_t sim_seed = 1;
    std::string out_manifest, out_features;
    auto* simulate_cmd = app.add_subcommand("simulate", "generate the synthetic benchmark");
    simulate_cmd->add_option("--samples", sim_spec.n_samples);
    simulate_cmd->add_option("--labels", sim_spec.n_labels);
    simulate_cmd->add_option("--n-features", sim_spec.n_features);
    simulate_cmd->add_option("--prevalence", sim_prevalence, "uniform per-label prevalence");
    simulate_cmd->add_option("--cooccurrence", sim_spec.cooccurrence);
    simulate_cmd->add_option("--noise", sim_spec.feature_noise);
    simulate_cmd->add_option("--models", sim_spec.n_models);
    simulate_cmd->add_option("--seed", sim_seed);
    simulate_cmd->add_option("--out-manifest", out_manifest)->required();
    simulate_cmd->add_option("--out-features", out_features)->required();

    // stages
    auto* split_cmd = app.add_subcommand("split", "stratified k-fold assignment");
    add_common(split_cmd, false);

    SearchConfig search;
    auto* tune_cmd = app.add_subcommand("tune", "median-pruned hyperparameter search");
    add_common(tune_cmd, true);
    tune_cmd->add_option("--trials", search.n_trials);
    tune_cmd->add_option("--max-epochs", search.max_epochs);
    tune_cmd->add_option("--subset-fraction", search.subset_fraction);

    auto* train_cmd = app.add_subcommand("train", "train base learners per (model, fold)");
    add_common(train_cmd, true);
    train_cmd->add_option("--jobs", jobs);

    auto* oof_cmd = app.add_subcommand("oof", "assemble out-of-fold meta-features");
    add_common(oof_cmd, false);

    GbdtParams gbdt;
    auto* stack_cmd = app.add_subcommand("stack", "fit the per-label meta-ensemble");
    add_common(stack_cmd, false);
    stack_cmd->add_option("--rounds", gbdt.rounds);
    stack_cmd->add_option("--depth", gbdt.max_depth);
    stack_cmd->add_option("--eta", gbdt.eta);
    stack_cmd->add_option("--lambda", gbdt.lambda);
    stack_cmd->add_option("--gamma", gbdt.gamma);
    stack_cmd->add_option("--jobs", jobs);

    int top_k = 10;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate on the hold-out part");
    add_common(eval_cmd, false);
    eval_cmd->add_option("--threshold", threshold);
    eval_cmd->add_option("--top-k", top_k, "importance entries per label");

    // eval-external
    std::string ext_model, ext_truth, ext_mapping, ext_out = "external_eval";
    auto* ext_cmd = app.add_subcommand("eval-external", "zero-shot external evaluation");
    ext_cmd->add_option("--model", ext_model, "single base-model JSON (omit to use the meta)");
    ext_cmd->add_option("--run-dir", run_dir, "run dir with meta + base models");
    ext_cmd->add_option("--features", features_path, "external feature CSV")->required();
    ext_cmd->add_option("--truth", ext_truth, "external label CSV")->required();
    ext_cmd->add_option("--mapping", ext_mapping, "'rfmid', a mapping JSON, or empty");
    ext_cmd->add_option("--threshold", threshold);
    ext_cmd->add_option("--out-dir", ext_out);

    // explain
    std::string exp_model, exp_sample, exp_label, exp_method = "saliency", exp_out;
    int exp_steps = 256;
    double exp_baseline = 0.0;
    auto* explain_cmd = app.add_subcommand("explain", "attribution for one sample");
    explain_cmd->add_option("--model", exp_model)->required();
    explain_cmd->add_option("--features", features_path)->required();
    explain_cmd->add_option("--sample", exp_sample)->required();
    explain_cmd->add_option("--label", exp_label)->required();
    explain_cmd->add_option("--method", exp_method)
        ->check(CLI::IsMember({"saliency", "ig", "occlusion"}));
    explain_cmd->add_option("--steps", exp_steps);
    explain_cmd->add_option("--baseline", exp_baseline);
    explain_cmd->add_option("--out", exp_out)->required();

    // report
    std::string report_out;
    auto* report_cmd = app.add_subcommand("report", "consolidated run report");
    report_cmd->add_option("--run-dir", run_dir, "run directory");
    report_cmd->add_option("--out", report_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        auto cfg = load_config(config_path);
        if (seed_set) cfg.seed = seed_flag;
        cfg.validate();

        if (validate->parsed()) return cmd_validate(manifest_path, features_path, config_path);
        if (simulate_cmd->parsed())
            return cmd_simulate(sim_spec, sim_prevalence, sim_seed, out_manifest, out_features);
        if (split_cmd->parsed()) return cmd_split(manifest_path, cfg, run_dir);
        if (tune_cmd->parsed())
            return cmd_tune(manifest_path, features_path, cfg, search, run_dir);
        if (train_cmd->parsed())
            return cmd_train(manifest_path, features_path, cfg, run_dir, jobs);
        if (oof_cmd->parsed()) return cmd_oof(manifest_path, cfg, run_dir);
        if (stack_cmd->parsed()) return cmd_stack(manifest_path, cfg, gbdt, run_dir, jobs);
        if (eval_cmd->parsed()) return cmd_eval(manifest_path, cfg, threshold, top_k, run_dir);
        if (ext_cmd->parsed())
            return cmd_eval_external(ext_model, run_dir, features_path, ext_truth, ext_mapping,
                                     threshold, ext_out);
        if (explain_cmd->parsed())
            return cmd_explain(exp_model, features_path, exp_sample, exp_label, exp_method,
                               exp_steps, exp_baseline, exp_out);
        if (report_cmd->parsed()) return cmd_report(run_dir, report_out);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
