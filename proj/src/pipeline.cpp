#include "retstack/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <unordered_map>

#include "retstack/csv.hpp"
#include "retstack/errors.hpp"
#include "retstack/metrics.hpp"
#include "retstack/rng.hpp"
#include "retstack/stratify.hpp"

namespace fs = std::filesystem;

namespace retstack {

namespace {

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json config_to_json(const PipelineConfig& c) {
    return {{"k_folds", c.k_folds},       {"n_labels", c.n_labels},
            {"n_models", c.n_models},     {"epochs", c.epochs},
            {"batch_size", c.batch_size}, {"seed", c.seed},
            {"oof_holdout_fraction", c.oof_holdout_fraction}};
}

}  // namespace

void RunLedger::add_artifact(const std::string& name, const std::string& path) {
    artifacts.emplace_back(name, path);
}

const std::string* RunLedger::artifact(const std::string& name) const {
    for (const auto& [n, p] : artifacts)
        if (n == name) return &p;
    return nullptr;
}

void RunLedger::mark_stage(const std::string& stage) { stages.emplace_back(stage, now_iso()); }

std::vector<BaseLearnerSpec> default_roster(int n_models, std::uint64_t seed) {
    static const int hidden_cycle[] = {0, 16, 32};
    std::vector<BaseLearnerSpec> roster;
    for (int i = 0; i < n_models; ++i) {
        BaseLearnerSpec s;
        const int hidden = hidden_cycle[i % 3];
        s.model_id = "base" + std::to_string(i) +
                     (hidden == 0 ? "_lin" : "_mlp" + std::to_string(hidden));
        s.hidden_units = hidden;
        s.dropout_rate = 0.1;
        s.learning_rate = hidden == 0 ? 0.02 : 0.01;
        s.weight_decay = 1e-4;
        s.feature_subset_seed = sub_seed(seed, "subset:" + s.model_id);
        s.feature_subset_fraction = 0.8;
        roster.push_back(std::move(s));
    }
    return roster;
}

Matrix align_features(const Manifest& manifest, const FeatureTable& features) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < features.sample_ids.size(); ++i)
        row_of[features.sample_ids[i]] = i;
    Matrix out(manifest.n_samples(), features.features.cols);
    for (std::size_t i = 0; i < manifest.n_samples(); ++i) {
        auto it = row_of.find(manifest.sample_ids[i]);
        if (it == row_of.end())
            throw ValidationError("no feature row for sample '" + manifest.sample_ids[i] + "'");
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) = features.features(it->second, j);
    }
    return out;
}

MetricsReport masked_macro_report(const PredictionMatrix& pred, const BinaryLabelMatrix& truth,
                                  double threshold, const std::vector<std::string>& label_names,
                                  const std::vector<std::uint8_t>& evaluated,
                                  const std::string& roc_prefix) {
    if (evaluated.size() != label_names.size())
        throw ShapeMismatch("masked_macro_report: mask vs labels");

    std::vector<std::size_t> keep;
    for (std::size_t l = 0; l < evaluated.size(); ++l)
        if (evaluated[l]) keep.push_back(l);

    const std::size_t n = truth.n_samples();
    PredictionMatrix sub_pred;
    sub_pred.model_id = pred.model_id;
    sub_pred.sample_ids = pred.sample_ids;
    sub_pred.probs = Matrix(n, keep.size());
    BinaryLabelMatrix sub_truth;
    sub_truth.sample_ids = truth.sample_ids;
    sub_truth.n_labels = keep.size();
    sub_truth.values.resize(n * keep.size());
    std::vector<std::string> sub_names;
    for (std::size_t k = 0; k < keep.size(); ++k) {
        sub_names.push_back(label_names[keep[k]]);
        for (std::size_t i = 0; i < n; ++i) {
            sub_pred.probs(i, k) = pred.probs(i, keep[k]);
            sub_truth.values[i * keep.size() + k] = truth.at(i, keep[k]);
        }
    }

    MetricsReport r = macro_report(sub_pred, sub_truth, threshold, sub_names);
    for (std::size_t l = 0; l < evaluated.size(); ++l)
        if (!evaluated[l]) r.skipped_labels.push_back(label_names[l]);

    if (!roc_prefix.empty()) {
        std::vector<double> scores(n);
        std::vector<std::uint8_t> labels(n);
        for (std::size_t k = 0; k < keep.size(); ++k) {
            if (r.per_class[k].degenerate) continue;
            for (std::size_t i = 0; i < n; ++i) {
                scores[i] = sub_pred.probs(i, k);
                labels[i] = sub_truth.at(i, k);
            }
            save_roc_csv(roc_curve(scores, labels), roc_prefix + sub_names[k] + ".csv");
        }
    }
    return r;
}

SearchResult tune_model(BaseLearnerSpec& spec, const Matrix& feats,
                        const BinaryLabelMatrix& truth, const SearchConfig& search,
                        int batch_size, std::uint64_t root_seed) {
    const int subset_k =
        std::max(2, static_cast<int>(std::lround(1.0 / search.subset_fraction)));
    FoldAssignment sub_fa = stratified_kfold(
        truth, subset_k, sub_seed(root_seed, "tune_subset:" + spec.model_id));
    std::vector<std::size_t> subset = sub_fa.fold_indices(0);

    BinaryLabelMatrix sub_truth;
    sub_truth.n_labels = truth.n_labels;
    for (std::size_t i : subset) {
        sub_truth.sample_ids.push_back(truth.sample_ids[i]);
        for (std::size_t l = 0; l < truth.n_labels; ++l)
            sub_truth.values.push_back(truth.at(i, l));
    }
    FoldAssignment inner =
        stratified_kfold(sub_truth, 5, sub_seed(root_seed, "tune_inner:" + spec.model_id));
    SplitView view;
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (inner.fold_of[i] == 0)
            view.valid_idx.push_back(subset[i]);
        else
            view.train_idx.push_back(subset[i]);
    }

    const std::uint64_t tune_seed = sub_seed(root_seed, "tune:" + spec.model_id);
    std::unordered_map<int, std::vector<double>> curves;
    auto objective = [&](const TrialParams& p, int trial_id, int epoch) {
        auto it = curves.find(trial_id);
        if (it == curves.end()) {
            BaseLearnerSpec trial_spec = spec;
            trial_spec.learning_rate = p.learning_rate;
            trial_spec.weight_decay = p.weight_decay;
            trial_spec.dropout_rate = p.dropout_rate;
            std::vector<double> curve;
            train_fold(trial_spec, feats, truth, view, search.max_epochs, batch_size,
                       tune_seed ^ static_cast<std::uint64_t>(trial_id), &curve);
            it = curves.emplace(trial_id, std::move(curve)).first;
        }
        return it->second[epoch - 1];
    };

    SearchConfig sc = search;
    sc.seed = tune_seed;
    SearchResult result = run_search(sc, SearchSpace{}, objective);
    spec.learning_rate = result.best.params.learning_rate;
    spec.weight_decay = result.best.params.weight_decay;
    spec.dropout_rate = result.best.params.dropout_rate;
    return result;
}

RunLedger run_pipeline(const PipelineOptions& opts, const Manifest& manifest,
                       const FeatureTable& features) {
    opts.config.validate();
    const auto& cfg = opts.config;
    if (static_cast<int>(manifest.schema.size()) != cfg.n_labels)
        throw ValidationError("config n_labels does not match manifest schema");

    fs::create_directories(opts.run_dir);
    auto path_of = [&](const std::string& name) { return opts.run_dir + "/" + name; };

    RunLedger ledger;
    ledger.run_id = "run_" + std::to_string(cfg.seed);
    ledger.run_dir = opts.run_dir;
    ledger.root_seed = cfg.seed;
    ledger.mark_stage("start");

    cfg.save_json(path_of("config.json"));
    ledger.add_artifact("config", path_of("config.json"));

    std::vector<std::string> label_names;
    for (const auto& l : manifest.schema.labels) label_names.push_back(l.id);

    const BinaryLabelMatrix truth = binarize_manifest(manifest);
    const Matrix feats = align_features(manifest, features);

    // split
    FoldAssignment fa = stratified_kfold(truth, cfg.k_folds, sub_seed(cfg.seed, "split"));
    save_folds(fa, path_of("folds.csv"));
    ledger.add_artifact("folds", path_of("folds.csv"));
    ledger.mark_stage("split");

    std::vector<BaseLearnerSpec> roster = default_roster(cfg.n_models, cfg.seed);

    // tune (optional): per-model search on a stratified subset
    if (opts.tune) {
        for (auto& spec : roster) {
            SearchResult result =
                tune_model(spec, feats, truth, opts.search, cfg.batch_size, cfg.seed);
            const std::string log_path = path_of("trials_" + spec.model_id + ".json");
            save_trial_log(result, log_path);
            ledger.add_artifact("trials:" + spec.model_id, log_path);
        }
        ledger.mark_stage("tune");
    }

    // train every (model, fold) pair; each job is independently seeded
    struct Job {
        std::size_t model;
        int fold;
    };
    std::vector<Job> jobs_list;
    for (std::size_t m = 0; m < roster.size(); ++m)
        for (int f = 0; f < cfg.k_folds; ++f) jobs_list.push_back({m, f});

    std::map<std::pair<std::string, int>, PredictionMatrix> predictions;
    std::vector<std::vector<double>> fold_aucs(roster.size(),
                                               std::vector<double>(cfg.k_folds, 0.0));
    std::mutex mu;
    std::atomic<std::size_t> next_job{0};
    int n_workers = opts.jobs > 0 ? opts.jobs
                                  : static_cast<int>(std::thread::hardware_concurrency());
    n_workers = std::max(1, std::min<int>(n_workers, static_cast<int>(jobs_list.size())));

    auto worker = [&]() {
        for (;;) {
            const std::size_t j = next_job.fetch_add(1);
            if (j >= jobs_list.size()) return;
            const auto [m, f] = jobs_list[j];
            const auto& spec = roster[m];
            SplitView view = split_views(fa, f);
            BaseLearnerModel model = train_fold(
                spec, feats, truth, view, cfg.epochs, cfg.batch_size,
                sub_seed(cfg.seed, "train:" + spec.model_id + ":" + std::to_string(f)));

            Matrix valid_x(view.valid_idx.size(), feats.cols);
            std::vector<std::string> valid_ids;
            for (std::size_t r = 0; r < view.valid_idx.size(); ++r) {
                valid_ids.push_back(fa.sample_ids[view.valid_idx[r]]);
                for (std::size_t c = 0; c < feats.cols; ++c)
                    valid_x(r, c) = feats(view.valid_idx[r], c);
            }
            PredictionMatrix pm = predict(model, valid_x, valid_ids);

            const std::string model_path =
                path_of("model_" + spec.model_id + "_fold" + std::to_string(f) + ".json");
            const std::string pred_path =
                path_of("pred_" + spec.model_id + "_fold" + std::to_string(f) + ".csv");
            save_model(model, model_path);
            save_predictions(pm, label_names, pred_path);

            std::lock_guard<std::mutex> lock(mu);
            fold_aucs[m][f] = model.best_macro_auc;
            predictions[{spec.model_id, f}] = std::move(pm);
            ledger.add_artifact("model:" + spec.model_id + ":" + std::to_string(f), model_path);
            ledger.add_artifact("pred:" + spec.model_id + ":" + std::to_string(f), pred_path);
        }
    };
    {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    // Artifact order must not depend on thread scheduling.
    std::sort(ledger.artifacts.begin(), ledger.artifacts.end());
    ledger.mark_stage("train");

    // models summary (hyperparameters + per-fold best AUCs)
    std::vector<std::string> model_ids;
    {
        nlohmann::json summary;
        summary["model_ids"] = nlohmann::json::array();
        for (std::size_t m = 0; m < roster.size(); ++m) {
            const auto& spec = roster[m];
            model_ids.push_back(spec.model_id);
            summary["model_ids"].push_back(spec.model_id);
            double mean = 0.0;
            for (double a : fold_aucs[m]) mean += a;
            mean /= cfg.k_folds;
            double var = 0.0;
            for (double a : fold_aucs[m]) var += (a - mean) * (a - mean);
            const double sd = cfg.k_folds > 1 ? std::sqrt(var / (cfg.k_folds - 1)) : 0.0;
            summary["models"][spec.model_id] = {
                {"hidden_units", spec.hidden_units},
                {"dropout_rate", spec.dropout_rate},
                {"learning_rate", spec.learning_rate},
                {"weight_decay", spec.weight_decay},
                {"fold_auc", fold_aucs[m]},
                {"mean_auc", mean},
                {"sd_auc", sd}};
        }
        std::ofstream out(path_of("models_summary.json"));
        out << summary.dump(2) << "\n";
        ledger.add_artifact("models_summary", path_of("models_summary.json"));
    }

    // assemble OOF
    OofMatrix oof = assemble_oof(model_ids, predictions, fa, label_names);
    save_oof(oof, path_of("oof.csv"));
    ledger.add_artifact("oof", path_of("oof.csv"));
    ledger.mark_stage("oof");

    // per-model OOF reports
    for (std::size_t m = 0; m < model_ids.size(); ++m) {
        PredictionMatrix pm;
        pm.model_id = model_ids[m];
        pm.sample_ids = oof.sample_ids;
        pm.probs = Matrix(oof.features.rows, label_names.size());
        for (std::size_t i = 0; i < oof.features.rows; ++i)
            for (std::size_t l = 0; l < label_names.size(); ++l)
                pm.probs(i, l) = oof.features(i, m * label_names.size() + l);
        MetricsReport r = macro_report(pm, truth, opts.threshold, label_names);
        const std::string p = path_of("report_" + model_ids[m] + ".json");
        save_report_json(r, p);
        ledger.add_artifact("report:" + model_ids[m], p);
    }

    // hold-out split and meta fit
    HoldoutSplit hs =
        holdout_split(oof, truth, cfg.oof_holdout_fraction, sub_seed(cfg.seed, "holdout"));
    {
        std::ofstream out(path_of("holdout.csv"));
        out << "sample_id,part\n";
        std::vector<const char*> part(oof.sample_ids.size(), "fit");
        for (std::size_t i : hs.eval_idx) part[i] = "eval";
        for (std::size_t i = 0; i < oof.sample_ids.size(); ++i)
            out << oof.sample_ids[i] << "," << part[i] << "\n";
        ledger.add_artifact("holdout", path_of("holdout.csv"));
    }

    GbdtMetaLearner meta = fit_meta(oof.features, truth, hs.fit_idx, label_names,
                                    oof.feature_names, opts.gbdt, opts.jobs);
    save_meta(meta, path_of("meta_model.json"));
    ledger.add_artifact("meta_model", path_of("meta_model.json"));
    ledger.mark_stage("stack");

    // evaluate meta on the hold-out part; singles on the same samples
    const std::size_t n_eval = hs.eval_idx.size();
    Matrix eval_x(n_eval, oof.features.cols);
    std::vector<std::string> eval_ids;
    BinaryLabelMatrix eval_truth;
    eval_truth.n_labels = truth.n_labels;
    for (std::size_t r = 0; r < n_eval; ++r) {
        const std::size_t i = hs.eval_idx[r];
        eval_ids.push_back(oof.sample_ids[i]);
        eval_truth.sample_ids.push_back(oof.sample_ids[i]);
        for (std::size_t c = 0; c < oof.features.cols; ++c) eval_x(r, c) = oof.features(i, c);
        for (std::size_t l = 0; l < truth.n_labels; ++l)
            eval_truth.values.push_back(truth.at(i, l));
    }
    PredictionMatrix meta_pred = predict_meta(meta, eval_x, eval_ids);
    MetricsReport meta_report = macro_report(meta_pred, eval_truth, opts.threshold, label_names);
    save_report_json(meta_report, path_of("report_meta.json"));
    ledger.add_artifact("report:meta", path_of("report_meta.json"));

    {
        nlohmann::json cmp;
        cmp["holdout_fraction"] = cfg.oof_holdout_fraction;
        cmp["meta_macro_auc"] = meta_report.macro_auc;
        std::vector<std::size_t> all_eval_rows(n_eval);
        for (std::size_t r = 0; r < n_eval; ++r) all_eval_rows[r] = r;
        for (std::size_t m = 0; m < model_ids.size(); ++m) {
            Matrix probs(n_eval, truth.n_labels);
            for (std::size_t r = 0; r < n_eval; ++r)
                for (std::size_t l = 0; l < truth.n_labels; ++l)
                    probs(r, l) = eval_x(r, m * truth.n_labels + l);
            cmp["single_macro_auc"][model_ids[m]] =
                macro_auc_on(probs, eval_truth, all_eval_rows);
        }
        std::ofstream out(path_of("eval_summary.json"));
        out << cmp.dump(2) << "\n";
        ledger.add_artifact("eval_summary", path_of("eval_summary.json"));
    }

    // per-label ROC (meta, hold-out) and gain importance exports
    {
        std::vector<double> scores(n_eval);
        std::vector<std::uint8_t> ys(n_eval);
        for (std::size_t l = 0; l < label_names.size(); ++l) {
            if (meta_report.per_class[l].degenerate) continue;
            for (std::size_t r = 0; r < n_eval; ++r) {
                scores[r] = meta_pred.probs(r, l);
                ys[r] = eval_truth.at(r, l);
            }
            const std::string p = path_of("roc_" + label_names[l] + ".csv");
            save_roc_csv(roc_curve(scores, ys), p);
            ledger.add_artifact("roc:" + label_names[l], p);
        }
        for (std::size_t l = 0; l < label_names.size(); ++l) {
            if (meta.degenerate[l]) continue;
            auto ranked = feature_importance(meta, l);
            const std::string p = path_of("importance_" + label_names[l] + ".csv");
            std::ofstream out(p);
            out.precision(17);
            out << "feature,gain_share\n";
            for (const auto& [name, share] : ranked) out << name << "," << share << "\n";
            ledger.add_artifact("importance:" + label_names[l], p);
        }
    }
    ledger.mark_stage("eval");

    write_consolidated_report(ledger, path_of("report.json"));
    ledger.add_artifact("report", path_of("report.json"));
    ledger.mark_stage("done");
    save_ledger(ledger, path_of("ledger.json"));
    return ledger;
}

void save_ledger(const RunLedger& ledger, const std::string& path) {
    nlohmann::json j;
    j["run_id"] = ledger.run_id;
    j["run_dir"] = ledger.run_dir;
    j["root_seed"] = ledger.root_seed;
    j["artifacts"] = nlohmann::json::array();
    for (const auto& [n, p] : ledger.artifacts) j["artifacts"].push_back({{"name", n}, {"path", p}});
    j["stages"] = nlohmann::json::array();
    for (const auto& [s, t] : ledger.stages) j["stages"].push_back({{"stage", s}, {"time", t}});
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write ledger: " + path);
    out << j.dump(2) << "\n";
}

RunLedger load_ledger(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open ledger: " + path);
    nlohmann::json j;
    in >> j;
    RunLedger ledger;
    ledger.run_id = j.at("run_id");
    ledger.run_dir = j.at("run_dir");
    ledger.root_seed = j.at("root_seed");
    for (const auto& a : j.at("artifacts"))
        ledger.artifacts.emplace_back(a.at("name"), a.at("path"));
    for (const auto& s : j.at("stages")) ledger.stages.emplace_back(s.at("stage"), s.at("time"));
    return ledger;
}

const nlohmann::json& report_schema() {
    static const nlohmann::json schema = nlohmann::json::parse(R"({
      "type": "object",
      "required": ["run_id", "config", "hyperparameters", "metrics", "eval_comparison", "importance"],
      "properties": {
        "run_id": {"type": "string"},
        "config": {
          "type": "object",
          "required": ["k_folds", "n_labels", "n_models", "epochs", "batch_size", "seed",
                       "oof_holdout_fraction"]
        },
        "hyperparameters": {"type": "object"},
        "metrics": {"type": "object"},
        "eval_comparison": {
          "type": "object",
          "required": ["meta_macro_auc", "single_macro_auc", "holdout_fraction"],
          "properties": {
            "meta_macro_auc": {"type": "number"},
            "single_macro_auc": {"type": "object"},
            "holdout_fraction": {"type": "number"}
          }
        },
        "importance": {"type": "object"}
      }
    })");
    return schema;
}

bool validate_json_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                          std::string* error) {
    if (schema.contains("type")) {
        const std::string type = schema["type"];
        const bool ok = (type == "object" && doc.is_object()) ||
                        (type == "array" && doc.is_array()) ||
                        (type == "string" && doc.is_string()) ||
                        (type == "number" && doc.is_number()) ||
                        (type == "integer" && doc.is_number_integer()) ||
                        (type == "boolean" && doc.is_boolean());
        if (!ok) {
            if (error) *error = "expected type " + type;
            return false;
        }
    }
    if (schema.contains("required")) {
        for (const auto& key : schema["required"]) {
            if (!doc.contains(key.get<std::string>())) {
                if (error) *error = "missing required key: " + key.get<std::string>();
                return false;
            }
        }
    }
    if (schema.contains("properties") && doc.is_object()) {
        for (const auto& [key, sub] : schema["properties"].items()) {
            if (doc.contains(key) && !validate_json_schema(doc[key], sub, error)) {
                if (error) *error = key + ": " + *error;
                return false;
            }
        }
    }
    if (schema.contains("items") && doc.is_array()) {
        for (const auto& item : doc)
            if (!validate_json_schema(item, schema["items"], error)) return false;
    }
    return true;
}

void write_consolidated_report(const RunLedger& ledger, const std::string& path) {
    auto read_json = [&](const std::string& name) {
        const std::string* p = ledger.artifact(name);
        if (!p) throw IncompleteRun("missing artifact: " + name);
        std::ifstream in(*p);
        if (!in) throw IncompleteRun("artifact file missing: " + *p);
        nlohmann::json j;
        in >> j;
        return j;
    };

    nlohmann::json report;
    report["run_id"] = ledger.run_id;
    report["config"] = read_json("config");

    const nlohmann::json summary = read_json("models_summary");
    report["hyperparameters"] = nlohmann::json::object();
    for (const auto& id : summary.at("model_ids"))
        report["hyperparameters"][id.get<std::string>()] =
            summary.at("models").at(id.get<std::string>());

    report["metrics"] = nlohmann::json::object();
    for (const auto& id : summary.at("model_ids"))
        report["metrics"][id.get<std::string>()] = read_json("report:" + id.get<std::string>());
    report["metrics"]["meta_ensemble"] = read_json("report:meta");

    report["eval_comparison"] = read_json("eval_summary");

    // Top-10 importance per label, read back from the per-label exports.
    report["importance"] = nlohmann::json::object();
    for (const auto& [name, p] : ledger.artifacts) {
        if (name.rfind("importance:", 0) != 0) continue;
        const std::string label = name.substr(std::string("importance:").size());
        auto table = csv::read_file(p);
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t r = 0; r < table.rows.size() && r < 10; ++r)
            rows.push_back({{"feature", table.rows[r][0]},
                            {"gain_share", std::stod(table.rows[r][1])}});
        report["importance"][label] = std::move(rows);
    }

    std::string err;
    if (!validate_json_schema(report, report_schema(), &err))
        throw IncompleteRun("report does not match schema: " + err);

    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write report: " + path);
    out << report.dump(2) << "\n";

    std::ofstream sout(fs::path(path).parent_path() / "report.schema.json");
    sout << report_schema().dump(2) << "\n";
}

}  // namespace retstack
