#include "retstack/hyperopt.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>

#include <json.hpp>

#include "retstack/errors.hpp"

namespace retstack {

TrialParams sample_params(const SearchSpace& space, Rng& rng) {
    TrialParams p;
    p.learning_rate = rng.log_uniform(space.lr_lo, space.lr_hi);
    p.weight_decay = rng.log_uniform(space.wd_lo, space.wd_hi);
    p.dropout_rate = rng.uniform(space.dropout_lo, space.dropout_hi);
    return p;
}

double median_at_epoch(const std::vector<TrialRecord>& trials, int epoch, bool include_pruned) {
    std::vector<double> values;
    for (const auto& t : trials) {
        if (t.status != TrialStatus::completed && !include_pruned) continue;
        if (static_cast<int>(t.intermediate.size()) >= epoch)
            values.push_back(t.intermediate[epoch - 1]);
    }
    if (values.empty()) throw PipelineError("median_at_epoch: no reference values");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

SearchResult run_search(const SearchConfig& cfg, const SearchSpace& space,
                        const Objective& objective) {
    if (cfg.n_trials < 1) throw ValidationError("n_trials must be >= 1");
    if (!(cfg.subset_fraction > 0.0 && cfg.subset_fraction <= 1.0))
        throw ValidationError("subset_fraction must be in (0, 1]");

    Rng rng(cfg.seed);
    SearchResult result;
    int n_completed = 0;

    for (int trial = 0; trial < cfg.n_trials; ++trial) {
        TrialRecord rec;
        rec.trial_id = trial;
        rec.params = sample_params(space, rng);
        rec.status = TrialStatus::completed;

        for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
            const double value = objective(rec.params, trial, epoch);
            rec.intermediate.push_back(value);
            if (epoch < cfg.max_epochs && n_completed >= cfg.n_startup) {
                const double med =
                    median_at_epoch(result.all, epoch, cfg.median_include_pruned);
                if (value < med) {
                    rec.status = TrialStatus::pruned;
                    break;
                }
            }
        }
        if (rec.status == TrialStatus::completed) {
            rec.final_value = rec.intermediate.back();
            ++n_completed;
        }
        result.all.push_back(std::move(rec));
    }

    // Pruning never fires before n_startup completions, so at least one
    // trial always completes.
    assert(n_completed > 0);
    if (n_completed == 0) throw AllTrialsPruned("no completed trials");

    const TrialRecord* best = nullptr;
    for (const auto& t : result.all) {
        if (t.status != TrialStatus::completed) continue;
        if (!best || t.final_value > best->final_value) best = &t;
    }
    result.best = *best;
    return result;
}

namespace {

nlohmann::json trial_to_json(const TrialRecord& t) {
    return {{"trial_id", t.trial_id},
            {"params",
             {{"learning_rate", t.params.learning_rate},
              {"weight_decay", t.params.weight_decay},
              {"dropout_rate", t.params.dropout_rate}}},
            {"intermediate", t.intermediate},
            {"status", t.status == TrialStatus::completed ? "completed" : "pruned"},
            {"final_value", t.final_value}};
}

TrialRecord trial_from_json(const nlohmann::json& j) {
    TrialRecord t;
    t.trial_id = j.at("trial_id");
    t.params.learning_rate = j.at("params").at("learning_rate");
    t.params.weight_decay = j.at("params").at("weight_decay");
    t.params.dropout_rate = j.at("params").at("dropout_rate");
    t.intermediate = j.at("intermediate").get<std::vector<double>>();
    t.status = j.at("status") == "completed" ? TrialStatus::completed : TrialStatus::pruned;
    t.final_value = j.at("final_value");
    return t;
}

}  // namespace

void save_trial_log(const SearchResult& r, const std::string& path) {
    nlohmann::json j;
    j["best"] = trial_to_json(r.best);
    j["trials"] = nlohmann::json::array();
    for (const auto& t : r.all) j["trials"].push_back(trial_to_json(t));
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write trial log: " + path);
    out << j.dump(2) << "\n";
}

SearchResult load_trial_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open trial log: " + path);
    nlohmann::json j;
    in >> j;
    SearchResult r;
    r.best = trial_from_json(j.at("best"));
    for (const auto& t : j.at("trials")) r.all.push_back(trial_from_json(t));
    return r;
}

}  // namespace retstack
