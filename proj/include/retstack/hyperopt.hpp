#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "retstack/rng.hpp"

namespace retstack {

struct SearchSpace {
    double lr_lo = 1e-6, lr_hi = 3e-4;        // log-uniform
    double wd_lo = 1e-6, wd_hi = 1e-2;        // log-uniform
    double dropout_lo = 0.0, dropout_hi = 0.6;  // uniform
};

struct TrialParams {
    double learning_rate;
    double weight_decay;
    double dropout_rate;
};

enum class TrialStatus { completed, pruned };

struct TrialRecord {
    int trial_id = 0;
    TrialParams params{};
    std::vector<double> intermediate;  // per-epoch objective values
    TrialStatus status = TrialStatus::completed;
    double final_value = 0.0;  // meaningful only when completed
};

struct SearchConfig {
    int n_trials = 30;
    int max_epochs = 3;
    double subset_fraction = 0.10;
    int n_startup = 5;  // completed trials before pruning activates
    bool median_include_pruned = false;
    std::uint64_t seed = 0;
};

struct SearchResult {
    TrialRecord best;
    std::vector<TrialRecord> all;
};

TrialParams sample_params(const SearchSpace& space, Rng& rng);

// Objective reports the (maximized) value after a given epoch of a trial.
// Epochs are 1-based; trials run sequentially.
using Objective = std::function<double(const TrialParams& params, int trial_id, int epoch)>;

SearchResult run_search(const SearchConfig& cfg, const SearchSpace& space,
                        const Objective& objective);

// Median over values-at-epoch of prior trials, the prune reference.
double median_at_epoch(const std::vector<TrialRecord>& trials, int epoch, bool include_pruned);

void save_trial_log(const SearchResult& r, const std::string& path);
SearchResult load_trial_log(const std::string& path);

}  // namespace retstack
