#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retstack/schema.hpp"

namespace retstack {

// Latent-factor generative process for the bundled desk-scale benchmark:
// per-label scores mix shared factors (co-occurrence) with independent noise,
// features are per-label projections plus distractor columns.
struct SyntheticBenchmarkSpec {
    int n_samples = 1000;
    int n_labels = 11;
    int n_features = 44;
    std::vector<double> prevalence;  // empty = 0.2 everywhere
    double cooccurrence = 0.3;       // in [0, 1]
    double feature_noise = 0.5;
    int n_models = 6;

    void validate() const;
};

struct SimulatedData {
    Manifest manifest;
    FeatureTable features;
};

SimulatedData simulate(const SyntheticBenchmarkSpec& spec, std::uint64_t seed);

// Inverse standard normal CDF (Acklam's rational approximation).
double normal_quantile(double p);

}  // namespace retstack
