#pragma once

#include <span>
#include <string>
#include <vector>

#include "retstack/trainer.hpp"

namespace retstack {

enum class AttributionMethod { saliency, integrated_gradients, occlusion };

struct AttributionMap {
    std::string sample_id;
    std::string label;
    AttributionMethod method = AttributionMethod::saliency;
    std::vector<double> scores;    // one per input feature
    std::vector<double> baseline;  // integrated gradients only
    int steps = 0;                 // integrated gradients only
};

// |d logit_label / d x_j|, dropout off.
AttributionMap saliency(const BaseLearnerModel& model, std::span<const double> x,
                        std::size_t label);

// Midpoint Riemann sum along the straight path from baseline to x.
AttributionMap integrated_gradients(const BaseLearnerModel& model, std::span<const double> x,
                                    std::span<const double> baseline, int steps,
                                    std::size_t label);

// Logit drop when a window of features is replaced by fill values; overlapping
// windows average. Default windows are singletons covering every feature.
AttributionMap occlusion(const BaseLearnerModel& model, std::span<const double> x,
                         std::size_t label, const std::vector<std::vector<std::size_t>>& windows,
                         std::span<const double> fill);

std::vector<std::vector<std::size_t>> singleton_windows(std::size_t n_features);

void save_attribution(const AttributionMap& a, const std::vector<std::string>& feature_names,
                      const std::string& path);

}  // namespace retstack
