#include "retstack/explain.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "retstack/errors.hpp"

namespace retstack {

AttributionMap saliency(const BaseLearnerModel& model, std::span<const double> x,
                        std::size_t label) {
    AttributionMap a;
    a.method = AttributionMethod::saliency;
    a.scores = model.input_gradient(x, label);
    for (auto& s : a.scores) s = std::abs(s);
    return a;
}

AttributionMap integrated_gradients(const BaseLearnerModel& model, std::span<const double> x,
                                    std::span<const double> baseline, int steps,
                                    std::size_t label) {
    if (baseline.size() != x.size())
        throw DimensionMismatch("integrated_gradients: baseline vs input size");
    if (steps < 1) throw ValidationError("integrated_gradients: steps must be >= 1");

    const std::size_t d = x.size();
    AttributionMap a;
    a.method = AttributionMethod::integrated_gradients;
    a.baseline.assign(baseline.begin(), baseline.end());
    a.steps = steps;
    a.scores.assign(d, 0.0);

    std::vector<double> point(d);
    for (int k = 1; k <= steps; ++k) {
        const double alpha = (k - 0.5) / steps;
        for (std::size_t j = 0; j < d; ++j) point[j] = baseline[j] + alpha * (x[j] - baseline[j]);
        auto g = model.input_gradient(point, label);
        for (std::size_t j = 0; j < d; ++j) a.scores[j] += g[j];
    }
    for (std::size_t j = 0; j < d; ++j)
        a.scores[j] = (x[j] - baseline[j]) * a.scores[j] / steps;
    return a;
}

std::vector<std::vector<std::size_t>> singleton_windows(std::size_t n_features) {
    std::vector<std::vector<std::size_t>> w(n_features);
    for (std::size_t j = 0; j < n_features; ++j) w[j] = {j};
    return w;
}

AttributionMap occlusion(const BaseLearnerModel& model, std::span<const double> x,
                         std::size_t label, const std::vector<std::vector<std::size_t>>& windows,
                         std::span<const double> fill) {
    if (fill.size() != x.size()) throw DimensionMismatch("occlusion: fill vs input size");
    if (windows.empty()) throw EmptyWindow("no occlusion windows");

    const std::size_t d = x.size();
    std::vector<int> coverage(d, 0);
    for (const auto& w : windows) {
        if (w.empty()) throw EmptyWindow("empty occlusion window");
        for (auto j : w) {
            if (j >= d) throw DimensionMismatch("occlusion window index out of range");
            ++coverage[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        if (coverage[j] == 0) throw EmptyWindow("occlusion windows do not cover all features");

    const double base_logit = model.logits(x)[label];
    AttributionMap a;
    a.method = AttributionMethod::occlusion;
    a.scores.assign(d, 0.0);

    std::vector<double> perturbed(x.begin(), x.end());
    for (const auto& w : windows) {
        for (auto j : w) perturbed[j] = fill[j];
        const double drop = base_logit - model.logits(perturbed)[label];
        for (auto j : w) {
            a.scores[j] += drop;
            perturbed[j] = x[j];
        }
    }
    for (std::size_t j = 0; j < d; ++j) a.scores[j] /= coverage[j];
    return a;
}

void save_attribution(const AttributionMap& a, const std::vector<std::string>& feature_names,
                      const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write attribution: " + path);
    const char* method = a.method == AttributionMethod::saliency ? "saliency"
                         : a.method == AttributionMethod::integrated_gradients
                             ? "integrated_gradients"
                             : "occlusion";
    nlohmann::json header{{"method", method}, {"label", a.label}, {"sample_id", a.sample_id}};
    if (a.method == AttributionMethod::integrated_gradients) {
        header["baseline"] = a.baseline;
        header["steps"] = a.steps;
    }
    out << "# " << header.dump() << "\n";
    out.precision(17);
    out << "feature_index,feature_name,score\n";
    for (std::size_t j = 0; j < a.scores.size(); ++j) {
        out << j << "," << (j < feature_names.size() ? feature_names[j] : "") << ","
            << a.scores[j] << "\n";
    }
}

}  // namespace retstack
