#include "retstack/simulate.hpp"

#include <cmath>

#include "retstack/errors.hpp"
#include "retstack/rng.hpp"

namespace retstack {

void SyntheticBenchmarkSpec::validate() const {
    if (n_samples < 1) throw InvalidSpec("n_samples must be >= 1");
    if (n_labels < 1) throw InvalidSpec("n_labels must be >= 1");
    if (n_features < n_labels) throw InvalidSpec("n_features must be >= n_labels");
    if (n_models < 2) throw InvalidSpec("n_models must be >= 2");
    if (!(cooccurrence >= 0.0 && cooccurrence <= 1.0))
        throw InvalidSpec("cooccurrence must be in [0, 1]");
    if (!prevalence.empty() && static_cast<int>(prevalence.size()) != n_labels)
        throw InvalidSpec("prevalence vector length must equal n_labels");
    for (double p : prevalence)
        if (!(p > 0.0 && p < 1.0)) throw InvalidSpec("prevalences must be in (0, 1)");
}

double normal_quantile(double p) {
    // Acklam's approximation, |relative error| < 1.15e-9.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    if (!(p > 0.0 && p < 1.0)) throw InvalidSpec("normal_quantile: p must be in (0, 1)");
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

SimulatedData simulate(const SyntheticBenchmarkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);

    const int n = spec.n_samples;
    const int L = spec.n_labels;
    const int d = spec.n_features;
    const int n_shared = 4;

    LabelSchema schema;
    if (L == 11) {
        schema = LabelSchema::canonical();
    } else {
        for (int l = 0; l < L; ++l)
            schema.labels.push_back({"l" + std::to_string(l), LabelKind::binary, 1});
    }

    std::vector<double> prev = spec.prevalence;
    if (prev.empty()) prev.assign(L, 0.2);

    // Random unit loading per label onto the shared factors.
    std::vector<std::vector<double>> loading(L, std::vector<double>(n_shared));
    for (int l = 0; l < L; ++l) {
        double norm = 0.0;
        for (int f = 0; f < n_shared; ++f) {
            loading[l][f] = rng.normal();
            norm += loading[l][f] * loading[l][f];
        }
        norm = std::sqrt(norm);
        for (int f = 0; f < n_shared; ++f) loading[l][f] /= norm;
    }

    const double w_shared = std::sqrt(spec.cooccurrence);
    const double w_own = std::sqrt(1.0 - spec.cooccurrence);
    const int feats_per_label = d / L;  // >= 1 by validation

    SimulatedData out;
    out.manifest.schema = schema;
    out.features.features = Matrix(n, d);
    for (int j = 0; j < d; ++j) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "f%03d", j);
        out.features.feature_names.push_back(buf);
    }

    std::vector<double> shared(n_shared), score(L);
    for (int i = 0; i < n; ++i) {
        const std::string id = "s" + std::to_string(i);
        out.manifest.sample_ids.push_back(id);
        out.features.sample_ids.push_back(id);

        for (int f = 0; f < n_shared; ++f) shared[f] = rng.normal();
        for (int l = 0; l < L; ++l) {
            double s = 0.0;
            for (int f = 0; f < n_shared; ++f) s += loading[l][f] * shared[f];
            score[l] = w_shared * s + w_own * rng.normal();
        }

        for (int l = 0; l < L; ++l) {
            const bool positive = score[l] > normal_quantile(1.0 - prev[l]);
            int value = positive ? 1 : 0;
            if (schema.labels[l].kind == LabelKind::graded && positive)
                value = 1 + static_cast<int>(rng.below(schema.labels[l].max_grade));
            out.manifest.values.push_back(value);
        }

        for (int j = 0; j < d; ++j) {
            if (j < feats_per_label * L) {
                const int l = j % L;
                out.features.features(i, j) = score[l] + spec.feature_noise * rng.normal();
            } else {
                out.features.features(i, j) = rng.normal();
            }
        }
    }
    return out;
}

}  // namespace retstack
