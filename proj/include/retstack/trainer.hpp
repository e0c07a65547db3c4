#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retstack/matrix.hpp"
#include "retstack/metrics.hpp"
#include "retstack/schema.hpp"
#include "retstack/stratify.hpp"

namespace retstack {

struct BaseLearnerSpec {
    std::string model_id;
    int hidden_units = 0;  // 0 = linear
    double dropout_rate = 0.0;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    std::uint64_t feature_subset_seed = 0;
    double feature_subset_fraction = 0.8;
};

struct BceResult {
    double loss;
    std::vector<double> grad;
};

// Numerically stable fused form: max(z,0) - z*y + log1p(exp(-|z|)), mean over
// elements; grad = (sigmoid(z) - y) / n.
BceResult bce_with_logits(std::span<const double> logits, std::span<const std::uint8_t> targets);

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
};

// Adam with bias correction; weight decay applied directly to the weights,
// outside the adaptive update path.
void adamw_step(AdamWState& state, std::vector<double>& weights, std::span<const double> grads,
                double lr, double weight_decay, double beta1, double beta2, double eps, int t);

// Parameter layout: linear (hidden==0): W[out x in], b[out];
// MLP: W1[hidden x in], b1[hidden], W2[out x hidden], b2[out].
struct NetShape {
    std::size_t in = 0;
    std::size_t hidden = 0;
    std::size_t out = 0;
    std::size_t n_params() const {
        if (hidden == 0) return out * in + out;
        return hidden * in + hidden + out * hidden + out;
    }
};

void net_forward(const NetShape& shape, std::span<const double> params, std::span<const double> x,
                 std::span<double> logits_out);

// Mean BCE over the batch; fills the parameter gradient. dropout_mask, when
// non-empty, has one entry per (sample, dropped-layer unit): 0 or 1/(1-p).
// The dropped layer is the input for linear nets and the hidden layer otherwise.
double net_loss_grad(const NetShape& shape, std::span<const double> params, const Matrix& batch_x,
                     std::span<const std::uint8_t> batch_y, std::span<const double> dropout_mask,
                     std::vector<double>& grad_out);

struct BaseLearnerModel {
    BaseLearnerSpec spec;
    std::size_t input_dim = 0;
    std::size_t n_labels = 0;
    std::vector<std::size_t> feature_subset;  // sorted column indices
    std::vector<double> params;
    int best_epoch = 0;
    double best_macro_auc = 0.0;

    NetShape shape() const {
        return {feature_subset.size(), static_cast<std::size_t>(spec.hidden_units), n_labels};
    }
    std::vector<double> logits(std::span<const double> x_full) const;
    // d logit_label / d x_full; zero for columns outside the feature subset.
    std::vector<double> input_gradient(std::span<const double> x_full, std::size_t label) const;
};

std::vector<std::size_t> choose_feature_subset(std::size_t n_features, double fraction,
                                               std::uint64_t seed);

BaseLearnerModel train_fold(const BaseLearnerSpec& spec, const Matrix& features,
                            const BinaryLabelMatrix& truth, const SplitView& view, int epochs,
                            int batch_size, std::uint64_t seed,
                            std::vector<double>* epoch_aucs = nullptr);

PredictionMatrix predict(const BaseLearnerModel& model, const Matrix& features,
                         const std::vector<std::string>& sample_ids);

void save_model(const BaseLearnerModel& m, const std::string& path);
BaseLearnerModel load_model(const std::string& path);

// Mean AUC over non-degenerate labels; 0 when every label is degenerate.
double macro_auc_on(const Matrix& probs, const BinaryLabelMatrix& truth,
                    const std::vector<std::size_t>& rows);

}  // namespace retstack
