#include "retstack/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "retstack/errors.hpp"
#include "retstack/metrics.hpp"
#include "retstack/rng.hpp"

namespace retstack {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

BceResult bce_with_logits(std::span<const double> logits, std::span<const std::uint8_t> targets) {
    if (logits.size() != targets.size())
        throw LengthMismatch("bce_with_logits: logits vs targets");
    const std::size_t n = logits.size();
    BceResult r;
    r.loss = 0.0;
    r.grad.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits[i];
        const double y = targets[i];
        r.loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        r.grad[i] = (sigmoid(z) - y) / static_cast<double>(n);
    }
    r.loss /= static_cast<double>(n);
    return r;
}

void adamw_step(AdamWState& state, std::vector<double>& weights, std::span<const double> grads,
                double lr, double weight_decay, double beta1, double beta2, double eps, int t) {
    const std::size_t n = weights.size();
    if (grads.size() != n) throw LengthMismatch("adamw_step: weights vs grads");
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        weights[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        weights[i] -= lr * weight_decay * weights[i];
    }
}

void net_forward(const NetShape& shape, std::span<const double> params, std::span<const double> x,
                 std::span<double> logits_out) {
    if (shape.hidden == 0) {
        const double* w = params.data();
        const double* b = params.data() + shape.out * shape.in;
        for (std::size_t o = 0; o < shape.out; ++o) {
            double z = b[o];
            for (std::size_t i = 0; i < shape.in; ++i) z += w[o * shape.in + i] * x[i];
            logits_out[o] = z;
        }
        return;
    }
    const double* w1 = params.data();
    const double* b1 = w1 + shape.hidden * shape.in;
    const double* w2 = b1 + shape.hidden;
    const double* b2 = w2 + shape.out * shape.hidden;
    std::vector<double> h(shape.hidden);
    for (std::size_t u = 0; u < shape.hidden; ++u) {
        double z = b1[u];
        for (std::size_t i = 0; i < shape.in; ++i) z += w1[u * shape.in + i] * x[i];
        h[u] = z > 0.0 ? z : 0.0;
    }
    for (std::size_t o = 0; o < shape.out; ++o) {
        double z = b2[o];
        for (std::size_t u = 0; u < shape.hidden; ++u) z += w2[o * shape.hidden + u] * h[u];
        logits_out[o] = z;
    }
}

double net_loss_grad(const NetShape& shape, std::span<const double> params, const Matrix& batch_x,
                     std::span<const std::uint8_t> batch_y, std::span<const double> dropout_mask,
                     std::vector<double>& grad_out) {
    const std::size_t batch = batch_x.rows;
    const std::size_t n_elems = batch * shape.out;
    grad_out.assign(shape.n_params(), 0.0);
    double loss = 0.0;

    const std::size_t drop_width = shape.hidden == 0 ? shape.in : shape.hidden;
    const bool dropping = !dropout_mask.empty();

    if (shape.hidden == 0) {
        const double* w = params.data();
        double* gw = grad_out.data();
        double* gb = grad_out.data() + shape.out * shape.in;
        std::vector<double> xd(shape.in);
        for (std::size_t s = 0; s < batch; ++s) {
            auto x = batch_x.row(s);
            for (std::size_t i = 0; i < shape.in; ++i)
                xd[i] = dropping ? x[i] * dropout_mask[s * drop_width + i] : x[i];
            for (std::size_t o = 0; o < shape.out; ++o) {
                double z = params[shape.out * shape.in + o];
                for (std::size_t i = 0; i < shape.in; ++i) z += w[o * shape.in + i] * xd[i];
                const double y = batch_y[s * shape.out + o];
                loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
                const double dz = (sigmoid(z) - y) / static_cast<double>(n_elems);
                for (std::size_t i = 0; i < shape.in; ++i) gw[o * shape.in + i] += dz * xd[i];
                gb[o] += dz;
            }
        }
        return loss / static_cast<double>(n_elems);
    }

    const double* w1 = params.data();
    const double* b1 = w1 + shape.hidden * shape.in;
    const double* w2 = b1 + shape.hidden;
    const double* b2 = w2 + shape.out * shape.hidden;
    double* gw1 = grad_out.data();
    double* gb1 = gw1 + shape.hidden * shape.in;
    double* gw2 = gb1 + shape.hidden;
    double* gb2 = gw2 + shape.out * shape.hidden;

    std::vector<double> z1(shape.hidden), hd(shape.hidden), dh(shape.hidden);
    for (std::size_t s = 0; s < batch; ++s) {
        auto x = batch_x.row(s);
        for (std::size_t u = 0; u < shape.hidden; ++u) {
            double z = b1[u];
            for (std::size_t i = 0; i < shape.in; ++i) z += w1[u * shape.in + i] * x[i];
            z1[u] = z;
            const double a = z > 0.0 ? z : 0.0;
            hd[u] = dropping ? a * dropout_mask[s * drop_width + u] : a;
        }
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t o = 0; o < shape.out; ++o) {
            double z = b2[o];
            for (std::size_t u = 0; u < shape.hidden; ++u) z += w2[o * shape.hidden + u] * hd[u];
            const double y = batch_y[s * shape.out + o];
            loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            const double dz = (sigmoid(z) - y) / static_cast<double>(n_elems);
            for (std::size_t u = 0; u < shape.hidden; ++u) {
                gw2[o * shape.hidden + u] += dz * hd[u];
                dh[u] += dz * w2[o * shape.hidden + u];
            }
            gb2[o] += dz;
        }
        for (std::size_t u = 0; u < shape.hidden; ++u) {
            double da = dh[u];
            if (dropping) da *= dropout_mask[s * drop_width + u];
            const double dz1 = z1[u] > 0.0 ? da : 0.0;
            if (dz1 == 0.0) continue;
            for (std::size_t i = 0; i < shape.in; ++i) gw1[u * shape.in + i] += dz1 * x[i];
            gb1[u] += dz1;
        }
    }
    return loss / static_cast<double>(n_elems);
}

std::vector<std::size_t> choose_feature_subset(std::size_t n_features, double fraction,
                                               std::uint64_t seed) {
    std::vector<std::size_t> cols(n_features);
    std::iota(cols.begin(), cols.end(), 0);
    std::size_t m = static_cast<std::size_t>(std::lround(fraction * n_features));
    m = std::clamp<std::size_t>(m, 1, n_features);
    Rng rng(seed);
    rng.shuffle(cols);
    cols.resize(m);
    std::sort(cols.begin(), cols.end());
    return cols;
}

std::vector<double> BaseLearnerModel::logits(std::span<const double> x_full) const {
    if (x_full.size() != input_dim)
        throw DimensionMismatch("expected " + std::to_string(input_dim) + " features, got " +
                                std::to_string(x_full.size()));
    std::vector<double> x(feature_subset.size());
    for (std::size_t i = 0; i < feature_subset.size(); ++i) x[i] = x_full[feature_subset[i]];
    std::vector<double> out(n_labels);
    net_forward(shape(), params, x, out);
    return out;
}

std::vector<double> BaseLearnerModel::input_gradient(std::span<const double> x_full,
                                                     std::size_t label) const {
    if (x_full.size() != input_dim) throw DimensionMismatch("input_gradient: wrong input size");
    const NetShape sh = shape();
    std::vector<double> x(sh.in);
    for (std::size_t i = 0; i < sh.in; ++i) x[i] = x_full[feature_subset[i]];

    std::vector<double> g_sub(sh.in, 0.0);
    if (sh.hidden == 0) {
        const double* w = params.data();
        for (std::size_t i = 0; i < sh.in; ++i) g_sub[i] = w[label * sh.in + i];
    } else {
        const double* w1 = params.data();
        const double* b1 = w1 + sh.hidden * sh.in;
        const double* w2 = b1 + sh.hidden;
        for (std::size_t u = 0; u < sh.hidden; ++u) {
            double z = b1[u];
            for (std::size_t i = 0; i < sh.in; ++i) z += w1[u * sh.in + i] * x[i];
            if (z <= 0.0) continue;
            const double du = w2[label * sh.hidden + u];
            for (std::size_t i = 0; i < sh.in; ++i) g_sub[i] += du * w1[u * sh.in + i];
        }
    }
    std::vector<double> g(input_dim, 0.0);
    for (std::size_t i = 0; i < sh.in; ++i) g[feature_subset[i]] = g_sub[i];
    return g;
}

double macro_auc_on(const Matrix& probs, const BinaryLabelMatrix& truth,
                    const std::vector<std::size_t>& rows) {
    const std::size_t n_labels = truth.n_labels;
    std::vector<double> scores(rows.size());
    std::vector<std::uint8_t> labels(rows.size());
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t l = 0; l < n_labels; ++l) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            scores[i] = probs(rows[i], l);
            labels[i] = truth.at(rows[i], l);
            pos += labels[i];
        }
        if (pos == 0 || pos == rows.size()) continue;
        sum += auc(scores, labels);
        ++used;
    }
    return used ? sum / used : 0.0;
}

BaseLearnerModel train_fold(const BaseLearnerSpec& spec, const Matrix& features,
                            const BinaryLabelMatrix& truth, const SplitView& view, int epochs,
                            int batch_size, std::uint64_t seed, std::vector<double>* epoch_aucs) {
    if (features.rows != truth.n_samples())
        throw ShapeMismatch("feature rows do not match truth rows");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");

    BaseLearnerModel model;
    model.spec = spec;
    model.input_dim = features.cols;
    model.n_labels = truth.n_labels;
    model.feature_subset =
        choose_feature_subset(features.cols, spec.feature_subset_fraction, spec.feature_subset_seed);

    const NetShape sh = model.shape();
    Rng rng(seed);

    // Symmetric uniform init scaled by 1/sqrt(fan_in).
    model.params.assign(sh.n_params(), 0.0);
    auto init_block = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < count; ++i)
            model.params[offset + i] = rng.uniform(-scale, scale);
    };
    if (sh.hidden == 0) {
        init_block(0, sh.out * sh.in, sh.in);
    } else {
        init_block(0, sh.hidden * sh.in, sh.in);
        init_block(sh.hidden * sh.in + sh.hidden, sh.out * sh.hidden, sh.hidden);
    }

    // Extract subset columns once.
    auto subset_rows = [&](const std::vector<std::size_t>& rows) {
        Matrix x(rows.size(), sh.in);
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t i = 0; i < sh.in; ++i)
                x(r, i) = features(rows[r], model.feature_subset[i]);
        return x;
    };

    const std::size_t drop_width = sh.hidden == 0 ? sh.in : sh.hidden;
    const double p = spec.dropout_rate;

    AdamWState opt;
    int step = 0;
    std::vector<double> grad;
    std::vector<double> best_params = model.params;
    double best_auc = -1.0;
    int best_epoch = 0;

    std::vector<std::size_t> train_order = view.train_idx;

    Matrix valid_probs(features.rows, sh.out);
    std::vector<double> logit_buf(sh.out);

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        rng.shuffle(train_order);
        for (std::size_t start = 0; start < train_order.size(); start += batch_size) {
            const std::size_t end = std::min(train_order.size(), start + batch_size);
            std::vector<std::size_t> rows(train_order.begin() + start, train_order.begin() + end);
            Matrix bx = subset_rows(rows);
            std::vector<std::uint8_t> by(rows.size() * sh.out);
            for (std::size_t r = 0; r < rows.size(); ++r)
                for (std::size_t l = 0; l < sh.out; ++l) by[r * sh.out + l] = truth.at(rows[r], l);

            std::vector<double> mask;
            if (p > 0.0) {
                mask.resize(rows.size() * drop_width);
                const double keep_scale = 1.0 / (1.0 - p);
                for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
            }

            const double loss = net_loss_grad(sh, model.params, bx, by, mask, grad);
            if (!std::isfinite(loss))
                throw NonFiniteLoss("non-finite loss for model '" + spec.model_id + "' at epoch " +
                                    std::to_string(epoch));
            adamw_step(opt, model.params, grad, spec.learning_rate, spec.weight_decay, 0.9, 0.999,
                       1e-8, ++step);
        }

        // Validation macro-AUC, dropout off.
        for (std::size_t v : view.valid_idx) {
            std::vector<double> x(sh.in);
            for (std::size_t i = 0; i < sh.in; ++i) x[i] = features(v, model.feature_subset[i]);
            net_forward(sh, model.params, x, logit_buf);
            for (std::size_t l = 0; l < sh.out; ++l) valid_probs(v, l) = sigmoid(logit_buf[l]);
        }
        const double epoch_auc = macro_auc_on(valid_probs, truth, view.valid_idx);
        if (epoch_aucs) epoch_aucs->push_back(epoch_auc);
        if (epoch_auc > best_auc) {
            best_auc = epoch_auc;
            best_params = model.params;
            best_epoch = epoch;
        }
    }

    model.params = std::move(best_params);
    model.best_epoch = best_epoch;
    model.best_macro_auc = best_auc;
    return model;
}

PredictionMatrix predict(const BaseLearnerModel& model, const Matrix& features,
                         const std::vector<std::string>& sample_ids) {
    if (features.cols != model.input_dim)
        throw DimensionMismatch("predict: feature width " + std::to_string(features.cols) +
                                " does not match model input_dim " +
                                std::to_string(model.input_dim));
    PredictionMatrix pm;
    pm.model_id = model.spec.model_id;
    pm.sample_ids = sample_ids;
    pm.probs = Matrix(features.rows, model.n_labels);
    for (std::size_t r = 0; r < features.rows; ++r) {
        auto z = model.logits(features.row(r));
        for (std::size_t l = 0; l < model.n_labels; ++l) pm.probs(r, l) = sigmoid(z[l]);
    }
    return pm;
}

void save_model(const BaseLearnerModel& m, const std::string& path) {
    nlohmann::json j;
    j["spec"] = {{"model_id", m.spec.model_id},
                 {"hidden_units", m.spec.hidden_units},
                 {"dropout_rate", m.spec.dropout_rate},
                 {"learning_rate", m.spec.learning_rate},
                 {"weight_decay", m.spec.weight_decay},
                 {"feature_subset_seed", m.spec.feature_subset_seed},
                 {"feature_subset_fraction", m.spec.feature_subset_fraction}};
    j["input_dim"] = m.input_dim;
    j["n_labels"] = m.n_labels;
    j["feature_subset"] = m.feature_subset;
    j["params"] = m.params;
    j["best_epoch"] = m.best_epoch;
    j["best_macro_auc"] = m.best_macro_auc;
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write model: " + path);
    out << j.dump(2) << "\n";
}

BaseLearnerModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model: " + path);
    nlohmann::json j;
    in >> j;
    BaseLearnerModel m;
    const auto& s = j.at("spec");
    m.spec.model_id = s.at("model_id");
    m.spec.hidden_units = s.at("hidden_units");
    m.spec.dropout_rate = s.at("dropout_rate");
    m.spec.learning_rate = s.at("learning_rate");
    m.spec.weight_decay = s.at("weight_decay");
    m.spec.feature_subset_seed = s.at("feature_subset_seed");
    m.spec.feature_subset_fraction = s.at("feature_subset_fraction");
    m.input_dim = j.at("input_dim");
    m.n_labels = j.at("n_labels");
    m.feature_subset = j.at("feature_subset").get<std::vector<std::size_t>>();
    m.params = j.at("params").get<std::vector<double>>();
    m.best_epoch = j.at("best_epoch");
    m.best_macro_auc = j.at("best_macro_auc");
    return m;
}

}  // namespace retstack
