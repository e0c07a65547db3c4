#include "retstack/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "retstack/errors.hpp"

namespace retstack {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct SplitCandidate {
    double gain = 0.0;  // candidates must beat 0
    int feature = -1;
    double threshold = 0.0;
};

// Per-node scan state for one feature pass.
struct ScanState {
    double g_left = 0.0;
    double h_left = 0.0;
    double last_value = 0.0;
    bool any = false;
};

GbdtTree fit_tree(const Matrix& x, std::span<const double> g, std::span<const double> h,
                  const GbdtParams& p, const std::vector<std::vector<std::size_t>>& sorted_by) {
    const std::size_t n = x.rows;
    const std::size_t d = x.cols;

    GbdtTree tree;
    tree.nodes.push_back({});
    std::vector<int> node_of(n, 0);
    std::vector<int> level = {0};

    auto node_gain_term = [&](double gs, double hs) { return gs * gs / (hs + p.lambda); };

    for (int depth = 0;; ++depth) {
        if (level.empty()) break;

        // Dense slot index for this level's nodes.
        std::vector<int> slot_of(tree.nodes.size(), -1);
        for (std::size_t s = 0; s < level.size(); ++s) slot_of[level[s]] = static_cast<int>(s);

        std::vector<double> g_tot(level.size(), 0.0), h_tot(level.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const int slot = slot_of[node_of[i]];
            if (slot >= 0) {
                g_tot[slot] += g[i];
                h_tot[slot] += h[i];
            }
        }

        std::vector<SplitCandidate> best(level.size());
        if (depth < p.max_depth) {
            std::vector<ScanState> state(level.size());
            for (std::size_t j = 0; j < d; ++j) {
                for (auto& st : state) st = ScanState{};
                for (std::size_t s : sorted_by[j]) {
                    const int slot = slot_of[node_of[s]];
                    if (slot < 0) continue;
                    auto& st = state[slot];
                    const double v = x(s, j);
                    if (st.any && v > st.last_value) {
                        const double h_right = h_tot[slot] - st.h_left;
                        if (st.h_left >= p.min_child_weight && h_right >= p.min_child_weight) {
                            const double g_right = g_tot[slot] - st.g_left;
                            const double gain =
                                0.5 * (node_gain_term(st.g_left, st.h_left) +
                                       node_gain_term(g_right, h_right) -
                                       node_gain_term(g_tot[slot], h_tot[slot])) -
                                p.gamma;
                            if (gain > best[slot].gain) {
                                best[slot] = {gain, static_cast<int>(j),
                                              0.5 * (st.last_value + v)};
                            }
                        }
                    }
                    st.g_left += g[s];
                    st.h_left += h[s];
                    st.last_value = v;
                    st.any = true;
                }
            }
        }

        std::vector<int> next_level;
        for (std::size_t s = 0; s < level.size(); ++s) {
            const int node = level[s];
            if (best[s].feature >= 0 && best[s].gain > 0.0) {
                const int l = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                tree.nodes[node].split_feature = best[s].feature;
                tree.nodes[node].split_threshold = best[s].threshold;
                tree.nodes[node].split_gain = best[s].gain;
                tree.nodes[node].left = l;
                tree.nodes[node].right = l + 1;
                next_level.push_back(l);
                next_level.push_back(l + 1);
            } else {
                tree.nodes[node].leaf_value =
                    -p.eta * g_tot[s] / (h_tot[s] + p.lambda);
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            const auto& nd = tree.nodes[node_of[i]];
            if (!nd.is_leaf())
                node_of[i] = x(i, nd.split_feature) < nd.split_threshold ? nd.left : nd.right;
        }
        level = std::move(next_level);
    }
    return tree;
}

}  // namespace

GbdtForest fit_gbdt(const Matrix& features, std::span<const std::uint8_t> targets,
                    const GbdtParams& params) {
    const std::size_t n = features.rows;
    if (targets.size() != n) throw ShapeMismatch("fit_gbdt: targets vs feature rows");
    std::size_t n_pos = 0;
    for (auto y : targets) n_pos += y;
    if (n_pos == 0 || n_pos == n)
        throw DegenerateTarget("fit_gbdt needs at least one positive and one negative");

    // Presort each feature once; tie order follows sample index for determinism.
    std::vector<std::vector<std::size_t>> sorted_by(features.cols);
    for (std::size_t j = 0; j < features.cols; ++j) {
        auto& idx = sorted_by[j];
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return features(a, j) < features(b, j);
        });
    }

    GbdtForest forest;
    std::vector<double> logit(n, forest.base_score);
    std::vector<double> g(n), h(n);

    for (int round = 0; round < params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(logit[i]);
            g[i] = p - targets[i];
            h[i] = p * (1.0 - p);
        }
        GbdtTree tree = fit_tree(features, g, h, params, sorted_by);
        for (std::size_t i = 0; i < n; ++i) logit[i] += tree.predict(features.row(i));
        forest.trees.push_back(std::move(tree));

        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = logit[i];
            loss += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
        }
        forest.round_losses.push_back(loss / static_cast<double>(n));
    }
    return forest;
}

double forest_logit(const GbdtForest& f, std::span<const double> x) {
    double z = f.base_score;
    for (const auto& t : f.trees) z += t.predict(x);
    return z;
}

double forest_prob(const GbdtForest& f, std::span<const double> x) {
    return sigmoid(forest_logit(f, x));
}

std::vector<double> forest_gain_by_feature(const GbdtForest& f, std::size_t n_features) {
    if (f.trees.empty()) throw EmptyForest("forest has no trees");
    std::vector<double> gain(n_features, 0.0);
    for (const auto& t : f.trees)
        for (const auto& nd : t.nodes)
            if (!nd.is_leaf()) gain[nd.split_feature] += nd.split_gain;
    const double total = std::accumulate(gain.begin(), gain.end(), 0.0);
    if (total > 0.0)
        for (auto& v : gain) v /= total;
    return gain;
}

}  // namespace retstack
