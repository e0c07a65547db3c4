#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retstack/matrix.hpp"

namespace retstack {

struct GbdtParams {
    int rounds = 200;
    int max_depth = 4;
    double eta = 0.1;
    double lambda = 1.0;
    double gamma = 0.0;
    double min_child_weight = 1.0;
};

struct GbdtNode {
    int split_feature = -1;  // -1 marks a leaf
    double split_threshold = 0.0;
    double split_gain = 0.0;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;

    bool is_leaf() const { return split_feature < 0; }
};

struct GbdtTree {
    std::vector<GbdtNode> nodes;

    double predict(std::span<const double> x) const {
        int i = 0;
        while (!nodes[i].is_leaf())
            i = x[nodes[i].split_feature] < nodes[i].split_threshold ? nodes[i].left
                                                                     : nodes[i].right;
        return nodes[i].leaf_value;
    }
};

struct GbdtForest {
    std::vector<GbdtTree> trees;
    double base_score = 0.0;  // logit
    std::vector<double> round_losses;  // training logistic loss after each round
};

// Second-order boosting on logistic loss with exact greedy split search.
GbdtForest fit_gbdt(const Matrix& features, std::span<const std::uint8_t> targets,
                    const GbdtParams& params);

double forest_logit(const GbdtForest& f, std::span<const double> x);
double forest_prob(const GbdtForest& f, std::span<const double> x);

// Gain share per feature over the whole forest, normalized to sum 1.
std::vector<double> forest_gain_by_feature(const GbdtForest& f, std::size_t n_features);

}  // namespace retstack
