#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retstack/schema.hpp"

namespace retstack {

struct FoldAssignment {
    std::vector<std::string> sample_ids;
    std::vector<int> fold_of;  // one entry per sample, in [0, k)
    int k = 0;

    std::vector<std::size_t> fold_indices(int fold) const;
};

// Iterative stratification: labels processed rarest-first, each positive
// assigned to the fold that most wants it. Deterministic given seed.
FoldAssignment stratified_kfold(const BinaryLabelMatrix& labels, int k, std::uint64_t seed);

struct SplitView {
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> valid_idx;
};

SplitView split_views(const FoldAssignment& fa, int fold);

void save_folds(const FoldAssignment& fa, const std::string& path);
FoldAssignment load_folds(const std::string& path);

}  // namespace retstack
