#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "retstack/errors.hpp"
#include "retstack/rng.hpp"
#include "retstack/stratify.hpp"

using namespace retstack;

namespace {

BinaryLabelMatrix random_matrix(std::size_t n, std::size_t n_labels, double p, std::uint64_t seed) {
    BinaryLabelMatrix b;
    b.n_labels = n_labels;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        b.sample_ids.push_back("s" + std::to_string(i));
        for (std::size_t l = 0; l < n_labels; ++l)
            b.values.push_back(rng.uniform() < p ? 1 : 0);
    }
    return b;
}

std::size_t fold_positives(const BinaryLabelMatrix& b, const FoldAssignment& fa, int fold,
                           std::size_t label) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < b.n_samples(); ++i)
        if (fa.fold_of[i] == fold && b.at(i, label)) ++c;
    return c;
}

}  // namespace

TEST_CASE("perfect divisibility: 5 positives over 5 folds, one each") {
    BinaryLabelMatrix b;
    b.n_labels = 1;
    for (int i = 0; i < 10; ++i) {
        b.sample_ids.push_back("s" + std::to_string(i));
        b.values.push_back(i < 5 ? 1 : 0);
    }
    auto fa = stratified_kfold(b, 5, 7);
    for (int f = 0; f < 5; ++f) {
        CHECK(fold_positives(b, fa, f, 0) == 1);
        CHECK(fa.fold_indices(f).size() == 2);
    }
}

TEST_CASE("all-negative matrix still balances fold sizes") {
    BinaryLabelMatrix b;
    b.n_labels = 2;
    for (int i = 0; i < 12; ++i) {
        b.sample_ids.push_back("s" + std::to_string(i));
        b.values.push_back(0);
        b.values.push_back(0);
    }
    auto fa = stratified_kfold(b, 4, 3);
    for (int f = 0; f < 4; ++f) CHECK(fa.fold_indices(f).size() == 3);
}

TEST_CASE("60-sample 3-label matrix: per-fold positive counts near ideal") {
    auto b = random_matrix(60, 3, 0.3, 99);
    auto fa = stratified_kfold(b, 5, 99);
    for (std::size_t l = 0; l < 3; ++l) {
        const double ideal = static_cast<double>(b.positives(l)) / 5.0;
        for (int f = 0; f < 5; ++f) {
            const double diff = std::abs(static_cast<double>(fold_positives(b, fa, f, l)) - ideal);
            CHECK(diff <= 1.0);
        }
    }
}

TEST_CASE("partition and determinism properties") {
    auto b = random_matrix(137, 5, 0.2, 5);
    auto fa1 = stratified_kfold(b, 5, 1234);
    auto fa2 = stratified_kfold(b, 5, 1234);
    CHECK(fa1.fold_of == fa2.fold_of);

    // every sample is in exactly one fold's validation set
    std::set<std::size_t> seen;
    for (int f = 0; f < 5; ++f) {
        auto v = split_views(fa1, f);
        CHECK(v.train_idx.size() + v.valid_idx.size() == b.n_samples());
        for (auto i : v.valid_idx) CHECK(seen.insert(i).second);
    }
    CHECK(seen.size() == b.n_samples());
    for (int f = 0; f < 5; ++f) CHECK(!fa1.fold_indices(f).empty());
}

TEST_CASE("different seeds give different assignments") {
    auto b = random_matrix(200, 4, 0.3, 8);
    auto fa1 = stratified_kfold(b, 5, 1);
    auto fa2 = stratified_kfold(b, 5, 2);
    CHECK(fa1.fold_of != fa2.fold_of);
}

TEST_CASE("stratification quality bound on random matrices") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t n = 100 + 43 * seed;
        auto b = random_matrix(n, 11, 0.05 + 0.02 * (seed % 5), seed * 31 + 7);
        auto fa = stratified_kfold(b, 5, seed);
        for (std::size_t l = 0; l < 11; ++l) {
            const double ideal = static_cast<double>(b.positives(l)) / 5.0;
            for (int f = 0; f < 5; ++f) {
                const double diff =
                    std::abs(static_cast<double>(fold_positives(b, fa, f, l)) - ideal);
                CHECK(diff <= 2.0);
            }
        }
    }
}

TEST_CASE("single-label case degrades to classic stratified k-fold") {
    auto b = random_matrix(101, 1, 0.37, 3);
    auto fa = stratified_kfold(b, 5, 17);
    std::size_t lo = b.n_samples(), hi = 0;
    for (int f = 0; f < 5; ++f) {
        const auto c = fold_positives(b, fa, f, 0);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    CHECK(hi - lo <= 1);
}

TEST_CASE("degenerate and out-of-range inputs") {
    auto b = random_matrix(3, 2, 0.5, 1);
    CHECK_THROWS_AS(stratified_kfold(b, 5, 0), DegenerateInput);
    auto ok = random_matrix(10, 2, 0.5, 1);
    auto fa = stratified_kfold(ok, 5, 0);
    CHECK_THROWS_AS(split_views(fa, 5), FoldOutOfRange);
    CHECK_THROWS_AS(split_views(fa, -1), FoldOutOfRange);
}

TEST_CASE("fold file round trip is exact") {
    auto b = random_matrix(50, 3, 0.3, 11);
    auto fa = stratified_kfold(b, 4, 21);
    const auto path =
        (std::filesystem::temp_directory_path() / "retstack_folds_rt.csv").string();
    save_folds(fa, path);
    auto back = load_folds(path);
    CHECK(back.sample_ids == fa.sample_ids);
    CHECK(back.fold_of == fa.fold_of);
    CHECK(back.k == fa.k);
}
