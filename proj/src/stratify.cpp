#include "retstack/stratify.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "retstack/csv.hpp"
#include "retstack/errors.hpp"
#include "retstack/rng.hpp"

namespace retstack {

std::vector<std::size_t> FoldAssignment::fold_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i)
        if (fold_of[i] == fold) out.push_back(i);
    return out;
}

FoldAssignment stratified_kfold(const BinaryLabelMatrix& labels, int k, std::uint64_t seed) {
    const std::size_t n = labels.n_samples();
    const std::size_t n_labels = labels.n_labels;
    if (k < 2) throw DegenerateInput("k must be >= 2");
    if (n < static_cast<std::size_t>(k))
        throw DegenerateInput("need at least k samples, got " + std::to_string(n));

    // Visit order is shuffled once; everything after that is deterministic.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[order[i]] = i;

    // desired[f][l]: how many positives of label l fold f still wants.
    // capacity[f]: how many samples fold f still wants in total.
    std::vector<std::vector<double>> desired(k, std::vector<double>(n_labels));
    for (std::size_t l = 0; l < n_labels; ++l) {
        const double share = static_cast<double>(labels.positives(l)) / k;
        for (int f = 0; f < k; ++f) desired[f][l] = share;
    }
    std::vector<double> capacity(k, static_cast<double>(n) / k);

    std::vector<int> fold_of(n, -1);
    std::vector<std::size_t> remaining_pos(n_labels, 0);
    for (std::size_t l = 0; l < n_labels; ++l) remaining_pos[l] = labels.positives(l);

    auto assign = [&](std::size_t sample, int fold) {
        fold_of[sample] = fold;
        capacity[fold] -= 1.0;
        for (std::size_t l = 0; l < n_labels; ++l) {
            if (labels.at(sample, l)) {
                desired[fold][l] -= 1.0;
                --remaining_pos[l];
            }
        }
    };

    for (;;) {
        // Rarest label with unassigned positives; ties go to the lowest index.
        int target = -1;
        std::size_t fewest = std::numeric_limits<std::size_t>::max();
        for (std::size_t l = 0; l < n_labels; ++l) {
            if (remaining_pos[l] > 0 && remaining_pos[l] < fewest) {
                fewest = remaining_pos[l];
                target = static_cast<int>(l);
            }
        }
        if (target < 0) break;

        std::vector<std::size_t> batch;
        for (std::size_t i = 0; i < n; ++i)
            if (fold_of[i] < 0 && labels.at(i, target)) batch.push_back(i);
        std::sort(batch.begin(), batch.end(),
                  [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });

        for (std::size_t sample : batch) {
            int best = 0;
            for (int f = 1; f < k; ++f) {
                if (desired[f][target] > desired[best][target] ||
                    (desired[f][target] == desired[best][target] &&
                     capacity[f] > capacity[best])) {
                    best = f;
                }
            }
            assign(sample, best);
        }
    }

    // All-negative samples carry no stratification constraint; fill folds
    // to capacity in shuffled order.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t sample = order[i];
        if (fold_of[sample] >= 0) continue;
        int best = 0;
        for (int f = 1; f < k; ++f)
            if (capacity[f] > capacity[best]) best = f;
        assign(sample, best);
    }

    // The greedy ignores a sample's other labels when it is claimed during a
    // rarer label's turn, which can leave individual labels several positives
    // off ideal. Polish with size-preserving swaps between the worst-off fold
    // pair until every label sits within the quality bound.
    {
        std::vector<std::vector<double>> cnt(k, std::vector<double>(n_labels, 0.0));
        std::vector<double> ideal(n_labels);
        for (std::size_t l = 0; l < n_labels; ++l)
            ideal[l] = static_cast<double>(labels.positives(l)) / k;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t l = 0; l < n_labels; ++l)
                if (labels.at(i, l)) cnt[fold_of[i]][l] += 1.0;

        const int max_swaps = static_cast<int>(4 * n_labels * k + 16);
        for (int iter = 0; iter < max_swaps; ++iter) {
            // worst excess across (fold, label)
            double worst = 1.0;
            int wl = -1, f_hi = -1;
            for (std::size_t l = 0; l < n_labels; ++l)
                for (int f = 0; f < k; ++f)
                    if (cnt[f][l] - ideal[l] > worst) {
                        worst = cnt[f][l] - ideal[l];
                        wl = static_cast<int>(l);
                        f_hi = f;
                    }
            if (wl < 0) break;
            int f_lo = 0;
            for (int f = 1; f < k; ++f)
                if (cnt[f][wl] - ideal[wl] < cnt[f_lo][wl] - ideal[wl]) f_lo = f;

            // best swap: a positive-for-wl sample out of f_hi against a
            // negative one from f_lo, minimizing the global squared deviation
            double best_delta = -1e-12;
            std::size_t best_a = n, best_b = n;
            for (std::size_t a = 0; a < n; ++a) {
                if (fold_of[a] != f_hi || !labels.at(a, wl)) continue;
                for (std::size_t b = 0; b < n; ++b) {
                    if (fold_of[b] != f_lo || labels.at(b, wl)) continue;
                    double delta = 0.0;
                    for (std::size_t l = 0; l < n_labels; ++l) {
                        const int d = static_cast<int>(labels.at(b, l)) -
                                      static_cast<int>(labels.at(a, l));
                        if (d == 0) continue;
                        const double ehi = cnt[f_hi][l] - ideal[l];
                        const double elo = cnt[f_lo][l] - ideal[l];
                        delta += (ehi + d) * (ehi + d) - ehi * ehi;
                        delta += (elo - d) * (elo - d) - elo * elo;
                    }
                    if (delta < best_delta) {
                        best_delta = delta;
                        best_a = a;
                        best_b = b;
                    }
                }
            }
            if (best_a == n) break;  // no improving swap for the worst label
            for (std::size_t l = 0; l < n_labels; ++l) {
                const int d = static_cast<int>(labels.at(best_b, l)) -
                              static_cast<int>(labels.at(best_a, l));
                cnt[f_hi][l] += d;
                cnt[f_lo][l] -= d;
            }
            fold_of[best_a] = f_lo;
            fold_of[best_b] = f_hi;
        }
    }

    FoldAssignment fa;
    fa.sample_ids = labels.sample_ids;
    fa.fold_of = std::move(fold_of);
    fa.k = k;
    return fa;
}

SplitView split_views(const FoldAssignment& fa, int fold) {
    if (fold < 0 || fold >= fa.k) throw FoldOutOfRange(fold, fa.k);
    SplitView v;
    for (std::size_t i = 0; i < fa.fold_of.size(); ++i) {
        if (fa.fold_of[i] == fold)
            v.valid_idx.push_back(i);
        else
            v.train_idx.push_back(i);
    }
    return v;
}

void save_folds(const FoldAssignment& fa, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write fold file: " + path);
    out << "sample_id,fold\n";
    for (std::size_t i = 0; i < fa.sample_ids.size(); ++i)
        out << fa.sample_ids[i] << "," << fa.fold_of[i] << "\n";
}

FoldAssignment load_folds(const std::string& path) {
    auto table = csv::read_file(path);
    const int id_col = table.column("sample_id");
    const int fold_col = table.column("fold");
    if (id_col < 0) throw MissingColumn("sample_id");
    if (fold_col < 0) throw MissingColumn("fold");
    FoldAssignment fa;
    int max_fold = -1;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        fa.sample_ids.push_back(table.rows[r][id_col]);
        const int f = static_cast<int>(csv::parse_int(table.rows[r][fold_col], r + 2));
        fa.fold_of.push_back(f);
        max_fold = std::max(max_fold, f);
    }
    fa.k = max_fold + 1;
    return fa;
}

}  // namespace retstack
