#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retstack/matrix.hpp"

namespace retstack {

enum class LabelKind { binary, graded };

struct LabelDef {
    std::string id;
    LabelKind kind = LabelKind::binary;
    int max_grade = 1;

    // Manifest column: graded labels use "<id>_grade", binary use "is_<id>".
    std::string column_name() const {
        return kind == LabelKind::graded ? id + "_grade" : "is_" + id;
    }
};

// Fixed, ordered label set. The ordering defines column order everywhere
// downstream (fold files, prediction matrices, OOF features, reports).
struct LabelSchema {
    std::vector<LabelDef> labels;

    // The eleven disease labels, alphabetical by abbreviation; dr is graded 0-4.
    static LabelSchema canonical();

    std::size_t size() const { return labels.size(); }
    int index_of(const std::string& id) const;
    bool operator==(const LabelSchema&) const = default;
};

struct Manifest {
    LabelSchema schema;
    std::vector<std::string> sample_ids;
    std::vector<int> values;  // row-major, n_samples x n_labels

    std::size_t n_samples() const { return sample_ids.size(); }
    int at(std::size_t row, std::size_t label) const { return values[row * schema.size() + label]; }
};

struct BinaryLabelMatrix {
    std::vector<std::string> sample_ids;
    std::size_t n_labels = 0;
    std::vector<std::uint8_t> values;  // row-major

    std::size_t n_samples() const { return sample_ids.size(); }
    std::uint8_t at(std::size_t row, std::size_t label) const {
        return values[row * n_labels + label];
    }
    std::size_t positives(std::size_t label) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < n_samples(); ++i) n += at(i, label);
        return n;
    }
};

struct PipelineConfig {
    int k_folds = 5;
    int n_labels = 11;
    int n_models = 6;
    int epochs = 10;
    int batch_size = 32;
    std::uint64_t seed = 42;
    double oof_holdout_fraction = 0.25;

    void validate() const;  // throws ValidationError
    static PipelineConfig from_json_file(const std::string& path);
    void save_json(const std::string& path) const;
};

Manifest load_manifest(const std::string& path, const LabelSchema& schema);
void save_manifest(const Manifest& m, const std::string& path);

BinaryLabelMatrix binarize_manifest(const Manifest& m);

// Tabular feature file: header `sample_id,<feature names...>`.
struct FeatureTable {
    std::vector<std::string> sample_ids;
    std::vector<std::string> feature_names;
    Matrix features;
};

FeatureTable load_features(const std::string& path);
void save_features(const FeatureTable& t, const std::string& path);

}  // namespace retstack
