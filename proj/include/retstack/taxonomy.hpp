#pragma once

#include <string>
#include <vector>

#include "retstack/schema.hpp"

namespace retstack {

// Cross-taxonomy alignment: each target (schema) label is the OR of one or
// more source labels from an external dataset's taxonomy.
struct LabelMapping {
    struct Entry {
        std::string target;
        std::vector<std::string> sources;
    };
    std::vector<Entry> entries;

    const Entry* find(const std::string& target) const {
        for (const auto& e : entries)
            if (e.target == target) return &e;
        return nullptr;
    }
};

// External ground truth with its own label vocabulary; integer values,
// binarized as value >= 1 when mapped.
struct ExternalManifest {
    std::vector<std::string> sample_ids;
    std::vector<std::string> label_names;
    std::vector<int> values;  // row-major

    std::size_t n_samples() const { return sample_ids.size(); }
    int at(std::size_t row, std::size_t col) const {
        return values[row * label_names.size() + col];
    }
};

ExternalManifest load_external_manifest(const std::string& path);

struct MappedTruth {
    BinaryLabelMatrix matrix;               // full schema width; unmapped columns zero
    std::vector<std::uint8_t> evaluated;    // per schema label
    std::vector<std::string> unmapped;      // schema labels with no mapping entry
};

MappedTruth map_ground_truth(const ExternalManifest& external, const LabelMapping& mapping,
                             const LabelSchema& schema);

LabelMapping load_mapping(const std::string& path, const LabelSchema& schema);
void save_mapping(const LabelMapping& mapping, const std::string& path);

// The RFMiD preset shipped with the project (8 targets).
LabelMapping rfmid_mapping();

}  // namespace retstack
