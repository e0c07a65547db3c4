#include "retstack/schema.hpp"

#include <fstream>
#include <iostream>
#include <unordered_set>

#include <json.hpp>

#include "retstack/csv.hpp"
#include "retstack/errors.hpp"

namespace retstack {

LabelSchema LabelSchema::canonical() {
    LabelSchema s;
    for (const char* id : {"amd", "aon", "crp", "dm", "dme"})
        s.labels.push_back({id, LabelKind::binary, 1});
    s.labels.push_back({"dr", LabelKind::graded, 4});
    for (const char* id : {"em", "gc", "htr", "pm", "rvo"})
        s.labels.push_back({id, LabelKind::binary, 1});
    return s;
}

int LabelSchema::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i].id == id) return static_cast<int>(i);
    return -1;
}

void PipelineConfig::validate() const {
    if (k_folds < 2) throw ValidationError("k_folds must be >= 2");
    if (n_labels < 1) throw ValidationError("n_labels must be >= 1");
    if (n_models < 1) throw ValidationError("n_models must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (!(oof_holdout_fraction > 0.0 && oof_holdout_fraction < 1.0))
        throw ValidationError("oof_holdout_fraction must be in (0, 1)");
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(std::string("config json: ") + e.what());
    }
    PipelineConfig c;
    c.k_folds = j.value("k_folds", c.k_folds);
    c.n_labels = j.value("n_labels", c.n_labels);
    c.n_models = j.value("n_models", c.n_models);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.oof_holdout_fraction = j.value("oof_holdout_fraction", c.oof_holdout_fraction);
    c.validate();
    return c;
}

void PipelineConfig::save_json(const std::string& path) const {
    nlohmann::json j{{"k_folds", k_folds},       {"n_labels", n_labels},
                     {"n_models", n_models},     {"epochs", epochs},
                     {"batch_size", batch_size}, {"seed", seed},
                     {"oof_holdout_fraction", oof_holdout_fraction}};
    std::ofstream out(path);
    out << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& path, const LabelSchema& schema) {
    auto table = csv::read_file(path);

    const int id_col = table.column("sample_id");
    if (id_col < 0) throw MissingColumn("sample_id");

    std::vector<int> label_cols(schema.size());
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto col = schema.labels[j].column_name();
        label_cols[j] = table.column(col);
        if (label_cols[j] < 0) throw MissingColumn(col);
    }

    std::unordered_set<std::string> known;
    known.insert("sample_id");
    for (const auto& l : schema.labels) known.insert(l.column_name());
    for (const auto& col : table.header)
        if (!known.count(col))
            std::cerr << "warning: ignoring unknown manifest column '" << col << "'\n";

    Manifest m;
    m.schema = schema;
    m.values.reserve(table.rows.size() * schema.size());
    std::unordered_set<std::string> seen;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const std::size_t lineno = r + 2;
        const auto& id = row[id_col];
        if (!seen.insert(id).second) throw DuplicateSampleId(id);
        m.sample_ids.push_back(id);
        for (std::size_t j = 0; j < schema.size(); ++j) {
            const long long v = csv::parse_int(row[label_cols[j]], lineno);
            if (v < 0 || v > schema.labels[j].max_grade)
                throw OutOfRangeValue(r, schema.labels[j].id, v);
            m.values.push_back(static_cast<int>(v));
        }
    }
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write manifest: " + path);
    out << "sample_id";
    for (const auto& l : m.schema.labels) out << "," << l.column_name();
    out << "\n";
    for (std::size_t i = 0; i < m.n_samples(); ++i) {
        out << m.sample_ids[i];
        for (std::size_t j = 0; j < m.schema.size(); ++j) out << "," << m.at(i, j);
        out << "\n";
    }
}

BinaryLabelMatrix binarize_manifest(const Manifest& m) {
    BinaryLabelMatrix b;
    b.sample_ids = m.sample_ids;
    b.n_labels = m.schema.size();
    b.values.reserve(m.values.size());
    for (int v : m.values) b.values.push_back(v >= 1 ? 1 : 0);
    return b;
}

FeatureTable load_features(const std::string& path) {
    auto table = csv::read_file(path);
    const int id_col = table.column("sample_id");
    if (id_col < 0) throw MissingColumn("sample_id");

    FeatureTable t;
    for (std::size_t j = 0; j < table.header.size(); ++j)
        if (static_cast<int>(j) != id_col) t.feature_names.push_back(table.header[j]);

    t.features = Matrix(table.rows.size(), t.feature_names.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        t.sample_ids.push_back(row[id_col]);
        std::size_t jj = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (static_cast<int>(j) == id_col) continue;
            t.features(r, jj++) = csv::parse_double(row[j], r + 2);
        }
    }
    return t;
}

void save_features(const FeatureTable& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write features: " + path);
    out.precision(17);
    out << "sample_id";
    for (const auto& n : t.feature_names) out << "," << n;
    out << "\n";
    for (std::size_t i = 0; i < t.sample_ids.size(); ++i) {
        out << t.sample_ids[i];
        for (std::size_t j = 0; j < t.features.cols; ++j) out << "," << t.features(i, j);
        out << "\n";
    }
}

}  // namespace retstack
