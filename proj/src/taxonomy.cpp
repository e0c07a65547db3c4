#include "retstack/taxonomy.hpp"

#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "retstack/csv.hpp"
#include "retstack/errors.hpp"

namespace retstack {

ExternalManifest load_external_manifest(const std::string& path) {
    auto table = csv::read_file(path);
    const int id_col = table.column("sample_id");
    if (id_col < 0) throw MissingColumn("sample_id");
    ExternalManifest m;
    for (std::size_t j = 0; j < table.header.size(); ++j)
        if (static_cast<int>(j) != id_col) m.label_names.push_back(table.header[j]);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        m.sample_ids.push_back(table.rows[r][id_col]);
        for (std::size_t j = 0; j < table.rows[r].size(); ++j) {
            if (static_cast<int>(j) == id_col) continue;
            m.values.push_back(static_cast<int>(csv::parse_int(table.rows[r][j], r + 2)));
        }
    }
    return m;
}

MappedTruth map_ground_truth(const ExternalManifest& external, const LabelMapping& mapping,
                             const LabelSchema& schema) {
    if (mapping.entries.empty()) throw EmptyMapping("mapping has no entries");

    std::unordered_map<std::string, std::size_t> source_col;
    for (std::size_t j = 0; j < external.label_names.size(); ++j)
        source_col[external.label_names[j]] = j;

    MappedTruth out;
    out.matrix.sample_ids = external.sample_ids;
    out.matrix.n_labels = schema.size();
    out.matrix.values.assign(external.n_samples() * schema.size(), 0);
    out.evaluated.assign(schema.size(), 0);

    for (std::size_t l = 0; l < schema.size(); ++l) {
        const auto* entry = mapping.find(schema.labels[l].id);
        if (!entry) {
            out.unmapped.push_back(schema.labels[l].id);
            continue;
        }
        if (entry->sources.empty())
            throw EmptyMapping("no sources for target: " + entry->target);
        out.evaluated[l] = 1;
        std::vector<std::size_t> cols;
        for (const auto& src : entry->sources) {
            auto it = source_col.find(src);
            if (it == source_col.end()) throw UnknownSourceLabel(src);
            cols.push_back(it->second);
        }
        for (std::size_t i = 0; i < external.n_samples(); ++i) {
            std::uint8_t v = 0;
            for (std::size_t c : cols)
                if (external.at(i, c) >= 1) v = 1;
            out.matrix.values[i * schema.size() + l] = v;
        }
    }
    return out;
}

LabelMapping load_mapping(const std::string& path, const LabelSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open mapping: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError(std::string("mapping json: ") + e.what());
    }
    LabelMapping m;
    for (const auto& [target, sources] : j.items()) {
        if (schema.index_of(target) < 0) throw UnknownTargetLabel(target);
        LabelMapping::Entry e;
        e.target = target;
        for (const auto& s : sources) e.sources.push_back(s.get<std::string>());
        if (e.sources.empty()) throw EmptyMapping("empty source list for target '" + target + "'");
        m.entries.push_back(std::move(e));
    }
    if (m.entries.empty()) throw EmptyMapping("mapping file has no targets");
    return m;
}

void save_mapping(const LabelMapping& mapping, const std::string& path) {
    nlohmann::ordered_json j;
    for (const auto& e : mapping.entries) j[e.target] = e.sources;
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write mapping: " + path);
    out << j.dump(2) << "\n";
}

LabelMapping rfmid_mapping() {
    LabelMapping m;
    m.entries = {
        {"dr", {"DR"}},
        {"dme", {"DME"}},
        {"amd", {"ARMD"}},
        {"em", {"ERM"}},
        {"rvo", {"BRVO", "CRVO"}},
        {"pm", {"MYA", "TSLN", "TD"}},
        {"aon", {"AION", "ODP", "ODE", "MNF", "TD", "ODPM"}},
        {"crp", {"RS", "CRS", "VS", "CSR", "PT", "PTCR", "CF", "RP"}},
    };
    return m;
}

}  // namespace retstack
