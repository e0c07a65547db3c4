#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "retstack/errors.hpp"
#include "retstack/rng.hpp"
#include "retstack/taxonomy.hpp"

using namespace retstack;

namespace {

ExternalManifest make_external(const std::vector<std::string>& labels,
                               const std::vector<std::vector<int>>& rows) {
    ExternalManifest e;
    e.label_names = labels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        e.sample_ids.push_back("x" + std::to_string(i));
        for (int v : rows[i]) e.values.push_back(v);
    }
    return e;
}

}  // namespace

TEST_CASE("rfmid preset covers exactly the eight mappable targets") {
    auto m = rfmid_mapping();
    REQUIRE(m.entries.size() == 8);
    const char* expected[] = {"dr", "dme", "amd", "em", "rvo", "pm", "aon", "crp"};
    for (const auto* t : expected) CHECK(m.find(t) != nullptr);
    CHECK(m.find("dm") == nullptr);
    CHECK(m.find("gc") == nullptr);
    CHECK(m.find("htr") == nullptr);

    CHECK(m.find("dr")->sources == std::vector<std::string>{"DR"});
    CHECK(m.find("rvo")->sources == std::vector<std::string>{"BRVO", "CRVO"});
    CHECK(m.find("pm")->sources == std::vector<std::string>{"MYA", "TSLN", "TD"});
    CHECK(m.find("aon")->sources ==
          std::vector<std::string>{"AION", "ODP", "ODE", "MNF", "TD", "ODPM"});
    CHECK(m.find("crp")->sources ==
          std::vector<std::string>{"RS", "CRS", "VS", "CSR", "PT", "PTCR", "CF", "RP"});
}

TEST_CASE("mapped truth ORs source labels") {
    auto schema = LabelSchema::canonical();
    LabelMapping m;
    m.entries.push_back({"rvo", {"BRVO", "CRVO"}});
    auto e = make_external({"BRVO", "CRVO"}, {{0, 0}, {1, 0}, {0, 1}, {1, 1}});
    auto mt = map_ground_truth(e, m, schema);
    const auto rvo = schema.index_of("rvo");
    CHECK(mt.matrix.at(0, rvo) == 0);
    CHECK(mt.matrix.at(1, rvo) == 1);
    CHECK(mt.matrix.at(2, rvo) == 1);
    CHECK(mt.matrix.at(3, rvo) == 1);
    CHECK(mt.evaluated[rvo] == 1);
    // the ten unmapped labels stay zero and unevaluated
    CHECK(mt.unmapped.size() == 10);
    const auto dr = schema.index_of("dr");
    CHECK(mt.evaluated[dr] == 0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(mt.matrix.at(i, dr) == 0);
}

TEST_CASE("graded external values binarize at >= 1") {
    auto schema = LabelSchema::canonical();
    LabelMapping m;
    m.entries.push_back({"dr", {"DR"}});
    auto e = make_external({"DR"}, {{0}, {1}, {3}});
    auto mt = map_ground_truth(e, m, schema);
    const auto dr = schema.index_of("dr");
    CHECK(mt.matrix.at(0, dr) == 0);
    CHECK(mt.matrix.at(1, dr) == 1);
    CHECK(mt.matrix.at(2, dr) == 1);
}

TEST_CASE("mapped value is monotone in its sources") {
    // flipping any source on can only turn the target on, never off
    auto schema = LabelSchema::canonical();
    auto m = rfmid_mapping();
    std::vector<std::string> all_sources;
    for (const auto& en : m.entries)
        for (const auto& s : en.sources)
            if (std::find(all_sources.begin(), all_sources.end(), s) == all_sources.end())
                all_sources.push_back(s);
    Rng rng(44);
    const std::size_t n = 200;
    std::vector<std::vector<int>> rows(n, std::vector<int>(all_sources.size()));
    for (auto& r : rows)
        for (auto& v : r) v = rng.uniform() < 0.15;
    auto base = map_ground_truth(make_external(all_sources, rows), m, schema);
    for (std::size_t i = 0; i < n; ++i) {
        auto bumped = rows;
        const std::size_t j = rng.below(all_sources.size());
        bumped[i][j] = 1;
        auto mt = map_ground_truth(make_external(all_sources, bumped), m, schema);
        for (std::size_t l = 0; l < schema.size(); ++l)
            CHECK(mt.matrix.at(i, l) >= base.matrix.at(i, l));
    }
}

TEST_CASE("unknown sources and empty mappings are rejected") {
    auto schema = LabelSchema::canonical();
    LabelMapping m;
    m.entries.push_back({"dr", {"NOPE"}});
    auto e = make_external({"DR"}, {{1}});
    CHECK_THROWS_AS(map_ground_truth(e, m, schema), UnknownSourceLabel);
    LabelMapping empty_entry;
    empty_entry.entries.push_back({"dr", {}});
    CHECK_THROWS_AS(map_ground_truth(e, empty_entry, schema), EmptyMapping);
}

TEST_CASE("mapping file round trip preserves order") {
    auto m = rfmid_mapping();
    const auto path = (std::filesystem::temp_directory_path() / "retstack_map_rt.json").string();
    save_mapping(m, path);
    auto back = load_mapping(path, LabelSchema::canonical());
    REQUIRE(back.entries.size() == m.entries.size());
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        CHECK(back.entries[i].target == m.entries[i].target);
        CHECK(back.entries[i].sources == m.entries[i].sources);
    }
}

TEST_CASE("mapping with an unknown target label is rejected at load") {
    const auto path = (std::filesystem::temp_directory_path() / "retstack_map_bad.json").string();
    std::ofstream(path) << R"({"nonsense": ["DR"]})";
    CHECK_THROWS_AS(load_mapping(path, LabelSchema::canonical()), UnknownTargetLabel);
}

TEST_CASE("external manifest loads from csv") {
    const auto path = (std::filesystem::temp_directory_path() / "retstack_ext.csv").string();
    std::ofstream(path) << "sample_id,DR,BRVO\nr1,1,0\nr2,0,1\n";
    auto e = load_external_manifest(path);
    REQUIRE(e.n_samples() == 2);
    CHECK(e.label_names == std::vector<std::string>{"DR", "BRVO"});
    CHECK(e.at(0, 0) == 1);
    CHECK(e.at(1, 1) == 1);
}
