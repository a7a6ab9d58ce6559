#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "ragseco/data.hpp"
#include "ragseco/rng.hpp"

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace ragseco;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("ragseco_data_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("jaccard similarity") {
    SECTION("identical nonempty sets give 1") {
        std::vector<std::string> u{"a", "b"};
        REQUIRE(data::jaccard_similarity(u, u) == 1.0);
    }
    SECTION("disjoint nonempty sets give 0") {
        REQUIRE(data::jaccard_similarity({"a"}, {"b"}) == 0.0);
    }
    SECTION("hand case 2/4") {
        REQUIRE(data::jaccard_similarity({"a", "b", "c"}, {"b", "c", "d"}) == 0.5);
    }
    SECTION("both empty defined as 0") {
        REQUIRE(data::jaccard_similarity({}, {}) == 0.0);
    }
    SECTION("bounded, symmetric, equals enumeration oracle on random sets") {
        rng::Engine rng(17);
        const std::vector<std::string> universe{"t0", "t1", "t2", "t3", "t4", "t5", "t6", "t7"};
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<std::string> u, v;
            for (const auto& t : universe) {
                if (rng.bernoulli(0.4)) u.push_back(t);
                if (rng.bernoulli(0.4)) v.push_back(t);
            }
            const double juv = data::jaccard_similarity(u, v);
            const double jvu = data::jaccard_similarity(v, u);
            REQUIRE(juv == jvu);
            REQUIRE(juv >= 0.0);
            REQUIRE(juv <= 1.0);
            REQUIRE(juv == testsupport::enumerate_jaccard(u, v));
            const bool equal_nonempty = !u.empty() && u == v;
            REQUIRE((juv == 1.0) == equal_nonempty);
        }
    }
}

TEST_CASE("initial feature matrix") {
    SECTION("frozen 2-drug example") {
        data::Dataset ds;
        data::DrugRecord d0{"a", {{{"a"}, {"b"}, {}}}, "C"};
        data::DrugRecord d1{"b", {{{"a"}, {"c"}, {}}}, "C"};
        ds.drugs = {d0, d1};
        const ad::Tensor x = data::build_initial_features(ds);
        REQUIRE(x.shape() == ad::Shape{2, 6});
        const std::vector<double> row0{1, 1, 1, 0, 0, 0};
        for (std::size_t j = 0; j < 6; ++j) REQUIRE(x.at(0, j) == row0[j]);
    }
    SECTION("drugs with identical descriptors get identical rows") {
        testsupport::SyntheticSpec spec;
        spec.n_drugs = 6;
        data::Dataset ds = testsupport::make_clustered_dataset(spec);
        ds.drugs[3].descriptors = ds.drugs[0].descriptors;
        const ad::Tensor x = data::build_initial_features(ds);
        for (std::size_t j = 0; j < x.cols(); ++j) REQUIRE(x.at(0, j) == x.at(3, j));
    }
    SECTION("blocks are symmetric on random data") {
        testsupport::SyntheticSpec spec;
        spec.n_drugs = 10;
        const data::Dataset ds = testsupport::make_clustered_dataset(spec);
        const ad::Tensor x = data::build_initial_features(ds);
        const std::size_t n = ds.drug_count();
        for (std::size_t a = 0; a < data::kAttributeCount; ++a)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    REQUIRE(x.at(i, a * n + j) == x.at(j, a * n + i));
    }
    SECTION("diagonal entries: 1 for nonempty sets, 0 for empty") {
        data::Dataset ds;
        data::DrugRecord d0{"a", {{{"x"}, {}, {"y"}}}, ""};
        ds.drugs = {d0};
        const ad::Tensor x = data::build_initial_features(ds);
        REQUIRE(x.at(0, 0) == 1.0);
        REQUIRE(x.at(0, 1) == 0.0);
        REQUIRE(x.at(0, 2) == 1.0);
    }
}

TEST_CASE("smiles encoding") {
    const data::SmilesCharset cs = data::default_smiles_charset();
    REQUIRE(cs.size() == 64);

    SECTION("empty string gives an all-zero matrix") {
        const ad::Tensor m = data::encode_smiles("", cs, 10);
        for (double v : m.values()) REQUIRE(v == 0.0);
    }
    SECTION("string longer than q is truncated to q one-hot columns") {
        const std::string s(30, 'C');
        const ad::Tensor m = data::encode_smiles(s, cs, 10);
        double total = 0.0;
        for (double v : m.values()) total += v;
        REQUIRE(total == 10.0);
    }
    SECTION("each used column is one-hot at the right row") {
        const int row = cs.index_of('C');
        REQUIRE(row >= 0);
        const ad::Tensor m = data::encode_smiles("CC", cs, 5);
        for (std::size_t c = 0; c < 5; ++c) {
            double col_sum = 0.0;
            for (std::size_t r = 0; r < 64; ++r) col_sum += m.at(r, c);
            if (c < 2) {
                REQUIRE(col_sum == 1.0);
                REQUIRE(m.at(static_cast<std::size_t>(row), c) == 1.0);
            } else {
                REQUIRE(col_sum == 0.0);
            }
        }
    }
    SECTION("unknown characters are skipped and counted") {
        std::size_t skipped = 0;
        const ad::Tensor m = data::encode_smiles("C\x01N", cs, 5, &skipped);
        REQUIRE(skipped == 1);
        double col0 = 0.0, col1 = 0.0;
        for (std::size_t r = 0; r < 64; ++r) {
            col0 += m.at(r, 0);
            col1 += m.at(r, 1);
        }
        REQUIRE(col0 == 1.0);
        REQUIRE(col1 == 1.0); // 'N' compacted into column 1
    }
    SECTION("charset must have 64 distinct characters") {
        REQUIRE_THROWS_AS(data::SmilesCharset("abc"), ConfigError);
        std::string dup(64, 'x');
        REQUIRE_THROWS_AS(data::SmilesCharset(dup), ConfigError);
    }
}

TEST_CASE("dataset TSV round trip and errors") {
    TempDir tmp;
    SECTION("synthetic dataset round-trips through TSV") {
        testsupport::SyntheticSpec spec;
        spec.n_drugs = 12;
        const data::Dataset ds = testsupport::make_clustered_dataset(spec);
        testsupport::write_dataset_tsv(ds, tmp.file("drugs.tsv"), tmp.file("ddis.tsv"));
        const data::Dataset loaded = data::load_dataset(tmp.file("drugs.tsv"), tmp.file("ddis.tsv"));
        REQUIRE(loaded.drug_count() == ds.drug_count());
        REQUIRE(loaded.ddi_count() == ds.ddi_count());
        REQUIRE(loaded.n_types <= ds.n_types);
        for (std::size_t i = 0; i < ds.drug_count(); ++i) {
            REQUIRE(loaded.drugs[i].id == ds.drugs[i].id);
            REQUIRE(loaded.drugs[i].descriptors == ds.drugs[i].descriptors);
            REQUIRE(loaded.drugs[i].smiles == ds.drugs[i].smiles);
        }
        for (std::size_t i = 0; i < ds.ddi_count(); ++i) {
            REQUIRE(loaded.ddis[i].a == ds.ddis[i].a);
            REQUIRE(loaded.ddis[i].b == ds.ddis[i].b);
            REQUIRE(loaded.ddis[i].type == ds.ddis[i].type);
        }
    }
    SECTION("parse errors carry line numbers") {
        {
            std::ofstream f(tmp.file("bad_drugs.tsv"));
            f << "drug_id\tsubstructure\tenzyme\ttarget\tsmiles\n";
            f << "d1\ts1\te1\tt1\tCC\n";
            f << "d2\ts1\te1\n"; // too few columns on line 3
        }
        try {
            data::load_drugs_tsv(tmp.file("bad_drugs.tsv"));
            FAIL("expected ParseError");
        } catch (const data::ParseError& e) {
            REQUIRE(e.line() == 3);
        }
    }
    SECTION("duplicate drug ids rejected") {
        std::ofstream f(tmp.file("dup.tsv"));
        f << "drug_id\tsubstructure\tenzyme\ttarget\tsmiles\n";
        f << "d1\ta\tb\tc\tCC\n";
        f << "d1\ta\tb\tc\tCC\n";
        f.close();
        REQUIRE_THROWS_AS(data::load_drugs_tsv(tmp.file("dup.tsv")), data::ParseError);
    }
    SECTION("ddis referencing unknown drugs or self rejected") {
        {
            std::ofstream f(tmp.file("drugs.tsv"));
            f << "drug_id\tsubstructure\tenzyme\ttarget\tsmiles\n";
            f << "d1\ta\tb\tc\tCC\n";
            f << "d2\ta\tb\tc\tCC\n";
        }
        {
            std::ofstream f(tmp.file("bad1.tsv"));
            f << "drug_id_a\tdrug_id_b\tevent_type\n";
            f << "d1\tnope\t0\n";
        }
        REQUIRE_THROWS_AS(data::load_dataset(tmp.file("drugs.tsv"), tmp.file("bad1.tsv")),
                          data::ParseError);
        {
            std::ofstream f(tmp.file("bad2.tsv"));
            f << "drug_id_a\tdrug_id_b\tevent_type\n";
            f << "d1\td1\t0\n";
        }
        REQUIRE_THROWS_AS(data::load_dataset(tmp.file("drugs.tsv"), tmp.file("bad2.tsv")),
                          data::ParseError);
        {
            std::ofstream f(tmp.file("bad3.tsv"));
            f << "drug_id_a\tdrug_id_b\tevent_type\n";
            f << "d1\td2\t0\n";
            f << "d2\td1\t1\n"; // same unordered pair twice
        }
        REQUIRE_THROWS_AS(data::load_dataset(tmp.file("drugs.tsv"), tmp.file("bad3.tsv")),
                          data::ParseError);
    }
    SECTION("empty descriptor cells parse as empty sets") {
        std::ofstream f(tmp.file("drugs.tsv"));
        f << "drug_id\tsubstructure\tenzyme\ttarget\tsmiles\n";
        f << "d1\t\t\t\t\n";
        f.close();
        const auto drugs = data::load_drugs_tsv(tmp.file("drugs.tsv"));
        REQUIRE(drugs.size() == 1);
        for (const auto& set : drugs[0].descriptors) REQUIRE(set.empty());
        REQUIRE(drugs[0].smiles.empty());
    }
}

TEST_CASE("charset file loading") {
    TempDir tmp;
    const data::SmilesCharset def = data::default_smiles_charset();
    {
        std::ofstream f(tmp.file("charset.txt"));
        for (char c : def.chars) f << c << "\n";
    }
    const data::SmilesCharset loaded = data::load_charset(tmp.file("charset.txt"));
    REQUIRE(loaded.chars == def.chars);

    {
        std::ofstream f(tmp.file("bad.txt"));
        f << "ab\n";
    }
    REQUIRE_THROWS_AS(data::load_charset(tmp.file("bad.txt")), data::ParseError);
}
