#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ragseco/graphs.hpp"
#include "ragseco/rng.hpp"

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace ragseco;
using ad::SparseMatrix;
using ad::Tensor;

TEST_CASE("build_ddi_adjacency") {
    SECTION("empty train set") {
        const auto adj = graphs::build_ddi_adjacency({}, 4, 3);
        REQUIRE(adj.relations.size() == 3);
        for (const auto& rel : adj.relations) REQUIRE(rel.nnz() == 0);
        for (int r : adj.relation_counts) REQUIRE(r == 0);
    }
    SECTION("single edge is symmetric and counted once per relation") {
        const std::vector<data::Ddi> train{{0, 1, 2}};
        const auto adj = graphs::build_ddi_adjacency(train, 3, 3);
        REQUIRE(adj.relations[2].at(0, 1) == 1.0);
        REQUIRE(adj.relations[2].at(1, 0) == 1.0);
        REQUIRE(adj.relations[0].nnz() == 0);
        REQUIRE(adj.relation_counts[0] == 1);
        REQUIRE(adj.relation_counts[1] == 1);
        REQUIRE(adj.relation_counts[2] == 0);
    }
    SECTION("R_i counts distinct relations") {
        const std::vector<data::Ddi> train{{0, 1, 0}, {0, 2, 0}, {0, 3, 2}};
        const auto adj = graphs::build_ddi_adjacency(train, 4, 3);
        REQUIRE(adj.relation_counts[0] == 2);
    }
    SECTION("duplicate edges are idempotent") {
        const std::vector<data::Ddi> train{{0, 1, 0}, {1, 0, 0}, {0, 1, 0}};
        const auto adj = graphs::build_ddi_adjacency(train, 2, 1);
        REQUIRE(adj.relations[0].nnz() == 2);
        REQUIRE(adj.relations[0].at(0, 1) == 1.0);
    }
    SECTION("self-loop is a data error") {
        const std::vector<data::Ddi> train{{1, 1, 0}};
        REQUIRE_THROWS_AS(graphs::build_ddi_adjacency(train, 2, 1), DataError);
    }
    SECTION("permutation equivariance") {
        testsupport::SyntheticSpec spec;
        spec.n_drugs = 8;
        const data::Dataset ds = testsupport::make_clustered_dataset(spec);
        const auto adj = graphs::build_ddi_adjacency(ds.ddis, 8, ds.n_types);
        // relabel drugs by the reversal permutation
        std::vector<data::Ddi> relabeled;
        auto pi = [](std::uint32_t i) { return static_cast<std::uint32_t>(7 - i); };
        for (const data::Ddi& d : ds.ddis) relabeled.push_back({pi(d.a), pi(d.b), d.type});
        const auto adj2 = graphs::build_ddi_adjacency(relabeled, 8, ds.n_types);
        for (std::size_t r = 0; r < ds.n_types; ++r)
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j)
                    REQUIRE(adj.relations[r].at(i, j) == adj2.relations[r].at(pi(i), pi(j)));
        for (std::size_t i = 0; i < 8; ++i)
            REQUIRE(adj.relation_counts[i] == adj2.relation_counts[pi(i)]);
    }
}

TEST_CASE("normalize_adjacency") {
    SECTION("two-node single edge stays unchanged (degrees 1,1)") {
        auto a = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
        const auto norm = graphs::normalize_adjacency(a);
        REQUIRE(norm.at(0, 1) == 1.0);
        REQUIRE(norm.at(1, 0) == 1.0);
    }
    SECTION("weighted edge 2 normalizes to 1") {
        auto a = SparseMatrix::from_triplets(2, 2, {{0, 1, 2.0}, {1, 0, 2.0}});
        const auto norm = graphs::normalize_adjacency(a);
        REQUIRE(norm.at(0, 1) == Catch::Approx(1.0).margin(1e-15));
    }
    SECTION("isolated node row and column stay zero") {
        auto a = SparseMatrix::from_triplets(3, 3, {{0, 1, 1.0}, {1, 0, 1.0}});
        const auto norm = graphs::normalize_adjacency(a);
        for (std::size_t j = 0; j < 3; ++j) {
            REQUIRE(norm.at(2, j) == 0.0);
            REQUIRE(norm.at(j, 2) == 0.0);
        }
    }
    SECTION("hand-normalized 5x5 instance to 1e-12") {
        // path graph 0-1-2-3-4 plus chord 1-3; degrees 1,3,2,3,1
        std::vector<SparseMatrix::Entry> entries;
        auto link = [&](std::size_t i, std::size_t j) {
            entries.push_back({i, j, 1.0});
            entries.push_back({j, i, 1.0});
        };
        link(0, 1);
        link(1, 2);
        link(2, 3);
        link(3, 4);
        link(1, 3);
        const auto norm = graphs::normalize_adjacency(SparseMatrix::from_triplets(5, 5, entries));
        const double d[5] = {1, 3, 2, 3, 1};
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                const double a_ij =
                    (i + 1 == j || j + 1 == i || (i == 1 && j == 3) || (i == 3 && j == 1)) ? 1.0
                                                                                           : 0.0;
                const double expected = a_ij / std::sqrt(d[i] * d[j]);
                REQUIRE(std::fabs(norm.at(i, j) - expected) <= 1e-12);
            }
    }
    SECTION("asymmetric or negative input rejected") {
        auto bad = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}});
        REQUIRE_THROWS_AS(graphs::normalize_adjacency(bad), ContractError);
        auto neg = SparseMatrix::from_triplets(2, 2, {{0, 1, -1.0}, {1, 0, -1.0}});
        REQUIRE_THROWS_AS(graphs::normalize_adjacency(neg), ContractError);
        Tensor rect = Tensor::zeros({2, 3});
        REQUIRE_THROWS_AS(graphs::normalize_adjacency(rect), ContractError);
    }
    SECTION("scale invariance: normalize(c*A) == normalize(A)") {
        rng::Engine rng(31);
        const std::size_t n = 12;
        Tensor a = Tensor::zeros({n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                if (!rng.bernoulli(0.4)) continue;
                const double w = rng.uniform(0.1, 2.0);
                a.at(i, j) = w;
                a.at(j, i) = w;
            }
        Tensor scaled = Tensor::zeros({n, n});
        for (std::size_t i = 0; i < n * n; ++i) scaled.values()[i] = 3.7 * a.values()[i];
        const Tensor na = graphs::normalize_adjacency(a);
        const Tensor ns = graphs::normalize_adjacency(scaled);
        for (std::size_t i = 0; i < n * n; ++i)
            REQUIRE(na.values()[i] == Catch::Approx(ns.values()[i]).margin(1e-13));
    }
    SECTION("symmetric input gives symmetric output with spectral radius <= 1") {
        rng::Engine rng(77);
        for (int trial = 0; trial < 5; ++trial) {
            const std::size_t n = 5 + rng.uniform_index(26); // up to 30
            Tensor a = Tensor::zeros({n, n});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i; j < n; ++j) {
                    if (!rng.bernoulli(0.3)) continue;
                    const double w = rng.uniform(0.0, 3.0);
                    a.at(i, j) = w;
                    a.at(j, i) = w;
                }
            const Tensor norm = graphs::normalize_adjacency(a);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) REQUIRE(norm.at(i, j) == norm.at(j, i));
            const double radius = testsupport::spectral_radius(norm.values(), n);
            REQUIRE(radius <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("matrix_power") {
    SECTION("power 0 is the identity") {
        Tensor a = Tensor::from({2, 2}, {0, 1, 1, 0});
        const Tensor p = graphs::matrix_power(a, 0);
        REQUIRE(p.values() == std::vector<double>{1, 0, 0, 1});
    }
    SECTION("power 1 is unchanged") {
        Tensor a = Tensor::from({2, 2}, {0.5, 0.25, 0.25, 0.5});
        REQUIRE(graphs::matrix_power(a, 1).values() == a.values());
    }
    SECTION("permutation matrix squared is identity") {
        Tensor a = Tensor::from({2, 2}, {0, 1, 1, 0});
        REQUIRE(graphs::matrix_power(a, 2).values() == std::vector<double>{1, 0, 0, 1});
    }
    SECTION("negative exponent rejected") {
        Tensor a = Tensor::from({1, 1}, {1});
        REQUIRE_THROWS_AS(graphs::matrix_power(a, -1), ContractError);
    }
    SECTION("powers of a normalized matrix stay bounded (n <= 5)") {
        rng::Engine rng(5);
        const std::size_t n = 10;
        Tensor a = Tensor::zeros({n, n});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                if (!rng.bernoulli(0.5)) continue;
                const double w = rng.uniform(0.0, 2.0);
                a.at(i, j) = w;
                a.at(j, i) = w;
            }
        const Tensor norm = graphs::normalize_adjacency(a);
        std::vector<double> x(n);
        for (double& v : x) v = rng.uniform(-1, 1);
        double x_inf = 0.0;
        for (double v : x) x_inf = std::max(x_inf, std::fabs(v));
        for (int p = 0; p <= 5; ++p) {
            const Tensor ap = graphs::matrix_power(norm, p);
            double y_inf = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += ap.at(i, j) * x[j];
                y_inf = std::max(y_inf, std::fabs(acc));
            }
            REQUIRE(y_inf <= n * x_inf + 1e-9);
        }
    }
    SECTION("cache returns the same tensor for repeated queries") {
        graphs::PowerCache cache;
        Tensor a = Tensor::from({2, 2}, {0, 1, 1, 0});
        const Tensor p1 = cache.get(a, 3);
        const Tensor p2 = cache.get(a, 3);
        REQUIRE(p1.same_node(p2));
    }
}

TEST_CASE("build_dds_adjacency") {
    SECTION("matches per-attribute jaccard matrices used for X") {
        testsupport::SyntheticSpec spec;
        spec.n_drugs = 9;
        const data::Dataset ds = testsupport::make_clustered_dataset(spec);
        const auto dds = graphs::build_dds_adjacency(ds);
        const Tensor x = data::build_initial_features(ds);
        const std::size_t n = ds.drug_count();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                REQUIRE(dds.substructure.at(i, j) == x.at(i, 0 * n + j));
                REQUIRE(dds.enzyme.at(i, j) == x.at(i, 1 * n + j));
                REQUIRE(dds.target.at(i, j) == x.at(i, 2 * n + j));
            }
        // enzyme block equals direct set counting
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                REQUIRE(dds.enzyme.at(i, j) ==
                        testsupport::enumerate_jaccard(ds.drugs[i].descriptors[data::kEnzyme],
                                                       ds.drugs[j].descriptors[data::kEnzyme]));
    }
    SECTION("identical substructure sets give an all-ones matrix") {
        data::Dataset ds;
        for (int i = 0; i < 3; ++i) {
            data::DrugRecord rec;
            rec.id = "d" + std::to_string(i);
            rec.descriptors[data::kSubstructure] = {"s1", "s2"};
            ds.drugs.push_back(rec);
        }
        const auto dds = graphs::build_dds_adjacency(ds);
        for (double v : dds.substructure.values()) REQUIRE(v == 1.0);
    }
    SECTION("drug with all-empty descriptor sets has zero rows including diagonal") {
        data::Dataset ds;
        data::DrugRecord a;
        a.id = "a";
        a.descriptors[data::kSubstructure] = {"s"};
        data::DrugRecord b;
        b.id = "b"; // everything empty
        ds.drugs = {a, b};
        const auto dds = graphs::build_dds_adjacency(ds);
        REQUIRE(dds.substructure.at(0, 0) == 1.0);
        REQUIRE(dds.substructure.at(1, 1) == 0.0);
        REQUIRE(dds.substructure.at(0, 1) == 0.0);
        REQUIRE(dds.enzyme.at(0, 0) == 0.0);
    }
}
