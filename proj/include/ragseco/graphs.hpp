#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "ragseco/data.hpp"
#include "ragseco/sparse.hpp"
#include "ragseco/tensor.hpp"

namespace ragseco::graphs {

using ad::SparseMatrix;
using ad::Tensor;

// Multi-relational DDI graph: one symmetric binary N x N matrix per event
// type, plus R_i = the number of relations each drug participates in.
struct MultiRelAdjacency {
    std::size_t n_drugs = 0;
    std::vector<SparseMatrix> relations;
    std::vector<int> relation_counts; // R_i per drug
};

inline MultiRelAdjacency build_ddi_adjacency(std::span<const data::Ddi> train_ddis,
                                             std::size_t n_drugs, std::size_t n_types) {
    MultiRelAdjacency adj;
    adj.n_drugs = n_drugs;
    adj.relation_counts.assign(n_drugs, 0);
    std::vector<std::set<std::pair<std::uint32_t, std::uint32_t>>> edges(n_types);
    for (const data::Ddi& d : train_ddis) {
        if (d.a >= n_drugs || d.b >= n_drugs)
            throw DataError("ddi endpoint out of range: (" + std::to_string(d.a) + "," +
                            std::to_string(d.b) + ")");
        if (d.type >= n_types)
            throw DataError("ddi relation " + std::to_string(d.type) + " out of range (R=" +
                            std::to_string(n_types) + ")");
        if (d.a == d.b)
            throw DataError("self-loop ddi on drug " + std::to_string(d.a));
        edges[d.type].insert({std::min(d.a, d.b), std::max(d.a, d.b)});
    }
    adj.relations.reserve(n_types);
    for (std::size_t r = 0; r < n_types; ++r) {
        std::vector<SparseMatrix::Entry> entries;
        entries.reserve(edges[r].size() * 2);
        std::vector<char> touched(n_drugs, 0);
        for (const auto& [a, b] : edges[r]) {
            entries.push_back({a, b, 1.0});
            entries.push_back({b, a, 1.0});
            touched[a] = 1;
            touched[b] = 1;
        }
        for (std::size_t i = 0; i < n_drugs; ++i)
            if (touched[i]) adj.relation_counts[i] += 1;
        adj.relations.push_back(SparseMatrix::from_triplets(n_drugs, n_drugs, std::move(entries)));
    }
    return adj;
}

// Symmetric normalization D^{-1/2} A D^{-1/2}; rows and columns of
// zero-degree nodes map to zero.
inline SparseMatrix normalize_adjacency(const SparseMatrix& a) {
    if (a.rows() != a.cols())
        throw ContractError("normalize_adjacency: matrix must be square");
    for (const auto& e : a.entries()) {
        if (e.weight < 0.0) throw ContractError("normalize_adjacency: negative weight");
        if (a.at(e.col, e.row) != e.weight)
            throw ContractError("normalize_adjacency: matrix is not symmetric");
    }
    const std::vector<double> deg = a.row_sums();
    std::vector<double> inv_sqrt(deg.size(), 0.0);
    for (std::size_t i = 0; i < deg.size(); ++i)
        if (deg[i] > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);
    return a.map_weights([&](std::size_t r, std::size_t c, double w) {
        return w * inv_sqrt[r] * inv_sqrt[c];
    });
}

inline Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw ContractError("normalize_adjacency: matrix must be square");
    const std::size_t n = a.rows();
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double w = a.at(i, j);
            if (w < 0.0) throw ContractError("normalize_adjacency: negative weight");
            if (a.at(j, i) != w) throw ContractError("normalize_adjacency: matrix is not symmetric");
            deg[i] += w;
        }
    std::vector<double> inv_sqrt(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (deg[i] > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);
    Tensor out = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = a.at(i, j) * inv_sqrt[i] * inv_sqrt[j];
    return out;
}

inline Tensor dense_identity(std::size_t n) {
    Tensor id = Tensor::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) id.at(i, i) = 1.0;
    return id;
}

inline Tensor dense_product(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (k != b.rows()) throw ShapeError("dense_product: inner dimensions differ");
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a.values()[i * k + p];
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j)
                out.values()[i * n + j] += aip * b.values()[p * n + j];
        }
    return out;
}

inline Tensor matrix_power(const Tensor& a, int n) {
    if (a.rank() != 2 || a.rows() != a.cols())
        throw ContractError("matrix_power: matrix must be square");
    if (n < 0) throw ContractError("matrix_power: exponent must be >= 0");
    Tensor result = dense_identity(a.rows());
    for (int i = 0; i < n; ++i) result = dense_product(result, a);
    return result;
}

// Memoizes powers per (matrix identity, exponent).
class PowerCache {
public:
    Tensor get(const Tensor& base, int n) {
        const auto key = std::make_pair(base.node_id(), n);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        Tensor p = matrix_power(base, n);
        cache_.emplace(key, p);
        return p;
    }

private:
    std::map<std::pair<const void*, int>, Tensor> cache_;
};

// Multi-attribute drug-drug similarity graph: dense weighted symmetric
// matrices, one per attribute, entries equal to the Jaccard blocks of X.
struct SimilarityAdjacency {
    Tensor substructure;
    Tensor enzyme;
    Tensor target;

    const Tensor& attribute(std::size_t a) const {
        switch (a) {
            case data::kSubstructure: return substructure;
            case data::kEnzyme: return enzyme;
            case data::kTarget: return target;
        }
        throw ContractError("SimilarityAdjacency: bad attribute index");
    }
};

inline SimilarityAdjacency build_dds_adjacency(const data::Dataset& ds) {
    return SimilarityAdjacency{
        data::attribute_similarity_matrix(ds, data::kSubstructure),
        data::attribute_similarity_matrix(ds, data::kEnzyme),
        data::attribute_similarity_matrix(ds, data::kTarget),
    };
}

} // namespace ragseco::graphs
