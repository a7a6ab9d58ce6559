#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ragseco/tensor.hpp"

namespace ragseco::ad {

// Coordinate-list sparse matrix with sorted, deduplicated entries.
// Weights are non-trainable constants; gradients never flow into them.
class SparseMatrix {
public:
    struct Entry {
        std::size_t row;
        std::size_t col;
        double weight;
    };

    SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

    // Coalesces duplicate coordinates by summing their weights.
    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                      std::vector<Entry> entries) {
        for (const Entry& e : entries) {
            if (e.row >= rows || e.col >= cols)
                throw ShapeError("sparse entry (" + std::to_string(e.row) + "," +
                                 std::to_string(e.col) + ") out of range for " +
                                 std::to_string(rows) + "x" + std::to_string(cols));
            if (!std::isfinite(e.weight))
                throw ContractError("sparse entry weight is not finite");
        }
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        SparseMatrix m(rows, cols);
        for (const Entry& e : entries) {
            if (!m.entries_.empty() && m.entries_.back().row == e.row &&
                m.entries_.back().col == e.col) {
                m.entries_.back().weight += e.weight;
            } else {
                m.entries_.push_back(e);
            }
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

    double at(std::size_t r, std::size_t c) const {
        auto it = std::lower_bound(entries_.begin(), entries_.end(), Entry{r, c, 0.0},
                                   [](const Entry& a, const Entry& b) {
                                       return a.row != b.row ? a.row < b.row : a.col < b.col;
                                   });
        if (it != entries_.end() && it->row == r && it->col == c) return it->weight;
        return 0.0;
    }

    Tensor to_dense() const {
        Tensor d = Tensor::zeros({rows_, cols_});
        for (const Entry& e : entries_) d.at(e.row, e.col) = e.weight;
        return d;
    }

    std::vector<double> row_sums() const {
        std::vector<double> sums(rows_, 0.0);
        for (const Entry& e : entries_) sums[e.row] += e.weight;
        return sums;
    }

    // Applies f(row, col, weight) -> new weight to every entry.
    template <typename F>
    SparseMatrix map_weights(F f) const {
        SparseMatrix out(rows_, cols_);
        out.entries_.reserve(entries_.size());
        for (const Entry& e : entries_)
            out.entries_.push_back({e.row, e.col, f(e.row, e.col, e.weight)});
        return out;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<Entry> entries_; // sorted row-major, no duplicates
};

} // namespace ragseco::ad
