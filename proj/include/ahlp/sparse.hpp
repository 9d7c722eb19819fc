#pragma once

#include <algorithm>
#include <cassert>
#include <span>

#include "ahlp/core.hpp"

namespace ahlp {

struct Entry {
    index_t row = 0;
    index_t col = 0;
    double value = 0.0;

    friend bool operator==(const Entry&, const Entry&) = default;
};

/// Rectangular sparse matrix in coordinate form. Canonical form is sorted by
/// (row, col) with no duplicates and no explicit zeros; validation reports
/// violations instead of fixing them, so construction does not canonicalize.
struct SparseBlock {
    index_t rows = 0;
    index_t cols = 0;
    std::vector<Entry> entries;

    SparseBlock() = default;
    SparseBlock(index_t r, index_t c) : rows(r), cols(c) {}

    void add(index_t r, index_t c, double v) { entries.push_back({r, c, v}); }
    index_t nnz() const { return static_cast<index_t>(entries.size()); }
    bool empty() const { return entries.empty(); }

    void sort_canonical() {
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
    }

    /// y += alpha * A x
    void multiply_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const {
        assert(static_cast<index_t>(x.size()) == cols && static_cast<index_t>(y.size()) == rows);
        for (const Entry& e : entries) y[e.row] += alpha * e.value * x[e.col];
    }

    /// y += alpha * A^T x
    void multiply_transpose_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const {
        assert(static_cast<index_t>(x.size()) == rows && static_cast<index_t>(y.size()) == cols);
        for (const Entry& e : entries) y[e.col] += alpha * e.value * x[e.row];
    }

    friend bool operator==(const SparseBlock&, const SparseBlock&) = default;
};

/// Compressed-column rectangular matrix, sorted row indices per column.
struct CscMatrix {
    index_t rows = 0;
    index_t cols = 0;
    std::vector<index_t> col_ptr;   // size cols + 1
    std::vector<index_t> row_index; // size nnz
    std::vector<double> values;     // size nnz

    CscMatrix() = default;

    static CscMatrix from_block(const SparseBlock& b) {
        CscMatrix m;
        m.rows = b.rows;
        m.cols = b.cols;
        m.col_ptr.assign(static_cast<size_t>(b.cols) + 1, 0);
        for (const Entry& e : b.entries) ++m.col_ptr[static_cast<size_t>(e.col) + 1];
        for (index_t j = 0; j < b.cols; ++j) m.col_ptr[static_cast<size_t>(j) + 1] += m.col_ptr[static_cast<size_t>(j)];
        m.row_index.resize(b.entries.size());
        m.values.resize(b.entries.size());
        std::vector<index_t> next(m.col_ptr.begin(), m.col_ptr.end() - 1);
        for (const Entry& e : b.entries) {
            index_t p = next[static_cast<size_t>(e.col)]++;
            m.row_index[static_cast<size_t>(p)] = e.row;
            m.values[static_cast<size_t>(p)] = e.value;
        }
        for (index_t j = 0; j < m.cols; ++j) {
            auto b0 = m.col_ptr[static_cast<size_t>(j)], e0 = m.col_ptr[static_cast<size_t>(j) + 1];
            std::vector<std::pair<index_t, double>> tmp;
            tmp.reserve(static_cast<size_t>(e0 - b0));
            for (index_t p = b0; p < e0; ++p) tmp.emplace_back(m.row_index[static_cast<size_t>(p)], m.values[static_cast<size_t>(p)]);
            std::sort(tmp.begin(), tmp.end(), [](auto& a, auto& b2) { return a.first < b2.first; });
            for (index_t p = b0; p < e0; ++p) {
                m.row_index[static_cast<size_t>(p)] = tmp[static_cast<size_t>(p - b0)].first;
                m.values[static_cast<size_t>(p)] = tmp[static_cast<size_t>(p - b0)].second;
            }
        }
        return m;
    }

    index_t nnz() const { return static_cast<index_t>(row_index.size()); }

    void multiply_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const {
        for (index_t j = 0; j < cols; ++j) {
            const double xj = alpha * x[static_cast<size_t>(j)];
            if (xj == 0.0) continue;
            for (index_t p = col_ptr[static_cast<size_t>(j)]; p < col_ptr[static_cast<size_t>(j) + 1]; ++p)
                y[static_cast<size_t>(row_index[static_cast<size_t>(p)])] += values[static_cast<size_t>(p)] * xj;
        }
    }

    void multiply_transpose_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const {
        for (index_t j = 0; j < cols; ++j) {
            double sum = 0.0;
            for (index_t p = col_ptr[static_cast<size_t>(j)]; p < col_ptr[static_cast<size_t>(j) + 1]; ++p)
                sum += values[static_cast<size_t>(p)] * x[static_cast<size_t>(row_index[static_cast<size_t>(p)])];
            y[static_cast<size_t>(j)] += alpha * sum;
        }
    }
};

/// Symmetric sparse matrix, lower triangle only, compressed columns.
struct SymSparseMatrix {
    index_t order = 0;
    std::vector<index_t> col_ptr;
    std::vector<index_t> row_index;
    std::vector<double> values;

    SymSparseMatrix() = default;
    explicit SymSparseMatrix(index_t n) : order(n), col_ptr(static_cast<size_t>(n) + 1, 0) {}

    /// Build from lower-triangle triplets (row >= col required).
    static SymSparseMatrix from_triplets(index_t n, std::vector<Entry> entries) {
        for (const Entry& e : entries)
            if (e.row < e.col) throw invalid_argument_error("lower triangle required: entry above diagonal");
        SparseBlock b(n, n);
        b.entries = std::move(entries);
        CscMatrix c = CscMatrix::from_block(b);
        SymSparseMatrix s;
        s.order = n;
        s.col_ptr = std::move(c.col_ptr);
        s.row_index = std::move(c.row_index);
        s.values = std::move(c.values);
        return s;
    }

    index_t nnz_lower() const { return static_cast<index_t>(row_index.size()); }

    /// y += alpha * K x using symmetric expansion of the lower triangle.
    void multiply_add(std::span<const double> x, std::span<double> y, double alpha = 1.0) const {
        for (index_t j = 0; j < order; ++j) {
            const double xj = x[static_cast<size_t>(j)];
            double diag_and_upper = 0.0;
            for (index_t p = col_ptr[static_cast<size_t>(j)]; p < col_ptr[static_cast<size_t>(j) + 1]; ++p) {
                const index_t i = row_index[static_cast<size_t>(p)];
                const double v = values[static_cast<size_t>(p)];
                if (i == j) {
                    diag_and_upper += v * xj;
                } else {
                    y[static_cast<size_t>(i)] += alpha * v * xj;
                    diag_and_upper += v * x[static_cast<size_t>(i)];
                }
            }
            y[static_cast<size_t>(j)] += alpha * diag_and_upper;
        }
    }
};

inline double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double two_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace ahlp
