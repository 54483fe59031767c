#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace hidemix {

// Compressed sparse row matrix. Column indices are strictly increasing within
// each row; duplicate triplets are summed at build time.
struct SparseMatrix {
    int rows = 0, cols = 0;
    std::vector<int> row_ptr;  // size rows + 1
    std::vector<int> col_idx;
    std::vector<double> vals;

    std::size_t nnz() const { return vals.size(); }

    std::vector<double> multiply(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != cols)
            throw std::invalid_argument("SparseMatrix::multiply: dimension mismatch");
        std::vector<double> y(static_cast<size_t>(rows), 0.0);
        for (int i = 0; i < rows; ++i) {
            double s = 0.0;
            for (int p = row_ptr[static_cast<size_t>(i)]; p < row_ptr[static_cast<size_t>(i) + 1]; ++p)
                s += vals[static_cast<size_t>(p)] * x[static_cast<size_t>(col_idx[static_cast<size_t>(p)])];
            y[static_cast<size_t>(i)] = s;
        }
        return y;
    }

    // y += s * A^T x  (used for the (u, div v) coupling blocks)
    void add_transpose_multiply(std::span<const double> x, double s, std::span<double> y) const {
        if (static_cast<int>(x.size()) != rows || static_cast<int>(y.size()) != cols)
            throw std::invalid_argument("SparseMatrix::add_transpose_multiply: dimension mismatch");
        for (int i = 0; i < rows; ++i) {
            const double xi = s * x[static_cast<size_t>(i)];
            if (xi == 0.0) continue;
            for (int p = row_ptr[static_cast<size_t>(i)]; p < row_ptr[static_cast<size_t>(i) + 1]; ++p)
                y[static_cast<size_t>(col_idx[static_cast<size_t>(p)])] += vals[static_cast<size_t>(p)] * xi;
        }
    }

    double entry(int i, int j) const {
        for (int p = row_ptr[static_cast<size_t>(i)]; p < row_ptr[static_cast<size_t>(i) + 1]; ++p)
            if (col_idx[static_cast<size_t>(p)] == j) return vals[static_cast<size_t>(p)];
        return 0.0;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : vals) m = std::max(m, std::abs(v));
        return m;
    }

    bool is_symmetric(double rel_tol = 1e-13) const {
        if (rows != cols) return false;
        const double scale = std::max(max_abs(), 1e-300);
        for (int i = 0; i < rows; ++i)
            for (int p = row_ptr[static_cast<size_t>(i)]; p < row_ptr[static_cast<size_t>(i) + 1]; ++p) {
                const int j = col_idx[static_cast<size_t>(p)];
                if (std::abs(vals[static_cast<size_t>(p)] - entry(j, i)) > rel_tol * scale) return false;
            }
        return true;
    }
};

// Accumulates (i, j, v) triplets and compresses to CSR. Insertion order is the
// element-loop order, so the result is identical across runs.
class TripletBuilder {
  public:
    TripletBuilder(int rows, int cols) : rows_(rows), cols_(cols) {}

    void add(int i, int j, double v) {
        entries_.push_back({i, j, v});
    }

    SparseMatrix build() {
        std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
            return a.i != b.i ? a.i < b.i : a.j < b.j;
        });
        SparseMatrix m;
        m.rows = rows_;
        m.cols = cols_;
        m.row_ptr.assign(static_cast<size_t>(rows_) + 1, 0);
        for (size_t k = 0; k < entries_.size();) {
            size_t e = k;
            double s = 0.0;
            while (e < entries_.size() && entries_[e].i == entries_[k].i && entries_[e].j == entries_[k].j)
                s += entries_[e++].v;
            m.col_idx.push_back(entries_[k].j);
            m.vals.push_back(s);
            ++m.row_ptr[static_cast<size_t>(entries_[k].i) + 1];
            k = e;
        }
        for (int i = 0; i < rows_; ++i) m.row_ptr[static_cast<size_t>(i) + 1] += m.row_ptr[static_cast<size_t>(i)];
        return m;
    }

  private:
    struct Entry {
        int i, j;
        double v;
    };
    int rows_, cols_;
    std::vector<Entry> entries_;
};

inline SparseMatrix sparse_identity(int n) {
    SparseMatrix m;
    m.rows = m.cols = n;
    m.row_ptr.resize(static_cast<size_t>(n) + 1);
    m.col_idx.resize(static_cast<size_t>(n));
    m.vals.assign(static_cast<size_t>(n), 1.0);
    for (int i = 0; i <= n; ++i) m.row_ptr[static_cast<size_t>(i)] = i;
    for (int i = 0; i < n; ++i) m.col_idx[static_cast<size_t>(i)] = i;
    return m;
}

// a + s * b, matching sparsity unions; used to combine mass and memory blocks.
inline SparseMatrix sparse_add(const SparseMatrix& a, const SparseMatrix& b, double s) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("sparse_add: dimension mismatch");
    TripletBuilder tb(a.rows, a.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int p = a.row_ptr[static_cast<size_t>(i)]; p < a.row_ptr[static_cast<size_t>(i) + 1]; ++p)
            tb.add(i, a.col_idx[static_cast<size_t>(p)], a.vals[static_cast<size_t>(p)]);
    for (int i = 0; i < b.rows; ++i)
        for (int p = b.row_ptr[static_cast<size_t>(i)]; p < b.row_ptr[static_cast<size_t>(i) + 1]; ++p)
            tb.add(i, b.col_idx[static_cast<size_t>(p)], s * b.vals[static_cast<size_t>(p)]);
    return tb.build();
}

}  // namespace hidemix
