#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "hidemix/sparse.hpp"

namespace hidemix {

struct SingularMatrixError : std::runtime_error {
    explicit SingularMatrixError(const std::string& what, int pivot = -1)
        : std::runtime_error(what), pivot_index(pivot) {}
    int pivot_index;
};

// Sparse LU with partial pivoting and a fixed fill-reducing (COLAMD) ordering.
// Factorization and solves are sequential, so results are bitwise reproducible
// across runs and worker counts.
class SparseLU {
  public:
    explicit SparseLU(const SparseMatrix& a) {
        if (a.rows != a.cols) throw std::invalid_argument("SparseLU: matrix must be square");
        n_ = a.rows;
        Eigen::SparseMatrix<double> m(a.rows, a.cols);
        {
            std::vector<Eigen::Triplet<double>> trip;
            trip.reserve(a.nnz());
            for (int i = 0; i < a.rows; ++i)
                for (int p = a.row_ptr[static_cast<size_t>(i)]; p < a.row_ptr[static_cast<size_t>(i) + 1]; ++p)
                    trip.emplace_back(i, a.col_idx[static_cast<size_t>(p)], a.vals[static_cast<size_t>(p)]);
            m.setFromTriplets(trip.begin(), trip.end());
        }
        m.makeCompressed();
        lu_ = std::make_unique<Solver>();
        lu_->analyzePattern(m);
        lu_->factorize(m);
        if (lu_->info() != Eigen::Success) {
            const std::string msg = lu_->lastErrorMessage();
            int pivot = -1;
            for (size_t i = 0; i < msg.size(); ++i)
                if (std::isdigit(static_cast<unsigned char>(msg[i]))) {
                    pivot = std::atoi(msg.c_str() + i);
                    break;
                }
            throw SingularMatrixError("SparseLU: factorization failed: " + msg, pivot);
        }
    }

    int size() const { return n_; }

    std::vector<double> solve(std::span<const double> b) const {
        if (static_cast<int>(b.size()) != n_)
            throw std::invalid_argument("SparseLU::solve: dimension mismatch");
        Eigen::VectorXd rhs(n_);
        for (int i = 0; i < n_; ++i) rhs[i] = b[static_cast<size_t>(i)];
        Eigen::VectorXd x = lu_->solve(rhs);
        if (lu_->info() != Eigen::Success)
            throw SingularMatrixError("SparseLU::solve: backsubstitution failed");
        return std::vector<double>(x.data(), x.data() + n_);
    }

  private:
    using Solver = Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>;
    std::unique_ptr<Solver> lu_;
    int n_ = 0;
};

// A square sparse system assembled from named sub-blocks, with the row/column
// offsets supplied by the caller. Used for the coupled per-step solves.
class BlockSystem {
  public:
    explicit BlockSystem(int n) : n_(n), tb_(n, n) {}

    void add_block(int row_off, int col_off, const SparseMatrix& m, double scale) {
        for (int i = 0; i < m.rows; ++i)
            for (int p = m.row_ptr[static_cast<size_t>(i)]; p < m.row_ptr[static_cast<size_t>(i) + 1]; ++p)
                tb_.add(row_off + i, col_off + m.col_idx[static_cast<size_t>(p)],
                        scale * m.vals[static_cast<size_t>(p)]);
    }

    void add_transposed_block(int row_off, int col_off, const SparseMatrix& m, double scale) {
        for (int i = 0; i < m.rows; ++i)
            for (int p = m.row_ptr[static_cast<size_t>(i)]; p < m.row_ptr[static_cast<size_t>(i) + 1]; ++p)
                tb_.add(row_off + m.col_idx[static_cast<size_t>(p)], col_off + i,
                        scale * m.vals[static_cast<size_t>(p)]);
    }

    SparseMatrix build() { return tb_.build(); }
    int size() const { return n_; }

  private:
    int n_;
    TripletBuilder tb_;
};

}  // namespace hidemix
