#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace gradflow {

/// Row-major dense matrix of doubles.
///
/// Entries are expected to be finite for weights and inputs. Gradient
/// matrices may carry NaN/Inf as diagnostics; `all_finite()` tells them apart.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool all_finite() const noexcept;

    DenseMatrix& operator+=(const DenseMatrix& other);
    DenseMatrix& operator-=(const DenseMatrix& other);
    DenseMatrix& operator*=(double s) noexcept;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(double s, DenseMatrix a);

/// Largest absolute entrywise difference; shapes must match.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row and `row_ptr.back() == values.size()`.
class CsrMatrix {
public:
    CsrMatrix() = default;
    CsrMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
              std::vector<std::size_t> col_idx, std::vector<double> values);

    /// Duplicate (row, col) entries are summed.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);
    static CsrMatrix identity(std::size_t n);
    static CsrMatrix from_dense(const DenseMatrix& dense, double drop_below = 0.0);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nnz() const noexcept { return values_.size(); }

    std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
    std::span<const std::size_t> col_idx() const noexcept { return col_idx_; }
    std::span<const double> values() const noexcept { return values_; }

    /// Entry lookup by binary search within the row; zero when not stored.
    double at(std::size_t r, std::size_t c) const;

    DenseMatrix to_dense() const;

    friend bool operator==(const CsrMatrix&, const CsrMatrix&) = default;

private:
    void validate() const;

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
};

/// Product with a fixed summation order: each output entry accumulates
/// a(i,0)*b(0,j), a(i,1)*b(1,j), ... left to right.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// Sparse-dense product; each output row sums stored entries in column order.
DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& b);

DenseMatrix transpose(const DenseMatrix& a);
CsrMatrix transpose(const CsrMatrix& a);

double frobenius_norm(const DenseMatrix& a);

/// Result of a power iteration. `converged == false` means `value` is the best
/// estimate after `iterations` steps.
struct NormEstimate {
    double value = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

inline constexpr double kDefaultNormTol = 1e-8;
inline constexpr std::size_t kDefaultNormMaxIter = 10'000;

/// Largest singular value via power iteration on aᵀa, started from the
/// normalized all-ones vector.
NormEstimate spectral_norm(const DenseMatrix& a, double tol = kDefaultNormTol,
                           std::size_t max_iter = kDefaultNormMaxIter);

/// X − 1γ with γ the row of column means.
DenseMatrix project_b(const DenseMatrix& x);

/// Operator norm of X ↦ project_b((Âᵀ)^k X) for square `adj`.
NormEstimate b_power_norm(const CsrMatrix& adj, std::size_t k, double tol = 1e-10,
                          std::size_t max_iter = kDefaultNormMaxIter);

}  // namespace gradflow
