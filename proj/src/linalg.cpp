#include "gradflow/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "gradflow/errors.hpp"

namespace gradflow {
namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                         shape_str(b.rows(), b.cols()));
    }
}

using Vec = std::vector<double>;

double norm2(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Vec csr_matvec(const CsrMatrix& a, const Vec& x) {
    Vec y(a.rows(), 0.0);
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto va = a.values();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) s += va[k] * x[ci[k]];
        y[i] = s;
    }
    return y;
}

Vec dense_matvec(const DenseMatrix& a, const Vec& x) {
    Vec y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        const auto r = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) s += r[k] * x[k];
        y[i] = s;
    }
    return y;
}

// aᵀx without forming the transpose.
Vec dense_matvec_t(const DenseMatrix& a, const Vec& x) {
    Vec y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * x[i];
    }
    return y;
}

void center(Vec& v) {
    if (v.empty()) return;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double& x : v) x -= mean;
}

// Power iteration for ‖M‖₂ given M·v and Mᵀ·u. Starts from the normalized
// all-ones vector, restarting once from a centered ramp if M kills it.
template <class Forward, class Adjoint>
NormEstimate power_iterate(std::size_t n, Forward forward, Adjoint adjoint, double tol, std::size_t max_iter,
                           const Vec* first_start = nullptr) {
    NormEstimate est;
    if (n == 0) {
        est.converged = true;
        return est;
    }

    std::vector<Vec> starts;
    if (first_start != nullptr) {
        starts.push_back(*first_start);
    } else {
        starts.emplace_back(n, 1.0 / std::sqrt(static_cast<double>(n)));
    }
    if (n > 1) {
        Vec ramp(n);
        for (std::size_t i = 0; i < n; ++i) ramp[i] = static_cast<double>(i);
        center(ramp);
        const double r = norm2(ramp);
        for (double& x : ramp) x /= r;
        starts.push_back(std::move(ramp));
    }

    for (const Vec& start : starts) {
        Vec v = start;
        double prev = -1.0;
        std::size_t it = 0;
        for (; it < max_iter; ++it) {
            const Vec u = forward(v);
            const double sigma = norm2(u);
            if (!(sigma > 0.0)) break;
            Vec w = adjoint(u);
            const double nw = norm2(w);
            if (!(nw > 0.0)) break;
            for (double& x : w) x /= nw;
            v = std::move(w);
            est.value = sigma;
            est.iterations += 1;
            if (prev >= 0.0 && std::abs(sigma - prev) <= tol * std::max(1.0, sigma)) {
                est.converged = true;
                return est;
            }
            prev = sigma;
        }
        if (est.value > 0.0) {
            // Ran out of iterations on a nonzero estimate.
            return est;
        }
    }
    // Every start vector was annihilated: the map is zero on their span.
    est.value = 0.0;
    est.converged = true;
    return est;
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) + " does not match " +
                         shape_str(rows, cols));
    }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool DenseMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) noexcept {
    for (double& x : data_) x *= s;
    return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = std::abs(av[i] - bv[i]);
        if (!(d <= m)) m = d;  // propagates NaN
    }
    return m;
}

CsrMatrix::CsrMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                     std::vector<std::size_t> col_idx, std::vector<double> values)
    : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
    validate();
}

void CsrMatrix::validate() const {
    if (row_ptr_.size() != rows_ + 1) throw ShapeError("CsrMatrix: row_ptr length must be rows+1");
    if (row_ptr_.front() != 0) throw ShapeError("CsrMatrix: row_ptr must start at 0");
    if (row_ptr_.back() != values_.size() || col_idx_.size() != values_.size()) {
        throw ShapeError("CsrMatrix: row_ptr/col_idx/values lengths disagree");
    }
    for (std::size_t i = 0; i < rows_; ++i) {
        if (row_ptr_[i + 1] < row_ptr_[i]) throw ShapeError("CsrMatrix: row_ptr decreasing");
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
            if (col_idx_[k] >= cols_) throw ShapeError("CsrMatrix: column index out of range");
            if (k > row_ptr_[i] && col_idx_[k] <= col_idx_[k - 1]) {
                throw ShapeError("CsrMatrix: column indices not strictly increasing in row " + std::to_string(i));
            }
        }
    }
}

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<std::size_t> row_ptr(rows + 1, 0);
    std::vector<std::size_t> col_idx;
    std::vector<double> values;
    col_idx.reserve(entries.size());
    values.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const Triplet& t = entries[k];
        if (t.row >= rows || t.col >= cols) throw ShapeError("CsrMatrix::from_triplets: index out of range");
        if (k > 0 && entries[k - 1].row == t.row && entries[k - 1].col == t.col) {
            values.back() += t.value;
            continue;
        }
        col_idx.push_back(t.col);
        values.push_back(t.value);
        row_ptr[t.row + 1] += 1;
    }
    std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());
    return CsrMatrix(rows, cols, std::move(row_ptr), std::move(col_idx), std::move(values));
}

CsrMatrix CsrMatrix::identity(std::size_t n) {
    std::vector<std::size_t> rp(n + 1), ci(n);
    std::iota(rp.begin(), rp.end(), std::size_t{0});
    std::iota(ci.begin(), ci.end(), std::size_t{0});
    return CsrMatrix(n, n, std::move(rp), std::move(ci), std::vector<double>(n, 1.0));
}

CsrMatrix CsrMatrix::from_dense(const DenseMatrix& dense, double drop_below) {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < dense.rows(); ++i) {
        for (std::size_t j = 0; j < dense.cols(); ++j) {
            const double v = dense(i, j);
            if (v != 0.0 && std::abs(v) > drop_below) t.push_back({i, j, v});
        }
    }
    return from_triplets(dense.rows(), dense.cols(), std::move(t));
}

double CsrMatrix::at(std::size_t r, std::size_t c) const {
    const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
    const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
    const auto it = std::lower_bound(first, last, c);
    if (it == last || *it != c) return 0.0;
    return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

DenseMatrix CsrMatrix::to_dense() const {
    DenseMatrix d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) d(i, col_idx_[k]) = values_[k];
    }
    return d;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
    }
    DenseMatrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    // i-k-j order: every c(i,j) still accumulates k = 0, 1, ... in sequence.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out = c.row(i).data();
        const auto ar = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = ar[k];
            const double* br = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) out[j] += aik * br[j];
        }
    }
    return c;
}

DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("spmm: " + shape_str(a.rows(), a.cols()) + " x " + shape_str(b.rows(), b.cols()));
    }
    DenseMatrix c(a.rows(), b.cols());
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto va = a.values();
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* out = c.row(i).data();
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
            const double v = va[k];
            const double* br = b.row(ci[k]).data();
            for (std::size_t j = 0; j < n; ++j) out[j] += v * br[j];
        }
    }
    return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    }
    return t;
}

CsrMatrix transpose(const CsrMatrix& a) {
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto va = a.values();
    std::vector<std::size_t> row_ptr(a.cols() + 1, 0);
    for (std::size_t c : ci) row_ptr[c + 1] += 1;
    std::partial_sum(row_ptr.begin(), row_ptr.end(), row_ptr.begin());
    std::vector<std::size_t> cursor(row_ptr.begin(), row_ptr.end() - 1);
    std::vector<std::size_t> col_idx(a.nnz());
    std::vector<double> values(a.nnz());
    // Scanning source rows in order keeps the new column indices sorted.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k) {
            const std::size_t dst = cursor[ci[k]]++;
            col_idx[dst] = i;
            values[dst] = va[k];
        }
    }
    return CsrMatrix(a.cols(), a.rows(), std::move(row_ptr), std::move(col_idx), std::move(values));
}

double frobenius_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (double x : a.values()) s += x * x;
    return std::sqrt(s);
}

NormEstimate spectral_norm(const DenseMatrix& a, double tol, std::size_t max_iter) {
    if (a.empty()) throw ShapeError("spectral_norm: empty matrix");
    NormEstimate est = power_iterate(
        a.cols(), [&](const Vec& v) { return dense_matvec(a, v); },
        [&](const Vec& u) { return dense_matvec_t(a, u); }, tol, max_iter);
    if (est.value == 0.0 && frobenius_norm(a) > 0.0) {
        // Both start vectors fell in the null space of a nonzero matrix.
        est.converged = false;
    }
    return est;
}

DenseMatrix project_b(const DenseMatrix& x) {
    if (x.rows() == 0) throw ShapeError("project_b: matrix has no rows");
    std::vector<double> mean(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        for (std::size_t j = 0; j < x.cols(); ++j) mean[j] += r[j];
    }
    const double n = static_cast<double>(x.rows());
    for (double& m : mean) m /= n;
    DenseMatrix out = x;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < out.cols(); ++j) r[j] -= mean[j];
    }
    return out;
}

NormEstimate b_power_norm(const CsrMatrix& adj, std::size_t k, double tol, std::size_t max_iter) {
    if (adj.rows() != adj.cols()) throw ShapeError("b_power_norm: adjacency must be square");
    const CsrMatrix adj_t = transpose(adj);
    auto forward = [&](const Vec& v) {
        Vec u = v;
        for (std::size_t i = 0; i < k; ++i) u = csr_matvec(adj_t, u);
        center(u);
        return u;
    };
    auto adjoint = [&](const Vec& u) {
        Vec w = u;
        center(w);
        for (std::size_t i = 0; i < k; ++i) w = csr_matvec(adj, w);
        return w;
    };
    // Symmetric graphs make the all-ones vector orthogonal to the top
    // singular vector often enough that a generic start is needed here.
    std::mt19937_64 gen(0x9e3779b97f4a7c15ULL);
    Vec start(adj.rows());
    for (double& x : start) x = static_cast<double>(gen() >> 11) * 0x1.0p-53 - 0.5;
    const double r = norm2(start);
    for (double& x : start) x /= r;
    return power_iterate(adj.rows(), forward, adjoint, tol, max_iter, &start);
}

}  // namespace gradflow
