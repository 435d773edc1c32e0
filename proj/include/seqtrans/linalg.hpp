#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace seqtrans {

// Small dense row-major matrix. Sized for the d <= 16 problems handled here;
// no attempt is made at blocking or vectorization.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> data() const noexcept { return data_; }

    Matrix transpose() const;

    friend Matrix operator*(const Matrix& a, const Matrix& b);
    friend Matrix operator+(const Matrix& a, const Matrix& b);
    friend Matrix operator-(const Matrix& a, const Matrix& b);
    friend Matrix operator*(double s, const Matrix& a);
    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

std::vector<double> multiply(const Matrix& a, std::span<const double> x);

double frobenius_norm(const Matrix& a);
double max_abs_asymmetry(const Matrix& a);

struct SymmetricEigen {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column k is the eigenvector of values[k]
};

// Cyclic Jacobi rotations. Throws ValidationError for non-square or asymmetric
// input (tolerance 1e-10 relative to the largest entry).
SymmetricEigen symmetric_eigen(const Matrix& m);

// Applies f to the eigenvalues of a symmetric matrix: V diag(f(l)) V^T.
template <class F>
Matrix spectral_apply(const SymmetricEigen& eig, F&& f) {
    const std::size_t n = eig.values.size();
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double fk = f(eig.values[k]);
        for (std::size_t i = 0; i < n; ++i) {
            const double vik = eig.vectors(i, k) * fk;
            for (std::size_t j = 0; j < n; ++j) out(i, j) += vik * eig.vectors(j, k);
        }
    }
    return out;
}

// Lower Cholesky factor. Throws NumericError when the input is not positive
// definite.
Matrix cholesky(const Matrix& spd);

// Solves spd * x = b using a Cholesky factorization.
std::vector<double> cholesky_solve(const Matrix& spd, std::span<const double> b);

// Gauss-Jordan inverse with partial pivoting. Throws NumericError on a
// (numerically) singular matrix.
Matrix inverse(const Matrix& m);

// Solves lower-triangular L x = b.
std::vector<double> forward_substitute(const Matrix& lower, std::span<const double> b);

}  // namespace seqtrans
