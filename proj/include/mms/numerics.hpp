#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mms {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// a · b. Throws dimension_mismatch when a.cols != b.rows and non_finite when
// the product overflows.
Matrix matmul(const Matrix& a, const Matrix& b);

// a · bᵀ, the shape used by every affine layer here (weights stored out × in).
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Copies the listed rows of m, in order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Numerically stable softmax (max subtraction). Rejects non-finite input.
Vector softmax(std::span<const double> logits);

// log Σ exp(v), stable.
double log_sum_exp(std::span<const double> v);

// Index of the first maximal entry.
std::size_t argmax(std::span<const double> v);

// Deterministic random stream: xoshiro256** (Blackman & Vigna, 2018) seeded
// through SplitMix64. Uniform doubles take the top 53 bits; gaussians use the
// Marsaglia polar method; bounded integers use rejection so every draw is
// unbiased. Sequences are identical on every platform with IEEE doubles.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();               // [0, 1)
    double gaussian();              // N(0, 1)
    std::uint64_t below(std::uint64_t n);  // [0, n), n >= 1

    std::vector<std::size_t> permutation(std::size_t n);

    // First k entries of a uniform random permutation of 0..n-1 (partial
    // Fisher-Yates). k <= n.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// Independent seed for a named sub-stream of a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_tag);

}  // namespace mms
