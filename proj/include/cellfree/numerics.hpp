#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "cellfree/errors.hpp"

namespace cellfree {

using Complex = std::complex<double>;

// Dense complex vector. Thin owner over contiguous storage.
class CVector {
public:
    CVector() = default;
    explicit CVector(std::size_t len, Complex fill = {}) : data_(len, fill) {}
    explicit CVector(std::vector<Complex> data) : data_(std::move(data)) {}

    std::size_t size() const noexcept { return data_.size(); }
    Complex& operator[](std::size_t i) { return data_[i]; }
    const Complex& operator[](std::size_t i) const { return data_[i]; }

    std::span<Complex> span() noexcept { return data_; }
    std::span<const Complex> span() const noexcept { return data_; }
    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    friend bool operator==(const CVector&, const CVector&) = default;

private:
    std::vector<Complex> data_;
};

// a^H b
inline Complex dot(std::span<const Complex> a, std::span<const Complex> b) {
    if (a.size() != b.size()) throw ParameterError("dot: length mismatch");
    Complex acc{};
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
    return acc;
}

inline double squared_norm(std::span<const Complex> a) {
    double acc = 0.0;
    for (const auto& x : a) acc += std::norm(x);
    return acc;
}

// Dense complex matrix, column-major. Columns are contiguous so that channel
// vectors can be viewed as spans without copying.
class CMatrix {
public:
    CMatrix() = default;
    CMatrix(std::size_t rows, std::size_t cols, Complex fill = {})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static CMatrix identity(std::size_t n) {
        CMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static CMatrix diagonal(std::span<const double> d) {
        CMatrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }

    // Stack vectors as columns. All must share one length.
    static CMatrix from_columns(std::span<const CVector> cols) {
        if (cols.empty()) return {};
        CMatrix m(cols.front().size(), cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (cols[c].size() != m.rows_) throw ParameterError("from_columns: ragged columns");
            std::copy(cols[c].begin(), cols[c].end(), m.col(c).begin());
        }
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    Complex& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
    const Complex& operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }

    std::span<Complex> col(std::size_t c) { return {data_.data() + c * rows_, rows_}; }
    std::span<const Complex> col(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }

    CVector column_vector(std::size_t c) const {
        auto s = col(c);
        return CVector(std::vector<Complex>(s.begin(), s.end()));
    }

    // this^H * other
    CMatrix adjoint_times(const CMatrix& other) const {
        if (rows_ != other.rows_) throw ParameterError("adjoint_times: row mismatch");
        CMatrix out(cols_, other.cols_);
        for (std::size_t j = 0; j < other.cols_; ++j)
            for (std::size_t i = 0; i < cols_; ++i) out(i, j) = dot(col(i), other.col(j));
        return out;
    }

    CMatrix operator*(const CMatrix& other) const {
        if (cols_ != other.rows_) throw ParameterError("matmul: inner dimension mismatch");
        CMatrix out(rows_, other.cols_);
        for (std::size_t j = 0; j < other.cols_; ++j) {
            auto dst = out.col(j);
            for (std::size_t k = 0; k < cols_; ++k) {
                const Complex b = other(k, j);
                if (b == Complex{}) continue;
                auto src = col(k);
                for (std::size_t i = 0; i < rows_; ++i) dst[i] += src[i] * b;
            }
        }
        return out;
    }

    CMatrix adjoint() const {
        CMatrix out(cols_, rows_);
        for (std::size_t c = 0; c < cols_; ++c)
            for (std::size_t r = 0; r < rows_; ++r) out(c, r) = std::conj((*this)(r, c));
        return out;
    }

    void add_to_diagonal(double v) {
        const std::size_t n = std::min(rows_, cols_);
        for (std::size_t i = 0; i < n; ++i) (*this)(i, i) += v;
    }

    double frobenius_norm() const { return std::sqrt(squared_norm(data_)); }

    friend CMatrix operator-(const CMatrix& a, const CMatrix& b) {
        if (a.rows_ != b.rows_ || a.cols_ != b.cols_) throw ParameterError("subtract: shape mismatch");
        CMatrix out = a;
        for (std::size_t i = 0; i < out.data_.size(); ++i) out.data_[i] -= b.data_[i];
        return out;
    }

    friend bool operator==(const CMatrix&, const CMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Complex> data_;
};

// A^H A
inline CMatrix gram(const CMatrix& a) {
    CMatrix g(a.cols(), a.cols());
    for (std::size_t j = 0; j < a.cols(); ++j) {
        for (std::size_t i = 0; i <= j; ++i) {
            const Complex v = dot(a.col(i), a.col(j));
            g(i, j) = v;
            g(j, i) = std::conj(v);
        }
        g(j, j) = g(j, j).real();
    }
    return g;
}

// Solves A X = B for Hermitian positive definite A by Cholesky (A = R^H R).
// A pivot below 1e-12 * trace(A)/n is treated as singular.
inline CMatrix solve_hpd(const CMatrix& a, const CMatrix& b) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw ParameterError("solve_hpd: matrix is not square");
    if (b.rows() != n) throw ParameterError("solve_hpd: right-hand side has wrong row count");
    if (n == 0) throw ParameterError("solve_hpd: empty system");

    double trace = 0.0;
    for (std::size_t i = 0; i < n; ++i) trace += a(i, i).real();
    const double tol = 1e-12 * std::abs(trace) / static_cast<double>(n);

    // Upper-triangular factor, stored in the upper part of r.
    CMatrix r(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            Complex s = a(i, j);
            for (std::size_t k = 0; k < i; ++k) s -= std::conj(r(k, i)) * r(k, j);
            r(i, j) = s / r(i, i).real();
        }
        double d = a(j, j).real();
        for (std::size_t k = 0; k < j; ++k) d -= std::norm(r(k, j));
        if (!(d > tol) || !std::isfinite(d))
            throw NumericalError("solve_hpd: matrix is not positive definite at pivot " + std::to_string(j),
                                 static_cast<std::ptrdiff_t>(j));
        r(j, j) = std::sqrt(d);
    }

    CMatrix x = b;
    for (std::size_t c = 0; c < x.cols(); ++c) {
        auto col = x.col(c);
        // R^H y = b
        for (std::size_t i = 0; i < n; ++i) {
            Complex s = col[i];
            for (std::size_t k = 0; k < i; ++k) s -= std::conj(r(k, i)) * col[k];
            col[i] = s / r(i, i).real();
        }
        // R x = y
        for (std::size_t i = n; i-- > 0;) {
            Complex s = col[i];
            for (std::size_t k = i + 1; k < n; ++k) s -= r(i, k) * col[k];
            col[i] = s / r(i, i).real();
        }
    }
    return x;
}

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Seeded random stream. Substreams are derived by hashing the parent key
// with integer or string labels, so (seed, path) fully determines a stream
// regardless of how many draws were taken from the parent.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(detail::splitmix64(seed)), engine_(key_) {}

    std::uint64_t key() const noexcept { return key_; }

    Rng substream(std::uint64_t label) const { return Rng(key_, label); }
    Rng substream(std::string_view label) const { return Rng(key_, detail::fnv1a(label)); }
    Rng substream(std::initializer_list<std::uint64_t> labels) const {
        Rng r = *this;
        for (auto l : labels) r = r.substream(l);
        return r;
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    // Standard normal via Box-Muller; the second deviate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        spare_ = rad * std::sin(ang);
        has_spare_ = true;
        return rad * std::cos(ang);
    }

    // Gamma(shape, 1) by Marsaglia-Tsang.
    double gamma(double shape) {
        if (shape < 1.0) return gamma(shape + 1.0) * std::pow(uniform_open(), 1.0 / shape);
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_open();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
        }
    }

    // CN(0, variance): real and imaginary parts each N(0, variance/2).
    Complex circular_gaussian(double variance) {
        const double s = std::sqrt(0.5 * variance);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

private:
    Rng(std::uint64_t parent, std::uint64_t label)
        : key_(detail::splitmix64(parent ^ detail::splitmix64(label + 0x632be59bd9b4e019ULL))),
          engine_(key_) {}

    double uniform_open() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return u;
    }

    std::uint64_t key_;
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline CVector sample_circular_gaussian(Rng& rng, std::size_t len, double variance) {
    if (!(variance >= 0.0)) throw ParameterError("sample_circular_gaussian: negative variance");
    CVector v(len);
    if (variance == 0.0) return v;
    for (auto& x : v) x = rng.circular_gaussian(variance);
    return v;
}

// Block-diagonal covariance diag(variances) (x) I_block: entry n*block + l has
// variance variances[n].
inline void fill_circular_gaussian_blocks(Rng& rng, std::span<const double> variances, std::size_t block,
                                          std::span<Complex> out) {
    if (out.size() != variances.size() * block) throw ParameterError("fill_circular_gaussian_blocks: size mismatch");
    for (std::size_t n = 0; n < variances.size(); ++n) {
        if (!(variances[n] >= 0.0)) throw ParameterError("fill_circular_gaussian_blocks: negative variance");
        for (std::size_t l = 0; l < block; ++l) out[n * block + l] = rng.circular_gaussian(variances[n]);
    }
}

}  // namespace cellfree
