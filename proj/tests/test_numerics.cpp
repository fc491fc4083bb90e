#include <gtest/gtest.h>

#include <cmath>

#include "cellfree/numerics.hpp"

using namespace cellfree;

namespace {

CMatrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    CMatrix m(r, c);
    for (std::size_t j = 0; j < c; ++j)
        for (std::size_t i = 0; i < r; ++i) m(i, j) = rng.circular_gaussian(1.0);
    return m;
}

double max_abs_diff(const CMatrix& a, const CMatrix& b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j)
        for (std::size_t i = 0; i < a.rows(); ++i) d = std::max(d, std::abs(a(i, j) - b(i, j)));
    return d;
}

}  // namespace

TEST(SampleCircularGaussian, ZeroVarianceGivesZeros) {
    Rng rng(1);
    const auto v = sample_circular_gaussian(rng, 16, 0.0);
    for (const auto& x : v) EXPECT_EQ(x, Complex(0.0, 0.0));
}

TEST(SampleCircularGaussian, UnitVarianceSecondMoment) {
    Rng rng(2);
    const auto v = sample_circular_gaussian(rng, 100000, 1.0);
    double p = 0.0, re = 0.0, im = 0.0;
    for (const auto& x : v) {
        p += std::norm(x);
        re += x.real() * x.real();
        im += x.imag() * x.imag();
    }
    p /= 1e5;
    EXPECT_NEAR(p, 1.0, 0.02);
    EXPECT_NEAR(re / 1e5, 0.5, 0.01);
    EXPECT_NEAR(im / 1e5, 0.5, 0.01);
}

TEST(SampleCircularGaussian, SameSeedSameVector) {
    Rng a(42), b(42);
    EXPECT_EQ(sample_circular_gaussian(a, 64, 2.5), sample_circular_gaussian(b, 64, 2.5));
}

TEST(SampleCircularGaussian, NegativeVarianceIsParameterError) {
    Rng rng(3);
    EXPECT_THROW(sample_circular_gaussian(rng, 4, -1.0), ParameterError);
}

TEST(FillBlocks, PerBlockVariance) {
    Rng rng(4);
    const std::vector<double> var{0.5, 4.0};
    std::vector<double> acc(2, 0.0);
    std::vector<Complex> out(2 * 1000);
    for (int rep = 0; rep < 50; ++rep) {
        fill_circular_gaussian_blocks(rng, var, 1000, out);
        for (std::size_t i = 0; i < out.size(); ++i) acc[i / 1000] += std::norm(out[i]);
    }
    EXPECT_NEAR(acc[0] / 50000.0, 0.5, 0.5 * 0.03);
    EXPECT_NEAR(acc[1] / 50000.0, 4.0, 4.0 * 0.03);
}

TEST(Gram, IdentityGivesIdentity) {
    const auto g = gram(CMatrix::identity(3));
    EXPECT_EQ(max_abs_diff(g, CMatrix::identity(3)), 0.0);
}

TEST(Gram, ColumnVectorGivesSquaredNorm) {
    CMatrix v(4, 1);
    v(0, 0) = {1, 2};
    v(1, 0) = {0, -1};
    v(2, 0) = {3, 0};
    v(3, 0) = {0.5, 0.5};
    const auto g = gram(v);
    ASSERT_EQ(g.rows(), 1u);
    EXPECT_NEAR(g(0, 0).real(), 5 + 1 + 9 + 0.5, 1e-14);
    EXPECT_EQ(g(0, 0).imag(), 0.0);
}

TEST(Gram, MatchesNaiveTripleLoop) {
    Rng rng(5);
    const auto a = random_matrix(rng, 6, 3);
    const auto g = gram(a);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            Complex s{};
            for (std::size_t k = 0; k < 6; ++k) s += std::conj(a(k, i)) * a(k, j);
            EXPECT_NEAR(std::abs(g(i, j) - s), 0.0, 1e-13);
        }
}

TEST(Gram, HermitianAndPositiveSemidefinite) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_matrix(rng, 5, 4);
        const auto g = gram(a);
        EXPECT_LE(max_abs_diff(g, g.adjoint()), 1e-12);
        // Quadratic form is nonnegative for random probes.
        for (int p = 0; p < 10; ++p) {
            std::vector<Complex> x(4);
            for (auto& v : x) v = rng.circular_gaussian(1.0);
            Complex q{};
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) q += std::conj(x[i]) * g(i, j) * x[j];
            EXPECT_GE(q.real(), -1e-12);
        }
    }
    // Nearly orthogonal columns: every Gershgorin disc stays in [0, inf).
    CMatrix a = CMatrix::identity(4);
    a(0, 1) = 0.1;
    a(2, 3) = {0.0, 0.05};
    const auto g = gram(a);
    for (std::size_t i = 0; i < 4; ++i) {
        double radius = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
            if (j != i) radius += std::abs(g(i, j));
        EXPECT_GE(g(i, i).real() - radius, 0.0);
    }
}

TEST(SolveHpd, IdentityReturnsRhs) {
    Rng rng(7);
    const auto b = random_matrix(rng, 3, 2);
    EXPECT_LE(max_abs_diff(solve_hpd(CMatrix::identity(3), b), b), 1e-15);
}

TEST(SolveHpd, Diagonal) {
    const std::vector<double> d{2.0, 4.0};
    const auto x = solve_hpd(CMatrix::diagonal(d), CMatrix::identity(2));
    EXPECT_DOUBLE_EQ(x(0, 0).real(), 0.5);
    EXPECT_DOUBLE_EQ(x(1, 1).real(), 0.25);
    EXPECT_EQ(x(0, 1), Complex(0.0, 0.0));
}

TEST(SolveHpd, RandomResidual) {
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = gram(random_matrix(rng, 12, 8));
        a.add_to_diagonal(0.1);
        const auto b = random_matrix(rng, 8, 3);
        const auto x = solve_hpd(a, b);
        EXPECT_LE((a * x - b).frobenius_norm() / b.frobenius_norm(), 1e-10);
    }
}

TEST(SolveHpd, RecoversKnownSolution) {
    Rng rng(9);
    auto a = gram(random_matrix(rng, 20, 6));
    a.add_to_diagonal(1.0);
    const auto x0 = random_matrix(rng, 6, 2);
    const auto x = solve_hpd(a, a * x0);
    EXPECT_LE((x - x0).frobenius_norm() / x0.frobenius_norm(), 1e-8);
}

TEST(SolveHpd, IndefiniteReportsPivot) {
    const std::vector<double> d{1.0, -1.0, 1.0};
    try {
        solve_hpd(CMatrix::diagonal(d), CMatrix::identity(3));
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.pivot(), 1);
    }
}

TEST(SolveHpd, SingularReportsPivot) {
    CMatrix a(2, 2, Complex(1.0, 0.0));  // rank one
    try {
        solve_hpd(a, CMatrix::identity(2));
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_EQ(e.pivot(), 1);
    }
}

TEST(SolveHpd, DimensionMismatch) {
    EXPECT_THROW(solve_hpd(CMatrix::identity(3), CMatrix::identity(2)), ParameterError);
    EXPECT_THROW(solve_hpd(CMatrix(3, 2), CMatrix(3, 1)), ParameterError);
}

TEST(Rng, Deterministic) {
    Rng a(11), b(11);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SubstreamIgnoresParentDraws) {
    Rng a(12), b(12);
    for (int i = 0; i < 10; ++i) b.next_u64();
    auto sa = a.substream("x");
    auto sb = b.substream("x");
    for (int i = 0; i < 10; ++i) EXPECT_EQ(sa.next_u64(), sb.next_u64());
}

TEST(Rng, DifferentlyKeyedSubstreamsUncorrelated) {
    const Rng root(13);
    const std::pair<Rng, Rng> pairs[] = {{root.substream(0), root.substream(1)},
                                         {root.substream("unicast"), root.substream("multicast")},
                                         {root.substream({1, 2}), root.substream({2, 1})}};
    for (auto [a, b] : pairs) {
        const int n = 100000;
        double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
        for (int i = 0; i < n; ++i) {
            const double x = a.normal(), y = b.normal();
            sa += x;
            sb += y;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        const double cov = sab / n - (sa / n) * (sb / n);
        const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
        EXPECT_LT(std::abs(corr), 0.02);
    }
}

TEST(Rng, GammaMean) {
    Rng rng(14);
    for (double shape : {0.5, 1.0, 3.0}) {
        double s = 0.0;
        for (int i = 0; i < 50000; ++i) s += rng.gamma(shape);
        EXPECT_NEAR(s / 50000.0, shape, 0.03 * shape);
    }
}
