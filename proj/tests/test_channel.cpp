#include <gtest/gtest.h>

#include <cmath>

#include "cellfree/channel.hpp"
#include "test_support.hpp"

using namespace cellfree;
using cellfree::testing::config_for;
using cellfree::testing::make_scenario;
using cellfree::testing::mixed_scenario;
using cellfree::testing::uniform_alloc;

TEST(EquivalentGains, UnicastWorkedExample) {
    const auto s = make_scenario({{1.0}});
    auto c = config_for(s, 1, 1.0);
    auto a = uniform_alloc(c, 6.0);
    a.tau = 1;
    const auto g = equivalent_gains(s, a, c);
    EXPECT_NEAR(g.lambda(0, 0), 6.0 / 7.0, 1e-15);
    EXPECT_NEAR(g.theta[0], 6.0 / 7.0, 1e-15);
}

TEST(EquivalentGains, ZeroPilotPowerGivesZero) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4);
    const auto a = uniform_alloc(c, 0.0, 0.0);
    const auto g = equivalent_gains(s, a, c);
    for (double t : g.theta) EXPECT_EQ(t, 0.0);
    for (double u : g.upsilon) EXPECT_EQ(u, 0.0);
    for (const auto& z : g.zeta)
        for (double v : z) EXPECT_EQ(v, 0.0);
    // 0/0 at zero noise is taken as 0 too.
    const auto g0 = equivalent_gains(s, a, 0.0);
    EXPECT_EQ(g0.theta[1], 0.0);
    EXPECT_EQ(g0.upsilon[0], 0.0);
}

TEST(EquivalentGains, SingleUserGroupMatchesUnicastFormula) {
    const auto s = make_scenario({{0.8}, {0.3}}, {{{0.8}, {0.3}}});
    const auto c = config_for(s, 2, 0.2);
    auto a = uniform_alloc(c, 0.7, 0.7);
    const auto g = equivalent_gains(s, a, c);
    const double tq = static_cast<double>(a.tau) * 0.7;
    for (std::size_t n = 0; n < 2; ++n) {
        EXPECT_NEAR(g.xi[0](n, 0), g.lambda(n, 0), 1e-15);
        EXPECT_NEAR(g.mu(n, 0), tq * g.xi[0](n, 0), 1e-14);
    }
}

TEST(EquivalentGains, GroupGainIsSumOfPerUserAmplitudes) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4, 0.05);
    auto a = uniform_alloc(c);
    a.q_ul[1] = {0.1, 0.45, 0.3};
    const auto g = equivalent_gains(s, a, c);
    const double tau = static_cast<double>(a.tau);
    for (std::size_t m = 0; m < s.n_groups(); ++m)
        for (std::size_t n = 0; n < s.n_raus(); ++n) {
            double sum = 0.0;
            for (std::size_t k = 0; k < s.group_size(m); ++k) sum += std::sqrt(tau * a.q_ul[m][k] * g.xi[m](n, k));
            EXPECT_NEAR(std::sqrt(g.mu(n, m)), sum, 1e-12);
        }
}

TEST(EquivalentGains, RowSums) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4);
    const auto g = equivalent_gains(s, uniform_alloc(c), c);
    for (std::size_t u = 0; u < s.n_unicast(); ++u) EXPECT_DOUBLE_EQ(g.theta[u], g.lambda.column_sum(u));
    for (std::size_t m = 0; m < s.n_groups(); ++m) {
        EXPECT_DOUBLE_EQ(g.upsilon[m], g.mu.column_sum(m));
        for (std::size_t k = 0; k < s.group_size(m); ++k) EXPECT_DOUBLE_EQ(g.zeta[m][k], g.xi[m].column_sum(k));
    }
}

TEST(EquivalentGains, BoundedByTrueGains) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4);
    const auto g = equivalent_gains(s, uniform_alloc(c), c);
    for (std::size_t n = 0; n < s.n_raus(); ++n) {
        for (std::size_t u = 0; u < s.n_unicast(); ++u) {
            EXPECT_GE(g.lambda(n, u), 0.0);
            EXPECT_LE(g.lambda(n, u), s.beta(n, u));
        }
        for (std::size_t m = 0; m < s.n_groups(); ++m)
            for (std::size_t k = 0; k < s.group_size(m); ++k) EXPECT_LE(g.xi[m](n, k), s.eta[m](n, k));
    }
}

TEST(EquivalentGains, MonotoneInOwnPilotPower) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4);
    double prev_theta = -1.0, prev_zeta = -1.0;
    for (double p = 0.01; p <= 2.0; p *= 1.5) {
        auto a = uniform_alloc(c);
        a.p_ul[0] = p;
        a.q_ul[0][1] = p;
        const auto g = equivalent_gains(s, a, c);
        EXPECT_GT(g.theta[0], prev_theta);
        EXPECT_GT(g.zeta[0][1], prev_zeta);
        prev_theta = g.theta[0];
        prev_zeta = g.zeta[0][1];
    }
}

TEST(EquivalentGains, CoPilotContamination) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4);
    auto a = uniform_alloc(c);
    const double before = equivalent_gains(s, a, c).zeta[1][0];
    a.q_ul[1][2] = 5.0;
    const auto g = equivalent_gains(s, a, c);
    EXPECT_LT(g.zeta[1][0], before);
    // Other groups are untouched.
    EXPECT_EQ(g.zeta[0][0], equivalent_gains(s, uniform_alloc(c), c).zeta[0][0]);
}

TEST(EquivalentGains, DerivativesMatchFiniteDifferences) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4);
    auto a = uniform_alloc(c);
    a.q_ul[1] = {0.2, 0.6, 0.35};
    const double h = 1e-6;
    for (std::size_t u = 0; u < s.n_unicast(); ++u) {
        auto ap = a, am = a;
        ap.p_ul[u] += h;
        am.p_ul[u] -= h;
        const double fd = (equivalent_gains(s, ap, c).theta[u] - equivalent_gains(s, am, c).theta[u]) / (2 * h);
        EXPECT_NEAR(theta_derivative(s, a, c.noise_ul, u), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
    const auto jac = zeta_jacobian(s, a, c.noise_ul, 1);
    for (std::size_t j = 0; j < 3; ++j) {
        auto ap = a, am = a;
        ap.q_ul[1][j] += h;
        am.q_ul[1][j] -= h;
        const auto zp = equivalent_gains(s, ap, c).zeta[1];
        const auto zm = equivalent_gains(s, am, c).zeta[1];
        for (std::size_t k = 0; k < 3; ++k)
            EXPECT_NEAR(jac[k][j], (zp[k] - zm[k]) / (2 * h), 1e-6 * std::max(1.0, std::abs(jac[k][j])));
    }
}

TEST(ChannelSample, PerUserEstimateIsScaledGroupEstimate) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 3);
    auto a = uniform_alloc(c);
    a.q_ul[1] = {0.2, 0.6, 0.35};
    Rng rng(21);
    const auto smp = draw_sample_pilot(s, a, c, rng);
    const double tau = static_cast<double>(a.tau);
    for (std::size_t m = 0; m < s.n_groups(); ++m)
        for (std::size_t n = 0; n < s.n_raus(); ++n) {
            const double sn = detail::copilot_power(s, a, m, n);
            for (std::size_t k = 0; k < s.group_size(m); ++k) {
                const double ratio = std::sqrt(tau * a.q_ul[m][k]) * s.eta[m](n, k) / sn;
                for (std::size_t l = 0; l < 3; ++l) {
                    const auto r = n * 3 + l;
                    EXPECT_LE(std::abs(smp.t_hat_user[m](r, k) - ratio * smp.t_hat_group(r, m)),
                              1e-12 * std::max(1.0, std::abs(smp.t_hat_group(r, m))));
                }
            }
        }
}

TEST(ChannelSample, GroupEstimateIsWeightedSumOfPerUserEstimates) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 5);
    auto a = uniform_alloc(c);
    a.q_ul[0] = {0.05, 0.9};
    Rng rng(27);
    for (int rep = 0; rep < 3; ++rep) {
        const auto smp = draw_sample_pilot(s, a, c, rng);
        for (std::size_t m = 0; m < s.n_groups(); ++m)
            for (std::size_t r = 0; r < smp.t_hat_group.rows(); ++r) {
                Complex sum{};
                for (std::size_t j = 0; j < s.group_size(m); ++j)
                    sum += std::sqrt(static_cast<double>(a.tau) * a.q_ul[m][j]) * smp.t_hat_user[m](r, j);
                EXPECT_LE(std::abs(sum - smp.t_hat_group(r, m)), 1e-12 * std::max(1.0, std::abs(sum)));
            }
    }
}

TEST(ChannelSample, NoiselessSingleUserGroupAlignsWithTruth) {
    // NL = 250
    std::vector<std::vector<double>> beta(5, std::vector<double>{0.5});
    std::vector<std::vector<double>> eta{{0.9}, {0.2}, {1.4}, {0.05}, {0.6}};
    const auto s = make_scenario(beta, {eta});
    const auto c = config_for(s, 50, 1e-12);
    const auto a = uniform_alloc(c);
    Rng rng(28);
    const auto smp = draw_sample_pilot(s, a, c, rng);
    const auto t = smp.t[0].column_vector(0);
    const auto e = smp.t_hat_group.column_vector(0);
    EXPECT_GT(std::abs(dot(e, t)) / std::sqrt(squared_norm(e) * squared_norm(t)), 1.0 - 1e-3);
}

TEST(ChannelSample, NoiselessUnicastEstimateAlignsWithTruth) {
    const auto s = mixed_scenario();
    auto c = config_for(s, 16, 1e-12);
    const auto a = uniform_alloc(c);
    Rng rng(22);
    const auto smp = draw_sample_pilot(s, a, c, rng);
    for (std::size_t u = 0; u < s.n_unicast(); ++u) {
        const auto h = smp.c.column_vector(u);
        const auto e = smp.c_hat.column_vector(u);
        const double cosine = std::abs(dot(e, h)) / std::sqrt(squared_norm(e) * squared_norm(h));
        EXPECT_GT(cosine, 1.0 - 1e-9);
    }
}

TEST(ChannelSample, EqualGainsGiveExactEstimates) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 4, 0.0);
    const auto a = uniform_alloc(c);
    const auto g = equivalent_gains(s, a, c);
    for (std::size_t u = 0; u < s.n_unicast(); ++u)
        for (std::size_t n = 0; n < s.n_raus(); ++n) EXPECT_DOUBLE_EQ(g.lambda(n, u), s.beta(n, u));
    Rng rng(23);
    const auto smp = draw_sample_statistical(s, a, c, rng);
    EXPECT_EQ((smp.c - smp.c_hat).frobenius_norm(), 0.0);
}

TEST(ChannelSample, PilotLengthBelowStreamsRejected) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 2);
    auto a = uniform_alloc(c);
    a.tau = 4;
    Rng rng(24);
    EXPECT_THROW(draw_sample_pilot(s, a, c, rng), ConfigError);
    EXPECT_THROW(draw_sample_statistical(s, a, c, rng), ConfigError);
}

namespace {

// Per-RAU second moments accumulated over many draws.
struct Moments {
    std::vector<std::vector<double>> c_hat;       // [u][n]
    std::vector<std::vector<double>> group;       // [m][n]
    std::vector<std::vector<double>> user;        // [m][n*K+k] flattened
    std::vector<std::vector<double>> err_cross;   // [u][n] |E c_hat^* (c - c_hat)|
};

template <class Draw>
Moments accumulate(const Scenario& s, std::size_t L, int reps, Draw draw) {
    const std::size_t N = s.n_raus();
    Moments mo;
    mo.c_hat.assign(s.n_unicast(), std::vector<double>(N, 0.0));
    mo.err_cross.assign(s.n_unicast(), std::vector<double>(N, 0.0));
    std::vector<std::vector<Complex>> cross(s.n_unicast(), std::vector<Complex>(N));
    for (std::size_t m = 0; m < s.n_groups(); ++m) {
        mo.group.emplace_back(N, 0.0);
        mo.user.emplace_back(N * s.group_size(m), 0.0);
    }
    for (int r = 0; r < reps; ++r) {
        const ChannelSample smp = draw();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t l = 0; l < L; ++l) {
                const std::size_t row = n * L + l;
                for (std::size_t u = 0; u < s.n_unicast(); ++u) {
                    mo.c_hat[u][n] += std::norm(smp.c_hat(row, u));
                    cross[u][n] += std::conj(smp.c_hat(row, u)) * (smp.c(row, u) - smp.c_hat(row, u));
                }
                for (std::size_t m = 0; m < s.n_groups(); ++m) {
                    mo.group[m][n] += std::norm(smp.t_hat_group(row, m));
                    for (std::size_t k = 0; k < s.group_size(m); ++k)
                        mo.user[m][n * s.group_size(m) + k] += std::norm(smp.t_hat_user[m](row, k));
                }
            }
    }
    const double cnt = static_cast<double>(reps) * static_cast<double>(L);
    for (auto& v : mo.c_hat)
        for (auto& x : v) x /= cnt;
    for (auto& v : mo.group)
        for (auto& x : v) x /= cnt;
    for (auto& v : mo.user)
        for (auto& x : v) x /= cnt;
    for (std::size_t u = 0; u < s.n_unicast(); ++u)
        for (std::size_t n = 0; n < N; ++n) mo.err_cross[u][n] = std::abs(cross[u][n]) / cnt;
    return mo;
}

void expect_moments_match_gains(const Scenario& s, const EquivalentGains& g, const Moments& mo, double rel) {
    for (std::size_t n = 0; n < s.n_raus(); ++n) {
        for (std::size_t u = 0; u < s.n_unicast(); ++u) {
            EXPECT_NEAR(mo.c_hat[u][n], g.lambda(n, u), rel * g.lambda(n, u)) << "u=" << u << " n=" << n;
            // Estimate and error are orthogonal.
            EXPECT_LT(mo.err_cross[u][n], 0.03 * std::sqrt(g.lambda(n, u) * (s.beta(n, u) - g.lambda(n, u))) + 1e-12);
        }
        for (std::size_t m = 0; m < s.n_groups(); ++m) {
            EXPECT_NEAR(mo.group[m][n], g.mu(n, m), rel * g.mu(n, m));
            for (std::size_t k = 0; k < s.group_size(m); ++k)
                EXPECT_NEAR(mo.user[m][n * s.group_size(m) + k], g.xi[m](n, k), rel * g.xi[m](n, k));
        }
    }
}

}  // namespace

TEST(ChannelSample, PilotPathMomentsMatchEquivalentGains) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 32, 0.3);
    const auto a = uniform_alloc(c, 0.4, 0.3);
    const auto g = equivalent_gains(s, a, c);
    Rng rng(25);
    const auto mo = accumulate(s, 32, 1500, [&] { return draw_sample_pilot(s, a, c, rng); });
    expect_moments_match_gains(s, g, mo, 0.03);
}

TEST(ChannelSample, StatisticalPathMomentsMatchEquivalentGains) {
    const auto s = mixed_scenario();
    const auto c = config_for(s, 32, 0.3);
    const auto a = uniform_alloc(c, 0.4, 0.3);
    const auto g = equivalent_gains(s, a, c);
    Rng rng(26);
    const auto mo = accumulate(s, 32, 1500, [&] { return draw_sample_statistical(s, a, c, g, rng); });
    expect_moments_match_gains(s, g, mo, 0.03);
}
