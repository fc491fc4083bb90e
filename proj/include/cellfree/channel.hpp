#pragma once

// Pilot-phase channel estimation. Per-RAU quantities are stored as length-N
// vectors; the antenna dimension is expanded only when vectors are drawn.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "cellfree/config.hpp"
#include "cellfree/numerics.hpp"
#include "cellfree/scenario.hpp"

namespace cellfree {

struct EquivalentGains {
    GainMatrix lambda;           // N x U
    std::vector<GainMatrix> xi;  // per group, N x K_m
    GainMatrix mu;               // N x M
    std::vector<double> theta;   // U
    std::vector<double> upsilon; // M
    std::vector<std::vector<double>> zeta;  // per group, K_m
};

namespace detail {

// a / b with 0/0 taken as 0 (zero pilot power at zero noise).
inline double safe_ratio(double a, double b) { return b > 0.0 ? a / b : 0.0; }

// Sum_j tau q_j eta_{n,j}: the despread co-pilot signal power at RAU n.
inline double copilot_power(const Scenario& scn, const PowerAllocation& alloc, std::size_t m, std::size_t n) {
    const double tau = static_cast<double>(alloc.tau);
    double s = 0.0;
    for (std::size_t j = 0; j < scn.group_size(m); ++j) s += tau * alloc.q_ul[m][j] * scn.eta[m](n, j);
    return s;
}

}  // namespace detail

inline EquivalentGains equivalent_gains(const Scenario& scn, const PowerAllocation& alloc, double noise_ul) {
    const std::size_t N = scn.n_raus();
    const std::size_t U = scn.n_unicast();
    const std::size_t M = scn.n_groups();
    const double tau = static_cast<double>(alloc.tau);

    EquivalentGains g;
    g.lambda = GainMatrix(N, U);
    g.theta.assign(U, 0.0);
    for (std::size_t u = 0; u < U; ++u) {
        for (std::size_t n = 0; n < N; ++n) {
            const double b = scn.beta(n, u);
            const double s = tau * alloc.p_ul[u] * b;
            g.lambda(n, u) = detail::safe_ratio(s * b, s + noise_ul);
            g.theta[u] += g.lambda(n, u);
        }
    }

    g.mu = GainMatrix(N, M);
    g.upsilon.assign(M, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
        const std::size_t K = scn.group_size(m);
        GainMatrix xi(N, K);
        std::vector<double> zeta(K, 0.0);
        for (std::size_t n = 0; n < N; ++n) {
            const double s = detail::copilot_power(scn, alloc, m, n);
            for (std::size_t k = 0; k < K; ++k) {
                const double e = scn.eta[m](n, k);
                xi(n, k) = detail::safe_ratio(tau * alloc.q_ul[m][k] * e * e, noise_ul + s);
                zeta[k] += xi(n, k);
            }
            g.mu(n, m) = detail::safe_ratio(s * s, s + noise_ul);
            g.upsilon[m] += g.mu(n, m);
        }
        g.xi.push_back(std::move(xi));
        g.zeta.push_back(std::move(zeta));
    }
    return g;
}

inline EquivalentGains equivalent_gains(const Scenario& scn, const PowerAllocation& alloc, const SystemConfig& cfg) {
    return equivalent_gains(scn, alloc, cfg.noise_ul);
}

// d theta_u / d p_ul,u
inline double theta_derivative(const Scenario& scn, const PowerAllocation& alloc, double noise_ul, std::size_t u) {
    const double tau = static_cast<double>(alloc.tau);
    double d = 0.0;
    for (std::size_t n = 0; n < scn.n_raus(); ++n) {
        const double b = scn.beta(n, u);
        const double den = tau * alloc.p_ul[u] * b + noise_ul;
        if (den > 0.0 && noise_ul > 0.0) d += tau * b * b * noise_ul / (den * den);
    }
    return d;
}

// J(k, j) = d zeta_{m,k} / d q_ul,m,j
inline std::vector<std::vector<double>> zeta_jacobian(const Scenario& scn, const PowerAllocation& alloc,
                                                      double noise_ul, std::size_t m) {
    const double tau = static_cast<double>(alloc.tau);
    const std::size_t K = scn.group_size(m);
    std::vector<std::vector<double>> jac(K, std::vector<double>(K, 0.0));
    for (std::size_t n = 0; n < scn.n_raus(); ++n) {
        const double den = noise_ul + detail::copilot_power(scn, alloc, m, n);
        if (!(den > 0.0)) continue;
        for (std::size_t k = 0; k < K; ++k) {
            const double ek = scn.eta[m](n, k);
            const double xi_num = tau * alloc.q_ul[m][k] * ek * ek;
            for (std::size_t j = 0; j < K; ++j) {
                const double ej = scn.eta[m](n, j);
                double d = -xi_num * tau * ej / (den * den);
                if (j == k) d += tau * ek * ek / den;
                jac[k][j] += d;
            }
        }
    }
    return jac;
}

// One joint draw of true channels and their estimates. Every matrix has NL
// rows, one column per user (or per group for t_hat_group); entry n*L + l is
// antenna l of RAU n.
struct ChannelSample {
    CMatrix c;                        // NL x U true unicast channels
    std::vector<CMatrix> t;           // per group, NL x K_m true multicast channels
    CMatrix c_hat;                    // NL x U estimates
    CMatrix t_hat_group;              // NL x M co-pilot group estimates
    std::vector<CMatrix> t_hat_user;  // per group, NL x K_m per-user estimates
};

namespace detail {

inline void check_pilot_length(const Scenario& scn, const PowerAllocation& alloc) {
    if (alloc.tau < scn.n_unicast() + scn.n_groups())
        throw ConfigError("pilot length " + std::to_string(alloc.tau) + " below M + U = " +
                          std::to_string(scn.n_unicast() + scn.n_groups()));
}

// Applies the per-RAU scalar MMSE filters to a despread group observation y.
inline void filter_group(const Scenario& scn, const PowerAllocation& alloc, double noise_ul, std::size_t m,
                         std::size_t L, std::span<const Complex> y, std::span<Complex> t_hat, CMatrix& t_hat_user) {
    const double tau = static_cast<double>(alloc.tau);
    for (std::size_t n = 0; n < scn.n_raus(); ++n) {
        const double s = copilot_power(scn, alloc, m, n);
        const double den = s + noise_ul;
        const double group_coef = safe_ratio(s, den);
        for (std::size_t l = 0; l < L; ++l) t_hat[n * L + l] = group_coef * y[n * L + l];
        for (std::size_t k = 0; k < scn.group_size(m); ++k) {
            const double coef = safe_ratio(std::sqrt(tau * alloc.q_ul[m][k]) * scn.eta[m](n, k), den);
            auto col = t_hat_user.col(k);
            for (std::size_t l = 0; l < L; ++l) col[n * L + l] = coef * y[n * L + l];
        }
    }
}

inline void draw_multicast_truth(const Scenario& scn, std::size_t L, Rng& rng, ChannelSample& out) {
    for (std::size_t m = 0; m < scn.n_groups(); ++m) {
        CMatrix t(scn.n_raus() * L, scn.group_size(m));
        for (std::size_t k = 0; k < scn.group_size(m); ++k)
            fill_circular_gaussian_blocks(rng, scn.eta[m].column(k), L, t.col(k));
        out.t.push_back(std::move(t));
    }
}

}  // namespace detail

// Full pilot phase: builds the NL x tau received pilot matrix with
// orthonormal DFT pilots, despreads it and applies the MMSE filters.
inline ChannelSample draw_sample_pilot(const Scenario& scn, const PowerAllocation& alloc, const SystemConfig& cfg,
                                       Rng& rng) {
    detail::check_pilot_length(scn, alloc);
    const std::size_t N = scn.n_raus();
    const std::size_t L = cfg.antennas_per_rau;
    const std::size_t NL = N * L;
    const std::size_t U = scn.n_unicast();
    const std::size_t M = scn.n_groups();
    const std::size_t tau = alloc.tau;
    const double noise = cfg.noise_ul;

    // Column j of the unitary tau x tau DFT matrix.
    auto pilot = [tau](std::size_t j) {
        std::vector<Complex> phi(tau);
        for (std::size_t i = 0; i < tau; ++i) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(i * j) / static_cast<double>(tau);
            phi[i] = std::polar(1.0 / std::sqrt(static_cast<double>(tau)), ang);
        }
        return phi;
    };

    ChannelSample out;
    out.c = CMatrix(NL, U);
    for (std::size_t u = 0; u < U; ++u) fill_circular_gaussian_blocks(rng, scn.beta.column(u), L, out.c.col(u));
    detail::draw_multicast_truth(scn, L, rng, out);

    CMatrix y(NL, tau);
    for (std::size_t i = 0; i < tau; ++i)
        for (std::size_t r = 0; r < NL; ++r) y(r, i) = rng.circular_gaussian(noise);
    auto add_pilot = [&](std::span<const Complex> h, double amp, const std::vector<Complex>& phi) {
        for (std::size_t i = 0; i < tau; ++i) {
            const Complex a = amp * std::conj(phi[i]);
            auto col = y.col(i);
            for (std::size_t r = 0; r < NL; ++r) col[r] += h[r] * a;
        }
    };
    std::vector<std::vector<Complex>> pilots;
    for (std::size_t j = 0; j < U + M; ++j) pilots.push_back(pilot(j));
    for (std::size_t u = 0; u < U; ++u)
        add_pilot(out.c.col(u), std::sqrt(static_cast<double>(tau) * alloc.p_ul[u]), pilots[u]);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < scn.group_size(m); ++k)
            add_pilot(out.t[m].col(k), std::sqrt(static_cast<double>(tau) * alloc.q_ul[m][k]), pilots[U + m]);

    auto despread = [&](const std::vector<Complex>& phi) {
        std::vector<Complex> v(NL);
        for (std::size_t i = 0; i < tau; ++i) {
            auto col = y.col(i);
            for (std::size_t r = 0; r < NL; ++r) v[r] += col[r] * phi[i];
        }
        return v;
    };

    out.c_hat = CMatrix(NL, U);
    for (std::size_t u = 0; u < U; ++u) {
        const auto yu = despread(pilots[u]);
        const double amp = std::sqrt(static_cast<double>(tau) * alloc.p_ul[u]);
        auto col = out.c_hat.col(u);
        for (std::size_t n = 0; n < N; ++n) {
            const double b = scn.beta(n, u);
            const double coef = detail::safe_ratio(amp * b, amp * amp * b + noise);
            for (std::size_t l = 0; l < L; ++l) col[n * L + l] = coef * yu[n * L + l];
        }
    }
    out.t_hat_group = CMatrix(NL, M);
    for (std::size_t m = 0; m < M; ++m) {
        const auto ym = despread(pilots[U + m]);
        CMatrix per_user(NL, scn.group_size(m));
        detail::filter_group(scn, alloc, noise, m, L, ym, out.t_hat_group.col(m), per_user);
        out.t_hat_user.push_back(std::move(per_user));
    }
    return out;
}

// Same joint law as draw_sample_pilot without forming the pilot matrix:
// unicast estimates and their independent errors are drawn directly; multicast
// truths are drawn and the despread group observation is filtered.
inline ChannelSample draw_sample_statistical(const Scenario& scn, const PowerAllocation& alloc,
                                             const SystemConfig& cfg, const EquivalentGains& gains, Rng& rng) {
    detail::check_pilot_length(scn, alloc);
    const std::size_t N = scn.n_raus();
    const std::size_t L = cfg.antennas_per_rau;
    const std::size_t NL = N * L;
    const std::size_t U = scn.n_unicast();
    const std::size_t M = scn.n_groups();
    const double tau = static_cast<double>(alloc.tau);

    ChannelSample out;
    out.c_hat = CMatrix(NL, U);
    out.c = CMatrix(NL, U);
    std::vector<double> err_var(N);
    for (std::size_t u = 0; u < U; ++u) {
        fill_circular_gaussian_blocks(rng, gains.lambda.column(u), L, out.c_hat.col(u));
        for (std::size_t n = 0; n < N; ++n) err_var[n] = std::max(scn.beta(n, u) - gains.lambda(n, u), 0.0);
        auto c = out.c.col(u);
        fill_circular_gaussian_blocks(rng, err_var, L, c);
        auto ch = out.c_hat.col(u);
        for (std::size_t r = 0; r < NL; ++r) c[r] += ch[r];
    }

    detail::draw_multicast_truth(scn, L, rng, out);
    out.t_hat_group = CMatrix(NL, M);
    std::vector<Complex> y(NL);
    for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t r = 0; r < NL; ++r) y[r] = rng.circular_gaussian(cfg.noise_ul);
        for (std::size_t k = 0; k < scn.group_size(m); ++k) {
            const double amp = std::sqrt(tau * alloc.q_ul[m][k]);
            auto t = out.t[m].col(k);
            for (std::size_t r = 0; r < NL; ++r) y[r] += amp * t[r];
        }
        CMatrix per_user(NL, scn.group_size(m));
        detail::filter_group(scn, alloc, cfg.noise_ul, m, L, y, out.t_hat_group.col(m), per_user);
        out.t_hat_user.push_back(std::move(per_user));
    }
    return out;
}

inline ChannelSample draw_sample_statistical(const Scenario& scn, const PowerAllocation& alloc,
                                             const SystemConfig& cfg, Rng& rng) {
    return draw_sample_statistical(scn, alloc, cfg, equivalent_gains(scn, alloc, cfg), rng);
}

}  // namespace cellfree
