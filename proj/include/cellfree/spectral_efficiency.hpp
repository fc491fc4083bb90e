#pragma once

// Closed-form downlink SINR for unicast and multicast users and the SE map.
//
//   unicast k:        J p_dl,k theta_k    / (noise_dl + (1/NL) sum_n beta_{n,k}  * P)
//   multicast (m,k):  J q_dl,m zeta_{m,k} / (noise_dl + (1/NL) sum_n eta_{n,m,k} * P)
//
// with P the total downlink power and J = L (MRT), NL-M-U (ZF) or
// (NL)^2/(NL-M-U) (MMSE).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <vector>

#include "cellfree/channel.hpp"
#include "cellfree/config.hpp"
#include "cellfree/precoding.hpp"

namespace cellfree {

inline double j_factor(PrecoderKind kind, const SystemConfig& cfg) {
    const double nl = static_cast<double>(cfg.total_antennas());
    const double a = zf_dof(cfg);
    switch (kind) {
        case PrecoderKind::MRT: return static_cast<double>(cfg.antennas_per_rau);
        case PrecoderKind::ZF:
            if (!(a > 0.0)) throw ConfigError("ZF needs NL > M + U");
            return a;
        case PrecoderKind::MMSE:
            if (!(a > 0.0)) throw ConfigError("MMSE needs NL > M + U");
            return nl * nl / a;
    }
    return 0.0;
}

struct SeReport {
    PrecoderKind kind = PrecoderKind::MRT;
    std::vector<double> sinr_unicast;
    std::vector<std::vector<double>> sinr_multicast;
    std::vector<double> se_unicast;
    std::vector<std::vector<double>> se_multicast;
    double prelog = 1.0;

    double min_multicast_se() const {
        double v = std::numeric_limits<double>::infinity();
        for (const auto& g : se_multicast)
            for (double s : g) v = std::min(v, s);
        return std::isinf(v) ? 0.0 : v;
    }
    double mean_unicast_se() const {
        if (se_unicast.empty()) return 0.0;
        return std::accumulate(se_unicast.begin(), se_unicast.end(), 0.0) / static_cast<double>(se_unicast.size());
    }
    double mean_multicast_se() const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& g : se_multicast)
            for (double v : g) {
                s += v;
                ++n;
            }
        return n ? s / static_cast<double>(n) : 0.0;
    }
};

// 1 - tau / T
inline double prelog(std::size_t tau, std::size_t coherence_length) {
    if (tau > coherence_length)
        throw ConfigError("pilot length " + std::to_string(tau) + " exceeds coherence length " +
                          std::to_string(coherence_length));
    return 1.0 - static_cast<double>(tau) / static_cast<double>(coherence_length);
}

inline double se_from_sinr(double sinr, std::size_t tau, std::size_t coherence_length) {
    return prelog(tau, coherence_length) * std::log2(1.0 + sinr);
}

// Fills the SE fields of a report from its SINR fields.
inline void se_from_sinr(SeReport& r, std::size_t tau, std::size_t coherence_length) {
    r.prelog = prelog(tau, coherence_length);
    r.se_unicast.resize(r.sinr_unicast.size());
    for (std::size_t i = 0; i < r.sinr_unicast.size(); ++i) r.se_unicast[i] = r.prelog * std::log2(1.0 + r.sinr_unicast[i]);
    r.se_multicast.resize(r.sinr_multicast.size());
    for (std::size_t m = 0; m < r.sinr_multicast.size(); ++m) {
        r.se_multicast[m].resize(r.sinr_multicast[m].size());
        for (std::size_t k = 0; k < r.sinr_multicast[m].size(); ++k)
            r.se_multicast[m][k] = r.prelog * std::log2(1.0 + r.sinr_multicast[m][k]);
    }
}

// SINR part only; call se_from_sinr to complete the report.
inline SeReport closed_form_sinr(PrecoderKind kind, const Scenario& scn, const EquivalentGains& gains,
                                 const PowerAllocation& alloc, const SystemConfig& cfg) {
    const double J = j_factor(kind, cfg);
    const double nl = static_cast<double>(cfg.total_antennas());
    const double total = alloc.downlink_total();

    SeReport r;
    r.kind = kind;
    r.sinr_unicast.resize(scn.n_unicast());
    for (std::size_t k = 0; k < scn.n_unicast(); ++k) {
        const double den = cfg.noise_dl + scn.beta.column_sum(k) * total / nl;
        r.sinr_unicast[k] = detail::safe_ratio(J * alloc.p_dl[k] * gains.theta[k], den);
    }
    r.sinr_multicast.resize(scn.n_groups());
    for (std::size_t m = 0; m < scn.n_groups(); ++m) {
        r.sinr_multicast[m].resize(scn.group_size(m));
        for (std::size_t k = 0; k < scn.group_size(m); ++k) {
            const double den = cfg.noise_dl + scn.eta[m].column_sum(k) * total / nl;
            r.sinr_multicast[m][k] = detail::safe_ratio(J * alloc.q_dl[m] * gains.zeta[m][k], den);
        }
    }
    return r;
}

inline SeReport closed_form_se(PrecoderKind kind, const Scenario& scn, const PowerAllocation& alloc,
                               const SystemConfig& cfg) {
    auto r = closed_form_sinr(kind, scn, equivalent_gains(scn, alloc, cfg), alloc, cfg);
    se_from_sinr(r, alloc.tau, cfg.coherence_length);
    return r;
}

// Vector-Jacobian product of the closed-form SINRs with respect to the
// allocation genes (p_ul || q_ul || p_dl || q_dl). `d_unicast[k]` and
// `d_multicast[m][k]` are upstream derivatives dLoss/dSINR.
inline std::vector<double> closed_form_sinr_vjp(PrecoderKind kind, const Scenario& scn, const EquivalentGains& gains,
                                                const PowerAllocation& alloc, const SystemConfig& cfg,
                                                std::span<const double> d_unicast,
                                                const std::vector<std::vector<double>>& d_multicast) {
    const double J = j_factor(kind, cfg);
    const double nl = static_cast<double>(cfg.total_antennas());
    const double total = alloc.downlink_total();
    const std::size_t U = scn.n_unicast();
    const std::size_t M = scn.n_groups();

    std::size_t mu_users = 0;
    std::vector<std::size_t> q_offset(M);
    for (std::size_t m = 0; m < M; ++m) {
        q_offset[m] = U + mu_users;
        mu_users += scn.group_size(m);
    }
    const std::size_t p_dl_off = U + mu_users;
    const std::size_t q_dl_off = p_dl_off + U;
    std::vector<double> grad(q_dl_off + M, 0.0);

    // Every SINR depends on the total downlink power through its denominator.
    double d_total = 0.0;
    for (std::size_t k = 0; k < U; ++k) {
        const double b = scn.beta.column_sum(k);
        const double den = cfg.noise_dl + b * total / nl;
        if (!(den > 0.0)) continue;
        const double s = J * alloc.p_dl[k] * gains.theta[k] / den;
        grad[p_dl_off + k] += d_unicast[k] * J * gains.theta[k] / den;
        d_total -= d_unicast[k] * s * b / (nl * den);
        grad[k] += d_unicast[k] * J * alloc.p_dl[k] / den * theta_derivative(scn, alloc, cfg.noise_ul, k);
    }
    for (std::size_t m = 0; m < M; ++m) {
        const auto jac = zeta_jacobian(scn, alloc, cfg.noise_ul, m);
        for (std::size_t k = 0; k < scn.group_size(m); ++k) {
            const double h = scn.eta[m].column_sum(k);
            const double den = cfg.noise_dl + h * total / nl;
            if (!(den > 0.0)) continue;
            const double up = d_multicast[m][k];
            const double s = J * alloc.q_dl[m] * gains.zeta[m][k] / den;
            grad[q_dl_off + m] += up * J * gains.zeta[m][k] / den;
            d_total -= up * s * h / (nl * den);
            for (std::size_t j = 0; j < scn.group_size(m); ++j)
                grad[q_offset[m] + j] += up * J * alloc.q_dl[m] / den * jac[k][j];
        }
    }
    for (std::size_t i = p_dl_off; i < grad.size(); ++i) grad[i] += d_total;
    return grad;
}

// kind,user_kind,group,index,sinr,se
inline void write_se_report_csv(std::ostream& os, const SeReport& r, bool header = true) {
    const auto f = detail::format_double;
    if (header) os << "kind,user_kind,group,index,sinr,se\n";
    for (std::size_t k = 0; k < r.sinr_unicast.size(); ++k)
        os << to_string(r.kind) << ",unicast,-1," << k << ',' << f(r.sinr_unicast[k]) << ','
           << f(k < r.se_unicast.size() ? r.se_unicast[k] : 0.0) << '\n';
    for (std::size_t m = 0; m < r.sinr_multicast.size(); ++m)
        for (std::size_t k = 0; k < r.sinr_multicast[m].size(); ++k)
            os << to_string(r.kind) << ",multicast," << m << ',' << k << ',' << f(r.sinr_multicast[m][k]) << ','
               << f(m < r.se_multicast.size() && k < r.se_multicast[m].size() ? r.se_multicast[m][k] : 0.0) << '\n';
}

}  // namespace cellfree
