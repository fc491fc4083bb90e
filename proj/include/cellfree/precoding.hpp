#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "cellfree/channel.hpp"
#include "cellfree/config.hpp"
#include "cellfree/errors.hpp"
#include "cellfree/numerics.hpp"

namespace cellfree {

enum class PrecoderKind { MRT, ZF, MMSE };

inline constexpr PrecoderKind kAllPrecoders[] = {PrecoderKind::MRT, PrecoderKind::ZF, PrecoderKind::MMSE};

inline std::string_view to_string(PrecoderKind k) {
    switch (k) {
        case PrecoderKind::MRT: return "MRT";
        case PrecoderKind::ZF: return "ZF";
        case PrecoderKind::MMSE: return "MMSE";
    }
    return "?";
}

inline PrecoderKind parse_precoder(std::string_view s) {
    if (s == "MRT" || s == "mrt") return PrecoderKind::MRT;
    if (s == "ZF" || s == "zf") return PrecoderKind::ZF;
    if (s == "MMSE" || s == "mmse") return PrecoderKind::MMSE;
    throw ParameterError("unknown precoder '" + std::string(s) + "'");
}

// Degrees of freedom left after nulling every stream: NL - M - U.
inline double zf_dof(const SystemConfig& cfg) {
    return static_cast<double>(cfg.total_antennas()) - static_cast<double>(cfg.streams());
}

inline void require_rank(PrecoderKind kind, const SystemConfig& cfg) {
    if (kind != PrecoderKind::MRT && !(zf_dof(cfg) > 0.0))
        throw ConfigError(std::string(to_string(kind)) + " needs NL > M + U (NL = " +
                          std::to_string(cfg.total_antennas()) + ", M + U = " + std::to_string(cfg.streams()) + ")");
}

// Identifies one downlink stream: a unicast user or a multicast group.
struct StreamRef {
    bool unicast = true;
    std::size_t index = 0;
};

// theta_u for unicast streams, upsilon_m for groups.
inline double stream_gain(const EquivalentGains& g, StreamRef s) {
    return s.unicast ? g.theta.at(s.index) : g.upsilon.at(s.index);
}

// E[a^H a] for the unnormalized precoder direction a of one stream:
// MRT L*gain, ZF 1/(A*gain), MMSE A*gain/(A*gain + noise_dl)^2.
inline double expected_norm_closed_form(PrecoderKind kind, const EquivalentGains& gains, const SystemConfig& cfg,
                                        StreamRef stream) {
    const double g = stream_gain(gains, stream);
    const double L = static_cast<double>(cfg.antennas_per_rau);
    const double A = zf_dof(cfg);
    switch (kind) {
        case PrecoderKind::MRT: return L * g;
        case PrecoderKind::ZF:
            if (!(A > 0.0)) throw ConfigError("ZF normalization needs NL > M + U");
            return 1.0 / (A * g);
        case PrecoderKind::MMSE: {
            if (!(A > 0.0)) throw ConfigError("MMSE normalization needs NL > M + U");
            const double d = A * g + cfg.noise_dl;
            return A * g / (d * d);
        }
    }
    return 0.0;
}

struct PrecodeSet {
    PrecoderKind kind = PrecoderKind::MRT;
    CMatrix v;  // NL x U
    CMatrix w;  // NL x M
};

// Q_hat = [C_hat, T_hat]: unicast estimates then one co-pilot estimate per group.
inline CMatrix stacked_estimates(const ChannelSample& sample) {
    const std::size_t NL = sample.c_hat.rows();
    const std::size_t U = sample.c_hat.cols();
    const std::size_t M = sample.t_hat_group.cols();
    CMatrix q(NL, U + M);
    for (std::size_t u = 0; u < U; ++u) std::copy(sample.c_hat.col(u).begin(), sample.c_hat.col(u).end(), q.col(u).begin());
    for (std::size_t m = 0; m < M; ++m)
        std::copy(sample.t_hat_group.col(m).begin(), sample.t_hat_group.col(m).end(), q.col(U + m).begin());
    return q;
}

// Builds all downlink precoders for one realization. Scales follow the
// closed-form E[a^H a] (statistical normalization), not the realization's
// own norms.
inline PrecodeSet build_precoders(PrecoderKind kind, const ChannelSample& sample, const EquivalentGains& gains,
                                  const PowerAllocation& alloc, const SystemConfig& cfg) {
    require_rank(kind, cfg);
    const std::size_t U = sample.c_hat.cols();
    const std::size_t M = sample.t_hat_group.cols();
    const std::size_t NL = sample.c_hat.rows();
    if (NL != cfg.total_antennas()) throw ParameterError("build_precoders: sample size does not match NL");

    for (std::size_t u = 0; u < U; ++u)
        if (!(gains.theta[u] > 0.0))
            throw NormalizationError("unicast user " + std::to_string(u) + " has zero estimated channel power (theta = 0)");
    for (std::size_t m = 0; m < M; ++m)
        if (!(gains.upsilon[m] > 0.0))
            throw NormalizationError("multicast group " + std::to_string(m) + " has zero estimated channel power (upsilon = 0)");

    const CMatrix q = stacked_estimates(sample);
    CMatrix dirs;  // NL x (U + M) unnormalized directions
    if (kind == PrecoderKind::MRT) {
        dirs = q;
    } else {
        CMatrix g = gram(q);
        if (kind == PrecoderKind::MMSE) g.add_to_diagonal(cfg.noise_dl);
        dirs = q * solve_hpd(g, CMatrix::identity(U + M));
    }

    PrecodeSet out{kind, CMatrix(NL, U), CMatrix(NL, M)};
    auto scale_into = [&](std::span<Complex> dst, std::span<const Complex> src, double power, StreamRef s) {
        const double scale = std::sqrt(power / expected_norm_closed_form(kind, gains, cfg, s));
        for (std::size_t r = 0; r < dst.size(); ++r) dst[r] = scale * src[r];
    };
    for (std::size_t u = 0; u < U; ++u) scale_into(out.v.col(u), dirs.col(u), alloc.p_dl[u], {true, u});
    for (std::size_t m = 0; m < M; ++m) scale_into(out.w.col(m), dirs.col(U + m), alloc.q_dl[m], {false, m});
    return out;
}

}  // namespace cellfree
