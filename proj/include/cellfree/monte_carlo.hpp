#pragma once

// Empirical estimation of the downlink SINR from its definition
//
//   SINR_k = |E[c_k^H v_k]|^2 / (noise_dl - |E[c_k^H v_k]|^2
//                                 + sum_u E|c_k^H v_u|^2 + sum_r E|c_k^H w_r|^2)
//
// (and the multicast twin with t_{m,k}, w_m), where every expectation runs
// over small-scale fading and pilot noise jointly. Realization r always uses
// substream r of the caller's Rng, and partial sums are merged in a fixed
// chunk order, so results do not depend on the worker count.

#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cellfree/channel.hpp"
#include "cellfree/numerics.hpp"
#include "cellfree/parallel.hpp"
#include "cellfree/precoding.hpp"
#include "cellfree/spectral_efficiency.hpp"

namespace cellfree {

inline constexpr double kZ95 = 1.96;

struct McEstimate {
    double mean = 0.0;
    double half_width_95 = 0.0;
    std::size_t n_samples = 0;
};

// Streaming mean/variance (Welford), mergeable with Chan's update.
class Welford {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }

    void merge(const Welford& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) {
            *this = o;
            return;
        }
        const double n = static_cast<double>(n_ + o.n_);
        const double d = o.mean_ - mean_;
        mean_ += d * static_cast<double>(o.n_) / n;
        m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
        n_ += o.n_;
    }

    std::size_t count() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double standard_error() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

    McEstimate estimate() const { return {mean_, kZ95 * standard_error(), n_}; }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// Bivariate Welford for a complex sample (real/imaginary covariance).
class ComplexMoments {
public:
    void add(Complex z) {
        ++n_;
        const double n = static_cast<double>(n_);
        const double dr = z.real() - mr_;
        const double di = z.imag() - mi_;
        mr_ += dr / n;
        mi_ += di / n;
        crr_ += dr * (z.real() - mr_);
        cii_ += di * (z.imag() - mi_);
        cri_ += dr * (z.imag() - mi_);
    }

    void merge(const ComplexMoments& o) {
        if (o.n_ == 0) return;
        if (n_ == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n_);
        const double nb = static_cast<double>(o.n_);
        const double n = na + nb;
        const double dr = o.mr_ - mr_;
        const double di = o.mi_ - mi_;
        crr_ += o.crr_ + dr * dr * na * nb / n;
        cii_ += o.cii_ + di * di * na * nb / n;
        cri_ += o.cri_ + dr * di * na * nb / n;
        mr_ += dr * nb / n;
        mi_ += di * nb / n;
        n_ += o.n_;
    }

    std::size_t count() const { return n_; }
    Complex mean() const { return {mr_, mi_}; }
    double var_real() const { return n_ > 1 ? crr_ / static_cast<double>(n_ - 1) : 0.0; }
    double var_imag() const { return n_ > 1 ? cii_ / static_cast<double>(n_ - 1) : 0.0; }
    double cov() const { return n_ > 1 ? cri_ / static_cast<double>(n_ - 1) : 0.0; }

    McEstimate real_part() const {
        return {mr_, kZ95 * std::sqrt(var_real() / static_cast<double>(std::max<std::size_t>(n_, 1))), n_};
    }
    McEstimate imag_part() const {
        return {mi_, kZ95 * std::sqrt(var_imag() / static_cast<double>(std::max<std::size_t>(n_, 1))), n_};
    }

    // |mean|^2 with a delta-method interval.
    McEstimate squared_magnitude_of_mean() const {
        const double a = mr_;
        const double b = mi_;
        const double v = 4.0 * (a * a * var_real() + b * b * var_imag() + 2.0 * a * b * cov());
        return {a * a + b * b, kZ95 * std::sqrt(std::max(v, 0.0) / static_cast<double>(std::max<std::size_t>(n_, 1))),
                n_};
    }

private:
    std::size_t n_ = 0;
    double mr_ = 0.0, mi_ = 0.0;
    double crr_ = 0.0, cii_ = 0.0, cri_ = 0.0;
};

enum class Sampler { Statistical, Pilot };

inline Sampler parse_sampler(std::string_view s) {
    if (s == "statistical") return Sampler::Statistical;
    if (s == "pilot") return Sampler::Pilot;
    throw ParameterError("unknown sampler '" + std::string(s) + "'");
}

struct McOptions {
    Sampler sampler = Sampler::Statistical;
    std::size_t threads = 0;  // 0: CELLFREE_SE_THREADS or 1
};

// Terms of one user's SINR, all estimated from the same realizations.
struct McUserTerms {
    Complex signal_mean{};
    McEstimate signal_real;
    McEstimate signal_imag;
    McEstimate numerator;         // |E[x_kk]|^2
    McEstimate signal_variance;   // E|x_kk|^2 - |E[x_kk]|^2
    std::vector<McEstimate> unicast_terms;    // E|x_{k,u}|^2, u = 0..U-1
    std::vector<McEstimate> multicast_terms;  // E|x_{k,U+r}|^2, r = 0..M-1
    McEstimate interference_sum;  // E[sum over every stream of |x|^2]
    McEstimate sinr;
};

struct McSinrReport {
    PrecoderKind kind = PrecoderKind::MRT;
    std::size_t n_realizations = 0;
    std::vector<McUserTerms> unicast;
    std::vector<std::vector<McUserTerms>> multicast;

    std::vector<double> sinr_unicast() const {
        std::vector<double> v;
        for (const auto& u : unicast) v.push_back(u.sinr.mean);
        return v;
    }
    std::vector<std::vector<double>> sinr_multicast() const {
        std::vector<std::vector<double>> v;
        for (const auto& g : multicast) {
            v.emplace_back();
            for (const auto& u : g) v.back().push_back(u.sinr.mean);
        }
        return v;
    }
    // As an SeReport (SINR part), for SE conversion and CSV output.
    SeReport as_se_report() const {
        SeReport r;
        r.kind = kind;
        r.sinr_unicast = sinr_unicast();
        r.sinr_multicast = sinr_multicast();
        return r;
    }
};

namespace detail {

struct UserAccumulator {
    ComplexMoments signal;
    std::vector<Welford> terms;  // one per stream, unicast first
    Welford total;

    explicit UserAccumulator(std::size_t streams = 0) : terms(streams) {}

    void merge(const UserAccumulator& o) {
        signal.merge(o.signal);
        for (std::size_t i = 0; i < terms.size(); ++i) terms[i].merge(o.terms[i]);
        total.merge(o.total);
    }
};

struct McAccumulation {
    std::vector<UserAccumulator> unicast;
    std::vector<std::vector<UserAccumulator>> multicast;

    McAccumulation(const Scenario& scn) {
        const std::size_t S = scn.n_unicast() + scn.n_groups();
        unicast.assign(scn.n_unicast(), UserAccumulator(S));
        for (std::size_t m = 0; m < scn.n_groups(); ++m) multicast.emplace_back(scn.group_size(m), UserAccumulator(S));
    }

    void merge(const McAccumulation& o) {
        for (std::size_t k = 0; k < unicast.size(); ++k) unicast[k].merge(o.unicast[k]);
        for (std::size_t m = 0; m < multicast.size(); ++m)
            for (std::size_t k = 0; k < multicast[m].size(); ++k) multicast[m][k].merge(o.multicast[m][k]);
    }
};

inline void accumulate_rows(const CMatrix& truth, const CMatrix& precoders, std::size_t signal_col,
                            std::vector<UserAccumulator>& acc, bool per_row_signal) {
    const CMatrix x = truth.adjoint_times(precoders);  // users x streams
    for (std::size_t k = 0; k < x.rows(); ++k) {
        auto& a = acc[k];
        double total = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double p = std::norm(x(k, j));
            a.terms[j].add(p);
            total += p;
        }
        a.total.add(total);
        a.signal.add(x(k, per_row_signal ? k : signal_col));
    }
}

inline constexpr std::size_t kRealizationsPerChunk = 256;

inline McAccumulation accumulate(PrecoderKind kind, const Scenario& scn, const PowerAllocation& alloc,
                                 const SystemConfig& cfg, std::size_t n_real, const Rng& rng,
                                 const McOptions& opt) {
    if (n_real < 2) throw ParameterError("Monte Carlo needs at least 2 realizations");
    require_rank(kind, cfg);
    const EquivalentGains gains = equivalent_gains(scn, alloc, cfg);
    const std::size_t U = scn.n_unicast();
    const std::size_t M = scn.n_groups();
    const std::size_t NL = cfg.total_antennas();

    const std::size_t n_chunks = (n_real + kRealizationsPerChunk - 1) / kRealizationsPerChunk;
    std::vector<std::optional<McAccumulation>> partial(n_chunks);
    for_each_chunk(n_chunks, resolve_threads(opt.threads), [&](std::size_t chunk) {
        McAccumulation acc(scn);
        const std::size_t begin = chunk * kRealizationsPerChunk;
        const std::size_t end = std::min(n_real, begin + kRealizationsPerChunk);
        CMatrix all(NL, U + M);
        for (std::size_t r = begin; r < end; ++r) {
            Rng sub = rng.substream(static_cast<std::uint64_t>(r));
            const ChannelSample s = opt.sampler == Sampler::Pilot ? draw_sample_pilot(scn, alloc, cfg, sub)
                                                                  : draw_sample_statistical(scn, alloc, cfg, gains, sub);
            const PrecodeSet p = build_precoders(kind, s, gains, alloc, cfg);
            for (std::size_t u = 0; u < U; ++u) std::copy(p.v.col(u).begin(), p.v.col(u).end(), all.col(u).begin());
            for (std::size_t m = 0; m < M; ++m) std::copy(p.w.col(m).begin(), p.w.col(m).end(), all.col(U + m).begin());
            accumulate_rows(s.c, all, 0, acc.unicast, true);
            for (std::size_t m = 0; m < M; ++m) accumulate_rows(s.t[m], all, U + m, acc.multicast[m], false);
        }
        partial[chunk] = std::move(acc);
    });

    McAccumulation total(scn);
    for (auto& p : partial) total.merge(*p);
    return total;
}

inline McUserTerms summarize(const UserAccumulator& a, std::size_t own_stream, std::size_t U, double noise_dl) {
    McUserTerms t;
    t.signal_mean = a.signal.mean();
    t.signal_real = a.signal.real_part();
    t.signal_imag = a.signal.imag_part();
    t.numerator = a.signal.squared_magnitude_of_mean();
    for (std::size_t j = 0; j < a.terms.size(); ++j)
        (j < U ? t.unicast_terms : t.multicast_terms).push_back(a.terms[j].estimate());
    const McEstimate own = a.terms[own_stream].estimate();
    t.signal_variance = {own.mean - t.numerator.mean, std::hypot(own.half_width_95, t.numerator.half_width_95),
                         own.n_samples};
    t.interference_sum = a.total.estimate();

    const double num = t.numerator.mean;
    const double den = noise_dl - num + t.interference_sum.mean;
    const std::size_t n = a.signal.count();
    if (num == 0.0 || !(den > 0.0)) {
        t.sinr = {0.0, 0.0, n};
        return t;
    }
    const double sinr = num / den;
    const double den_hw = std::hypot(t.interference_sum.half_width_95, t.numerator.half_width_95);
    const double rel = std::hypot(t.numerator.half_width_95 / num, den_hw / den);
    t.sinr = {sinr, sinr * rel, n};
    return t;
}

}  // namespace detail

inline McSinrReport estimate_sinr(PrecoderKind kind, const Scenario& scn, const PowerAllocation& alloc,
                                  const SystemConfig& cfg, std::size_t n_real, const Rng& rng,
                                  const McOptions& opt = {}) {
    if (n_real < 2) throw ParameterError("estimate_sinr: need at least 2 realizations");
    const auto acc = detail::accumulate(kind, scn, alloc, cfg, n_real, rng, opt);
    const std::size_t U = scn.n_unicast();
    McSinrReport r;
    r.kind = kind;
    r.n_realizations = n_real;
    for (std::size_t k = 0; k < U; ++k) r.unicast.push_back(detail::summarize(acc.unicast[k], k, U, cfg.noise_dl));
    for (std::size_t m = 0; m < scn.n_groups(); ++m) {
        r.multicast.emplace_back();
        for (const auto& a : acc.multicast[m]) r.multicast.back().push_back(detail::summarize(a, U + m, U, cfg.noise_dl));
    }
    return r;
}

// One labelled expectation: Monte Carlo estimate next to its closed form.
struct AppendixTerm {
    PrecoderKind kind = PrecoderKind::MRT;
    std::string term;  // signal_mean, signal_imag, self_second_moment, cross_unicast:<u>, cross_multicast:<r>
    std::string user;  // un:<k> or mc:<m>:<k>
    McEstimate mc;
    double closed_form = 0.0;
    double rel_err = 0.0;  // |mc - cf| / |cf|; for signal_imag, |mc| / signal closed form
};

inline std::vector<AppendixTerm> appendix_terms_from_report(const McSinrReport& rep, const Scenario& scn,
                                                            const EquivalentGains& gains, const PowerAllocation& alloc,
                                                            const SystemConfig& cfg) {
    const double J = j_factor(rep.kind, cfg);
    const double nl = static_cast<double>(cfg.total_antennas());
    const std::size_t U = scn.n_unicast();
    const std::size_t M = scn.n_groups();
    std::vector<AppendixTerm> out;
    auto push = [&](std::string term, std::string user, McEstimate mc, double cf, double scale) {
        const double err = std::abs(mc.mean - cf) / std::abs(scale);
        out.push_back({rep.kind, std::move(term), std::move(user), mc, cf, scale != 0.0 ? err : 0.0});
    };
    auto emit_user = [&](const McUserTerms& t, const std::string& label, double power, double gain, double path_sum,
                         std::size_t own) {
        const double signal = std::sqrt(J * power * gain);
        push("signal_mean", label, t.signal_real, signal, signal);
        push("signal_imag", label, t.signal_imag, 0.0, signal);
        const McEstimate self = own < U ? t.unicast_terms[own] : t.multicast_terms[own - U];
        const double self_cf = J * power * gain + power * path_sum / nl;
        push("self_second_moment", label, self, self_cf, self_cf);
        for (std::size_t u = 0; u < U; ++u) {
            if (u == own) continue;
            const double cf = alloc.p_dl[u] * path_sum / nl;
            push("cross_unicast:" + std::to_string(u), label, t.unicast_terms[u], cf, cf);
        }
        for (std::size_t r = 0; r < M; ++r) {
            if (U + r == own) continue;
            const double cf = alloc.q_dl[r] * path_sum / nl;
            push("cross_multicast:" + std::to_string(r), label, t.multicast_terms[r], cf, cf);
        }
    };
    for (std::size_t k = 0; k < U; ++k)
        emit_user(rep.unicast[k], "un:" + std::to_string(k), alloc.p_dl[k], gains.theta[k], scn.beta.column_sum(k), k);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t k = 0; k < scn.group_size(m); ++k)
            emit_user(rep.multicast[m][k], "mc:" + std::to_string(m) + ":" + std::to_string(k), alloc.q_dl[m],
                      gains.zeta[m][k], scn.eta[m].column_sum(k), U + m);
    return out;
}

inline std::vector<AppendixTerm> estimate_appendix_terms(PrecoderKind kind, const Scenario& scn,
                                                         const PowerAllocation& alloc, const SystemConfig& cfg,
                                                         std::size_t n_real, const Rng& rng, const McOptions& opt = {}) {
    const auto rep = estimate_sinr(kind, scn, alloc, cfg, n_real, rng, opt);
    return appendix_terms_from_report(rep, scn, equivalent_gains(scn, alloc, cfg), alloc, cfg);
}

// kind,term,user,mc_mean,ci,closed_form,rel_err
inline void write_appendix_csv(std::ostream& os, const std::vector<AppendixTerm>& terms, bool header = true) {
    const auto f = detail::format_double;
    if (header) os << "kind,term,user,mc_mean,ci,closed_form,rel_err\n";
    for (const auto& t : terms)
        os << to_string(t.kind) << ',' << t.term << ',' << t.user << ',' << f(t.mc.mean) << ','
           << f(t.mc.half_width_95) << ',' << f(t.closed_form) << ',' << f(t.rel_err) << '\n';
}

}  // namespace cellfree
