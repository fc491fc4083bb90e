#pragma once

// Unsupervised power allocator: an MLP from log large-scale fading to a
// PowerAllocation, trained with Adam on
//   loss = -(mean_u log2(1 + SINR_u) + min_{m,k} log2(1 + SINR_{m,k}))
// evaluated through the closed-form SINRs.
//
// Output layout: [p_dl (U), q_dl (M) | p_ul (U), q_ul (sum K_m)]. Each block
// goes through a softmax and is scaled by its budget; uplink entries are then
// clipped at their per-user caps.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "cellfree/channel.hpp"
#include "cellfree/config.hpp"
#include "cellfree/errors.hpp"
#include "cellfree/numerics.hpp"
#include "cellfree/precoding.hpp"
#include "cellfree/scenario.hpp"
#include "cellfree/spectral_efficiency.hpp"

namespace cellfree {

// Row-major dense layer: out = W in + b.
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> w;  // out x in
    std::vector<double> b;  // out
};

// Budgets and shape of the output head.
struct AllocatorHead {
    std::size_t n_unicast = 0;
    std::vector<std::size_t> group_sizes;
    double p_dl_total = 0.0;
    double p_ul_cap_unicast = 0.0;
    double p_ul_cap_multicast = 0.0;

    std::size_t n_groups() const { return group_sizes.size(); }
    std::size_t multicast_users() const {
        return std::accumulate(group_sizes.begin(), group_sizes.end(), std::size_t{0});
    }
    std::size_t downlink_outputs() const { return n_unicast + n_groups(); }
    std::size_t output_size() const { return 2 * n_unicast + n_groups() + multicast_users(); }
    double p_ul_total() const {
        return static_cast<double>(n_unicast) * p_ul_cap_unicast +
               static_cast<double>(multicast_users()) * p_ul_cap_multicast;
    }
    double uplink_cap(std::size_t j) const { return j < n_unicast ? p_ul_cap_unicast : p_ul_cap_multicast; }

    static AllocatorHead from(const SystemConfig& cfg, const PowerLimits& lim) {
        return {cfg.n_unicast, cfg.group_sizes, lim.P_dl, lim.P_ul_un, lim.P_ul_mu};
    }
};

struct MlpParams {
    std::vector<DenseLayer> layers;  // hidden layers use ReLU, the last is linear
    std::vector<double> input_mean;
    std::vector<double> input_std;
    AllocatorHead head;

    std::size_t input_size() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.size() + l.b.size();
        return n;
    }
    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w;
        if (layers.empty()) return w;
        w.push_back(layers.front().in);
        for (const auto& l : layers) w.push_back(l.out);
        return w;
    }
};

// Gradient storage shaped like the layers.
struct MlpGradients {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    static MlpGradients zeros_like(const MlpParams& p) {
        MlpGradients g;
        for (const auto& l : p.layers) {
            g.w.emplace_back(l.w.size(), 0.0);
            g.b.emplace_back(l.b.size(), 0.0);
        }
        return g;
    }
    void add(const MlpGradients& o, double scale = 1.0) {
        for (std::size_t l = 0; l < w.size(); ++l) {
            for (std::size_t i = 0; i < w[l].size(); ++i) w[l][i] += scale * o.w[l][i];
            for (std::size_t i = 0; i < b[l].size(); ++i) b[l][i] += scale * o.b[l][i];
        }
    }
};

// Input features: beta row-major (N x U), then each eta block row-major (N x K_m).
inline std::vector<double> raw_features(const Scenario& scn) {
    std::vector<double> x;
    for (std::size_t n = 0; n < scn.n_raus(); ++n)
        for (std::size_t u = 0; u < scn.n_unicast(); ++u) x.push_back(scn.beta(n, u));
    for (std::size_t m = 0; m < scn.n_groups(); ++m)
        for (std::size_t n = 0; n < scn.n_raus(); ++n)
            for (std::size_t k = 0; k < scn.group_size(m); ++k) x.push_back(scn.eta[m](n, k));
    return x;
}

inline std::size_t feature_count(const SystemConfig& cfg) {
    return cfg.n_raus * (cfg.n_unicast + cfg.multicast_users());
}

// log10 of the gains, standardized with the stored statistics.
inline std::vector<double> normalized_features(const MlpParams& p, const Scenario& scn) {
    auto x = raw_features(scn);
    if (x.size() != p.input_size())
        throw ParameterError("allocator expects " + std::to_string(p.input_size()) + " inputs, scenario gives " +
                             std::to_string(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = i < p.input_std.size() && p.input_std[i] > 0.0 ? p.input_std[i] : 1.0;
        const double mu = i < p.input_mean.size() ? p.input_mean[i] : 0.0;
        x[i] = (std::log10(x[i]) - mu) / s;
    }
    return x;
}

// He-initialized network with zero biases and identity input normalization.
inline MlpParams init_mlp(std::size_t inputs, const std::vector<std::size_t>& hidden, const AllocatorHead& head, Rng rng) {
    MlpParams p;
    p.head = head;
    std::vector<std::size_t> widths{inputs};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(head.output_size());
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer d{widths[l], widths[l + 1], std::vector<double>(widths[l] * widths[l + 1]),
                     std::vector<double>(widths[l + 1], 0.0)};
        const bool last = l + 2 == widths.size();
        const double sd = (last ? 0.1 : 1.0) * std::sqrt(2.0 / static_cast<double>(widths[l]));
        for (auto& w : d.w) w = sd * rng.normal();
        p.layers.push_back(std::move(d));
    }
    p.input_mean.assign(inputs, 0.0);
    p.input_std.assign(inputs, 1.0);
    return p;
}

// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
    std::vector<std::vector<double>> activations;  // activations[0] = input, then each layer output (post-ReLU)
    std::vector<double> logits;
    std::vector<double> softmax;  // per block
    std::vector<double> powers;   // after budget scaling and clipping
    std::vector<bool> clipped;
};

namespace detail {

inline void softmax_block(std::span<const double> g, std::span<double> out) {
    const double mx = *std::max_element(g.begin(), g.end());
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        out[i] = std::exp(g[i] - mx);
        s += out[i];
    }
    for (auto& v : out) v /= s;
}

}  // namespace detail

inline ForwardCache forward_cached(const MlpParams& p, std::span<const double> input) {
    if (p.layers.empty()) throw ParameterError("allocator has no layers");
    if (input.size() != p.input_size())
        throw ParameterError("allocator input width " + std::to_string(input.size()) + " does not match " +
                             std::to_string(p.input_size()));
    for (std::size_t l = 1; l < p.layers.size(); ++l)
        if (p.layers[l].in != p.layers[l - 1].out) throw ParameterError("allocator layer widths are inconsistent");
    if (p.layers.back().out != p.head.output_size()) throw ParameterError("allocator output width does not match head");

    ForwardCache c;
    c.activations.emplace_back(input.begin(), input.end());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& L = p.layers[l];
        const auto& x = c.activations.back();
        std::vector<double> y(L.b);
        for (std::size_t o = 0; o < L.out; ++o) {
            const double* row = L.w.data() + o * L.in;
            double s = 0.0;
            for (std::size_t i = 0; i < L.in; ++i) s += row[i] * x[i];
            y[o] += s;
        }
        if (l + 1 < p.layers.size()) {
            for (auto& v : y) v = std::max(0.0, v);
            c.activations.push_back(std::move(y));
        } else {
            c.logits = std::move(y);
        }
    }

    const std::size_t K = p.head.output_size();
    const std::size_t A = p.head.downlink_outputs();
    c.softmax.assign(K, 0.0);
    c.powers.assign(K, 0.0);
    c.clipped.assign(K, false);
    if (A > 0) detail::softmax_block(std::span(c.logits).subspan(0, A), std::span(c.softmax).subspan(0, A));
    if (K > A) detail::softmax_block(std::span(c.logits).subspan(A), std::span(c.softmax).subspan(A));
    for (std::size_t k = 0; k < A; ++k) c.powers[k] = p.head.p_dl_total * c.softmax[k];
    const double ul_total = p.head.p_ul_total();
    for (std::size_t k = A; k < K; ++k) {
        const double cap = p.head.uplink_cap(k - A);
        const double v = ul_total * c.softmax[k];
        c.clipped[k] = v > cap;
        c.powers[k] = std::min(v, cap);
    }
    return c;
}

// Network output vector [p_dl, q_dl | p_ul, q_ul].
inline std::vector<double> forward(const MlpParams& p, std::span<const double> input) {
    return forward_cached(p, input).powers;
}

// Reorders a network output into a PowerAllocation.
inline PowerAllocation allocation_from_output(const AllocatorHead& h, std::span<const double> out, std::size_t tau) {
    PowerAllocation a;
    const std::size_t U = h.n_unicast;
    const std::size_t M = h.n_groups();
    std::size_t i = 0;
    a.p_dl.assign(out.begin() + i, out.begin() + i + U);
    i += U;
    a.q_dl.assign(out.begin() + i, out.begin() + i + M);
    i += M;
    a.p_ul.assign(out.begin() + i, out.begin() + i + U);
    i += U;
    for (std::size_t m = 0; m < M; ++m) {
        a.q_ul.emplace_back(out.begin() + i, out.begin() + i + h.group_sizes[m]);
        i += h.group_sizes[m];
    }
    a.tau = tau;
    return a;
}

inline PowerAllocation infer_allocation(const MlpParams& p, const Scenario& scn, const SystemConfig& cfg) {
    return allocation_from_output(p.head, forward(p, normalized_features(p, scn)), cfg.streams());
}

// Rates without the prelog and the scalar objective built from them.
struct RateObjective {
    double mean_unicast_rate = 0.0;
    double min_multicast_rate = 0.0;
    double sum() const { return mean_unicast_rate + min_multicast_rate; }
};

inline RateObjective rate_objective(const SeReport& sinr) {
    RateObjective r;
    if (!sinr.sinr_unicast.empty()) {
        for (double s : sinr.sinr_unicast) r.mean_unicast_rate += std::log2(1.0 + s);
        r.mean_unicast_rate /= static_cast<double>(sinr.sinr_unicast.size());
    }
    double mn = std::numeric_limits<double>::infinity();
    for (const auto& g : sinr.sinr_multicast)
        for (double s : g) mn = std::min(mn, std::log2(1.0 + s));
    r.min_multicast_rate = std::isinf(mn) ? 0.0 : mn;
    return r;
}

inline RateObjective rate_objective(PrecoderKind kind, const Scenario& scn, const PowerAllocation& a,
                                    const SystemConfig& cfg) {
    return rate_objective(closed_form_sinr(kind, scn, equivalent_gains(scn, a, cfg), a, cfg));
}

struct LossOptions {
    double smooth_min_temperature = 0.0;  // 0: exact min
};

namespace detail {

// Loss for one scenario and dLoss/dSINR.
inline double scenario_loss(const SeReport& r, const LossOptions& opt, std::vector<double>* d_un,
                            std::vector<std::vector<double>>* d_mc) {
    const double ln2 = std::numbers::ln2;
    const std::size_t U = r.sinr_unicast.size();
    double loss = 0.0;
    if (d_un) d_un->assign(U, 0.0);
    if (d_mc) {
        d_mc->clear();
        for (const auto& g : r.sinr_multicast) d_mc->emplace_back(g.size(), 0.0);
    }
    for (std::size_t k = 0; k < U; ++k) {
        loss -= std::log2(1.0 + r.sinr_unicast[k]) / static_cast<double>(U);
        if (d_un) (*d_un)[k] = -1.0 / (static_cast<double>(U) * (1.0 + r.sinr_unicast[k]) * ln2);
    }
    if (r.sinr_multicast.empty()) return loss;

    if (opt.smooth_min_temperature > 0.0) {
        // -T log sum exp(-rate / T)
        const double T = opt.smooth_min_temperature;
        double mn = std::numeric_limits<double>::infinity();
        for (const auto& g : r.sinr_multicast)
            for (double s : g) mn = std::min(mn, std::log2(1.0 + s));
        double z = 0.0;
        for (const auto& g : r.sinr_multicast)
            for (double s : g) z += std::exp(-(std::log2(1.0 + s) - mn) / T);
        loss -= mn - T * std::log(z);
        if (d_mc)
            for (std::size_t m = 0; m < r.sinr_multicast.size(); ++m)
                for (std::size_t k = 0; k < r.sinr_multicast[m].size(); ++k) {
                    const double s = r.sinr_multicast[m][k];
                    const double w = std::exp(-(std::log2(1.0 + s) - mn) / T) / z;
                    (*d_mc)[m][k] = -w / ((1.0 + s) * ln2);
                }
        return loss;
    }

    // Exact min; ties go to the lowest (m, k).
    std::size_t bm = 0, bk = 0;
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < r.sinr_multicast.size(); ++m)
        for (std::size_t k = 0; k < r.sinr_multicast[m].size(); ++k) {
            const double v = std::log2(1.0 + r.sinr_multicast[m][k]);
            if (v < mn) {
                mn = v;
                bm = m;
                bk = k;
            }
        }
    loss -= mn;
    if (d_mc) (*d_mc)[bm][bk] = -1.0 / ((1.0 + r.sinr_multicast[bm][bk]) * ln2);
    return loss;
}

}  // namespace detail

// Loss of a fixed allocation on one scenario.
inline double allocation_loss(const PowerAllocation& a, const Scenario& scn, PrecoderKind kind, const SystemConfig& cfg,
                              const LossOptions& opt = {}) {
    const auto r = closed_form_sinr(kind, scn, equivalent_gains(scn, a, cfg), a, cfg);
    return detail::scenario_loss(r, opt, nullptr, nullptr);
}

// Mean loss of a list of allocations over their scenarios.
inline double loss(const std::vector<PowerAllocation>& allocs, const std::vector<const Scenario*>& batch,
                   PrecoderKind kind, const SystemConfig& cfg, const LossOptions& opt = {}) {
    if (allocs.size() != batch.size() || batch.empty()) throw ParameterError("loss: batch size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) s += allocation_loss(allocs[i], *batch[i], kind, cfg, opt);
    return s / static_cast<double>(batch.size());
}

// Loss of the network on one scenario; accumulates scale * dLoss/dparams into grad if given.
inline double network_loss(const MlpParams& p, const Scenario& scn, PrecoderKind kind, const SystemConfig& cfg,
                           const LossOptions& opt, MlpGradients* grad, double scale = 1.0) {
    const auto x = normalized_features(p, scn);
    const auto c = forward_cached(p, x);
    const auto alloc = allocation_from_output(p.head, c.powers, cfg.streams());
    const auto gains = equivalent_gains(scn, alloc, cfg);
    const auto r = closed_form_sinr(kind, scn, gains, alloc, cfg);
    std::vector<double> d_un;
    std::vector<std::vector<double>> d_mc;
    const double value = detail::scenario_loss(r, opt, grad ? &d_un : nullptr, grad ? &d_mc : nullptr);
    if (!grad) return value;

    // Genes are p_ul || q_ul || p_dl || q_dl; outputs are p_dl, q_dl | p_ul, q_ul.
    const auto d_genes = closed_form_sinr_vjp(kind, scn, gains, alloc, cfg, d_un, d_mc);
    const std::size_t U = p.head.n_unicast;
    const std::size_t M = p.head.n_groups();
    const std::size_t KM = p.head.multicast_users();
    const std::size_t K = p.head.output_size();
    const std::size_t A = p.head.downlink_outputs();
    std::vector<double> d_out(K, 0.0);
    for (std::size_t u = 0; u < U; ++u) d_out[u] = d_genes[U + KM + u];
    for (std::size_t m = 0; m < M; ++m) d_out[U + m] = d_genes[2 * U + KM + m];
    for (std::size_t j = 0; j < U + KM; ++j) d_out[A + j] = c.clipped[A + j] ? 0.0 : d_genes[j];

    // Through budget * softmax, per block: dg_i = s_i * B * (d_i - sum_j s_j d_j).
    std::vector<double> d_logit(K, 0.0);
    const auto block = [&](std::size_t lo, std::size_t hi, double budget) {
        double dot = 0.0;
        for (std::size_t i = lo; i < hi; ++i) dot += c.softmax[i] * d_out[i];
        for (std::size_t i = lo; i < hi; ++i) d_logit[i] = budget * c.softmax[i] * (d_out[i] - dot);
    };
    block(0, A, p.head.p_dl_total);
    block(A, K, p.head.p_ul_total());

    std::vector<double> delta = std::move(d_logit);
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        const auto& L = p.layers[l];
        const auto& in = c.activations[l];
        for (std::size_t o = 0; o < L.out; ++o) {
            if (delta[o] == 0.0) continue;
            grad->b[l][o] += scale * delta[o];
            double* gw = grad->w[l].data() + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) gw[i] += scale * delta[o] * in[i];
        }
        if (l == 0) break;
        std::vector<double> prev(L.in, 0.0);
        for (std::size_t o = 0; o < L.out; ++o) {
            if (delta[o] == 0.0) continue;
            const double* row = L.w.data() + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) prev[i] += row[i] * delta[o];
        }
        // ReLU gate of the layer below
        for (std::size_t i = 0; i < L.in; ++i)
            if (!(in[i] > 0.0)) prev[i] = 0.0;
        delta = std::move(prev);
    }
    return value;
}

// Mean batch loss and its gradient.
inline double backward(const MlpParams& p, const std::vector<const Scenario*>& batch, PrecoderKind kind,
                       const SystemConfig& cfg, MlpGradients& grad, const LossOptions& opt = {}) {
    if (batch.empty()) throw ParameterError("backward: empty batch");
    grad = MlpGradients::zeros_like(p);
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto* s : batch) total += network_loss(p, *s, kind, cfg, opt, &grad, w);
    return total * w;
}

inline double batch_loss(const MlpParams& p, const std::vector<const Scenario*>& batch, PrecoderKind kind,
                         const SystemConfig& cfg, const LossOptions& opt = {}) {
    if (batch.empty()) throw ParameterError("batch_loss: empty batch");
    double total = 0.0;
    for (const auto* s : batch) total += network_loss(p, *s, kind, cfg, opt, nullptr);
    return total / static_cast<double>(batch.size());
}

class Adam {
public:
    Adam(const MlpParams& p, const TrainConfig& tc) : tc_(tc), m_(MlpGradients::zeros_like(p)), v_(MlpGradients::zeros_like(p)) {}

    void step(MlpParams& p, const MlpGradients& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(tc_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(tc_.beta2, static_cast<double>(t_));
        const auto update = [&](std::vector<double>& x, const std::vector<double>& gr, std::vector<double>& m,
                                std::vector<double>& v) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                m[i] = tc_.beta1 * m[i] + (1.0 - tc_.beta1) * gr[i];
                v[i] = tc_.beta2 * v[i] + (1.0 - tc_.beta2) * gr[i] * gr[i];
                x[i] -= tc_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + tc_.epsilon);
            }
        };
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            update(p.layers[l].w, g.w[l], m_.w[l], v_.w[l]);
            update(p.layers[l].b, g.b[l], m_.b[l], v_.b[l]);
        }
    }

private:
    TrainConfig tc_;
    MlpGradients m_, v_;
    std::size_t t_ = 0;
};

struct TrainLogRow {
    std::size_t iteration = 0;
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when not validated this iteration
    double wall_ms = 0.0;
};

struct TrainResult {
    MlpParams params;  // best validation loss
    std::vector<TrainLogRow> log;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_iteration = 0;
};

// Scenario set drawn from the configured geometry; element i uses substream i.
inline std::vector<Scenario> sample_scenarios(const SystemConfig& cfg, const Rng& rng, std::size_t count) {
    std::vector<Scenario> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(place_uniform(cfg, rng.substream(i)));
    return out;
}

// Per-feature mean and std of log10 gains.
inline void fit_input_normalization(MlpParams& p, const std::vector<Scenario>& train) {
    const std::size_t n = p.input_size();
    std::vector<double> s1(n, 0.0), s2(n, 0.0);
    for (const auto& s : train) {
        const auto x = raw_features(s);
        for (std::size_t i = 0; i < n; ++i) {
            const double v = std::log10(x[i]);
            s1[i] += v;
            s2[i] += v * v;
        }
    }
    const double cnt = static_cast<double>(train.size());
    p.input_mean.assign(n, 0.0);
    p.input_std.assign(n, 1.0);
    if (train.empty()) return;
    for (std::size_t i = 0; i < n; ++i) {
        p.input_mean[i] = s1[i] / cnt;
        const double var = std::max(0.0, s2[i] / cnt - p.input_mean[i] * p.input_mean[i]);
        p.input_std[i] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
}

inline TrainResult train(const SystemConfig& cfg, const PowerLimits& lim, PrecoderKind kind, const TrainConfig& tc,
                         const Rng& rng) {
    if (!(tc.beta1 > 0.0 && tc.beta1 < 1.0 && tc.beta2 > 0.0 && tc.beta2 < 1.0))
        throw ParameterError("Adam betas must lie in (0, 1)");
    if (tc.batch_size < 1) throw ParameterError("batch size must be >= 1");
    require_rank(kind, cfg);

    const auto train_set = sample_scenarios(cfg, rng.substream("train"), std::max<std::size_t>(1, tc.train_scenarios));
    const auto val_set = sample_scenarios(cfg, rng.substream("validation"), tc.validation_scenarios);
    std::vector<const Scenario*> val_ptrs;
    for (const auto& s : val_set) val_ptrs.push_back(&s);

    TrainResult res;
    MlpParams p = init_mlp(feature_count(cfg), tc.hidden, AllocatorHead::from(cfg, lim), rng.substream("init"));
    fit_input_normalization(p, train_set);
    Adam adam(p, tc);
    Rng batch_rng = rng.substream("batches");
    const LossOptions opt{tc.smooth_min_temperature};
    const auto t0 = std::chrono::steady_clock::now();

    const auto validate = [&](std::size_t it, TrainLogRow& row) {
        if (val_ptrs.empty()) return;
        row.val_loss = batch_loss(p, val_ptrs, kind, cfg, opt);
        if (!std::isfinite(row.val_loss)) throw TrainingError("validation loss is not finite", it);
        if (row.val_loss < res.best_val_loss) {
            res.best_val_loss = row.val_loss;
            res.best_iteration = it;
            res.params = p;
        }
    };

    TrainLogRow first{0, batch_loss(p, val_ptrs.empty() ? std::vector<const Scenario*>{&train_set[0]} : val_ptrs, kind, cfg, opt)};
    validate(0, first);
    res.log.push_back(first);

    MlpGradients grad;
    std::vector<const Scenario*> batch(tc.batch_size);
    for (std::size_t it = 1; it <= tc.iterations; ++it) {
        for (auto& b : batch) b = &train_set[batch_rng.uniform_index(train_set.size())];
        TrainLogRow row;
        row.iteration = it;
        row.train_loss = backward(p, batch, kind, cfg, grad, opt);
        if (!std::isfinite(row.train_loss)) throw TrainingError("training loss is not finite", it);
        adam.step(p, grad);
        if (tc.validate_every > 0 && (it % tc.validate_every == 0 || it == tc.iterations)) validate(it, row);
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        res.log.push_back(row);
    }
    if (val_ptrs.empty() || res.params.layers.empty()) res.params = p;
    return res;
}

// iter,train_loss,val_loss,wall_ms. Wall times are only written when
// asked for, so the default log is reproducible byte for byte.
inline void write_train_log_csv(std::ostream& os, const std::vector<TrainLogRow>& log, bool with_timing = false) {
    const auto f = detail::format_double;
    os << "iter,train_loss,val_loss,wall_ms\n";
    for (const auto& r : log) {
        os << r.iteration << ',' << f(r.train_loss) << ',' << (std::isnan(r.val_loss) ? std::string("-") : f(r.val_loss))
           << ',' << (with_timing ? f(r.wall_ms) : std::string("-")) << '\n';
    }
}

// ---- model file -----------------------------------------------------------
//
// magic "CFSEMLP1"; then little-endian u64/f64 fields:
//   u64 layer_count, u64 widths[layer_count + 1]
//   u64 n_unicast, u64 n_groups, u64 group_sizes[n_groups]
//   f64 p_dl_total, f64 p_ul_cap_unicast, f64 p_ul_cap_multicast
//   f64 input_mean[w0], f64 input_std[w0]
//   per layer: f64 W[out * in] (row-major), f64 b[out]

inline constexpr char kModelMagic[8] = {'C', 'F', 'S', 'E', 'M', 'L', 'P', '1'};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw ParameterError("model file truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline std::size_t get_count(std::istream& is, std::uint64_t limit = 1u << 24) {
    const auto v = get_u64(is);
    if (v > limit) throw ParameterError("model file has an implausible size field");
    return static_cast<std::size_t>(v);
}

}  // namespace detail

inline void save_model(std::ostream& os, const MlpParams& p) {
    os.write(kModelMagic, sizeof kModelMagic);
    const auto widths = p.widths();
    detail::put_u64(os, p.layers.size());
    for (auto w : widths) detail::put_u64(os, w);
    detail::put_u64(os, p.head.n_unicast);
    detail::put_u64(os, p.head.n_groups());
    for (auto k : p.head.group_sizes) detail::put_u64(os, k);
    detail::put_f64(os, p.head.p_dl_total);
    detail::put_f64(os, p.head.p_ul_cap_unicast);
    detail::put_f64(os, p.head.p_ul_cap_multicast);
    for (double v : p.input_mean) detail::put_f64(os, v);
    for (double v : p.input_std) detail::put_f64(os, v);
    for (const auto& l : p.layers) {
        for (double v : l.w) detail::put_f64(os, v);
        for (double v : l.b) detail::put_f64(os, v);
    }
}

inline MlpParams load_model(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0) throw ParameterError("not a model file (bad magic)");
    MlpParams p;
    const std::size_t n_layers = detail::get_count(is);
    if (n_layers < 1) throw ParameterError("model file has no layers");
    std::vector<std::size_t> widths(n_layers + 1);
    for (auto& w : widths) {
        w = detail::get_count(is);
        if (w < 1) throw ParameterError("model file has a zero layer width");
    }
    p.head.n_unicast = detail::get_count(is);
    p.head.group_sizes.resize(detail::get_count(is));
    for (auto& k : p.head.group_sizes) k = detail::get_count(is);
    p.head.p_dl_total = detail::get_f64(is);
    p.head.p_ul_cap_unicast = detail::get_f64(is);
    p.head.p_ul_cap_multicast = detail::get_f64(is);
    if (p.head.output_size() != widths.back()) throw ParameterError("model head does not match the output width");
    p.input_mean.resize(widths[0]);
    p.input_std.resize(widths[0]);
    for (auto& v : p.input_mean) v = detail::get_f64(is);
    for (auto& v : p.input_std) v = detail::get_f64(is);
    for (std::size_t l = 0; l < n_layers; ++l) {
        DenseLayer d{widths[l], widths[l + 1], std::vector<double>(widths[l] * widths[l + 1]),
                     std::vector<double>(widths[l + 1])};
        for (auto& v : d.w) v = detail::get_f64(is);
        for (auto& v : d.b) v = detail::get_f64(is);
        p.layers.push_back(std::move(d));
    }
    return p;
}

}  // namespace cellfree
