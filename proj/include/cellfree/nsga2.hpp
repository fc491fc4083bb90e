#pragma once

// Constrained NSGA-II over the flattened allocation
// (p_ul || q_ul || p_dl || q_dl), maximizing
//   f1 = min multicast SE,  f2 = mean unicast SE
// under the SE minima and the downlink sum-power caps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

#include "cellfree/config.hpp"
#include "cellfree/numerics.hpp"
#include "cellfree/parallel.hpp"
#include "cellfree/precoding.hpp"
#include "cellfree/scenario.hpp"
#include "cellfree/spectral_efficiency.hpp"

namespace cellfree {

struct Individual {
    std::vector<double> genes;
    double f1 = 0.0;
    double f2 = 0.0;
    double violation = 0.0;
    std::size_t rank = 0;
    double crowding = 0.0;

    bool feasible() const { return violation == 0.0; }
};

struct Objectives {
    double f1 = 0.0;
    double f2 = 0.0;
    double violation = 0.0;
};

// Per-gene box [0, cap].
inline std::vector<double> gene_upper_bounds(const SystemConfig& cfg, const PowerLimits& lim) {
    std::vector<double> ub;
    ub.insert(ub.end(), cfg.n_unicast, lim.P_ul_un);
    ub.insert(ub.end(), cfg.multicast_users(), lim.P_ul_mu);
    ub.insert(ub.end(), cfg.n_unicast, lim.P_dl_un);
    ub.insert(ub.end(), cfg.n_groups, lim.P_dl_mu);
    return ub;
}

namespace detail {

// max(0, value - bound) / bound, or the raw excess for a zero bound.
// Rounding-level excesses (a repaired budget sitting on its cap) count as 0.
inline double normalized_excess(double value, double bound) {
    const double excess = value - bound;
    if (!(excess > 1e-12 * std::max(bound, 1.0))) return 0.0;
    return bound > 0.0 ? excess / bound : excess;
}

inline double normalized_shortfall(double value, double minimum) {
    if (!(minimum > 0.0) || value >= minimum) return 0.0;
    return (minimum - value) / minimum;
}

}  // namespace detail

inline Objectives evaluate(std::span<const double> genes, PrecoderKind kind, const Scenario& scn,
                           const SystemConfig& cfg, const PowerLimits& lim) {
    PowerAllocation a = PowerAllocation::unflatten(cfg, genes);
    a.tau = cfg.streams();
    auto r = closed_form_sinr(kind, scn, equivalent_gains(scn, a, cfg), a, cfg);
    se_from_sinr(r, a.tau, cfg.coherence_length);

    Objectives o;
    o.f1 = r.min_multicast_se();
    o.f2 = r.mean_unicast_se();
    for (double s : r.se_unicast) o.violation += detail::normalized_shortfall(s, lim.se_min_unicast);
    for (const auto& g : r.se_multicast)
        for (double s : g) o.violation += detail::normalized_shortfall(s, lim.se_min_multicast);
    const double pu = a.downlink_unicast_sum();
    const double pm = a.downlink_multicast_sum();
    o.violation += detail::normalized_excess(pu, lim.P_dl_un);
    o.violation += detail::normalized_excess(pm, lim.P_dl_mu);
    o.violation += detail::normalized_excess(pu + pm, lim.P_dl);
    return o;
}

// Deb's constraint-domination for maximization.
inline bool constrained_dominates(const Individual& a, const Individual& b) {
    const bool fa = a.feasible();
    const bool fb = b.feasible();
    if (fa && !fb) return true;
    if (!fa && fb) return false;
    if (!fa && !fb) return a.violation < b.violation;
    return a.f1 >= b.f1 && a.f2 >= b.f2 && (a.f1 > b.f1 || a.f2 > b.f2);
}

// Fills `rank` (1-based) and returns the fronts as index lists.
inline std::vector<std::vector<std::size_t>> nondominated_sort(std::vector<Individual>& pop) {
    const std::size_t n = pop.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (constrained_dominates(pop[i], pop[j])) {
                dominated[i].push_back(j);
                ++count[j];
            } else if (constrained_dominates(pop[j], pop[i])) {
                dominated[j].push_back(i);
                ++count[i];
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (count[i] == 0) {
            pop[i].rank = 1;
            fronts[0].push_back(i);
        }
    while (!fronts.back().empty()) {
        std::vector<std::size_t> next;
        for (auto i : fronts.back())
            for (auto j : dominated[i])
                if (--count[j] == 0) {
                    pop[j].rank = fronts.size() + 1;
                    next.push_back(j);
                }
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

// Crowding distance over one front, written into pop[i].crowding.
inline void crowding_distance(std::vector<Individual>& pop, const std::vector<std::size_t>& front) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (auto i : front) pop[i].crowding = 0.0;
    if (front.size() <= 2) {
        for (auto i : front) pop[i].crowding = inf;
        return;
    }
    std::vector<std::size_t> order = front;
    for (int obj = 0; obj < 2; ++obj) {
        const auto f = [&](std::size_t i) { return obj == 0 ? pop[i].f1 : pop[i].f2; };
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return f(a) < f(b); });
        pop[order.front()].crowding = inf;
        pop[order.back()].crowding = inf;
        const double range = f(order.back()) - f(order.front());
        if (!(range > 0.0)) continue;
        for (std::size_t k = 1; k + 1 < order.size(); ++k)
            pop[order[k]].crowding += (f(order[k + 1]) - f(order[k - 1])) / range;
    }
}

// Convenience overload returning the distances for a whole population
// treated as a single front.
inline std::vector<double> crowding_distance(std::vector<Individual> front) {
    std::vector<std::size_t> idx(front.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    crowding_distance(front, idx);
    std::vector<double> d;
    for (const auto& p : front) d.push_back(p.crowding);
    return d;
}

struct FrontPoint {
    double f1 = 0.0;
    double f2 = 0.0;
    PowerAllocation alloc;
};

struct ParetoFront {
    std::vector<FrontPoint> points;  // ascending f1, strictly descending f2
    bool feasible = true;
    std::vector<double> hypervolume_history;  // index g: after generation g (0 = initial)

    // Index of the point maximizing f1 + f2 (first on ties).
    std::size_t max_sum_index() const {
        std::size_t best = 0;
        for (std::size_t i = 1; i < points.size(); ++i)
            if (points[i].f1 + points[i].f2 > points[best].f1 + points[best].f2) best = i;
        return best;
    }
};

// Area dominated by the points relative to the reference (0, 0).
inline double hypervolume_2d(std::vector<std::pair<double, double>> pts) {
    std::erase_if(pts, [](const auto& p) { return !(p.first > 0.0 && p.second > 0.0); });
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second > b.second);
    });
    // Sweep from largest f1 down; each point adds a strip above the best f2 so far.
    double hv = 0.0;
    double best_f2 = 0.0;
    for (const auto& [f1, f2] : pts) {
        if (f2 > best_f2) {
            hv += f1 * (f2 - best_f2);
            best_f2 = f2;
        }
    }
    return hv;
}

namespace detail {

// Nondominated feasible points seen so far, sorted by ascending f1 with
// strictly descending f2.
class ParetoArchive {
public:
    void insert(const Individual& ind) {
        if (!ind.feasible()) return;
        // First point with f1 >= ind.f1.
        auto it = std::lower_bound(items_.begin(), items_.end(), ind.f1,
                                   [](const Individual& a, double f1) { return a.f1 < f1; });
        // Dominated (or duplicated) by something with f1 >= ours and f2 >= ours?
        if (it != items_.end() && it->f2 >= ind.f2) return;
        // Remove points we dominate: those before `it` with f2 <= ours, plus an equal-f1 entry.
        auto first = it;
        while (first != items_.begin() && std::prev(first)->f2 <= ind.f2) --first;
        auto last = it;
        if (last != items_.end() && last->f1 == ind.f1) ++last;
        it = items_.erase(first, last);
        items_.insert(it, ind);
    }

    const std::vector<Individual>& items() const { return items_; }

    double hypervolume() const {
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : items_) pts.emplace_back(p.f1, p.f2);
        return hypervolume_2d(std::move(pts));
    }

private:
    std::vector<Individual> items_;
};

// Symmetric Dirichlet(1, ..., 1) sample of length n.
inline std::vector<double> dirichlet_ones(Rng& rng, std::size_t n) {
    std::vector<double> w(n);
    double s = 0.0;
    for (auto& x : w) {
        x = rng.gamma(1.0);
        s += x;
    }
    for (auto& x : w) x = s > 0.0 ? x / s : 1.0 / static_cast<double>(n);
    return w;
}

struct GeneLayout {
    std::size_t p_dl_off = 0;
    std::size_t q_dl_off = 0;
    std::size_t size = 0;
};

inline GeneLayout layout(const SystemConfig& cfg) {
    GeneLayout l;
    l.p_dl_off = cfg.n_unicast + cfg.multicast_users();
    l.q_dl_off = l.p_dl_off + cfg.n_unicast;
    l.size = l.q_dl_off + cfg.n_groups;
    return l;
}

// Random genes: uplink uniform in its box, downlink a Dirichlet split of
// budgets drawn so that every downlink cap holds.
inline std::vector<double> random_genes(Rng& rng, const SystemConfig& cfg, const PowerLimits& lim,
                                        const std::vector<double>& ub) {
    const auto lay = layout(cfg);
    std::vector<double> g(lay.size, 0.0);
    for (std::size_t i = 0; i < lay.p_dl_off; ++i) g[i] = rng.uniform(0.0, ub[i]);
    const double share = rng.uniform();
    const double b_un = std::min(lim.P_dl_un, share * lim.P_dl);
    const double b_mu = std::min(lim.P_dl_mu, lim.P_dl - b_un);
    if (cfg.n_unicast > 0) {
        const auto w = dirichlet_ones(rng, cfg.n_unicast);
        for (std::size_t u = 0; u < cfg.n_unicast; ++u) g[lay.p_dl_off + u] = std::min(ub[lay.p_dl_off + u], w[u] * b_un);
    }
    if (cfg.n_groups > 0) {
        const auto w = dirichlet_ones(rng, cfg.n_groups);
        for (std::size_t m = 0; m < cfg.n_groups; ++m) g[lay.q_dl_off + m] = std::min(ub[lay.q_dl_off + m], w[m] * b_mu);
    }
    return g;
}

// Rescales the downlink genes by the largest common factor that keeps
// every downlink cap. Every closed-form SINR grows with a common downlink
// scale, so this moves a point onto the budget boundary without losing SE.
inline void repair_downlink_budget(std::vector<double>& g, const SystemConfig& cfg, const PowerLimits& lim,
                                   const std::vector<double>& ub) {
    const auto lay = layout(cfg);
    double pu = 0.0, pm = 0.0;
    for (std::size_t i = lay.p_dl_off; i < lay.q_dl_off; ++i) pu += g[i];
    for (std::size_t i = lay.q_dl_off; i < lay.size; ++i) pm += g[i];
    if (!(pu + pm > 0.0)) return;
    double c = lim.P_dl / (pu + pm);
    if (pu > 0.0) c = std::min(c, lim.P_dl_un / pu);
    if (pm > 0.0) c = std::min(c, lim.P_dl_mu / pm);
    for (std::size_t i = lay.p_dl_off; i < lay.size; ++i) g[i] = std::min(ub[i], g[i] * c);
}

// Bounded simulated binary crossover on one gene pair.
inline void sbx_pair(Rng& rng, double& x1, double& x2, double lo, double hi, double eta) {
    if (std::abs(x1 - x2) < 1e-14 || !(hi > lo)) return;
    const double y1 = std::min(x1, x2);
    const double y2 = std::max(x1, x2);
    const double u = rng.uniform();
    const auto betaq = [&](double beta) {
        const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
        if (u <= 1.0 / alpha) return std::pow(u * alpha, 1.0 / (eta + 1.0));
        return std::pow(1.0 / (2.0 - u * alpha), 1.0 / (eta + 1.0));
    };
    const double d = y2 - y1;
    double c1 = 0.5 * ((y1 + y2) - betaq(1.0 + 2.0 * (y1 - lo) / d) * d);
    double c2 = 0.5 * ((y1 + y2) + betaq(1.0 + 2.0 * (hi - y2) / d) * d);
    c1 = std::clamp(c1, lo, hi);
    c2 = std::clamp(c2, lo, hi);
    if (rng.uniform() < 0.5) std::swap(c1, c2);
    x1 = c1;
    x2 = c2;
}

// Bounded polynomial mutation of one gene.
inline double polynomial_mutation(Rng& rng, double x, double lo, double hi, double eta) {
    if (!(hi > lo)) return lo;
    const double d1 = (x - lo) / (hi - lo);
    const double d2 = (hi - x) / (hi - lo);
    const double u = rng.uniform();
    const double p = 1.0 / (eta + 1.0);
    double dq;
    if (u < 0.5) {
        const double v = 2.0 * u + (1.0 - 2.0 * u) * std::pow(1.0 - d1, eta + 1.0);
        dq = std::pow(v, p) - 1.0;
    } else {
        const double v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(1.0 - d2, eta + 1.0);
        dq = 1.0 - std::pow(v, p);
    }
    return std::clamp(x + dq * (hi - lo), lo, hi);
}

// Binary tournament on (rank, crowding).
inline std::size_t tournament(Rng& rng, const std::vector<Individual>& pop) {
    const std::size_t a = rng.uniform_index(pop.size());
    const std::size_t b = rng.uniform_index(pop.size());
    if (pop[a].rank != pop[b].rank) return pop[a].rank < pop[b].rank ? a : b;
    if (pop[a].crowding != pop[b].crowding) return pop[a].crowding > pop[b].crowding ? a : b;
    return std::min(a, b);
}

inline void evaluate_all(std::vector<Individual>& pop, PrecoderKind kind, const Scenario& scn, const SystemConfig& cfg,
                         const PowerLimits& lim, std::size_t threads) {
    for_each_chunk(pop.size(), threads, [&](std::size_t i) {
        const auto o = evaluate(pop[i].genes, kind, scn, cfg, lim);
        pop[i].f1 = o.f1;
        pop[i].f2 = o.f2;
        pop[i].violation = o.violation;
    });
}

// Ranks and crowds a population in place.
inline void rank_population(std::vector<Individual>& pop) {
    for (const auto& f : cellfree::nondominated_sort(pop)) crowding_distance(pop, f);
}

}  // namespace detail

struct Nsga2Options {
    std::size_t threads = 0;
};

inline ParetoFront run_nsga2(PrecoderKind kind, const Scenario& scn, const SystemConfig& cfg, const PowerLimits& lim,
                             const Nsga2Params& params, const Rng& rng, Nsga2Options opt = {}) {
    if (params.population < 2 || params.population % 2 != 0)
        throw ParameterError("nsga2 population must be even and >= 2");
    require_rank(kind, cfg);
    const std::size_t Y = params.population;
    const auto ub = gene_upper_bounds(cfg, lim);
    const std::size_t dim = ub.size();
    const double pm = params.mutation_prob > 0.0 ? params.mutation_prob : 1.0 / static_cast<double>(dim);
    const std::size_t threads = resolve_threads(opt.threads);

    std::vector<Individual> pop(Y);
    const Rng init = rng.substream("init");
    for (std::size_t i = 0; i < Y; ++i) {
        Rng r = init.substream(i);
        pop[i].genes = detail::random_genes(r, cfg, lim, ub);
        if (params.budget_repair) detail::repair_downlink_budget(pop[i].genes, cfg, lim, ub);
    }
    detail::evaluate_all(pop, kind, scn, cfg, lim, threads);
    detail::rank_population(pop);

    detail::ParetoArchive archive;
    for (const auto& p : pop) archive.insert(p);
    ParetoFront out;
    out.hypervolume_history.push_back(archive.hypervolume());

    for (std::size_t gen = 1; gen <= params.generations; ++gen) {
        const Rng gen_rng = rng.substream({detail::fnv1a("generation"), gen});
        Rng select = gen_rng.substream("select");
        std::vector<Individual> children(Y);
        for (std::size_t i = 0; i < Y; i += 2) {
            children[i].genes = pop[detail::tournament(select, pop)].genes;
            children[i + 1].genes = pop[detail::tournament(select, pop)].genes;
        }
        for (std::size_t i = 0; i < Y; i += 2) {
            Rng r = gen_rng.substream(i);
            auto& a = children[i].genes;
            auto& b = children[i + 1].genes;
            if (r.uniform() < params.crossover_prob)
                for (std::size_t d = 0; d < dim; ++d)
                    if (r.uniform() < 0.5) detail::sbx_pair(r, a[d], b[d], 0.0, ub[d], params.crossover_eta);
            for (auto* g : {&a, &b}) {
                for (std::size_t d = 0; d < dim; ++d)
                    if (r.uniform() < pm) (*g)[d] = detail::polynomial_mutation(r, (*g)[d], 0.0, ub[d], params.mutation_eta);
                if (params.budget_repair) detail::repair_downlink_budget(*g, cfg, lim, ub);
            }
        }
        detail::evaluate_all(children, kind, scn, cfg, lim, threads);
        for (const auto& c : children) archive.insert(c);

        std::vector<Individual> merged = std::move(pop);
        merged.insert(merged.end(), std::make_move_iterator(children.begin()), std::make_move_iterator(children.end()));
        const auto fronts = nondominated_sort(merged);
        std::vector<Individual> next;
        next.reserve(Y);
        for (const auto& f : fronts) {
            crowding_distance(merged, f);
            if (next.size() + f.size() <= Y) {
                for (auto i : f) next.push_back(merged[i]);
                continue;
            }
            std::vector<std::size_t> order = f;
            std::stable_sort(order.begin(), order.end(),
                             [&](auto a, auto b) { return merged[a].crowding > merged[b].crowding; });
            for (std::size_t k = 0; next.size() < Y; ++k) next.push_back(merged[order[k]]);
            break;
        }
        pop = std::move(next);
        detail::rank_population(pop);
        out.hypervolume_history.push_back(archive.hypervolume());
    }

    const auto to_point = [&](const Individual& ind) {
        FrontPoint p{ind.f1, ind.f2, PowerAllocation::unflatten(cfg, ind.genes)};
        p.alloc.tau = cfg.streams();
        return p;
    };
    if (!archive.items().empty()) {
        for (const auto& ind : archive.items()) out.points.push_back(to_point(ind));
        return out;
    }

    // Nothing feasible: report the least-violating nondominated set.
    out.feasible = false;
    const double best_v = std::min_element(pop.begin(), pop.end(), [](const auto& a, const auto& b) {
                              return a.violation < b.violation;
                          })->violation;
    std::vector<Individual> best;
    for (const auto& p : pop)
        if (p.violation == best_v) best.push_back(p);
    for (auto& b : best) b.violation = 0.0;  // compare on objectives only
    detail::ParetoArchive tied;
    for (const auto& b : best) tied.insert(b);
    for (auto ind : tied.items()) {
        ind.violation = best_v;
        out.points.push_back(to_point(ind));
    }
    return out;
}

// f1,f2,g0,g1,...
inline void write_front_csv(std::ostream& os, const ParetoFront& front) {
    const auto f = detail::format_double;
    os << "f1,f2";
    const std::size_t dim = front.points.empty() ? 0 : front.points.front().alloc.gene_count();
    for (std::size_t d = 0; d < dim; ++d) os << ",g" << d;
    os << '\n';
    for (const auto& p : front.points) {
        os << f(p.f1) << ',' << f(p.f2);
        for (double g : p.alloc.flatten()) os << ',' << f(g);
        os << '\n';
    }
}

}  // namespace cellfree
