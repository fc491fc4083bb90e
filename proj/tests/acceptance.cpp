// Acceptance checks. `acceptance N` runs criterion N, no argument runs all.
// Each prints one line: "criterion N: PASS|FAIL <details>"; exit status is
// nonzero if any requested criterion failed.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cellfree/cellfree.hpp"
#include "cellfree/experiments.hpp"

namespace fs = std::filesystem;
using namespace cellfree;
using cellfree::detail::fnv1a;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
    std::istringstream is(slurp(p));
    std::string line;
    std::getline(is, line);
    std::vector<std::string> cols;
    std::istringstream h(line);
    for (std::string c; std::getline(h, c, ',');) cols.push_back(c);
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(is, line)) {
        std::istringstream l(line);
        std::map<std::string, std::string> row;
        std::size_t i = 0;
        for (std::string c; std::getline(l, c, ',');) row[cols.at(i++)] = c;
        rows.push_back(row);
    }
    return rows;
}

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("cellfree_acceptance_" + std::to_string(getpid())) / name;
    fs::remove_all(d);
    return d;
}

Config table1() { return parse_config(std::string(CELLFREE_SOURCE_DIR) + "/configs/table1.conf"); }
Config fig9() { return parse_config(std::string(CELLFREE_SOURCE_DIR) + "/configs/fig9_dnn.conf"); }

ExperimentResult run_recipe(const std::string& name, const Config& cfg, const fs::path& out) {
    ExperimentSpec spec;
    spec.name = name;
    spec.out_dir = out.string();
    return run_experiment(spec, cfg);
}

// Scenario 0 of a recipe run with this config.
Scenario recipe_scenario(const SystemConfig& sys) {
    return place_uniform(sys, Rng(sys.rng_seed).substream({fnv1a("scenario"), 0}));
}

// 1: closed form vs Monte Carlo SINR.
Outcome closed_form_vs_mc() {
    const Config cfg = table1();
    const Scenario scn = recipe_scenario(cfg.system);
    const std::size_t reps = 10000;
    bool pass = true;
    std::ostringstream d;
    for (std::size_t L : {20, 50, 100}) {
        SystemConfig sys = cfg.system;
        sys.antennas_per_rau = L;
        const auto alloc = PowerAllocation::uniform(sys, cfg.allocation);
        const auto gains = equivalent_gains(scn, alloc, sys);
        const double tol = L < 50 ? 0.10 : 0.05;
        for (auto kind : kAllPrecoders) {
            const auto cf = closed_form_sinr(kind, scn, gains, alloc, sys);
            const auto mc = estimate_sinr(kind, scn, alloc, sys, reps,
                                          Rng(sys.rng_seed).substream({fnv1a("acceptance-mc"), L, static_cast<std::size_t>(kind)}),
                                          {Sampler::Statistical, 0});
            double worst = 0.0;
            for (std::size_t u = 0; u < scn.n_unicast(); ++u)
                worst = std::max(worst, std::abs(mc.unicast[u].sinr.mean - cf.sinr_unicast[u]) / cf.sinr_unicast[u]);
            for (std::size_t m = 0; m < scn.n_groups(); ++m)
                for (std::size_t k = 0; k < scn.group_size(m); ++k)
                    worst = std::max(worst, std::abs(mc.multicast[m][k].sinr.mean - cf.sinr_multicast[m][k]) /
                                                cf.sinr_multicast[m][k]);
            if (worst > tol) pass = false;
            d << " L=" << L << "/" << to_string(kind) << ":" << num(worst);
        }
    }
    return {pass, "max rel err" + d.str() + " (limits 0.1 at L=20, 0.05 at L>=50)"};
}

// 2: every appendix expectation term vs its closed form.
Outcome appendix_terms() {
    Config cfg = table1();
    cfg.system.antennas_per_rau = 50;
    const Scenario scn = recipe_scenario(cfg.system);
    const auto alloc = PowerAllocation::uniform(cfg.system, cfg.allocation);
    bool pass = true;
    std::ostringstream d;
    for (auto kind : kAllPrecoders) {
        const auto terms = estimate_appendix_terms(kind, scn, alloc, cfg.system, 10000,
                                                   Rng(cfg.system.rng_seed).substream({fnv1a("acceptance-appendix"),
                                                                                       static_cast<std::size_t>(kind)}),
                                                   {Sampler::Statistical, 0});
        std::size_t bad = 0;
        const AppendixTerm* worst = &terms.front();
        for (const auto& t : terms) {
            if (t.rel_err > 0.05) ++bad;
            if (t.rel_err > worst->rel_err) worst = &t;
        }
        if (bad) pass = false;
        d << ' ' << to_string(kind) << ": " << bad << "/" << terms.size() << " over 5%, worst " << worst->term << ' '
          << worst->user << ' ' << num(worst->rel_err) << ';';
    }
    return {pass, d.str()};
}

// 3: J-factor ordering of closed-form SINRs on random systems.
Outcome precoder_ordering() {
    Rng rng(3);
    std::size_t checked = 0, violations = 0, configs = 0;
    while (configs < 100) {
        SystemConfig c;
        c.n_raus = 1 + rng.uniform_index(6);
        c.antennas_per_rau = 1 + rng.uniform_index(40);
        c.n_unicast = rng.uniform_index(8);
        c.n_groups = rng.uniform_index(4);
        c.group_sizes.clear();
        for (std::size_t m = 0; m < c.n_groups; ++m) c.group_sizes.push_back(1 + rng.uniform_index(5));
        if (c.streams() == 0 || !(zf_dof(c) > 0.0)) continue;
        c.noise_ul = c.noise_dl = 0.0155 * std::pow(10.0, rng.uniform() * 4 - 2);
        ++configs;
        const Scenario s = place_uniform(c, rng.substream(configs));
        PowerAllocation a = PowerAllocation::uniform(c, AllocationDefaults{});
        for (auto& p : a.p_ul) p = 0.01 + rng.uniform();
        for (auto& g : a.q_ul)
            for (auto& q : g) q = 0.01 + rng.uniform();
        for (auto& p : a.p_dl) p = 0.01 + rng.uniform();
        for (auto& q : a.q_dl) q = 0.01 + rng.uniform();
        const auto g = equivalent_gains(s, a, c);
        const auto mrt = closed_form_sinr(PrecoderKind::MRT, s, g, a, c);
        const auto zf = closed_form_sinr(PrecoderKind::ZF, s, g, a, c);
        const auto mmse = closed_form_sinr(PrecoderKind::MMSE, s, g, a, c);
        const double sign = zf_dof(c) - static_cast<double>(c.antennas_per_rau);
        const auto check = [&](double r, double z, double m) {
            ++checked;
            const bool zf_ok = sign > 0 ? z > r : (sign < 0 ? z < r : z == r);
            if (!(m > z) || !zf_ok) ++violations;
        };
        for (std::size_t u = 0; u < c.n_unicast; ++u) check(mrt.sinr_unicast[u], zf.sinr_unicast[u], mmse.sinr_unicast[u]);
        for (std::size_t m = 0; m < c.n_groups; ++m)
            for (std::size_t k = 0; k < c.group_sizes[m]; ++k)
                check(mrt.sinr_multicast[m][k], zf.sinr_multicast[m][k], mmse.sinr_multicast[m][k]);
    }
    return {violations == 0, std::to_string(configs) + " configs, " + std::to_string(checked) + " users, " +
                                 std::to_string(violations) + " ordering violations"};
}

// 4: per-user SE, 4 groups of 5 vs 20 unicast users.
Outcome multicast_advantage() {
    const auto out = scratch("c4");
    run_recipe("unicast_vs_multicast", table1(), out);
    std::size_t rows = 0, bad = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& r : read_csv(out / "unicast_vs_multicast.csv")) {
        ++rows;
        const double diff = std::stod(r.at("multicast_per_user_se")) - std::stod(r.at("unicast_per_user_se"));
        worst = std::min(worst, diff);
        if (!(diff > 0.0)) ++bad;
    }
    return {rows > 0 && bad == 0, std::to_string(rows) + " (scenario, L, precoder) rows, " + std::to_string(bad) +
                                      " without a multicast advantage, smallest margin " + num(worst) + " bit/s/Hz"};
}

// 5: SE(T) = (1 - tau/T) log2(1 + SINR) with SINR independent of T.
Outcome prelog_identity() {
    const Config cfg = table1();
    const Scenario scn = recipe_scenario(cfg.system);
    const auto alloc = PowerAllocation::uniform(cfg.system, cfg.allocation);
    const auto gains = equivalent_gains(scn, alloc, cfg.system);
    const double tau = static_cast<double>(alloc.tau);
    double worst = 0.0;
    bool sinr_fixed = true;
    for (auto kind : kAllPrecoders) {
        const auto base = closed_form_sinr(kind, scn, gains, alloc, cfg.system);
        for (std::size_t T = alloc.tau; T <= 400; ++T) {
            SystemConfig sys = cfg.system;
            sys.coherence_length = T;
            auto r = closed_form_sinr(kind, scn, gains, alloc, sys);
            if (r.sinr_unicast != base.sinr_unicast || r.sinr_multicast != base.sinr_multicast) sinr_fixed = false;
            se_from_sinr(r, alloc.tau, T);
            const double pre = 1.0 - tau / static_cast<double>(T);
            for (std::size_t u = 0; u < r.se_unicast.size(); ++u) {
                const double want = pre * std::log2(1.0 + base.sinr_unicast[u]);
                worst = std::max(worst, std::abs(r.se_unicast[u] - want) / std::max(std::abs(want), 1e-300));
            }
            for (std::size_t m = 0; m < r.se_multicast.size(); ++m)
                for (std::size_t k = 0; k < r.se_multicast[m].size(); ++k) {
                    const double want = pre * std::log2(1.0 + base.sinr_multicast[m][k]);
                    worst = std::max(worst, std::abs(r.se_multicast[m][k] - want) / std::max(std::abs(want), 1e-300));
                }
        }
    }
    // The recipe's CSV, recomputed from its own SINR columns.
    const auto out = scratch("c5");
    run_recipe("sweep_T", cfg, out);
    double csv_worst = 0.0;
    std::map<std::string, SeReport> base;
    for (auto kind : kAllPrecoders)
        base[std::string(to_string(kind))] = closed_form_sinr(kind, scn, gains, alloc, cfg.system);
    for (const auto& row : read_csv(out / "sweep_T.csv")) {
        auto r = base.at(row.at("kind"));
        const std::size_t T = std::stoul(row.at("T"));
        se_from_sinr(r, alloc.tau, T);
        for (auto [col, v] : {std::pair{"mean_unicast_se", r.mean_unicast_se()}, std::pair{"min_multicast_se", r.min_multicast_se()},
                              std::pair{"mean_multicast_se", r.mean_multicast_se()}})
            csv_worst = std::max(csv_worst, std::abs(std::stod(row.at(col)) - v) / std::max(std::abs(v), 1e-300));
    }
    const bool pass = sinr_fixed && worst <= 4 * std::numeric_limits<double>::epsilon() &&
                      csv_worst <= 4 * std::numeric_limits<double>::epsilon();
    return {pass, std::string("SINR independent of T: ") + (sinr_fixed ? "yes" : "no") + ", max rel dev " + num(worst) +
                      ", sweep_T.csv max rel dev " + num(csv_worst)};
}

bool dominates(double a1, double a2, double b1, double b2) { return a1 >= b1 && a2 >= b2 && (a1 > b1 || a2 > b2); }

// Exhaustive grid over all 7 genes of the tiny instance. For each uplink grid
// point the estimation gains are fixed, so the downlink sweep only needs the
// SINR arithmetic; candidates found that way are re-checked with evaluate().
struct GridResult {
    std::size_t feasible = 0;
    std::size_t dominating = 0;
    double fast_path_err = 0.0;
};

GridResult grid_oracle(PrecoderKind kind, const Scenario& scn, const SystemConfig& cfg, const PowerLimits& lim,
                       const ParetoFront& front) {
    const auto ub = gene_upper_bounds(cfg, lim);
    const double J = j_factor(kind, cfg);
    const double nl = static_cast<double>(cfg.total_antennas());
    const double pre = prelog(cfg.streams(), cfg.coherence_length);
    const double noise = cfg.noise_dl;
    const double bu[2] = {scn.beta.column_sum(0), scn.beta.column_sum(1)};
    const double be[2] = {scn.eta[0].column_sum(0), scn.eta[0].column_sum(1)};
    const double slack = 1e-9;
    std::vector<double> f1s, f2s;
    for (const auto& p : front.points) {
        f1s.push_back(p.f1);
        f2s.push_back(p.f2);
    }
    // Front is ascending in f1 and descending in f2.
    const auto near_dominates = [&](double g1, double g2) {
        const auto it = std::upper_bound(f1s.begin(), f1s.end(), g1 + slack);
        if (it == f1s.begin()) return false;
        return f2s[static_cast<std::size_t>(it - f1s.begin()) - 1] <= g2 + slack;
    };

    GridResult res;
    Rng spot(6);
    std::vector<double> genes(7, 0.0);
    for (int a = 0; a <= 20; ++a)
        for (int b = 0; b <= 20; ++b)
            for (int c = 0; c <= 20; ++c)
                for (int e = 0; e <= 20; ++e) {
                    genes[0] = ub[0] * a / 20.0;
                    genes[1] = ub[1] * b / 20.0;
                    genes[2] = ub[2] * c / 20.0;
                    genes[3] = ub[3] * e / 20.0;
                    auto alloc = PowerAllocation::unflatten(cfg, genes);
                    alloc.tau = cfg.streams();
                    const auto g = equivalent_gains(scn, alloc, cfg);
                    const double th[2] = {g.theta[0], g.theta[1]};
                    const double ze[2] = {g.zeta[0][0], g.zeta[0][1]};
                    for (int i = 0; i <= 20; ++i)
                        for (int j = 0; j <= 20; ++j) {
                            const double p1 = ub[4] * i / 20.0, p2 = ub[5] * j / 20.0;
                            const double pu = p1 + p2;
                            if (pu > lim.P_dl_un * (1 + slack)) break;
                            for (int k = 0; k <= 20; ++k) {
                                const double q = ub[6] * k / 20.0;
                                const double P = pu + q;
                                if (q > lim.P_dl_mu * (1 + slack) || P > lim.P_dl * (1 + slack)) break;
                                ++res.feasible;
                                const double s1 = J * p1 * th[0] / (noise + bu[0] * P / nl);
                                const double s2 = J * p2 * th[1] / (noise + bu[1] * P / nl);
                                const double m1 = J * q * ze[0] / (noise + be[0] * P / nl);
                                const double m2 = J * q * ze[1] / (noise + be[1] * P / nl);
                                const double f2 = pre * (std::log2(1 + s1) + std::log2(1 + s2)) / 2.0;
                                const double f1 = pre * std::log2(1 + std::min(m1, m2));
                                const bool spot_check = spot.uniform() < 1e-5;
                                if (!spot_check && !near_dominates(f1, f2)) continue;
                                genes[4] = p1;
                                genes[5] = p2;
                                genes[6] = q;
                                const auto o = evaluate(genes, kind, scn, cfg, lim);
                                res.fast_path_err = std::max({res.fast_path_err, std::abs(o.f1 - f1), std::abs(o.f2 - f2)});
                                if (o.violation > 0.0) continue;
                                for (const auto& p : front.points)
                                    if (dominates(o.f1, o.f2, p.f1, p.f2)) {
                                        ++res.dominating;
                                        break;
                                    }
                            }
                        }
                }
    return res;
}

// 6: NSGA-II fronts on the baseline system, and the exhaustive grid on a tiny one.
Outcome pareto_front() {
    const Config cfg = table1();
    const Scenario scn = recipe_scenario(cfg.system);
    bool pass = true;
    std::ostringstream d;
    for (auto kind : kAllPrecoders) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto pf = run_nsga2(kind, scn, cfg.system, cfg.limits, cfg.nsga2,
                                  Rng(cfg.system.rng_seed).substream({fnv1a("nsga2"), static_cast<std::size_t>(kind)}));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool mutual = true;
        for (const auto& a : pf.points) {
            for (const auto& b : pf.points)
                if (dominates(a.f1, a.f2, b.f1, b.f2)) mutual = false;
            const auto o = evaluate(a.alloc.flatten(), kind, scn, cfg.system, cfg.limits);
            if (o.violation > 0.0) mutual = false;
        }
        bool hv_ok = true;
        for (std::size_t g = 1; g < pf.hypervolume_history.size(); ++g)
            if (pf.hypervolume_history[g] < pf.hypervolume_history[g - 1]) hv_ok = false;
        const bool ok = pf.feasible && mutual && hv_ok && pf.points.size() >= 20 && secs <= 600.0;
        pass = pass && ok;
        d << ' ' << to_string(kind) << ": " << pf.points.size() << " pts, feasible " << (pf.feasible ? "yes" : "no")
          << ", nondominated " << (mutual ? "yes" : "no") << ", HV monotone " << (hv_ok ? "yes" : "no") << ", "
          << num(secs) << " s;";
    }

    SystemConfig tiny = cfg.system;
    tiny.n_unicast = 2;
    tiny.n_groups = 1;
    tiny.group_sizes = {2};
    tiny.pilot_length.reset();
    PowerLimits lim = cfg.limits;
    lim.se_min_unicast = lim.se_min_multicast = 0.0;
    const Scenario ts = place_uniform(tiny, Rng(2));
    for (auto kind : kAllPrecoders) {
        const auto pf = run_nsga2(kind, ts, tiny, lim, Nsga2Params{}, Rng(9));
        const auto g = grid_oracle(kind, ts, tiny, lim, pf);
        const bool ok = g.dominating == 0 && g.fast_path_err <= 1e-12;
        pass = pass && ok;
        d << " tiny " << to_string(kind) << ": " << g.dominating << " of " << g.feasible
          << " feasible grid points dominate the front (fast-path err " << num(g.fast_path_err) << ");";
    }
    return {pass, d.str()};
}

// 7: learned allocator vs NSGA-II max-sum point on the small system.
Outcome dnn_vs_nsga2() {
    const auto out = scratch("c7");
    run_recipe("dnn_vs_nsga2", fig9(), out);
    const auto summary = read_csv(out / "dnn_vs_nsga2_summary.csv").at(0);
    const double ratio = std::stod(summary.at("ratio"));
    const auto timing = nlohmann::json::parse(slurp(out / "timing.json"));
    const double infer = timing["inference_seconds_per_scenario"].get<double>();
    const double nsga = timing["nsga2_seconds_per_scenario"].get<double>();
    const bool pass = ratio >= 0.85 && infer < 0.01 * nsga;
    return {pass, "sum-objective ratio " + num(ratio) + " (floor 0.85), uniform/NSGA " +
                      num(std::stod(summary.at("uniform_total")) / std::stod(summary.at("nsga2_total"))) +
                      ", inference " + num(infer * 1e3) + " ms vs NSGA-II " + num(nsga * 1e3) + " ms per scenario, training " +
                      num(timing["train_seconds"].get<double>()) + " s"};
}

// Which smooth piece of the loss a parameter vector sits on: hidden ReLU
// signs, uplink clip flags and the multicast user holding the minimum.
std::vector<int> piece(const MlpParams& p, const std::vector<const Scenario*>& batch, PrecoderKind kind,
                       const SystemConfig& c) {
    std::vector<int> out;
    for (const auto* s : batch) {
        const auto fc = forward_cached(p, normalized_features(p, *s));
        for (std::size_t l = 1; l < fc.activations.size(); ++l)
            for (double v : fc.activations[l]) out.push_back(v > 0.0);
        for (bool b : fc.clipped) out.push_back(b);
        const auto a = allocation_from_output(p.head, fc.powers, c.streams());
        const auto r = closed_form_sinr(kind, *s, equivalent_gains(*s, a, c), a, c);
        int best = 0, idx = 0;
        double mn = std::numeric_limits<double>::infinity();
        for (const auto& g : r.sinr_multicast)
            for (double v : g) {
                if (std::log2(1.0 + v) < mn) {
                    mn = std::log2(1.0 + v);
                    best = idx;
                }
                ++idx;
            }
        out.push_back(best);
    }
    return out;
}

// 8: backward pass vs central differences, width-8 network, 20 seeds.
Outcome gradient_check() {
    const Config cfg = fig9();
    const SystemConfig& c = cfg.system;
    double worst = 0.0;
    std::size_t checked = 0, kinks = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Rng root(seed);
        const auto set = sample_scenarios(c, root.substream("scenarios"), 3);
        std::vector<const Scenario*> batch;
        for (const auto& s : set) batch.push_back(&s);
        auto p = init_mlp(feature_count(c), {8}, AllocatorHead::from(c, cfg.limits), root.substream("init"));
        fit_input_normalization(p, set);
        for (auto kind : kAllPrecoders) {
            MlpGradients g;
            backward(p, batch, kind, c, g);
            const auto base = piece(p, batch, kind, c);
            struct Check {
                double an, fd;
            };
            std::vector<Check> checks;
            double scale = 0.0;
            for (std::size_t l = 0; l < p.layers.size(); ++l)
                for (int is_w = 0; is_w < 2; ++is_w) {
                    auto& vals = is_w ? p.layers[l].w : p.layers[l].b;
                    const auto& grads = is_w ? g.w[l] : g.b[l];
                    for (std::size_t i = 0; i < vals.size(); ++i) {
                        const double eps = 1e-5, x0 = vals[i];
                        vals[i] = x0 + eps;
                        const double up = batch_loss(p, batch, kind, c);
                        const bool same_up = piece(p, batch, kind, c) == base;
                        vals[i] = x0 - eps;
                        const double dn = batch_loss(p, batch, kind, c);
                        const bool same_dn = piece(p, batch, kind, c) == base;
                        vals[i] = x0;
                        if (!same_up || !same_dn) {
                            ++kinks;
                            continue;
                        }
                        const double fd = (up - dn) / (2 * eps);
                        checks.push_back({grads[i], fd});
                        scale = std::max(scale, std::abs(fd));
                    }
                }
            for (const auto& ch : checks) {
                ++checked;
                const double den = std::max({std::abs(ch.fd), std::abs(ch.an), 1e-4 * scale});
                if (den > 0.0) worst = std::max(worst, std::abs(ch.an - ch.fd) / den);
            }
        }
    }
    return {worst <= 1e-4, std::to_string(checked) + " parameter checks, worst relative error " + num(worst) + ", " +
                               std::to_string(kinks) + " skipped where the step crosses a ReLU, clip or min-user switch"};
}

// 9: estimation identities, per scenario and per realization.
Outcome estimation_identities() {
    Rng rng(9);
    double worst = 0.0;
    const auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
    for (std::size_t trial = 0; trial < 50; ++trial) {
        SystemConfig c;
        c.n_raus = 1 + rng.uniform_index(6);
        c.antennas_per_rau = 1 + rng.uniform_index(8);
        c.n_unicast = rng.uniform_index(6);
        c.n_groups = 1 + rng.uniform_index(3);
        c.group_sizes.clear();
        for (std::size_t m = 0; m < c.n_groups; ++m) c.group_sizes.push_back(1 + rng.uniform_index(5));
        const Scenario s = place_uniform(c, rng.substream(trial));
        PowerAllocation a = PowerAllocation::uniform(c, AllocationDefaults{});
        for (auto& p : a.p_ul) p = 0.01 + rng.uniform();
        for (auto& g : a.q_ul)
            for (auto& q : g) q = 0.01 + rng.uniform();
        const auto g = equivalent_gains(s, a, c);
        const double tau = static_cast<double>(a.tau);
        for (std::size_t u = 0; u < c.n_unicast; ++u) worst = std::max(worst, rel(g.theta[u], g.lambda.column_sum(u)));
        for (std::size_t m = 0; m < c.n_groups; ++m) {
            worst = std::max(worst, rel(g.upsilon[m], g.mu.column_sum(m)));
            for (std::size_t k = 0; k < c.group_sizes[m]; ++k) worst = std::max(worst, rel(g.zeta[m][k], g.xi[m].column_sum(k)));
            for (std::size_t n = 0; n < c.n_raus; ++n) {
                double sum = 0.0;
                for (std::size_t k = 0; k < c.group_sizes[m]; ++k) sum += std::sqrt(tau * a.q_ul[m][k] * g.xi[m](n, k));
                worst = std::max(worst, rel(std::sqrt(g.mu(n, m)), sum));
            }
        }
        Rng draws = rng.substream({fnv1a("draws"), trial});
        for (int rep = 0; rep < 5; ++rep) {
            const auto smp = draw_sample_pilot(s, a, c, draws);
            for (std::size_t m = 0; m < c.n_groups; ++m)
                for (std::size_t r = 0; r < smp.t_hat_group.rows(); ++r) {
                    Complex sum{};
                    for (std::size_t j = 0; j < c.group_sizes[m]; ++j)
                        sum += std::sqrt(tau * a.q_ul[m][j]) * smp.t_hat_user[m](r, j);
                    const double scale = std::max({std::abs(sum), std::abs(smp.t_hat_group(r, m)), 1e-300});
                    worst = std::max(worst, std::abs(sum - smp.t_hat_group(r, m)) / scale);
                }
        }
    }
    return {worst <= 1e-12, "50 random systems, worst relative deviation " + num(worst)};
}

// 10: every recipe twice with the same seed.
Outcome determinism() {
    std::size_t files = 0, differing = 0;
    std::string which;
    for (const auto& name : experiment_names()) {
        const Config cfg = name == "dnn_train" || name == "dnn_vs_nsga2" ? fig9() : table1();
        const auto a = scratch("c10_" + name + "_a"), b = scratch("c10_" + name + "_b");
        const auto ra = run_recipe(name, cfg, a);
        run_recipe(name, cfg, b);
        for (const auto& f : ra.artifacts) {
            ++files;
            if (slurp(a / f) != slurp(b / f)) {
                ++differing;
                which += " " + name + "/" + f;
            }
        }
        fs::remove_all(a);
        fs::remove_all(b);
    }
    return {differing == 0, std::to_string(files) + " artifacts compared across " +
                                std::to_string(experiment_names().size()) + " recipes, " + std::to_string(differing) +
                                " differ" + which};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria{
    {"closed form vs Monte Carlo SINR", closed_form_vs_mc},
    {"appendix expectation terms", appendix_terms},
    {"precoder ordering", precoder_ordering},
    {"multicast advantage", multicast_advantage},
    {"prelog identity", prelog_identity},
    {"Pareto front", pareto_front},
    {"allocator vs NSGA-II", dnn_vs_nsga2},
    {"gradient check", gradient_check},
    {"estimation identities", estimation_identities},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::size_t> which;
    for (int i = 1; i < argc; ++i) {
        const int n = std::atoi(argv[i]);
        if (n < 1 || n > static_cast<int>(kCriteria.size())) {
            std::cerr << "usage: acceptance [1-" << kCriteria.size() << "]...\n";
            return 2;
        }
        which.push_back(static_cast<std::size_t>(n));
    }
    if (which.empty())
        for (std::size_t n = 1; n <= kCriteria.size(); ++n) which.push_back(n);

    bool all = true;
    for (auto n : which) {
        const auto& [title, fn] = kCriteria[n - 1];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " [" << title << "] " << o.detail << " ("
                  << num(secs) << " s)" << std::endl;
        all = all && o.pass;
    }
    fs::remove_all(fs::temp_directory_path() / ("cellfree_acceptance_" + std::to_string(getpid())));
    return all ? 0 : 1;
}
