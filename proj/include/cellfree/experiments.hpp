#pragma once

// Experiment recipes behind `cellfree_se run <name>`. Each writes CSV
// artifacts plus manifest.json (config echo, seed and a git-style hash per
// artifact) into the output directory. Wall-clock timings, when measured, go
// to timing.json only, so the CSVs stay byte-identical across runs.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cellfree/channel.hpp"
#include "cellfree/config.hpp"
#include "cellfree/dnn.hpp"
#include "cellfree/manifest.hpp"
#include "cellfree/monte_carlo.hpp"
#include "cellfree/nsga2.hpp"
#include "cellfree/precoding.hpp"
#include "cellfree/scenario.hpp"
#include "cellfree/spectral_efficiency.hpp"
#include "cellfree/svg.hpp"

namespace cellfree {

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{
        "validate_closed_form", "unicast_vs_multicast",  "sweep_T",  "distributed_vs_centralized",
        "sweep_multicast_power", "pareto",               "dnn_train", "dnn_vs_nsga2",
        "appendix_terms"};
    return names;
}

struct ExperimentSpec {
    std::string name;
    std::string config_path;  // empty: built-in defaults
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    std::size_t threads = 0;
    bool plots = false;
    bool timing = false;  // also write wall_ms into train_log.csv
};

struct ExperimentResult {
    std::vector<std::string> artifacts;  // file names inside out_dir, in write order
    std::vector<std::string> sidecars;   // not hashed (timings)
};

// Defaults or file, then overrides, then --seed; validated.
inline Config load_experiment_config(const ExperimentSpec& spec) {
    Config cfg;
    if (!spec.config_path.empty()) {
        cfg = parse_config(spec.config_path, spec.overrides);
    } else {
        for (const auto& o : spec.overrides) apply_override(cfg, o);
    }
    if (spec.seed) cfg.system.rng_seed = *spec.seed;
    cfg.validate();
    return cfg;
}

namespace detail {

class ArtifactSink {
public:
    explicit ArtifactSink(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    void write(const std::string& name, const std::string& content, bool hashed = true) {
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write '" + (dir_ / name).string() + "'");
        f << content;
        if (!f) throw std::runtime_error("write failed for '" + (dir_ / name).string() + "'");
        (hashed ? result_.artifacts : result_.sidecars).push_back(name);
        if (hashed) hashes_[name] = git_blob_hash(content);
    }

    void chart(bool enabled, const std::string& name, const Chart& c) {
        if (!enabled) return;
        std::ostringstream os;
        write_svg(os, c);
        write(name, os.str());
    }

    const std::filesystem::path& dir() const { return dir_; }
    const ExperimentResult& result() const { return result_; }
    const std::map<std::string, std::string>& hashes() const { return hashes_; }

private:
    std::filesystem::path dir_;
    ExperimentResult result_;
    std::map<std::string, std::string> hashes_;
};

struct Context {
    const Config& cfg;
    const ExperimentSpec& spec;
    Rng root;
    ArtifactSink& sink;
    McOptions mc() const { return {parse_sampler(cfg.mc.sampler), spec.threads}; }
    // Scenario i of the experiment's scenario set; geometry does not depend on L.
    Scenario scenario(const SystemConfig& sys, std::size_t i = 0) const {
        return place_uniform(sys, root.substream({fnv1a("scenario"), i}));
    }
};

inline std::size_t kind_index(PrecoderKind k) { return static_cast<std::size_t>(k); }

inline bool rank_ok(PrecoderKind kind, const SystemConfig& sys) { return kind == PrecoderKind::MRT || zf_dof(sys) > 0.0; }

inline double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline const auto fd = format_double;

// ---- recipes --------------------------------------------------------------

inline void validate_closed_form(Context& ctx) {
    const auto& cfg = ctx.cfg;
    std::ostringstream users, summary;
    users << "L,NL,kind,user_kind,group,index,closed_form_sinr,mc_sinr,mc_ci,rel_err,closed_form_se,mc_se\n";
    summary << "L,NL,kind,closed_form_mean_unicast_se,mc_mean_unicast_se,closed_form_min_multicast_se,mc_min_multicast_se,"
               "max_rel_err\n";
    std::map<std::string, Series> series;
    const Scenario scn = ctx.scenario(cfg.system);
    for (std::size_t L : cfg.mc.antennas) {
        SystemConfig sys = cfg.system;
        sys.antennas_per_rau = L;
        const auto alloc = PowerAllocation::uniform(sys, cfg.allocation);
        const auto gains = equivalent_gains(scn, alloc, sys);
        for (auto kind : kAllPrecoders) {
            if (!rank_ok(kind, sys)) continue;
            auto cf = closed_form_sinr(kind, scn, gains, alloc, sys);
            se_from_sinr(cf, alloc.tau, sys.coherence_length);
            const auto rep = estimate_sinr(kind, scn, alloc, sys, cfg.mc.realizations,
                                           ctx.root.substream({fnv1a("mc"), L, kind_index(kind)}), ctx.mc());
            auto mc = rep.as_se_report();
            se_from_sinr(mc, alloc.tau, sys.coherence_length);
            const std::string k(to_string(kind));
            double max_err = 0.0;
            const auto row = [&](const char* uk, long group, std::size_t idx, double c, const McUserTerms& t, double cse,
                                 double mse) {
                const double err = c != 0.0 ? std::abs(t.sinr.mean - c) / std::abs(c) : std::abs(t.sinr.mean);
                max_err = std::max(max_err, err);
                users << L << ',' << sys.total_antennas() << ',' << k << ',' << uk << ',' << group << ',' << idx << ','
                      << fd(c) << ',' << fd(t.sinr.mean) << ',' << fd(t.sinr.half_width_95) << ',' << fd(err) << ','
                      << fd(cse) << ',' << fd(mse) << '\n';
            };
            for (std::size_t u = 0; u < scn.n_unicast(); ++u)
                row("unicast", -1, u, cf.sinr_unicast[u], rep.unicast[u], cf.se_unicast[u], mc.se_unicast[u]);
            for (std::size_t m = 0; m < scn.n_groups(); ++m)
                for (std::size_t j = 0; j < scn.group_size(m); ++j)
                    row("multicast", static_cast<long>(m), j, cf.sinr_multicast[m][j], rep.multicast[m][j],
                        cf.se_multicast[m][j], mc.se_multicast[m][j]);
            summary << L << ',' << sys.total_antennas() << ',' << k << ',' << fd(cf.mean_unicast_se()) << ','
                    << fd(mc.mean_unicast_se()) << ',' << fd(cf.min_multicast_se()) << ',' << fd(mc.min_multicast_se())
                    << ',' << fd(max_err) << '\n';
            const double nl = static_cast<double>(sys.total_antennas());
            for (auto [tag, v] : {std::pair{"closed form", cf.mean_unicast_se()}, std::pair{"MC", mc.mean_unicast_se()}}) {
                auto& s = series[k + " " + tag];
                s.label = k + " " + tag;
                s.x.push_back(nl);
                s.y.push_back(v);
            }
        }
    }
    ctx.sink.write("closed_form_validation.csv", users.str());
    ctx.sink.write("closed_form_summary.csv", summary.str());
    Chart c{"Mean unicast SE: closed form vs Monte Carlo", "NL", "SE (bit/s/Hz)", {}, false};
    for (auto& [_, s] : series) c.series.push_back(s);
    ctx.sink.chart(ctx.spec.plots, "closed_form_validation.svg", c);
}

inline void unicast_vs_multicast(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& ex = cfg.experiment;
    if (ex.comparison_groups == 0 || ex.comparison_users % ex.comparison_groups != 0)
        throw ConfigError("experiment.comparison_users must be a multiple of experiment.comparison_groups");
    const std::size_t K = ex.comparison_users / ex.comparison_groups;

    SystemConfig uni = cfg.system;
    uni.n_unicast = ex.comparison_users;
    uni.n_groups = 0;
    uni.group_sizes.clear();
    uni.pilot_length.reset();
    SystemConfig multi = cfg.system;
    multi.n_unicast = 0;
    multi.n_groups = ex.comparison_groups;
    multi.group_sizes.assign(ex.comparison_groups, K);
    multi.pilot_length.reset();

    std::ostringstream os;
    os << "scenario,L,NL,kind,unicast_tau,multicast_tau,unicast_per_user_se,multicast_per_user_se\n";
    std::map<std::string, Series> series;
    for (std::size_t i = 0; i < ex.scenario_count; ++i) {
        const Scenario su = ctx.scenario(uni, i);
        std::vector<std::vector<Point>> groups(ex.comparison_groups);
        for (std::size_t u = 0; u < su.n_unicast(); ++u) groups[u / K].push_back(su.unicast_positions[u]);
        const Scenario sm = scenario_from_positions(multi, su.rau_positions, {}, groups);
        for (std::size_t L : cfg.mc.antennas) {
            uni.antennas_per_rau = multi.antennas_per_rau = L;
            AllocationDefaults d = cfg.allocation;
            d.p_dl = d.q_dl = ex.per_stream_power;
            const auto au = PowerAllocation::uniform(uni, d);
            const auto am = PowerAllocation::uniform(multi, d);
            for (auto kind : kAllPrecoders) {
                if (!rank_ok(kind, uni) || !rank_ok(kind, multi)) continue;
                const auto ru = closed_form_se(kind, su, au, uni);
                const auto rm = closed_form_se(kind, sm, am, multi);
                const std::string k(to_string(kind));
                os << i << ',' << L << ',' << uni.total_antennas() << ',' << k << ',' << uni.tau() << ',' << multi.tau()
                   << ',' << fd(ru.mean_unicast_se()) << ',' << fd(rm.mean_multicast_se()) << '\n';
                if (i == 0) {
                    for (auto [tag, v] : {std::pair{"unicast", ru.mean_unicast_se()}, std::pair{"multicast", rm.mean_multicast_se()}}) {
                        auto& s = series[k + " " + tag];
                        s.label = k + " " + tag;
                        s.x.push_back(static_cast<double>(uni.total_antennas()));
                        s.y.push_back(v);
                    }
                }
            }
        }
    }
    ctx.sink.write("unicast_vs_multicast.csv", os.str());
    Chart c{"Per-user SE, unicast vs multicast (scenario 0)", "NL", "SE per user (bit/s/Hz)", {}, false};
    for (auto& [_, s] : series) c.series.push_back(s);
    ctx.sink.chart(ctx.spec.plots, "unicast_vs_multicast.svg", c);
}

inline void sweep_T(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& sys = cfg.system;
    const Scenario scn = ctx.scenario(sys);
    const auto alloc = PowerAllocation::uniform(sys, cfg.allocation);
    const auto gains = equivalent_gains(scn, alloc, sys);
    if (cfg.experiment.t_step == 0) throw ConfigError("experiment.t_step must be >= 1");

    std::ostringstream os;
    os << "T,tau,kind,mean_unicast_sinr,min_multicast_sinr,mean_unicast_se,min_multicast_se,mean_multicast_se\n";
    Chart c{"SE vs coherence length", "T (symbols)", "SE (bit/s/Hz)", {}, false};
    for (auto kind : kAllPrecoders) {
        if (!rank_ok(kind, sys)) continue;
        const auto base = closed_form_sinr(kind, scn, gains, alloc, sys);
        double mean_sinr = 0.0, min_sinr = std::numeric_limits<double>::infinity();
        for (double s : base.sinr_unicast) mean_sinr += s;
        if (!base.sinr_unicast.empty()) mean_sinr /= static_cast<double>(base.sinr_unicast.size());
        for (const auto& g : base.sinr_multicast)
            for (double s : g) min_sinr = std::min(min_sinr, s);
        if (std::isinf(min_sinr)) min_sinr = 0.0;
        Series su{std::string(to_string(kind)) + " unicast", {}, {}};
        Series sm{std::string(to_string(kind)) + " multicast", {}, {}};
        for (std::size_t T = alloc.tau; T <= cfg.experiment.t_max; T += cfg.experiment.t_step) {
            auto r = base;
            se_from_sinr(r, alloc.tau, T);
            os << T << ',' << alloc.tau << ',' << to_string(kind) << ',' << fd(mean_sinr) << ',' << fd(min_sinr) << ','
               << fd(r.mean_unicast_se()) << ',' << fd(r.min_multicast_se()) << ',' << fd(r.mean_multicast_se()) << '\n';
            su.x.push_back(static_cast<double>(T));
            su.y.push_back(r.mean_unicast_se());
            sm.x.push_back(static_cast<double>(T));
            sm.y.push_back(r.min_multicast_se());
        }
        c.series.push_back(su);
        c.series.push_back(sm);
    }
    ctx.sink.write("sweep_T.csv", os.str());
    ctx.sink.chart(ctx.spec.plots, "sweep_T.svg", c);
}

inline void distributed_vs_centralized(Context& ctx) {
    const auto& cfg = ctx.cfg;
    std::ostringstream os;
    os << "scenario,NL,kind,layout,N,L,mean_unicast_se,min_multicast_se,mean_multicast_se\n";
    std::map<std::string, Series> series;
    for (std::size_t i = 0; i < cfg.experiment.scenario_count; ++i) {
        const Scenario dist = ctx.scenario(cfg.system, i);
        for (std::size_t L : cfg.mc.antennas) {
            SystemConfig ds = cfg.system;
            ds.antennas_per_rau = L;
            SystemConfig cs = ds;
            cs.n_raus = 1;
            cs.antennas_per_rau = ds.n_raus * L;
            const Scenario cent =
                scenario_from_positions(cs, {Point{0.0, 0.0}}, dist.unicast_positions, dist.multicast_positions);
            const auto alloc = PowerAllocation::uniform(ds, cfg.allocation);
            for (auto kind : kAllPrecoders) {
                if (!rank_ok(kind, ds)) continue;
                for (const auto& [layout, scn, sys] :
                     {std::tuple<const char*, const Scenario&, const SystemConfig&>{"distributed", dist, ds},
                      std::tuple<const char*, const Scenario&, const SystemConfig&>{"centralized", cent, cs}}) {
                    const auto r = closed_form_se(kind, scn, alloc, sys);
                    os << i << ',' << sys.total_antennas() << ',' << to_string(kind) << ',' << layout << ',' << sys.n_raus
                       << ',' << sys.antennas_per_rau << ',' << fd(r.mean_unicast_se()) << ',' << fd(r.min_multicast_se())
                       << ',' << fd(r.mean_multicast_se()) << '\n';
                    if (i == 0) {
                        const std::string label = std::string(to_string(kind)) + " " + layout;
                        auto& s = series[label];
                        s.label = label;
                        s.x.push_back(static_cast<double>(sys.total_antennas()));
                        s.y.push_back(r.mean_multicast_se());
                    }
                }
            }
        }
    }
    ctx.sink.write("distributed_vs_centralized.csv", os.str());
    Chart c{"Multicast SE, distributed vs centralized (scenario 0)", "NL", "mean multicast SE (bit/s/Hz)", {}, false};
    for (auto& [_, s] : series) c.series.push_back(s);
    ctx.sink.chart(ctx.spec.plots, "distributed_vs_centralized.svg", c);
}

inline void sweep_multicast_power(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& ex = cfg.experiment;
    if (!(ex.q_dl_step > 0.0)) throw ConfigError("experiment.q_dl_step must be > 0");
    const Scenario scn = ctx.scenario(cfg.system);
    std::ostringstream os;
    os << "noise_scale,q_dl,kind,mean_unicast_se,min_multicast_se,mean_multicast_se\n";
    Chart c{"Multicast SE vs multicast downlink power", "q_dl (W)", "min multicast SE (bit/s/Hz)", {}, false};
    for (double scale : ex.noise_scales) {
        SystemConfig sys = cfg.system;
        sys.noise_ul *= scale;
        sys.noise_dl *= scale;
        for (auto kind : kAllPrecoders) {
            if (!rank_ok(kind, sys)) continue;
            Series s{std::string(to_string(kind)) + " noise x" + format_double(scale), {}, {}};
            for (std::size_t i = 0;; ++i) {
                const double q = ex.q_dl_min + static_cast<double>(i) * ex.q_dl_step;
                if (q > ex.q_dl_max + 1e-9 * ex.q_dl_step) break;
                AllocationDefaults d = cfg.allocation;
                d.q_dl = q;
                const auto r = closed_form_se(kind, scn, PowerAllocation::uniform(sys, d), sys);
                os << fd(scale) << ',' << fd(q) << ',' << to_string(kind) << ',' << fd(r.mean_unicast_se()) << ','
                   << fd(r.min_multicast_se()) << ',' << fd(r.mean_multicast_se()) << '\n';
                s.x.push_back(q);
                s.y.push_back(r.min_multicast_se());
            }
            c.series.push_back(s);
        }
    }
    ctx.sink.write("sweep_multicast_power.csv", os.str());
    ctx.sink.chart(ctx.spec.plots, "sweep_multicast_power.svg", c);
}

inline void pareto(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const Scenario scn = ctx.scenario(cfg.system);
    std::ostringstream front, hv, summary;
    const std::size_t dim = 2 * cfg.system.n_unicast + cfg.system.n_groups + cfg.system.multicast_users();
    front << "kind,f1,f2";
    for (std::size_t d = 0; d < dim; ++d) front << ",g" << d;
    front << '\n';
    hv << "kind,generation,hypervolume\n";
    summary << "kind,points,feasible,max_sum_f1,max_sum_f2\n";
    Chart c{"Pareto fronts", "min multicast SE f1 (bit/s/Hz)", "mean unicast SE f2 (bit/s/Hz)", {}, true};
    nlohmann::ordered_json timing;
    for (auto kind : kAllPrecoders) {
        if (!rank_ok(kind, cfg.system)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        const auto pf = run_nsga2(kind, scn, cfg.system, cfg.limits, cfg.nsga2,
                                  ctx.root.substream({fnv1a("nsga2"), kind_index(kind)}), {ctx.spec.threads});
        timing[std::string(to_string(kind))] = elapsed_s(t0);
        Series s{std::string(to_string(kind)), {}, {}};
        for (const auto& p : pf.points) {
            front << to_string(kind) << ',' << fd(p.f1) << ',' << fd(p.f2);
            for (double g : p.alloc.flatten()) front << ',' << fd(g);
            front << '\n';
            s.x.push_back(p.f1);
            s.y.push_back(p.f2);
        }
        for (std::size_t g = 0; g < pf.hypervolume_history.size(); ++g)
            hv << to_string(kind) << ',' << g << ',' << fd(pf.hypervolume_history[g]) << '\n';
        const auto& best = pf.points[pf.max_sum_index()];
        summary << to_string(kind) << ',' << pf.points.size() << ',' << (pf.feasible ? 1 : 0) << ',' << fd(best.f1) << ','
                << fd(best.f2) << '\n';
        c.series.push_back(s);
    }
    ctx.sink.write("pareto_front.csv", front.str());
    ctx.sink.write("pareto_hypervolume.csv", hv.str());
    ctx.sink.write("pareto_summary.csv", summary.str());
    ctx.sink.chart(ctx.spec.plots, "pareto_front.svg", c);
    ctx.sink.write("timing.json", nlohmann::ordered_json{{"nsga2_seconds", timing}}.dump(2) + "\n", false);
}

inline TrainResult train_allocator(Context& ctx, PrecoderKind kind) {
    return train(ctx.cfg.system, ctx.cfg.limits, kind, ctx.cfg.dnn, ctx.root.substream({fnv1a("dnn"), ctx.cfg.dnn.seed}));
}

inline void write_model_artifacts(Context& ctx, const TrainResult& res) {
    std::ostringstream model(std::ios::binary);
    save_model(model, res.params);
    ctx.sink.write("model.bin", model.str());
    std::ostringstream log;
    write_train_log_csv(log, res.log, ctx.spec.timing);
    ctx.sink.write("train_log.csv", log.str(), !ctx.spec.timing);
}

inline void dnn_train(Context& ctx) {
    const auto kind = parse_precoder(ctx.cfg.experiment.precoder);
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = train_allocator(ctx, kind);
    const double secs = elapsed_s(t0);
    write_model_artifacts(ctx, res);
    Chart c{"Allocator training", "iteration", "loss", {}, false};
    Series tr{"train", {}, {}}, va{"validation", {}, {}};
    for (const auto& r : res.log) {
        tr.x.push_back(static_cast<double>(r.iteration));
        tr.y.push_back(r.train_loss);
        if (!std::isnan(r.val_loss)) {
            va.x.push_back(static_cast<double>(r.iteration));
            va.y.push_back(r.val_loss);
        }
    }
    c.series = {tr, va};
    ctx.sink.chart(ctx.spec.plots, "train_log.svg", c);
    ctx.sink.write("timing.json",
                   nlohmann::ordered_json{{"train_seconds", secs}, {"best_iteration", res.best_iteration}}.dump(2) + "\n",
                   false);
}

inline void dnn_vs_nsga2(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto kind = parse_precoder(cfg.experiment.precoder);
    const auto t_train = std::chrono::steady_clock::now();
    const auto res = train_allocator(ctx, kind);
    const double train_s = elapsed_s(t_train);
    write_model_artifacts(ctx, res);

    const auto tests = sample_scenarios(cfg.system, ctx.root.substream("test"), cfg.experiment.test_scenarios);
    AllocationDefaults even = cfg.allocation;
    even.p_dl = even.q_dl = cfg.limits.P_dl / static_cast<double>(cfg.system.streams());

    std::ostringstream os;
    os << "scenario,dnn_mean_unicast_rate,dnn_min_multicast_rate,dnn_sum,nsga2_sum,uniform_sum,ratio\n";
    double sum_dnn = 0.0, sum_nsga = 0.0, sum_uni = 0.0, infer_s = 0.0, nsga_s = 0.0;
    Chart c{"Allocator vs NSGA-II max-sum point", "test scenario", "sum rate (bit/s/Hz)", {}, false};
    Series sd{"allocator", {}, {}}, sn{"NSGA-II", {}, {}};
    for (std::size_t i = 0; i < tests.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto a = infer_allocation(res.params, tests[i], cfg.system);
        infer_s += elapsed_s(t0);
        const auto d = rate_objective(kind, tests[i], a, cfg.system);

        const auto t1 = std::chrono::steady_clock::now();
        const auto pf = run_nsga2(kind, tests[i], cfg.system, cfg.limits, cfg.nsga2,
                                  ctx.root.substream({fnv1a("nsga2-test"), i}), {ctx.spec.threads});
        nsga_s += elapsed_s(t1);
        const double n = rate_objective(kind, tests[i], pf.points[pf.max_sum_index()].alloc, cfg.system).sum();
        const double u = rate_objective(kind, tests[i], PowerAllocation::uniform(cfg.system, even), cfg.system).sum();
        os << i << ',' << fd(d.mean_unicast_rate) << ',' << fd(d.min_multicast_rate) << ',' << fd(d.sum()) << ','
           << fd(n) << ',' << fd(u) << ',' << fd(n > 0.0 ? d.sum() / n : 0.0) << '\n';
        sum_dnn += d.sum();
        sum_nsga += n;
        sum_uni += u;
        sd.x.push_back(static_cast<double>(i));
        sd.y.push_back(d.sum());
        sn.x.push_back(static_cast<double>(i));
        sn.y.push_back(n);
    }
    ctx.sink.write("dnn_vs_nsga2.csv", os.str());
    std::ostringstream summary;
    summary << "kind,test_scenarios,dnn_total,nsga2_total,uniform_total,ratio\n"
            << to_string(kind) << ',' << tests.size() << ',' << fd(sum_dnn) << ',' << fd(sum_nsga) << ',' << fd(sum_uni)
            << ',' << fd(sum_nsga > 0.0 ? sum_dnn / sum_nsga : 0.0) << '\n';
    ctx.sink.write("dnn_vs_nsga2_summary.csv", summary.str());
    c.series = {sd, sn};
    ctx.sink.chart(ctx.spec.plots, "dnn_vs_nsga2.svg", c);
    const double n_tests = std::max<double>(1.0, static_cast<double>(tests.size()));
    ctx.sink.write("timing.json",
                   nlohmann::ordered_json{{"train_seconds", train_s},
                                          {"inference_seconds_per_scenario", infer_s / n_tests},
                                          {"nsga2_seconds_per_scenario", nsga_s / n_tests}}
                           .dump(2) +
                       "\n",
                   false);
}

inline void appendix_terms(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const Scenario scn = ctx.scenario(cfg.system);
    const auto alloc = PowerAllocation::uniform(cfg.system, cfg.allocation);
    std::ostringstream os;
    bool header = true;
    for (auto kind : kAllPrecoders) {
        if (!rank_ok(kind, cfg.system)) continue;
        const auto terms = estimate_appendix_terms(kind, scn, alloc, cfg.system, cfg.mc.realizations,
                                                   ctx.root.substream({fnv1a("appendix"), kind_index(kind)}), ctx.mc());
        write_appendix_csv(os, terms, header);
        header = false;
    }
    ctx.sink.write("appendix_terms.csv", os.str());
}

}  // namespace detail

// Runs one named experiment and writes its manifest last.
inline ExperimentResult run_experiment(const ExperimentSpec& spec, const Config& cfg) {
    using Fn = void (*)(detail::Context&);
    static const std::map<std::string, Fn> recipes{
        {"validate_closed_form", detail::validate_closed_form},
        {"unicast_vs_multicast", detail::unicast_vs_multicast},
        {"sweep_T", detail::sweep_T},
        {"distributed_vs_centralized", detail::distributed_vs_centralized},
        {"sweep_multicast_power", detail::sweep_multicast_power},
        {"pareto", detail::pareto},
        {"dnn_train", detail::dnn_train},
        {"dnn_vs_nsga2", detail::dnn_vs_nsga2},
        {"appendix_terms", detail::appendix_terms},
    };
    const auto it = recipes.find(spec.name);
    if (it == recipes.end()) throw ConfigError("unknown experiment '" + spec.name + "'");

    detail::ArtifactSink sink(spec.out_dir);
    detail::Context ctx{cfg, spec, Rng(cfg.system.rng_seed), sink};
    it->second(ctx);

    nlohmann::ordered_json m;
    m["experiment"] = spec.name;
    m["seed"] = cfg.system.rng_seed;
    m["config"] = to_config_text(cfg);
    nlohmann::ordered_json arts = nlohmann::ordered_json::array();
    for (const auto& name : sink.result().artifacts)
        arts.push_back({{"file", name}, {"git_sha1", sink.hashes().at(name)}});
    m["artifacts"] = arts;
    m["sidecars"] = sink.result().sidecars;
    std::ofstream f(std::filesystem::path(spec.out_dir) / "manifest.json", std::ios::binary);
    f << m.dump(2) << '\n';
    auto result = sink.result();
    result.artifacts.push_back("manifest.json");
    return result;
}

}  // namespace cellfree
