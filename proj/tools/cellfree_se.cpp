// cellfree_se: experiment runner and config/model utilities.
//
//   cellfree_se run <experiment> [--config F] [--seed N] [--out DIR] [--set k=v]... [--threads N] [--plots]
//   cellfree_se config check [--config F] [--set k=v]...
//   cellfree_se model inspect <file>
//
// Exit codes: 0 ok, 1 other failure, 2 bad configuration or arguments,
// 3 numerical failure.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cellfree/errors.hpp"
#include "cellfree/experiments.hpp"

namespace {

int fail(int code, const std::string& msg) {
    std::cerr << "cellfree_se: " << msg << '\n';
    return code;
}

int run_main(int argc, char** argv) {
    CLI::App app{"Cell-free joint unicast/multicast SE toolkit"};
    app.require_subcommand(1);

    cellfree::ExperimentSpec spec;
    std::optional<std::uint64_t> seed;
    auto add_config_flags = [&](CLI::App* sub) {
        sub->add_option("--config", spec.config_path, "Config file (key = value)");
        sub->add_option("--set", spec.overrides, "Override key=value (repeatable)")->allow_extra_args(false);
        sub->add_option("--seed", seed, "Base RNG seed");
    };

    auto* run = app.add_subcommand("run", "Run an experiment");
    run->add_option("experiment", spec.name, "Experiment name")
        ->required()
        ->check(CLI::IsMember(cellfree::experiment_names()));
    add_config_flags(run);
    run->add_option("--out", spec.out_dir, "Output directory");
    run->add_option("--threads", spec.threads, "Worker threads (default: CELLFREE_SE_THREADS or 1)");
    run->add_flag("--plots", spec.plots, "Also write SVG plots");
    run->add_flag("--timing", spec.timing, "Write wall-clock times into train_log.csv");

    auto* config = app.add_subcommand("config", "Configuration utilities");
    config->require_subcommand(1);
    auto* check = config->add_subcommand("check", "Validate a configuration and print its canonical form");
    add_config_flags(check);

    auto* model = app.add_subcommand("model", "Model file utilities");
    model->require_subcommand(1);
    auto* inspect = model->add_subcommand("inspect", "Describe a trained allocator file");
    std::string model_path;
    inspect->add_option("file", model_path, "Model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    spec.seed = seed;

    if (*run) {
        const auto cfg = cellfree::load_experiment_config(spec);
        try {
            const auto res = cellfree::run_experiment(spec, cfg);
            for (const auto& a : res.artifacts) std::cout << spec.out_dir << '/' << a << '\n';
        } catch (const cellfree::NumericalError& e) {
            return fail(3, "numerical failure in " + spec.name + " (numerics/solve_hpd): " + e.what());
        } catch (const cellfree::NormalizationError& e) {
            return fail(3, "numerical failure in " + spec.name + " (precoding/build_precoders): " + e.what());
        } catch (const cellfree::TrainingError& e) {
            return fail(3, "numerical failure in " + spec.name + " (dnn-allocator/train): " + e.what());
        }
        return 0;
    }
    if (*check) {
        const auto cfg = cellfree::load_experiment_config(spec);
        std::cout << cellfree::to_config_text(cfg);
        if (!(cellfree::zf_dof(cfg.system) > 0.0))
            std::cerr << "note: NL <= M + U, so only MRT is usable with this configuration\n";
        return 0;
    }
    if (*inspect) {
        std::ifstream f(model_path, std::ios::binary);
        if (!f) return fail(2, "cannot open model file '" + model_path + "'");
        const auto p = cellfree::load_model(f);
        std::cout << "widths:";
        for (auto w : p.widths()) std::cout << ' ' << w;
        std::cout << "\nparameters: " << p.parameter_count() << "\nunicast users: " << p.head.n_unicast
                  << "\ngroup sizes:";
        for (auto k : p.head.group_sizes) std::cout << ' ' << k;
        std::cout << "\ndownlink budget: " << cellfree::detail::format_double(p.head.p_dl_total)
                  << " W\nuplink caps: " << cellfree::detail::format_double(p.head.p_ul_cap_unicast) << " W unicast, "
                  << cellfree::detail::format_double(p.head.p_ul_cap_multicast) << " W multicast\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_main(argc, argv);
    } catch (const cellfree::ConfigError& e) {
        return fail(2, std::string("config error: ") + e.what());
    } catch (const cellfree::ParameterError& e) {
        return fail(2, std::string("invalid parameter: ") + e.what());
    } catch (const cellfree::NumericalError& e) {
        return fail(3, std::string("numerical failure: ") + e.what());
    } catch (const cellfree::NormalizationError& e) {
        return fail(3, std::string("numerical failure: ") + e.what());
    } catch (const cellfree::TrainingError& e) {
        return fail(3, std::string("numerical failure: ") + e.what());
    } catch (const std::exception& e) {
        return fail(1, e.what());
    }
}
