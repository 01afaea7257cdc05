// Command-line front end for the receding-horizon policy pipeline:
// train checkpoints, roll out execution traces, score them, aggregate
// reports, run the model-free invariant suite, and sweep stride settings.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "legato/runner.hpp"

namespace {

struct CommonOpts {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
    auto* c = cmd->add_option("--config", opts.config, "run config JSON file");
    if (config_required) c->required();
    cmd->add_option("--out", opts.out, "output directory (overrides config)");
    cmd->add_option("--seed", opts.seed,
                    "override the training seed and replace the rollout seed list");
    cmd->add_option("--workers", opts.workers, "worker thread count (overrides config)");
    cmd->add_flag("--force", opts.force, "overwrite outputs that already exist");
}

legato::RunConfig resolve(const CommonOpts& opts) {
    legato::RunConfig cfg = legato::load_config(opts.config);
    if (opts.out) cfg.out_dir = *opts.out;
    if (opts.workers) {
        if (*opts.workers < 1) throw legato::ConfigError("--workers must be >= 1");
        cfg.workers = *opts.workers;
    }
    if (opts.seed) {
        cfg.train.seed = *opts.seed;
        cfg.seeds = {*opts.seed};
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"receding-horizon flow policy pipeline"};
    app.require_subcommand(1);

    CommonOpts train_opts, rollout_opts, metrics_opts, report_opts, sweep_opts;
    auto* train_cmd =
        app.add_subcommand("train", "train one checkpoint per configured family");
    add_common(train_cmd, train_opts, true);
    auto* rollout_cmd =
        app.add_subcommand("rollout", "run the strategy x schedule x seed grid");
    add_common(rollout_cmd, rollout_opts, true);
    auto* metrics_cmd =
        app.add_subcommand("metrics", "score every trace into a metrics file");
    add_common(metrics_cmd, metrics_opts, true);
    auto* report_cmd =
        app.add_subcommand("report", "aggregate metrics into CSV tables");
    add_common(report_cmd, report_opts, true);
    auto* sweep_cmd =
        app.add_subcommand("sweep", "stride sweep with r = h - s - d");
    add_common(sweep_cmd, sweep_opts, true);
    auto* oracle_cmd = app.add_subcommand(
        "oracle-check", "model-free invariant suite; exit 2 on any failure");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train_cmd->parsed()) {
            legato::cmd_train(resolve(train_opts), train_opts.force);
        } else if (rollout_cmd->parsed()) {
            legato::cmd_rollout(resolve(rollout_opts), rollout_opts.force);
        } else if (metrics_cmd->parsed()) {
            legato::cmd_metrics(resolve(metrics_opts), metrics_opts.force);
        } else if (report_cmd->parsed()) {
            legato::cmd_report(resolve(report_opts), report_opts.force);
        } else if (sweep_cmd->parsed()) {
            legato::cmd_sweep(resolve(sweep_opts), sweep_opts.force);
        } else if (oracle_cmd->parsed()) {
            return legato::cmd_oracle_check(std::cout) ? 0 : 2;
        }
    } catch (const legato::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
