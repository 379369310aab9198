#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "erracc/harness/commands.hpp"

namespace {

struct CommonOpts {
    std::string preset = "desk";
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> system;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_system_positional) {
    if (with_system_positional)
        cmd->add_option("system", opts.system, "system to use (l63 or l96)");
    cmd->add_option("--config", opts.config, "JSON config file (overrides preset defaults)");
    cmd->add_option("--preset", opts.preset, "preset defaults: desk or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--seed", opts.seed, "RNG seed (also read from RUN_SEED)");
    cmd->add_option("--out", opts.out, "output directory");
    cmd->add_option("--threads", opts.threads, "worker threads for evaluation (default 1)");
}

erracc::harness::ExperimentConfig resolve(const CommonOpts& opts) {
    auto cfg = erracc::harness::resolve_config(opts.system, opts.preset, opts.config, opts.seed,
                                               opts.out);
    if (opts.threads > 0) cfg.threads = opts.threads;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"erracc: train and score autoregressive vs direct-horizon forecasters on the "
                 "Lorenz 63/96 systems"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts, eval_opts;
    std::string train_kind;
    std::filesystem::path report_csv, report_out = "out";

    auto* gen = app.add_subcommand("gen-data", "integrate a truth dataset and persist it");
    add_common(gen, gen_opts, /*with_system_positional=*/true);

    auto* train = app.add_subcommand("train", "train one roster model");
    train->add_option("kind", train_kind, "model kind (cts, gen, gen-rollout, gen-noise, "
                                          "gen-penalty, gen-ours)")
        ->required();
    add_common(train, train_opts, /*with_system_positional=*/false);

    auto* eval = app.add_subcommand("evaluate", "build ensembles and write the metrics CSV");
    add_common(eval, eval_opts, /*with_system_positional=*/false);

    auto* report = app.add_subcommand("report", "render SVG figures from a metrics CSV");
    report->add_option("--csv", report_csv, "metrics CSV path")->required();
    report->add_option("--out", report_out, "output directory for figures");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            if (!gen_opts.system) throw erracc::ConfigError("gen-data needs a <system> argument");
            erracc::harness::cmd_gen_data(resolve(gen_opts));
        } else if (train->parsed()) {
            erracc::harness::cmd_train(resolve(train_opts), train_kind);
        } else if (eval->parsed()) {
            erracc::harness::cmd_evaluate(resolve(eval_opts));
        } else if (report->parsed()) {
            erracc::harness::cmd_report(report_csv, report_out);
        }
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    } catch (const erracc::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const erracc::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const erracc::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
