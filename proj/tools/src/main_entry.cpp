#include <ostream>

#include <CLI11.hpp>

#include "bhh/cli.hpp"

namespace bhh::cli {

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Second-order calculus, sampling and hitting experiments for the biharmonic heat equation"};
    app.set_help_flag("-h,--help", "Print this help and exit");
    Invocation inv;
    std::string config;
    std::uint64_t seed = 0;
    int workers = 1;
    app.add_option("command", inv.command, "One of: cov verify-bounds simulate hitprob polarity capacity hausdorff "
                                           "dim appendix-check")
        ->required();
    auto* config_opt = app.add_option("--config", config, "Flat key = value configuration file");
    auto* seed_opt = app.add_option("--seed", seed, "Seed (overrides sim.seed)");
    auto* workers_opt = app.add_option("--workers", workers, "Worker threads (0: all cores)");
    app.add_option("--out", inv.out_dir, "Output directory");
    app.add_flag("--dry-run", inv.dry_run, "Validate the configuration and stop");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help() << usage();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << '\n' << usage();
        return kExitUsage;
    }
    if (config_opt->count() > 0) inv.config_path = config;
    if (seed_opt->count() > 0) inv.seed = seed;
    if (workers_opt->count() > 0) inv.workers = workers;
    return run(inv, out, err);
}

}  // namespace bhh::cli
