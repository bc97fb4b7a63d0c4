// Command-line front end: one subcommand per experiment plus `run`, which
// takes the experiment from the configuration file.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "rmdiff/config.hpp"
#include "rmdiff/run.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
};

void add_common(CLI::App* sub, Options& opt) {
    sub->add_option("--config", opt.config, "run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "master seed (overrides the configuration)");
    sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", opt.out, "output directory");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw rmdiff::Error("cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random-matrix diffusion laboratory"};
    app.require_subcommand(1);
    Options opt;
    for (const auto& kind : rmdiff::experiment_kinds()) add_common(app.add_subcommand(kind, "run the " + kind + " experiment"), opt);
    add_common(app.add_subcommand("run", "run the experiment named in the configuration"), opt);
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return rmdiff::kUsageError;
    }

    const std::string sub = app.get_subcommands().front()->get_name();
    rmdiff::RunConfig cfg;
    try {
        const std::string forced = sub == "run" ? "" : sub;
        if (!opt.config.empty())
            cfg = rmdiff::parse_config(read_file(opt.config), forced);
        else if (sub == "run") {
            std::cerr << "status=2 error=usage message=\"run requires --config\"\n";
            return rmdiff::kUsageError;
        } else
            cfg = rmdiff::default_config(sub);
    } catch (const std::exception& e) {
        std::cerr << "status=2 error=config message=\"" << e.what() << "\"\n";
        rmdiff::write_error_record(opt.out.value_or(cfg.out), rmdiff::kUsageError, "config", e.what());
        return rmdiff::kUsageError;
    }
    if (opt.seed) cfg.exp.seed = *opt.seed;
    if (opt.threads) cfg.exp.threads = *opt.threads;
    if (opt.out) cfg.out = *opt.out;
    const int status = rmdiff::run(cfg, std::cerr);
    if (status == rmdiff::kOk) std::cout << "wrote " << cfg.experiment << " results to " << cfg.out << "\n";
    return status;
}
