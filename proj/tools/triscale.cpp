#include "triscale/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>

using namespace triscale;

namespace {

enum Exit { kOk = 0, kConfig = 2, kSolver = 3, kCheck = 4 };

void print_summary(const ConvergenceReport &r) {
    std::cout << std::setprecision(6);
    if (r.model) {
        std::cout << "A_hat =\n" << r.model->a_hat << "\ncapacity |Z_s| rho_bar = " << r.model->capacity() << '\n';
        std::cout << "max |L1| = " << r.model->l1.cwiseAbs().maxCoeff() << ", max |L2| = " << r.model->l2.cwiseAbs().maxCoeff()
                  << ", max |L3| = " << r.model->l3.cwiseAbs().maxCoeff() << '\n';
    }
    for (const auto &row : r.dns)
        std::cout << "eps = " << row.eps << ": error " << row.plain << ", with corrector " << row.corrected
                  << ", relative " << row.relative << '\n';
    for (const auto &row : r.msconv)
        std::cout << "msconv eps = " << row.eps << " " << row.function << (row.perforated ? " perforated" : " full")
                  << ": error " << row.error() << '\n';
    for (const auto &[name, ok] : r.checks) std::cout << (ok ? "ok   " : "FAIL ") << name << '\n';
    for (const auto &[stage, s] : r.stage_seconds) std::cout << stage << ": " << s << " s\n";
    std::cout << "config hash " << r.config_hash << '\n';
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Three-scale homogenization of fractured porous media"};
    app.require_subcommand(1);
    std::string config_path, output;
    int workers = 0;
    double tol = 0.0;
    bool plots = true;

    auto add_common = [&](CLI::App *sub) {
        sub->add_option("config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output", output, "output directory (overrides the config)");
        sub->add_option("-j,--workers", workers, "worker threads (overrides the config)")->check(CLI::Range(1, 256));
        sub->add_option("--tol", tol, "linear solver tolerance (overrides the config)")->check(CLI::Range(1e-15, 1e-4));
    };
    std::vector<std::pair<CLI::App *, std::vector<Stage>>> commands;
    for (Stage s : all_stages()) {
        auto *sub = app.add_subcommand(to_string(s), "run the " + to_string(s) + " stage");
        add_common(sub);
        commands.push_back({sub, {s}});
    }
    auto *all = app.add_subcommand("all", "run every stage in order");
    add_common(all);
    all->add_flag("!--no-plots", plots, "skip the SVG plots");
    commands.push_back({all, all_stages()});
    auto *validate = app.add_subcommand("validate-config", "parse and check a configuration");
    validate->add_option("config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (validate->parsed()) {
            std::cout << "valid configuration, hash " << cfg.hash << ", Lambda = " << cfg.lambda;
            if (!cfg.reaction.zero()) std::cout << ", max |d_r g| = " << cfg.reaction_lipschitz;
            std::cout << '\n';
            return kOk;
        }
        if (!output.empty()) cfg.output = output;
        if (workers > 0) cfg.workers = workers;
        if (tol > 0.0) cfg.solver_tol = tol;
        for (const auto &[sub, stages] : commands) {
            if (!sub->parsed()) continue;
            auto report = run_pipeline(cfg, {stages.begin(), stages.end()});
            if (sub == all && plots) emit_plots(report, (std::filesystem::path(cfg.output) / "plots").string());
            print_summary(report);
            return report.checks_pass() ? kOk : kCheck;
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const GeometryError &e) {
        std::cerr << "geometry error: " << e.what() << '\n';
        return kConfig;
    } catch (const HypothesisError &e) {
        std::cerr << "hypothesis violated: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception &e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kSolver;
    }
    return kOk;
}
