// Command-line front end for the tracking simulator: single runs, parameter
// sweeps, and scheme benchmarks, with CSV/JSON/SVG outputs.

#include "isac/runner.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

using namespace isac;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string preset = "desk";
    std::string out_dir = ".";
    std::string format = "csv";
    std::string measurement_mode;
    uint64_t seed = 1;
    bool plot = false;
    bool strict = false;
};

ScenarioConfig load_scenario(const CommonOpts& opts) {
    ScenarioConfig cfg =
        opts.config_path.empty() ? preset_by_name(opts.preset) : load_config_file(opts.config_path);
    if (!opts.measurement_mode.empty()) {
        if (opts.measurement_mode == "full")
            cfg.measurement_mode = MeasurementMode::full_signal;
        else if (opts.measurement_mode == "statistical")
            cfg.measurement_mode = MeasurementMode::statistical;
        else
            throw std::invalid_argument("measurement mode must be full|statistical");
    }
    validate_or_throw(cfg);
    return cfg;
}

std::string out_path(const CommonOpts& opts, const std::string& name) {
    std::filesystem::create_directories(opts.out_dir);
    return (std::filesystem::path(opts.out_dir) / name).string();
}

int flagged_count(const TrackingLog& log) {
    int n = 0;
    for (const auto& r : log.records)
        if (r.infeasible_fallback) ++n;
    return n;
}

void plot_log(const TrackingLog& log, const CommonOpts& opts) {
    std::vector<double> t, rate, crlb;
    for (const auto& r : log.records) {
        t.push_back(r.time);
        rate.push_back(r.sum_rate);
        crlb.push_back(r.crlb_trace);
    }
    export_svg_lines(out_path(opts, "rate.svg"), "sum rate vs time", {"rate"}, {t}, {rate});
    export_svg_lines(out_path(opts, "crlb.svg"), "achieved PC-CRLB trace vs time", {"tr(C)"},
                     {t}, {crlb});
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cooperative sensing-assisted predictive beam tracking simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string scheme_name_opt = "sdr";
    int num_seeds = 1;
    std::string sweep_axis;
    std::vector<double> sweep_values;
    std::vector<std::string> scheme_list;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "path to a JSON scenario config");
        cmd->add_option("--preset", opts.preset, "preset name: paper|desk")
            ->check(CLI::IsMember({"paper", "desk"}));
        cmd->add_option("--seed", opts.seed, "base RNG seed");
        cmd->add_option("--seeds", num_seeds, "number of seeds (seed, seed+1, ...)");
        cmd->add_option("--out", opts.out_dir, "output directory");
        cmd->add_option("--format", opts.format, "table format: csv|json")
            ->check(CLI::IsMember({"csv", "json"}));
        cmd->add_option("--measurement-mode", opts.measurement_mode,
                        "override measurement mode: full|statistical");
        cmd->add_flag("--plot", opts.plot, "emit static SVG plots");
        cmd->add_flag("--strict", opts.strict,
                      "exit with code 3 if any slot hit an infeasible fallback");
    };

    CLI::App* run = app.add_subcommand("run", "run one tracking simulation");
    add_common(run);
    run->add_option("--scheme", scheme_name_opt, "sdr|penalty|nonopt-ekf|feedback-ekf")
        ->check(CLI::IsMember({"sdr", "penalty", "nonopt-ekf", "feedback-ekf"}));

    CLI::App* sweep = app.add_subcommand("sweep", "run an experiment sweep");
    add_common(sweep);
    sweep->add_option("--sweep", sweep_axis, "axis: power|eta|num_bs|antennas|velocity")
        ->required();
    sweep->add_option("--values", sweep_values, "axis values")->required();
    sweep->add_option("--scheme", scheme_list, "schemes to run (repeatable)");

    CLI::App* bench = app.add_subcommand("bench", "benchmark schemes (rate/error CDFs)");
    add_common(bench);
    bench->add_option("--scheme", scheme_list, "schemes to compare (repeatable)");

    CLI11_PARSE(app, argc, argv);

    try {
        const ScenarioConfig cfg = load_scenario(opts);

        if (run->parsed()) {
            const TrackingLog log = run_tracking(cfg, scheme_from_name(scheme_name_opt), opts.seed);
            if (opts.format == "json")
                export_json(log, out_path(opts, "tracking_log.json"));
            else
                export_csv(log, cfg, out_path(opts, "tracking_log.csv"));
            if (opts.plot) plot_log(log, opts);
            std::cout << "scheme " << log.scheme << ", " << log.records.size()
                      << " slots, position RMSE " << log.position_rmse() << " m, max error "
                      << log.max_position_error() << " m, infeasible fallbacks "
                      << flagged_count(log) << "\n";
            if (opts.strict && flagged_count(log) > 0) return 3;
            return 0;
        }

        std::vector<SchemeId> schemes;
        if (scheme_list.empty())
            schemes = {SchemeId::sdr, SchemeId::penalty, SchemeId::nonopt_ekf,
                       SchemeId::feedback_ekf};
        else
            for (const auto& s : scheme_list) schemes.push_back(scheme_from_name(s));
        std::vector<uint64_t> seeds;
        for (int i = 0; i < num_seeds; ++i) seeds.push_back(opts.seed + i);

        if (sweep->parsed()) {
            const SweepTable table =
                run_sweep(cfg, sweep_axis_from_name(sweep_axis), sweep_values, schemes, seeds);
            if (opts.format == "json")
                export_json(table, out_path(opts, "sweep.json"));
            else
                export_csv(table, out_path(opts, "sweep.csv"));
            if (opts.plot) {
                std::vector<std::string> names;
                std::vector<std::vector<double>> xs, ys;
                for (const SchemeId s : schemes) {
                    names.push_back(scheme_name(s));
                    std::vector<double> x, y;
                    for (double v : sweep_values) {
                        x.push_back(v);
                        y.push_back(table.mean(v, scheme_name(s), &SweepCell::peak_rate));
                    }
                    xs.push_back(x);
                    ys.push_back(y);
                }
                export_svg_lines(out_path(opts, "sweep.svg"),
                                 "peak rate vs " + sweep_axis, names, xs, ys);
            }
            int infeasible_cells = 0;
            for (const auto& c : table.cells)
                if (c.flagged_tts > 0) ++infeasible_cells;
            std::cout << "sweep over " << sweep_axis << ": " << table.cells.size()
                      << " cells written\n";
            if (opts.strict && infeasible_cells > 0) return 3;
            return 0;
        }

        if (bench->parsed()) {
            const CdfTable table = compare_schemes(cfg, schemes, seeds);
            if (opts.format == "json")
                export_json(table, out_path(opts, "cdf.json"));
            else
                export_csv(table, out_path(opts, "cdf.csv"));
            if (opts.plot) {
                std::vector<std::vector<double>> xs, ys;
                for (size_t s = 0; s < table.schemes.size(); ++s) {
                    xs.push_back(table.rate_q[s]);
                    ys.push_back(table.quantiles);
                }
                export_svg_lines(out_path(opts, "cdf_rate.svg"), "rate CDF", table.schemes, xs,
                                 ys);
            }
            std::cout << "benchmarked " << table.schemes.size() << " schemes over "
                      << seeds.size() << " seed(s)\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
