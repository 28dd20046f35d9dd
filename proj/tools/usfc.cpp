// usfc: simulate modulo captures, recover unfolded signals, sweep parameters.

#include "usf/errors.hpp"
#include "usf/experiment.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

enum Exit { ok = 0, argument = 2, recovery = 3, io = 4 };

struct Overrides {
    usf::KeyValues kv;
    std::optional<std::string> step; // --T, resolved against tau
    std::optional<std::string> config_file;
};

void bind(CLI::App* app, Overrides& o, const std::string& flag, const std::string& key,
          const std::string& help)
{
    app->add_option_function<std::string>(
        flag, [&o, key](const std::string& v) { o.kv[key] = v; }, help);
}

void add_recovery_options(CLI::App* app, Overrides& o)
{
    app->add_option_function<std::string>(
        "--config", [&o](const std::string& v) { o.config_file = v; },
        "key=value file (a metrics.txt works: its config.* echo is used)");
    bind(app, o, "--input", "input", "capture CSV (time,truth,modulo or time,modulo)");
    bind(app, o, "--P", "P", "bandwidth used for recovery (default: the signal's)");
    bind(app, o, "--signal-P", "signal_P", "bandwidth of the synthetic signal");
    bind(app, o, "--p-inflation", "p_inflation", "relative bandwidth inflation for captures");
    bind(app, o, "--M", "M", "number of folding spikes (default: counted or estimated)");
    app->add_option_function<std::string>(
           "--method", [&o](const std::string& v) { o.kv["method"] = v; }, "recovery method")
        ->check(CLI::IsMember({"fp", "usf", "both"}));
    app->add_option_function<std::string>(
           "--estimator", [&o](const std::string& v) { o.kv["estimator"] = v; },
           "spike estimator")
        ->check(CLI::IsMember({"prony", "pencil", "auto"}));
    bind(app, o, "--pencil-q", "pencil_q", "pencil parameter: integer, auto or search");
    app->add_option_function<std::string>(
           "--diff-mode", [&o](const std::string& v) { o.kv["diff_mode"] = v; },
           "finite-difference mode")
        ->check(CLI::IsMember({"circular", "literal"}));
    app->add_option_function<std::string>(
           "--toeplitz", [&o](const std::string& v) { o.kv["toeplitz"] = v; },
           "rows of the annihilator system")
        ->check(CLI::IsMember({"all_lags", "centered_block"}));
    bind(app, o, "--block-offset", "block_offset",
         "offset of the centered Toeplitz block (implies --toeplitz centered_block)");
    bind(app, o, "--beta-g", "beta_g", "baseline amplitude bound, a multiple of 2*lambda");
    app->add_option_function<std::string>(
           "--calibrate", [&o](const std::string& v) { o.kv["calibrate"] = v; },
           "offset calibration")
        ->check(CLI::IsMember({"mean", "none"}));
    bind(app, o, "--lambda-grid", "lambda_grid", "lo:hi:step grid for the lambda search");
    bind(app, o, "--optimize-lambda", "optimize_lambda", "run the lambda search (true/false)");
}

void add_source_options(CLI::App* app, Overrides& o, bool simulate)
{
    bind(app, o, "--tau", "tau", "period in seconds");
    bind(app, o, "--K", "K", "samples per period");
    app->add_option_function<std::string>(
        "--T", [&o](const std::string& v) { o.step = v; }, "sampling step (sets K = tau / T)");
    bind(app, o, "--amplitude", "amplitude", "peak of the synthetic signal");
    bind(app, o, "--seed", "seed", "random seed");
    bind(app, o, "--lambda", "lambda", "modulo threshold");
    bind(app, o, "--bits", "bits", "quantizer resolution (0 = none)");
    bind(app, o, "--delay-max", "delay_max", "maximum fold delay in samples");
    bind(app, o, "--jitter", "jitter", "relative fold amplitude jitter");
    bind(app, o, "--spurious-rate", "spurious_rate", "expected spurious jumps per period");
    bind(app, o, "--spurious-amp", "spurious_amp", "maximum spurious jump amplitude");
    if (simulate)
        bind(app, o, "--P", "signal_P", "bandwidth of the synthetic signal");
}

usf::ExperimentConfig resolve(Overrides& o)
{
    usf::KeyValues kv;
    if (o.config_file) {
        const auto file = usf::read_kv_file(*o.config_file);
        bool echoed = false;
        for (const auto& [k, v] : file)
            if (k.rfind("config.", 0) == 0) {
                kv[k.substr(7)] = v;
                echoed = true;
            }
        if (!echoed)
            kv = file;
    }
    if (o.kv.count("input") && !o.kv.count("source"))
        o.kv["source"] = "capture";
    if (o.kv.count("input") && kv.count("source") && kv["source"] == "synthetic") {
        for (const char* k : {"signal_P", "tau", "amplitude", "seed", "delay_max", "jitter",
                              "spurious_rate", "spurious_amp", "K"})
            kv.erase(k);
    }
    if (o.kv.count("block_offset") && !o.kv.count("toeplitz"))
        o.kv["toeplitz"] = "centered_block";
    for (const auto& [k, v] : o.kv)
        kv[k] = v;

    if (o.step) {
        double T = 0.0;
        std::istringstream(*o.step) >> T;
        const double tau = kv.count("tau") ? std::stod(kv["tau"]) : 1.0;
        if (!(T > 0.0))
            throw usf::ArgumentError("--T must be positive");
        const double K = tau / T;
        if (std::abs(K - std::round(K)) > 1e-9 * K)
            throw usf::ArgumentError("--T must divide tau into an integer number of samples");
        kv["K"] = std::to_string(static_cast<long long>(std::llround(K)));
    }
    return usf::ExperimentConfig::from_kv(kv);
}

std::vector<double> split_numbers(const std::string& s, char sep)
{
    std::vector<double> out;
    std::istringstream is(s);
    std::string cell;
    while (std::getline(is, cell, sep)) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != cell.size())
            throw usf::ArgumentError("--values: cannot parse '" + cell + "'");
        out.push_back(v);
    }
    return out;
}

std::vector<double> parse_values(const std::string& s)
{
    if (s.empty())
        return {};
    if (s.find(':') == std::string::npos)
        return split_numbers(s, ',');
    const auto r = split_numbers(s, ':');
    if (r.size() != 3 || !(r[2] > 0.0) || r[1] < r[0])
        throw usf::ArgumentError("--values: expected lo:hi:step with lo <= hi and step > 0");
    std::vector<double> out;
    const auto count = static_cast<std::size_t>(std::floor((r[1] - r[0]) / r[2] + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(r[0] + r[2] * static_cast<double>(i));
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Modulo sampling simulator and unfolding toolkit"};
    app.require_subcommand(1);

    Overrides sim_o, rec_o, sweep_o;
    std::string sim_dir, rec_dir, sweep_dir;

    auto* sim = app.add_subcommand("simulate", "write a synthetic modulo capture");
    add_source_options(sim, sim_o, true);
    sim->add_option("--output-dir", sim_dir, "directory receiving capture.csv")->required();

    auto* rec = app.add_subcommand("recover", "unfold a capture or synthetic configuration");
    add_source_options(rec, rec_o, false);
    add_recovery_options(rec, rec_o);
    rec->add_option("--output-dir", rec_dir, "directory receiving metrics and tables");

    auto* sw = app.add_subcommand("sweep", "run one recovery per value of a config field");
    add_source_options(sw, sweep_o, false);
    add_recovery_options(sw, sweep_o);
    std::string axis, values;
    sw->add_option("--axis", axis, "numeric config field to vary")->required();
    sw->add_option("--values", values, "comma-separated values or lo:hi:step");
    sw->add_option("--output-dir", sweep_dir, "root directory of the sweep")->required();

    auto* bnd = app.add_subcommand("bounds", "print sampling bounds");
    double b_tau = 0.0, b_omega = 0.0, b_T = 0.0;
    int b_P = 0;
    std::size_t b_M = 0;
    bnd->add_option("--tau", b_tau, "period in seconds")->required();
    bnd->add_option("--P", b_P, "bandwidth index")->required();
    bnd->add_option("--M", b_M, "number of folds")->required();
    bnd->add_option("--omega", b_omega, "maximum angular frequency (default 2 pi P / tau)");
    bnd->add_option("--T", b_T, "actual sampling step, for the oversampling ratio");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return Exit::argument;
    }

    try {
        if (*sim) {
            if (sim_o.kv.count("K") == 0 && !sim_o.step)
                throw usf::ArgumentError("simulate: give --K or --T");
            const auto cfg = resolve(sim_o);
            const auto cap = usf::simulate_capture(cfg);
            std::filesystem::create_directories(sim_dir);
            const auto path = std::filesystem::path(sim_dir) / "capture.csv";
            usf::write_capture(path, cap);
            std::cout << "capture=" << path.string() << "\nK=" << cap.size()
                      << "\nM=" << cap.metadata.at("M") << '\n';
        } else if (*rec) {
            auto cfg = resolve(rec_o);
            cfg.output_dir = rec_dir;
            std::cout << usf::format_kv(usf::run_experiment(cfg));
        } else if (*sw) {
            const auto cfg = resolve(sweep_o);
            const auto rows = usf::sweep(cfg, axis, parse_values(values), sweep_dir);
            std::size_t failed = 0;
            for (const auto& r : rows) {
                std::cout << axis << '=' << usf::format_double(r.value) << ' '
                          << (r.ok ? "ok" : "error: " + r.error);
                if (r.ok && r.metrics.count("MSE_FD"))
                    std::cout << " MSE_FD=" << r.metrics.at("MSE_FD");
                std::cout << '\n';
                failed += r.ok ? 0 : 1;
            }
            std::cout << "rows=" << rows.size() << " failed=" << failed << '\n';
        } else if (*bnd) {
            const auto b = usf::sampling_bounds(b_tau, b_P, b_M, b_omega);
            std::cout << "T_FD=" << usf::format_double(b.t_fd) << '\n'
                      << "T_US=" << usf::format_double(b.t_us) << '\n'
                      << "K_min=" << b.k_min << '\n';
            if (b_T > 0.0)
                std::cout << "T_FD_over_T=" << usf::format_double(b.t_fd / b_T) << '\n';
        }
    } catch (const usf::ArgumentError& e) {
        std::cerr << "argument error: " << e.what() << '\n';
        return Exit::argument;
    } catch (const usf::IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return Exit::io;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return Exit::io;
    } catch (const std::exception& e) {
        std::cerr << "recovery failed: " << e.what() << '\n';
        return Exit::recovery;
    }
    return Exit::ok;
}
