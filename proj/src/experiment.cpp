#include "usf/experiment.hpp"

#include "usf/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <numbers>
#include <sstream>
#include <system_error>
#include <thread>

namespace usf {

namespace fs = std::filesystem;

namespace {

const char* const metrics_name = "metrics.txt";
const char* const reconstruction_name = "reconstruction.csv";
const char* const spectrum_name = "spectrum.csv";

std::string format_int(long long v) { return std::to_string(v); }

template <class T>
T parse_integer(const std::string& key, const std::string& s)
{
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ArgumentError("config: '" + key + "' expects an integer, got '" + s + "'");
    return v;
}

double parse_real(const std::string& key, const std::string& s)
{
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && *first == '+')
        ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ArgumentError("config: '" + key + "' expects a number, got '" + s + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& s)
{
    if (s == "true" || s == "1")
        return true;
    if (s == "false" || s == "0")
        return false;
    throw ArgumentError("config: '" + key + "' expects true or false, got '" + s + "'");
}

LambdaGrid parse_grid(const std::string& key, const std::string& s)
{
    const auto a = s.find(':');
    const auto b = a == std::string::npos ? a : s.find(':', a + 1);
    if (b == std::string::npos)
        throw ArgumentError("config: '" + key + "' expects lo:hi:step, got '" + s + "'");
    LambdaGrid g{parse_real(key, s.substr(0, a)), parse_real(key, s.substr(a + 1, b - a - 1)),
                 parse_real(key, s.substr(b + 1))};
    g.points();
    return g;
}

const std::vector<std::string> synthetic_keys = {"signal_P",   "tau",          "amplitude",
                                                 "seed",       "delay_max",    "jitter",
                                                 "spurious_rate", "spurious_amp"};

std::string csv_cell(std::string s)
{
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

void remove_outputs(const fs::path& dir)
{
    std::error_code ec;
    for (const char* name : {metrics_name, reconstruction_name, spectrum_name})
        fs::remove(dir / name, ec);
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write '" + path.string() + "'");
    out << text;
    out.close();
    if (!out)
        throw IoError("write failed for '" + path.string() + "'");
}

Calibration calibration_for(const ExperimentConfig& cfg, const ExperimentData& data)
{
    if (cfg.calibration == CalibrationMode::mean && data.truth)
        return Calibration::to_mean(mean(data.truth->values));
    return Calibration::zero_mean();
}

double max_abs(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

// Jumps of a measured residue above 8x the median absolute difference.
std::size_t count_measured_spikes(std::span<const double> r, DiffMode mode)
{
    if (r.size() < 2)
        return 0;
    auto d = finite_difference(r, 1, mode);
    for (auto& v : d)
        v = std::abs(v);
    auto mid = d.begin() + static_cast<long>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    const double tol = std::max(8.0 * *mid, 1e-9 * std::max(1.0, max_abs(r)));
    return count_spikes(r, mode, tol);
}

void add_diagnostics(KeyValues& m, const std::string& prefix, const RecoveryReport& rep)
{
    for (const auto& [k, v] : rep.diagnostics)
        m[prefix + k] = format_double(v);
    m[prefix + "offset"] = format_double(rep.offset_applied);
}

} // namespace

std::string format_double(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_kv(const KeyValues& kv)
{
    std::string out;
    for (const auto& [k, v] : kv)
        out += k + "=" + v + "\n";
    return out;
}

KeyValues parse_kv(const std::string& text)
{
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        const auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos || line[b] == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError(lineno, "expected key=value");
        auto key = line.substr(b, eq - b);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
            key.pop_back();
        kv[key] = line.substr(eq + 1);
    }
    return kv;
}

KeyValues read_kv_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_kv(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.string() + ": expected key=value");
    }
}

const std::vector<std::string>& numeric_config_keys()
{
    static const std::vector<std::string> keys = {
        "K",     "P",      "M",         "bits",      "lambda",        "beta_g",
        "seed",  "tau",    "amplitude", "signal_P",  "delay_max",     "jitter",
        "spurious_rate",   "spurious_amp", "block_offset", "pencil_q", "p_inflation"};
    return keys;
}

KeyValues ExperimentConfig::to_kv() const
{
    KeyValues kv;
    if (synthetic) {
        kv["source"] = "synthetic";
        kv["signal_P"] = format_int(synthetic->bandwidth);
        kv["tau"] = format_double(synthetic->tau);
        kv["amplitude"] = format_double(synthetic->amplitude);
        kv["seed"] = std::to_string(synthetic->seed);
        kv["delay_max"] = format_int(synthetic->nonideality.delay_max_samples);
        kv["jitter"] = format_double(synthetic->nonideality.threshold_jitter);
        kv["spurious_rate"] = format_double(synthetic->nonideality.spurious_rate);
        kv["spurious_amp"] = format_double(synthetic->nonideality.spurious_amp_max);
        kv["K"] = std::to_string(K);
    } else {
        kv["source"] = "capture";
        kv["input"] = input.string();
    }
    kv["P"] = P < 0 ? "auto" : format_int(P);
    kv["p_inflation"] = format_double(p_inflation);
    kv["M"] = M ? std::to_string(*M) : "auto";
    kv["method"] = method == MethodChoice::fp ? "fp" : method == MethodChoice::usf ? "usf" : "both";
    kv["estimator"] = estimator ? to_string(*estimator) : "auto";
    switch (pencil.kind) {
    case PencilParam::Kind::automatic: kv["pencil_q"] = "auto"; break;
    case PencilParam::Kind::search: kv["pencil_q"] = "search"; break;
    case PencilParam::Kind::fixed: kv["pencil_q"] = std::to_string(pencil.value); break;
    }
    kv["diff_mode"] = to_string(mode);
    kv["toeplitz"] = toeplitz == ToeplitzRows::all_lags ? "all_lags" : "centered_block";
    kv["block_offset"] = format_int(block_offset);
    kv["bits"] = format_int(bits);
    kv["lambda"] = format_double(lambda);
    kv["beta_g"] = beta_g ? format_double(*beta_g) : "auto";
    kv["lambda_grid"] = lambda_grid ? format_double(lambda_grid->lo) + ":" +
                                          format_double(lambda_grid->hi) + ":" +
                                          format_double(lambda_grid->step)
                                    : "auto";
    kv["optimize_lambda"] = optimize_lambda ? "true" : "false";
    kv["calibrate"] = calibration == CalibrationMode::mean ? "mean" : "none";
    return kv;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValues& kv)
{
    ExperimentConfig cfg;
    std::string source;
    if (auto it = kv.find("source"); it != kv.end())
        source = it->second;
    else
        source = kv.count("input") ? "capture" : "synthetic";
    if (source == "synthetic")
        cfg.synthetic.emplace();
    else if (source != "capture")
        throw ArgumentError("config: source must be synthetic or capture, got '" + source + "'");

    for (const auto& [key, v] : kv) {
        const bool synth_key =
            std::find(synthetic_keys.begin(), synthetic_keys.end(), key) != synthetic_keys.end();
        if ((synth_key || key == "K") && !cfg.synthetic)
            throw ArgumentError("config: '" + key + "' applies to synthetic sources only");

        if (key == "source") {
        } else if (key == "input") {
            if (cfg.synthetic)
                throw ArgumentError("config: 'input' given for a synthetic source");
            cfg.input = v;
        } else if (key == "signal_P") {
            cfg.synthetic->bandwidth = parse_integer<int>(key, v);
        } else if (key == "tau") {
            cfg.synthetic->tau = parse_real(key, v);
        } else if (key == "amplitude") {
            cfg.synthetic->amplitude = parse_real(key, v);
        } else if (key == "seed") {
            cfg.synthetic->seed = parse_integer<std::uint64_t>(key, v);
        } else if (key == "delay_max") {
            cfg.synthetic->nonideality.delay_max_samples = parse_integer<int>(key, v);
        } else if (key == "jitter") {
            cfg.synthetic->nonideality.threshold_jitter = parse_real(key, v);
        } else if (key == "spurious_rate") {
            cfg.synthetic->nonideality.spurious_rate = parse_real(key, v);
        } else if (key == "spurious_amp") {
            cfg.synthetic->nonideality.spurious_amp_max = parse_real(key, v);
        } else if (key == "K") {
            cfg.K = parse_integer<std::size_t>(key, v);
        } else if (key == "P") {
            cfg.P = v == "auto" ? -1 : parse_integer<int>(key, v);
        } else if (key == "p_inflation") {
            cfg.p_inflation = parse_real(key, v);
        } else if (key == "M") {
            if (v == "auto")
                cfg.M.reset();
            else
                cfg.M = parse_integer<std::size_t>(key, v);
        } else if (key == "method") {
            if (v == "fp")
                cfg.method = MethodChoice::fp;
            else if (v == "usf")
                cfg.method = MethodChoice::usf;
            else if (v == "both")
                cfg.method = MethodChoice::both;
            else
                throw ArgumentError("config: method must be fp, usf or both");
        } else if (key == "estimator") {
            if (v == "auto")
                cfg.estimator.reset();
            else if (v == "prony")
                cfg.estimator = Estimator::prony;
            else if (v == "pencil")
                cfg.estimator = Estimator::pencil;
            else
                throw ArgumentError("config: estimator must be prony, pencil or auto");
        } else if (key == "pencil_q") {
            if (v == "auto")
                cfg.pencil = PencilParam::automatic();
            else if (v == "search")
                cfg.pencil = PencilParam::search();
            else
                cfg.pencil = PencilParam::fixed(parse_integer<std::size_t>(key, v));
        } else if (key == "diff_mode") {
            if (v == "circular")
                cfg.mode = DiffMode::circular;
            else if (v == "literal")
                cfg.mode = DiffMode::literal;
            else
                throw ArgumentError("config: diff_mode must be circular or literal");
        } else if (key == "toeplitz") {
            if (v == "all_lags")
                cfg.toeplitz = ToeplitzRows::all_lags;
            else if (v == "centered_block")
                cfg.toeplitz = ToeplitzRows::centered_block;
            else
                throw ArgumentError("config: toeplitz must be all_lags or centered_block");
        } else if (key == "block_offset") {
            cfg.block_offset = parse_integer<long>(key, v);
        } else if (key == "bits") {
            cfg.bits = parse_integer<int>(key, v);
        } else if (key == "lambda") {
            cfg.lambda = parse_real(key, v);
        } else if (key == "beta_g") {
            if (v == "auto")
                cfg.beta_g.reset();
            else
                cfg.beta_g = parse_real(key, v);
        } else if (key == "lambda_grid") {
            if (v == "auto")
                cfg.lambda_grid.reset();
            else
                cfg.lambda_grid = parse_grid(key, v);
        } else if (key == "optimize_lambda") {
            cfg.optimize_lambda = parse_bool(key, v);
        } else if (key == "calibrate") {
            if (v == "mean")
                cfg.calibration = CalibrationMode::mean;
            else if (v == "none")
                cfg.calibration = CalibrationMode::none;
            else
                throw ArgumentError("config: calibrate must be mean or none");
        } else {
            throw ArgumentError("config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

void ExperimentConfig::validate() const
{
    if (synthetic) {
        const auto& s = *synthetic;
        if (s.bandwidth < 0 || !(s.tau > 0.0) || !(s.amplitude > 0.0))
            throw ArgumentError("config: synthetic source needs signal_P >= 0, tau > 0, "
                                "amplitude > 0");
        const auto& n = s.nonideality;
        if (n.delay_max_samples < 0 || n.threshold_jitter < 0.0 || n.threshold_jitter >= 1.0 ||
            n.spurious_rate < 0.0 || n.spurious_amp_max < 0.0)
            throw ArgumentError("config: invalid non-ideality parameters");
        if (K < 2)
            throw ArgumentError("config: synthetic source needs K >= 2");
    } else if (input.empty()) {
        throw ArgumentError("config: a capture source needs an input path");
    }
    if (!(lambda > 0.0))
        throw ArgumentError("config: lambda must be positive");
    if (bits < 0 || bits > 32)
        throw ArgumentError("config: bits must lie in [0, 32]");
    if (!(p_inflation >= 0.0))
        throw ArgumentError("config: p_inflation must be nonnegative");
    if (beta_g && !(*beta_g > 0.0))
        throw ArgumentError("config: beta_g must be positive");
    if (pencil.kind == PencilParam::Kind::fixed && pencil.value == 0)
        throw ArgumentError("config: pencil_q must be positive");
    if (lambda_grid)
        lambda_grid->points();
}

Estimator ExperimentConfig::effective_estimator() const
{
    if (estimator)
        return *estimator;
    return !synthetic || bits > 0 ? Estimator::pencil : Estimator::prony;
}

SyntheticTrial simulate_trial(const SyntheticSource& src, std::size_t K, double lambda,
                              DiffMode mode)
{
    auto g = synthesize_random(src.bandwidth, src.tau, src.amplitude, src.seed);
    const auto grid = UniformGrid::over_period(src.tau, K);
    auto gamma = sample(g, grid);
    auto ideal = fold_ideal(gamma, lambda);
    SampleVector y = std::move(ideal.folded);
    SampleVector r = std::move(ideal.residue);
    if (!src.nonideality.is_ideal()) {
        const auto spec = perturb_folds(ResidueSpec::from_samples(r), src.nonideality, grid.step,
                                        src.seed ^ 0x5DEECE66DULL);
        y = apply_residue(gamma, spec);
        std::vector<double> rv(K);
        for (std::size_t k = 0; k < K; ++k)
            rv[k] = gamma[k] - y[k];
        r = SampleVector(std::move(rv), grid);
    }
    const std::size_t folds = count_spikes(r.values, mode);
    return {std::move(g), std::move(gamma), std::move(y), std::move(r), folds};
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg)
{
    cfg.validate();
    ExperimentData d;
    if (cfg.synthetic) {
        auto trial = simulate_trial(*cfg.synthetic, cfg.K, cfg.lambda, cfg.mode);
        d.folded = std::move(trial.folded);
        d.truth = std::move(trial.gamma);
        d.exact_folds = trial.folds;
        d.tau = cfg.synthetic->tau;
        d.signal_bandwidth = cfg.synthetic->bandwidth;
    } else {
        const auto cap = load_capture(cfg.input);
        d.folded = cap.modulo_samples();
        d.truth = cap.truth_samples();
        d.tau = cap.tau;
        if (auto it = cap.metadata.find("P"); it != cap.metadata.end())
            d.signal_bandwidth = parse_integer<int>("capture metadata P", it->second);
        if (std::abs(cap.step * static_cast<double>(cap.size()) - d.tau) > 1e-9 * d.tau)
            throw ArgumentError("capture: K*T = " + format_double(cap.step * cap.size()) +
                                " does not match tau = " + format_double(d.tau));
    }
    if (cfg.bits > 0) {
        auto q = quantize(d.folded, cfg.bits, cfg.lambda);
        d.folded = std::move(q.samples);
        d.saturated = q.saturated;
        d.quant_step = q.step;
    }
    return d;
}

CaptureFile simulate_capture(const ExperimentConfig& cfg)
{
    if (!cfg.synthetic)
        throw ArgumentError("simulate: needs a synthetic source");
    const auto d = load_experiment_data(cfg);
    CaptureFile cap;
    cap.step = d.folded.grid.step;
    cap.tau = d.tau;
    cap.time.resize(d.folded.size());
    for (std::size_t k = 0; k < cap.time.size(); ++k)
        cap.time[k] = d.folded.grid.time(k);
    cap.modulo = d.folded.values;
    cap.truth = d.truth->values;
    cap.metadata["P"] = format_int(cfg.synthetic->bandwidth);
    cap.metadata["lambda"] = format_double(cfg.lambda);
    cap.metadata["seed"] = std::to_string(cfg.synthetic->seed);
    cap.metadata["M"] = std::to_string(*d.exact_folds);
    if (cfg.bits > 0)
        cap.metadata["bits"] = format_int(cfg.bits);
    return cap;
}

KeyValues run_experiment(const ExperimentConfig& cfg)
{
    try {
        const auto data = load_experiment_data(cfg);
        const auto& y = data.folded;
        const std::size_t K = y.size();
        const double T = y.grid.step;
        const bool run_fp = cfg.method != MethodChoice::usf;
        const bool run_usf = cfg.method != MethodChoice::fp;

        KeyValues m;
        for (const auto& [k, v] : cfg.to_kv())
            m["config." + k] = v;

        int p_base = cfg.P >= 0 ? cfg.P : data.signal_bandwidth;
        if (p_base < 0)
            throw ArgumentError("the capture carries no bandwidth; pass P explicitly");
        int P = p_base;
        if (!cfg.synthetic)
            P = static_cast<int>(std::ceil(p_base * (1.0 + cfg.p_inflation) - 1e-9));
        m["P_base"] = format_int(p_base);
        m["P"] = format_int(P);
        m["P_inflation_applied"] = format_double(cfg.synthetic ? 0.0 : cfg.p_inflation);

        std::size_t M = 0;
        std::string m_source;
        if (cfg.M) {
            M = *cfg.M;
            m_source = "given";
        } else if (data.exact_folds) {
            M = *data.exact_folds;
            m_source = "exact";
        } else if (data.truth) {
            std::vector<double> r(K);
            for (std::size_t k = 0; k < K; ++k)
                r[k] = (*data.truth)[k] - y[k];
            M = count_measured_spikes(r, cfg.mode);
            m_source = "truth";
        } else {
            const auto ybar = finite_difference(y.values, 1, cfg.mode);
            const auto z = extract_out_of_band(forward_dft(ybar, cfg.mode), P);
            M = estimate_spike_count(z, z.size() / 2);
            m_source = "estimated";
        }
        m["M"] = std::to_string(M);
        m["M_source"] = m_source;

        const double omega = 2.0 * std::numbers::pi * P / data.tau;
        const auto bounds = sampling_bounds(data.tau, P, M);
        m["K"] = std::to_string(K);
        m["T"] = format_double(T);
        m["tau"] = format_double(data.tau);
        m["T_FD"] = format_double(bounds.t_fd);
        m["T_US"] = format_double(bounds.t_us);
        m["K_min"] = std::to_string(bounds.k_min);
        m["T_FD_over_T"] = format_double(bounds.t_fd / T);
        m["T_Omega_e"] = format_double(T * omega * std::numbers::e);
        if (cfg.bits > 0) {
            m["quant_step"] = format_double(data.quant_step);
            m["quant_saturated"] = std::to_string(data.saturated);
        }
        const double dr_y = dynamic_range(y);
        m["DR_y"] = format_double(dr_y);

        const Calibration cal = calibration_for(cfg, data);
        std::optional<RecoveryReport> fd, us, usopt;

        if (run_fp) {
            FourierPronyOptions o;
            o.mode = cfg.mode;
            o.estimator = cfg.effective_estimator();
            o.pencil = cfg.pencil;
            o.toeplitz_rows = cfg.toeplitz;
            o.block_offset = cfg.block_offset;
            o.calibration = cal;
            m["estimator"] = to_string(o.estimator);
            fd = fourier_prony_recover(y, P, M, o);
            add_diagnostics(m, "fd.", *fd);
            if (data.truth)
                m["MSE_FD"] = format_double(mse(fd->gamma_hat.values, data.truth->values));
        }

        if (run_usf) {
            std::optional<double> beta = cfg.beta_g;
            std::string beta_source = "given";
            if (!beta && data.truth) {
                beta = beta_on_grid(max_abs(data.truth->values), cfg.lambda);
                beta_source = "truth";
            } else if (!beta && fd) {
                beta = beta_on_grid(max_abs(fd->gamma_hat.values), cfg.lambda);
                beta_source = "fd_estimate";
            }
            try {
                if (!beta)
                    throw ArgumentError("beta_g is needed for the baseline without ground truth");
                m["usf.beta_g"] = format_double(*beta);
                m["usf.beta_g_source"] = beta_source;
                UsfOptions o;
                o.calibration = cal;
                us = usf_recover(y, cfg.lambda, omega, *beta, o);
                add_diagnostics(m, "usf.", *us);
                if (data.truth)
                    m["MSE_US"] = format_double(mse(us->gamma_hat.values, data.truth->values));
            } catch (const Error& e) {
                if (!run_fp)
                    throw;
                m["usf.error"] = e.what();
            }

            if (cfg.optimize_lambda && data.truth) {
                try {
                    const auto grid = cfg.lambda_grid.value_or(LambdaGrid::around(cfg.lambda));
                    auto search = usf::optimize_lambda(y, data.truth->values, grid, omega);
                    m["lambda_opt"] = format_double(search.lambda_opt);
                    m["MSE_USopt"] = format_double(search.mse);
                    m["usf_opt.grid_failures"] = std::to_string(search.failures);
                    usopt = std::move(search.report);
                } catch (const Error& e) {
                    m["usf_opt.error"] = e.what();
                }
            }
        }

        double dr_gamma = 0.0;
        if (data.truth) {
            dr_gamma = dynamic_range(*data.truth);
            m["DR_gamma"] = format_double(dr_gamma);
        } else {
            const auto* best = fd ? &*fd : us ? &*us : nullptr;
            if (best) {
                dr_gamma = dynamic_range(best->gamma_hat);
                m["DR_gamma_hat"] = format_double(dr_gamma);
            }
        }
        if (dr_y > 0.0 && dr_gamma > 0.0)
            m["DR_ratio"] = format_double(dr_gamma / dr_y);
        m["status"] = "ok";

        if (cfg.output_dir.empty())
            return m;

        std::ostringstream rec;
        rec << "k,t,y,gamma_fd,gamma_us,gamma_usopt,gamma,residue_fd,residue_us\n";
        auto cell = [](const std::optional<RecoveryReport>& r, bool residue, std::size_t k) {
            if (!r)
                return std::string();
            return format_double(residue ? r->residue_hat[k] : r->gamma_hat[k]);
        };
        for (std::size_t k = 0; k < K; ++k) {
            rec << k << ',' << format_double(y.grid.time(k)) << ',' << format_double(y[k]) << ','
                << cell(fd, false, k) << ',' << cell(us, false, k) << ',' << cell(usopt, false, k)
                << ',' << (data.truth ? format_double((*data.truth)[k]) : std::string()) << ','
                << cell(fd, true, k) << ',' << cell(us, true, k) << '\n';
        }

        std::vector<cplx> ybar_hat, rhat;
        if (fd) {
            ybar_hat = fd->spectrum;
            rhat = fd->residue_spectrum;
        } else {
            ybar_hat = forward_dft(finite_difference(y.values, 1, cfg.mode), cfg.mode).bins;
        }
        std::ostringstream spec;
        spec << "n,abs_ybar,abs_rhat\n";
        for (std::size_t n = 0; n < ybar_hat.size(); ++n)
            spec << n << ',' << format_double(std::abs(ybar_hat[n])) << ','
                 << (rhat.empty() ? std::string() : format_double(std::abs(rhat[n]))) << '\n';

        std::error_code ec;
        fs::create_directories(cfg.output_dir, ec);
        if (ec)
            throw IoError("cannot create '" + cfg.output_dir.string() + "': " + ec.message());
        write_text(cfg.output_dir / reconstruction_name, rec.str());
        write_text(cfg.output_dir / spectrum_name, spec.str());
        write_text(cfg.output_dir / metrics_name, format_kv(m));
        return m;
    } catch (...) {
        if (!cfg.output_dir.empty())
            remove_outputs(cfg.output_dir);
        throw;
    }
}

std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            std::vector<double> values, const fs::path& out_root)
{
    const auto& keys = numeric_config_keys();
    if (std::find(keys.begin(), keys.end(), axis) == keys.end())
        throw ArgumentError("sweep: '" + axis + "' is not a numeric config field");
    std::sort(values.begin(), values.end());
    const bool integral = axis != "lambda" && axis != "beta_g" && axis != "tau" &&
                          axis != "amplitude" && axis != "jitter" && axis != "spurious_rate" &&
                          axis != "spurious_amp" && axis != "p_inflation";

    std::vector<ExperimentConfig> cfgs;
    std::vector<std::string> labels;
    auto base_kv = base.to_kv();
    for (double v : values) {
        std::string s;
        if (integral) {
            if (v != std::floor(v))
                throw ArgumentError("sweep: axis '" + axis + "' takes integers");
            s = format_int(static_cast<long long>(v));
        } else {
            s = format_double(v);
        }
        auto kv = base_kv;
        kv[axis] = s;
        auto cfg = ExperimentConfig::from_kv(kv);
        cfg.output_dir = out_root.empty() ? fs::path() : out_root / (axis + "=" + s);
        cfgs.push_back(std::move(cfg));
        labels.push_back(s);
    }

    std::vector<SweepRow> rows(values.size());
    auto run_one = [](const ExperimentConfig& cfg) {
        SweepRow row;
        try {
            row.metrics = run_experiment(cfg);
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        return row;
    };
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 0; start < cfgs.size(); start += workers) {
        std::vector<std::future<SweepRow>> batch;
        const std::size_t stop = std::min(cfgs.size(), start + workers);
        for (std::size_t i = start; i < stop; ++i)
            batch.push_back(std::async(std::launch::async, run_one, std::cref(cfgs[i])));
        for (std::size_t i = start; i < stop; ++i) {
            rows[i] = batch[i - start].get();
            rows[i].value = values[i];
        }
    }

    if (!out_root.empty()) {
        static const std::vector<std::string> columns = {
            "K",      "T",      "P",         "M",          "T_FD",  "T_US",
            "DR_ratio", "MSE_FD", "MSE_US", "MSE_USopt", "lambda_opt"};
        std::vector<std::string> cols;
        for (const auto& c : columns)
            if (c != axis)
                cols.push_back(c);
        std::ostringstream os;
        os << axis << ",status";
        for (const auto& c : cols)
            os << ',' << c;
        os << ",error\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            os << labels[i] << ',' << (rows[i].ok ? "ok" : "error");
            for (const auto& c : cols) {
                os << ',';
                if (auto it = rows[i].metrics.find(c); it != rows[i].metrics.end())
                    os << it->second;
            }
            os << ',' << csv_cell(rows[i].error) << '\n';
        }
        std::error_code ec;
        fs::create_directories(out_root, ec);
        if (ec)
            throw IoError("cannot create '" + out_root.string() + "': " + ec.message());
        write_text(out_root / "sweep.csv", os.str());
    }
    return rows;
}

} // namespace usf
