#include "usf/recovery.hpp"

#include "usf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

namespace usf {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

template <class F>
auto run_step(int step, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const RecoveryError&) {
        throw;
    } catch (const Error& e) {
        throw RecoveryError(step, e.what());
    }
}

double max_abs(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

// Fill gamma_hat / residue_hat / offset from y and an (uncalibrated) residue.
void finish(RecoveryReport& rep, const SampleVector& y, std::vector<double> residue,
            const Calibration& cal)
{
    const std::size_t K = y.size();
    std::vector<double> raw(K);
    for (std::size_t k = 0; k < K; ++k)
        raw[k] = y[k] + residue[k];
    const double target = cal.reference_mean.value_or(0.0);
    rep.offset_applied = target - mean(raw);

    std::vector<double> g(K);
    for (std::size_t k = 0; k < K; ++k)
        g[k] = y[k] + residue[k] + rep.offset_applied;
    rep.gamma_hat = SampleVector(std::move(g), y.grid);
    rep.residue_hat = SampleVector(std::move(residue), y.grid);
}

struct FitResult {
    ExponentialModel model;
    AmplitudeFit fit;
    std::size_t merged = 0;
    std::size_t moves = 0;
    bool near_unit_circle = true;
    double max_modulus_deviation = 0.0;
};

// Roots must stay within this distance of the unit circle.
constexpr double root_modulus_tolerance = 0.2;

FitResult fit_roots(const OutOfBand& z, std::vector<cplx> roots, double step, bool snap)
{
    double deviation = 0.0;
    for (const auto& root : roots)
        deviation = std::max(deviation, std::abs(std::abs(root) - 1.0));
    // Snapping keeps only the angle, so off-circle roots are tolerated there.
    if (!snap && deviation > root_modulus_tolerance)
        throw NumericalError("estimated root modulus deviates by " + std::to_string(deviation) +
                             " from the unit circle");
    FitResult r;
    r.max_modulus_deviation = deviation;
    r.model = instants_from_roots(std::move(roots), step, z.length);
    r.near_unit_circle = r.model.roots_near_unit_circle();
    if (!snap) {
        r.fit = amplitudes_ls(z, r.model.xi);
        return r;
    }

    // Instants live on the sampling grid: round, merge coincident ones, then
    // refine the support locally against the amplitude-fit residual.
    std::vector<std::size_t> bins;
    for (double t : r.model.t)
        bins.push_back(static_cast<std::size_t>(std::llround(t / step)) % z.length);
    std::sort(bins.begin(), bins.end());
    const auto last = std::unique(bins.begin(), bins.end());
    r.merged = static_cast<std::size_t>(std::distance(last, bins.end()));
    bins.erase(last, bins.end());

    auto refined = refine_support(z, std::move(bins));
    r.moves = refined.moves;
    r.model = instants_from_roots(grid_roots(refined.bins, z.length), step, z.length);
    r.fit = std::move(refined.fit);
    return r;
}

} // namespace

const char* to_string(Method m) noexcept
{
    switch (m) {
    case Method::fourier_prony: return "fourier_prony";
    case Method::usf: return "usf";
    case Method::usf_opt: return "usf_opt";
    }
    return "?";
}

const char* to_string(Estimator e) noexcept
{
    return e == Estimator::prony ? "prony" : "pencil";
}

const char* to_string(DiffMode m) noexcept
{
    return m == DiffMode::circular ? "circular" : "literal";
}

double mean(std::span<const double> x)
{
    if (x.empty())
        throw ArgumentError("mean: empty input");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double mse(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw ArgumentError("mse: length mismatch");
    if (x.empty())
        throw ArgumentError("mse: empty input");
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = x[k] - y[k];
        acc += d * d;
    }
    return acc / static_cast<double>(x.size());
}

SamplingBounds sampling_bounds(double tau, int bandwidth, std::size_t folds, double omega)
{
    if (!(tau > 0.0) || bandwidth < 0)
        throw ArgumentError("sampling_bounds: need tau > 0 and P >= 0");
    if (!(omega > 0.0))
        omega = two_pi * static_cast<double>(bandwidth) / tau;

    SamplingBounds b{};
    const double M = static_cast<double>(folds);
    b.t_fd = tau / (2.0 * (static_cast<double>(bandwidth) + M + 1.0));
    b.t_us = omega > 0.0 ? 1.0 / (2.0 * omega * std::numbers::e)
                         : std::numeric_limits<double>::infinity();
    double harmonics = omega * tau / two_pi;
    if (std::abs(harmonics - std::round(harmonics)) < 1e-9)
        harmonics = std::round(harmonics);
    b.k_min = 2 * (static_cast<std::size_t>(std::ceil(harmonics)) + folds + 1);
    return b;
}

std::vector<double> anti_difference(std::span<const double> rbar)
{
    std::vector<double> r(rbar.size() + 1, 0.0);
    for (std::size_t k = 0; k < rbar.size(); ++k)
        r[k + 1] = r[k] + rbar[k];
    return r;
}

RecoveryReport fourier_prony_recover(const SampleVector& y, int bandwidth, std::size_t folds,
                                     const FourierPronyOptions& opts)
{
    const std::size_t K = y.size();
    if (bandwidth < 0)
        throw ArgumentError("fourier_prony_recover: P must be nonnegative");
    const std::size_t needed = 2 * (static_cast<std::size_t>(bandwidth) + folds + 1);
    if (K < needed)
        throw UndersampledError("fourier_prony_recover: K = " + std::to_string(K) +
                                " is below 2(P+M+1) = " + std::to_string(needed));

    RecoveryReport rep;
    rep.method = Method::fourier_prony;
    rep.diagnostics["P"] = bandwidth;
    rep.diagnostics["M"] = static_cast<double>(folds);
    const double T = y.grid.step;

    // 1) first difference
    const auto ybar = run_step(1, [&] { return finite_difference(y.values, 1, opts.mode); });
    // 2) DFT
    const auto spectrum = run_step(2, [&] { return forward_dft(ybar, opts.mode); });
    rep.spectrum = spectrum.bins;
    const std::size_t L = spectrum.length();
    rep.residue_spectrum.assign(L, cplx{});

    if (folds == 0) {
        finish(rep, y, std::vector<double>(K, 0.0), opts.calibration);
        if (K >= 2 * static_cast<std::size_t>(bandwidth) + 1)
            rep.interpolant = fit_bandlimited(rep.gamma_hat, bandwidth);
        return rep;
    }

    // 3) out-of-band samples (equal to minus the residue spectrum there)
    const auto z = run_step(3, [&] { return extract_out_of_band(spectrum, bandwidth); });

    // 4) fold estimation
    const FitResult est = run_step(4, [&] {
        if (opts.estimator == Estimator::prony) {
            Eigen::MatrixXcd tm;
            if (opts.toeplitz_rows == ToeplitzRows::centered_block) {
                const std::size_t start = toeplitz_block_start(z, folds, opts.block_offset);
                tm = build_toeplitz(std::span(z.value).subspan(start, 2 * folds), folds);
                rep.diagnostics["block_start_bin"] = static_cast<double>(z.index[start]);
            } else {
                tm = build_toeplitz_all_lags(z.value, folds);
            }
            const auto ann = annihilator(tm);
            rep.diagnostics["sigma_ratio"] = ann.sigma_ratio;
            rep.diagnostics["normalization_fallback"] = ann.normalization_fallback ? 1.0 : 0.0;
            return fit_roots(z, polynomial_roots(ann.coeffs), T, opts.snap_to_grid);
        }

        const std::size_t Lz = z.size();
        if (opts.pencil.kind != PencilParam::Kind::search) {
            const std::size_t q = opts.pencil.kind == PencilParam::Kind::fixed
                                      ? opts.pencil.value
                                      : auto_pencil_parameter(Lz, folds);
            rep.diagnostics["pencil_Q"] = static_cast<double>(q);
            return fit_roots(z, matrix_pencil(z.value, folds, q), T, opts.snap_to_grid);
        }

        // Grid search over Q, keeping the smallest forward-model residual.
        auto_pencil_parameter(Lz, folds);
        std::optional<FitResult> best;
        std::size_t best_q = 0;
        std::string last_error;
        for (std::size_t q = folds; q + folds <= Lz; ++q) {
            try {
                auto cand = fit_roots(z, matrix_pencil(z.value, folds, q), T, opts.snap_to_grid);
                if (!best || cand.fit.residual < best->fit.residual) {
                    best = std::move(cand);
                    best_q = q;
                }
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        if (!best)
            throw NumericalError("pencil search: no admissible pencil parameter (" + last_error +
                                 ")");
        rep.diagnostics["pencil_Q"] = static_cast<double>(best_q);
        return std::move(*best);
    });

    rep.model = est.model;
    rep.diagnostics["fit_residual"] = est.fit.residual;
    rep.diagnostics["instants_merged"] = static_cast<double>(est.merged);
    rep.diagnostics["support_moves"] = static_cast<double>(est.moves);
    rep.diagnostics["roots_off_unit_circle"] = est.near_unit_circle ? 0.0 : 1.0;
    rep.diagnostics["max_root_modulus_deviation"] = est.max_modulus_deviation;
    // z = -(residue spectrum), so residue jumps are the negated fit.
    for (std::size_t m = 0; m < est.fit.c.size(); ++m)
        rep.model.c[m] = -est.fit.c[m];

    // 5) synthesize the residue spectrum on every bin and invert
    const auto rbar = run_step(5, [&] {
        for (std::size_t n = 0; n < L; ++n) {
            cplx acc{};
            for (std::size_t m = 0; m < rep.model.size(); ++m) {
                const cplx xi = rep.model.xi[m];
                const double nn = static_cast<double>(n);
                acc += rep.model.c[m] * std::polar(std::pow(std::abs(xi), nn), std::arg(xi) * nn);
            }
            rep.residue_spectrum[n] = acc;
        }
        const auto time = inverse_dft(rep.residue_spectrum);
        std::vector<double> re(time.size());
        for (std::size_t k = 0; k < time.size(); ++k)
            re[k] = time[k].real();
        return re;
    });

    // 6) zero-pad and anti-difference; circular mode drops the wrap term
    const auto residue = run_step(6, [&] {
        const std::size_t used = K - 1;
        return anti_difference(std::span(rbar).first(used));
    });

    // 7) add back the folded samples, fix the constant
    finish(rep, y, residue, opts.calibration);

    // 8) bandlimited interpolant
    if (K >= 2 * static_cast<std::size_t>(bandwidth) + 1)
        rep.interpolant = run_step(8, [&] { return fit_bandlimited(rep.gamma_hat, bandwidth); });
    return rep;
}

RecoveryReport usf_recover(const SampleVector& y, double lambda, double omega, double beta_g,
                           const UsfOptions& opts)
{
    const std::size_t K = y.size();
    const double T = y.grid.step;
    if (!(lambda > 0.0) || !(omega > 0.0) || !(beta_g > 0.0))
        throw ArgumentError("usf_recover: lambda, Omega and beta_g must be positive");
    const double shrink = T * omega * std::numbers::e;
    if (shrink >= 1.0)
        throw OversamplingError("usf_recover: T*Omega*e = " + std::to_string(shrink) +
                                " is not below 1");

    const int N = opts.order ? *opts.order : choose_order(lambda, beta_g, T, omega);
    if (N < 1)
        throw ArgumentError("usf_recover: order must be >= 1");
    if (K <= static_cast<std::size_t>(N))
        throw UndersampledError("usf_recover: need more than N samples");

    const double two_lambda = 2.0 * lambda;
    const double top_bound = std::pow(shrink, N) * beta_g;
    if (top_bound > lambda * (1.0 + 1e-12))
        throw FoldConsistencyError("usf_recover: (T*Omega*e)^N * beta_g = " +
                                   std::to_string(top_bound) + " exceeds lambda for N = " +
                                   std::to_string(N) + "; folds cannot be isolated");

    RecoveryReport rep;
    rep.method = Method::usf;
    rep.diagnostics["N"] = N;
    rep.diagnostics["lambda"] = lambda;
    rep.diagnostics["beta_g"] = beta_g;

    double worst_snap = 0.0;
    auto snap = [&](std::vector<double>& v) {
        for (auto& x : v) {
            const double s = two_lambda * std::round(x / two_lambda);
            worst_snap = std::max(worst_snap, std::abs(x - s));
            x = s;
        }
        if (worst_snap > 0.5 * lambda)
            throw FoldConsistencyError("usf_recover: residue estimate is off the 2*lambda grid");
    };

    // Highest-order residue differences from the folded differences.
    const auto dN = finite_difference(y.values, N, DiffMode::literal);
    std::vector<double> rho(dN.size());
    for (std::size_t k = 0; k < dN.size(); ++k)
        rho[k] = centered_modulo(dN[k], lambda) - dN[k];
    snap(rho);

    for (int n = N; n >= 1; --n) {
        rho = anti_difference(rho);
        snap(rho);
        const std::vector<double> yd =
            n - 1 == 0 ? y.values : finite_difference(y.values, n - 1, DiffMode::literal);

        // Constant of integration: the 2*lambda multiple that minimizes the peak.
        std::vector<double> v(yd.size());
        for (std::size_t k = 0; k < v.size(); ++k)
            v[k] = yd[k] + rho[k];
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        const double center = 0.5 * (*lo + *hi);
        const double k0 = std::round(-center / two_lambda);
        double best_kappa = k0;
        double best_peak = std::numeric_limits<double>::infinity();
        for (double kappa : {k0 - 1.0, k0, k0 + 1.0}) {
            const double shift = two_lambda * kappa;
            const double peak = std::max(std::abs(*lo + shift), std::abs(*hi + shift));
            if (peak < best_peak) {
                best_peak = peak;
                best_kappa = kappa;
            }
        }
        const double shift = two_lambda * best_kappa;
        for (auto& x : rho)
            x += shift;

        const double bound = std::pow(shrink, n - 1) * beta_g;
        if (best_peak > bound * (1.0 + 1e-9) + 1e-12)
            throw FoldConsistencyError("usf_recover: order-" + std::to_string(n - 1) +
                                       " reconstruction peaks at " + std::to_string(best_peak) +
                                       " above the bandlimited bound " + std::to_string(bound));
    }
    rep.diagnostics["max_snap_distance"] = worst_snap;
    finish(rep, y, std::move(rho), opts.calibration);
    return rep;
}

std::vector<double> LambdaGrid::points() const
{
    if (!(lo > 0.0) || !(step > 0.0) || hi < lo)
        throw ArgumentError("LambdaGrid: need 0 < lo <= hi and step > 0");
    std::vector<double> pts;
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i)
        pts.push_back(lo + step * static_cast<double>(i));
    return pts;
}

LambdaGrid LambdaGrid::around(double nominal)
{
    return {0.5 * nominal, 1.5 * nominal, 0.01 * nominal};
}

LambdaSearch optimize_lambda(const SampleVector& y, std::span<const double> gamma_ref,
                             const LambdaGrid& grid, double omega, std::optional<int> order)
{
    if (gamma_ref.size() != y.size())
        throw ArgumentError("optimize_lambda: reference length differs from the samples");
    const auto pts = grid.points();
    const double ref_mean = mean(gamma_ref);
    const double peak = max_abs(gamma_ref);

    struct Cell {
        std::optional<RecoveryReport> report;
        double err = std::numeric_limits<double>::infinity();
    };
    auto evaluate_at = [&](double lam) {
        Cell c;
        try {
            UsfOptions o;
            o.order = order;
            o.calibration = Calibration::to_mean(ref_mean);
            auto rep = usf_recover(y, lam, omega, beta_on_grid(peak, lam), o);
            c.err = mse(rep.gamma_hat.values, gamma_ref);
            rep.method = Method::usf_opt;
            c.report = std::move(rep);
        } catch (const Error&) {
        }
        return c;
    };

    std::vector<Cell> cells(pts.size());
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t base = 0; base < pts.size(); base += workers) {
        std::vector<std::future<Cell>> batch;
        for (std::size_t i = base; i < std::min(pts.size(), base + workers); ++i)
            batch.push_back(std::async(std::launch::async, evaluate_at, pts[i]));
        for (std::size_t i = 0; i < batch.size(); ++i)
            cells[base + i] = batch[i].get();
    }

    std::optional<std::size_t> best;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!cells[i].report) {
            ++failures;
            continue;
        }
        if (!best || cells[i].err < cells[*best].err)
            best = i;
    }
    if (!best)
        throw RecoveryError(0, "optimize_lambda: recovery failed at every one of the " +
                                   std::to_string(pts.size()) + " grid points");

    LambdaSearch out{pts[*best], cells[*best].err, std::move(*cells[*best].report), failures};
    out.report.diagnostics["lambda_opt"] = out.lambda_opt;
    return out;
}

} // namespace usf
