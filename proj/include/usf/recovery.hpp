#pragma once

#include "usf/folding.hpp"
#include "usf/signal_model.hpp"
#include "usf/spectral.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace usf {

enum class Method { fourier_prony, usf, usf_opt };
enum class Estimator { prony, pencil };

const char* to_string(Method m) noexcept;
const char* to_string(Estimator e) noexcept;
const char* to_string(DiffMode m) noexcept;

/// How the unknown additive constant is fixed.
struct Calibration {
    /// When set, the reconstruction mean is matched to this value; otherwise
    /// the reconstruction is made zero-mean.
    std::optional<double> reference_mean;

    static Calibration zero_mean() { return {}; }
    static Calibration to_mean(double m) { return {m}; }
};

struct RecoveryReport {
    SampleVector gamma_hat;   ///< reconstructed unfolded samples
    SampleVector residue_hat; ///< estimated residue, gamma_hat = y + residue_hat + offset
    ExponentialModel model;   ///< Fourier-Prony only; c holds residue jump amplitudes
    Method method = Method::fourier_prony;
    double offset_applied = 0.0;
    std::map<std::string, double> diagnostics;

    /// Fourier-Prony only: DFT of the differenced samples and the synthesized
    /// spectrum of the differenced residue estimate.
    std::vector<cplx> spectrum;
    std::vector<cplx> residue_spectrum;

    /// Bandlimited interpolant of gamma_hat when K >= 2P+1.
    std::optional<TrigPolynomial> interpolant;
};

struct SamplingBounds {
    double t_fd;       ///< tau / (2 (P + M + 1))
    double t_us;       ///< 1 / (2 Omega e)
    std::size_t k_min; ///< 2 (ceil(Omega tau / 2 pi) + M + 1)
};

/// `omega` <= 0 means "use 2 pi P / tau".
SamplingBounds sampling_bounds(double tau, int bandwidth, std::size_t folds, double omega = 0.0);

/// Cumulative sum with a leading zero: output length L+1, first difference == input.
std::vector<double> anti_difference(std::span<const double> rbar);

/// Rows of the Toeplitz system solved by the annihilator.
enum class ToeplitzRows {
    all_lags,       ///< every lag the out-of-band samples allow
    centered_block, ///< only the 2M samples around L/2 (+ block_offset)
};

struct FourierPronyOptions {
    DiffMode mode = DiffMode::circular;
    Estimator estimator = Estimator::prony;
    PencilParam pencil;
    ToeplitzRows toeplitz_rows = ToeplitzRows::all_lags;
    long block_offset = 0;
    /// Round estimated instants to the sampling grid before the amplitude fit.
    bool snap_to_grid = true;
    Calibration calibration;
};

RecoveryReport fourier_prony_recover(const SampleVector& y, int bandwidth, std::size_t folds,
                                     const FourierPronyOptions& opts = {});

struct UsfOptions {
    std::optional<int> order; ///< finite-difference order; auto when empty
    Calibration calibration;
};

/// Baseline recovery through higher-order differences. `beta_g` must be a
/// multiple of 2 lambda bounding the signal peak.
RecoveryReport usf_recover(const SampleVector& y, double lambda, double omega, double beta_g,
                           const UsfOptions& opts = {});

struct LambdaGrid {
    double lo;
    double hi;
    double step;

    std::vector<double> points() const;
    /// [0.5, 1.5] * nominal with step 0.01 * nominal.
    static LambdaGrid around(double nominal);
};

struct LambdaSearch {
    double lambda_opt;
    double mse;
    RecoveryReport report;
    std::size_t failures = 0;
};

/// Runs usf_recover for every grid value and keeps the one closest (in MSE,
/// after mean calibration) to the reference; ties go to the smallest lambda.
LambdaSearch optimize_lambda(const SampleVector& y, std::span<const double> gamma_ref,
                             const LambdaGrid& grid, double omega,
                             std::optional<int> order = std::nullopt);

double mse(std::span<const double> x, std::span<const double> y);

/// Sample mean.
double mean(std::span<const double> x);

} // namespace usf
