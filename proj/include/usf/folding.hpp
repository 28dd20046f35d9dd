#pragma once

#include "usf/signal_model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace usf {

/// One jump of a piecewise-constant residue.
struct FoldEvent {
    double time;      ///< t_m in seconds, in [0, tau)
    double amplitude; ///< c_m in volts

    bool operator==(const FoldEvent&) const = default;
};

/// Piecewise-constant residue r(t) = sum_m c_m 1{t >= t_m} on one period.
/// Events are kept strictly increasing in time.
class ResidueSpec {
public:
    ResidueSpec() = default;
    ResidueSpec(double tau, std::vector<FoldEvent> events);

    double tau() const noexcept { return tau_; }
    std::span<const FoldEvent> events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }

    /// r(t) for t in [0, tau).
    double value_at(double t) const noexcept;

    /// Read the jumps off a sampled residue r[k]: an event at 0 carrying r[0]
    /// (when nonzero) and one event at k*T for every k where r[k] != r[k-1].
    static ResidueSpec from_samples(const SampleVector& residue);

    bool operator==(const ResidueSpec&) const = default;

private:
    double tau_ = 1.0;
    std::vector<FoldEvent> events_;
};

/// Hardware non-idealities applied on top of ideal folds.
struct NonIdeality {
    int delay_max_samples = 0;
    double threshold_jitter = 0.0; ///< eta_max in [0, 1)
    double spurious_rate = 0.0;    ///< mean number of extra jumps per period
    double spurious_amp_max = 0.0; ///< volts

    bool is_ideal() const noexcept
    {
        return delay_max_samples == 0 && threshold_jitter == 0.0 && spurious_rate == 0.0;
    }
};

struct ModuloConfig {
    double lambda = 1.0;
    NonIdeality nonideality;
};

/// 2 lambda (frac(x / 2 lambda + 1/2) - 1/2), in [-lambda, lambda).
double centered_modulo(double x, double lambda);
std::vector<double> centered_modulo(std::span<const double> x, double lambda);

struct FoldResult {
    SampleVector folded;  ///< y
    SampleVector residue; ///< gamma - y, exact multiples of 2 lambda
};

FoldResult fold_ideal(const SampleVector& gamma, double lambda);

/// y[k] = gamma[k] - r(kT). Event instants must sit on the grid.
SampleVector apply_residue(const SampleVector& gamma, const ResidueSpec& spec);

/// Applies the random faults of `cfg` to the jumps of an ideal residue.
/// Instants stay on the grid `step`; an event at t = 0 encodes the initial
/// residue level and is left untouched.
ResidueSpec perturb_folds(const ResidueSpec& ideal, const NonIdeality& cfg, double step,
                          std::uint64_t seed);

enum class DiffMode {
    circular, ///< periodic extension s[K] = s[0]; output keeps K samples
    literal,  ///< plain forward difference; output loses N samples
};

std::vector<double> finite_difference(std::span<const double> s, int order,
                                      DiffMode mode = DiffMode::circular);

/// Smallest N >= 1 with N >= ceil((log lambda - log beta_g) / log(T Omega e)).
int choose_order(double lambda, double beta_g, double step, double omega);

/// 2 lambda * ceil(max|x| / 2 lambda), at least 2 lambda.
double beta_on_grid(double peak, double lambda);

/// Number of circular-difference spikes of a sampled residue, i.e. the M that
/// the Fourier-domain recovery must be told.
std::size_t count_spikes(std::span<const double> residue, DiffMode mode = DiffMode::circular,
                         double tol = 1e-9);

} // namespace usf
