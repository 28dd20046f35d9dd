#include "usf/folding.hpp"

#include "usf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace usf {

namespace {

// Grid index of an instant, or -1 when it is not within 1e-6 of a grid point.
long grid_index(double t, double step)
{
    const double u = t / step;
    const double r = std::round(u);
    if (std::abs(u - r) > 1e-6)
        return -1;
    return static_cast<long>(r);
}

} // namespace

ResidueSpec::ResidueSpec(double tau, std::vector<FoldEvent> events)
    : tau_(tau), events_(std::move(events))
{
    if (!(tau_ > 0.0))
        throw ArgumentError("ResidueSpec: tau must be positive");
    for (std::size_t m = 0; m < events_.size(); ++m) {
        const double t = events_[m].time;
        if (t < 0.0 || t >= tau_)
            throw ArgumentError("ResidueSpec: event instant outside [0, tau)");
        if (m > 0 && !(t > events_[m - 1].time))
            throw ArgumentError("ResidueSpec: event instants must be strictly increasing");
    }
}

double ResidueSpec::value_at(double t) const noexcept
{
    double r = 0.0;
    for (const auto& e : events_) {
        if (e.time > t)
            break;
        r += e.amplitude;
    }
    return r;
}

ResidueSpec ResidueSpec::from_samples(const SampleVector& residue)
{
    std::vector<FoldEvent> events;
    const auto& r = residue.values;
    for (std::size_t k = 0; k < r.size(); ++k) {
        const double jump = k == 0 ? r[0] : r[k] - r[k - 1];
        if (jump != 0.0)
            events.push_back({residue.grid.time(k), jump});
    }
    return ResidueSpec(residue.grid.duration(), std::move(events));
}

double centered_modulo(double x, double lambda)
{
    const double u = x / (2.0 * lambda) + 0.5;
    const double frac = u - std::floor(u);
    double out = 2.0 * lambda * (frac - 0.5);
    // Rounding in frac can land exactly on +lambda; that point belongs to -lambda.
    if (out >= lambda)
        out = -lambda;
    return out;
}

std::vector<double> centered_modulo(std::span<const double> x, double lambda)
{
    std::vector<double> out(x.size());
    std::transform(x.begin(), x.end(), out.begin(),
                   [lambda](double v) { return centered_modulo(v, lambda); });
    return out;
}

FoldResult fold_ideal(const SampleVector& gamma, double lambda)
{
    if (!(lambda > 0.0))
        throw ArgumentError("fold_ideal: lambda must be positive");
    const double two_lambda = 2.0 * lambda;
    std::vector<double> y(gamma.size());
    std::vector<double> r(gamma.size());
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        const double folded = centered_modulo(gamma[k], lambda);
        const double raw = gamma[k] - folded;
        const double snapped = two_lambda * std::round(raw / two_lambda);
        if (std::abs(raw - snapped) >= 1e-9 * lambda * std::max(1.0, std::abs(raw / lambda)))
            throw ConsistencyError("fold_ideal: residue is off the 2*lambda grid");
        r[k] = snapped;
        // Keep y + r == gamma exactly.
        y[k] = gamma[k] - snapped;
    }
    return {SampleVector(std::move(y), gamma.grid), SampleVector(std::move(r), gamma.grid)};
}

SampleVector apply_residue(const SampleVector& gamma, const ResidueSpec& spec)
{
    const double T = gamma.grid.step;
    std::vector<double> step_values(gamma.size(), 0.0);
    for (const auto& e : spec.events()) {
        const long k = grid_index(e.time, T);
        if (k < 0)
            throw ArgumentError("apply_residue: event instant is not on the sampling grid");
        if (static_cast<std::size_t>(k) < gamma.size())
            step_values[static_cast<std::size_t>(k)] += e.amplitude;
    }
    std::vector<double> y(gamma.size());
    double r = 0.0;
    for (std::size_t k = 0; k < gamma.size(); ++k) {
        r += step_values[k];
        y[k] = gamma[k] - r;
    }
    return SampleVector(std::move(y), gamma.grid);
}

ResidueSpec perturb_folds(const ResidueSpec& ideal, const NonIdeality& cfg, double step,
                          std::uint64_t seed)
{
    if (cfg.delay_max_samples < 0 || cfg.threshold_jitter < 0.0 || cfg.threshold_jitter >= 1.0 ||
        cfg.spurious_rate < 0.0 || cfg.spurious_amp_max < 0.0)
        throw ArgumentError("perturb_folds: invalid non-ideality parameters");
    if (cfg.is_ideal())
        return ideal;

    const long last = static_cast<long>(std::llround(ideal.tau() / step)) - 1;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> delay(0, cfg.delay_max_samples);
    std::uniform_real_distribution<double> jitter(-cfg.threshold_jitter, cfg.threshold_jitter);

    // Merge by grid index so colliding events add their amplitudes.
    std::map<long, double> merged;
    for (const auto& e : ideal.events()) {
        long k = grid_index(e.time, step);
        if (k < 0)
            throw ArgumentError("perturb_folds: event instant is not on the grid");
        if (k == 0) {
            merged[0] += e.amplitude;
            continue;
        }
        const int d = delay(rng);
        const double eta = cfg.threshold_jitter > 0.0 ? jitter(rng) : 0.0;
        k = std::min(k + d, last);
        merged[k] += e.amplitude * (1.0 + eta);
    }

    if (cfg.spurious_rate > 0.0) {
        std::poisson_distribution<int> count(cfg.spurious_rate);
        std::uniform_int_distribution<long> where(1, std::max<long>(1, last));
        std::uniform_real_distribution<double> amp(-cfg.spurious_amp_max, cfg.spurious_amp_max);
        const int extra = count(rng);
        for (int i = 0; i < extra; ++i) {
            const long k = where(rng);
            merged[k] += amp(rng);
        }
    }

    std::vector<FoldEvent> events;
    events.reserve(merged.size());
    for (const auto& [k, c] : merged)
        if (c != 0.0)
            events.push_back({step * static_cast<double>(k), c});
    return ResidueSpec(ideal.tau(), std::move(events));
}

std::vector<double> finite_difference(std::span<const double> s, int order, DiffMode mode)
{
    if (order < 1)
        throw ArgumentError("finite_difference: order must be >= 1");
    if (mode == DiffMode::literal && s.size() <= static_cast<std::size_t>(order))
        throw ArgumentError("finite_difference: input shorter than order + 1");
    if (s.empty())
        throw ArgumentError("finite_difference: empty input");

    std::vector<double> cur(s.begin(), s.end());
    for (int n = 0; n < order; ++n) {
        const std::size_t len = cur.size();
        if (mode == DiffMode::circular) {
            std::vector<double> next(len);
            for (std::size_t k = 0; k < len; ++k)
                next[k] = cur[(k + 1) % len] - cur[k];
            cur = std::move(next);
        } else {
            std::vector<double> next(len - 1);
            for (std::size_t k = 0; k + 1 < len; ++k)
                next[k] = cur[k + 1] - cur[k];
            cur = std::move(next);
        }
    }
    return cur;
}

int choose_order(double lambda, double beta_g, double step, double omega)
{
    if (!(lambda > 0.0) || !(step > 0.0) || !(omega > 0.0))
        throw ArgumentError("choose_order: lambda, T and Omega must be positive");
    if (!(beta_g >= lambda))
        throw ArgumentError("choose_order: beta_g must be at least lambda");
    const double rel = beta_g / (2.0 * lambda);
    if (std::abs(rel - std::round(rel)) > 1e-9 * std::max(1.0, rel))
        throw ArgumentError("choose_order: beta_g must be a multiple of 2*lambda");
    const double shrink = step * omega * std::numbers::e;
    if (shrink >= 1.0)
        throw OversamplingError("choose_order: T*Omega*e >= 1");
    const double bound = (std::log(lambda) - std::log(beta_g)) / std::log(shrink);
    // Guard against ceil(2 + 1e-15) = 3.
    const double snapped = std::abs(bound - std::round(bound)) < 1e-12 ? std::round(bound) : bound;
    return std::max(1, static_cast<int>(std::ceil(snapped)));
}

double beta_on_grid(double peak, double lambda)
{
    const double two_lambda = 2.0 * lambda;
    return two_lambda * std::max(1.0, std::ceil(peak / two_lambda));
}

std::size_t count_spikes(std::span<const double> residue, DiffMode mode, double tol)
{
    if (residue.size() < 2)
        return 0;
    const auto d = finite_difference(residue, 1, mode);
    return static_cast<std::size_t>(
        std::count_if(d.begin(), d.end(), [tol](double v) { return std::abs(v) > tol; }));
}

} // namespace usf
