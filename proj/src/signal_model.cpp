#include "usf/signal_model.hpp"

#include "usf/errors.hpp"
#include "usf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace usf {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

} // namespace

TrigPolynomial::TrigPolynomial(double tau, std::vector<cplx> coeffs)
    : tau_(tau), bandwidth_(0), coeffs_(std::move(coeffs))
{
    if (!(tau_ > 0.0) || !std::isfinite(tau_))
        throw ArgumentError("TrigPolynomial: period must be positive");
    if (coeffs_.empty() || coeffs_.size() % 2 == 0)
        throw ArgumentError("TrigPolynomial: expected 2P+1 coefficients");
    bandwidth_ = static_cast<int>(coeffs_.size() / 2);

    double scale = 0.0;
    for (const auto& c : coeffs_)
        scale = std::max(scale, std::abs(c));
    for (int p = 0; p <= bandwidth_; ++p) {
        const cplx a = coeff(p);
        const cplx b = std::conj(coeff(-p));
        if (std::abs(a - b) > 1e-12 * std::max(scale, 1.0))
            throw ArgumentError("TrigPolynomial: coefficients are not Hermitian-symmetric");
    }
}

double TrigPolynomial::fundamental() const noexcept { return two_pi / tau_; }

cplx TrigPolynomial::coeff(int p) const noexcept
{
    if (p < -bandwidth_ || p > bandwidth_)
        return {};
    return coeffs_[static_cast<std::size_t>(p + bandwidth_)];
}

double TrigPolynomial::max_frequency() const noexcept
{
    return static_cast<double>(bandwidth_) * fundamental();
}

UniformGrid UniformGrid::over_period(double tau, std::size_t count)
{
    if (!(tau > 0.0) || count == 0)
        throw ArgumentError("UniformGrid: need tau > 0 and K >= 1");
    return UniformGrid{tau / static_cast<double>(count), count};
}

SampleVector::SampleVector(std::vector<double> v, UniformGrid g)
    : values(std::move(v)), grid(g)
{
    if (values.size() != grid.count)
        throw ArgumentError("SampleVector: value count does not match grid");
}

TrigPolynomial synthesize_random(int bandwidth, double tau, double amplitude, std::uint64_t seed)
{
    if (bandwidth < 0)
        throw ArgumentError("synthesize_random: P must be nonnegative");
    if (!(tau > 0.0))
        throw ArgumentError("synthesize_random: tau must be positive");
    if (!(amplitude > 0.0))
        throw ArgumentError("synthesize_random: amplitude must be positive");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto P = static_cast<std::size_t>(bandwidth);
    std::vector<cplx> coeffs(2 * P + 1);
    double dc = normal(rng);
    if (dc == 0.0)
        dc = 1.0;
    coeffs[P] = dc;
    for (std::size_t p = 1; p <= P; ++p) {
        const double re = normal(rng);
        const double im = normal(rng);
        coeffs[P + p] = cplx(re, im);
        coeffs[P - p] = cplx(re, -im);
    }

    const TrigPolynomial raw(tau, coeffs);
    const double peak = dense_max_abs(raw);
    for (auto& c : coeffs)
        c *= amplitude / peak;
    // Re-impose exact symmetry after scaling.
    for (std::size_t p = 1; p <= P; ++p)
        coeffs[P - p] = std::conj(coeffs[P + p]);
    coeffs[P] = coeffs[P].real();
    return TrigPolynomial(tau, std::move(coeffs));
}

double evaluate(const TrigPolynomial& g, double t)
{
    const int P = g.bandwidth();
    // Reduce t into [0, tau) so large arguments keep full phase precision.
    double phase_t = std::fmod(t, g.tau());
    if (phase_t < 0.0)
        phase_t += g.tau();
    const double w = g.fundamental() * phase_t;

    cplx sum = g.coeff(0);
    for (int p = 1; p <= P; ++p) {
        const cplx e = std::polar(1.0, w * p);
        sum += g.coeff(p) * e + g.coeff(-p) * std::conj(e);
    }
    if (std::abs(sum.imag()) > 1e-9 * std::abs(sum.real()) + 1e-12)
        throw ConsistencyError("evaluate: non-negligible imaginary part");
    return sum.real();
}

double dense_max_abs(const TrigPolynomial& g, std::size_t points)
{
    double peak = 0.0;
    const double dt = g.tau() / static_cast<double>(points);
    for (std::size_t i = 0; i < points; ++i)
        peak = std::max(peak, std::abs(evaluate(g, dt * static_cast<double>(i))));
    return peak;
}

SampleVector sample(const TrigPolynomial& g, const UniformGrid& grid)
{
    if (std::abs(grid.duration() - g.tau()) > 1e-9 * g.tau())
        throw ArgumentError("sample: K*T does not match the signal period");
    std::vector<double> v(grid.count);
    for (std::size_t k = 0; k < grid.count; ++k)
        v[k] = evaluate(g, grid.time(k));
    return SampleVector(std::move(v), grid);
}

TrigPolynomial fit_bandlimited(const SampleVector& samples, int bandwidth)
{
    const std::size_t K = samples.size();
    if (bandwidth < 0)
        throw ArgumentError("fit_bandlimited: P must be nonnegative");
    if (K < 2 * static_cast<std::size_t>(bandwidth) + 1)
        throw UndersampledError("fit_bandlimited: need K >= 2P+1 samples");

    const auto spectrum = forward_dft(samples.values, DiffMode::circular);
    const auto P = static_cast<std::size_t>(bandwidth);
    std::vector<cplx> coeffs(2 * P + 1);
    const double norm = 1.0 / static_cast<double>(K);
    coeffs[P] = spectrum.bins[0].real() * norm;
    for (std::size_t p = 1; p <= P; ++p) {
        const cplx c = spectrum.bins[p] * norm;
        coeffs[P + p] = c;
        coeffs[P - p] = std::conj(c);
    }
    return TrigPolynomial(samples.grid.duration(), std::move(coeffs));
}

std::vector<double> interpolate(const SampleVector& samples, int bandwidth,
                                std::span<const double> t_query)
{
    const auto fit = fit_bandlimited(samples, bandwidth);
    std::vector<double> out;
    out.reserve(t_query.size());
    for (double t : t_query)
        out.push_back(evaluate(fit, t));
    return out;
}

double interpolate(const SampleVector& samples, int bandwidth, double t_query)
{
    return evaluate(fit_bandlimited(samples, bandwidth), t_query);
}

QuantizedSamples quantize(const SampleVector& samples, int bits, double full_scale)
{
    if (bits < 1 || bits > 52)
        throw ArgumentError("quantize: bits must be in [1, 52]");
    if (!(full_scale > 0.0))
        throw ArgumentError("quantize: full_scale must be positive");

    const double levels = std::ldexp(1.0, bits);
    const double q = 2.0 * full_scale / levels;
    QuantizedSamples out;
    out.step = q;
    out.samples = samples;
    for (auto& v : out.samples.values) {
        // Level index i in [0, 2^bits); level value -FS + (i + 1/2) q.
        double i = std::floor((v + full_scale) / q);
        if (i < 0.0) {
            i = 0.0;
            ++out.saturated;
        } else if (i > levels - 1.0) {
            i = levels - 1.0;
            ++out.saturated;
        }
        v = -full_scale + (i + 0.5) * q;
    }
    return out;
}

double dynamic_range(std::span<const double> values)
{
    if (values.empty())
        throw ArgumentError("dynamic_range: empty input");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return *hi - *lo;
}

} // namespace usf
