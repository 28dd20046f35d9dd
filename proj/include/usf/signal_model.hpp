#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

namespace usf {

using cplx = std::complex<double>;

/// A tau-periodic bandlimited signal
///
///     g(t) = sum_{|p| <= P} c_p exp(j p w0 t),   w0 = 2 pi / tau
///
/// with Hermitian-symmetric coefficients (c_{-p} = conj(c_p)), so g is real.
class TrigPolynomial {
public:
    /// `coeffs` holds c_{-P} .. c_{P} (2P+1 entries). Throws ArgumentError unless
    /// tau > 0 and the coefficients are Hermitian to within 1e-12.
    TrigPolynomial(double tau, std::vector<cplx> coeffs);

    double tau() const noexcept { return tau_; }
    int bandwidth() const noexcept { return bandwidth_; }
    double fundamental() const noexcept;

    /// Coefficient c_p for -P <= p <= P; zero outside.
    cplx coeff(int p) const noexcept;
    std::span<const cplx> coeffs() const noexcept { return coeffs_; }

    /// Highest angular frequency P * w0 (rad/s).
    double max_frequency() const noexcept;

private:
    double tau_;
    int bandwidth_;
    std::vector<cplx> coeffs_;
};

struct UniformGrid {
    double step;      ///< T in seconds
    std::size_t count; ///< K

    double duration() const noexcept { return step * static_cast<double>(count); }
    double time(std::size_t k) const noexcept { return step * static_cast<double>(k); }

    /// Grid covering exactly one period with K samples.
    static UniformGrid over_period(double tau, std::size_t count);
};

struct SampleVector {
    std::vector<double> values;
    UniformGrid grid;

    SampleVector() : grid{1.0, 0} {}
    SampleVector(std::vector<double> v, UniformGrid g);

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t k) const noexcept { return values[k]; }
};

TrigPolynomial synthesize_random(int bandwidth, double tau, double amplitude, std::uint64_t seed);

double evaluate(const TrigPolynomial& g, double t);

/// max |g(t)| on a uniform grid of `points` samples over one period.
double dense_max_abs(const TrigPolynomial& g, std::size_t points = 16384);

SampleVector sample(const TrigPolynomial& g, const UniformGrid& grid);

/// Least-squares (DFT-domain) fit of a degree-P trigonometric polynomial to
/// samples covering one period; exact for noiseless samples when K >= 2P+1.
TrigPolynomial fit_bandlimited(const SampleVector& samples, int bandwidth);

/// Bandlimited interpolation: zero every DFT bin outside the band and evaluate.
std::vector<double> interpolate(const SampleVector& samples, int bandwidth,
                                std::span<const double> t_query);
double interpolate(const SampleVector& samples, int bandwidth, double t_query);

struct QuantizedSamples {
    SampleVector samples;
    std::size_t saturated = 0; ///< inputs clipped to an extreme level
    double step = 0.0;         ///< quantizer step q
};

/// Mid-rise uniform quantizer with 2^bits levels over [-full_scale, full_scale].
QuantizedSamples quantize(const SampleVector& samples, int bits, double full_scale);

/// max - min of the sample values.
double dynamic_range(std::span<const double> values);
inline double dynamic_range(const SampleVector& s) { return dynamic_range(s.values); }

} // namespace usf
