#include "usf/spectral.hpp"

#include "usf/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace usf {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

cplx power(cplx xi, std::size_t n)
{
    if (n == 0)
        return 1.0;
    const double r = std::abs(xi);
    if (r == 0.0)
        return 0.0;
    return std::polar(std::pow(r, static_cast<double>(n)), std::arg(xi) * static_cast<double>(n));
}

std::string echo(const Eigen::VectorXcd& p)
{
    std::ostringstream os;
    os.precision(6);
    os << "[";
    for (Eigen::Index i = 0; i < p.size(); ++i)
        os << (i ? ", " : "") << p[i];
    os << "]";
    return os.str();
}

} // namespace

double SpectralData::base_freq() const noexcept
{
    return two_pi / static_cast<double>(bins.size());
}

std::vector<cplx> forward_dft_complex(std::span<const cplx> x)
{
    if (x.empty())
        throw ArgumentError("forward_dft: empty input");
    std::vector<cplx> in(x.begin(), x.end());
    if (in.size() == 1)
        return in;
    std::vector<cplx> out;
    Eigen::FFT<double> fft;
    fft.fwd(out, in);
    return out;
}

SpectralData forward_dft(std::span<const double> x, DiffMode mode)
{
    std::vector<cplx> in(x.begin(), x.end());
    SpectralData s;
    s.bins = forward_dft_complex(in);
    s.mode = mode;
    return s;
}

std::vector<cplx> inverse_dft(std::span<const cplx> bins)
{
    if (bins.empty())
        throw ArgumentError("inverse_dft: empty input");
    std::vector<cplx> in(bins.begin(), bins.end());
    if (in.size() == 1)
        return in;
    std::vector<cplx> out;
    Eigen::FFT<double> fft;
    fft.inv(out, in);
    return out;
}

BandPartition band_partition(std::size_t length, int bandwidth)
{
    if (bandwidth < 0)
        throw ArgumentError("band_partition: P must be nonnegative");
    const auto P = static_cast<std::size_t>(bandwidth);
    if (length < 2 * P + 2)
        throw UndersampledError("band_partition: transform length " + std::to_string(length) +
                                " leaves no out-of-band bins for P = " + std::to_string(P));
    BandPartition b;
    for (std::size_t n = 0; n <= P; ++n)
        b.in_band.push_back(n);
    for (std::size_t n = P + 1; n + P < length; ++n)
        b.out_band.push_back(n);
    for (std::size_t n = length - P; n < length; ++n)
        b.in_band.push_back(n);
    return b;
}

OutOfBand extract_out_of_band(const SpectralData& spectrum, int bandwidth)
{
    const auto part = band_partition(spectrum.length(), bandwidth);
    OutOfBand z;
    z.length = spectrum.length();
    z.index = part.out_band;
    z.value.reserve(part.out_band.size());
    for (auto n : part.out_band)
        z.value.push_back(spectrum.bins[n]);
    return z;
}

Eigen::MatrixXcd build_toeplitz(std::span<const cplx> x, std::size_t order)
{
    if (order == 0)
        throw ArgumentError("build_toeplitz: order must be >= 1");
    if (x.size() != 2 * order)
        throw ArgumentError("build_toeplitz: expected exactly 2M samples");
    const auto M = static_cast<Eigen::Index>(order);
    Eigen::MatrixXcd t(M, M + 1);
    for (Eigen::Index i = 0; i < M; ++i)
        for (Eigen::Index j = 0; j <= M; ++j)
            t(i, j) = x[static_cast<std::size_t>(i - j + M)];
    return t;
}

Eigen::MatrixXcd build_toeplitz_all_lags(std::span<const cplx> x, std::size_t order)
{
    if (order == 0)
        throw ArgumentError("build_toeplitz: order must be >= 1");
    if (x.size() < 2 * order)
        throw UndersampledError("build_toeplitz: need at least 2M samples");
    const auto M = static_cast<Eigen::Index>(order);
    const auto rows = static_cast<Eigen::Index>(x.size()) - M;
    Eigen::MatrixXcd t(rows, M + 1);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j <= M; ++j)
            t(i, j) = x[static_cast<std::size_t>(i + M - j)];
    return t;
}

std::size_t toeplitz_block_start(const OutOfBand& z, std::size_t order, long offset)
{
    if (z.size() < 2 * order)
        throw UndersampledError("toeplitz_block_start: " + std::to_string(z.size()) +
                                " out-of-band samples cannot identify " + std::to_string(order) +
                                " exponentials");
    if (z.size() == 0)
        return 0;
    const long center = static_cast<long>(z.length / 2) + offset;
    long start = center - static_cast<long>(order) - static_cast<long>(z.index.front());
    start = std::clamp(start, 0L, static_cast<long>(z.size() - 2 * order));
    return static_cast<std::size_t>(start);
}

Annihilator annihilator(const Eigen::MatrixXcd& toeplitz)
{
    const auto M = toeplitz.cols() - 1;
    if (M < 1 || toeplitz.rows() < M)
        throw ArgumentError("annihilator: expected an R x (M+1) matrix with R >= M");

    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(toeplitz, Eigen::ComputeFullV);
    const Eigen::VectorXcd v = svd.matrixV().col(M);
    const auto& s = svd.singularValues();

    Annihilator a;
    a.sigma_min = (toeplitz * v).norm();
    a.sigma_ratio = s[0] > 0.0 ? a.sigma_min / s[0] : 0.0;

    const double vnorm = v.norm();
    if (std::abs(v[M]) >= 1e-12 * vnorm) {
        a.coeffs = v / v[M];
    } else {
        Eigen::Index imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        a.coeffs = v / v[imax];
        a.normalization_fallback = true;
    }
    return a;
}

bool ExponentialModel::roots_near_unit_circle() const noexcept
{
    return std::all_of(xi.begin(), xi.end(), [](cplx r) {
        const double m = std::abs(r);
        return m >= 0.99 && m <= 1.01;
    });
}

std::vector<cplx> polynomial_roots(const Eigen::VectorXcd& p)
{
    if (p.size() < 2)
        return {};
    const double scale = p.cwiseAbs().maxCoeff();
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw NumericalError("polynomial_roots: degenerate polynomial " + echo(p));
    // Vanishing leading coefficients are roots at infinity; drop them.
    Eigen::Index lead = 0;
    while (lead < p.size() && std::abs(p[lead]) < 1e-14 * scale)
        ++lead;
    const auto M = p.size() - 1 - lead;
    if (M < 1)
        return {};
    if (M == 1)
        return {-p[lead + 1] / p[lead]};

    Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(M, M);
    for (Eigen::Index k = 0; k < M; ++k)
        companion(0, k) = -p[lead + k + 1] / p[lead];
    for (Eigen::Index k = 1; k < M; ++k)
        companion(k, k - 1) = 1.0;

    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(companion, false);
    if (es.info() != Eigen::Success)
        throw NumericalError("polynomial_roots: eigenvalue iteration failed for " + echo(p));
    const auto& ev = es.eigenvalues();
    std::vector<cplx> roots(ev.data(), ev.data() + ev.size());

    // Newton polishing; a step is kept only if it lowers |p(z)|.
    const auto eval = [&](cplx z, cplx& deriv) {
        cplx v = p[lead];
        deriv = 0.0;
        for (Eigen::Index n = lead + 1; n < p.size(); ++n) {
            deriv = deriv * z + v;
            v = v * z + p[n];
        }
        return v;
    };
    for (auto& z : roots) {
        for (int it = 0; it < 4; ++it) {
            cplx d;
            const cplx v = eval(z, d);
            if (v == 0.0 || d == 0.0)
                break;
            const cplx next = z - v / d;
            cplx unused;
            if (!(std::abs(eval(next, unused)) < std::abs(v)))
                break;
            z = next;
        }
    }
    return roots;
}

ExponentialModel instants_from_roots(std::vector<cplx> xi, double step, std::size_t length)
{
    const double w0 = two_pi / static_cast<double>(length);
    std::vector<std::pair<double, cplx>> tagged;
    tagged.reserve(xi.size());
    for (const auto& r : xi) {
        double theta = -std::arg(r);
        if (theta < 0.0)
            theta += two_pi;
        if (theta >= two_pi)
            theta -= two_pi;
        tagged.emplace_back(step * theta / w0, r);
    }
    std::sort(tagged.begin(), tagged.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    ExponentialModel m;
    for (const auto& [t, r] : tagged) {
        m.t.push_back(t);
        m.xi.push_back(r);
    }
    m.c.assign(m.xi.size(), 0.0);
    return m;
}

ExponentialModel roots_and_instants(const Eigen::VectorXcd& p, double step, std::size_t length)
{
    return instants_from_roots(polynomial_roots(p), step, length);
}

std::size_t auto_pencil_parameter(std::size_t samples, std::size_t order)
{
    if (samples < 2 * order)
        throw UndersampledError("matrix_pencil: need at least 2M samples");
    return std::clamp(samples / 3, order, samples - order);
}

std::vector<cplx> matrix_pencil(std::span<const cplx> z, std::size_t order, std::size_t pencil)
{
    const std::size_t L = z.size();
    if (order == 0)
        return {};
    if (L < 2 * order)
        throw UndersampledError("matrix_pencil: " + std::to_string(L) +
                                " samples cannot identify " + std::to_string(order) +
                                " exponentials");
    if (pencil < order || pencil > L - order)
        throw ArgumentError("matrix_pencil: pencil parameter " + std::to_string(pencil) +
                            " outside [M, L - M]");

    const auto rows = static_cast<Eigen::Index>(L - pencil);
    const auto cols = static_cast<Eigen::Index>(pencil);
    const auto M = static_cast<Eigen::Index>(order);
    Eigen::MatrixXcd y0(rows, cols);
    Eigen::MatrixXcd y1(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) {
            y0(i, j) = z[static_cast<std::size_t>(i + j)];
            y1(i, j) = z[static_cast<std::size_t>(i + j + 1)];
        }

    Eigen::BDCSVD<Eigen::MatrixXcd> svd(y0, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    if (!(s[M - 1] > 0.0))
        throw NumericalError("matrix_pencil: rank of the data matrix is below M");

    const Eigen::MatrixXcd u = svd.matrixU().leftCols(M);
    const Eigen::MatrixXcd v = svd.matrixV().leftCols(M);
    const Eigen::VectorXd inv_s = s.head(M).cwiseInverse();
    const Eigen::MatrixXcd reduced = u.adjoint() * y1 * v * inv_s.asDiagonal();

    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(reduced, false);
    if (es.info() != Eigen::Success)
        throw NumericalError("matrix_pencil: eigenvalue iteration failed");
    const auto& ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

AmplitudeFit amplitudes_ls(const OutOfBand& z, std::span<const cplx> xi)
{
    const std::size_t M = xi.size();
    const std::size_t N = z.size();
    if (M == 0)
        throw ArgumentError("amplitudes_ls: need at least one root");
    if (N < M)
        throw UndersampledError("amplitudes_ls: fewer equations than unknowns");
    for (std::size_t a = 0; a < M; ++a)
        for (std::size_t b = a + 1; b < M; ++b)
            if (std::abs(xi[a] - xi[b]) < 1e-10)
                throw DegenerateRootsError("amplitudes_ls: duplicate roots " +
                                           std::to_string(a) + " and " + std::to_string(b));

    // Stack real and imaginary parts so the unknowns stay real.
    Eigen::MatrixXd a(2 * N, M);
    Eigen::VectorXd rhs(2 * N);
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
            const cplx e = power(xi[m], z.index[i]);
            a(2 * i, m) = e.real();
            a(2 * i + 1, m) = e.imag();
        }
        rhs(2 * i) = z.value[i].real();
        rhs(2 * i + 1) = z.value[i].imag();
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < static_cast<Eigen::Index>(M))
        throw DegenerateRootsError("amplitudes_ls: Vandermonde system is rank deficient");
    const Eigen::VectorXd c = qr.solve(rhs);

    AmplitudeFit fit;
    fit.c.assign(c.data(), c.data() + c.size());
    fit.residual = (a * c - rhs).norm();
    return fit;
}

std::vector<cplx> grid_roots(std::span<const std::size_t> bins, std::size_t length)
{
    const double w0 = two_pi / static_cast<double>(length);
    std::vector<cplx> roots;
    roots.reserve(bins.size());
    for (auto k : bins)
        roots.push_back(std::polar(1.0, -w0 * static_cast<double>(k)));
    return roots;
}

SupportRefinement refine_support(const OutOfBand& z, std::vector<std::size_t> bins,
                                 std::size_t reach, double tol)
{
    std::sort(bins.begin(), bins.end());
    const double znorm = std::sqrt(std::accumulate(
        z.value.begin(), z.value.end(), 0.0, [](double a, cplx v) { return a + std::norm(v); }));
    const double target = tol * std::max(znorm, 1e-300);

    SupportRefinement out;
    out.bins = bins;
    out.fit = amplitudes_ls(z, grid_roots(bins, z.length));

    const auto L = static_cast<long>(z.length);
    bool improved = true;
    while (improved && out.fit.residual > target) {
        improved = false;
        for (std::size_t m = 0; m < out.bins.size(); ++m) {
            for (long d = 1; d <= static_cast<long>(reach); ++d) {
                for (long sign : {-1L, 1L}) {
                    const long moved = (static_cast<long>(out.bins[m]) + sign * d + L) % L;
                    const auto k = static_cast<std::size_t>(moved);
                    if (std::find(out.bins.begin(), out.bins.end(), k) != out.bins.end())
                        continue;
                    auto cand = out.bins;
                    cand[m] = k;
                    AmplitudeFit fit;
                    try {
                        fit = amplitudes_ls(z, grid_roots(cand, z.length));
                    } catch (const NumericalError&) {
                        continue;
                    }
                    if (fit.residual < out.fit.residual * (1.0 - 1e-9)) {
                        out.bins = std::move(cand);
                        out.fit = std::move(fit);
                        ++out.moves;
                        improved = true;
                    }
                }
            }
        }
    }
    // Keep bins sorted; amplitudes follow their bins.
    std::vector<std::size_t> order(out.bins.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return out.bins[a] < out.bins[b]; });
    std::vector<std::size_t> sorted_bins;
    std::vector<double> sorted_c;
    for (auto i : order) {
        sorted_bins.push_back(out.bins[i]);
        sorted_c.push_back(out.fit.c[i]);
    }
    out.bins = std::move(sorted_bins);
    out.fit.c = std::move(sorted_c);
    return out;
}

Eigen::VectorXd toeplitz_singular_values(const OutOfBand& z, std::size_t order, std::size_t start)
{
    if (start + 2 * order > z.size())
        throw UndersampledError("toeplitz_singular_values: block exceeds available samples");
    const auto t = build_toeplitz(std::span(z.value).subspan(start, 2 * order), order);
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(t).singularValues();
}

std::size_t estimate_spike_count(const OutOfBand& z, std::size_t max_order, double ratio)
{
    const std::size_t L = z.size();
    if (L < 2)
        return 0;
    const std::size_t order = std::min(max_order, L / 2);
    if (order == 0)
        return 0;
    // Tall Toeplitz: rows use every available lag.
    const auto rows = static_cast<Eigen::Index>(L - order);
    const auto cols = static_cast<Eigen::Index>(order + 1);
    Eigen::MatrixXcd t(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            t(i, j) = z.value[static_cast<std::size_t>(i + static_cast<Eigen::Index>(order) - j)];
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXcd>(t).singularValues();
    if (!(s[0] > 0.0))
        return 0;
    for (Eigen::Index m = 1; m < s.size(); ++m)
        if (s[m] / s[m - 1] < ratio)
            return static_cast<std::size_t>(m);
    return order;
}

} // namespace usf
