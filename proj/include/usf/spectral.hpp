#pragma once

#include "usf/folding.hpp"
#include "usf/signal_model.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace usf {

/// Unnormalized DFT of a (differenced) sample sequence.
struct SpectralData {
    std::vector<cplx> bins;
    DiffMode mode = DiffMode::circular;

    std::size_t length() const noexcept { return bins.size(); }
    /// 2 pi / L, in radians per bin per sample.
    double base_freq() const noexcept;
};

/// bins[n] = sum_k x[k] exp(-j 2 pi n k / L).
SpectralData forward_dft(std::span<const double> x, DiffMode mode = DiffMode::circular);
std::vector<cplx> forward_dft_complex(std::span<const cplx> x);
/// Conjugate transform divided by L.
std::vector<cplx> inverse_dft(std::span<const cplx> bins);

struct BandPartition {
    std::vector<std::size_t> in_band;  ///< [0, P] U [L-P, L-1]
    std::vector<std::size_t> out_band; ///< P+1 .. L-P-1
};

BandPartition band_partition(std::size_t length, int bandwidth);

/// Out-of-band DFT samples, each paired with its original bin index.
/// On this set the bins equal minus the transform of the differenced residue.
struct OutOfBand {
    std::vector<std::size_t> index;
    std::vector<cplx> value;
    std::size_t length = 0; ///< transform length L

    std::size_t size() const noexcept { return value.size(); }
};

OutOfBand extract_out_of_band(const SpectralData& spectrum, int bandwidth);

/// M x (M+1) Toeplitz matrix, row i / column j holding x[i - j] where the
/// 2M inputs are x[-M] .. x[M-1].
Eigen::MatrixXcd build_toeplitz(std::span<const cplx> x, std::size_t order);

/// (L_z - M) x (M+1) Toeplitz matrix over every valid lag of the contiguous
/// samples x[0..L_z-1]: row i / column j holds x[i + M - j].
Eigen::MatrixXcd build_toeplitz_all_lags(std::span<const cplx> x, std::size_t order);

/// Pick 2M contiguous out-of-band samples centered at L/2 (+ offset), clamped
/// to stay inside the band. Returns the sub-span start within `z`.
std::size_t toeplitz_block_start(const OutOfBand& z, std::size_t order, long offset = 0);

struct Annihilator {
    Eigen::VectorXcd coeffs;        ///< p[0..M], p[M] == 1 unless fallback
    double sigma_min = 0.0;         ///< smallest singular value
    double sigma_ratio = 0.0;       ///< sigma_min / sigma_max
    bool normalization_fallback = false;
};

/// Null vector of an R x (M+1) Toeplitz matrix (R >= M) via SVD, normalized
/// so p[M] = 1.
Annihilator annihilator(const Eigen::MatrixXcd& toeplitz);

/// Parameters of sum_m c_m xi_m^n.
struct ExponentialModel {
    std::vector<cplx> xi;
    std::vector<double> c;
    std::vector<double> t; ///< instants in seconds

    std::size_t size() const noexcept { return xi.size(); }
    /// True when every |xi| lies in [0.99, 1.01].
    bool roots_near_unit_circle() const noexcept;
};

/// Roots of sum_n p[n] z^{M-n} (companion-matrix eigenvalues). Leading
/// coefficients below 1e-14 of the largest are treated as roots at infinity
/// and dropped.
std::vector<cplx> polynomial_roots(const Eigen::VectorXcd& p);

/// Instants t = T * (-angle(xi) mod 2 pi) / w0 for a length-L transform, sorted.
ExponentialModel roots_and_instants(const Eigen::VectorXcd& p, double step, std::size_t length);
/// Same mapping for roots that are already known.
ExponentialModel instants_from_roots(std::vector<cplx> xi, double step, std::size_t length);

/// Pencil parameter selection.
struct PencilParam {
    enum class Kind { automatic, fixed, search } kind = Kind::automatic;
    std::size_t value = 0;

    static PencilParam automatic() { return {}; }
    static PencilParam fixed(std::size_t q) { return {Kind::fixed, q}; }
    static PencilParam search() { return {Kind::search, 0}; }
};

/// floor(L_z / 3) clamped to [M, L_z - M].
std::size_t auto_pencil_parameter(std::size_t samples, std::size_t order);

/// Matrix-pencil estimate of the M roots from contiguous samples
/// z[0..L_z-1] = sum_m c_m xi_m^n with width-Q Hankel matrices.
std::vector<cplx> matrix_pencil(std::span<const cplx> z, std::size_t order, std::size_t pencil);

struct AmplitudeFit {
    std::vector<double> c;
    double residual = 0.0; ///< || z - V c ||_2
};

/// Real least-squares amplitudes of z[n] = sum_m c_m xi_m^n over the given indices.
AmplitudeFit amplitudes_ls(const OutOfBand& z, std::span<const cplx> xi);

struct SupportRefinement {
    std::vector<std::size_t> bins; ///< sorted grid indices of the exponentials
    AmplitudeFit fit;
    std::size_t moves = 0;
};

/// Local search over on-grid instants: repeatedly shifts single instants by up
/// to `reach` bins when that lowers the amplitude-fit residual. Stops early
/// once the residual falls below `tol * ||z||`.
SupportRefinement refine_support(const OutOfBand& z, std::vector<std::size_t> bins,
                                 std::size_t reach = 2, double tol = 1e-11);

/// exp(-j 2 pi k / L) for every bin.
std::vector<cplx> grid_roots(std::span<const std::size_t> bins, std::size_t length);

/// Heuristic number of exponentials: the first m where sigma_{m+1}/sigma_m of an
/// oversized Toeplitz matrix falls below `ratio`. Diagnostic only.
std::size_t estimate_spike_count(const OutOfBand& z, std::size_t max_order, double ratio = 1e-3);

/// Singular values (descending) of the Toeplitz matrix built from the block at `start`.
Eigen::VectorXd toeplitz_singular_values(const OutOfBand& z, std::size_t order, std::size_t start);

} // namespace usf
