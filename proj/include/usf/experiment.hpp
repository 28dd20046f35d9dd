#pragma once

#include "usf/capture.hpp"
#include "usf/folding.hpp"
#include "usf/recovery.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace usf {

using KeyValues = std::map<std::string, std::string>;

enum class MethodChoice { fp, usf, both };
enum class CalibrationMode { mean, none };

/// Random trigonometric polynomial folded by a (possibly non-ideal) modulo ADC.
struct SyntheticSource {
    int bandwidth = 5;
    double tau = 1.0;
    double amplitude = 5.0;
    std::uint64_t seed = 1;
    NonIdeality nonideality;
};

struct ExperimentConfig {
    std::optional<SyntheticSource> synthetic; ///< set: synthetic source; empty: capture
    std::filesystem::path input;              ///< capture path

    std::size_t K = 0;        ///< synthetic sample count
    int P = -1;               ///< recovery bandwidth; -1 picks the signal's (or the capture's) P
    double p_inflation = 0.2; ///< applied to capture bandwidths
    std::optional<std::size_t> M;

    MethodChoice method = MethodChoice::both;
    std::optional<Estimator> estimator; ///< empty: pencil for captures or quantized data, else prony
    PencilParam pencil;
    DiffMode mode = DiffMode::circular;
    ToeplitzRows toeplitz = ToeplitzRows::all_lags;
    long block_offset = 0; ///< used with ToeplitzRows::centered_block
    int bits = 0; ///< 0 disables quantization

    double lambda = 1.0;
    std::optional<double> beta_g;
    std::optional<LambdaGrid> lambda_grid; ///< empty: LambdaGrid::around(lambda)
    bool optimize_lambda = true;
    CalibrationMode calibration = CalibrationMode::mean;

    std::filesystem::path output_dir;

    /// Flat key/value form (every field except output_dir). Round-trips
    /// through from_kv.
    KeyValues to_kv() const;
    /// Unspecified keys keep their defaults. Unknown keys, malformed values
    /// and invalid combinations raise ArgumentError.
    static ExperimentConfig from_kv(const KeyValues& kv);
    void validate() const;

    Estimator effective_estimator() const;
};

/// Keys accepted by sweep() as an axis.
const std::vector<std::string>& numeric_config_keys();

struct SyntheticTrial {
    TrigPolynomial signal;
    SampleVector gamma;   ///< unfolded samples
    SampleVector folded;  ///< y
    SampleVector residue; ///< gamma - y
    std::size_t folds;    ///< spikes the Fourier-domain recovery must be told
};

/// Samples `src` with K points per period, folds at `lambda` and applies the
/// configured non-idealities (seeded from src.seed).
SyntheticTrial simulate_trial(const SyntheticSource& src, std::size_t K, double lambda,
                              DiffMode mode = DiffMode::circular);

/// Input data of an experiment after quantization and DC removal.
struct ExperimentData {
    SampleVector folded;
    std::optional<SampleVector> truth;
    std::optional<std::size_t> exact_folds; ///< synthetic sources only
    double tau = 0.0;
    int signal_bandwidth = -1; ///< known for synthetic sources and simulated captures
    std::size_t saturated = 0;
    double quant_step = 0.0;
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);

/// Synthetic capture (truth and modulo channels) for the `simulate` command.
CaptureFile simulate_capture(const ExperimentConfig& cfg);

/// Runs the configured recoveries and returns the metrics record. When
/// cfg.output_dir is set, writes metrics.txt, reconstruction.csv and
/// spectrum.csv there; on failure none of them is left behind.
KeyValues run_experiment(const ExperimentConfig& cfg);

struct SweepRow {
    double value = 0.0;
    bool ok = false;
    std::string error;
    KeyValues metrics;
};

/// Runs one experiment per value of `axis` concurrently. With `out_root` set,
/// each run writes into out_root/<axis>=<value>/ and the aggregate table goes
/// to out_root/sweep.csv. Rows come back sorted by value; failures are kept
/// in their row.
std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& axis,
                            std::vector<double> values,
                            const std::filesystem::path& out_root = {});

/// `key=value` lines, sorted by key.
std::string format_kv(const KeyValues& kv);
/// Inverse of format_kv; ignores blank and `#` lines.
KeyValues parse_kv(const std::string& text);
KeyValues read_kv_file(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_double(double v);

} // namespace usf
