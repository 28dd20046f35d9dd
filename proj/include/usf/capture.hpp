#pragma once

#include "usf/signal_model.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace usf {

/// One exported acquisition: a uniformly sampled modulo channel and, when the
/// input was probed as well, the unfolded ground truth.
struct CaptureFile {
    std::vector<double> time;
    std::vector<double> modulo;
    std::optional<std::vector<double>> truth;
    double step = 0.0;      ///< T
    double tau = 0.0;       ///< period covered by the capture
    double dc_offset = 0.0; ///< already subtracted from `modulo`
    std::map<std::string, std::string> metadata;

    std::size_t size() const noexcept { return modulo.size(); }
    UniformGrid grid() const { return {step, modulo.size()}; }
    SampleVector modulo_samples() const { return {modulo, grid()}; }
    std::optional<SampleVector> truth_samples() const;
};

/// Reads a capture CSV:
///
///     # tau = 0.001
///     # dc_offset = 0.05
///     time,truth,modulo
///     0,0.12,0.12
///     ...
///
/// `#` lines carry `key = value` (or `key: value`) metadata. Recognized keys:
/// `tau` (default K*T), `T` (default from the timestamps) and `dc_offset`
/// (subtracted from the modulo column). Columns are matched by name; `time`
/// and `modulo` are mandatory. Timestamps must be uniform to 1e-6 relative.
CaptureFile load_capture(const std::filesystem::path& path);

/// Writes the format accepted by load_capture. The modulo column is written
/// with the DC offset added back.
void write_capture(const std::filesystem::path& path, const CaptureFile& capture);

} // namespace usf
