#pragma once

#include <filesystem>
#include <vector>

#include "erracc/metrics.hpp"

namespace erracc::harness {

// Renders one SVG per (system, variable): three panels (ensemble-mean RMSE,
// spread/skill, error-accumulation metric) with shaded confidence bands.
// Returns the number of figures written; byte-deterministic for a fixed input.
int write_report(const std::filesystem::path& out_dir,
                 const std::vector<metrics::MetricCurve>& curves);

}  // namespace erracc::harness
