#pragma once

#include <filesystem>
#include <vector>

#include "erracc/metrics.hpp"

namespace erracc::harness {

inline const std::string kCsvHeader =
    "system,model,metric,variable,lead_time,value,ci_lo,ci_hi,n_ic,n_members,flags";

// One row per curve point; value columns printed with %.17g so a reread is
// bit-exact.
void write_metric_csv(const std::filesystem::path& path,
                      const std::vector<metrics::MetricCurve>& curves);

// Throws DataError naming the 1-based line number for malformed rows.
std::vector<metrics::MetricCurve> read_metric_csv(const std::filesystem::path& path);

}  // namespace erracc::harness
