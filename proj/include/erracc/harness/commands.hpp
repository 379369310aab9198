#pragma once

#include <filesystem>
#include <string>

#include "erracc/harness/config.hpp"
#include "erracc/metrics.hpp"

namespace erracc::harness {

// Generates and persists the truth dataset; returns the in-memory observed view.
data::Dataset cmd_gen_data(const ExperimentConfig& cfg);

// Trains one roster model, writes its checkpoint and JSONL train report.
training::TrainReport cmd_train(const ExperimentConfig& cfg, const std::string& kind);

// Builds ensembles for the whole roster over test-split ICs, computes every
// metric curve with bootstrap bands, writes the CSV and run metadata.
std::vector<metrics::MetricCurve> cmd_evaluate(const ExperimentConfig& cfg);

// Renders SVG figures from a metrics CSV; returns the number of figures.
int cmd_report(const std::filesystem::path& csv, const std::filesystem::path& out_dir);

// Paper-gap decisions in force; recorded in every run's metadata.
const std::vector<std::string>& active_decisions();

}  // namespace erracc::harness
