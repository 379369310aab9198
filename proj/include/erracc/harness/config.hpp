#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "erracc/common.hpp"
#include "erracc/dataset.hpp"
#include "erracc/forecast.hpp"
#include "erracc/training.hpp"

namespace erracc::harness {

// Model roster tags. The trainable kinds map onto the training module; the
// last two are analytic baselines.
inline const std::vector<std::string> kTrainableKinds = {"cts",       "gen",         "gen-rollout",
                                                         "gen-noise", "gen-penalty", "gen-ours"};
inline const std::vector<std::string> kAnalyticKinds = {"random-walk", "climatology"};

bool is_trainable_kind(const std::string& kind);
bool is_roster_kind(const std::string& kind);

struct EvalConfig {
    std::vector<std::string> models;
    std::string reference = "cts";
    int n_ic = 100;
    int n_members = 40;
    int horizon = 300;
    int bootstrap = 100;
    double level = 0.95;
    int hist_bins = 30;
    int stride = 1;  // lead-time grid stride for metric curves
    forecast::ClimatologyCts climatology;
};

struct ExperimentConfig {
    SystemKind system = SystemKind::L63;
    std::uint64_t seed = 1;
    int threads = 1;
    std::filesystem::path out_dir = "out";
    std::filesystem::path dataset;  // prefix for <prefix>.f64 / <prefix>.meta.json
    data::DataProtocol data;
    std::map<std::string, training::TrainConfig> train;  // keyed by trainable kind
    EvalConfig eval;

    std::filesystem::path checkpoint_path(const std::string& kind) const;
    std::filesystem::path train_report_path(const std::string& kind) const;
    std::filesystem::path csv_path() const;
    std::filesystem::path run_meta_path(const std::string& command) const;

    const training::TrainConfig& train_config(const std::string& kind) const;
};

// Fully populated defaults for one system. "paper" carries the published
// protocol; "desk" shrinks data, epochs and (for l96) network sizes so the
// whole pipeline fits in a laptop-scale run.
ExperimentConfig preset_config(SystemKind system, const std::string& preset, std::uint64_t seed);

// Preset defaults -> JSON file overrides -> CLI overrides, in that order.
// Any of the paths/values may be empty/unset.
ExperimentConfig resolve_config(const std::optional<std::string>& system_arg,
                                const std::string& preset,
                                const std::optional<std::filesystem::path>& config_file,
                                const std::optional<std::uint64_t>& seed_override,
                                const std::optional<std::string>& out_override);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
void apply_json_overrides(ExperimentConfig& cfg, const nlohmann::json& j);

// FNV-1a hash of the canonical JSON dump; recorded in run metadata.
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Seed for one model's sampling/training streams, derived from the experiment
// seed and the model tag so rosters stay reproducible member by member.
std::uint64_t model_seed(std::uint64_t base, const std::string& tag);

}  // namespace erracc::harness
