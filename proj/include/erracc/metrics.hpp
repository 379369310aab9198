#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "erracc/common.hpp"
#include "erracc/forecast.hpp"

namespace erracc::metrics {

// Per-location weights a_i, normalized to unit mean (identically 1 for the
// Lorenz systems; kept generic so any location grid plugs in).
struct LocationWeights {
    VectorXd a;

    static LocationWeights unit(int dims) { return {VectorXd::Ones(dims)}; }

    void validate() const {
        if ((a.array() <= 0.0).any()) throw ConfigError("LocationWeights: weights must be > 0");
        if (std::abs(a.mean() - 1.0) > 1e-12)
            throw ConfigError("LocationWeights: weights must have unit mean");
    }
};

// One metric as a function of lead time, with optional bootstrap band.
struct MetricCurve {
    std::string system;
    std::string model;
    std::string metric;
    std::string variable;  // dimension name or "all"
    std::vector<int> lead;
    std::vector<double> value;
    std::vector<double> lo;  // NaN where absent
    std::vector<double> hi;
    std::vector<std::string> flags;  // per-point; empty string = none
    int n_ic = 0;
    int n_members = 0;
};

using EnsembleSet = std::vector<forecast::ForecastEnsemble>;  // one entry per IC
using TruthSet = std::vector<MatrixXd>;                       // per IC: [leads x dims], raw units

// ---- scalar building blocks -------------------------------------------------

// KL( N(mu1, sigma1^2) || N(mu2, sigma2^2) ), closed form.
double gaussian_kl(double mu1, double sigma1, double mu2, double sigma2);
// Sum over independent dimensions.
double gaussian_kl(const VectorXd& mu1, const VectorXd& sigma1, const VectorXd& mu2,
                   const VectorXd& sigma2);

// CRPS of a single observation. The ensemble estimator is
// mean|X - y| - 0.5 * mean|X - X'| over all member pairs.
double crps_ensemble(std::span<const double> members, double truth);
double crps_gaussian(double mu, double sigma, double truth);

// Discrete KL over matching histograms: sum p_i log(p_i / q_i).
double discrete_kl(const VectorXd& p, const VectorXd& q);

// Histogram KL between two sample sets: common equal-width bins spanning the
// pooled min/max, probabilities additively smoothed (1e-6/bin) and
// renormalized. Zero pooled range degenerates to 0.
double histogram_kl(std::span<const double> gen, std::span<const double> cts, int bins);

// ---- per-IC components (NaN marks a skipped IC) -----------------------------

struct SkipStats {
    int skipped_ics = 0;
    int floored_cells = 0;
    int degenerate_cells = 0;
};

// Location-weighted mean squared error of the usable-member ensemble mean.
// `dim` restricts to one dimension (unweighted); -1 averages over locations.
VectorXd per_ic_mse(const EnsembleSet& ens, const TruthSet& truth, int t,
                    const LocationWeights& w, SkipStats* stats = nullptr, int dim = -1);

// Location-weighted mean member variance (population denominator).
VectorXd per_ic_spread_var(const EnsembleSet& ens, int t, const LocationWeights& w,
                           SkipStats* stats = nullptr, int dim = -1);

VectorXd per_ic_crps(const EnsembleSet& ens, const TruthSet& truth, int t,
                     const LocationWeights& w, SkipStats* stats = nullptr);

// Mean over locations of sqrt(variance / squared error), denominator floored.
VectorXd per_ic_ss_per_location(const EnsembleSet& ens, const TruthSet& truth, int t,
                                const LocationWeights& w, SkipStats* stats = nullptr);

// Gaussian-fit KL(gen || cts) per IC at one lead; `dim` selects one dimension
// or, when -1, the mean over dimensions (sum/dims).
VectorXd per_ic_err_acc_gauss(const EnsembleSet& gen, const EnsembleSet& cts, int t, int dim,
                              SkipStats* stats = nullptr);

VectorXd per_ic_err_acc_hist(const EnsembleSet& gen, const EnsembleSet& cts, int t, int bins,
                             int dim, SkipStats* stats = nullptr);

// ---- aggregations ------------------------------------------------------------

double nan_mean(const VectorXd& v);

double ensemble_mean_rmse(const EnsembleSet& ens, const TruthSet& truth, int t,
                          const LocationWeights& w);

struct SpreadSkill {
    double spread = 0.0;
    double skill = 0.0;
    double ratio = 0.0;
    bool skill_floored = false;  // skill below 1e-12: ratio is a flagged sentinel (0)
};
SpreadSkill spread_and_skill(const EnsembleSet& ens, const TruthSet& truth, int t,
                             const LocationWeights& w);

double spread_skill_per_location(const EnsembleSet& ens, const TruthSet& truth, int t,
                                 const LocationWeights& w, SkipStats* stats = nullptr);

double error_accum_gaussian(const EnsembleSet& gen, const EnsembleSet& cts, int t,
                            SkipStats* stats = nullptr);
double error_accum_histogram(const EnsembleSet& gen, const EnsembleSet& cts, int t, int bins,
                             SkipStats* stats = nullptr);

// ---- bootstrap ---------------------------------------------------------------

struct Band {
    double lo = 0.0;
    double hi = 0.0;
};

// Resamples IC rows with replacement, applies `reduce` to each replicate, and
// returns the level-appropriate percentiles (2.5/97.5 for level 0.95).
Band bootstrap_band(const MatrixXd& per_ic, const std::function<double(const MatrixXd&)>& reduce,
                    int replicates, double level, std::uint64_t seed);

// Convenience form: band for the NaN-skipping mean of per-IC values.
Band bootstrap_band(const VectorXd& per_ic, int replicates, double level, std::uint64_t seed);

}  // namespace erracc::metrics
