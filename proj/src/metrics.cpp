#include "erracc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "erracc/rng.hpp"

namespace erracc::metrics {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kSkillFloor = 1e-12;
constexpr double kPerLocationFloor = 1e-8;
constexpr double kHistSmoothing = 1e-6;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

void check_pair(const EnsembleSet& ens, const TruthSet& truth, int t) {
    if (ens.size() != truth.size()) throw ConfigError("metrics: ensemble/truth IC count mismatch");
    if (ens.empty()) throw ConfigError("metrics: empty evaluation set");
    for (std::size_t m = 0; m < ens.size(); ++m) {
        if (t < 0 || t >= ens[m].leads) throw ConfigError("metrics: lead out of range");
        if (truth[m].rows() < ens[m].leads || truth[m].cols() != ens[m].dims)
            throw ConfigError("metrics: truth shape mismatch");
    }
}
}  // namespace

double gaussian_kl(double mu1, double sigma1, double mu2, double sigma2) {
    if (!(sigma1 > 0.0) || !(sigma2 > 0.0))
        throw ConfigError("gaussian_kl: sigmas must be positive");
    const double dm = mu1 - mu2;
    return std::log(sigma2 / sigma1) + (sigma1 * sigma1 + dm * dm) / (2.0 * sigma2 * sigma2) - 0.5;
}

double gaussian_kl(const VectorXd& mu1, const VectorXd& sigma1, const VectorXd& mu2,
                   const VectorXd& sigma2) {
    if (mu1.size() != sigma1.size() || mu1.size() != mu2.size() || mu1.size() != sigma2.size())
        throw ConfigError("gaussian_kl: dimension mismatch");
    double total = 0.0;
    for (Index d = 0; d < mu1.size(); ++d)
        total += gaussian_kl(mu1[d], sigma1[d], mu2[d], sigma2[d]);
    return total;
}

double crps_ensemble(std::span<const double> members, double truth) {
    const std::size_t n = members.size();
    if (n == 0) throw ConfigError("crps_ensemble: empty ensemble");
    double mae = 0.0;
    for (double x : members) mae += std::abs(x - truth);
    mae /= static_cast<double>(n);

    // sum_{i,j} |x_i - x_j| = 2 * sum_i (2i + 1 - n) * x_(i)  over sorted values
    std::vector<double> sorted(members.begin(), members.end());
    std::sort(sorted.begin(), sorted.end());
    double pair_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        pair_sum += (2.0 * static_cast<double>(i) + 1.0 - static_cast<double>(n)) * sorted[i];
    pair_sum *= 2.0;
    return mae - 0.5 * pair_sum / (static_cast<double>(n) * static_cast<double>(n));
}

double crps_gaussian(double mu, double sigma, double truth) {
    if (!(sigma > 0.0)) throw ConfigError("crps_gaussian: sigma must be positive");
    const double z = (truth - mu) / sigma;
    return sigma *
           (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

double discrete_kl(const VectorXd& p, const VectorXd& q) {
    if (p.size() != q.size()) throw ConfigError("discrete_kl: size mismatch");
    double total = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) throw NumericError("discrete_kl: q has zero mass where p does not");
        total += p[i] * std::log(p[i] / q[i]);
    }
    return total;
}

double histogram_kl(std::span<const double> gen, std::span<const double> cts, int bins) {
    if (bins < 1) throw ConfigError("histogram_kl: bins must be >= 1");
    if (gen.empty() || cts.empty()) throw ConfigError("histogram_kl: empty sample set");
    double lo = gen[0], hi = gen[0];
    for (double x : gen) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    for (double x : cts) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi <= lo) return 0.0;  // both sample sets degenerate at the same point

    auto histogram = [&](std::span<const double> xs) {
        VectorXd h = VectorXd::Zero(bins);
        const double width = (hi - lo) / bins;
        for (double x : xs) {
            int b = static_cast<int>((x - lo) / width);
            b = std::clamp(b, 0, bins - 1);
            h[b] += 1.0;
        }
        h /= static_cast<double>(xs.size());
        h.array() += kHistSmoothing;
        h /= h.sum();
        return h;
    };
    return discrete_kl(histogram(gen), histogram(cts));
}

VectorXd per_ic_mse(const EnsembleSet& ens, const TruthSet& truth, int t,
                    const LocationWeights& w, SkipStats* stats, int dim) {
    check_pair(ens, truth, t);
    VectorXd out(ens.size());
    for (std::size_t m = 0; m < ens.size(); ++m) {
        const auto& e = ens[m];
        if (e.usable_count(t) < 1) {
            out[m] = kNaN;
            if (stats) ++stats->skipped_ics;
            continue;
        }
        const int d_begin = dim >= 0 ? dim : 0;
        const int d_end = dim >= 0 ? dim + 1 : e.dims;
        double acc = 0.0;
        for (int d = d_begin; d < d_end; ++d) {
            double mean = 0.0;
            int used = 0;
            for (int n = 0; n < e.members; ++n) {
                if (!e.usable(n, t)) continue;
                mean += e.value(n, t, d);
                ++used;
            }
            mean /= used;
            const double err = mean - truth[m](t, d);
            acc += (dim >= 0 ? 1.0 : w.a[d]) * err * err;
        }
        out[m] = acc / (d_end - d_begin);
    }
    return out;
}

VectorXd per_ic_spread_var(const EnsembleSet& ens, int t, const LocationWeights& w,
                           SkipStats* stats, int dim) {
    VectorXd out(ens.size());
    for (std::size_t m = 0; m < ens.size(); ++m) {
        const auto& e = ens[m];
        const int used = e.usable_count(t);
        if (used < 2) {
            out[m] = kNaN;
            if (stats) ++stats->skipped_ics;
            continue;
        }
        const int d_begin = dim >= 0 ? dim : 0;
        const int d_end = dim >= 0 ? dim + 1 : e.dims;
        double acc = 0.0;
        for (int d = d_begin; d < d_end; ++d) {
            double mean = 0.0;
            for (int n = 0; n < e.members; ++n)
                if (e.usable(n, t)) mean += e.value(n, t, d);
            mean /= used;
            double var = 0.0;
            for (int n = 0; n < e.members; ++n) {
                if (!e.usable(n, t)) continue;
                const double r = e.value(n, t, d) - mean;
                var += r * r;
            }
            acc += (dim >= 0 ? 1.0 : w.a[d]) * var / used;
        }
        out[m] = acc / (d_end - d_begin);
    }
    return out;
}

VectorXd per_ic_crps(const EnsembleSet& ens, const TruthSet& truth, int t,
                     const LocationWeights& w, SkipStats* stats) {
    check_pair(ens, truth, t);
    VectorXd out(ens.size());
    std::vector<double> members;
    for (std::size_t m = 0; m < ens.size(); ++m) {
        const auto& e = ens[m];
        if (e.usable_count(t) < 1) {
            out[m] = kNaN;
            if (stats) ++stats->skipped_ics;
            continue;
        }
        double acc = 0.0;
        for (int d = 0; d < e.dims; ++d) {
            members.clear();
            for (int n = 0; n < e.members; ++n)
                if (e.usable(n, t)) members.push_back(e.value(n, t, d));
            acc += w.a[d] * crps_ensemble(members, truth[m](t, d));
        }
        out[m] = acc / e.dims;
    }
    return out;
}

VectorXd per_ic_ss_per_location(const EnsembleSet& ens, const TruthSet& truth, int t,
                                const LocationWeights& w, SkipStats* stats) {
    check_pair(ens, truth, t);
    VectorXd out(ens.size());
    for (std::size_t m = 0; m < ens.size(); ++m) {
        const auto& e = ens[m];
        const int used = e.usable_count(t);
        if (used < 2) {
            out[m] = kNaN;
            if (stats) ++stats->skipped_ics;
            continue;
        }
        double acc = 0.0;
        for (int d = 0; d < e.dims; ++d) {
            double mean = 0.0;
            for (int n = 0; n < e.members; ++n)
                if (e.usable(n, t)) mean += e.value(n, t, d);
            mean /= used;
            double var = 0.0;
            for (int n = 0; n < e.members; ++n) {
                if (!e.usable(n, t)) continue;
                const double r = e.value(n, t, d) - mean;
                var += r * r;
            }
            var /= used;
            double sq_err = (mean - truth[m](t, d)) * (mean - truth[m](t, d));
            if (sq_err < kPerLocationFloor) {
                sq_err = kPerLocationFloor;
                if (stats) ++stats->floored_cells;
            }
            acc += w.a[d] * std::sqrt(var / sq_err);
        }
        out[m] = acc / e.dims;
    }
    return out;
}

namespace {

double kl_cell_gauss(const forecast::GaussianFit& g, const forecast::GaussianFit& c, int dim) {
    if (dim >= 0) return gaussian_kl(g.mean[dim], g.std[dim], c.mean[dim], c.std[dim]);
    // independent-dimension KLs summed per the diagonal factorization, then
    // divided by D so curves stay comparable across systems
    return gaussian_kl(g.mean, g.std, c.mean, c.std) / static_cast<double>(g.mean.size());
}

}  // namespace

VectorXd per_ic_err_acc_gauss(const EnsembleSet& gen, const EnsembleSet& cts, int t, int dim,
                              SkipStats* stats) {
    if (gen.size() != cts.size()) throw ConfigError("error_accum: IC count mismatch");
    if (gen.empty()) throw ConfigError("error_accum: empty evaluation set");
    VectorXd out(gen.size());
    for (std::size_t m = 0; m < gen.size(); ++m) {
        if (gen[m].dims != cts[m].dims || t >= gen[m].leads || t >= cts[m].leads)
            throw ConfigError("error_accum: mismatched ensembles at IC " + std::to_string(m));
        const auto g = forecast::try_fit_ensemble_gaussian(gen[m], t);
        const auto c = forecast::try_fit_ensemble_gaussian(cts[m], t);
        if (!g || !c) {
            out[m] = kNaN;
            if (stats) ++stats->degenerate_cells;
            continue;
        }
        out[m] = kl_cell_gauss(*g, *c, dim);
    }
    return out;
}

VectorXd per_ic_err_acc_hist(const EnsembleSet& gen, const EnsembleSet& cts, int t, int bins,
                             int dim, SkipStats* stats) {
    if (gen.size() != cts.size()) throw ConfigError("error_accum: IC count mismatch");
    if (gen.empty()) throw ConfigError("error_accum: empty evaluation set");
    VectorXd out(gen.size());
    std::vector<double> gs, cs;
    for (std::size_t m = 0; m < gen.size(); ++m) {
        if (gen[m].dims != cts[m].dims || t >= gen[m].leads || t >= cts[m].leads)
            throw ConfigError("error_accum: mismatched ensembles at IC " + std::to_string(m));
        if (gen[m].usable_count(t) < 2 || cts[m].usable_count(t) < 2) {
            out[m] = kNaN;
            if (stats) ++stats->degenerate_cells;
            continue;
        }
        double acc = 0.0;
        const int d_begin = dim >= 0 ? dim : 0;
        const int d_end = dim >= 0 ? dim + 1 : gen[m].dims;
        for (int d = d_begin; d < d_end; ++d) {
            gs.clear();
            cs.clear();
            for (int n = 0; n < gen[m].members; ++n)
                if (gen[m].usable(n, t)) gs.push_back(gen[m].value(n, t, d));
            for (int n = 0; n < cts[m].members; ++n)
                if (cts[m].usable(n, t)) cs.push_back(cts[m].value(n, t, d));
            acc += histogram_kl(gs, cs, bins);
        }
        out[m] = acc / (d_end - d_begin);
    }
    return out;
}

double nan_mean(const VectorXd& v) {
    double acc = 0.0;
    int n = 0;
    for (Index i = 0; i < v.size(); ++i) {
        if (std::isnan(v[i])) continue;
        acc += v[i];
        ++n;
    }
    return n > 0 ? acc / n : kNaN;
}

double ensemble_mean_rmse(const EnsembleSet& ens, const TruthSet& truth, int t,
                          const LocationWeights& w) {
    return std::sqrt(nan_mean(per_ic_mse(ens, truth, t, w)));
}

SpreadSkill spread_and_skill(const EnsembleSet& ens, const TruthSet& truth, int t,
                             const LocationWeights& w) {
    SpreadSkill out;
    out.spread = std::sqrt(nan_mean(per_ic_spread_var(ens, t, w)));
    out.skill = ensemble_mean_rmse(ens, truth, t, w);
    if (out.skill < kSkillFloor) {
        out.skill_floored = true;
        out.ratio = 0.0;  // flagged sentinel, never an infinity
    } else {
        out.ratio = out.spread / out.skill;
    }
    return out;
}

double spread_skill_per_location(const EnsembleSet& ens, const TruthSet& truth, int t,
                                 const LocationWeights& w, SkipStats* stats) {
    return nan_mean(per_ic_ss_per_location(ens, truth, t, w, stats));
}

double error_accum_gaussian(const EnsembleSet& gen, const EnsembleSet& cts, int t,
                            SkipStats* stats) {
    return nan_mean(per_ic_err_acc_gauss(gen, cts, t, -1, stats));
}

double error_accum_histogram(const EnsembleSet& gen, const EnsembleSet& cts, int t, int bins,
                             SkipStats* stats) {
    return nan_mean(per_ic_err_acc_hist(gen, cts, t, bins, -1, stats));
}

Band bootstrap_band(const MatrixXd& per_ic, const std::function<double(const MatrixXd&)>& reduce,
                    int replicates, double level, std::uint64_t seed) {
    const Index m = per_ic.rows();
    if (m < 2) throw ConfigError("bootstrap_band: need at least 2 ICs");
    if (replicates < 2) throw ConfigError("bootstrap_band: need at least 2 replicates");
    RngStream rng(mix_seed(seed, 0xb007));
    std::vector<double> stats(replicates);
    MatrixXd resampled(m, per_ic.cols());
    for (int r = 0; r < replicates; ++r) {
        for (Index i = 0; i < m; ++i) resampled.row(i) = per_ic.row(rng.uniform_index(m));
        stats[r] = reduce(resampled);
    }
    std::sort(stats.begin(), stats.end());
    const double alpha = (1.0 - level) / 2.0;
    auto percentile = [&stats](double q) {
        const double pos = q * (stats.size() - 1);
        const std::size_t i = static_cast<std::size_t>(pos);
        if (i + 1 >= stats.size()) return stats.back();
        const double frac = pos - static_cast<double>(i);
        return stats[i] * (1.0 - frac) + stats[i + 1] * frac;
    };
    return {percentile(alpha), percentile(1.0 - alpha)};
}

Band bootstrap_band(const VectorXd& per_ic, int replicates, double level, std::uint64_t seed) {
    return bootstrap_band(per_ic, [](const MatrixXd& rows) { return nan_mean(rows.col(0)); },
                          replicates, level, seed);
}

}  // namespace erracc::metrics
