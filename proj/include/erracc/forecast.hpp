#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "erracc/common.hpp"
#include "erracc/dataset.hpp"
#include "erracc/mlp.hpp"
#include "erracc/rng.hpp"

namespace erracc::forecast {

// Members whose standardized state leaves this range are frozen at the
// sentinel and flagged; metrics stay finite while the explosion stays visible.
inline constexpr double kExplodeThreshold = 1e6;

enum class CapPolicy { Freeze, ReAnchor };

inline std::string cap_policy_name(CapPolicy p) {
    return p == CapPolicy::Freeze ? "freeze" : "re-anchor";
}
inline CapPolicy cap_policy_from_name(const std::string& s) {
    if (s == "freeze") return CapPolicy::Freeze;
    if (s == "re-anchor") return CapPolicy::ReAnchor;
    throw ConfigError("unknown cap policy '" + s + "'");
}

// Autoregressive sampler: x_{t+1} = x_t + mean(x_t) + sigma(x_t) * eps,
// in standardized units.
template <class S>
struct ArModel {
    nn::MlpConfig cfg;
    nn::Parameters<S> params;
};

// Direct-horizon sampler: x_{t} = x_anchor + mean(x_anchor, t) + sigma(...) * eps
// with the lead time fed as an extra input feature t / t_max in (0, 1].
template <class S>
struct CtsModel {
    nn::MlpConfig cfg;  // input_dim = D + 1
    nn::Parameters<S> params;
    int t_max = 0;
    CapPolicy policy = CapPolicy::Freeze;
};

struct RandomWalkBaseline {};  // unit-variance standardized random walk

// Lead-time-independent reference reflecting the climatological distribution,
// in raw units.
struct ClimatologyCts {
    double mean = 2.5;
    double scale = 6.25;
};

// [members x leads x dims] samples in raw units for one initial condition.
// Storage is member-major: values(n, t*dims + d).
struct ForecastEnsemble {
    int members = 0;
    int leads = 0;
    int dims = 0;
    std::string model_tag;
    int ic_id = 0;
    std::uint64_t seed = 0;
    MatrixXd values;
    // First lead at which the member exploded; leads >= that index are
    // sentinel-frozen and excluded from fits. -1 = never.
    std::vector<int> exploded_from;

    static ForecastEnsemble create(int members, int leads, int dims, std::string model_tag,
                                   int ic_id, std::uint64_t seed);

    double value(int n, int t, int d) const { return values(n, t * dims + d); }
    bool usable(int n, int t) const {
        return exploded_from[n] < 0 || t < exploded_from[n];
    }
    int usable_count(int t) const;
    int exploded_members() const;
};

struct SampleOptions {
    bool sample_noise = true;  // false: emit conditional means (zero-noise path)
};

// Per-dimension sample mean and population std over usable members at one lead.
struct GaussianFit {
    VectorXd mean;
    VectorXd std;  // floored at 1e-8
    int used = 0;
};

inline constexpr double kFitStdFloor = 1e-8;

GaussianFit fit_ensemble_gaussian(const ForecastEnsemble& ens, int t);
std::optional<GaussianFit> try_fit_ensemble_gaussian(const ForecastEnsemble& ens, int t);

ForecastEnsemble random_walk_rollout(const VectorXd& ic_raw, const data::Standardizer& st, int T,
                                     int N, std::uint64_t seed, int ic_id);

ForecastEnsemble climatology_forecast(const ClimatologyCts& model, int dims, int T, int N,
                                      std::uint64_t seed, int ic_id);

// Binary [N x T x D] float64 dump plus a JSON sidecar.
void save_ensemble(const std::filesystem::path& prefix, const ForecastEnsemble& ens);
ForecastEnsemble load_ensemble(const std::filesystem::path& prefix);

namespace detail {

// Clamp a freshly sampled standardized state; returns true when the member
// exploded at this step.
template <class Row>
bool clamp_exploded(Row&& row) {
    bool exploded = false;
    for (Index d = 0; d < row.size(); ++d) {
        const double v = static_cast<double>(row[d]);
        if (!std::isfinite(v)) {
            row[d] = static_cast<std::decay_t<decltype(row[d])>>(kExplodeThreshold);
            exploded = true;
        } else if (std::abs(v) > kExplodeThreshold) {
            row[d] = static_cast<std::decay_t<decltype(row[d])>>(
                v > 0 ? kExplodeThreshold : -kExplodeThreshold);
            exploded = true;
        }
    }
    return exploded;
}

inline std::uint64_t member_stream_seed(std::uint64_t seed, int ic_id, int member) {
    return mix_seed(seed, 0xf0c5, static_cast<std::uint64_t>(ic_id),
                    static_cast<std::uint64_t>(member));
}

}  // namespace detail

// Rolls each member independently for T steps from the standardized IC;
// the output is destandardized. Exploded members freeze at the sentinel.
template <class S>
ForecastEnsemble ar_rollout(const ArModel<S>& model, const VectorXd& ic_raw,
                            const data::Standardizer& st, int T, int N, std::uint64_t seed,
                            int ic_id, SampleOptions opt = {}) {
    if (T < 1 || N < 1) throw ConfigError("ar_rollout: T and N must be >= 1");
    const int d = static_cast<int>(ic_raw.size());
    if (model.cfg.input_dim != d || model.cfg.output_dim != d)
        throw ConfigError("ar_rollout: model dims do not match state dim");
    ForecastEnsemble ens = ForecastEnsemble::create(N, T, d, "ar", ic_id, seed);

    std::vector<RngStream> streams;
    streams.reserve(N);
    for (int n = 0; n < N; ++n)
        streams.emplace_back(detail::member_stream_seed(seed, ic_id, n));

    const VecX<S> ic_std = st.standardize(ic_raw).cast<S>();
    MatX<S> state(N, d);
    for (int n = 0; n < N; ++n) state.row(n) = ic_std.transpose();

    MatX<S> net_in(N, d);
    for (int t = 0; t < T; ++t) {
        for (int n = 0; n < N; ++n) {
            if (ens.usable(n, t))
                net_in.row(n) = state.row(n);
            else
                net_in.row(n).setZero();  // frozen member; output ignored
        }
        const auto pred = nn::forward(model.cfg, model.params, net_in);
        for (int n = 0; n < N; ++n) {
            if (!ens.usable(n, t)) {
                for (int j = 0; j < d; ++j)
                    ens.values(n, t * d + j) =
                        st.destandardize(state.row(n).transpose().template cast<double>())[j];
                continue;
            }
            for (int j = 0; j < d; ++j) {
                const double eps = opt.sample_noise ? streams[n].gaussian() : 0.0;
                state(n, j) += pred.mean(n, j) + pred.sigma(n, j) * static_cast<S>(eps);
            }
            if (detail::clamp_exploded(state.row(n))) ens.exploded_from[n] = t;
            const VectorXd raw = st.destandardize(state.row(n).transpose().template cast<double>());
            for (int j = 0; j < d; ++j) ens.values(n, t * d + j) = raw[j];
        }
    }
    return ens;
}

// Direct-horizon sampling. For leads past the cap, Freeze keeps sampling the
// t_max conditional anchored on the IC; ReAnchor reuses the member's own
// t_max sample as a new anchor and conditions on it with lead t - t_max
// (the cap is consumed once; deeper leads saturate at the t_max feature).
template <class S>
ForecastEnsemble cts_forecast(const CtsModel<S>& model, const VectorXd& ic_raw,
                              const data::Standardizer& st, int T, int N, std::uint64_t seed,
                              int ic_id, SampleOptions opt = {}) {
    if (T < 1 || N < 1) throw ConfigError("cts_forecast: T and N must be >= 1");
    if (model.t_max < 1) throw ConfigError("cts_forecast: t_max must be >= 1");
    const int d = static_cast<int>(ic_raw.size());
    if (model.cfg.input_dim != d + 1 || model.cfg.output_dim != d)
        throw ConfigError("cts_forecast: model dims do not match state dim");
    ForecastEnsemble ens = ForecastEnsemble::create(N, T, d, "cts", ic_id, seed);

    std::vector<RngStream> streams;
    streams.reserve(N);
    for (int n = 0; n < N; ++n)
        streams.emplace_back(detail::member_stream_seed(seed, ic_id, n));

    const VecX<S> ic_std = st.standardize(ic_raw).cast<S>();
    MatX<S> anchor(N, d);
    for (int n = 0; n < N; ++n) anchor.row(n) = ic_std.transpose();

    MatX<S> net_in(N, d + 1);
    MatX<S> sample(N, d);
    for (int t1 = 1; t1 <= T; ++t1) {
        int lead = t1;
        if (t1 > model.t_max) {
            lead = (model.policy == CapPolicy::Freeze) ? model.t_max
                                                       : std::min(t1 - model.t_max, model.t_max);
        }
        const S feature = static_cast<S>(static_cast<double>(lead) / model.t_max);
        const int t = t1 - 1;
        for (int n = 0; n < N; ++n) {
            if (ens.usable(n, t))
                net_in.row(n).head(d) = anchor.row(n);
            else
                net_in.row(n).head(d).setZero();  // frozen member; output ignored
            net_in(n, d) = feature;
        }
        const auto pred = nn::forward(model.cfg, model.params, net_in);
        for (int n = 0; n < N; ++n) {
            if (!ens.usable(n, t)) {
                // anchor holds the sentinel state once the member exploded
                const VectorXd raw =
                    st.destandardize(anchor.row(n).transpose().template cast<double>());
                for (int j = 0; j < d; ++j) ens.values(n, t * d + j) = raw[j];
                continue;
            }
            for (int j = 0; j < d; ++j) {
                const double eps = opt.sample_noise ? streams[n].gaussian() : 0.0;
                sample(n, j) = anchor(n, j) + pred.mean(n, j) + pred.sigma(n, j) * static_cast<S>(eps);
            }
            if (detail::clamp_exploded(sample.row(n))) {
                ens.exploded_from[n] = t;
                anchor.row(n) = sample.row(n);
            } else if (model.policy == CapPolicy::ReAnchor && t1 == model.t_max) {
                anchor.row(n) = sample.row(n);
            }
            const VectorXd raw = st.destandardize(sample.row(n).transpose().template cast<double>());
            for (int j = 0; j < d; ++j) ens.values(n, t * d + j) = raw[j];
        }
    }
    return ens;
}

}  // namespace erracc::forecast
