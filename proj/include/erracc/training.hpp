#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "erracc/dataset.hpp"
#include "erracc/forecast.hpp"
#include "erracc/losses.hpp"
#include "erracc/mlp.hpp"
#include "erracc/windows.hpp"

namespace erracc::training {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 256;
    std::int64_t batches_per_epoch = 0;  // 0: train_rows / batch_size
    int val_windows = 4096;

    double lr_body = 3e-4;
    double lr_sigma_head = 1e-7;   // sigma-head rate after the drop epoch
    int sigma_lr_drop_epoch = -1;  // 0-based epoch the drop takes effect; -1 = never

    double lambda = 0.0;          // KL penalty weight
    int horizon = 1;              // n: target offsets sampled uniformly in 1..n
    double noise_fraction = 0.0;  // share of each batch with corrupted inputs
    int noise_start_epoch = 0;    // 0-based first epoch with corruption
    data::NoiseSchedule noise;

    int rollout_len = 1;  // K, rollout objective only
    bool rollout_stop_gradient = true;
    std::int64_t rollout_max_elems = 1 << 22;  // guard on K * batch * dim

    int hidden_layers = 3;
    int hidden_width = 32;

    int t_max = 200;  // CTS lead cap
    forecast::CapPolicy cap_policy = forecast::CapPolicy::Freeze;

    std::uint64_t seed = 0;

    void validate() const {
        if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw ConfigError("TrainConfig: lambda must be finite and >= 0");
        if (noise_fraction < 0.0 || noise_fraction > 1.0)
            throw ConfigError("TrainConfig: noise_fraction must be in [0,1]");
        if (noise_start_epoch > epochs)
            throw ConfigError("TrainConfig: noise_start_epoch must be <= epochs");
        if (horizon < 1) throw ConfigError("TrainConfig: horizon must be >= 1");
        if (t_max < 1) throw ConfigError("TrainConfig: t_max must be >= 1");
    }
};

struct EpochRecord {
    int epoch = 0;
    double train_nll = 0.0;
    double train_penalty = 0.0;  // mean KL penalty value (pre-lambda weighting)
    double val_nll = 0.0;
    double wall_s = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    bool diverged = false;
    int best_epoch = -1;  // set when validation-based selection applied (CTS)
    std::string checkpoint_path;
};

struct TrainedAr {
    forecast::ArModel<float> model;
    TrainReport report;
};
struct TrainedCts {
    forecast::CtsModel<float> model;
    TrainReport report;
};

// Direct-horizon model: minimizes NLL of x_{s+t} given (x_s, t/t_max) with t
// uniform in 1..t_max. Keeps the best-validation epoch's weights.
TrainedCts train_cts(const data::Dataset& ds, const TrainConfig& cfg);

// One-step maximum likelihood; identical to the lambda = 0, noise-free
// regularized path, bit for bit.
TrainedAr train_ar_mle(const data::Dataset& ds, const TrainConfig& cfg);

// K-step rollout objective: the model consumes its own samples; fed-back
// states carry no gradient by default (config flag enables full backprop).
TrainedAr train_ar_rollout(const data::Dataset& ds, const TrainConfig& cfg);

// NLL at the (possibly noise-corrupted) previous state plus
// (lambda/n) * KL(gen conditional || frozen CTS conditional at (context, t)).
TrainedAr train_ar_regularized(const data::Dataset& ds, const forecast::CtsModel<float>& cts,
                               const TrainConfig& cfg);

// Noise corruption without the penalty (lambda forced to 0, no CTS needed).
TrainedAr train_ar_noise_only(const data::Dataset& ds, const TrainConfig& cfg);

// ---- templated objective core (double instantiation drives the finite-
// ---- difference oracle) ------------------------------------------------------

template <class S>
struct Eq5Batch {
    MatX<S> prev;       // AR input, possibly corrupted, standardized
    MatX<S> target;     // x_{t+c}
    MatX<S> cts_mean;   // frozen-reference conditional (absolute mean), empty if lambda = 0
    MatX<S> cts_sigma;
};

struct LossTerms {
    double nll = 0.0;
    double penalty = 0.0;  // batch-mean KL, before the lambda/n weight
    double total(double lambda, int horizon) const {
        return nll + lambda / horizon * penalty;
    }
};

// Loss and parameter gradients of the one-step regularized objective.
// `grads` must be zeroed (or hold values to accumulate onto).
template <class S>
LossTerms eq5_loss_and_grads(const nn::MlpConfig& cfg, const nn::Parameters<S>& params,
                             const Eq5Batch<S>& batch, double lambda, int horizon,
                             nn::Gradients<S>& grads) {
    nn::ForwardTape<S> tape;
    const auto raw = nn::forward(cfg, params, batch.prev, &tape);
    nn::GaussianPrediction<S> cond{batch.prev + raw.mean, raw.sigma};

    LossTerms terms;
    terms.nll = nn::gaussian_nll(cond, batch.target);
    MatX<S> d_mean = MatX<S>::Zero(cond.mean.rows(), cond.mean.cols());
    MatX<S> d_sigma = MatX<S>::Zero(cond.mean.rows(), cond.mean.cols());
    nn::gaussian_nll_backward(cond, batch.target, 1.0, d_mean, d_sigma);
    if (lambda > 0.0) {
        nn::GaussianPrediction<S> ref{batch.cts_mean, batch.cts_sigma};
        terms.penalty = nn::gaussian_kl_batch(cond, ref);
        nn::gaussian_kl_backward_gen(cond, ref, lambda / horizon, d_mean, d_sigma);
    }
    nn::backward(cfg, params, tape, d_mean, d_sigma, grads);
    return terms;
}

// CTS objective: conditional mean is context + predicted residual.
template <class S>
double cts_loss_and_grads(const nn::MlpConfig& cfg, const nn::Parameters<S>& params,
                          const MatX<S>& net_input, const MatX<S>& context,
                          const MatX<S>& target, nn::Gradients<S>& grads) {
    nn::ForwardTape<S> tape;
    const auto raw = nn::forward(cfg, params, net_input, &tape);
    nn::GaussianPrediction<S> cond{context + raw.mean, raw.sigma};
    const double nll = nn::gaussian_nll(cond, target);
    MatX<S> d_mean = MatX<S>::Zero(cond.mean.rows(), cond.mean.cols());
    MatX<S> d_sigma = MatX<S>::Zero(cond.mean.rows(), cond.mean.cols());
    nn::gaussian_nll_backward(cond, target, 1.0, d_mean, d_sigma);
    nn::backward(cfg, params, tape, d_mean, d_sigma, grads);
    return nll;
}

}  // namespace erracc::training
