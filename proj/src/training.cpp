#include "erracc/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace erracc::training {

namespace {

using S = float;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Frozen-CTS conditional at (context, t): absolute mean and scale.
void cts_conditional(const forecast::CtsModel<S>& cts, const MatX<S>& context,
                     const Eigen::VectorXi& offsets, MatX<S>& mean, MatX<S>& sigma) {
    const Index b = context.rows();
    const Index d = context.cols();
    MatX<S> in(b, d + 1);
    in.leftCols(d) = context;
    for (Index i = 0; i < b; ++i)
        in(i, d) = static_cast<S>(static_cast<double>(offsets[i]) / cts.t_max);
    const auto raw = nn::forward(cts.cfg, cts.params, in);
    mean = context + raw.mean;
    sigma = raw.sigma;
}

std::vector<data::WindowBatch<S>> make_val_batches(const data::Dataset& ds,
                                                   const TrainConfig& cfg, int horizon) {
    data::WindowSampler<S> sampler(ds, data::Split::Val, horizon, mix_seed(cfg.seed, 0x7a1));
    std::vector<data::WindowBatch<S>> out;
    int remaining = cfg.val_windows;
    while (remaining > 0) {
        const int b = std::min(remaining, cfg.batch_size);
        out.push_back(sampler.next(b));
        remaining -= b;
    }
    return out;
}

double ar_val_nll(const nn::MlpConfig& mcfg, const nn::Parameters<S>& params,
                  const std::vector<data::WindowBatch<S>>& val) {
    double total = 0.0;
    Index rows = 0;
    for (const auto& batch : val) {
        const auto raw = nn::forward(mcfg, params, batch.prev);
        nn::GaussianPrediction<S> cond{batch.prev + raw.mean, raw.sigma};
        total += nn::gaussian_nll(cond, batch.target) * static_cast<double>(batch.size());
        rows += batch.size();
    }
    return total / static_cast<double>(rows);
}

double cts_val_nll(const forecast::CtsModel<S>& model,
                   const std::vector<data::WindowBatch<S>>& val) {
    double total = 0.0;
    Index rows = 0;
    for (const auto& batch : val) {
        MatX<S> mean, sigma;
        cts_conditional(model, batch.context, batch.offsets, mean, sigma);
        total +=
            nn::gaussian_nll({mean, sigma}, batch.target) * static_cast<double>(batch.size());
        rows += batch.size();
    }
    return total / static_cast<double>(rows);
}

std::int64_t steps_per_epoch(const data::Dataset& ds, const TrainConfig& cfg) {
    if (cfg.batches_per_epoch > 0) return cfg.batches_per_epoch;
    return std::max<std::int64_t>(1, ds.splits.train_size() / cfg.batch_size);
}

void zero_grads(nn::Gradients<S>& g) {
    g.for_each_tensor([](auto& t, bool) { t.setZero(); });
}

double sigma_head_lr(const TrainConfig& cfg, int epoch) {
    const bool dropped = cfg.sigma_lr_drop_epoch >= 0 && epoch >= cfg.sigma_lr_drop_epoch;
    return dropped ? cfg.lr_sigma_head : cfg.lr_body;
}

TrainedAr train_ar_common(const data::Dataset& ds, const forecast::CtsModel<S>* cts,
                          const TrainConfig& cfg) {
    cfg.validate();
    if (cfg.lambda > 0.0 && cts == nullptr)
        throw ConfigError("train_ar_regularized: lambda > 0 requires a CTS model");
    if (cts != nullptr && cfg.horizon > cts->t_max)
        throw ConfigError("train_ar_regularized: horizon exceeds the CTS lead cap");
    const int d = ds.observed_dim();
    const nn::MlpConfig mcfg{d, cfg.hidden_layers, cfg.hidden_width, d};
    if (cts != nullptr && cts->cfg.input_dim != d + 1)
        throw ConfigError("train_ar_regularized: CTS input dim does not match dataset");

    TrainedAr out;
    out.model.cfg = mcfg;
    out.model.params = nn::init_params<S>(mcfg, mix_seed(cfg.seed, 0x1417));
    if (cfg.epochs == 0) return out;

    auto adam = nn::AdamState<S>::make(mcfg, cfg.lr_body, cfg.lr_body);
    data::WindowSampler<S> sampler(ds, data::Split::Train, cfg.horizon,
                                   mix_seed(cfg.seed, 0x3a2b));
    RngStream noise_rng(mix_seed(cfg.seed, 0x5e5e));
    const auto val = make_val_batches(ds, cfg, cfg.horizon);
    const std::int64_t steps = steps_per_epoch(ds, cfg);

    nn::Gradients<S> grads = nn::zero_like<S>(mcfg);
    nn::Parameters<S> last_good = out.model.params;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = Clock::now();
        adam.lr_body = cfg.lr_body;
        adam.lr_sigma_head = sigma_head_lr(cfg, epoch);
        const bool noise_on = cfg.noise_fraction > 0.0 && epoch >= cfg.noise_start_epoch;
        double nll_sum = 0.0, pen_sum = 0.0;
        for (std::int64_t b = 0; b < steps; ++b) {
            auto batch = sampler.next(cfg.batch_size);
            if (noise_on) data::corrupt_with_noise(batch, cfg.noise, cfg.noise_fraction, noise_rng);
            Eq5Batch<S> eb;
            if (cfg.lambda > 0.0)
                cts_conditional(*cts, batch.context, batch.offsets, eb.cts_mean, eb.cts_sigma);
            eb.prev = std::move(batch.prev);
            eb.target = std::move(batch.target);
            zero_grads(grads);
            LossTerms terms;
            try {
                terms = eq5_loss_and_grads(mcfg, out.model.params, eb, cfg.lambda, cfg.horizon,
                                           grads);
            } catch (const NumericError&) {
                terms.nll = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(terms.total(cfg.lambda, cfg.horizon))) {
                out.model.params = last_good;  // abort with the last good checkpoint
                out.report.diverged = true;
                return out;
            }
            nn::adam_step(adam, out.model.params, grads);
            nll_sum += terms.nll;
            pen_sum += terms.penalty;
        }
        last_good = out.model.params;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_nll = nll_sum / static_cast<double>(steps);
        rec.train_penalty = pen_sum / static_cast<double>(steps);
        rec.val_nll = ar_val_nll(mcfg, out.model.params, val);
        rec.wall_s = seconds_since(t0);
        out.report.epochs.push_back(rec);
    }
    return out;
}

}  // namespace

TrainedCts train_cts(const data::Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    const int d = ds.observed_dim();
    const nn::MlpConfig mcfg{d + 1, cfg.hidden_layers, cfg.hidden_width, d};

    TrainedCts out;
    out.model.cfg = mcfg;
    out.model.params = nn::init_params<S>(mcfg, mix_seed(cfg.seed, 0xc75));
    out.model.t_max = cfg.t_max;
    out.model.policy = cfg.cap_policy;
    if (cfg.epochs == 0) return out;

    auto adam = nn::AdamState<S>::make(mcfg, cfg.lr_body, cfg.lr_body);
    data::WindowSampler<S> sampler(ds, data::Split::Train, cfg.t_max, mix_seed(cfg.seed, 0x3a2b));
    const auto val = make_val_batches(ds, cfg, cfg.t_max);
    const std::int64_t steps = steps_per_epoch(ds, cfg);

    nn::Gradients<S> grads = nn::zero_like<S>(mcfg);
    nn::Parameters<S> last_good = out.model.params;
    nn::Parameters<S> best = out.model.params;
    double best_val = std::numeric_limits<double>::infinity();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = Clock::now();
        adam.lr_body = cfg.lr_body;
        adam.lr_sigma_head = sigma_head_lr(cfg, epoch);
        double nll_sum = 0.0;
        for (std::int64_t b = 0; b < steps; ++b) {
            const auto batch = sampler.next(cfg.batch_size);
            const Index bs = batch.size();
            MatX<S> in(bs, d + 1);
            in.leftCols(d) = batch.context;
            for (Index i = 0; i < bs; ++i)
                in(i, d) = static_cast<S>(static_cast<double>(batch.offsets[i]) / cfg.t_max);
            zero_grads(grads);
            double nll;
            try {
                nll = cts_loss_and_grads(mcfg, out.model.params, in, batch.context, batch.target,
                                         grads);
            } catch (const NumericError&) {
                nll = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(nll)) {
                out.model.params = last_good;
                out.report.diverged = true;
                return out;
            }
            nn::adam_step(adam, out.model.params, grads);
            nll_sum += nll;
        }
        last_good = out.model.params;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_nll = nll_sum / static_cast<double>(steps);
        rec.val_nll = cts_val_nll({mcfg, out.model.params, cfg.t_max, cfg.cap_policy}, val);
        rec.wall_s = seconds_since(t0);
        out.report.epochs.push_back(rec);
        if (rec.val_nll < best_val) {  // validation-based selection, CTS only
            best_val = rec.val_nll;
            best = out.model.params;
            out.report.best_epoch = epoch;
        }
    }
    out.model.params = best;
    return out;
}

TrainedAr train_ar_mle(const data::Dataset& ds, const TrainConfig& cfg) {
    TrainConfig plain = cfg;  // lambda and noise are ignored on the MLE path
    plain.lambda = 0.0;
    plain.noise_fraction = 0.0;
    return train_ar_common(ds, nullptr, plain);
}

TrainedAr train_ar_regularized(const data::Dataset& ds, const forecast::CtsModel<float>& cts,
                               const TrainConfig& cfg) {
    return train_ar_common(ds, &cts, cfg);
}

TrainedAr train_ar_noise_only(const data::Dataset& ds, const TrainConfig& cfg) {
    TrainConfig c = cfg;
    c.lambda = 0.0;
    return train_ar_common(ds, nullptr, c);
}

TrainedAr train_ar_rollout(const data::Dataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    const int k = cfg.rollout_len;
    if (k < 1) throw ConfigError("train_ar_rollout: rollout length must be >= 1");
    const int d = ds.observed_dim();
    if (static_cast<std::int64_t>(k) * cfg.batch_size * d > cfg.rollout_max_elems)
        throw ConfigError("train_ar_rollout: K*batch exceeds the configured memory limit");
    const nn::MlpConfig mcfg{d, cfg.hidden_layers, cfg.hidden_width, d};

    TrainedAr out;
    out.model.cfg = mcfg;
    out.model.params = nn::init_params<S>(mcfg, mix_seed(cfg.seed, 0x1417));
    if (cfg.epochs == 0) return out;

    auto adam = nn::AdamState<S>::make(mcfg, cfg.lr_body, cfg.lr_body);
    data::SegmentSampler<S> sampler(ds, data::Split::Train, k, mix_seed(cfg.seed, 0x3a2b));
    RngStream feedback_rng(mix_seed(cfg.seed, 0xf33d));
    const auto val = make_val_batches(ds, cfg, 1);
    const std::int64_t steps = steps_per_epoch(ds, cfg);

    nn::Gradients<S> grads = nn::zero_like<S>(mcfg);
    nn::Parameters<S> last_good = out.model.params;

    std::vector<nn::ForwardTape<S>> tapes(k);
    std::vector<MatX<S>> d_means(k), d_sigmas(k), epsilons(k);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = Clock::now();
        adam.lr_body = cfg.lr_body;
        adam.lr_sigma_head = sigma_head_lr(cfg, epoch);
        double nll_sum = 0.0;
        for (std::int64_t b = 0; b < steps; ++b) {
            const auto seg = sampler.next(cfg.batch_size);
            const Index bs = seg.size();
            MatX<S> state = seg.steps[0];
            zero_grads(grads);
            double nll_total = 0.0;
            bool dead = false;
            for (int j = 0; j < k && !dead; ++j) {
                nn::GaussianPrediction<S> raw;
                try {
                    raw = nn::forward(mcfg, out.model.params, state, &tapes[j]);
                } catch (const NumericError&) {
                    dead = true;
                    break;
                }
                nn::GaussianPrediction<S> cond{state + raw.mean, raw.sigma};
                nll_total += nn::gaussian_nll(cond, seg.steps[j + 1]);
                d_means[j].setZero(bs, d);
                d_sigmas[j].setZero(bs, d);
                nn::gaussian_nll_backward(cond, seg.steps[j + 1], 1.0 / k, d_means[j],
                                          d_sigmas[j]);
                if (cfg.rollout_stop_gradient)
                    nn::backward(mcfg, out.model.params, tapes[j], d_means[j], d_sigmas[j], grads);
                if (j + 1 < k) {
                    // feed back the model's own sample; constant under the
                    // stop-gradient treatment
                    epsilons[j].resize(bs, d);
                    for (Index r = 0; r < bs; ++r)
                        for (int c = 0; c < d; ++c)
                            epsilons[j](r, c) = static_cast<S>(feedback_rng.gaussian());
                    state = cond.mean + cond.sigma.cwiseProduct(epsilons[j]);
                    if (!state.allFinite()) dead = true;
                }
            }
            if (!cfg.rollout_stop_gradient && !dead) {
                // full reparameterized backprop: chain gradients through the
                // fed-back states z_{j+1} = cond_mean_j + sigma_j * eps_j
                MatX<S> d_carry = MatX<S>::Zero(bs, d);
                for (int j = k - 1; j >= 0; --j) {
                    MatX<S> dm = d_means[j] + d_carry;
                    MatX<S> dsig = d_sigmas[j];
                    if (j + 1 < k) dsig += d_carry.cwiseProduct(epsilons[j]);
                    MatX<S> d_input(bs, d);
                    nn::backward(mcfg, out.model.params, tapes[j], dm, dsig, grads, &d_input);
                    d_carry = dm + d_input;  // identity path plus through-net path
                }
            }
            nll_total /= k;
            if (dead || !std::isfinite(nll_total)) {
                out.model.params = last_good;
                out.report.diverged = true;
                return out;
            }
            nn::adam_step(adam, out.model.params, grads);
            nll_sum += nll_total;
        }
        last_good = out.model.params;
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_nll = nll_sum / static_cast<double>(steps);
        rec.val_nll = ar_val_nll(mcfg, out.model.params, val);
        rec.wall_s = seconds_since(t0);
        out.report.epochs.push_back(rec);
    }
    return out;
}

}  // namespace erracc::training
