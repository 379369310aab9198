#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "erracc/common.hpp"
#include "erracc/rng.hpp"

namespace erracc::nn {

// Emitted scales are clamped to this range; the floor keeps the NLL bounded.
inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kSigmaMax = 1e3;

struct MlpConfig {
    int input_dim = 0;
    int hidden_layers = 0;
    int hidden_width = 0;
    int output_dim = 0;  // per head; the net emits mean and raw scale of this size

    void validate() const {
        if (input_dim < 1 || output_dim < 1)
            throw ConfigError("MlpConfig: input/output dims must be >= 1");
        if (hidden_layers < 1 || hidden_width < 1)
            throw ConfigError("MlpConfig: depth and width must be >= 1");
    }
};

// Hidden stack plus two linear heads. The sigma head (w_sigma, b_sigma) forms
// its own parameter group so its learning rate can be scheduled independently
// of the body.
template <class S>
struct Parameters {
    std::vector<MatX<S>> w;  // [width x fan_in] per hidden layer
    std::vector<VecX<S>> b;
    MatX<S> w_mean, w_sigma;  // [output_dim x width]
    VecX<S> b_mean, b_sigma;

    Index total_size() const {
        Index n = 0;
        for (const auto& m : w) n += m.size();
        for (const auto& v : b) n += v.size();
        return n + w_mean.size() + b_mean.size() + w_sigma.size() + b_sigma.size();
    }

    // Fixed flattening order (column-major within each tensor):
    // w[0], b[0], ..., w[L-1], b[L-1], w_mean, b_mean, w_sigma, b_sigma.
    template <class Fn>
    void for_each_tensor(Fn&& fn) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            fn(w[i], /*sigma_head=*/false);
            fn(b[i], false);
        }
        fn(w_mean, false);
        fn(b_mean, false);
        fn(w_sigma, true);
        fn(b_sigma, true);
    }
    template <class Fn>
    void for_each_tensor(Fn&& fn) const {
        const_cast<Parameters*>(this)->for_each_tensor(
            [&fn](auto& t, bool sh) { fn(const_cast<const std::decay_t<decltype(t)>&>(t), sh); });
    }

    VecX<S> to_flat() const {
        VecX<S> flat(total_size());
        Index at = 0;
        for_each_tensor([&](const auto& t, bool) {
            flat.segment(at, t.size()) = Eigen::Map<const VecX<S>>(t.data(), t.size());
            at += t.size();
        });
        return flat;
    }

    void from_flat(const VecX<S>& flat) {
        Index at = 0;
        for_each_tensor([&](auto& t, bool) {
            Eigen::Map<VecX<S>>(t.data(), t.size()) = flat.segment(at, t.size());
            at += t.size();
        });
    }
};

template <class S>
using Gradients = Parameters<S>;  // identical shape; reused for Adam moments too

template <class S>
Parameters<S> zero_like(const MlpConfig& cfg) {
    cfg.validate();
    Parameters<S> p;
    p.w.reserve(cfg.hidden_layers);
    p.b.reserve(cfg.hidden_layers);
    int fan_in = cfg.input_dim;
    for (int i = 0; i < cfg.hidden_layers; ++i) {
        p.w.push_back(MatX<S>::Zero(cfg.hidden_width, fan_in));
        p.b.push_back(VecX<S>::Zero(cfg.hidden_width));
        fan_in = cfg.hidden_width;
    }
    p.w_mean = MatX<S>::Zero(cfg.output_dim, cfg.hidden_width);
    p.b_mean = VecX<S>::Zero(cfg.output_dim);
    p.w_sigma = MatX<S>::Zero(cfg.output_dim, cfg.hidden_width);
    p.b_sigma = VecX<S>::Zero(cfg.output_dim);
    return p;
}

// Glorot-uniform weights, zero biases. The raw-sigma bias starts at zero so
// the initial scale is exp(0) = 1 in standardized units.
template <class S>
Parameters<S> init_params(const MlpConfig& cfg, std::uint64_t seed) {
    Parameters<S> p = zero_like<S>(cfg);
    RngStream rng(mix_seed(seed, 0x111));
    auto fill = [&rng](MatX<S>& m) {
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        for (Index r = 0; r < m.rows(); ++r)
            for (Index c = 0; c < m.cols(); ++c)
                m(r, c) = static_cast<S>(limit * (2.0 * rng.uniform() - 1.0));
    };
    for (auto& w : p.w) fill(w);
    fill(p.w_mean);
    fill(p.w_sigma);
    return p;
}

// Diagonal Gaussian conditional for a batch: one row per example.
template <class S>
struct GaussianPrediction {
    MatX<S> mean;   // [B x D]
    MatX<S> sigma;  // [B x D], inside [kSigmaMin, kSigmaMax]
};

template <class S>
struct ForwardTape {
    MatX<S> input;
    std::vector<MatX<S>> act;  // post-ELU hidden activations
    MatX<S> sigma;             // clamped scales, for the exp/clamp backward
};

template <class S>
S elu(S x) {
    return x > S(0) ? x : std::expm1(x);
}

// Forward pass; records activations into `tape` when provided.
// Throws NumericError if the outputs leave the finite range (diverged training).
template <class S>
GaussianPrediction<S> forward(const MlpConfig& cfg, const Parameters<S>& params,
                              const MatX<S>& input, ForwardTape<S>* tape = nullptr) {
    if (input.cols() != cfg.input_dim)
        throw ConfigError("mlp forward: input dim " + std::to_string(input.cols()) +
                          " != configured " + std::to_string(cfg.input_dim));
    if (tape) {
        tape->input = input;
        tape->act.clear();
        tape->act.reserve(cfg.hidden_layers);
    }
    MatX<S> h = input;
    for (int i = 0; i < cfg.hidden_layers; ++i) {
        h = ((h * params.w[i].transpose()).rowwise() + params.b[i].transpose())
                .unaryExpr([](S x) { return elu(x); });
        if (tape) tape->act.push_back(h);
    }
    GaussianPrediction<S> out;
    out.mean = (h * params.w_mean.transpose()).rowwise() + params.b_mean.transpose();
    MatX<S> raw = (h * params.w_sigma.transpose()).rowwise() + params.b_sigma.transpose();
    out.sigma = raw.unaryExpr([](S x) {
        const S s = std::exp(x);
        if (s < S(kSigmaMin)) return S(kSigmaMin);
        if (s > S(kSigmaMax)) return S(kSigmaMax);
        return s;
    });
    if (!out.mean.allFinite() || !out.sigma.allFinite())
        throw NumericError("mlp forward: non-finite outputs (diverged parameters?)");
    if (tape) tape->sigma = out.sigma;
    return out;
}

// Reverse pass. `d_mean` and `d_sigma` are the loss gradients w.r.t. the head
// outputs (sigma post-clamp); parameter gradients are accumulated into `grads`.
// When `d_input` is given it receives the gradient w.r.t. the input batch.
template <class S>
void backward(const MlpConfig& cfg, const Parameters<S>& params, const ForwardTape<S>& tape,
              const MatX<S>& d_mean, const MatX<S>& d_sigma, Gradients<S>& grads,
              MatX<S>* d_input = nullptr) {
    // d/draw = d/dsigma * sigma inside the clamp, 0 where the clamp is active.
    MatX<S> d_raw =
        d_sigma.cwiseProduct(tape.sigma.unaryExpr([](S s) {
            return (s > S(kSigmaMin) && s < S(kSigmaMax)) ? s : S(0);
        }));

    const MatX<S>& h_last = tape.act.back();
    grads.w_mean.noalias() += d_mean.transpose() * h_last;
    grads.b_mean += d_mean.colwise().sum().transpose();
    grads.w_sigma.noalias() += d_raw.transpose() * h_last;
    grads.b_sigma += d_raw.colwise().sum().transpose();

    MatX<S> d_act = d_mean * params.w_mean + d_raw * params.w_sigma;
    for (int i = cfg.hidden_layers - 1; i >= 0; --i) {
        // ELU'(x) = 1 for x>0, exp(x) = act+1 otherwise.
        MatX<S> d_pre = d_act.cwiseProduct(
            tape.act[i].unaryExpr([](S a) { return a > S(0) ? S(1) : a + S(1); }));
        const MatX<S>& in = (i == 0) ? tape.input : tape.act[i - 1];
        grads.w[i].noalias() += d_pre.transpose() * in;
        grads.b[i] += d_pre.colwise().sum().transpose();
        if (i > 0)
            d_act.noalias() = d_pre * params.w[i];
        else if (d_input)
            d_input->noalias() = d_pre * params.w[0];
    }
}

template <class S>
struct AdamState {
    Gradients<S> m, v;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr_body = 3e-4;
    double lr_sigma_head = 3e-4;

    static AdamState make(const MlpConfig& cfg, double lr_body, double lr_sigma_head) {
        AdamState s;
        s.m = zero_like<S>(cfg);
        s.v = zero_like<S>(cfg);
        s.lr_body = lr_body;
        s.lr_sigma_head = lr_sigma_head;
        return s;
    }
};

// Standard Adam with bias correction; each tensor uses its group's learning rate.
template <class S>
void adam_step(AdamState<S>& state, Parameters<S>& params, const Gradients<S>& grads) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    auto update = [&](auto& theta, auto& m, auto& v, const auto& g, bool sigma_head) {
        const S lr = static_cast<S>(sigma_head ? state.lr_sigma_head : state.lr_body);
        const S b1 = static_cast<S>(state.beta1);
        const S b2 = static_cast<S>(state.beta2);
        m = b1 * m + (S(1) - b1) * g;
        v = b2 * v + (S(1) - b2) * g.cwiseProduct(g);
        theta.array() -=
            lr * (m.array() / static_cast<S>(bc1)) /
            ((v.array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(state.eps));
    };

    for (std::size_t i = 0; i < params.w.size(); ++i) {
        update(params.w[i], state.m.w[i], state.v.w[i], grads.w[i], false);
        update(params.b[i], state.m.b[i], state.v.b[i], grads.b[i], false);
    }
    update(params.w_mean, state.m.w_mean, state.v.w_mean, grads.w_mean, false);
    update(params.b_mean, state.m.b_mean, state.v.b_mean, grads.b_mean, false);
    update(params.w_sigma, state.m.w_sigma, state.v.w_sigma, grads.w_sigma, true);
    update(params.b_sigma, state.m.b_sigma, state.v.b_sigma, grads.b_sigma, true);
}

}  // namespace erracc::nn
