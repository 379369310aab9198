#pragma once

#include <cmath>
#include <numbers>

#include "erracc/mlp.hpp"

namespace erracc::nn {

inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

// Negative log-likelihood of `target` under the diagonal Gaussian batch,
// summed over dimensions and averaged over the batch. Accumulated in double.
template <class S>
double gaussian_nll(const GaussianPrediction<S>& pred, const MatX<S>& target) {
    if (pred.mean.rows() != target.rows() || pred.mean.cols() != target.cols())
        throw ConfigError("gaussian_nll: shape mismatch");
    if ((pred.sigma.array() < S(kSigmaMin)).any() || (pred.sigma.array() > S(kSigmaMax)).any())
        throw NumericError("gaussian_nll: sigma outside clamp bounds");
    const Index b = pred.mean.rows();
    double total = 0.0;
    for (Index r = 0; r < b; ++r) {
        for (Index c = 0; c < pred.mean.cols(); ++c) {
            const double sd = static_cast<double>(pred.sigma(r, c));
            const double res = static_cast<double>(target(r, c) - pred.mean(r, c));
            total += std::log(sd) + kHalfLog2Pi + res * res / (2.0 * sd * sd);
        }
    }
    return total / static_cast<double>(b);
}

// Accumulates scale * d(batch-mean NLL)/d{mean,sigma} into d_mean/d_sigma.
template <class S>
void gaussian_nll_backward(const GaussianPrediction<S>& pred, const MatX<S>& target, double scale,
                           MatX<S>& d_mean, MatX<S>& d_sigma) {
    const S w = static_cast<S>(scale / static_cast<double>(pred.mean.rows()));
    const MatX<S> inv_var = pred.sigma.cwiseProduct(pred.sigma).cwiseInverse();
    const MatX<S> res = pred.mean - target;
    d_mean += w * res.cwiseProduct(inv_var);
    // d/dsigma = 1/sigma - res^2/sigma^3
    d_sigma += w * (pred.sigma.cwiseInverse() -
                    res.cwiseProduct(res).cwiseProduct(inv_var).cwiseQuotient(pred.sigma));
}

// Batch-mean KL( N(gen) || N(ref) ) for diagonal Gaussians, summed over dims.
template <class S>
double gaussian_kl_batch(const GaussianPrediction<S>& gen, const GaussianPrediction<S>& ref) {
    if (gen.mean.rows() != ref.mean.rows() || gen.mean.cols() != ref.mean.cols())
        throw ConfigError("gaussian_kl_batch: shape mismatch");
    const Index b = gen.mean.rows();
    double total = 0.0;
    for (Index r = 0; r < b; ++r) {
        for (Index c = 0; c < gen.mean.cols(); ++c) {
            const double s1 = static_cast<double>(gen.sigma(r, c));
            const double s2 = static_cast<double>(ref.sigma(r, c));
            const double dm = static_cast<double>(gen.mean(r, c) - ref.mean(r, c));
            total += std::log(s2 / s1) + (s1 * s1 + dm * dm) / (2.0 * s2 * s2) - 0.5;
        }
    }
    return total / static_cast<double>(b);
}

// Accumulates scale * d(batch-mean KL)/d{gen mean, gen sigma}; the reference
// side receives no gradient.
template <class S>
void gaussian_kl_backward_gen(const GaussianPrediction<S>& gen, const GaussianPrediction<S>& ref,
                              double scale, MatX<S>& d_mean, MatX<S>& d_sigma) {
    const S w = static_cast<S>(scale / static_cast<double>(gen.mean.rows()));
    const MatX<S> inv_ref_var = ref.sigma.cwiseProduct(ref.sigma).cwiseInverse();
    d_mean += w * (gen.mean - ref.mean).cwiseProduct(inv_ref_var);
    d_sigma += w * (gen.sigma.cwiseProduct(inv_ref_var) - gen.sigma.cwiseInverse());
}

}  // namespace erracc::nn
