#pragma once

#include <cstdint>
#include <string>

#include "erracc/common.hpp"
#include "erracc/dataset.hpp"
#include "erracc/rng.hpp"

namespace erracc::data {

// A batch of context/target windows in standardized units, context length 1.
// Row i pairs context x_s with target x_{s+t_i} and previous state x_{s+t_i-1}.
template <class S>
struct WindowBatch {
    MatX<S> context;         // [B x D]
    MatX<S> prev;            // [B x D]
    MatX<S> target;          // [B x D]
    Eigen::VectorXi offsets; // [B], each in 1..horizon

    Index size() const { return context.rows(); }
};

// Linear-in-lead-time variance schedule for random-walk input corruption,
// var(t) = slope * t + intercept, in standardized units.
struct NoiseSchedule {
    double slope = 0.0;
    double intercept = 0.0;

    double variance(int t) const { return slope * t + intercept; }

    void validate(int horizon) const {
        for (int t = 1; t <= horizon; ++t)
            if (variance(t) < 0.0)
                throw ConfigError("NoiseSchedule: negative variance at lead step " +
                                  std::to_string(t));
    }
};

// Uniformly samples window starts from one split of an immutable dataset.
// Deterministic for a fixed seed; every emitted row index lies inside the split.
template <class S>
class WindowSampler {
public:
    WindowSampler(const Dataset& ds, Split split, int horizon, std::uint64_t seed)
        : ds_(ds), horizon_(horizon), rng_(mix_seed(seed, 0x71d0)) {
        if (horizon_ < 1) throw ConfigError("WindowSampler: horizon must be >= 1");
        auto [begin, end] = ds.split_range(split);
        begin_ = begin;
        last_start_ = end - horizon_ - 1;  // start s needs rows s .. s+horizon
        if (last_start_ < begin_)
            throw ConfigError("WindowSampler: horizon exceeds split length");
    }

    WindowBatch<S> next(Index batch_size) {
        const int d = ds_.observed_dim();
        WindowBatch<S> batch;
        batch.context.resize(batch_size, d);
        batch.prev.resize(batch_size, d);
        batch.target.resize(batch_size, d);
        batch.offsets.resize(batch_size);
        for (Index i = 0; i < batch_size; ++i) {
            const std::int64_t s = begin_ + rng_.uniform_index(last_start_ - begin_ + 1);
            const int t = horizon_ == 1 ? 1 : static_cast<int>(1 + rng_.uniform_index(horizon_));
            batch.offsets[i] = t;
            batch.context.row(i) = standardized_row(s).template cast<S>();
            batch.prev.row(i) = standardized_row(s + t - 1).template cast<S>();
            batch.target.row(i) = standardized_row(s + t).template cast<S>();
        }
        return batch;
    }

private:
    VectorXd standardized_row(std::int64_t r) const {
        return ds_.standardizer.standardize(ds_.observed_row(r));
    }

    const Dataset& ds_;
    int horizon_;
    std::int64_t begin_ = 0;
    std::int64_t last_start_ = 0;
    RngStream rng_;
};

// Contiguous (K+1)-row segments for rollout training: rows s .. s+K standardized.
template <class S>
struct SegmentBatch {
    std::vector<MatX<S>> steps;  // K+1 matrices, each [B x D]

    Index size() const { return steps.empty() ? 0 : steps.front().rows(); }
    int length() const { return static_cast<int>(steps.size()); }
};

template <class S>
class SegmentSampler {
public:
    SegmentSampler(const Dataset& ds, Split split, int rollout_len, std::uint64_t seed)
        : ds_(ds), k_(rollout_len), rng_(mix_seed(seed, 0x71d0)) {
        if (k_ < 1) throw ConfigError("SegmentSampler: rollout length must be >= 1");
        auto [begin, end] = ds.split_range(split);
        begin_ = begin;
        last_start_ = end - k_ - 1;
        if (last_start_ < begin_)
            throw ConfigError("SegmentSampler: rollout length exceeds split length");
    }

    SegmentBatch<S> next(Index batch_size) {
        const int d = ds_.observed_dim();
        SegmentBatch<S> batch;
        batch.steps.assign(k_ + 1, MatX<S>(batch_size, d));
        for (Index i = 0; i < batch_size; ++i) {
            const std::int64_t s = begin_ + rng_.uniform_index(last_start_ - begin_ + 1);
            for (int j = 0; j <= k_; ++j)
                batch.steps[j].row(i) =
                    ds_.standardizer.standardize(ds_.observed_row(s + j)).template cast<S>();
        }
        return batch;
    }

private:
    const Dataset& ds_;
    int k_;
    std::int64_t begin_ = 0;
    std::int64_t last_start_ = 0;
    RngStream rng_;
};

// Replaces the previous-state input of the first round(fraction*B) rows with
// x + zeta, zeta ~ N(0, var(t) I), in standardized units. Targets untouched.
// Batch rows are already uniformly shuffled, so a prefix is a uniform subset.
template <class S>
void corrupt_with_noise(WindowBatch<S>& batch, const NoiseSchedule& schedule, double fraction,
                        RngStream& rng) {
    if (fraction < 0.0 || fraction > 1.0)
        throw ConfigError("corrupt_with_noise: fraction must be in [0,1]");
    const Index n_corrupt = static_cast<Index>(std::llround(fraction * batch.size()));
    if (n_corrupt == 0) return;
    const int d = static_cast<int>(batch.prev.cols());
    for (Index i = 0; i < n_corrupt; ++i) {
        const double var = schedule.variance(batch.offsets[i]);
        if (var < 0.0)
            throw ConfigError("corrupt_with_noise: negative variance at lead step " +
                              std::to_string(batch.offsets[i]));
        const double sd = std::sqrt(var);
        for (int j = 0; j < d; ++j)
            batch.prev(i, j) += static_cast<S>(sd * rng.gaussian());
    }
}

}  // namespace erracc::data
