#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "erracc/common.hpp"
#include "erracc/dynamics.hpp"

namespace erracc::data {

// Contiguous, ordered, disjoint row ranges: [0,train) [train,val) [val,test).
struct SplitSpec {
    std::int64_t train_end = 0;
    std::int64_t val_end = 0;
    std::int64_t test_end = 0;

    std::int64_t train_begin() const { return 0; }
    std::int64_t val_begin() const { return train_end; }
    std::int64_t test_begin() const { return val_end; }
    std::int64_t train_size() const { return train_end; }
    std::int64_t val_size() const { return val_end - train_end; }
    std::int64_t test_size() const { return test_end - val_end; }

    void validate() const {
        if (!(0 < train_end && train_end < val_end && val_end < test_end))
            throw ConfigError("SplitSpec: splits must be ordered train < val < test");
    }
};

enum class Split { Train, Val, Test };

struct ObservedView {
    std::vector<int> indices;  // distinct column indices into the full state

    int dim() const { return static_cast<int>(indices.size()); }
};

// Per-dimension affine transform fitted on training rows of the observed view.
struct Standardizer {
    VectorXd mean;
    VectorXd std;

    int dim() const { return static_cast<int>(mean.size()); }

    VectorXd standardize(const VectorXd& x) const {
        return (x - mean).cwiseQuotient(std);
    }
    VectorXd destandardize(const VectorXd& z) const {
        return z.cwiseProduct(std) + mean;
    }
    MatrixXd standardize_rows(const MatrixXd& x) const;
    MatrixXd destandardize_rows(const MatrixXd& z) const;

    void validate() const {
        if (mean.size() != std.size()) throw ConfigError("Standardizer: mean/std size mismatch");
        if ((std.array() <= 0.0).any()) throw ConfigError("Standardizer: std must be > 0");
    }
};

// Generation protocol: integration settings plus row bookkeeping. The first
// `discard` saved rows are dropped before anything is persisted, so all split
// indices are relative to the retained rows.
struct DataProtocol {
    SystemKind system = SystemKind::L63;
    double dt = 0.01;
    int save_every = 1;
    std::int64_t n_save = 0;  // saved rows including the discarded burn-in
    std::int64_t discard = 200;
    std::int64_t train_rows = 0;
    std::int64_t val_rows = 0;
    std::uint64_t seed = 0;

    std::int64_t kept_rows() const { return n_save - discard; }
    SplitSpec splits() const {
        SplitSpec s;
        s.train_end = train_rows;
        s.val_end = train_rows + val_rows;
        s.test_end = kept_rows();
        return s;
    }
    void validate() const;

    static DataProtocol l63_paper(std::uint64_t seed);
    static DataProtocol l96_paper(std::uint64_t seed);
    static DataProtocol l63_desk(std::uint64_t seed);
    static DataProtocol l96_desk(std::uint64_t seed);
};

struct Dataset {
    SystemKind system = SystemKind::L63;
    double dt_between_rows = 0.0;
    MatrixXd values;  // raw units, [rows x D_full] (or [rows x D_obs] if loaded observed-only)
    ObservedView observed;
    SplitSpec splits;
    Standardizer standardizer;
    std::uint64_t seed = 0;
    bool observed_only = false;  // true when `values` columns are already the observed view

    std::int64_t rows() const { return values.rows(); }
    int full_dim() const { return static_cast<int>(values.cols()); }
    int observed_dim() const { return observed.dim(); }

    // Observed view of one row, raw units.
    VectorXd observed_row(std::int64_t r) const;
    // Observed view of rows [begin, begin+count), standardized.
    MatrixXd standardized_block(std::int64_t begin, std::int64_t count) const;

    std::pair<std::int64_t, std::int64_t> split_range(Split s) const;
};

ObservedView default_observed_view(SystemKind system, const dynamics::L96Params& l96 = {});

// Integrates the system, discards burn-in, fits the standardizer on the
// training rows of the observed view, and persists `<prefix>.f64` (row-major
// 64-bit little-endian reals) plus `<prefix>.meta.json`.
Dataset generate_dataset(const DataProtocol& protocol, const std::filesystem::path& prefix);

// In-memory variant used by tests; no files written.
Dataset generate_dataset_in_memory(const DataProtocol& protocol);

Dataset load_dataset(const std::filesystem::path& prefix, bool observed_only = false);

}  // namespace erracc::data
