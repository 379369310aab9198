#include "erracc/dataset.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace erracc::data {

static_assert(std::endian::native == std::endian::little,
              "dataset files are little-endian; big-endian hosts are unsupported");

using nlohmann::json;

MatrixXd Standardizer::standardize_rows(const MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

MatrixXd Standardizer::destandardize_rows(const MatrixXd& z) const {
    return (z.array().rowwise() * std.transpose().array()).matrix().rowwise() + mean.transpose();
}

void DataProtocol::validate() const {
    if (n_save <= discard) throw ConfigError("DataProtocol: n_save must exceed discard");
    if (train_rows < 1 || val_rows < 1) throw ConfigError("DataProtocol: empty train/val split");
    if (train_rows + val_rows >= kept_rows())
        throw ConfigError("DataProtocol: train+val leave no test rows");
    dynamics::IntegratorConfig{dt, save_every, n_save}.validate();
}

DataProtocol DataProtocol::l63_paper(std::uint64_t seed) {
    DataProtocol p;
    p.system = SystemKind::L63;
    p.dt = 0.01;
    p.save_every = 1;
    p.n_save = 1'500'000;
    p.discard = 200;
    p.train_rows = 900'000;
    p.val_rows = 100'000;
    p.seed = seed;
    return p;
}

DataProtocol DataProtocol::l96_paper(std::uint64_t seed) {
    DataProtocol p;
    p.system = SystemKind::L96;
    p.dt = 0.001;
    p.save_every = 5;  // output saved every 0.005 MTU
    p.n_save = 9'000'000;
    p.discard = 200;
    p.train_rows = 1'000'000;
    p.val_rows = 100'000;
    p.seed = seed;
    return p;
}

DataProtocol DataProtocol::l63_desk(std::uint64_t seed) {
    DataProtocol p = l63_paper(seed);
    p.n_save = 170'200;
    p.train_rows = 100'000;
    p.val_rows = 20'000;
    return p;
}

DataProtocol DataProtocol::l96_desk(std::uint64_t seed) {
    DataProtocol p = l96_paper(seed);
    p.n_save = 265'200;
    p.train_rows = 200'000;
    p.val_rows = 25'000;
    return p;
}

VectorXd Dataset::observed_row(std::int64_t r) const {
    if (r < 0 || r >= rows()) throw DataError("Dataset: row index out of range");
    if (observed_only) return values.row(r);
    VectorXd out(observed.dim());
    for (int i = 0; i < observed.dim(); ++i) out[i] = values(r, observed.indices[i]);
    return out;
}

MatrixXd Dataset::standardized_block(std::int64_t begin, std::int64_t count) const {
    MatrixXd raw(count, observed.dim());
    for (std::int64_t r = 0; r < count; ++r) raw.row(r) = observed_row(begin + r);
    return standardizer.standardize_rows(raw);
}

std::pair<std::int64_t, std::int64_t> Dataset::split_range(Split s) const {
    switch (s) {
        case Split::Train: return {splits.train_begin(), splits.train_end};
        case Split::Val: return {splits.val_begin(), splits.val_end};
        case Split::Test: return {splits.test_begin(), splits.test_end};
    }
    throw ConfigError("Dataset: bad split");
}

ObservedView default_observed_view(SystemKind system, const dynamics::L96Params& l96) {
    ObservedView v;
    if (system == SystemKind::L63) {
        v.indices = {0, 1};  // x and y; z is unobserved
    } else {
        v.indices.resize(l96.K);  // slow variables only; Y are unobserved
        for (int k = 0; k < l96.K; ++k) v.indices[k] = k;
    }
    return v;
}

namespace {

// Streaming mean/std accumulator (Welford), one lane per observed dimension.
struct RunningStats {
    explicit RunningStats(int dim) : n(0), mean(VectorXd::Zero(dim)), m2(VectorXd::Zero(dim)) {}

    void add(const VectorXd& x) {
        ++n;
        const VectorXd delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta.cwiseProduct(x - mean);
    }

    Standardizer finish() const {
        Standardizer s;
        s.mean = mean;
        s.std = (m2 / static_cast<double>(n)).cwiseSqrt();
        if ((s.std.array() <= 0.0).any())
            throw DataError("dataset generation: degenerate (zero-variance) observed dimension");
        return s;
    }

    std::int64_t n;
    VectorXd mean;
    VectorXd m2;
};

// Runs the integration for `protocol`, dropping the burn-in rows, and hands
// each kept full-state row to `consumer(kept_index, row)`.
template <class Consumer>
void generate_rows(const DataProtocol& protocol, Consumer&& consumer) {
    protocol.validate();
    const dynamics::IntegratorConfig cfg{protocol.dt, protocol.save_every, protocol.n_save};
    auto sink = [&](std::int64_t i, const auto& state) {
        if (i < protocol.discard) return;
        consumer(i - protocol.discard, state);
    };
    if (protocol.system == SystemKind::L63) {
        dynamics::L63Params params;
        Eigen::Vector3d state = dynamics::l63_initial_state();
        auto deriv = [&params](const Eigen::Vector3d& s, Eigen::Vector3d& ds) {
            dynamics::l63_deriv(params, s, ds);
        };
        dynamics::integrate_steps(deriv, state, cfg, sink);
    } else {
        dynamics::L96Params params;
        VectorXd state = dynamics::l96_initial_state(params, protocol.seed);
        auto deriv = [&params](const VectorXd& s, VectorXd& ds) {
            dynamics::l96_deriv(params, s, ds);
        };
        dynamics::integrate_steps(deriv, state, cfg, sink);
    }
}

int full_dim(const DataProtocol& protocol) {
    return protocol.system == SystemKind::L63 ? 3 : dynamics::L96Params{}.dim();
}

json meta_json(const Dataset& ds, const DataProtocol& protocol, int dims) {
    json meta;
    meta["format"] = "erracc-dataset";
    meta["version"] = 1;
    meta["system"] = system_name(ds.system);
    meta["rows"] = ds.splits.test_end;
    meta["dims"] = dims;
    meta["dt_between_rows"] = ds.dt_between_rows;
    meta["observed"] = ds.observed.indices;
    meta["splits"] = {{"train_end", ds.splits.train_end},
                      {"val_end", ds.splits.val_end},
                      {"test_end", ds.splits.test_end}};
    meta["standardizer"] = {
        {"mean", std::vector<double>(ds.standardizer.mean.begin(), ds.standardizer.mean.end())},
        {"std", std::vector<double>(ds.standardizer.std.begin(), ds.standardizer.std.end())}};
    meta["seed"] = ds.seed;
    meta["protocol"] = {{"dt", protocol.dt},
                        {"save_every", protocol.save_every},
                        {"n_save", protocol.n_save},
                        {"discard", protocol.discard},
                        {"train_rows", protocol.train_rows},
                        {"val_rows", protocol.val_rows}};
    meta["notes"] = {
        "initial condition: l63 (1,1,1); l96 X=F+u, Y=0.1*v with seeded standard normal u,v",
        "burn-in: first 200 saved rows discarded for both systems",
        "integration in 64-bit floating point",
        "standardizer fitted on training rows of the observed view only",
    };
    return meta;
}

Dataset dataset_shell(const DataProtocol& protocol) {
    Dataset ds;
    ds.system = protocol.system;
    ds.dt_between_rows = protocol.dt * protocol.save_every;
    ds.observed = default_observed_view(protocol.system);
    ds.splits = protocol.splits();
    ds.seed = protocol.seed;
    return ds;
}

}  // namespace

Dataset generate_dataset(const DataProtocol& protocol, const std::filesystem::path& prefix) {
    Dataset ds = dataset_shell(protocol);
    const int dims = full_dim(protocol);
    const int d_obs = ds.observed.dim();
    const std::int64_t kept = protocol.kept_rows();

    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
    const auto f64_path = prefix.string() + ".f64";
    std::ofstream out(f64_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + f64_path);

    RunningStats stats(d_obs);
    ds.values.resize(kept, d_obs);  // observed view kept in memory for immediate use
    ds.observed_only = true;
    std::vector<double> row_buf(dims);

    generate_rows(protocol, [&](std::int64_t r, const auto& state) {
        for (int j = 0; j < dims; ++j) row_buf[j] = state[j];
        out.write(reinterpret_cast<const char*>(row_buf.data()),
                  static_cast<std::streamsize>(dims * sizeof(double)));
        VectorXd obs(d_obs);
        for (int j = 0; j < d_obs; ++j) obs[j] = state[ds.observed.indices[j]];
        ds.values.row(r) = obs;
        if (r < protocol.train_rows) stats.add(obs);
    });
    out.flush();
    if (!out) throw DataError("write failed: " + f64_path);
    out.close();

    ds.standardizer = stats.finish();

    const auto meta_path = prefix.string() + ".meta.json";
    std::ofstream meta_out(meta_path, std::ios::trunc);
    if (!meta_out) throw DataError("cannot open for writing: " + meta_path);
    meta_out << meta_json(ds, protocol, dims).dump(2) << "\n";
    if (!meta_out) throw DataError("write failed: " + meta_path);
    return ds;
}

Dataset generate_dataset_in_memory(const DataProtocol& protocol) {
    Dataset ds = dataset_shell(protocol);
    const int dims = full_dim(protocol);
    RunningStats stats(ds.observed.dim());
    ds.values.resize(protocol.kept_rows(), dims);
    generate_rows(protocol, [&](std::int64_t r, const auto& state) {
        for (int j = 0; j < dims; ++j) ds.values(r, j) = state[j];
        if (r < protocol.train_rows) {
            VectorXd obs(ds.observed.dim());
            for (int j = 0; j < ds.observed.dim(); ++j) obs[j] = state[ds.observed.indices[j]];
            stats.add(obs);
        }
    });
    ds.standardizer = stats.finish();
    return ds;
}

Dataset load_dataset(const std::filesystem::path& prefix, bool observed_only) {
    const auto meta_path = prefix.string() + ".meta.json";
    std::ifstream meta_in(meta_path);
    if (!meta_in) throw DataError("cannot open dataset metadata: " + meta_path);
    json meta;
    try {
        meta_in >> meta;
    } catch (const json::exception& e) {
        throw DataError("malformed dataset metadata " + meta_path + ": " + e.what());
    }

    Dataset ds;
    ds.system = system_from_name(meta.at("system").get<std::string>());
    ds.dt_between_rows = meta.at("dt_between_rows").get<double>();
    ds.observed.indices = meta.at("observed").get<std::vector<int>>();
    ds.splits.train_end = meta.at("splits").at("train_end").get<std::int64_t>();
    ds.splits.val_end = meta.at("splits").at("val_end").get<std::int64_t>();
    ds.splits.test_end = meta.at("splits").at("test_end").get<std::int64_t>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    const auto mean = meta.at("standardizer").at("mean").get<std::vector<double>>();
    const auto sd = meta.at("standardizer").at("std").get<std::vector<double>>();
    ds.standardizer.mean = Eigen::Map<const VectorXd>(mean.data(), mean.size());
    ds.standardizer.std = Eigen::Map<const VectorXd>(sd.data(), sd.size());
    ds.standardizer.validate();
    ds.splits.validate();

    const std::int64_t rows = meta.at("rows").get<std::int64_t>();
    const int dims = meta.at("dims").get<int>();
    const auto f64_path = prefix.string() + ".f64";
    std::ifstream in(f64_path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset values: " + f64_path);
    in.seekg(0, std::ios::end);
    const std::int64_t bytes = in.tellg();
    if (bytes != rows * dims * static_cast<std::int64_t>(sizeof(double)))
        throw DataError("dataset size mismatch in " + f64_path + ": expected " +
                        std::to_string(rows * dims * sizeof(double)) + " bytes, found " +
                        std::to_string(bytes));
    in.seekg(0, std::ios::beg);

    const int d_keep = observed_only ? ds.observed.dim() : dims;
    ds.observed_only = observed_only;
    ds.values.resize(rows, d_keep);

    const std::int64_t chunk_rows = 8192;
    std::vector<double> buf(static_cast<std::size_t>(chunk_rows) * dims);
    std::int64_t r = 0;
    while (r < rows) {
        const std::int64_t n = std::min(chunk_rows, rows - r);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(n * dims * sizeof(double)));
        if (!in) throw DataError("read failed: " + f64_path);
        for (std::int64_t i = 0; i < n; ++i) {
            if (observed_only) {
                for (int j = 0; j < d_keep; ++j)
                    ds.values(r + i, j) = buf[i * dims + ds.observed.indices[j]];
            } else {
                for (int j = 0; j < dims; ++j) ds.values(r + i, j) = buf[i * dims + j];
            }
        }
        r += n;
    }
    return ds;
}

}  // namespace erracc::data
