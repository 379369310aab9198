#include "erracc/forecast.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace erracc::forecast {

static_assert(std::endian::native == std::endian::little,
              "ensemble dumps are little-endian; big-endian hosts are unsupported");

ForecastEnsemble ForecastEnsemble::create(int members, int leads, int dims, std::string model_tag,
                                          int ic_id, std::uint64_t seed) {
    ForecastEnsemble e;
    e.members = members;
    e.leads = leads;
    e.dims = dims;
    e.model_tag = std::move(model_tag);
    e.ic_id = ic_id;
    e.seed = seed;
    e.values.resize(members, static_cast<Index>(leads) * dims);
    e.exploded_from.assign(members, -1);
    return e;
}

int ForecastEnsemble::usable_count(int t) const {
    int n = 0;
    for (int m = 0; m < members; ++m)
        if (usable(m, t)) ++n;
    return n;
}

int ForecastEnsemble::exploded_members() const {
    int n = 0;
    for (int e : exploded_from)
        if (e >= 0) ++n;
    return n;
}

std::optional<GaussianFit> try_fit_ensemble_gaussian(const ForecastEnsemble& ens, int t) {
    if (t < 0 || t >= ens.leads) throw ConfigError("fit_ensemble_gaussian: lead out of range");
    GaussianFit fit;
    fit.mean = VectorXd::Zero(ens.dims);
    fit.std = VectorXd::Zero(ens.dims);
    for (int n = 0; n < ens.members; ++n) {
        if (!ens.usable(n, t)) continue;
        ++fit.used;
        for (int d = 0; d < ens.dims; ++d) fit.mean[d] += ens.value(n, t, d);
    }
    if (fit.used < 2) return std::nullopt;
    fit.mean /= fit.used;
    for (int n = 0; n < ens.members; ++n) {
        if (!ens.usable(n, t)) continue;
        for (int d = 0; d < ens.dims; ++d) {
            const double r = ens.value(n, t, d) - fit.mean[d];
            fit.std[d] += r * r;
        }
    }
    // population denominator, matching the spread definition
    fit.std = (fit.std / fit.used).cwiseSqrt().cwiseMax(kFitStdFloor);
    return fit;
}

GaussianFit fit_ensemble_gaussian(const ForecastEnsemble& ens, int t) {
    auto fit = try_fit_ensemble_gaussian(ens, t);
    if (!fit)
        throw NumericError("fit_ensemble_gaussian: fewer than 2 usable members at lead " +
                           std::to_string(t));
    return *fit;
}

ForecastEnsemble random_walk_rollout(const VectorXd& ic_raw, const data::Standardizer& st, int T,
                                     int N, std::uint64_t seed, int ic_id) {
    if (T < 1 || N < 1) throw ConfigError("random_walk_rollout: T and N must be >= 1");
    const int d = static_cast<int>(ic_raw.size());
    ForecastEnsemble ens = ForecastEnsemble::create(N, T, d, "random-walk", ic_id, seed);
    for (int n = 0; n < N; ++n) {
        RngStream rng(detail::member_stream_seed(seed, ic_id, n));
        VectorXd z = st.standardize(ic_raw);
        for (int t = 0; t < T; ++t) {
            if (ens.usable(n, t)) {
                for (int j = 0; j < d; ++j) z[j] += rng.gaussian();
                if (detail::clamp_exploded(z)) ens.exploded_from[n] = t;
            }
            const VectorXd raw = st.destandardize(z);
            for (int j = 0; j < d; ++j) ens.values(n, t * d + j) = raw[j];
        }
    }
    return ens;
}

ForecastEnsemble climatology_forecast(const ClimatologyCts& model, int dims, int T, int N,
                                      std::uint64_t seed, int ic_id) {
    if (T < 1 || N < 1) throw ConfigError("climatology_forecast: T and N must be >= 1");
    if (!(model.scale > 0)) throw ConfigError("climatology_forecast: scale must be > 0");
    ForecastEnsemble ens = ForecastEnsemble::create(N, T, dims, "climatology", ic_id, seed);
    for (int n = 0; n < N; ++n) {
        RngStream rng(detail::member_stream_seed(seed, ic_id, n));
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < dims; ++j)
                ens.values(n, t * dims + j) = model.mean + model.scale * rng.gaussian();
    }
    return ens;
}

void save_ensemble(const std::filesystem::path& prefix, const ForecastEnsemble& ens) {
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
    const auto bin_path = prefix.string() + ".f64";
    std::ofstream out(bin_path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + bin_path);
    for (int n = 0; n < ens.members; ++n) {
        std::vector<double> row(ens.values.row(n).begin(), ens.values.row(n).end());
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) throw DataError("write failed: " + bin_path);

    nlohmann::json meta;
    meta["format"] = "erracc-ensemble";
    meta["model"] = ens.model_tag;
    meta["ic_id"] = ens.ic_id;
    meta["seed"] = ens.seed;
    meta["members"] = ens.members;
    meta["leads"] = ens.leads;
    meta["dims"] = ens.dims;
    meta["exploded_from"] = ens.exploded_from;
    std::ofstream meta_out(prefix.string() + ".meta.json", std::ios::trunc);
    if (!meta_out) throw DataError("cannot open for writing: " + prefix.string() + ".meta.json");
    meta_out << meta.dump(2) << "\n";
}

ForecastEnsemble load_ensemble(const std::filesystem::path& prefix) {
    std::ifstream meta_in(prefix.string() + ".meta.json");
    if (!meta_in) throw DataError("cannot open ensemble metadata: " + prefix.string());
    nlohmann::json meta;
    try {
        meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed ensemble metadata: " + std::string(e.what()));
    }
    ForecastEnsemble ens = ForecastEnsemble::create(
        meta.at("members").get<int>(), meta.at("leads").get<int>(), meta.at("dims").get<int>(),
        meta.at("model").get<std::string>(), meta.at("ic_id").get<int>(),
        meta.at("seed").get<std::uint64_t>());
    ens.exploded_from = meta.at("exploded_from").get<std::vector<int>>();

    const auto bin_path = prefix.string() + ".f64";
    std::ifstream in(bin_path, std::ios::binary);
    if (!in) throw DataError("cannot open ensemble values: " + bin_path);
    std::vector<double> row(static_cast<std::size_t>(ens.leads) * ens.dims);
    for (int n = 0; n < ens.members; ++n) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
        if (!in) throw DataError("truncated ensemble values: " + bin_path);
        for (std::size_t j = 0; j < row.size(); ++j) ens.values(n, static_cast<Index>(j)) = row[j];
    }
    return ens;
}

}  // namespace erracc::forecast
