#include "erracc/harness/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "erracc/checkpoint.hpp"
#include "erracc/harness/csv.hpp"
#include "erracc/harness/svg.hpp"

namespace erracc::harness {

namespace {

using Clock = std::chrono::steady_clock;
using forecast::ForecastEnsemble;
using metrics::MetricCurve;

constexpr const char* kVersion = "erracc 0.1.0";

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void write_run_metadata(const ExperimentConfig& cfg, const std::string& command, double wall_s,
                        const nlohmann::json& extra) {
    nlohmann::json meta;
    meta["command"] = command;
    meta["version"] = kVersion;
    meta["config_hash"] = config_hash(cfg);
    meta["seed"] = cfg.seed;
    meta["wall_s"] = wall_s;
    meta["decisions"] = active_decisions();
    meta["extra"] = extra;
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream out(cfg.run_meta_path(command), std::ios::trunc);
    if (!out) throw DataError("cannot write run metadata: " + cfg.run_meta_path(command).string());
    out << meta.dump(2) << "\n";
}

// Static partition over [0, n); each worker writes disjoint slots, so the
// result is identical to the serial order for any thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = w; i < n; i += threads) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::vector<std::string> variable_names(SystemKind system, int dims) {
    if (system == SystemKind::L63) return {"x", "y"};
    std::vector<std::string> names(dims);
    for (int d = 0; d < dims; ++d) names[d] = "X" + std::to_string(d + 1);
    return names;
}

struct LoadedModels {
    std::map<std::string, forecast::ArModel<float>> ar;
    std::map<std::string, forecast::CtsModel<float>> cts;
};

LoadedModels load_roster(const ExperimentConfig& cfg) {
    LoadedModels out;
    for (const auto& kind : cfg.eval.models) {
        if (!is_roster_kind(kind)) throw ConfigError("unknown roster model '" + kind + "'");
        if (!is_trainable_kind(kind)) continue;  // analytic baseline
        const auto path = cfg.checkpoint_path(kind);
        if (!std::filesystem::exists(path))
            throw DataError("missing checkpoint for '" + kind + "': " + path.string() +
                            " (run `erracc train " + kind + "` first)");
        auto [header, params] = nn::load_checkpoint(path);
        if (kind == "cts") {
            forecast::CtsModel<float> m;
            m.cfg = header.cfg;
            m.params = std::move(params);
            m.t_max = header.extra.at("t_max").get<int>();
            m.policy =
                forecast::cap_policy_from_name(header.extra.at("cap_policy").get<std::string>());
            out.cts[kind] = std::move(m);
        } else {
            out.ar[kind] = {header.cfg, std::move(params)};
        }
    }
    return out;
}

metrics::EnsembleSet build_ensembles(const ExperimentConfig& cfg, const data::Dataset& ds,
                                     const LoadedModels& models, const std::string& kind,
                                     const std::vector<std::int64_t>& ic_rows) {
    const int T = cfg.eval.horizon;
    const int N = cfg.eval.n_members;
    const std::uint64_t seed = model_seed(cfg.seed, "eval-" + kind);
    metrics::EnsembleSet out(ic_rows.size());
    parallel_for(static_cast<int>(ic_rows.size()), cfg.threads, [&](int m) {
        const std::int64_t r = ic_rows[m];
        const VectorXd ic = ds.observed_row(r);
        const int ic_id = static_cast<int>(r);
        if (kind == "random-walk") {
            out[m] = forecast::random_walk_rollout(ic, ds.standardizer, T, N, seed, ic_id);
        } else if (kind == "climatology") {
            out[m] = forecast::climatology_forecast(cfg.eval.climatology, ds.observed_dim(), T, N,
                                                    seed, ic_id);
        } else if (kind == "cts") {
            out[m] = forecast::cts_forecast(models.cts.at(kind), ic, ds.standardizer, T, N, seed,
                                            ic_id);
        } else {
            out[m] = forecast::ar_rollout(models.ar.at(kind), ic, ds.standardizer, T, N, seed,
                                          ic_id);
        }
        out[m].model_tag = kind;
    });
    return out;
}

std::string join_flags(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (p.empty()) continue;
        if (!out.empty()) out += ';';
        out += p;
    }
    return out;
}

struct CurveBuilder {
    const ExperimentConfig& cfg;
    std::string system;
    std::vector<int> grid;  // 0-based lead indices

    MetricCurve shell(const std::string& model, const std::string& metric,
                      const std::string& variable) const {
        MetricCurve c;
        c.system = system;
        c.model = model;
        c.metric = metric;
        c.variable = variable;
        c.n_ic = cfg.eval.n_ic;
        c.n_members = cfg.eval.n_members;
        return c;
    }

    std::uint64_t band_seed(const MetricCurve& c, int t) const {
        return mix_seed(cfg.seed, fnv1a(c.model + "|" + c.metric + "|" + c.variable),
                        static_cast<std::uint64_t>(t));
    }
};

}  // namespace

const std::vector<std::string>& active_decisions() {
    static const std::vector<std::string> decisions = {
        "truth ICs: l63 (1,1,1); l96 X=F+u, Y=0.1v with seeded normals; 200-row burn-in discarded "
        "for both systems",
        "noise corruption applied in standardized units",
        "context length c = 1 (single initial condition)",
        "sigma head: exp(raw) clamped to [1e-4, 1e3]; glorot weights, zero biases, raw-sigma bias 0",
        "rollout objective: fed-back samples carry no gradient unless rollout_stop_gradient=false",
        "CTS lead-time input feature: t / t_max in (0, 1]",
        "CTS beyond-cap policy: freeze (l63) / re-anchor (l96), configurable",
        "explosion sentinel at |z| > 1e6 standardized; frozen members excluded from fits",
        "error accumulation aggregated as the mean over dimensions (sum emitted as "
        "err_acc_gauss_sum)",
        "ensemble fit std uses the population denominator, floored at 1e-8",
        "histogram KL: 30 bins over the pooled range, 1e-6 additive smoothing",
        "global spread/skill at near-zero skill reports a flagged 0 sentinel; the per-location "
        "form floors the denominator at 1e-8",
    };
    return decisions;
}

data::Dataset cmd_gen_data(const ExperimentConfig& cfg) {
    const auto t0 = Clock::now();
    std::filesystem::create_directories(cfg.out_dir);
    data::DataProtocol protocol = cfg.data;
    protocol.system = cfg.system;
    protocol.seed = cfg.seed;
    data::Dataset ds = data::generate_dataset(protocol, cfg.dataset);
    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();

    nlohmann::json extra;
    extra["rows"] = ds.rows();
    extra["dataset"] = cfg.dataset.string();
    write_run_metadata(cfg, "gen-data", wall, extra);

    std::cout << "dataset " << cfg.dataset.string() << ".f64\n"
              << "  system        " << system_name(ds.system) << "\n"
              << "  rows          " << ds.rows() << "\n"
              << "  splits        train " << ds.splits.train_size() << ", val "
              << ds.splits.val_size() << ", test " << ds.splits.test_size() << "\n"
              << "  observed dims " << ds.observed_dim() << "\n"
              << "  dt per row    " << ds.dt_between_rows << "\n";
    return ds;
}

training::TrainReport cmd_train(const ExperimentConfig& cfg, const std::string& kind) {
    if (!is_trainable_kind(kind)) {
        std::string roster;
        for (const auto& k : kTrainableKinds) roster += (roster.empty() ? "" : ", ") + k;
        throw ConfigError("'" + kind + "' is not trainable; expected one of: " + roster);
    }
    const auto t0 = Clock::now();
    const data::Dataset ds = data::load_dataset(cfg.dataset, /*observed_only=*/true);
    const training::TrainConfig tcfg = cfg.train_config(kind);

    nn::CheckpointHeader header;
    header.seed = tcfg.seed;
    header.extra["system"] = system_name(cfg.system);
    header.extra["model_kind"] = kind;

    training::TrainReport report;
    if (kind == "cts") {
        auto trained = training::train_cts(ds, tcfg);
        report = trained.report;
        header.cfg = trained.model.cfg;
        header.epoch = report.best_epoch >= 0 ? report.best_epoch : tcfg.epochs - 1;
        header.extra["kind"] = "cts";
        header.extra["t_max"] = trained.model.t_max;
        header.extra["cap_policy"] = forecast::cap_policy_name(trained.model.policy);
        nn::save_checkpoint(cfg.checkpoint_path(kind), header, trained.model.params);
    } else {
        training::TrainedAr trained;
        if (kind == "gen") {
            trained = training::train_ar_mle(ds, tcfg);
        } else if (kind == "gen-rollout") {
            trained = training::train_ar_rollout(ds, tcfg);
        } else if (kind == "gen-noise") {
            trained = training::train_ar_noise_only(ds, tcfg);
        } else {  // gen-penalty, gen-ours
            const auto cts_path = cfg.checkpoint_path("cts");
            if (!std::filesystem::exists(cts_path))
                throw DataError("'" + kind + "' needs the CTS checkpoint " + cts_path.string() +
                                " (run `erracc train cts` first)");
            auto [cts_header, cts_params] = nn::load_checkpoint(cts_path);
            forecast::CtsModel<float> cts;
            cts.cfg = cts_header.cfg;
            cts.params = std::move(cts_params);
            cts.t_max = cts_header.extra.at("t_max").get<int>();
            cts.policy = forecast::cap_policy_from_name(
                cts_header.extra.at("cap_policy").get<std::string>());
            trained = training::train_ar_regularized(ds, cts, tcfg);
        }
        report = trained.report;
        header.cfg = trained.model.cfg;
        header.epoch = tcfg.epochs - 1;  // AR models keep final-epoch weights
        header.extra["kind"] = "ar";
        nn::save_checkpoint(cfg.checkpoint_path(kind), header, trained.model.params);
    }
    report.checkpoint_path = cfg.checkpoint_path(kind).string();

    std::ofstream jsonl(cfg.train_report_path(kind), std::ios::trunc);
    if (!jsonl) throw DataError("cannot write train report: " + cfg.train_report_path(kind).string());
    for (const auto& e : report.epochs) {
        nlohmann::json rec{{"epoch", e.epoch},
                           {"train_nll", e.train_nll},
                           {"train_penalty", e.train_penalty},
                           {"val_nll", e.val_nll},
                           {"wall_s", e.wall_s}};
        jsonl << rec.dump() << "\n";
    }
    nlohmann::json final_rec{{"final", true},
                             {"checkpoint", report.checkpoint_path},
                             {"diverged", report.diverged},
                             {"best_epoch", report.best_epoch}};
    jsonl << final_rec.dump() << "\n";

    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    nlohmann::json extra;
    extra["model_kind"] = kind;
    extra["checkpoint"] = report.checkpoint_path;
    extra["diverged"] = report.diverged;
    write_run_metadata(cfg, "train-" + kind, wall, extra);

    std::cout << "trained " << kind << " -> " << report.checkpoint_path;
    if (!report.epochs.empty())
        std::cout << " (final val NLL " << report.epochs.back().val_nll << ")";
    if (report.diverged) std::cout << " [DIVERGED: kept last good checkpoint]";
    std::cout << "\n";
    return report;
}

std::vector<MetricCurve> cmd_evaluate(const ExperimentConfig& cfg) {
    const auto t0 = Clock::now();
    const data::Dataset ds = data::load_dataset(cfg.dataset, /*observed_only=*/true);
    const int T = cfg.eval.horizon;
    const int M = cfg.eval.n_ic;
    const int D = ds.observed_dim();

    if (std::find(cfg.eval.models.begin(), cfg.eval.models.end(), cfg.eval.reference) ==
        cfg.eval.models.end())
        throw ConfigError("reference model '" + cfg.eval.reference + "' is not in the roster");

    // ICs: distinct test rows with a full truth continuation after them
    const auto [test_begin, test_end] = ds.split_range(data::Split::Test);
    const std::int64_t last_ok = test_end - T - 1;
    if (last_ok < test_begin)
        throw DataError("evaluation horizon does not fit in the test split");
    const std::int64_t candidates = last_ok - test_begin + 1;
    if (candidates < M)
        throw DataError("IC shortage in test split: need " + std::to_string(M) + ", have " +
                        std::to_string(candidates));
    RngStream ic_rng(mix_seed(cfg.seed, 0xe7a1));
    std::set<std::int64_t> chosen;
    while (static_cast<int>(chosen.size()) < M)
        chosen.insert(test_begin + ic_rng.uniform_index(candidates));
    const std::vector<std::int64_t> ic_rows(chosen.begin(), chosen.end());

    metrics::TruthSet truth(M);
    for (int m = 0; m < M; ++m) {
        MatrixXd tm(T, D);
        for (int t = 0; t < T; ++t) tm.row(t) = ds.observed_row(ic_rows[m] + 1 + t);
        truth[m] = std::move(tm);
    }

    const LoadedModels models = load_roster(cfg);
    std::map<std::string, metrics::EnsembleSet> ensembles;
    for (const auto& kind : cfg.eval.models)
        ensembles[kind] = build_ensembles(cfg, ds, models, kind, ic_rows);
    const metrics::EnsembleSet& reference = ensembles.at(cfg.eval.reference);

    const auto w = metrics::LocationWeights::unit(D);
    const auto var_names = variable_names(cfg.system, D);
    CurveBuilder cb{cfg, system_name(cfg.system), {}};
    for (int t = 0; t < T; t += cfg.eval.stride) cb.grid.push_back(t);

    const int R = cfg.eval.bootstrap;
    const double level = cfg.eval.level;

    std::vector<MetricCurve> curves;
    for (const auto& kind : cfg.eval.models) {
        const auto& ens = ensembles.at(kind);

        MetricCurve rmse = cb.shell(kind, "rmse", "all");
        std::vector<MetricCurve> rmse_dim;
        for (int d = 0; d < D; ++d) rmse_dim.push_back(cb.shell(kind, "rmse", var_names[d]));
        MetricCurve spread = cb.shell(kind, "spread", "all");
        MetricCurve ratio = cb.shell(kind, "spread_skill", "all");
        std::vector<MetricCurve> ratio_dim;
        for (int d = 0; d < D; ++d)
            ratio_dim.push_back(cb.shell(kind, "spread_skill", var_names[d]));
        MetricCurve ss_local = cb.shell(kind, "spread_skill_local", "all");
        MetricCurve crps = cb.shell(kind, "crps", "all");
        MetricCurve eag = cb.shell(kind, "err_acc_gauss", "all");
        std::vector<MetricCurve> eag_dim;
        for (int d = 0; d < D; ++d)
            eag_dim.push_back(cb.shell(kind, "err_acc_gauss", var_names[d]));
        MetricCurve eag_sum = cb.shell(kind, "err_acc_gauss_sum", "all");
        MetricCurve eah = cb.shell(kind, "err_acc_hist", "all");
        MetricCurve explosion = cb.shell(kind, "explosion_rate", "all");

        auto push = [](MetricCurve& c, int lead, double v, metrics::Band b,
                       const std::string& flag) {
            c.lead.push_back(lead);
            c.value.push_back(v);
            c.lo.push_back(b.lo);
            c.hi.push_back(b.hi);
            c.flags.push_back(flag);
        };
        const metrics::Band no_band{std::numeric_limits<double>::quiet_NaN(),
                                    std::numeric_limits<double>::quiet_NaN()};

        for (int t : cb.grid) {
            const int lead = t + 1;

            // rmse (+ per-dim)
            {
                metrics::SkipStats st;
                const VectorXd mse = metrics::per_ic_mse(ens, truth, t, w, &st);
                const double v = std::sqrt(metrics::nan_mean(mse));
                const auto band = metrics::bootstrap_band(
                    mse, [](const MatrixXd& rows) { return std::sqrt(metrics::nan_mean(rows.col(0))); },
                    R, level, cb.band_seed(rmse, t));
                push(rmse, lead, v, band,
                     st.skipped_ics ? "skipped=" + std::to_string(st.skipped_ics) : "");
                for (int d = 0; d < D; ++d) {
                    const VectorXd mse_d = metrics::per_ic_mse(ens, truth, t, w, nullptr, d);
                    const auto band_d = metrics::bootstrap_band(
                        mse_d,
                        [](const MatrixXd& rows) { return std::sqrt(metrics::nan_mean(rows.col(0))); },
                        R, level, cb.band_seed(rmse_dim[d], t));
                    push(rmse_dim[d], lead, std::sqrt(metrics::nan_mean(mse_d)), band_d, "");
                }
            }

            // spread and spread/skill (+ per-dim ratios)
            {
                const VectorXd var = metrics::per_ic_spread_var(ens, t, w);
                const VectorXd mse = metrics::per_ic_mse(ens, truth, t, w);
                const double spread_v = std::sqrt(metrics::nan_mean(var));
                const auto spread_band = metrics::bootstrap_band(
                    var, [](const MatrixXd& rows) { return std::sqrt(metrics::nan_mean(rows.col(0))); },
                    R, level, cb.band_seed(spread, t));
                push(spread, lead, spread_v, spread_band, "");

                const auto ss = metrics::spread_and_skill(ens, truth, t, w);
                MatrixXd both(var.size(), 2);
                both.col(0) = var;
                both.col(1) = mse;
                auto ratio_reduce = [](const MatrixXd& rows) {
                    const double sp = std::sqrt(metrics::nan_mean(rows.col(0)));
                    const double sk = std::sqrt(metrics::nan_mean(rows.col(1)));
                    return sk < 1e-12 ? 0.0 : sp / sk;
                };
                const auto ratio_band = metrics::bootstrap_band(both, ratio_reduce, R, level,
                                                                cb.band_seed(ratio, t));
                push(ratio, lead, ss.ratio, ratio_band, ss.skill_floored ? "skill_zero" : "");

                for (int d = 0; d < D; ++d) {
                    const VectorXd var_d = metrics::per_ic_spread_var(ens, t, w, nullptr, d);
                    const VectorXd mse_d = metrics::per_ic_mse(ens, truth, t, w, nullptr, d);
                    MatrixXd both_d(var_d.size(), 2);
                    both_d.col(0) = var_d;
                    both_d.col(1) = mse_d;
                    const double sk = std::sqrt(metrics::nan_mean(mse_d));
                    const double v = sk < 1e-12 ? 0.0 : std::sqrt(metrics::nan_mean(var_d)) / sk;
                    const auto band_d = metrics::bootstrap_band(both_d, ratio_reduce, R, level,
                                                                cb.band_seed(ratio_dim[d], t));
                    push(ratio_dim[d], lead, v, band_d, sk < 1e-12 ? "skill_zero" : "");
                }
            }

            // spread/skill per location
            {
                metrics::SkipStats st;
                const VectorXd comp = metrics::per_ic_ss_per_location(ens, truth, t, w, &st);
                const auto band =
                    metrics::bootstrap_band(comp, R, level, cb.band_seed(ss_local, t));
                std::vector<std::string> flags;
                if (st.floored_cells) flags.push_back("floored=" + std::to_string(st.floored_cells));
                if (st.skipped_ics) flags.push_back("skipped=" + std::to_string(st.skipped_ics));
                push(ss_local, lead, metrics::nan_mean(comp), band, join_flags(flags));
            }

            // CRPS
            {
                const VectorXd comp = metrics::per_ic_crps(ens, truth, t, w);
                const auto band = metrics::bootstrap_band(comp, R, level, cb.band_seed(crps, t));
                push(crps, lead, metrics::nan_mean(comp), band, "");
            }

            // error accumulation vs the reference (gaussian mean/sum, per-dim, histogram)
            {
                metrics::SkipStats st;
                const VectorXd comp = metrics::per_ic_err_acc_gauss(ens, reference, t, -1, &st);
                const auto band = metrics::bootstrap_band(comp, R, level, cb.band_seed(eag, t));
                push(eag, lead, metrics::nan_mean(comp), band,
                     join_flags({st.degenerate_cells
                                     ? "degenerate=" + std::to_string(st.degenerate_cells)
                                     : "",
                                 "convention=mean_over_dims"}));
                push(eag_sum, lead, metrics::nan_mean(comp) * D, no_band, "convention=sum_over_dims");
                for (int d = 0; d < D; ++d) {
                    const VectorXd comp_d =
                        metrics::per_ic_err_acc_gauss(ens, reference, t, d, nullptr);
                    const auto band_d = metrics::bootstrap_band(comp_d, R, level,
                                                                cb.band_seed(eag_dim[d], t));
                    push(eag_dim[d], lead, metrics::nan_mean(comp_d), band_d, "");
                }

                metrics::SkipStats sth;
                const VectorXd hist = metrics::per_ic_err_acc_hist(ens, reference, t,
                                                                   cfg.eval.hist_bins, -1, &sth);
                const auto hband = metrics::bootstrap_band(hist, R, level, cb.band_seed(eah, t));
                push(eah, lead, metrics::nan_mean(hist), hband,
                     sth.degenerate_cells ? "degenerate=" + std::to_string(sth.degenerate_cells)
                                          : "");
            }

            // explosion rate: exploded members (by this lead) / members, over ICs
            {
                double exploded = 0.0, total = 0.0;
                for (const auto& e : ens) {
                    for (int n = 0; n < e.members; ++n) {
                        total += 1.0;
                        if (!e.usable(n, t)) exploded += 1.0;
                    }
                }
                push(explosion, lead, exploded / total, no_band, "");
            }
        }

        curves.push_back(std::move(rmse));
        for (auto& c : rmse_dim) curves.push_back(std::move(c));
        curves.push_back(std::move(spread));
        curves.push_back(std::move(ratio));
        for (auto& c : ratio_dim) curves.push_back(std::move(c));
        curves.push_back(std::move(ss_local));
        curves.push_back(std::move(crps));
        curves.push_back(std::move(eag));
        for (auto& c : eag_dim) curves.push_back(std::move(c));
        curves.push_back(std::move(eag_sum));
        curves.push_back(std::move(eah));
        curves.push_back(std::move(explosion));
    }

    write_metric_csv(cfg.csv_path(), curves);

    const double wall = std::chrono::duration<double>(Clock::now() - t0).count();
    nlohmann::json extra;
    extra["csv"] = cfg.csv_path().string();
    extra["n_ic"] = M;
    extra["n_members"] = cfg.eval.n_members;
    extra["horizon"] = T;
    extra["models"] = cfg.eval.models;
    extra["reference"] = cfg.eval.reference;
    write_run_metadata(cfg, "evaluate", wall, extra);

    std::cout << "evaluated " << cfg.eval.models.size() << " models over " << M << " ICs, horizon "
              << T << " -> " << cfg.csv_path().string() << "\n";
    return curves;
}

int cmd_report(const std::filesystem::path& csv, const std::filesystem::path& out_dir) {
    const auto curves = read_metric_csv(csv);
    if (curves.empty()) {
        std::cerr << "warning: " << csv.string() << " has no metric rows; nothing to render\n";
        return 0;
    }
    const int n = write_report(out_dir, curves);
    std::cout << "wrote " << n << " figure(s) to " << out_dir.string() << "\n";
    return n;
}

}  // namespace erracc::harness
