#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "speclen/bounds.hpp"
#include "speclen/io.hpp"
#include "speclen/ridge.hpp"
#include "speclen/synth.hpp"
#include "speclen/two_stage.hpp"

namespace speclen {

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel log_level_from_env() {
    const char* v = std::getenv("SPG_LOG_LEVEL");
    if (!v) return LogLevel::warn;
    const std::string s(v);
    if (s == "error") return LogLevel::error;
    if (s == "warn") return LogLevel::warn;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    throw validation_error("SPG_LOG_LEVEL must be one of error, warn, info, debug");
}

inline void log(LogLevel at, LogLevel msg_level, const std::string& tag,
                const std::string& message) {
    if (msg_level <= at) std::cerr << "[" << tag << "] " << message << "\n";
}

struct CliOptions {
    std::string command;
    std::string config_path;
    std::optional<long long> seed;
    std::optional<std::string> out;
    std::optional<int> threads;
};

namespace cli_detail {

inline double get_number(const Json& obj, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw validation_error("key '" + key + "' must be a number");
    return obj[key].get<double>();
}

inline long long get_integer(const Json& obj, const std::string& key, long long fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) throw validation_error("key '" + key + "' must be an integer");
    return obj[key].get<long long>();
}

inline std::string get_string(const Json& obj, const std::string& key,
                              const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) throw validation_error("key '" + key + "' must be a string");
    return obj[key].get<std::string>();
}

inline TargetSpec parse_target(const Json& config) {
    if (!config.contains("target")) throw validation_error("config is missing the target section");
    const Json& t = config["target"];
    require_keys(t, "target", {"delta", "xi", "sigma"});
    TargetSpec spec;
    spec.delta = get_number(t, "delta", spec.delta);
    spec.xi = get_number(t, "xi", spec.xi);
    spec.sigma = get_number(t, "sigma", spec.sigma);
    spec.validate();
    return spec;
}

inline BoundConstants parse_constants(const Json& config) {
    BoundConstants c;
    if (!config.contains("constants")) return c;
    const Json& j = config["constants"];
    require_keys(j, "constants", {"c_opnorm", "c_prime", "c_dprime", "c1"});
    if (j.contains("c1")) c = BoundConstants::with_c1(get_number(j, "c1", c.c1));
    c.c_opnorm = get_number(j, "c_opnorm", c.c_opnorm);
    c.c_prime = get_number(j, "c_prime", c.c_prime);
    c.c_dprime = get_number(j, "c_dprime", c.c_dprime);
    c.validate();
    return c;
}

inline GeneratorKind parse_kind(const std::string& s) {
    if (s == "gaussian") return GeneratorKind::gaussian;
    if (s == "sphere") return GeneratorKind::sphere;
    if (s == "rademacher") return GeneratorKind::rademacher;
    if (s == "student_t") return GeneratorKind::student_t;
    if (s == "drifted") return GeneratorKind::drifted;
    if (s == "ar1") return GeneratorKind::ar1;
    throw validation_error("unknown generator kind: " + s);
}

// generator: {kind, dim, eigenvalues | scale, nu, epsilon, rho}
inline GeneratorConfig parse_generator(const Json& config, std::uint64_t seed) {
    if (!config.contains("generator"))
        throw validation_error("config is missing the generator section");
    const Json& g = config["generator"];
    require_keys(g, "generator", {"kind", "dim", "eigenvalues", "scale", "nu", "epsilon", "rho"});

    GeneratorConfig out;
    out.kind = parse_kind(get_string(g, "kind", "gaussian"));
    out.seed = seed;

    if (g.contains("eigenvalues")) {
        if (!g["eigenvalues"].is_array() || g["eigenvalues"].empty())
            throw validation_error("generator.eigenvalues must be a nonempty array");
        Vector ev(static_cast<Eigen::Index>(g["eigenvalues"].size()));
        for (Eigen::Index i = 0; i < ev.size(); ++i) {
            const Json& e = g["eigenvalues"][static_cast<std::size_t>(i)];
            if (!e.is_number()) throw validation_error("generator.eigenvalues must be numeric");
            ev[i] = e.get<double>();
        }
        out.sigma_matrix = diag_covariance(ev);
    } else {
        const long long dim = get_integer(g, "dim", 0);
        if (dim < 1) throw validation_error("generator needs eigenvalues or a positive dim");
        const double scale = get_number(g, "scale", 1.0);
        out.sigma_matrix = diag_covariance(scale * Vector::Ones(dim));
    }
    if (g.contains("nu")) out.nu = get_number(g, "nu", 0.0);
    if (g.contains("epsilon")) out.epsilon = get_number(g, "epsilon", 0.0);
    if (g.contains("rho")) out.rho = get_number(g, "rho", 0.0);
    out.validate();
    return out;
}

inline Json summary_json(const SpectralSummary& s) {
    Json j;
    j["d"] = s.eigenvalues.size();
    j["lambda_min"] = s.lambda_min;
    j["op_norm"] = s.op_norm;
    j["trace"] = s.trace;
    j["frob_norm"] = s.frob_norm;
    j["r_eff"] = s.r_eff;
    j["r_eff_tr"] = s.r_eff_tr;
    j["rank"] = s.rank;
    return j;
}

inline Json knee_json(const KneeEstimate& k) {
    Json j;
    j["k_knee"] = k.k_knee;
    j["split_index"] = k.split_index;
    j["sse"] = k.sse;
    j["ci_low"] = k.ci_low;
    j["ci_high"] = k.ci_high;
    j["bootstrap_count"] = k.bootstrap_count;
    j["k_bagged"] = k.k_bagged;
    return j;
}

inline std::string timestamp_utc() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline std::vector<CalibrationTask> read_task_csv(const std::string& path) {
    // rows: id,knee,delta,xi,ev1,ev2,...
    const auto lines = detail::read_lines(path);
    std::vector<CalibrationTask> tasks;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cells = detail::split_csv_line(lines[i]);
        double probe;
        if (i == 0 && cells.size() > 1 && !detail::parse_double(cells[1], probe)) continue;
        if (cells.size() < 5)
            throw validation_error("task file row " + std::to_string(i + 1) +
                                   ": expected id,knee,delta,xi,eigenvalues...");
        CalibrationTask task;
        task.id = cells[0];
        double knee, delta, xi;
        if (!detail::parse_double(cells[1], knee) || !detail::parse_double(cells[2], delta) ||
            !detail::parse_double(cells[3], xi))
            throw validation_error("task file row " + std::to_string(i + 1) +
                                   ": cannot parse knee/delta/xi");
        task.knee = static_cast<long long>(knee);
        task.spec.delta = delta;
        task.spec.xi = xi;
        Vector ev(static_cast<Eigen::Index>(cells.size() - 4));
        for (std::size_t j = 4; j < cells.size(); ++j)
            if (!detail::parse_double(cells[j], ev[static_cast<Eigen::Index>(j - 4)]))
                throw validation_error("task file row " + std::to_string(i + 1) + " column " +
                                       std::to_string(j + 1) + ": cannot parse eigenvalue");
        std::sort(ev.data(), ev.data() + ev.size(), std::greater<double>());
        task.summary = summarize_spectrum(ev);
        tasks.push_back(std::move(task));
    }
    if (tasks.empty()) throw validation_error("task file has no data rows: " + path);
    return tasks;
}

}  // namespace cli_detail

inline Report cmd_estimate(const Json& config, std::uint64_t seed) {
    using namespace cli_detail;
    const TargetSpec spec = parse_target(config);
    const BoundConstants constants = parse_constants(config);
    const Json est = config.contains("estimate") ? config["estimate"] : Json::object();
    require_keys(est, "estimate", {"mode", "k0_init", "k0_cap", "alpha", "q"});
    const std::string mode = get_string(est, "mode", "two_stage");

    Report report;
    report.command = "estimate";
    Json& r = report.results;

    const bool from_file = config.contains("features_csv");
    if (mode == "direct") {
        SpectralSummary summary;
        if (from_file) {
            const FeatureMatrix features =
                read_feature_csv(config["features_csv"].get<std::string>());
            summary = spectral_summary(empirical_covariance(features));
            r["k_source"] = features.k();
        } else {
            summary = spectral_summary(parse_generator(config, seed).sigma_matrix);
        }
        r["spectrum"] = summary_json(summary);
        r["k_simplified"] = k_simplified(summary, spec, constants.c_prime);
        try {
            r["k_explicit"] = k_explicit(summary, spec, constants);
        } catch (const cap_exceeded_error& e) {
            r["k_explicit_capped"] = true;
            r["k_explicit_fallback"] = e.fallback_k();
        }
    } else if (mode == "two_stage") {
        std::optional<SampleSource> source;
        if (from_file)
            source.emplace(read_feature_csv(config["features_csv"].get<std::string>()));
        else
            source.emplace(parse_generator(config, seed));
        const long long k0_init = get_integer(est, "k0_init", 100);
        const long long k0_cap = get_integer(est, "k0_cap", 1LL << 20);
        const TwoStageResult ts = run_two_stage(*source, spec, constants, k0_init, k0_cap);
        r["k0_final"] = ts.k0_final;
        r["doublings"] = ts.doublings;
        r["lcb"] = ts.lcb;
        r["delta_hat"] = ts.delta_hat;
        r["k_second"] = ts.k_second;
        r["k_final"] = ts.k_final;
        r["spectrum"] = summary_json(ts.stage1_summary);
        r["pooled_lambda_min"] = ts.pooled_summary.lambda_min;
    } else {
        throw validation_error("estimate.mode must be 'two_stage' or 'direct'");
    }

    if (est.contains("alpha")) {
        CalibrationParams params;
        params.alpha = get_number(est, "alpha", 1.0);
        params.q = get_number(est, "q", 0.1);
        params.validate();
        SpectralSummary summary;
        if (from_file) {
            summary = spectral_summary(
                empirical_covariance(read_feature_csv(config["features_csv"].get<std::string>())));
        } else {
            summary = spectral_summary(parse_generator(config, seed).sigma_matrix);
        }
        r["k_calibrated"] = k_calibrated(summary, spec, params);
    }
    return report;
}

inline Report cmd_knee(const Json& config, std::uint64_t seed) {
    using namespace cli_detail;
    if (!config.contains("knee")) throw validation_error("config is missing the knee section");
    const Json& kj = config["knee"];
    require_keys(kj, "knee", {"curve_csv", "k_theory", "resamples", "level"});
    if (!kj.contains("curve_csv")) throw validation_error("knee.curve_csv is required");

    const PerformanceCurve curve = read_curve_csv(kj["curve_csv"].get<std::string>());
    const auto resamples = static_cast<std::size_t>(get_integer(kj, "resamples", 200));
    const double level = get_number(kj, "level", 0.95);
    const KneeEstimate knee = bootstrap_knee(curve, resamples, level, seed);

    Report report;
    report.command = "knee";
    report.results["knee"] = knee_json(knee);
    if (kj.contains("k_theory")) {
        const long long kt = get_integer(kj, "k_theory", 0);
        report.results["k_theory"] = kt;
        report.results["error_ratio"] = error_ratio(kt, knee);
    }
    return report;
}

inline Report cmd_stress(const Json& config, std::uint64_t seed,
                         const std::optional<std::string>& out_path) {
    using namespace cli_detail;
    if (!config.contains("stress")) throw validation_error("config is missing the stress section");
    const Json& sj = config["stress"];
    require_keys(sj, "stress",
                 {"axis", "strengths", "k_grid", "replicates", "metric", "resamples", "level",
                  "plot_out"});

    const std::string axis_name = get_string(sj, "axis", "drift");
    StressAxis axis;
    if (axis_name == "drift") axis = StressAxis::drift;
    else if (axis_name == "tails") axis = StressAxis::tails;
    else if (axis_name == "dependence") axis = StressAxis::dependence;
    else throw validation_error("stress.axis must be drift, tails or dependence");

    if (!sj.contains("strengths") || !sj["strengths"].is_array())
        throw validation_error("stress.strengths must be an array");
    std::vector<double> strengths;
    for (const auto& v : sj["strengths"]) strengths.push_back(v.get<double>());

    StressOptions options;
    if (sj.contains("k_grid")) {
        for (const auto& v : sj["k_grid"]) options.k_grid.push_back(v.get<long long>());
    } else {
        throw validation_error("stress.k_grid is required");
    }
    options.replicates = get_integer(sj, "replicates", options.replicates);
    options.bootstrap_resamples =
        static_cast<std::size_t>(get_integer(sj, "resamples", 200));
    options.ci_level = get_number(sj, "level", options.ci_level);
    const std::string metric = get_string(sj, "metric", "lambda_min");
    if (metric == "lambda_min") options.metric = CurveMetric::lambda_min;
    else if (metric == "ridge_accuracy") options.metric = CurveMetric::ridge_accuracy;
    else throw validation_error("stress.metric must be lambda_min or ridge_accuracy");

    const TargetSpec spec = parse_target(config);
    const BoundConstants constants = parse_constants(config);
    const GeneratorConfig base = parse_generator(config, seed);
    const StressReport stress = run_stress_suite(axis, strengths, base, spec, constants, options);

    Report report;
    report.command = "stress";
    Json rows = Json::array();
    for (const auto& row : stress.rows) {
        Json jr;
        jr["strength"] = row.strength;
        jr["k_nominal"] = row.k_nominal;
        jr["k_emp"] = row.k_emp;
        jr["ci_low"] = row.ci_low;
        jr["ci_high"] = row.ci_high;
        jr["delta_k"] = row.delta_k;
        rows.push_back(jr);
    }
    report.results["axis"] = axis_name;
    report.results["rows"] = rows;
    report.results["trend"] = {{"slope", stress.trend.slope},
                               {"r_squared", stress.trend.r_squared},
                               {"monotone", stress.trend.monotone}};

    const std::string plot_path = get_string(
        sj, "plot_out", out_path ? *out_path + ".plot.csv" : std::string("stress_plot.csv"));
    std::ofstream plot(plot_path);
    if (!plot) throw validation_error("cannot write plot file: " + plot_path);
    plot << "strength,k_nominal,k_emp,ci_low,ci_high,delta_k\n";
    for (const auto& row : stress.rows)
        plot << detail::format_double(row.strength) << ',' << row.k_nominal << ',' << row.k_emp
             << ',' << row.ci_low << ',' << row.ci_high << ',' << row.delta_k << '\n';
    report.results["plot_out"] = plot_path;
    return report;
}

inline Report cmd_calibrate(const Json& config, std::uint64_t seed) {
    using namespace cli_detail;
    if (!config.contains("calibrate"))
        throw validation_error("config is missing the calibrate section");
    const Json& cj = config["calibrate"];
    require_keys(cj, "calibrate",
                 {"kind", "target", "grid", "anchor", "trials", "xi", "delta_fraction",
                  "misspec_nu", "tasks_csv", "holdout_csv", "q"});

    Report report;
    report.command = "calibrate";
    const std::string kind = get_string(cj, "kind", "constants");

    if (kind == "constants") {
        const std::string target_name = get_string(cj, "target", "c2");
        CalibrationTarget target;
        if (target_name == "c2") target = CalibrationTarget::c2;
        else if (target_name == "c_prime") target = CalibrationTarget::c_prime;
        else throw validation_error("calibrate.target must be c2 or c_prime");

        if (!cj.contains("grid") || !cj["grid"].is_array())
            throw validation_error("calibrate.grid must be an array of [d, n] pairs");
        std::vector<std::pair<Eigen::Index, long long>> grid;
        for (const auto& cell : cj["grid"]) {
            if (!cell.is_array() || cell.size() != 2)
                throw validation_error("calibrate.grid entries must be [d, n] pairs");
            grid.emplace_back(cell[0].get<Eigen::Index>(), cell[1].get<long long>());
        }
        CalibrationOptions options;
        options.trials = get_integer(cj, "trials", options.trials);
        options.xi = get_number(cj, "xi", options.xi);
        options.delta_fraction = get_number(cj, "delta_fraction", options.delta_fraction);
        options.misspec_nu = get_number(cj, "misspec_nu", options.misspec_nu);
        options.seed = seed;
        const double anchor = get_number(cj, "anchor", 0.95);

        const ConstantCalibrationReport cal = calibrate_constants(target, grid, anchor, options);
        report.results["constant"] = target_name;
        report.results["fitted_value"] = cal.fitted_value;
        report.results["anchor_quantile"] = cal.anchor_quantile;
        report.results["inflation_flag"] = cal.inflation_flag;
        report.results["kurtosis_adjustment"] = cal.kurtosis_adjustment;
        report.results["misspec_fitted"] = cal.misspec_fitted;
    } else if (kind == "alpha") {
        if (!cj.contains("tasks_csv")) throw validation_error("calibrate.tasks_csv is required");
        const auto tasks = read_task_csv(cj["tasks_csv"].get<std::string>());
        const double q = get_number(cj, "q", 0.1);
        const CalibrationParams params = fit_alpha(tasks, q);
        report.results["alpha"] = params.alpha;
        report.results["q"] = params.q;
        report.results["fitted_on"] = params.fitted_on;
        if (cj.contains("holdout_csv")) {
            const auto holdout = read_task_csv(cj["holdout_csv"].get<std::string>());
            Json ratios = Json::array();
            std::vector<double> rs;
            for (const auto& task : holdout) {
                const long long kc = k_calibrated(task.summary, task.spec, params);
                const double ratio =
                    static_cast<double>(kc) / static_cast<double>(task.knee);
                ratios.push_back({{"id", task.id}, {"ratio", ratio}});
                rs.push_back(ratio);
            }
            std::sort(rs.begin(), rs.end());
            const std::size_t n = rs.size();
            report.results["holdout_ratios"] = ratios;
            report.results["holdout_median_ratio"] =
                n % 2 ? rs[n / 2] : 0.5 * (rs[n / 2 - 1] + rs[n / 2]);
        }
    } else {
        throw validation_error("calibrate.kind must be constants or alpha");
    }
    return report;
}

inline Report cmd_variance_check(const Json& config, std::uint64_t seed) {
    using namespace cli_detail;
    if (!config.contains("variance_check"))
        throw validation_error("config is missing the variance_check section");
    const Json& vj = config["variance_check"];
    require_keys(vj, "variance_check",
                 {"k", "trials", "lambda_reg", "noise_sigma", "feature_bound"});

    const TargetSpec spec = parse_target(config);
    GeneratorConfig generator = parse_generator(config, seed);
    RidgeProxyConfig ridge;
    ridge.lambda_reg = get_number(vj, "lambda_reg", ridge.lambda_reg);
    ridge.noise_sigma = get_number(vj, "noise_sigma", ridge.noise_sigma);
    ridge.feature_bound = get_number(vj, "feature_bound", ridge.feature_bound);
    const long long k = get_integer(vj, "k", 0);
    const long long trials = get_integer(vj, "trials", 1000);

    const VariancePropositionCheck check =
        check_variance_proposition(ridge, generator, k, spec.delta, trials);
    Report report;
    report.command = "variance-check";
    report.results["violations"] = check.violations;
    report.results["qualifying_trials"] = check.qualifying_trials;
    report.results["max_ratio"] = check.max_ratio;
    return report;
}

inline Report cmd_gen(const Json& config, std::uint64_t seed,
                      const std::optional<std::string>& out_path) {
    using namespace cli_detail;
    if (!config.contains("gen")) throw validation_error("config is missing the gen section");
    const Json& gj = config["gen"];
    require_keys(gj, "gen", {"k", "out"});
    const long long k = get_integer(gj, "k", 0);
    const std::string path = out_path ? *out_path : get_string(gj, "out", "");
    if (path.empty()) throw validation_error("gen needs --out or gen.out");

    const GeneratorConfig generator = parse_generator(config, seed);
    const FeatureMatrix features = generate(generator, k);
    write_feature_csv(path, features);

    Report report;
    report.command = "gen";
    report.results["k"] = features.k();
    report.results["d"] = features.d();
    report.results["out"] = path;
    return report;
}

inline Report run_command(const CliOptions& options) {
    const Json config = read_config(options.config_path);
    require_keys(config, "config root",
                 {"schema_version", "seed", "target", "constants", "generator", "features_csv",
                  "estimate", "knee", "stress", "calibrate", "variance_check", "gen"});

    std::uint64_t seed = 0;
    if (config.contains("seed")) {
        if (!config["seed"].is_number_integer())
            throw validation_error("seed must be an integer");
        seed = config["seed"].get<std::uint64_t>();
    }
    if (options.seed) seed = static_cast<std::uint64_t>(*options.seed);

    const LogLevel level = log_level_from_env();
    log(level, LogLevel::info, "cli",
        "command " + options.command + " seed " + std::to_string(seed));

    Report report;
    if (options.command == "estimate") report = cmd_estimate(config, seed);
    else if (options.command == "knee") report = cmd_knee(config, seed);
    else if (options.command == "stress") report = cmd_stress(config, seed, options.out);
    else if (options.command == "calibrate") report = cmd_calibrate(config, seed);
    else if (options.command == "variance-check") report = cmd_variance_check(config, seed);
    else if (options.command == "gen") report = cmd_gen(config, seed, options.out);
    else throw validation_error("unknown command: " + options.command);

    report.inputs_echo = config;
    report.inputs_echo["seed"] = seed;
    report.provenance = {{"seed", seed},
                         {"version", tool_version},
                         {"timestamp", cli_detail::timestamp_utc()}};
    return report;
}

// 0 success, 2 validation/parse error, 3 mathematical precondition error
inline int run_cli(const CliOptions& options, std::ostream& out_stream, std::ostream& err_stream) {
    try {
        const Report report = run_command(options);
        if (options.out && options.command != "gen") {
            write_report(*options.out, report);
        } else {
            out_stream << report.to_json().dump(2) << "\n";
        }
        return 0;
    } catch (const precondition_error& e) {
        err_stream << "precondition error: " << e.what() << "\n";
        return 3;
    } catch (const validation_error& e) {
        err_stream << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err_stream << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace speclen
