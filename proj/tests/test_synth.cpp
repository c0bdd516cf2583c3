#include <catch_amalgamated.hpp>

#include <cmath>

#include "speclen/synth.hpp"

using namespace speclen;

namespace {

GeneratorConfig make_config(GeneratorKind kind, Vector eigenvalues, std::uint64_t seed) {
    GeneratorConfig c;
    c.kind = kind;
    c.sigma_matrix = diag_covariance(eigenvalues);
    c.seed = seed;
    return c;
}

double max_cov_error(const GeneratorConfig& config, long long k) {
    const auto cov = empirical_covariance(generate(config, k));
    return (cov.m - config.sigma_matrix.m).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("generator population faithfulness") {
    const long long k = 20000;
    Vector ev(4);
    ev << 2.0, 1.0, 0.7, 0.4;
    const double tol = 5.0 / std::sqrt(static_cast<double>(k)) * 2.0;

    SECTION("gaussian") {
        auto c = make_config(GeneratorKind::gaussian, ev, 1);
        CHECK(max_cov_error(c, k) < tol);
    }
    SECTION("gaussian identity LLN example") {
        auto c = make_config(GeneratorKind::gaussian, Vector::Ones(2), 1);
        CHECK(max_cov_error(c, 100000) < 0.03);
    }
    SECTION("sphere") {
        auto c = make_config(GeneratorKind::sphere, ev, 2);
        CHECK(max_cov_error(c, k) < tol);
    }
    SECTION("rademacher") {
        auto c = make_config(GeneratorKind::rademacher, ev, 3);
        CHECK(max_cov_error(c, k) < tol);
    }
    SECTION("student_t") {
        auto c = make_config(GeneratorKind::student_t, ev, 4);
        c.nu = 8.0;
        CHECK(max_cov_error(c, k) < 3.0 * tol);
    }
    SECTION("drifted keeps covariance near Sigma for small epsilon") {
        auto c = make_config(GeneratorKind::drifted, ev, 5);
        c.epsilon = 0.01;
        CHECK(max_cov_error(c, k) < tol + 0.01 * 0.01 + 0.02);
    }
    SECTION("ar1 stationarity independent of rho") {
        for (double rho : {0.0, 0.3, 0.7}) {
            auto c = make_config(GeneratorKind::ar1, ev, 6);
            c.rho = rho;
            CHECK(max_cov_error(c, 40000) < 2.0 * tol / std::sqrt(1.0 - rho));
        }
    }
}

TEST_CASE("ar1 with rho zero matches gaussian bit for bit") {
    Vector ev(3);
    ev << 1.5, 1.0, 0.25;
    auto g = make_config(GeneratorKind::gaussian, ev, 99);
    auto a = make_config(GeneratorKind::ar1, ev, 99);
    a.rho = 0.0;
    const auto xg = generate(g, 64);
    const auto xa = generate(a, 64);
    CHECK((xg.data - xa.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("generator validation") {
    Vector ev = Vector::Ones(3);
    SECTION("student_t needs nu above 2") {
        auto c = make_config(GeneratorKind::student_t, ev, 0);
        CHECK_THROWS_AS(c.validate(), validation_error);
        c.nu = 2.0;
        CHECK_THROWS_AS(c.validate(), precondition_error);
        c.nu = 2.5;
        CHECK_NOTHROW(c.validate());
    }
    SECTION("ar1 needs rho in [0,1)") {
        auto c = make_config(GeneratorKind::ar1, ev, 0);
        CHECK_THROWS_AS(c.validate(), validation_error);
        c.rho = 1.0;
        CHECK_THROWS_AS(c.validate(), validation_error);
    }
    SECTION("non-PSD sigma rejected") {
        Vector bad(2);
        bad << 1.0, -0.5;
        auto c = make_config(GeneratorKind::gaussian, bad, 0);
        CHECK_THROWS_AS(generate(c, 4), validation_error);
    }
    SECTION("determinism") {
        auto c = make_config(GeneratorKind::gaussian, ev, 31);
        CHECK((generate(c, 32).data - generate(c, 32).data).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("failure probability estimate") {
    Vector ev = Vector::Ones(4);
    auto c = make_config(GeneratorKind::gaussian, ev, 9);

    SECTION("delta zero never fails") {
        const auto est = estimate_failure_prob(c, 50, 0.0, 200);
        CHECK(est.p_hat == 0.0);
    }
    SECTION("impossible floor always fails") {
        const auto est = estimate_failure_prob(c, 8, 10.0, 200);
        CHECK(est.p_hat == 1.0);
    }
    SECTION("trial floor enforced") {
        CHECK_THROWS_AS(estimate_failure_prob(c, 10, 0.5, 99), validation_error);
    }
    SECTION("matches an independent re-implementation") {
        const long long trials = 2000;
        const auto est = estimate_failure_prob(c, 200, 0.5, trials);

        // separate stream, same distribution, straight Eigen solver
        Rng rng(777);
        long long failures = 0;
        for (long long t = 0; t < trials; ++t) {
            Matrix x(200, 4);
            for (Eigen::Index i = 0; i < 200; ++i)
                for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = rng.gauss();
            Eigen::SelfAdjointEigenSolver<Matrix> es(x.transpose() * x / 200.0);
            if (es.eigenvalues().minCoeff() < 0.5) ++failures;
        }
        const double p_oracle = static_cast<double>(failures) / trials;
        const double w_oracle = 1.96 * std::sqrt(p_oracle * (1.0 - p_oracle) / trials);
        CHECK(std::abs(est.p_hat - p_oracle) <= 3.0 * (est.ci_half_width + w_oracle));
    }
    SECTION("p_hat nonincreasing in k within CI slack") {
        double prev = 1.0, prev_w = 0.0;
        for (long long k : {20, 60, 180}) {
            const auto est = estimate_failure_prob(c, k, 0.5, 400);
            CHECK(est.p_hat <= prev + 2.0 * (prev_w + est.ci_half_width));
            prev = est.p_hat;
            prev_w = est.ci_half_width;
        }
    }
}

TEST_CASE("stability curve") {
    Vector ev = Vector::Ones(6);
    auto c = make_config(GeneratorKind::gaussian, ev, 17);
    const std::vector<long long> grid = {10, 20, 40, 80, 160};

    SECTION("lambda_min metric approaches the population floor") {
        const auto curve = stability_curve(c, {2000}, CurveMetric::lambda_min, 3);
        CHECK_THAT(curve.points[0].score, Catch::Matchers::WithinAbs(1.0, 0.15));
    }
    SECTION("deterministic rerun") {
        const auto a = stability_curve(c, grid, CurveMetric::lambda_min, 2);
        const auto b = stability_curve(c, grid, CurveMetric::lambda_min, 2);
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(a.points[i].score == b.points[i].score);
    }
    SECTION("replicates recorded per grid point") {
        const auto curve = stability_curve(c, grid, CurveMetric::lambda_min, 5);
        REQUIRE(curve.replicates.size() == grid.size());
        for (const auto& reps : curve.replicates) CHECK(reps.size() == 5);
        double mean = 0.0;
        for (double v : curve.replicates[2]) mean += v;
        CHECK_THAT(curve.points[2].score,
                   Catch::Matchers::WithinRel(mean / 5.0, 1e-12));
    }
    SECTION("ridge accuracy metric yields scores in [0,1]") {
        const auto curve = stability_curve(c, {10, 20, 40, 80}, CurveMetric::ridge_accuracy, 3);
        for (const auto& p : curve.points) {
            CHECK(p.score >= 0.0);
            CHECK(p.score <= 1.0);
        }
    }
}

TEST_CASE("diagnostics") {
    SECTION("gaussian kurtosis near 3") {
        auto c = make_config(GeneratorKind::gaussian, Vector::Ones(5), 3);
        const auto d = diagnostics(generate(c, 20000), 10000);
        CHECK_THAT(d.kurtosis_per_coordinate_mean, Catch::Matchers::WithinAbs(3.0, 0.2));
    }
    SECTION("student_t kurtosis well above 3") {
        auto c = make_config(GeneratorKind::student_t, Vector::Ones(5), 3);
        c.nu = 5.0;
        const auto d = diagnostics(generate(c, 20000), 10000);
        CHECK(d.kurtosis_per_coordinate_mean > 4.0);
    }
    SECTION("identical windows have zero drift stat") {
        Matrix block(50, 3);
        Rng rng(8);
        for (Eigen::Index i = 0; i < 50; ++i)
            for (Eigen::Index j = 0; j < 3; ++j) block(i, j) = rng.gauss();
        Matrix repeated(100, 3);
        repeated.topRows(50) = block;
        repeated.bottomRows(50) = block;
        const auto d = diagnostics(FeatureMatrix(repeated), 50);
        REQUIRE(d.drift_stat.size() == 2);
        CHECK(d.drift_stat[0] == 0.0);
        CHECK(d.drift_stat[1] < 1e-12);
    }
    SECTION("drift stat against a direct recomputation") {
        auto c = make_config(GeneratorKind::drifted, Vector::Constant(4, 0.01), 12);
        c.epsilon = 0.3;
        const auto x = generate(c, 400);
        const long long w = 100;
        const auto d = diagnostics(x, w);
        REQUIRE(d.drift_stat.size() == 4);

        auto win_cov = [&](long long j) {
            const Matrix b = x.data.middleRows(j * w, w);
            return Matrix(b.transpose() * b / static_cast<double>(w));
        };
        const Matrix first = win_cov(0);
        Eigen::SelfAdjointEigenSolver<Matrix> ef(first);
        const double base = std::max(std::abs(ef.eigenvalues().minCoeff()),
                                     std::abs(ef.eigenvalues().maxCoeff()));
        for (long long j = 1; j < 4; ++j) {
            Eigen::SelfAdjointEigenSolver<Matrix> ed(Matrix(win_cov(j) - first));
            const double dev = std::max(std::abs(ed.eigenvalues().minCoeff()),
                                        std::abs(ed.eigenvalues().maxCoeff()));
            CHECK_THAT(d.drift_stat[static_cast<std::size_t>(j)],
                       Catch::Matchers::WithinRel(dev / base, 1e-6));
        }
    }
    SECTION("insufficient samples rejected") {
        auto c = make_config(GeneratorKind::gaussian, Vector::Ones(2), 1);
        CHECK_THROWS_AS(diagnostics(generate(c, 30), 20), validation_error);
    }
}

TEST_CASE("stress suite basics") {
    Vector ev = Vector::Ones(8);
    auto base = make_config(GeneratorKind::gaussian, ev, 21);
    TargetSpec spec;
    spec.delta = 0.5;
    spec.xi = 0.1;
    BoundConstants constants;
    StressOptions options;
    options.k_grid = {16, 24, 36, 54, 80, 120, 180};
    options.replicates = 6;
    options.bootstrap_resamples = 50;

    SECTION("rows sorted with bracketing CIs and a filled trend") {
        const auto report = run_stress_suite(StressAxis::dependence, {0.0, 0.3, 0.6}, base,
                                             spec, constants, options);
        REQUIRE(report.rows.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto& r = report.rows[i];
            CHECK(r.ci_low <= r.k_emp);
            CHECK(r.k_emp <= r.ci_high);
            CHECK(r.delta_k == r.k_emp - r.k_nominal);
            if (i) CHECK(r.strength > report.rows[i - 1].strength);
        }
    }
    SECTION("unsorted strengths rejected") {
        CHECK_THROWS_AS(run_stress_suite(StressAxis::drift, {0.1, 0.0}, base, spec, constants,
                                         options),
                        validation_error);
        CHECK_THROWS_AS(
            run_stress_suite(StressAxis::drift, {}, base, spec, constants, options),
            validation_error);
    }
}

TEST_CASE("constant calibration") {
    CalibrationOptions options;
    options.trials = 500;
    options.seed = 3;

    SECTION("anchor zero is vacuous") {
        const auto rep = calibrate_constants(CalibrationTarget::c2, {{4, 40}}, 0.0, options);
        CHECK(rep.fitted_value == 0.0);
    }
    SECTION("student_t inflation flag matches a recomputation") {
        const std::vector<std::pair<Eigen::Index, long long>> grid = {{6, 30}};
        const auto rep = calibrate_constants(CalibrationTarget::c2, grid, 0.95, options);
        CHECK(rep.fitted_value > 0.0);
        CHECK(rep.misspec_fitted > rep.fitted_value);
        const bool expect_flag = rep.misspec_fitted > 1.5 * rep.fitted_value;
        CHECK(rep.inflation_flag == expect_flag);
        if (!expect_flag) CHECK(rep.kurtosis_adjustment == 0.0);
    }
    SECTION("grid validation") {
        CHECK_THROWS_AS(calibrate_constants(CalibrationTarget::c2, {}, 0.95, options),
                        validation_error);
        CHECK_THROWS_AS(calibrate_constants(CalibrationTarget::c2, {{10, 2}}, 0.95, options),
                        validation_error);
        CalibrationOptions few = options;
        few.trials = 100;
        CHECK_THROWS_AS(calibrate_constants(CalibrationTarget::c2, {{4, 40}}, 0.95, few),
                        validation_error);
    }
    SECTION("c_prime plateau route returns a positive constant") {
        CalibrationOptions fast = options;
        fast.trials = 150;
        const auto rep = calibrate_constants(CalibrationTarget::c_prime, {{6, 100}}, 0.95, fast);
        CHECK(rep.fitted_value > 0.0);
    }
}
