#include <catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "speclen/rng.hpp"
#include "speclen/spectral.hpp"

using namespace speclen;

namespace {

Matrix random_symmetric(Eigen::Index d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            m(i, j) = rng.gauss();
            m(j, i) = m(i, j);
        }
    return m;
}

FeatureMatrix random_features(Eigen::Index k, Eigen::Index d, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(k, d);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rng.gauss();
    return FeatureMatrix(std::move(m));
}

}  // namespace

TEST_CASE("empirical covariance basic cases") {
    SECTION("single row outer product") {
        Matrix x(1, 2);
        x << 1.0, 0.0;
        const auto cov = empirical_covariance(FeatureMatrix(x));
        CHECK(cov.m(0, 0) == 1.0);
        CHECK(cov.m(0, 1) == 0.0);
        CHECK(cov.m(1, 0) == 0.0);
        CHECK(cov.m(1, 1) == 0.0);
    }
    SECTION("standard basis of R3 gives I/3") {
        const auto cov = empirical_covariance(FeatureMatrix(Matrix::Identity(3, 3)));
        CHECK((cov.m - Matrix::Identity(3, 3) / 3.0).cwiseAbs().maxCoeff() < 1e-15);
    }
    SECTION("law of large numbers against direct outer-product averaging") {
        const Eigen::Index n = 500;
        Rng rng(7);
        Matrix x(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            x(i, 0) = std::sqrt(2.0) * rng.gauss();
            x(i, 1) = rng.gauss();
        }
        const auto cov = empirical_covariance(FeatureMatrix(x));
        Matrix oracle = Matrix::Zero(2, 2);
        for (Eigen::Index i = 0; i < n; ++i)
            oracle += x.row(i).transpose() * x.row(i) / static_cast<double>(n);
        CHECK((cov.m - oracle).cwiseAbs().maxCoeff() < 1e-12);
        Matrix target(2, 2);
        target << 2.0, 0.0, 0.0, 1.0;
        CHECK((cov.m - target).cwiseAbs().maxCoeff() < 0.2);
    }
    SECTION("input validation") {
        Matrix bad(1, 1);
        bad(0, 0) = std::nan("");
        CHECK_THROWS_AS(FeatureMatrix(bad), validation_error);
        Matrix one(1, 2);
        one << 1.0, 2.0;
        CHECK_THROWS_AS(empirical_covariance(FeatureMatrix(one), true), validation_error);
    }
}

TEST_CASE("empirical covariance properties") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto x = random_features(30, 6, seed);
        const auto cov = empirical_covariance(x);
        const auto dec = symmetric_eigen(cov);
        const double lmax = dec.eigenvalues[0];
        CHECK(dec.eigenvalues[5] >= -1e-8 * lmax);

        FeatureMatrix scaled(Matrix(3.0 * x.data));
        const auto cov_scaled = empirical_covariance(scaled);
        CHECK((cov_scaled.m - 9.0 * cov.m).cwiseAbs().maxCoeff() <=
              1e-12 * cov_scaled.m.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("jacobi eigensolver exact cases") {
    SECTION("identity") {
        const auto dec = symmetric_eigen(CovarianceMatrix(Matrix::Identity(4, 4), 0));
        for (int i = 0; i < 4; ++i) CHECK_THAT(dec.eigenvalues[i], Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    SECTION("analytic 2x2") {
        Matrix m(2, 2);
        m << 2.0, 1.0, 1.0, 2.0;
        const auto dec = symmetric_eigen(CovarianceMatrix(m, 0));
        CHECK_THAT(dec.eigenvalues[0], Catch::Matchers::WithinAbs(3.0, 1e-12));
        CHECK_THAT(dec.eigenvalues[1], Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    SECTION("closed-form 3x3 with known spectrum") {
        // circulant-like symmetric matrix with eigenvalues a+2b, a-b, a-b
        const double a = 5.0, b = 1.5;
        Matrix m(3, 3);
        m << a, b, b, b, a, b, b, b, a;
        const auto dec = symmetric_eigen(CovarianceMatrix(m, 0));
        CHECK_THAT(dec.eigenvalues[0], Catch::Matchers::WithinAbs(a + 2 * b, 1e-10));
        CHECK_THAT(dec.eigenvalues[1], Catch::Matchers::WithinAbs(a - b, 1e-10));
        CHECK_THAT(dec.eigenvalues[2], Catch::Matchers::WithinAbs(a - b, 1e-10));
    }
}

TEST_CASE("jacobi matches an independent solver on random symmetric matrices") {
    for (std::uint64_t seed : {3, 17, 91}) {
        for (Eigen::Index d : {8, 13, 20}) {
            const Matrix m = random_symmetric(d, seed + static_cast<std::uint64_t>(d));
            const auto dec = symmetric_eigen(CovarianceMatrix(m, 0));
            Eigen::SelfAdjointEigenSolver<Matrix> oracle(m);
            Vector oracle_desc = oracle.eigenvalues().reverse();
            for (Eigen::Index i = 0; i < d; ++i)
                CHECK_THAT(dec.eigenvalues[i], Catch::Matchers::WithinAbs(oracle_desc[i], 1e-6));

            const Matrix recon = dec.eigenvectors * dec.eigenvalues.asDiagonal() *
                                 dec.eigenvectors.transpose();
            CHECK((recon - m).norm() <= 1e-8 * std::max(1.0, m.norm()));
            CHECK((dec.eigenvectors.transpose() * dec.eigenvectors - Matrix::Identity(d, d))
                      .cwiseAbs()
                      .maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("eigenvalue trace and Frobenius identities") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix m = random_symmetric(9, 100 + seed);
        const auto dec = symmetric_eigen(CovarianceMatrix(m, 0));
        CHECK_THAT(dec.eigenvalues.sum(),
                   Catch::Matchers::WithinRel(m.trace(), 1e-8));
        CHECK_THAT(dec.eigenvalues.squaredNorm(),
                   Catch::Matchers::WithinRel(m.squaredNorm(), 1e-8));
    }
}

TEST_CASE("eigensolver rejects asymmetric input") {
    Matrix m(2, 2);
    m << 1.0, 0.5, 0.0, 1.0;
    CHECK_THROWS_AS(CovarianceMatrix(m, 0), validation_error);
}

TEST_CASE("spectral summary fields") {
    SECTION("identity") {
        const auto s = spectral_summary(diag_covariance(Vector::Ones(6)));
        CHECK_THAT(s.r_eff, Catch::Matchers::WithinAbs(6.0, 1e-12));
        CHECK_THAT(s.r_eff_tr, Catch::Matchers::WithinAbs(6.0, 1e-12));
        CHECK(s.lambda_min == 1.0);
        CHECK(s.op_norm == 1.0);
    }
    SECTION("diag(4,1,1,1,1) arithmetic") {
        Vector ev(5);
        ev << 4, 1, 1, 1, 1;
        const auto s = spectral_summary(diag_covariance(ev), 0.2);
        CHECK_THAT(s.r_eff, Catch::Matchers::WithinAbs(2.0, 1e-12));
        CHECK_THAT(s.r_eff_tr, Catch::Matchers::WithinAbs(3.2, 1e-12));
        CHECK(s.lambda_q == 1.0);
    }
    SECTION("explicit zero eigenvalue") {
        Vector ev(5);
        ev << 1, 1, 1, 1, 0;
        const auto s = spectral_summary(diag_covariance(ev), 0.2, 1e-6);
        CHECK(s.rank == 4);
        CHECK(s.lambda_min == 0.0);
        CHECK(s.lambda_q == 0.0);
        CHECK(s.lambda_r == 1.0);
    }
    SECTION("q=0 means lambda_min") {
        Vector ev(4);
        ev << 3, 2, 1, 0.5;
        const auto s = spectral_summary(diag_covariance(ev), 0.0);
        CHECK(s.lambda_q == 0.5);
    }
    SECTION("scale invariance of effective ranks") {
        Vector ev(7);
        ev << 9, 5, 3, 2, 1, 0.5, 0.1;
        const auto a = spectral_summary(diag_covariance(ev));
        const auto b = spectral_summary(diag_covariance(Vector(17.0 * ev)));
        CHECK_THAT(a.r_eff, Catch::Matchers::WithinRel(b.r_eff, 1e-12));
        CHECK_THAT(a.r_eff_tr, Catch::Matchers::WithinRel(b.r_eff_tr, 1e-12));
    }
    SECTION("range invariants on random spectra") {
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            Rng rng(700 + seed);
            Vector ev(10);
            for (int i = 0; i < 10; ++i) ev[i] = std::abs(rng.gauss()) + 0.01;
            std::sort(ev.data(), ev.data() + 10, std::greater<double>());
            const auto s = summarize_spectrum(ev, 0.3);
            CHECK(s.r_eff >= 1.0);
            CHECK(s.r_eff <= 10.0 + 1e-12);
            CHECK(s.r_eff_tr >= 1.0);
            CHECK(s.r_eff_tr <= 10.0 + 1e-12);
            CHECK(s.lambda_min <= s.lambda_q);
            CHECK(s.lambda_q <= s.op_norm);
            CHECK_THAT(s.trace, Catch::Matchers::WithinRel(ev.sum(), 1e-8));
        }
    }
}

TEST_CASE("effective rank variants") {
    SECTION("energy rank on a flat spectrum") {
        const auto s = spectral_summary(diag_covariance(Vector::Ones(4)));
        CHECK(effective_rank_variants(s, 0.5, 0.0).energy_rank == 2);
    }
    SECTION("threshold rank count") {
        Vector ev(3);
        ev << 10, 1, 0.1;
        const auto s = spectral_summary(diag_covariance(ev));
        CHECK(effective_rank_variants(s, 0.9, 0.05).threshold_rank == 2);
    }
    SECTION("trace rank is the ceiling of r_eff_tr") {
        Vector ev(5);
        ev << 4, 1, 1, 1, 1;
        const auto s = spectral_summary(diag_covariance(ev));
        CHECK(effective_rank_variants(s, 0.9, 0.0).trace_rank == 4);
    }
    SECTION("degenerate spectrum rejected") {
        const auto s = summarize_spectrum(Vector::Zero(3));
        CHECK_THROWS_AS(effective_rank_variants(s, 0.9, 0.1), precondition_error);
    }
}
