#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "speclen/errors.hpp"
#include "speclen/rng.hpp"
#include "speclen/spectral.hpp"

namespace speclen {

struct RidgeProxyConfig {
    double lambda_reg = 0.1;
    double noise_sigma = 1.0;
    double feature_bound = 1.0;  // B with ||phi(x)|| <= B for test points
    Vector planted_weights;      // f*(x) = <w, phi(x)>

    void validate() const {
        if (lambda_reg < 0.0) throw validation_error("ridge lambda must be nonnegative");
        if (noise_sigma <= 0.0) throw validation_error("noise sigma must be positive");
        if (feature_bound <= 0.0) throw validation_error("feature bound must be positive");
    }
};

// Closed-form conditional variance of the ridge prediction at test_point:
//   Var(f_hat(x*) | Phi) = sigma^2 * phi*^T A^{-1} (Phi^T Phi) A^{-1} phi*,
// with A = Phi^T Phi + lambda I.
inline double predictive_variance_exact(const FeatureMatrix& features,
                                        const RidgeProxyConfig& config, const Vector& test_point) {
    features.validate();
    config.validate();
    if (test_point.size() != features.d())
        throw validation_error("test point dimension mismatch");

    const Matrix gram = features.data.transpose() * features.data;  // K * Sigma_hat
    Matrix a = gram;
    a.diagonal().array() += config.lambda_reg;

    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, a.norm()))
        throw precondition_error("singular ridge system: lambda = 0 with rank-deficient design");

    const Vector u = ldlt.solve(test_point);
    return config.noise_sigma * config.noise_sigma * u.dot(gram * u);
}

// Worst-case bound sigma^2 B^2 / (K delta + lambda).
inline double variance_bound(long long k, double delta, const RidgeProxyConfig& config) {
    config.validate();
    if (k < 1) throw validation_error("k must be at least 1");
    if (delta < 0.0) throw validation_error("delta must be nonnegative");
    const double denom = static_cast<double>(k) * delta + config.lambda_reg;
    if (denom <= 0.0) throw precondition_error("K*delta + lambda must be positive");
    const double sb = config.noise_sigma * config.feature_bound;
    return sb * sb / denom;
}

struct VariancePropositionCheck {
    long long violations = 0;
    long long qualifying_trials = 0;
    double max_ratio = 0.0;  // max exact/bound over qualifying trials
};

// forward declaration; the design generator lives in synth.hpp
struct GeneratorConfig;
FeatureMatrix generate(const GeneratorConfig& config, long long k);

namespace detail {

// uniform direction on the unit sphere
inline Vector sphere_direction(Rng& rng, Eigen::Index d) {
    Vector z(d);
    for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.gauss();
    const double norm = z.norm();
    return norm > 0.0 ? Vector(z / norm) : Vector::Unit(d, 0);
}

}  // namespace detail

// MC check of the predictive-variance proposition: over qualifying designs
// (lambda_min(Sigma_hat) >= delta), exact variance must never exceed the bound.
// Test points alternate between uniform B-sphere draws and the adversarial
// smallest-eigenvector direction scaled to B.
template <typename DesignDrawer>
VariancePropositionCheck check_variance_proposition_with(DesignDrawer&& draw_design,
                                                         const RidgeProxyConfig& config,
                                                         long long k, double delta,
                                                         long long trials,
                                                         std::uint64_t seed = 0) {
    config.validate();
    if (trials < 100) throw validation_error("variance check needs at least 100 trials");
    if (delta < 0.0) throw validation_error("delta must be nonnegative");

    VariancePropositionCheck out;
    for (long long t = 0; t < trials; ++t) {
        const FeatureMatrix design = draw_design(t);
        const auto dec = symmetric_eigen(empirical_covariance(design));
        const double lam_min = dec.eigenvalues[dec.eigenvalues.size() - 1];
        if (lam_min < delta) continue;
        if (config.lambda_reg == 0.0 &&
            lam_min <= 1e-12 * std::max(1.0, dec.eigenvalues[0]))
            continue;  // lambda = 0 requires full-rank designs

        Rng rng(derive_seed(seed, stream::noise, static_cast<std::uint64_t>(t)));
        Vector phi_star;
        if (t % 2 == 0) {
            phi_star = config.feature_bound * detail::sphere_direction(rng, design.d());
        } else {
            phi_star = config.feature_bound * dec.eigenvectors.col(dec.eigenvectors.cols() - 1);
        }
        const double exact = predictive_variance_exact(design, config, phi_star);
        const double bound = variance_bound(k, delta, config);
        ++out.qualifying_trials;
        const double ratio = exact / bound;
        out.max_ratio = std::max(out.max_ratio, ratio);
        if (exact > bound * (1.0 + 1e-12)) ++out.violations;
    }
    return out;
}

// Ridge fit on noisy planted labels, scored by sign agreement against the
// noiseless planted labels on the test set. When label_features is given,
// labels come from those rows instead of the training inputs; this models a
// corrupted representation (the task lives on clean features, the learner only
// sees the corrupted ones).
inline double planted_task_score(const FeatureMatrix& train, const RidgeProxyConfig& config,
                                 const FeatureMatrix& test, std::uint64_t seed,
                                 const FeatureMatrix* label_features = nullptr) {
    train.validate();
    test.validate();
    config.validate();
    if (train.d() != test.d()) throw validation_error("train/test dimension mismatch");
    if (config.planted_weights.size() != train.d())
        throw validation_error("planted weight dimension mismatch");
    if (label_features &&
        (label_features->k() != train.k() || label_features->d() != train.d()))
        throw validation_error("label feature shape mismatch");

    Rng rng(derive_seed(seed, stream::noise));
    Vector y = (label_features ? label_features->data : train.data) * config.planted_weights;
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] += config.noise_sigma * rng.gauss();

    Matrix a = train.data.transpose() * train.data;
    a.diagonal().array() += config.lambda_reg;
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success ||
        ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, a.norm()))
        throw precondition_error("singular ridge system in planted task fit");
    const Vector beta = ldlt.solve(train.data.transpose() * y);

    const Vector pred = test.data * beta;
    const Vector truth = test.data * config.planted_weights;
    long long agree = 0;
    for (Eigen::Index i = 0; i < pred.size(); ++i)
        if ((pred[i] >= 0.0) == (truth[i] >= 0.0)) ++agree;
    return static_cast<double>(agree) / static_cast<double>(pred.size());
}

}  // namespace speclen
