#pragma once

#include <cmath>
#include <cstdint>

#include "speclen/errors.hpp"
#include "speclen/spectral.hpp"

namespace speclen {

// Calibratable constants. Defaults follow the recommended ranges:
// c_opnorm (operator-norm deviation) = 3, c_prime = c_opnorm^2 = 9,
// c_dprime = 16 * c_opnorm^2 = 144, c1 = 3.5 with the coupling c1 * c2^2 = 1.
struct BoundConstants {
    double c_opnorm = 3.0;
    double c_prime = 9.0;
    double c_dprime = 144.0;
    double c1 = 3.5;
    double c2_trunc = 0.5345224838248488;  // 1/sqrt(3.5)

    void validate() const {
        if (c_opnorm <= 0.0 || c_prime <= 0.0 || c_dprime <= 0.0 || c1 <= 0.0 || c2_trunc <= 0.0)
            throw validation_error("bound constants must be strictly positive");
        if (std::abs(c1 * c2_trunc * c2_trunc - 1.0) > 1e-9)
            throw validation_error("constants violate the coupling c1 * c2_trunc^2 = 1");
    }

    static BoundConstants with_c1(double c1_value) {
        BoundConstants c;
        c.c1 = c1_value;
        c.c2_trunc = 1.0 / std::sqrt(c1_value);
        return c;
    }
};

// Target floor delta for lambda_min(Sigma_hat_K), failure tolerance xi, and
// the sub-Gaussian scale sigma of the feature vector.
struct TargetSpec {
    double delta = 0.1;
    double xi = 0.1;
    double sigma = 1.0;

    void validate() const {
        if (delta <= 0.0) throw validation_error("delta must be positive");
        if (xi <= 0.0 || xi >= 1.0) throw validation_error("xi must lie in (0,1)");
        if (sigma <= 0.0) throw validation_error("sigma must be positive");
    }
};

// Variance proxy, truncation level and gap entering the lower-tail bound:
//   v_tilde = 2*c1*sigma^4 + 2*||Sigma||^2
//   B_K     = c2^2 * sigma^2 * log(8K/xi)
//   R       = B_K + ||Sigma||
//   Delta   = lambda_min - delta
struct BernsteinTerms {
    double v_tilde = 0.0;
    double r_bound = 0.0;
    double b_k = 0.0;
    double delta_gap = 0.0;
    bool gap_positive = true;
};

inline BernsteinTerms bernstein_terms(const SpectralSummary& summary, const TargetSpec& spec,
                                      long long k, const BoundConstants& constants) {
    spec.validate();
    constants.validate();
    if (k < 1) throw validation_error("sample count k must be at least 1");

    BernsteinTerms t;
    const double s2 = spec.sigma * spec.sigma;
    t.v_tilde = 2.0 * constants.c1 * s2 * s2 + 2.0 * summary.op_norm * summary.op_norm;
    t.b_k = constants.c2_trunc * constants.c2_trunc * s2 *
            std::log(8.0 * static_cast<double>(k) / spec.xi);
    t.r_bound = t.b_k + summary.op_norm;
    t.delta_gap = summary.lambda_min - spec.delta;
    t.gap_positive = t.delta_gap > 0.0;
    return t;
}

struct FailureBound {
    double value = 1.0;
    bool vacuous = false;  // set when delta_gap <= 0
};

// P(lambda_min(Sigma_hat_K) <= delta) <= r_eff * exp(-K Delta^2 / (2v + (2/3) R Delta))
inline FailureBound bernstein_failure_bound(long long k, const BernsteinTerms& terms,
                                            double r_eff) {
    if (k < 0) throw validation_error("sample count k must be nonnegative");
    FailureBound b;
    if (terms.delta_gap <= 0.0) {
        b.value = 1.0;
        b.vacuous = true;
        return b;
    }
    const double g = terms.delta_gap;
    const double denom = 2.0 * terms.v_tilde + (2.0 / 3.0) * terms.r_bound * g;
    const double expo = denom > 0.0 ? -static_cast<double>(k) * g * g / denom : -INFINITY;
    b.value = std::min(1.0, std::max(0.0, r_eff * std::exp(expo)));
    return b;
}

namespace detail {

inline long long ceil_count(double x) {
    if (!std::isfinite(x)) throw precondition_error("sample-size bound is not finite");
    return std::max<long long>(1, static_cast<long long>(std::ceil(x - 1e-12)));
}

}  // namespace detail

// Simplified practical bound K = ceil(C' ||Sigma||^2 r_eff log(2/xi) / Delta^2).
// lambda_floor_override lets the two-stage scheme pass Delta_hat = lcb - delta.
inline long long k_simplified(const SpectralSummary& summary, const TargetSpec& spec,
                              double c_prime, double lambda_floor_override = -1.0) {
    spec.validate();
    if (c_prime <= 0.0) throw validation_error("c_prime must be positive");
    const double lam = lambda_floor_override >= 0.0 ? lambda_floor_override : summary.lambda_min;
    const double gap = lam - spec.delta;
    if (gap <= 0.0)
        throw precondition_error("non-positive spectral gap: delta >= lambda floor");
    const double k = c_prime * summary.op_norm * summary.op_norm * summary.r_eff *
                     std::log(2.0 / spec.xi) / (gap * gap);
    return detail::ceil_count(k);
}

// Explicit bound with the log(8K/xi) self-consistency resolved by fixed-point
// iteration: smallest K <= k_max with K >= [2v/Delta^2 + 2R(K)/(3 Delta)] * log(4 r_eff / (3 xi)).
inline long long k_explicit(const SpectralSummary& summary, const TargetSpec& spec,
                            const BoundConstants& constants, long long k_max = 1000000) {
    spec.validate();
    constants.validate();
    const double gap = summary.lambda_min - spec.delta;
    if (gap <= 0.0)
        throw precondition_error("non-positive spectral gap: delta >= lambda_min");

    const double log_pref = std::log(4.0 * summary.r_eff / (3.0 * spec.xi));
    if (log_pref <= 0.0) return 1;

    const double s2 = spec.sigma * spec.sigma;
    const double v_tilde =
        2.0 * constants.c1 * s2 * s2 + 2.0 * summary.op_norm * summary.op_norm;
    auto rhs = [&](double k) {
        const double b_k = constants.c2_trunc * constants.c2_trunc * s2 *
                           std::log(8.0 * std::max(1.0, k) / spec.xi);
        const double r = b_k + summary.op_norm;
        return (2.0 * v_tilde / (gap * gap) + 2.0 * r / (3.0 * gap)) * log_pref;
    };

    double k = static_cast<double>(k_simplified(summary, spec, constants.c_prime));
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        const double next = rhs(k);
        if (std::abs(next - k) <= 1.0) {
            k = next;
            converged = true;
            break;
        }
        k = 0.5 * k + 0.5 * next;  // damped
    }
    if (!converged) {
        // conservative substitution log(8*k_max/xi) for the self-consistent factor
        const double b_k = constants.c2_trunc * constants.c2_trunc * s2 *
                           std::log(8.0 * static_cast<double>(k_max) / spec.xi);
        k = (2.0 * v_tilde / (gap * gap) + 2.0 * (b_k + summary.op_norm) / (3.0 * gap)) * log_pref;
    }

    long long ki = detail::ceil_count(k);
    // settle onto the smallest integer satisfying K >= RHS(K)
    while (ki > 1 && static_cast<double>(ki - 1) >= rhs(static_cast<double>(ki - 1))) --ki;
    while (ki <= k_max && static_cast<double>(ki) < rhs(static_cast<double>(ki))) ++ki;
    if (ki > k_max) {
        const double b_k = constants.c2_trunc * constants.c2_trunc * s2 *
                           std::log(8.0 * static_cast<double>(k_max) / spec.xi);
        const double fb =
            (2.0 * v_tilde / (gap * gap) + 2.0 * (b_k + summary.op_norm) / (3.0 * gap)) * log_pref;
        throw cap_exceeded_error("explicit bound exceeds k_max = " + std::to_string(k_max),
                                 detail::ceil_count(fb));
    }
    return ki;
}

// Operator-norm deviation radius C ||Sigma|| (sqrt(r_eff t / K) + r_eff t / K), t = log(2/xi).
inline double opnorm_deviation(const SpectralSummary& summary, long long k, double xi,
                               double c_opnorm) {
    if (k < 1) throw validation_error("sample count k must be at least 1");
    if (xi <= 0.0 || xi >= 1.0) throw validation_error("xi must lie in (0,1)");
    if (c_opnorm < 0.0) throw validation_error("c_opnorm must be nonnegative");
    const double t = summary.r_eff * std::log(2.0 / xi) / static_cast<double>(k);
    return c_opnorm * summary.op_norm * (std::sqrt(t) + t);
}

// First-stage requirement K0 = ceil(C'' ||Sigma||^2 r_eff log(4/xi) / lambda_min^2).
inline long long k0_requirement(const SpectralSummary& summary, double xi, double c_dprime) {
    if (xi <= 0.0 || xi >= 1.0) throw validation_error("xi must lie in (0,1)");
    if (c_dprime <= 0.0) throw validation_error("c_dprime must be positive");
    if (summary.lambda_min <= 0.0)
        throw precondition_error("degenerate spectrum: lambda_min must be positive");
    const double k0 = c_dprime * summary.op_norm * summary.op_norm * summary.r_eff *
                      std::log(4.0 / xi) / (summary.lambda_min * summary.lambda_min);
    return detail::ceil_count(k0);
}

// K*(rho) = ceil(K*(rho0) * ((1-rho0)/(1-rho))^2) for delta = rho * lambda_min.
inline long long delta_rescale(long long k_star, double rho0, double rho) {
    if (k_star < 1) throw validation_error("k_star must be at least 1");
    if (rho0 <= 0.0 || rho0 >= 1.0 || rho <= 0.0 || rho >= 1.0)
        throw validation_error("rho and rho0 must lie in (0,1)");
    const double f = (1.0 - rho0) / (1.0 - rho);
    return detail::ceil_count(static_cast<double>(k_star) * f * f);
}

inline double delta_rescale_real(double k_star, double rho0, double rho) {
    if (rho0 <= 0.0 || rho0 >= 1.0 || rho <= 0.0 || rho >= 1.0)
        throw validation_error("rho and rho0 must lie in (0,1)");
    const double f = (1.0 - rho0) / (1.0 - rho);
    return k_star * f * f;
}

// Additive correction under bounded drift of magnitude epsilon, plus the
// degraded floor delta - c_floor * epsilon.
struct DriftCorrected {
    long long k = 0;
    double degraded_floor = 0.0;
};

inline DriftCorrected drift_correction(long long k_nominal, double epsilon,
                                       const SpectralSummary& summary, double delta,
                                       double c_drift, double c_floor = 1.0) {
    if (k_nominal < 1) throw validation_error("k_nominal must be at least 1");
    if (epsilon < 0.0) throw validation_error("epsilon must be nonnegative");
    if (c_drift <= 0.0) throw validation_error("c_drift must be positive");
    const double gap = summary.lambda_min - delta;
    if (gap <= 0.0)
        throw precondition_error("non-positive spectral gap: delta >= lambda_min");
    DriftCorrected out;
    const double add = c_drift * epsilon * epsilon * summary.op_norm / (gap * gap);
    out.k = k_nominal + (epsilon == 0.0 ? 0 : static_cast<long long>(std::ceil(add - 1e-12)));
    out.degraded_floor = delta - c_floor * epsilon;
    return out;
}

// Effective-sample-size inflation under geometric mixing alpha(s) <= rho^s:
// c_rho = sum_{s>=1} rho^s = rho/(1-rho).
struct DependenceInflation {
    double c_rho = 0.0;
    double k_eff = 0.0;
    long long k_inflated = 0;
};

inline DependenceInflation dependence_inflation(long long k, double rho) {
    if (k < 1) throw validation_error("k must be at least 1");
    if (rho < 0.0 || rho >= 1.0) throw validation_error("rho must lie in [0,1)");
    DependenceInflation out;
    out.c_rho = rho / (1.0 - rho);
    out.k_eff = static_cast<double>(k) / (1.0 + out.c_rho);
    out.k_inflated = detail::ceil_count(static_cast<double>(k) * (1.0 + out.c_rho));
    return out;
}

// Heavy-tail relaxation: K = ceil(c_tail (||Sigma||^2 + sigma^4 + kappa^2)/Delta^2 * log(d/xi)^p).
inline long long heavy_tail_bound(const SpectralSummary& summary, const TargetSpec& spec,
                                  double kappa, double c_tail, Eigen::Index d,
                                  int polylog_power = 1) {
    spec.validate();
    if (kappa < 0.0) throw validation_error("kappa must be nonnegative");
    if (c_tail <= 0.0) throw validation_error("c_tail must be positive");
    if (polylog_power < 1) throw validation_error("polylog_power must be at least 1");
    const double gap = summary.lambda_min - spec.delta;
    if (gap <= 0.0)
        throw precondition_error("non-positive spectral gap: delta >= lambda_min");
    const double s2 = spec.sigma * spec.sigma;
    const double lg = std::log(static_cast<double>(d) / spec.xi);
    const double k = c_tail * (summary.op_norm * summary.op_norm + s2 * s2 + kappa * kappa) /
                     (gap * gap) * std::pow(lg, polylog_power);
    return detail::ceil_count(k);
}

}  // namespace speclen
