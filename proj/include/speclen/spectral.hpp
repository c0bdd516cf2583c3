#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "speclen/errors.hpp"

namespace speclen {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// K x d feature matrix; row k is the feature vector of demonstration k.
struct FeatureMatrix {
    Matrix data;

    FeatureMatrix() = default;
    explicit FeatureMatrix(Matrix m) : data(std::move(m)) { validate(); }

    Eigen::Index k() const { return data.rows(); }
    Eigen::Index d() const { return data.cols(); }

    void validate() const {
        if (data.rows() < 1 || data.cols() < 1)
            throw validation_error("feature matrix must have at least one row and one column");
        if (!data.allFinite())
            throw validation_error("feature matrix contains non-finite entries");
    }
};

// d x d symmetric PSD matrix together with the sample count it came from
// (k_source = 0 marks an analytically constructed population covariance).
struct CovarianceMatrix {
    Matrix m;
    Eigen::Index k_source = 0;

    static constexpr double symmetry_tol = 1e-10;

    CovarianceMatrix() = default;
    CovarianceMatrix(Matrix mat, Eigen::Index k_src) : m(std::move(mat)), k_source(k_src) {
        validate();
    }

    Eigen::Index d() const { return m.rows(); }

    void validate() const {
        if (m.rows() != m.cols() || m.rows() < 1)
            throw validation_error("covariance matrix must be square and non-empty");
        if (!m.allFinite())
            throw validation_error("covariance matrix contains non-finite entries");
        const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
        if (asym > symmetry_tol)
            throw validation_error("covariance matrix asymmetric beyond tolerance: max |M - M^T| = " +
                                   std::to_string(asym));
    }
};

inline CovarianceMatrix diag_covariance(const Vector& eigenvalues) {
    return CovarianceMatrix(Matrix(eigenvalues.asDiagonal()), 0);
}

// Sigma_hat = (1/K) * sum_k phi_k phi_k^T. With center=true the empirical mean
// is removed first (requires K >= 2); synthetic zero-mean data should pass false.
inline CovarianceMatrix empirical_covariance(const FeatureMatrix& features, bool center = false) {
    features.validate();
    const Eigen::Index k = features.k();
    if (center && k < 2)
        throw validation_error("centering requires at least two samples");

    Matrix x = features.data;
    if (center) x.rowwise() -= x.colwise().mean();

    Matrix cov = Matrix::Zero(x.cols(), x.cols());
    cov.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose(), 1.0 / static_cast<double>(k));
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
    return CovarianceMatrix(std::move(cov), k);
}

struct EigenDecomposition {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // column i pairs with eigenvalues[i]
};

// Cyclic Jacobi rotations for symmetric matrices. Stops when the off-diagonal
// Frobenius norm falls below 1e-12 * ||M||_F, or fails after 100 sweeps.
inline EigenDecomposition symmetric_eigen(const CovarianceMatrix& cov) {
    cov.validate();
    const Eigen::Index n = cov.d();
    Matrix a = 0.5 * (cov.m + cov.m.transpose());  // symmetrize within tolerance
    Matrix v = Matrix::Identity(n, n);

    const double scale = std::max(1.0, a.norm());
    const double stop = 1e-12 * scale;
    constexpr int max_sweeps = 100;

    auto off_norm = [&]() {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };

    int sweep = 0;
    double off = off_norm();
    while (off > stop) {
        if (sweep++ >= max_sweeps)
            throw precondition_error("jacobi eigensolver did not converge; off-diagonal residual = " +
                                     std::to_string(off));
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-3 * stop / static_cast<double>(n)) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // A <- J^T A J on rows/cols p,q
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double aip = a(i, p), aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double api = a(p, i), aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double vip = v(i, p), viq = v(i, q);
                    v(i, p) = c * vip - s * viq;
                    v(i, q) = s * vip + c * viq;
                }
            }
        }
        off = off_norm();
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

    EigenDecomposition dec;
    dec.eigenvalues.resize(n);
    dec.eigenvectors.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        dec.eigenvalues[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
        dec.eigenvectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
    }
    return dec;
}

struct SpectralSummary {
    Vector eigenvalues;  // descending
    double lambda_min = 0.0;
    double op_norm = 0.0;
    double trace = 0.0;
    double frob_norm = 0.0;
    Eigen::Index rank = 0;      // eigenvalues > rank_tol * op_norm
    double r_eff = 1.0;         // tr / ||Sigma||
    double r_eff_tr = 1.0;      // tr^2 / ||Sigma||_F^2
    double lambda_q = 0.0;      // q-quantile eigenvalue (ceil(q*d)-th smallest)
    double q = 0.0;
    double lambda_r = 0.0;      // smallest eigenvalue above rank_tol * op_norm
};

inline SpectralSummary summarize_spectrum(const Vector& descending, double q = 0.0,
                                          double rank_tol = 1e-10) {
    if (q < 0.0 || q > 1.0) throw validation_error("quantile level q must lie in [0,1]");
    if (rank_tol < 0.0) throw validation_error("rank_tol must be nonnegative");

    SpectralSummary s;
    s.eigenvalues = descending;
    const Eigen::Index d = descending.size();
    s.op_norm = descending[0];
    s.lambda_min = descending[d - 1];
    s.trace = descending.sum();
    s.frob_norm = descending.norm();
    s.q = q;

    const double cut = rank_tol * s.op_norm;
    s.rank = 0;
    s.lambda_r = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        if (descending[i] > cut) {
            ++s.rank;
            s.lambda_r = descending[i];
        }
    }

    s.r_eff = s.op_norm > 0.0 ? s.trace / s.op_norm : 1.0;
    const double f2 = s.frob_norm * s.frob_norm;
    s.r_eff_tr = f2 > 0.0 ? s.trace * s.trace / f2 : 1.0;

    // ceil(q*d)-th smallest, with q = 0 meaning lambda_min
    const auto idx = static_cast<Eigen::Index>(std::ceil(q * static_cast<double>(d)));
    const Eigen::Index from_smallest = std::max<Eigen::Index>(1, std::min(idx == 0 ? 1 : idx, d));
    s.lambda_q = descending[d - from_smallest];
    return s;
}

inline SpectralSummary spectral_summary(const CovarianceMatrix& cov, double q = 0.0,
                                        double rank_tol = 1e-10) {
    return summarize_spectrum(symmetric_eigen(cov).eigenvalues, q, rank_tol);
}

struct EffectiveRanks {
    Eigen::Index threshold_rank = 0;  // #{lambda_i > threshold * lambda_max}
    Eigen::Index energy_rank = 0;     // smallest m with partial sum >= energy_level * trace
    Eigen::Index trace_rank = 0;      // ceil(r_eff_tr)
};

inline EffectiveRanks effective_rank_variants(const SpectralSummary& summary, double energy_level,
                                              double threshold) {
    if (energy_level <= 0.0 || energy_level > 1.0)
        throw validation_error("energy_level must lie in (0,1]");
    if (threshold < 0.0) throw validation_error("threshold must be nonnegative");
    if (summary.op_norm <= 0.0 || summary.trace <= 0.0)
        throw precondition_error("degenerate spectrum: all eigenvalues are zero");

    EffectiveRanks r;
    const double cut = threshold * summary.op_norm;
    double acc = 0.0;
    const double target = energy_level * summary.trace;
    for (Eigen::Index i = 0; i < summary.eigenvalues.size(); ++i) {
        if (summary.eigenvalues[i] > cut) ++r.threshold_rank;
        if (r.energy_rank == 0) {
            acc += summary.eigenvalues[i];
            if (acc >= target * (1.0 - 1e-12)) r.energy_rank = i + 1;
        }
    }
    if (r.energy_rank == 0) r.energy_rank = summary.eigenvalues.size();
    r.trace_rank = static_cast<Eigen::Index>(std::ceil(summary.r_eff_tr - 1e-12));
    return r;
}

}  // namespace speclen
