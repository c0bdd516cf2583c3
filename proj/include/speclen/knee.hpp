#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "speclen/errors.hpp"
#include "speclen/rng.hpp"

namespace speclen {

// Performance-vs-K curve. points are (k, score) with strictly increasing k;
// replicates, when present, hold the raw per-k scores used for bootstrap CIs.
struct PerformanceCurve {
    struct Point {
        long long k = 0;
        double score = 0.0;
    };
    std::vector<Point> points;
    std::vector<std::vector<double>> replicates;  // empty, or one list per point

    void validate() const {
        if (points.size() < 4)
            throw validation_error("curve needs at least 4 points for a two-segment fit");
        for (std::size_t i = 1; i < points.size(); ++i)
            if (points[i].k <= points[i - 1].k)
                throw validation_error("curve k values must be strictly increasing");
        if (!replicates.empty() && replicates.size() != points.size())
            throw validation_error("replicate lists must match the number of curve points");
    }
};

struct PiecewiseFit {
    double sse = 0.0;
    double left_slope = 0.0, left_intercept = 0.0;
    double right_slope = 0.0, right_intercept = 0.0;
};

namespace detail {

struct OlsFit {
    double slope = 0.0, intercept = 0.0, sse = 0.0;
};

inline OlsFit ols(const std::vector<PerformanceCurve::Point>& pts, std::size_t lo,
                  std::size_t hi) {  // [lo, hi] inclusive
    const double n = static_cast<double>(hi - lo + 1);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = lo; i <= hi; ++i) {
        const double x = static_cast<double>(pts[i].k), y = pts[i].score;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    OlsFit f;
    const double den = n * sxx - sx * sx;
    if (den > 0.0) {
        f.slope = (n * sxy - sx * sy) / den;
        f.intercept = (sy - f.slope * sx) / n;
    } else {  // vertical degeneracy cannot occur with strictly increasing k and n >= 2
        f.slope = 0.0;
        f.intercept = sy / n;
    }
    for (std::size_t i = lo; i <= hi; ++i) {
        const double r = pts[i].score - (f.slope * static_cast<double>(pts[i].k) + f.intercept);
        f.sse += r * r;
    }
    return f;
}

}  // namespace detail

// Free two-segment OLS sharing the split point: left = points[0..split],
// right = points[split..n-1]. Admissible splits are 2 <= split <= n-2.
inline PiecewiseFit piecewise_fit(const PerformanceCurve& curve, std::size_t split_index) {
    curve.validate();
    const std::size_t n = curve.points.size();
    if (split_index < 2 || split_index > n - 2)
        throw validation_error("split index leaves a segment with fewer than 2 points");
    const auto left = detail::ols(curve.points, 0, split_index);
    const auto right = detail::ols(curve.points, split_index, n - 1);
    PiecewiseFit f;
    f.left_slope = left.slope;
    f.left_intercept = left.intercept;
    f.right_slope = right.slope;
    f.right_intercept = right.intercept;
    f.sse = left.sse + right.sse;
    return f;
}

struct KneeEstimate {
    long long k_knee = 0;
    std::size_t split_index = 0;
    double sse = 0.0;
    long long ci_low = 0;
    long long ci_high = 0;
    std::size_t bootstrap_count = 0;
    double k_bagged = 0.0;  // bootstrap-mean knee; equals k_knee without bootstrap
};

// argmin-SSE split; ties broken toward the smallest split index.
inline KneeEstimate knee_point(const PerformanceCurve& curve) {
    curve.validate();
    const std::size_t n = curve.points.size();
    KneeEstimate best;
    best.sse = INFINITY;
    for (std::size_t t = 2; t <= n - 2; ++t) {
        const double sse = piecewise_fit(curve, t).sse;
        if (sse < best.sse - 1e-15 * std::max(1.0, std::abs(sse))) {
            best.sse = sse;
            best.split_index = t;
        }
    }
    best.k_knee = curve.points[best.split_index].k;
    best.ci_low = best.ci_high = best.k_knee;
    best.k_bagged = static_cast<double>(best.k_knee);
    return best;
}

// Percentile bootstrap over per-k replicate resampling. When the curve has no
// replicate lists, falls back to a residual bootstrap around the fitted
// two-segment model.
inline KneeEstimate bootstrap_knee(const PerformanceCurve& curve, std::size_t resamples = 200,
                                   double level = 0.95, std::uint64_t seed = 0) {
    curve.validate();
    if (resamples < 1) throw validation_error("resamples must be at least 1");
    if (level <= 0.0 || level >= 1.0) throw validation_error("CI level must lie in (0,1)");

    const std::size_t n = curve.points.size();
    const bool have_reps = !curve.replicates.empty();
    if (have_reps) {
        for (const auto& r : curve.replicates)
            if (r.size() < 2)
                throw validation_error("bootstrap needs at least 2 replicates per k");
    }

    KneeEstimate est = knee_point(curve);
    std::vector<double> residuals;
    if (!have_reps) {
        const auto fit = piecewise_fit(curve, est.split_index);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = static_cast<double>(curve.points[i].k);
            const double pred = i <= est.split_index ? fit.left_slope * x + fit.left_intercept
                                                     : fit.right_slope * x + fit.right_intercept;
            residuals.push_back(curve.points[i].score - pred);
        }
    }

    std::vector<long long> knees;
    knees.reserve(resamples);
    PerformanceCurve resampled;
    resampled.points = curve.points;
    for (std::size_t b = 0; b < resamples; ++b) {
        Rng rng(derive_seed(seed, stream::bootstrap, b));
        for (std::size_t i = 0; i < n; ++i) {
            if (have_reps) {
                const auto& reps = curve.replicates[i];
                double acc = 0.0;
                for (std::size_t j = 0; j < reps.size(); ++j) acc += reps[rng.index(reps.size())];
                resampled.points[i].score = acc / static_cast<double>(reps.size());
            } else {
                resampled.points[i].score =
                    curve.points[i].score - residuals[i] + residuals[rng.index(residuals.size())];
            }
        }
        knees.push_back(knee_point(resampled).k_knee);
    }
    std::sort(knees.begin(), knees.end());
    const double a = (1.0 - level) / 2.0;
    auto pick = [&](double p) {
        const auto idx = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(knees.size() - 1),
                             std::floor(p * static_cast<double>(knees.size()))));
        return knees[idx];
    };
    est.ci_low = std::min(pick(a), est.k_knee);
    est.ci_high = std::max(pick(1.0 - a), est.k_knee);
    est.bootstrap_count = resamples;
    double acc = 0.0;
    for (long long k : knees) acc += static_cast<double>(k);
    est.k_bagged = acc / static_cast<double>(knees.size());
    return est;
}

inline double error_ratio(long long k_theory, const KneeEstimate& knee) {
    if (k_theory < 1) throw validation_error("k_theory must be at least 1");
    if (knee.k_knee < 1) throw validation_error("knee must be at least 1");
    return static_cast<double>(k_theory) / static_cast<double>(knee.k_knee);
}

}  // namespace speclen
