#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "speclen/bounds.hpp"
#include "speclen/errors.hpp"
#include "speclen/rng.hpp"
#include "speclen/spectral.hpp"
#include "speclen/synth.hpp"

namespace speclen {

// Demonstration stream: successive draws are non-overlapping, total is tracked.
// Backed either by a synthetic generator or by a fixed feature matrix cursor.
class SampleSource {
public:
    explicit SampleSource(GeneratorConfig config) : generator_(std::move(config)) {
        generator_->validate();
    }
    explicit SampleSource(FeatureMatrix pool) : pool_(std::move(pool)) { pool_->validate(); }

    Eigen::Index d() const { return generator_ ? generator_->d() : pool_->d(); }
    long long drawn() const { return drawn_; }

    FeatureMatrix draw(long long k) {
        if (k < 1) throw validation_error("draw size must be at least 1");
        FeatureMatrix out;
        if (generator_) {
            GeneratorConfig c = *generator_;
            c.seed = derive_seed(generator_->seed, stream::generator,
                                 static_cast<std::uint64_t>(batch_++));
            out = generate(c, k);
        } else {
            if (drawn_ + k > pool_->k())
                throw precondition_error("sample pool exhausted: need " + std::to_string(k) +
                                         " more rows, have " +
                                         std::to_string(pool_->k() - drawn_));
            out = FeatureMatrix(pool_->data.middleRows(drawn_, k));
        }
        drawn_ += k;
        return out;
    }

private:
    std::optional<GeneratorConfig> generator_;
    std::optional<FeatureMatrix> pool_;
    long long drawn_ = 0;
    long long batch_ = 0;
};

// lambda_underline = lambda_hat_0 - C ||Sigma_hat|| (sqrt(r t / K0) + r t / K0),
// t = log(4/xi). May be negative, which signals insufficient K0.
inline double lower_confidence_bound(const SpectralSummary& summary, long long k0, double xi,
                                     double c_opnorm) {
    if (k0 < 1) throw validation_error("k0 must be at least 1");
    if (xi <= 0.0 || xi >= 1.0) throw validation_error("xi must lie in (0,1)");
    if (c_opnorm < 0.0) throw validation_error("c_opnorm must be nonnegative");
    const double t = summary.r_eff * std::log(4.0 / xi) / static_cast<double>(k0);
    return summary.lambda_min - c_opnorm * summary.op_norm * (std::sqrt(t) + t);
}

struct TwoStageResult {
    long long k0_final = 0;
    long long doublings = 0;
    double lcb = 0.0;
    double delta_hat = 0.0;
    long long k_second = 0;
    long long k_final = 0;
    SpectralSummary stage1_summary;
    SpectralSummary pooled_summary;  // last stage-1 batch pooled with the stage-2 draw
};

// Two-stage estimator. Stage 1 doubles K0 (fresh resample each time) until the
// lower-confidence bound clears delta AND K0 meets the plug-in first-stage
// requirement C'' ||Sigma_hat||^2 r_hat log(4/xi) / lambda_hat^2. Stopping at
// the first lcb > 0 can hand stage 2 a negative or vanishing gap even though
// larger K0 would have succeeded; the K0-requirement criterion keeps the
// deviation term a bounded fraction of lambda_hat so Delta_hat stays usable.
// At the cap, lcb <= 0 reports cap exhaustion and 0 < lcb <= delta reports
// delta chosen too large.
inline TwoStageResult run_two_stage(SampleSource& source, const TargetSpec& spec,
                                    const BoundConstants& constants, long long k0_init = 100,
                                    long long k0_cap = (1LL << 20)) {
    spec.validate();
    constants.validate();
    if (k0_init < 2) throw validation_error("k0_init must be at least 2");
    if (k0_cap < k0_init) throw validation_error("k0_cap must be at least k0_init");

    TwoStageResult result;
    long long k0 = k0_init;
    FeatureMatrix batch;
    while (true) {
        batch = source.draw(k0);
        result.stage1_summary = spectral_summary(empirical_covariance(batch));
        result.lcb = lower_confidence_bound(result.stage1_summary, k0, spec.xi,
                                            constants.c_opnorm);
        result.k0_final = k0;
        const long long k0_needed =
            k0_requirement(result.stage1_summary, spec.xi, constants.c_dprime);
        if (result.lcb > spec.delta && k0 >= k0_needed) break;
        if (k0 >= k0_cap) {
            if (result.lcb > spec.delta) break;  // cap met the gap but not the K0 requirement
            if (result.lcb <= 0.0)
                throw cap_exceeded_error(
                    "first-stage cap reached with nonpositive lower bound (lcb = " +
                        std::to_string(result.lcb) + " at K0 = " + std::to_string(k0) + ")",
                    k0_cap);
            throw precondition_error(
                "delta too large: lower bound " + std::to_string(result.lcb) +
                " did not clear delta = " + std::to_string(spec.delta) + " at the K0 cap");
        }
        k0 = std::min(2 * k0, k0_cap);
        ++result.doublings;
    }

    result.delta_hat = result.lcb - spec.delta;
    result.k_second =
        k_simplified(result.stage1_summary, spec, constants.c_prime, result.lcb);
    result.k_final = result.k0_final + result.k_second;

    const FeatureMatrix fresh = source.draw(result.k_second);
    Matrix pooled(result.k_final, batch.d());
    pooled.topRows(result.k0_final) = batch.data;
    pooled.bottomRows(result.k_second) = fresh.data;
    result.pooled_summary = spectral_summary(empirical_covariance(FeatureMatrix(std::move(pooled))));
    return result;
}

struct CalibrationParams {
    double alpha = 1.0;
    double q = 0.1;
    std::vector<std::string> fitted_on;

    void validate() const {
        if (alpha <= 0.0) throw validation_error("alpha must be positive");
        if (q <= 0.0 || q >= 1.0) throw validation_error("q must lie in (0,1)");
    }
};

namespace detail {

inline double calibrated_raw(const SpectralSummary& summary, const TargetSpec& spec, double q) {
    const double lambda_q = summarize_spectrum(summary.eigenvalues, q).lambda_q;
    const double gap = lambda_q - spec.delta;
    if (gap <= 0.0)
        throw precondition_error("non-positive calibrated gap: delta >= lambda_q");
    const double f2 = summary.frob_norm * summary.frob_norm;
    return f2 * summary.r_eff_tr * std::log(2.0 / spec.xi) / (gap * gap);
}

}  // namespace detail

// K_cal = ceil(alpha * ||Sigma_hat||_F^2 * r_eff_tr * log(2/xi) / (lambda_q - delta)^2)
inline long long k_calibrated(const SpectralSummary& summary, const TargetSpec& spec,
                              const CalibrationParams& params) {
    spec.validate();
    params.validate();
    return detail::ceil_count(params.alpha * detail::calibrated_raw(summary, spec, params.q));
}

struct CalibrationTask {
    std::string id;
    SpectralSummary summary;
    long long knee = 0;
    TargetSpec spec;
};

// alpha = geometric mean over tasks of knee_i / raw_i, where raw_i is the
// unscaled calibrated formula value.
inline CalibrationParams fit_alpha(const std::vector<CalibrationTask>& tasks, double q = 0.1) {
    if (tasks.empty()) throw validation_error("alpha fit needs at least one task");
    if (q <= 0.0 || q >= 1.0) throw validation_error("q must lie in (0,1)");

    CalibrationParams params;
    params.q = q;
    double log_acc = 0.0;
    for (const auto& task : tasks) {
        task.spec.validate();
        if (task.knee < 1) throw validation_error("task knee must be at least 1");
        const double raw = detail::calibrated_raw(task.summary, task.spec, q);
        log_acc += std::log(static_cast<double>(task.knee) / raw);
        params.fitted_on.push_back(task.id);
    }
    params.alpha = std::exp(log_acc / static_cast<double>(tasks.size()));
    return params;
}

}  // namespace speclen
