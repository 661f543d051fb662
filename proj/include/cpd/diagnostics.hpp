#pragma once

#include "cpd/core.hpp"
#include "cpd/crossfit.hpp"
#include "cpd/loss_models.hpp"

#include <cmath>
#include <vector>

namespace cpd {

// Ground-truth-aware quantities for simulated data under squared loss. The
// expectation terms are evaluated analytically from the stored covariate
// covariance and noise levels, not by resampling.

namespace detail {

inline void require_truth(const Dataset& data) {
    if (!data.has_truth()) throw DataError("diagnostics need a dataset with embedded ground truth");
}

// Per-true-segment row counts inside (s, e].
inline std::vector<int> overlap_counts(const GroundTruth& truth, const Interval& iv, int n) {
    Segmentation seg(truth.taus, n);
    std::vector<int> counts;
    for (const auto& block : segments_of(seg)) {
        const int lo = std::max(iv.s, block.s);
        const int hi = std::min(iv.e, block.e);
        counts.push_back(std::max(0, hi - lo));
    }
    return counts;
}

} // namespace detail

// Oracle parameter of a segment under squared loss: the length-weighted
// average of the true per-index parameters.
inline VectorXd oracle_param(const GroundTruth& truth, const Interval& iv, int n) {
    if (truth.segment_params.empty()) throw UnsupportedModelError("oracle_param: no segment parameters");
    const auto counts = detail::overlap_counts(truth, iv, n);
    VectorXd avg = VectorXd::Zero(truth.segment_params.front().size());
    int total = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) continue;
        avg += static_cast<double>(counts[k]) * truth.segment_params[k];
        total += counts[k];
    }
    if (total == 0) throw InvalidConfigError("oracle_param: empty interval");
    return avg / static_cast<double>(total);
}

// Change signals Delta_k = ||f*_k - f*_{k+1}||^2_Sigma.
inline std::vector<double> delta_k(const GroundTruth& truth, const MatrixXd& sigma) {
    std::vector<double> out;
    for (std::size_t k = 0; k + 1 < truth.segment_params.size(); ++k) {
        const VectorXd diff = truth.segment_params[k] - truth.segment_params[k + 1];
        if (diff.size() != sigma.rows()) throw InvalidConfigError("delta_k: dimension mismatch");
        out.push_back(diff.dot(sigma * diff));
    }
    return out;
}

// Sum over the interval of ||f_i° - f_I°||^2_Sigma; zero on homogeneous
// segments.
inline double oracle_drift_term(const Dataset& data, const Interval& iv, const MatrixXd& sigma) {
    const auto& truth = data.truth();
    const VectorXd f_circ = oracle_param(truth, iv, data.n());
    const auto counts = detail::overlap_counts(truth, iv, data.n());
    double total = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) continue;
        const VectorXd diff = truth.segment_params[k] - f_circ;
        total += counts[k] * diff.dot(sigma * diff);
    }
    return total;
}

// Pointwise empirical loss at the true per-index parameter.
inline double loss_at_oracle_pointwise(const Dataset& data, int row) {
    const auto& truth = data.truth();
    const VectorXd& f = truth.param_at(row + 1);
    if (data.kind() == DataKind::regression) {
        const double resid = data.responses()[row] - data.covariates().row(row).dot(f);
        return resid * resid;
    }
    return (data.covariates().row(row).transpose() - f).squaredNorm();
}

// Centered approximation error: the empirical excess loss over the pointwise
// oracle losses, minus its analytic expectation.
inline double xi_of_segment(const Dataset& data, const Interval& iv, const SegmentCost& empirical_cost) {
    detail::require_truth(data);
    const MatrixXd sigma = data.truth().sigma.materialize(data.p());
    double oracle_pointwise = 0.0;
    for (int r = iv.s; r < iv.e; ++r) oracle_pointwise += loss_at_oracle_pointwise(data, r);
    return (empirical_cost.value - oracle_pointwise) - oracle_drift_term(data, iv, sigma);
}

struct BiasDecomposition {
    double concentration = 0.0;
    double cross = 0.0;
    double squared = 0.0;
    double xi = 0.0;
};

// In-sample decomposition at a single fitted coefficient vector:
//   cross   = -2 u_I' X_I (f - f_I°),   u_I = y_I - X_I f_I°
//   squared = ||X_I (f - f_I°)||^2
//   concentration = xi - cross - squared.
inline BiasDecomposition bias_decomposition_in_sample(const Dataset& data, const Interval& iv,
                                                      const VectorXd& coef) {
    detail::require_truth(data);
    if (data.kind() != DataKind::regression)
        throw UnsupportedModelError("bias decomposition needs regression data");
    const VectorXd f_circ = oracle_param(data.truth(), iv, data.n());
    BiasDecomposition out;
    double loss = 0.0;
    for (int r = iv.s; r < iv.e; ++r) {
        const double pred_circ = data.covariates().row(r).dot(f_circ);
        const double u = data.responses()[r] - pred_circ;
        const double d = data.covariates().row(r).dot(coef) - pred_circ;
        out.cross += -2.0 * u * d;
        out.squared += d * d;
        const double resid = data.responses()[r] - data.covariates().row(r).dot(coef);
        loss += resid * resid;
    }
    SegmentCost cost;
    cost.interval = iv;
    cost.value = loss;
    out.xi = xi_of_segment(data, iv, cost);
    out.concentration = out.xi - out.cross - out.squared;
    return out;
}

// Cross-fitted decomposition: per-fold sums with the fold-exclusion fits.
// per_fold_coef[m-1] holds the coefficients fit on I\J_m; folds with empty
// I∩J_m may carry an empty vector.
inline BiasDecomposition bias_decomposition_crossfit(const Dataset& data, const Interval& iv,
                                                     const FoldPlan& folds,
                                                     const std::vector<VectorXd>& per_fold_coef) {
    detail::require_truth(data);
    if (data.kind() != DataKind::regression)
        throw UnsupportedModelError("bias decomposition needs regression data");
    if (static_cast<int>(per_fold_coef.size()) != folds.folds())
        throw InvalidConfigError("bias_decomposition_crossfit: need one coefficient vector per fold");
    const VectorXd f_circ = oracle_param(data.truth(), iv, data.n());
    BiasDecomposition out;
    double loss = 0.0;
    for (int m = 1; m <= folds.folds(); ++m) {
        const auto eval = interval_fold_rows(iv, folds, m);
        if (eval.empty()) continue;
        const VectorXd& coef = per_fold_coef[m - 1];
        if (coef.size() != data.p())
            throw InvalidConfigError("bias_decomposition_crossfit: missing fit for a nonempty fold");
        for (int r : eval) {
            const double pred_circ = data.covariates().row(r).dot(f_circ);
            const double u = data.responses()[r] - pred_circ;
            const double d = data.covariates().row(r).dot(coef) - pred_circ;
            out.cross += -2.0 * u * d;
            out.squared += d * d;
            const double resid = data.responses()[r] - data.covariates().row(r).dot(coef);
            loss += resid * resid;
        }
    }
    SegmentCost cost;
    cost.interval = iv;
    cost.value = loss;
    out.xi = xi_of_segment(data, iv, cost);
    out.concentration = out.xi - out.cross - out.squared;
    return out;
}

// Model-driven convenience: fits the linear model and decomposes.
inline BiasDecomposition bias_decomposition(const Dataset& data, const Interval& iv, const LossModel& model,
                                            CostMode mode, const FoldPlan& folds) {
    const auto* linear = dynamic_cast<const LinearLossModel*>(&model);
    if (linear == nullptr) throw UnsupportedModelError("bias decomposition supports linear models only");
    if (mode == CostMode::in_sample) {
        const auto fit = model.fit(data, interval_rows(iv), {});
        return bias_decomposition_in_sample(data, iv, static_cast<const LinearModelFit&>(*fit).fit.coefficients);
    }
    std::vector<VectorXd> per_fold(folds.folds());
    for (int m = 1; m <= folds.folds(); ++m) {
        if (interval_fold_rows(iv, folds, m).empty()) continue;
        const auto fit = model.fit(data, interval_excluding_fold(iv, folds, m), folds.fold_rows(m));
        per_fold[m - 1] = static_cast<const LinearModelFit&>(*fit).fit.coefficients;
    }
    return bias_decomposition_crossfit(data, iv, folds, per_fold);
}

} // namespace cpd
