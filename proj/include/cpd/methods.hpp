#pragma once

#include "cpd/classifier.hpp"
#include "cpd/core.hpp"
#include "cpd/crossfit.hpp"
#include "cpd/engine_linear.hpp"
#include "cpd/log.hpp"
#include "cpd/loss_models.hpp"
#include "cpd/rng.hpp"
#include "cpd/search.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cpd {

// The five detection methods: in-sample vs cross-fitted evaluation, with
// hold-out-global, per-segment CV, or recycled hyperparameter tuning.
enum class Method { in_ho, in_cv, cf_ho, cf_cv, cf_cv_star };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::in_ho: return "in-ho";
        case Method::in_cv: return "in-cv";
        case Method::cf_ho: return "cf-ho";
        case Method::cf_cv: return "cf-cv";
        case Method::cf_cv_star: return "cf-cv-star";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "in-ho") return Method::in_ho;
    if (s == "in-cv") return Method::in_cv;
    if (s == "cf-ho") return Method::cf_ho;
    if (s == "cf-cv") return Method::cf_cv;
    if (s == "cf-cv-star" || s == "cf-cv*") return Method::cf_cv_star;
    throw InvalidConfigError("unknown method: " + s);
}

inline bool is_crossfit(Method m) { return m == Method::cf_ho || m == Method::cf_cv || m == Method::cf_cv_star; }

enum class ModelChoice { gaussian_mean, lasso_fixed, lasso_cv, ridgeless, ls_selected, classifier_knn };

inline const char* to_string(ModelChoice m) {
    switch (m) {
        case ModelChoice::gaussian_mean: return "gaussian-mean";
        case ModelChoice::lasso_fixed: return "lasso-fixed";
        case ModelChoice::lasso_cv: return "lasso-cv";
        case ModelChoice::ridgeless: return "ridgeless";
        case ModelChoice::ls_selected: return "ls-selected";
        case ModelChoice::classifier_knn: return "classifier-knn";
    }
    return "?";
}

inline ModelChoice model_from_string(const std::string& s) {
    if (s == "gaussian-mean") return ModelChoice::gaussian_mean;
    if (s == "lasso-fixed") return ModelChoice::lasso_fixed;
    if (s == "lasso-cv") return ModelChoice::lasso_cv;
    if (s == "ridgeless") return ModelChoice::ridgeless;
    if (s == "ls-selected") return ModelChoice::ls_selected;
    if (s == "classifier-knn") return ModelChoice::classifier_knn;
    throw InvalidConfigError("unknown model: " + s);
}

struct DetectConfig {
    Method method = Method::cf_cv;
    ModelChoice model = ModelChoice::gaussian_mean;
    int M = 5;
    SearchConfig search = SearchConfig::fixed_K(1, 0); // d_m 0 = auto
    int grid_size = 20;
    double grid_ratio = 1e-3;
    double fixed_lambda = std::numeric_limits<double>::quiet_NaN(); // lasso-fixed
    int screen_size = 30;                                           // ls-selected
    KnnClassifierConfig knn;
    LassoControl lasso_ctrl;
    std::uint64_t seed = 0;

    bool lasso_family() const { return model == ModelChoice::lasso_fixed || model == ModelChoice::lasso_cv; }
};

namespace detail {

inline int auto_d_m(const DetectConfig& cfg) {
    if (cfg.search.d_m > 0) return cfg.search.d_m;
    switch (cfg.model) {
        case ModelChoice::gaussian_mean: return 2;
        case ModelChoice::ridgeless: return 2;
        case ModelChoice::ls_selected: return cfg.screen_size + 1;
        case ModelChoice::classifier_knn: return 2 * cfg.M;
        default: return 4 * cfg.M; // lasso family: keeps pair training sets workable
    }
}

inline SearchConfig resolved_search(const DetectConfig& cfg) {
    SearchConfig s = cfg.search;
    s.d_m = auto_d_m(cfg);
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Engine-backed cost provider for the lasso family. One instance serves every
// method requested on the same dataset because the per-interval quantities
// are shared (singles feed cf-cv*, the CV curve, and cf-cv's evaluation).
// ---------------------------------------------------------------------------

class LassoCostTables {
  public:
    LassoCostTables(const Dataset& data, int M, LambdaGrid ladder, EngineNeeds needs, LassoControl ctrl)
        : n_(data.n()), M_(M),
          prefix_(std::make_unique<PrefixFoldedStats>(data.covariates(), data.responses(), M)),
          engine_(PrefixStatsView{prefix_.get()}, std::move(ladder), needs, ctrl) {
        const std::size_t cells = static_cast<std::size_t>(n_ + 1) * (n_ + 1);
        in_.assign(needs.in_sample ? cells : 0, kNan);
        cf_star_.assign(needs.cf ? cells : 0, kNan);
        cf_cv_.assign(needs.cf_cv ? cells : 0, kNan);
        computed_.assign(cells, 0);
    }

    CostFn cost_fn(Method method) {
        switch (method) {
            case Method::in_ho:
            case Method::in_cv:
                return [this](int s, int e) { return fetch(s, e, in_); };
            case Method::cf_ho:
            case Method::cf_cv_star:
                return [this](int s, int e) { return fetch(s, e, cf_star_); };
            case Method::cf_cv:
                return [this](int s, int e) { return fetch(s, e, cf_cv_); };
        }
        throw InvalidConfigError("cost_fn: bad method");
    }

  private:
    static constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

    double fetch(int s, int e, std::vector<double>& table) {
        const std::size_t idx = static_cast<std::size_t>(s) * (n_ + 1) + e;
        if (!computed_[idx]) {
            if (s != chain_s_) {
                engine_.start_chain();
                chain_s_ = s;
            }
            const auto costs = engine_.evaluate(s, e);
            if (!in_.empty()) in_[idx] = costs.in_sample;
            if (!cf_star_.empty()) cf_star_[idx] = costs.cf_star;
            if (!cf_cv_.empty()) cf_cv_[idx] = costs.cf_cv;
            computed_[idx] = 1;
        }
        if (table.empty() || std::isnan(table[idx]))
            throw InvalidConfigError("LassoCostTables: method not enabled for this run");
        return table[idx];
    }

    int n_;
    int M_;
    std::unique_ptr<PrefixFoldedStats> prefix_;
    LinearCostEngine<PrefixStatsView> engine_;
    std::vector<double> in_, cf_star_, cf_cv_;
    std::vector<char> computed_;
    int chain_s_ = -1;
};

// Single-changepoint scan (shared by K=1 detection and the loss curves):
// fills left/right cost tables in one forward pass.
struct ScanCosts {
    std::vector<double> left_in, left_cf_star, left_cf_cv;
    std::vector<double> right_in, right_cf_star, right_cf_cv;
    int d_m = 0, n = 0;

    double total(Method m, int tau) const {
        switch (m) {
            case Method::in_ho:
            case Method::in_cv: return left_in[tau] + right_in[tau];
            case Method::cf_ho:
            case Method::cf_cv_star: return left_cf_star[tau] + right_cf_star[tau];
            case Method::cf_cv: return left_cf_cv[tau] + right_cf_cv[tau];
        }
        throw InvalidConfigError("ScanCosts: bad method");
    }
};

inline ScanCosts lasso_scan_costs(const Dataset& data, int M, const LambdaGrid& ladder, EngineNeeds needs,
                                  int d_m, LassoControl ctrl) {
    const int n = data.n();
    if (2 * d_m > n) throw InvalidConfigError("scan: need 2*d_m <= n");
    ScanFoldedStats stats(data.covariates(), data.responses(), M);
    LinearCostEngine<ScanSideView> left(ScanSideView{&stats, 0}, ladder, needs, ctrl);
    LinearCostEngine<ScanSideView> right(ScanSideView{&stats, 1}, ladder, needs, ctrl);

    ScanCosts out;
    out.d_m = d_m;
    out.n = n;
    auto alloc = [&](std::vector<double>& v, bool on) {
        if (on) v.assign(n + 1, std::numeric_limits<double>::quiet_NaN());
    };
    alloc(out.left_in, needs.in_sample);
    alloc(out.right_in, needs.in_sample);
    alloc(out.left_cf_star, needs.cf);
    alloc(out.right_cf_star, needs.cf);
    alloc(out.left_cf_cv, needs.cf_cv);
    alloc(out.right_cf_cv, needs.cf_cv);

    for (int tau = d_m; tau <= n - d_m; ++tau) {
        const auto lc = left.evaluate(0, tau);
        const auto rc = right.evaluate(tau, n);
        if (needs.in_sample) {
            out.left_in[tau] = lc.in_sample;
            out.right_in[tau] = rc.in_sample;
        }
        if (needs.cf) {
            out.left_cf_star[tau] = lc.cf_star;
            out.right_cf_star[tau] = rc.cf_star;
        }
        if (needs.cf_cv) {
            out.left_cf_cv[tau] = lc.cf_cv;
            out.right_cf_cv[tau] = rc.cf_cv;
        }
    }
    return out;
}

inline EngineNeeds needs_for(Method m) {
    EngineNeeds needs;
    switch (m) {
        case Method::in_ho:
        case Method::in_cv: needs.in_sample = true; break;
        case Method::cf_ho:
        case Method::cf_cv_star: needs.cf = true; break;
        case Method::cf_cv: needs.cf_cv = true; break;
    }
    return needs;
}

// ---------------------------------------------------------------------------
// Generic-model cost functions (gaussian mean, classifier, ridgeless,
// ls-selected): memoized row-level crossfit costs.
// ---------------------------------------------------------------------------

inline std::shared_ptr<LossModel> build_generic_model(const DetectConfig& cfg, const Dataset& data,
                                                      const std::optional<LambdaGrid>& ladder) {
    switch (cfg.model) {
        case ModelChoice::gaussian_mean:
            return gaussian_mean_model();
        case ModelChoice::ridgeless:
            return linear_model(LinearFitter::ridgeless, TuningMethod::fixed(0.0), cfg.M, 0, cfg.lasso_ctrl);
        case ModelChoice::ls_selected:
            return linear_model(LinearFitter::ls_selected, TuningMethod::fixed(0.0), cfg.M, cfg.screen_size,
                                cfg.lasso_ctrl);
        case ModelChoice::lasso_fixed:
            return linear_model(LinearFitter::lasso_fixed,
                                cfg.method == Method::cf_cv_star && ladder
                                    ? TuningMethod::recycled(*ladder)
                                    : TuningMethod::fixed(cfg.fixed_lambda),
                                cfg.M, 0, cfg.lasso_ctrl);
        case ModelChoice::lasso_cv:
            if (!ladder) throw InvalidConfigError("lasso-cv needs a lambda grid");
            if (cfg.method == Method::cf_cv_star)
                return linear_model(LinearFitter::lasso_fixed, TuningMethod::recycled(*ladder), cfg.M, 0,
                                    cfg.lasso_ctrl);
            return linear_model(LinearFitter::lasso_cv, TuningMethod::cv(cfg.M, *ladder), cfg.M, 0,
                                cfg.lasso_ctrl);
        case ModelChoice::classifier_knn: {
            KnnTuning tuning = KnnTuning::fixed();
            if (cfg.method == Method::in_cv || cfg.method == Method::cf_cv) tuning = KnnTuning::cv(cfg.M);
            if (cfg.method == Method::cf_cv_star) tuning = KnnTuning::recycled();
            return classifier_loss_model(cfg.knn, tuning, cfg.M);
        }
    }
    throw InvalidConfigError("build_generic_model: bad model");
}

inline CostFn generic_cost_fn(std::shared_ptr<LossModel> model, const Dataset& data, Method method,
                              std::shared_ptr<FoldPlan> folds, std::shared_ptr<CostCache> cache) {
    const CostMode mode = !is_crossfit(method)
                              ? CostMode::in_sample
                              : (method == Method::cf_cv_star && model->grid_size() > 0
                                     ? CostMode::crossfit_recycled
                                     : CostMode::crossfit);
    return [model, &data, mode, folds, cache](int s, int e) {
        CostCache::Key key{s, e, mode, model->tag()};
        return cache->get_or_compute(key, [&] {
            const Interval iv{s, e};
            switch (mode) {
                case CostMode::in_sample: return in_sample_cost(*model, data, iv).value;
                case CostMode::crossfit: return crossfit_cost(*model, data, iv, *folds).value;
                case CostMode::crossfit_recycled:
                    return crossfit_cost_recycled(*model, data, iv, *folds).value;
            }
            throw InvalidConfigError("generic_cost_fn: bad mode");
        });
    };
}

// ---------------------------------------------------------------------------
// Hold-out global tuning (the in-ho / cf-ho lambda, and the classifier's k):
// detect on the odd-indexed half per candidate, score mean squared prediction
// error on the even-indexed half, keep the winner.
// ---------------------------------------------------------------------------

struct HoldoutDiagnostics {
    std::vector<double> candidate;     // grid value (lambda or k)
    std::vector<double> holdout_error; // +inf where detection failed
    double chosen = 0.0;
};

namespace detail {

inline Dataset half_dataset(const Dataset& data, bool odd_half) {
    const int n = data.n();
    std::vector<int> rows;
    for (int r = odd_half ? 0 : 1; r < n; r += 2) rows.push_back(r);
    MatrixXd X(rows.size(), data.p());
    for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<int>(i)) = data.covariates().row(rows[i]);
    if (data.kind() == DataKind::regression) {
        VectorXd y(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<int>(i)] = data.responses()[rows[i]];
        return Dataset::regression(std::move(X), std::move(y));
    }
    return Dataset::multivariate(std::move(X));
}

// Hold-out row r (0-based, even half) maps to the training-half position
// ceil((r+1)/2) (1-based), the order-preserving image of its time index.
inline int holdout_to_training_pos(int r) { return (r + 1) / 2; } // 1-based

// Index of the segment of `seg` containing 1-based position i.
inline int segment_index_of(const Segmentation& seg, int i) {
    int k = 0;
    const auto& taus = seg.taus();
    while (k < static_cast<int>(taus.size()) && i > taus[k]) ++k;
    return k;
}

} // namespace detail

// Squared prediction error of a detected model on the even-indexed hold-out
// half. Per-segment coefficients come from refitting the given model on each
// training-half segment; hold-out rows map to segments by the interleaving
// image.
inline double holdout_prediction_error(const Dataset& data, const Dataset& training_half,
                                       const Segmentation& seg, const LossModel& model) {
    std::vector<VectorXd> coefs;
    for (const auto& iv : segments_of(seg)) {
        const auto fit = model.fit(training_half, interval_rows(iv), {});
        const auto* lf = dynamic_cast<const LinearModelFit*>(fit.get());
        if (lf == nullptr) throw UnsupportedModelError("holdout scoring needs a linear model");
        coefs.push_back(lf->fit.coefficients);
    }
    double err = 0.0;
    int count = 0;
    for (int r = 1; r < data.n(); r += 2) {
        const int pos = detail::holdout_to_training_pos(r);
        if (pos > seg.n()) break;
        const int k = detail::segment_index_of(seg, pos);
        const double pred = data.covariates().row(r).dot(coefs[k]);
        const double resid = data.responses()[r] - pred;
        err += resid * resid;
        ++count;
    }
    if (count == 0) throw TuningFailedError("holdout scoring: empty hold-out half");
    return err / count;
}

DetectionResult detect(const Dataset& data, const DetectConfig& cfg); // forward

// Tune the global lasso lambda for in-ho / cf-ho over an explicit grid.
inline HoldoutDiagnostics holdout_tune_global(const Dataset& data, const LambdaGrid& grid,
                                              const DetectConfig& cfg) {
    if (data.n() < 4) throw InvalidConfigError("holdout_tune_global: need n >= 4");
    const Dataset training = detail::half_dataset(data, true);
    HoldoutDiagnostics diag;
    double best = std::numeric_limits<double>::infinity();
    for (int g = 0; g < grid.size(); ++g) {
        diag.candidate.push_back(grid[g]);
        double err = std::numeric_limits<double>::infinity();
        try {
            DetectConfig half_cfg = cfg;
            // Inner detection runs the fixed-lambda variant of the method.
            half_cfg.method = is_crossfit(cfg.method) ? Method::cf_cv_star : Method::in_cv;
            half_cfg.model = cfg.model == ModelChoice::ridgeless ? ModelChoice::ridgeless
                                                                 : ModelChoice::lasso_fixed;
            half_cfg.fixed_lambda = grid[g];
            half_cfg.search = detail::resolved_search(cfg);
            // Keep the training-half search feasible at half scale.
            half_cfg.search.d_m = std::max(1, half_cfg.search.d_m / 2);
            if (!half_cfg.search.penalized &&
                (half_cfg.search.K + 1) * half_cfg.search.d_m > training.n())
                throw InvalidConfigError("holdout half too short");
            const DetectionResult res = detect(training, half_cfg);
            const auto scoring_model =
                cfg.model == ModelChoice::ridgeless
                    ? linear_model(LinearFitter::ridgeless, TuningMethod::fixed(0.0), cfg.M, 0, cfg.lasso_ctrl)
                    : linear_model(LinearFitter::lasso_fixed, TuningMethod::fixed(grid[g]), cfg.M, 0,
                                   cfg.lasso_ctrl);
            err = holdout_prediction_error(data, training, res.segmentation, *scoring_model);
        } catch (const Error& e) {
            log_debug(std::string("holdout candidate skipped: ") + e.what());
        }
        diag.holdout_error.push_back(err);
        if (err < best) {
            best = err;
            diag.chosen = grid[g];
        }
    }
    if (!(best < std::numeric_limits<double>::infinity()))
        throw TuningFailedError("holdout_tune_global: all candidates failed");
    return diag;
}

// Classifier analog over the k grid: scored by the hold-out half's total
// cross-fitted (or in-sample) loss under the mapped segmentation.
inline HoldoutDiagnostics holdout_tune_classifier(const Dataset& data, const std::vector<int>& k_grid,
                                                  const DetectConfig& cfg) {
    const Dataset training = detail::half_dataset(data, true);
    const Dataset holdout = detail::half_dataset(data, false);
    HoldoutDiagnostics diag;
    double best = std::numeric_limits<double>::infinity();
    for (int k : k_grid) {
        diag.candidate.push_back(k);
        double err = std::numeric_limits<double>::infinity();
        try {
            DetectConfig half_cfg = cfg;
            // Fixed-k inner detection (singleton grid) avoids re-tuning.
            half_cfg.method = is_crossfit(cfg.method) ? Method::cf_cv_star : Method::in_cv;
            half_cfg.knn.k = k;
            half_cfg.knn.k_grid = {k};
            half_cfg.search = detail::resolved_search(cfg);
            half_cfg.search.d_m = std::max(2, half_cfg.search.d_m / 2);
            const DetectionResult res = detect(training, half_cfg);
            // Score: total loss of the hold-out half under the mapped taus.
            auto model = classifier_loss_model(half_cfg.knn, KnnTuning::fixed(), cfg.M);
            auto folds = std::make_shared<FoldPlan>(holdout.n(), cfg.M);
            std::vector<int> taus;
            for (int t : res.segmentation.taus())
                if (t < holdout.n()) taus.push_back(t);
            double total = 0.0;
            for (const auto& iv : segments_of(Segmentation(taus, holdout.n()))) {
                total += is_crossfit(cfg.method) ? crossfit_cost(*model, holdout, iv, *folds).value
                                                 : in_sample_cost(*model, holdout, iv).value;
            }
            err = total;
        } catch (const Error& e) {
            log_debug(std::string("holdout k skipped: ") + e.what());
        }
        diag.holdout_error.push_back(err);
        if (err < best) {
            best = err;
            diag.chosen = k;
        }
    }
    if (!(best < std::numeric_limits<double>::infinity()))
        throw TuningFailedError("holdout_tune_classifier: all candidates failed");
    return diag;
}

// ---------------------------------------------------------------------------
// Detection entry point.
// ---------------------------------------------------------------------------

inline DetectionResult detect(const Dataset& data, const DetectConfig& cfg) {
    DetectConfig run = cfg;
    run.search = detail::resolved_search(cfg);
    const int n = data.n();
    const SearchConfig& search = run.search;

    // Resolve hold-out-global tuning into a fixed hyperparameter first.
    if (run.method == Method::in_ho || run.method == Method::cf_ho) {
        if (run.model == ModelChoice::classifier_knn) {
            const auto diag = holdout_tune_classifier(data, run.knn.resolve_grid(n), run);
            run.knn.k = static_cast<int>(diag.chosen);
            run.knn.k_grid = {run.knn.k};
        } else if (run.lasso_family()) {
            const LambdaGrid grid = std::isnan(run.fixed_lambda)
                                        ? global_lambda_grid(data, run.grid_size, run.grid_ratio)
                                        : LambdaGrid({run.fixed_lambda});
            const auto diag = holdout_tune_global(data, grid, run);
            run.fixed_lambda = diag.chosen;
            run.model = ModelChoice::lasso_fixed;
        }
        // ridgeless / gaussian-mean / ls-selected have nothing to tune
    }

    DetectionResult result;
    const bool engine_eligible = run.lasso_family() && data.kind() == DataKind::regression;

    if (engine_eligible) {
        LambdaGrid ladder = (run.model == ModelChoice::lasso_fixed && !std::isnan(run.fixed_lambda))
                                ? LambdaGrid({run.fixed_lambda})
                                : global_lambda_grid(data, run.grid_size, run.grid_ratio);
        const EngineNeeds needs = needs_for(run.method);
        const bool single_cp_scan = !search.penalized && search.K == 1 && search.candidate_stride <= 1;
        if (single_cp_scan) {
            // One forward pass with maintained statistics; the DP for K=1
            // queries exactly the prefix and suffix segments.
            const auto costs = std::make_shared<ScanCosts>(
                lasso_scan_costs(data, run.M, ladder, needs, search.d_m, run.lasso_ctrl));
            const Method method = run.method;
            CostFn fn = [costs, method, n](int s, int e) {
                if (s == 0 && e == n) {
                    // Single-segment query cannot arise in a K=1 search.
                    throw InvalidConfigError("scan cost: full-interval query");
                }
                if (s == 0) {
                    const double l = method == Method::cf_cv ? costs->left_cf_cv[e]
                                     : is_crossfit(method)   ? costs->left_cf_star[e]
                                                             : costs->left_in[e];
                    return l;
                }
                if (e != n) throw InvalidConfigError("scan cost: interior interval query");
                return method == Method::cf_cv ? costs->right_cf_cv[s]
                       : is_crossfit(method)   ? costs->right_cf_star[s]
                                               : costs->right_in[s];
            };
            result = dp_solve(fn, n, search);
        } else {
            LassoCostTables tables(data, run.M, std::move(ladder), needs, run.lasso_ctrl);
            result = dp_solve(tables.cost_fn(run.method), n, search);
        }
        for (auto& sc : result.per_segment) {
            sc.mode = !is_crossfit(run.method)
                          ? CostMode::in_sample
                          : (run.method == Method::cf_cv_star ? CostMode::crossfit_recycled : CostMode::crossfit);
            sc.model_tag = std::string(to_string(run.model));
        }
    } else {
        std::optional<LambdaGrid> ladder;
        if (run.lasso_family())
            ladder = (run.model == ModelChoice::lasso_fixed && !std::isnan(run.fixed_lambda) &&
                      run.method != Method::cf_cv_star)
                         ? LambdaGrid({run.fixed_lambda})
                         : global_lambda_grid(data, run.grid_size, run.grid_ratio);
        auto model = build_generic_model(run, data, ladder);
        auto folds = std::make_shared<FoldPlan>(n, run.M);
        auto cache = std::make_shared<CostCache>();
        result = dp_solve(generic_cost_fn(model, data, run.method, folds, cache), n, search);
        for (auto& sc : result.per_segment) {
            sc.mode = !is_crossfit(run.method)
                          ? CostMode::in_sample
                          : (run.method == Method::cf_cv_star && model->grid_size() > 0
                                 ? CostMode::crossfit_recycled
                                 : CostMode::crossfit);
            sc.model_tag = model->tag();
        }
    }

    result.method = to_string(cfg.method);
    result.config.M = run.M;
    result.config.seed = run.seed;
    result.config.extra["model"] = to_string(run.model);
    result.config.extra["rng"] = Rng::algorithm_tag();
    if (run.lasso_family() && !std::isnan(run.fixed_lambda))
        result.config.extra["lambda"] = std::to_string(run.fixed_lambda);
    return result;
}

// Loss curve for single-changepoint scans under the configured method/model.
inline std::vector<LossCurvePoint> method_loss_curve(const Dataset& data, const DetectConfig& cfg) {
    DetectConfig run = cfg;
    run.search = detail::resolved_search(cfg);
    const int n = data.n();
    const int d_m = run.search.d_m;
    if (run.lasso_family() && data.kind() == DataKind::regression) {
        LambdaGrid ladder = (run.model == ModelChoice::lasso_fixed && !std::isnan(run.fixed_lambda))
                                ? LambdaGrid({run.fixed_lambda})
                                : global_lambda_grid(data, run.grid_size, run.grid_ratio);
        const ScanCosts costs = lasso_scan_costs(data, run.M, ladder, needs_for(run.method), d_m,
                                                 run.lasso_ctrl);
        std::vector<LossCurvePoint> out;
        for (int tau = d_m; tau <= n - d_m; ++tau) out.push_back({tau, costs.total(run.method, tau)});
        return out;
    }
    std::optional<LambdaGrid> ladder;
    auto model = build_generic_model(run, data, ladder);
    auto folds = std::make_shared<FoldPlan>(n, run.M);
    auto cache = std::make_shared<CostCache>();
    return loss_curve(generic_cost_fn(model, data, run.method, folds, cache), n, d_m);
}

// Hold-out selection of the number of changepoints over a candidate grid.
inline int select_k_holdout(const Dataset& data, const DetectConfig& cfg, const std::vector<int>& k_grid) {
    if (k_grid.empty()) throw InvalidConfigError("select_k_holdout: empty grid");
    const Dataset training = detail::half_dataset(data, true);
    const Dataset holdout = detail::half_dataset(data, false);
    int best_k = -1;
    double best_err = std::numeric_limits<double>::infinity();
    for (int K : k_grid) {
        try {
            DetectConfig half_cfg = cfg;
            half_cfg.search = detail::resolved_search(cfg);
            half_cfg.search.penalized = false;
            half_cfg.search.K = K;
            half_cfg.search.d_m = std::max(2, half_cfg.search.d_m / 2);
            if ((K + 1) * half_cfg.search.d_m > training.n()) continue;
            const DetectionResult res = detect(training, half_cfg);
            double err;
            if (data.kind() == DataKind::regression) {
                std::optional<LambdaGrid> ladder;
                if (half_cfg.lasso_family())
                    ladder = std::isnan(half_cfg.fixed_lambda)
                                 ? global_lambda_grid(data, half_cfg.grid_size, half_cfg.grid_ratio)
                                 : LambdaGrid({half_cfg.fixed_lambda});
                DetectConfig scoring_cfg = half_cfg;
                if (scoring_cfg.method == Method::cf_cv_star) scoring_cfg.method = Method::in_cv;
                auto scoring_model = build_generic_model(scoring_cfg, training, ladder);
                err = holdout_prediction_error(data, training, res.segmentation, *scoring_model);
            } else {
                // Hold-out cross-fitted loss under the mapped segmentation.
                auto model = build_generic_model(half_cfg, holdout, std::nullopt);
                auto folds = std::make_shared<FoldPlan>(holdout.n(), cfg.M);
                std::vector<int> taus;
                for (int t : res.segmentation.taus())
                    if (t < holdout.n()) taus.push_back(t);
                err = 0.0;
                for (const auto& iv : segments_of(Segmentation(taus, holdout.n())))
                    err += crossfit_cost(*model, holdout, iv, *folds).value;
            }
            if (err < best_err) {
                best_err = err;
                best_k = K;
            }
        } catch (const Error& e) {
            log_debug(std::string("select_k candidate skipped: ") + e.what());
        }
    }
    if (best_k < 0) throw TuningFailedError("select_k_holdout: all candidates failed");
    return best_k;
}

} // namespace cpd
