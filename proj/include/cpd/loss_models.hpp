#pragma once

#include "cpd/core.hpp"
#include "cpd/crossfit.hpp"
#include "cpd/lasso.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cpd {

// ---------------------------------------------------------------------------
// Tuning descriptors. holdout_global is resolved by the method layer (the
// tuner re-runs detection per grid value and then freezes the winner as a
// fixed hyperparameter); the other kinds are handled inside the models.
// ---------------------------------------------------------------------------

struct TuningMethod {
    enum class Kind { fixed, cv, holdout_global, recycled };
    Kind kind = Kind::fixed;
    double lambda = 0.0;            // fixed value (or resolved hold-out winner)
    int B = 0;                      // inner fold count for cv
    std::optional<LambdaGrid> grid; // candidates for cv / recycled / holdout_global

    static TuningMethod fixed(double lambda) {
        TuningMethod t;
        t.kind = Kind::fixed;
        t.lambda = lambda;
        return t;
    }
    static TuningMethod cv(int B, LambdaGrid grid) {
        if (B < 2) throw InvalidConfigError("TuningMethod::cv: need B >= 2");
        TuningMethod t;
        t.kind = Kind::cv;
        t.B = B;
        t.grid = std::move(grid);
        return t;
    }
    static TuningMethod holdout_global(LambdaGrid grid) {
        TuningMethod t;
        t.kind = Kind::holdout_global;
        t.grid = std::move(grid);
        return t;
    }
    static TuningMethod recycled(LambdaGrid grid) {
        TuningMethod t;
        t.kind = Kind::recycled;
        t.grid = std::move(grid);
        return t;
    }
};

namespace detail {

inline std::uint64_t hash_doubles(const std::vector<double>& v) {
    std::uint64_t h = 1469598103934665603ull;
    for (double x : v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(x));
        std::memcpy(&bits, &x, sizeof(bits));
        h = (h ^ bits) * 1099511628211ull;
    }
    return h;
}

inline std::string tuning_tag(const TuningMethod& t) {
    char buf[96];
    switch (t.kind) {
        case TuningMethod::Kind::fixed:
            std::snprintf(buf, sizeof(buf), "fixed(%.17g)", t.lambda);
            return buf;
        case TuningMethod::Kind::cv:
            std::snprintf(buf, sizeof(buf), "cv(B=%d,grid=%llx)", t.B,
                          static_cast<unsigned long long>(hash_doubles(t.grid->values())));
            return buf;
        case TuningMethod::Kind::holdout_global:
            std::snprintf(buf, sizeof(buf), "holdout(grid=%llx)",
                          static_cast<unsigned long long>(hash_doubles(t.grid->values())));
            return buf;
        case TuningMethod::Kind::recycled:
            std::snprintf(buf, sizeof(buf), "recycled(grid=%llx)",
                          static_cast<unsigned long long>(hash_doubles(t.grid->values())));
            return buf;
    }
    return "?";
}

inline MatrixXd submatrix_rows(const MatrixXd& X, const std::vector<int>& rows) {
    MatrixXd out(rows.size(), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = X.row(rows[i]);
    return out;
}

inline VectorXd subvector_rows(const VectorXd& y, const std::vector<int>& rows) {
    VectorXd out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<int>(i)] = y[rows[i]];
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Gaussian mean-shift model: fit is the per-coordinate sample mean, loss the
// squared distance.
// ---------------------------------------------------------------------------

struct MeanFit : ModelFit {
    VectorXd mean;
};

class GaussianMeanModel final : public LossModel {
  public:
    FitPtr fit(const Dataset& data, const std::vector<int>& train_rows,
               const std::vector<int>&) const override {
        if (data.kind() != DataKind::multivariate)
            throw UnsupportedModelError("gaussian mean model needs multivariate data");
        if (train_rows.empty()) throw SegmentInfeasibleError("gaussian mean: empty training set");
        auto f = std::make_shared<MeanFit>();
        f->mean = VectorXd::Zero(data.p());
        for (int r : train_rows) f->mean += data.covariates().row(r).transpose();
        f->mean /= static_cast<double>(train_rows.size());
        return f;
    }

    double loss(const Dataset& data, const ModelFit& fit, const std::vector<int>& eval_rows) const override {
        const auto& mf = static_cast<const MeanFit&>(fit);
        double total = 0.0;
        for (int r : eval_rows) total += (data.covariates().row(r).transpose() - mf.mean).squaredNorm();
        return total;
    }

    int min_fit_size() const override { return 1; }
    std::string tag() const override { return "gaussian-mean"; }
};

inline std::shared_ptr<LossModel> gaussian_mean_model() { return std::make_shared<GaussianMeanModel>(); }

// ---------------------------------------------------------------------------
// High-dimensional linear models: squared loss with one of four fitting
// procedures.
// ---------------------------------------------------------------------------

enum class LinearFitter { lasso_fixed, lasso_cv, ridgeless, ls_selected };

inline const char* to_string(LinearFitter f) {
    switch (f) {
        case LinearFitter::lasso_fixed: return "lasso-fixed";
        case LinearFitter::lasso_cv: return "lasso-cv";
        case LinearFitter::ridgeless: return "ridgeless";
        case LinearFitter::ls_selected: return "ls-selected";
    }
    return "?";
}

struct LinearModelFit : ModelFit {
    LinearFit fit;
    double lambda_selected = 0.0;
};

// Marginal-correlation screening: the screen_size columns with the largest
// |X'y|, ties to the lower index.
inline std::vector<int> screen_by_correlation(const MatrixXd& X, const VectorXd& y, int screen_size) {
    const int p = static_cast<int>(X.cols());
    VectorXd corr = (X.transpose() * y).cwiseAbs();
    std::vector<int> order(p);
    for (int j = 0; j < p; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return corr[a] > corr[b]; });
    order.resize(std::min(p, screen_size));
    std::sort(order.begin(), order.end());
    return order;
}

class LinearLossModel final : public LossModel {
  public:
    LinearLossModel(LinearFitter fitter, TuningMethod tuning, int folds_M, int screen_size = 0,
                    LassoControl ctrl = {})
        : fitter_(fitter), tuning_(std::move(tuning)), M_(folds_M), screen_size_(screen_size), ctrl_(ctrl) {
        if (fitter_ == LinearFitter::lasso_cv && tuning_.kind != TuningMethod::Kind::cv)
            throw InvalidConfigError("lasso_cv fitter needs cv tuning");
        if (fitter_ == LinearFitter::lasso_fixed && tuning_.kind == TuningMethod::Kind::cv)
            throw InvalidConfigError("lasso_fixed fitter cannot take cv tuning");
        if (fitter_ == LinearFitter::ls_selected && screen_size_ < 0)
            throw InvalidConfigError("ls_selected needs a nonnegative screen size");
    }

    FitPtr fit(const Dataset& data, const std::vector<int>& train_rows,
               const std::vector<int>&) const override {
        if (data.kind() != DataKind::regression)
            throw UnsupportedModelError("linear model needs regression data");
        if (train_rows.empty()) throw SegmentInfeasibleError("linear model: empty training set");
        const MatrixXd Xt = detail::submatrix_rows(data.covariates(), train_rows);
        const VectorXd yt = detail::subvector_rows(data.responses(), train_rows);

        auto out = std::make_shared<LinearModelFit>();
        switch (fitter_) {
            case LinearFitter::lasso_fixed: {
                out->fit = path_fit_at(Xt, yt, tuning_.lambda);
                out->lambda_selected = tuning_.lambda;
                break;
            }
            case LinearFitter::lasso_cv: {
                const double lam = aligned_cv_lambda(data, train_rows).lambda_cv;
                out->fit = path_fit_at(Xt, yt, lam);
                out->lambda_selected = lam;
                break;
            }
            case LinearFitter::ridgeless: {
                out->fit = ridgeless_fit(Xt, yt, ctrl_);
                break;
            }
            case LinearFitter::ls_selected: {
                const auto sel = screen_by_correlation(Xt, yt, screen_size_);
                out->fit = ls_on_selected(Xt, yt, sel);
                break;
            }
        }
        return out;
    }

    double loss(const Dataset& data, const ModelFit& fit, const std::vector<int>& eval_rows) const override {
        const auto& lf = static_cast<const LinearModelFit&>(fit);
        double total = 0.0;
        for (int r : eval_rows) {
            const double resid = data.responses()[r] - data.covariates().row(r).dot(lf.fit.coefficients);
            total += resid * resid;
        }
        return total;
    }

    int min_fit_size() const override {
        switch (fitter_) {
            case LinearFitter::lasso_fixed:
            case LinearFitter::lasso_cv: return 2 * M_;
            case LinearFitter::ridgeless: return 2;
            case LinearFitter::ls_selected: return std::max(2, screen_size_ + 1);
        }
        return 2;
    }

    std::string tag() const override {
        std::string t = std::string("linear:") + to_string(fitter_) + ":" + detail::tuning_tag(tuning_);
        if (fitter_ == LinearFitter::ls_selected) t += ":screen=" + std::to_string(screen_size_);
        return t;
    }

    int grid_size() const override {
        if (fitter_ != LinearFitter::lasso_fixed && fitter_ != LinearFitter::lasso_cv) return 0;
        return tuning_.grid ? tuning_.grid->size() : 0;
    }

    std::vector<FitPtr> fit_grid(const Dataset& data, const std::vector<int>& train_rows,
                                 const std::vector<int>&) const override {
        if (!tuning_.grid) throw InvalidConfigError("linear model: no grid for recycled fits");
        const MatrixXd Xt = detail::submatrix_rows(data.covariates(), train_rows);
        const VectorXd yt = detail::subvector_rows(data.responses(), train_rows);
        const auto& grid = *tuning_.grid;
        std::vector<FitPtr> fits;
        fits.reserve(grid.size());
        detail::DenseGramProvider prov(Xt, yt);
        detail::CdSolver<detail::DenseGramProvider> solver(prov, ctrl_);
        for (int g = 0; g < grid.size(); ++g) {
            auto f = std::make_shared<LinearModelFit>();
            if (grid[g] == 0.0) {
                f->fit = ridgeless_fit(Xt, yt, ctrl_);
            } else {
                solver.solve(grid[g]);
                f->fit.coefficients = solver.coefficients();
                f->fit.lambda = grid[g];
                f->fit.objective = solver.objective(grid[g]);
                for (int j = 0; j < f->fit.coefficients.size(); ++j)
                    if (f->fit.coefficients[j] != 0.0) f->fit.active_set.push_back(j);
            }
            f->lambda_selected = grid[g];
            fits.push_back(std::move(f));
        }
        return fits;
    }

    // Inner cross-validation with folds aligned to the global residue
    // classes: V_b = {rows r in the training set with r mod B = b-1}. On a
    // contiguous segment this coincides with rank-based order-preserving
    // folding up to a rotation of the fold labels.
    CvLambdaResult aligned_cv_lambda(const Dataset& data, const std::vector<int>& train_rows) const {
        const auto& grid = *tuning_.grid;
        const int B = tuning_.B;
        const int G = grid.size();
        std::vector<double> losses(G, 0.0);
        for (int b = 0; b < B; ++b) {
            std::vector<int> val, sub;
            for (int r : train_rows) {
                if (r % B == b) val.push_back(r);
                else sub.push_back(r);
            }
            if (val.empty()) continue;
            if (static_cast<int>(sub.size()) < 2)
                throw SegmentInfeasibleError("linear cv: inner training fold below 2 rows");
            const MatrixXd Xs = detail::submatrix_rows(data.covariates(), sub);
            const VectorXd ys = detail::subvector_rows(data.responses(), sub);
            detail::DenseGramProvider prov(Xs, ys);
            detail::CdSolver<detail::DenseGramProvider> solver(prov, ctrl_);
            for (int g = 0; g < G; ++g) {
                VectorXd coef;
                if (grid[g] == 0.0) {
                    coef = ridgeless_fit(Xs, ys, ctrl_).coefficients;
                } else {
                    solver.solve(grid[g]);
                    coef = solver.coefficients();
                }
                double loss = 0.0;
                for (int r : val) {
                    const double resid = data.responses()[r] - data.covariates().row(r).dot(coef);
                    loss += resid * resid;
                }
                losses[g] += loss;
            }
        }
        int best = 0;
        for (int g = 1; g < G; ++g)
            if (losses[g] < losses[best]) best = g;
        return {grid[best], std::move(losses)};
    }

    const TuningMethod& tuning() const { return tuning_; }
    LinearFitter fitter() const { return fitter_; }

  private:
    // Warm-started descent along the grid down to the requested lambda keeps
    // the solve cheap and reproduces the path solution used elsewhere.
    LinearFit path_fit_at(const MatrixXd& Xt, const VectorXd& yt, double lambda) const {
        if (lambda == 0.0) return ridgeless_fit(Xt, yt, ctrl_);
        detail::DenseGramProvider prov(Xt, yt);
        detail::CdSolver<detail::DenseGramProvider> solver(prov, ctrl_);
        if (tuning_.grid) {
            for (int g = 0; g < tuning_.grid->size(); ++g) {
                const double lam = (*tuning_.grid)[g];
                if (lam < lambda) break;
                solver.solve(lam);
                if (lam == lambda) break;
            }
        }
        solver.solve(lambda);
        LinearFit fit;
        fit.coefficients = solver.coefficients();
        fit.lambda = lambda;
        fit.objective = solver.objective(lambda);
        for (int j = 0; j < fit.coefficients.size(); ++j)
            if (fit.coefficients[j] != 0.0) fit.active_set.push_back(j);
        return fit;
    }

    LinearFitter fitter_;
    TuningMethod tuning_;
    int M_;
    int screen_size_;
    LassoControl ctrl_;
};

inline std::shared_ptr<LossModel> linear_model(LinearFitter fitter, TuningMethod tuning, int folds_M,
                                               int screen_size = 0, LassoControl ctrl = {}) {
    return std::make_shared<LinearLossModel>(fitter, std::move(tuning), folds_M, screen_size, ctrl);
}

// Global lambda ladder for a detection run, derived from the full dataset.
inline LambdaGrid global_lambda_grid(const Dataset& data, int G, double ratio) {
    if (data.kind() != DataKind::regression)
        throw UnsupportedModelError("global_lambda_grid needs regression data");
    return lambda_grid(data.covariates(), data.responses(), G, ratio);
}

} // namespace cpd
