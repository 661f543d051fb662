#pragma once

#include "cpd/core.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace cpd {

// Penalized objective convention: ||y - X f||^2 + lambda * sqrt(|I|) * ||f||_1,
// with |I| the number of training rows. No 1/(2|I|) normalization, so lambda
// stays comparable across segment sizes.

struct LinearFit {
    VectorXd coefficients;
    std::vector<int> active_set; // {j : coefficients[j] != 0}, 0-based
    double lambda = 0.0;
    double objective = 0.0;      // final penalized objective
};

struct LassoControl {
    double tol_coord = 1e-7;  // stop when max coordinate change per sweep drops below
    int max_sweeps = 1000;
    double tol_kkt = 1e-5;    // relative to lambda * sqrt(N)
    double rcond = 1e-10;     // pseudoinverse singular-value cutoff, relative
    bool record_objectives = false;
};

class LambdaGrid {
  public:
    // Values are canonicalized to strictly decreasing order. All entries must
    // be positive except an optional single 0, kept as the terminal
    // OLS/ridgeless fallback.
    explicit LambdaGrid(std::vector<double> values) : values_(std::move(values)) {
        if (values_.empty()) throw InvalidConfigError("LambdaGrid: empty grid");
        std::sort(values_.begin(), values_.end(), std::greater<double>());
        int zeros = 0;
        for (std::size_t i = 0; i < values_.size(); ++i) {
            const double v = values_[i];
            if (!std::isfinite(v) || v < 0.0) throw InvalidConfigError("LambdaGrid: values must be finite and >= 0");
            if (v == 0.0) ++zeros;
            if (i > 0 && values_[i - 1] == v && v != 0.0)
                throw InvalidConfigError("LambdaGrid: duplicate value");
        }
        if (zeros > 1) throw InvalidConfigError("LambdaGrid: at most one 0 entry");
    }

    const std::vector<double>& values() const { return values_; }
    int size() const { return static_cast<int>(values_.size()); }
    double operator[](int g) const { return values_[g]; }

  private:
    std::vector<double> values_;
};

inline double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

namespace detail {

// Coordinate descent in covariance form over a Gram-column provider.
//
// Provider contract:
//   int    p() const;
//   double n_train() const;            // |I|
//   const VectorXd& xty() const;       // X'y
//   double yty() const;
//   const double* gram_col(int j);     // column j of X'X, stable until reset
//
// The solver keeps the active set and warm-start state across calls, so a
// decreasing lambda path reuses the previous solution.
template <class Provider>
class CdSolver {
  public:
    CdSolver(Provider& prov, LassoControl ctrl) : prov_(prov), ctrl_(ctrl) {
        const int p = prov_.p();
        f_ = VectorXd::Zero(p);
        c_ = VectorXd::Zero(p);
        in_active_.assign(p, 0);
    }

    // Replace the warm-start state (e.g. chain continuation across segments).
    void set_coefficients(const VectorXd& f0) {
        const int p = prov_.p();
        f_ = f0;
        active_.clear();
        std::fill(in_active_.begin(), in_active_.end(), 0);
        cols_.assign(p, nullptr);
        for (int j = 0; j < p; ++j)
            if (f_[j] != 0.0) add_to_active(j);
        refresh_active_correlations();
    }

    void reset() { set_coefficients(VectorXd::Zero(prov_.p())); }

    // Provider statistics changed (new segment): recompute cached columns and
    // correlations for the current support.
    void rebind() {
        for (int j : active_) cols_[j] = prov_.gram_col(j);
        refresh_active_correlations();
    }

    const VectorXd& coefficients() const { return f_; }
    const std::vector<int>& active() const { return active_; }
    const std::vector<double>& sweep_objectives() const { return sweep_objectives_; }

    // Minimize for the given lambda starting from the current state.
    void solve(double lambda) {
        const int p = prov_.p();
        if (static_cast<int>(cols_.size()) != p) cols_.assign(p, nullptr);
        const double thresh = lambda * std::sqrt(prov_.n_train()) * 0.5;
        sweep_objectives_.clear();
        int sweeps = 0;
        for (int outer = 0; outer < kMaxOuter; ++outer) {
            // Inner: cycle the active set to convergence.
            while (sweeps < ctrl_.max_sweeps) {
                const double max_delta = sweep_active(thresh);
                ++sweeps;
                if (ctrl_.record_objectives) sweep_objectives_.push_back(objective(lambda));
                if (max_delta < ctrl_.tol_coord) break;
            }
            if (!add_kkt_violators(thresh)) break;
            if (sweeps >= ctrl_.max_sweeps) break;
        }
        compact_active();
    }

    double objective(double lambda) const {
        // f'Gf restricted to the active support, via (Gf)_j = b_j - c_j.
        double quad = 0.0, l1 = 0.0, lin = 0.0;
        const VectorXd& b = prov_.xty();
        for (int j : active_) {
            quad += f_[j] * (b[j] - c_[j]);
            lin += b[j] * f_[j];
            l1 += std::abs(f_[j]);
        }
        return prov_.yty() - 2.0 * lin + quad + lambda * std::sqrt(prov_.n_train()) * l1;
    }

  private:
    static constexpr int kMaxOuter = 100;

    void add_to_active(int j) {
        if (in_active_[j]) return;
        in_active_[j] = 1;
        active_.push_back(j);
        if (static_cast<int>(cols_.size()) != prov_.p()) cols_.assign(prov_.p(), nullptr);
        cols_[j] = prov_.gram_col(j);
    }

    // c_j = b_j - (G f)_j for j in the active set.
    void refresh_active_correlations() {
        const VectorXd& b = prov_.xty();
        for (int j : active_) {
            double s = 0.0;
            for (int k : active_) s += cols_[k][j] * f_[k];
            c_[j] = b[j] - s;
        }
    }

    double sweep_active(double thresh) {
        double max_delta = 0.0;
        for (int j : active_) {
            const double gjj = cols_[j][j];
            if (gjj <= 0.0) continue;
            const double z = c_[j] + gjj * f_[j];
            const double fj = soft_threshold(z, thresh) / gjj;
            const double delta = fj - f_[j];
            if (delta == 0.0) continue;
            f_[j] = fj;
            const double* colj = cols_[j];
            for (int i : active_) c_[i] -= delta * colj[i];
            max_delta = std::max(max_delta, std::abs(delta));
        }
        return max_delta;
    }

    bool add_kkt_violators(double thresh) {
        const int p = prov_.p();
        const VectorXd& b = prov_.xty();
        // Full gradient pass c = b - sum_k f_k G[:,k] over the active columns.
        cfull_ = b;
        for (int k : active_) {
            if (f_[k] == 0.0) continue;
            cfull_.noalias() -= f_[k] * Eigen::Map<const VectorXd>(cols_[k], p);
        }
        const double tol = thresh <= 0.0 ? ctrl_.tol_kkt : thresh * ctrl_.tol_kkt;
        bool added = false;
        for (int j = 0; j < p; ++j) {
            if (in_active_[j]) {
                c_[j] = cfull_[j];
                continue;
            }
            if (std::abs(cfull_[j]) > thresh + tol) {
                add_to_active(j);
                c_[j] = cfull_[j];
                added = true;
            }
        }
        return added;
    }

    // Drop zero coefficients from the iteration order; keeps sweeps tight on
    // long decreasing paths.
    void compact_active() {
        std::vector<int> keep;
        keep.reserve(active_.size());
        for (int j : active_) {
            if (f_[j] != 0.0) {
                keep.push_back(j);
            } else {
                in_active_[j] = 0;
            }
        }
        active_ = std::move(keep);
    }

    Provider& prov_;
    LassoControl ctrl_;
    VectorXd f_;
    VectorXd c_;     // b - Gf, valid on the active set
    VectorXd cfull_;
    std::vector<int> active_;
    std::vector<char> in_active_;
    std::vector<const double*> cols_;
    std::vector<double> sweep_objectives_;
};

// Dense provider for the raw-matrix entry points: precomputes the full Gram.
class DenseGramProvider {
  public:
    DenseGramProvider(const MatrixXd& X, const VectorXd& y)
        : n_(static_cast<double>(X.rows())), gram_(X.transpose() * X), xty_(X.transpose() * y),
          yty_(y.squaredNorm()) {}

    int p() const { return static_cast<int>(gram_.cols()); }
    double n_train() const { return n_; }
    const VectorXd& xty() const { return xty_; }
    double yty() const { return yty_; }
    const double* gram_col(int j) { return gram_.col(j).data(); }

  private:
    double n_;
    MatrixXd gram_;
    VectorXd xty_;
    double yty_;
};

} // namespace detail

// Minimum-L2-norm least squares via SVD pseudoinverse with relative cutoff.
inline LinearFit ridgeless_fit(const MatrixXd& X, const VectorXd& y, const LassoControl& ctrl = {}) {
    if (X.rows() < 1) throw InvalidConfigError("ridgeless_fit: need at least one row");
    if (!X.allFinite() || !y.allFinite()) throw NumericError("ridgeless_fit: non-finite input");
    Eigen::BDCSVD<MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? ctrl.rcond * sv[0] : 0.0;
    VectorXd inv = VectorXd::Zero(sv.size());
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > cutoff && sv[i] > 0.0) inv[i] = 1.0 / sv[i];
    LinearFit fit;
    fit.coefficients = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * y;
    fit.lambda = 0.0;
    for (int j = 0; j < fit.coefficients.size(); ++j)
        if (fit.coefficients[j] != 0.0) fit.active_set.push_back(j);
    fit.objective = (y - X * fit.coefficients).squaredNorm();
    return fit;
}

// Lasso solution of ||y - Xf||^2 + lambda sqrt(|I|) ||f||_1 by coordinate
// descent. lambda = 0 falls back to the minimum-norm least squares solution.
inline LinearFit lasso_fit(const MatrixXd& X, const VectorXd& y, double lambda,
                           const std::optional<VectorXd>& warm_start = std::nullopt,
                           const LassoControl& ctrl = {}) {
    if (lambda < 0.0 || !std::isfinite(lambda)) throw NumericError("lasso_fit: lambda must be finite and >= 0");
    if (X.rows() < 1) throw InvalidConfigError("lasso_fit: need at least one row");
    if (!X.allFinite() || !y.allFinite()) throw NumericError("lasso_fit: non-finite input");
    if (lambda == 0.0) return ridgeless_fit(X, y, ctrl);

    detail::DenseGramProvider prov(X, y);
    detail::CdSolver<detail::DenseGramProvider> solver(prov, ctrl);
    if (warm_start) {
        if (warm_start->size() != X.cols()) throw InvalidConfigError("lasso_fit: warm start size mismatch");
        solver.set_coefficients(*warm_start);
    }
    solver.solve(lambda);

    LinearFit fit;
    fit.coefficients = solver.coefficients();
    fit.lambda = lambda;
    for (int j = 0; j < fit.coefficients.size(); ++j)
        if (fit.coefficients[j] != 0.0) fit.active_set.push_back(j);
    fit.objective = solver.objective(lambda);
    return fit;
}

inline double lasso_objective(const MatrixXd& X, const VectorXd& y, const VectorXd& f, double lambda) {
    return (y - X * f).squaredNorm() + lambda * std::sqrt(static_cast<double>(X.rows())) * f.lpNorm<1>();
}

// Smallest lambda with all-zero solution: 2 ||X'y||_inf / sqrt(|I|).
inline double lambda_max(const MatrixXd& X, const VectorXd& y) {
    return 2.0 * (X.transpose() * y).lpNorm<Eigen::Infinity>() / std::sqrt(static_cast<double>(X.rows()));
}

// Log-spaced grid from lambda_max down to ratio * lambda_max.
inline LambdaGrid lambda_grid(const MatrixXd& X, const VectorXd& y, int G, double ratio) {
    if (G < 2) throw InvalidConfigError("lambda_grid: need G >= 2");
    if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidConfigError("lambda_grid: need 0 < ratio < 1");
    const double lmax = lambda_max(X, y);
    if (lmax == 0.0) return LambdaGrid({0.0});
    std::vector<double> values(G);
    const double step = std::log(ratio) / static_cast<double>(G - 1);
    for (int g = 0; g < G; ++g) values[g] = lmax * std::exp(step * g);
    values[0] = lmax;
    values[G - 1] = lmax * ratio;
    return LambdaGrid(std::move(values));
}

// Largest KKT violation of a lasso solution, relative to lambda sqrt(N).
// Stationarity with r = y - Xf: 2 x_j'r = sign(f_j) lambda sqrt(N) on the
// support, |2 x_j'r| <= lambda sqrt(N) off it.
inline double max_kkt_violation(const MatrixXd& X, const VectorXd& y, const VectorXd& f, double lambda) {
    const double lam = lambda * std::sqrt(static_cast<double>(X.rows()));
    const VectorXd corr = 2.0 * (X.transpose() * (y - X * f));
    double worst = 0.0;
    for (int j = 0; j < f.size(); ++j) {
        double viol;
        if (f[j] != 0.0) {
            viol = std::abs(corr[j] - (f[j] > 0.0 ? lam : -lam));
        } else {
            viol = std::max(0.0, std::abs(corr[j]) - lam);
        }
        worst = std::max(worst, viol);
    }
    return lam > 0.0 ? worst / lam : worst;
}

// Ordinary least squares restricted to the selected columns; zero elsewhere.
inline LinearFit ls_on_selected(const MatrixXd& X, const VectorXd& y, const std::vector<int>& selected) {
    const int p = static_cast<int>(X.cols());
    LinearFit fit;
    fit.coefficients = VectorXd::Zero(p);
    fit.lambda = 0.0;
    if (selected.empty()) {
        fit.objective = y.squaredNorm();
        return fit;
    }
    if (static_cast<int>(selected.size()) > X.rows())
        throw SegmentInfeasibleError("ls_on_selected: more selected columns than rows");
    MatrixXd Xs(X.rows(), selected.size());
    for (std::size_t k = 0; k < selected.size(); ++k) {
        if (selected[k] < 0 || selected[k] >= p) throw InvalidConfigError("ls_on_selected: column index out of range");
        Xs.col(static_cast<int>(k)) = X.col(selected[k]);
    }
    Eigen::ColPivHouseholderQR<MatrixXd> qr(Xs);
    if (qr.rank() < static_cast<int>(selected.size()))
        throw SegmentInfeasibleError("ls_on_selected: rank-deficient selected submatrix");
    const VectorXd beta = qr.solve(y);
    for (std::size_t k = 0; k < selected.size(); ++k) {
        fit.coefficients[selected[k]] = beta[static_cast<int>(k)];
        if (beta[static_cast<int>(k)] != 0.0) fit.active_set.push_back(selected[k]);
    }
    std::sort(fit.active_set.begin(), fit.active_set.end());
    fit.objective = (y - X * fit.coefficients).squaredNorm();
    return fit;
}

struct CvLambdaResult {
    double lambda_cv = 0.0;
    std::vector<double> cv_losses; // aligned with the grid
};

// Cross-validated lambda over an explicit grid: argmin_lambda of the summed
// validation losses, ties broken toward the larger lambda. The fold plan
// partitions the rows of X; training complements are solved as a warm-started
// decreasing path.
inline CvLambdaResult cv_lambda(const MatrixXd& X, const VectorXd& y, int B, const LambdaGrid& grid,
                                const FoldPlan& folds, const LassoControl& ctrl = {}) {
    if (folds.n() != X.rows()) throw InvalidConfigError("cv_lambda: fold plan length mismatch");
    if (B != folds.folds()) throw InvalidConfigError("cv_lambda: B must match the fold plan");
    const int n = static_cast<int>(X.rows());
    const int G = grid.size();
    std::vector<double> losses(G, 0.0);

    for (int b = 1; b <= B; ++b) {
        std::vector<int> val = folds.fold_rows(b);
        std::vector<int> train;
        train.reserve(n - val.size());
        {
            std::vector<char> is_val(n, 0);
            for (int r : val) is_val[r] = 1;
            for (int r = 0; r < n; ++r)
                if (!is_val[r]) train.push_back(r);
        }
        if (static_cast<int>(train.size()) < 2)
            throw InvalidConfigError("cv_lambda: training complement has fewer than 2 rows");
        MatrixXd Xt(train.size(), X.cols());
        VectorXd yt(train.size());
        for (std::size_t i = 0; i < train.size(); ++i) {
            Xt.row(static_cast<int>(i)) = X.row(train[i]);
            yt[static_cast<int>(i)] = y[train[i]];
        }
        detail::DenseGramProvider prov(Xt, yt);
        detail::CdSolver<detail::DenseGramProvider> solver(prov, ctrl);
        for (int g = 0; g < G; ++g) {
            VectorXd coef;
            if (grid[g] == 0.0) {
                coef = ridgeless_fit(Xt, yt, ctrl).coefficients;
            } else {
                solver.solve(grid[g]);
                coef = solver.coefficients();
            }
            double loss = 0.0;
            for (int r : val) {
                const double resid = y[r] - X.row(r).dot(coef);
                loss += resid * resid;
            }
            losses[g] += loss;
        }
    }

    int best = 0;
    for (int g = 1; g < G; ++g)
        if (losses[g] < losses[best]) best = g; // grid is decreasing: first minimum = largest lambda
    return {grid[best], std::move(losses)};
}

} // namespace cpd
