#pragma once

#include "cpd/core.hpp"
#include "cpd/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

namespace cpd {

// ---------------------------------------------------------------------------
// Segment-cost engine for linear models with squared loss.
//
// All segment statistics are carried per fold-residue class c in [0, M):
// rows r with r % M = c form fold J_{c+1} under the order-preserving rule.
// Every training set the five methods need is an interval minus at most two
// residue classes, so interval Gram/X'y/y'y statistics per class are enough
// to fit and validate everything:
//
//   singles  f on I\J_m, validated on I∩J_m  -> cf losses, the shared
//            per-lambda CV curve S(lambda), in-cv's lambda-hat, cf-cv*'s min
//   pairs    f on I\J_m\J_b, validated on I∩J_b -> cf-cv's per-fold inner CV
//   full     f on I at lambda-hat              -> in-sample costs
//
// Lambdas come from one fixed ladder per run. Coefficients chain across
// consecutive intervals of a scan (one solver per pattern and ladder
// position), which keeps coordinate-descent warm.
// ---------------------------------------------------------------------------

namespace detail {

// Rows r < t with r % M == c.
inline int class_count_before(int t, int c, int M) { return t > c ? (t - c - 1) / M + 1 : 0; }

} // namespace detail

// Random-access backend: per-class prefix sums of x x', x y, y^2 at every
// class position. Memory is O(n p^2) doubles for the Gram prefixes.
class PrefixFoldedStats {
  public:
    PrefixFoldedStats(const MatrixXd& X, const VectorXd& y, int M)
        : p_(static_cast<int>(X.cols())), M_(M) {
        const int n = static_cast<int>(X.rows());
        gram_.resize(M);
        xty_.resize(M);
        yy_.resize(M);
        for (int c = 0; c < M; ++c) {
            const int rows = detail::class_count_before(n, c, M);
            gram_[c].reserve(rows + 1);
            gram_[c].push_back(MatrixXd::Zero(p_, p_));
            xty_[c].reserve(rows + 1);
            xty_[c].push_back(VectorXd::Zero(p_));
            yy_[c].assign(1, 0.0);
        }
        for (int r = 0; r < n; ++r) {
            const int c = r % M;
            MatrixXd g = gram_[c].back();
            g.selfadjointView<Eigen::Lower>().rankUpdate(X.row(r).transpose());
            g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
            gram_[c].push_back(std::move(g));
            xty_[c].push_back(xty_[c].back() + y[r] * X.row(r).transpose());
            yy_[c].push_back(yy_[c].back() + y[r] * y[r]);
        }
    }

    int p() const { return p_; }
    int folds() const { return M_; }

    void set_interval(int s, int e) {
        for (int c = 0; c < M_; ++c) {
            idx_s_[c] = detail::class_count_before(s, c, M_);
            idx_e_[c] = detail::class_count_before(e, c, M_);
        }
    }

    int count(int c) const { return idx_e_[c] - idx_s_[c]; }
    double yty(int c) const { return yy_[c][idx_e_[c]] - yy_[c][idx_s_[c]]; }
    void add_xty(int c, VectorXd& acc) const { acc += xty_[c][idx_e_[c]] - xty_[c][idx_s_[c]]; }
    void add_gram_col(int c, int j, VectorXd& acc) const {
        acc += gram_[c][idx_e_[c]].col(j) - gram_[c][idx_s_[c]].col(j);
    }
    double gram_entry(int c, int j, int k) const {
        return gram_[c][idx_e_[c]](j, k) - gram_[c][idx_s_[c]](j, k);
    }

  private:
    int p_;
    int M_;
    std::vector<std::vector<MatrixXd>> gram_;
    std::vector<std::vector<VectorXd>> xty_;
    std::vector<std::vector<double>> yy_;
    int idx_s_[16] = {0};
    int idx_e_[16] = {0};
};

// Sequential backend for single-changepoint scans: maintains the statistics
// of (0, tau] and (tau, n] and shifts one row per advance. A side view
// plugged into the engine exposes one of the two intervals.
class ScanFoldedStats {
  public:
    ScanFoldedStats(const MatrixXd& X, const VectorXd& y, int M)
        : X_(X), y_(y), p_(static_cast<int>(X.cols())), n_(static_cast<int>(X.rows())), M_(M), tau_(0) {
        for (int side = 0; side < 2; ++side) {
            gram_[side].assign(M, MatrixXd::Zero(p_, p_));
            xty_[side].assign(M, VectorXd::Zero(p_));
            yy_[side].assign(M, 0.0);
            count_[side].assign(M, 0);
        }
        for (int r = 0; r < n_; ++r) accumulate(1, r, +1.0);
    }

    int p() const { return p_; }
    int n() const { return n_; }
    int folds() const { return M_; }
    int tau() const { return tau_; }

    // Move the boundary to tau (forward only).
    void advance_to(int tau) {
        if (tau < tau_) throw InvalidConfigError("ScanFoldedStats: scan moves forward only");
        while (tau_ < tau) {
            accumulate(1, tau_, -1.0);
            accumulate(0, tau_, +1.0);
            ++tau_;
        }
    }

    int count(int side, int c) const { return count_[side][c]; }
    double yty(int side, int c) const { return yy_[side][c]; }
    void add_xty(int side, int c, VectorXd& acc) const { acc += xty_[side][c]; }
    void add_gram_col(int side, int c, int j, VectorXd& acc) const { acc += gram_[side][c].col(j); }
    double gram_entry(int side, int c, int j, int k) const { return gram_[side][c](j, k); }

  private:
    void accumulate(int side, int r, double w) {
        const int c = r % M_;
        gram_[side][c].selfadjointView<Eigen::Lower>().rankUpdate(X_.row(r).transpose(), w);
        gram_[side][c].triangularView<Eigen::StrictlyUpper>() = gram_[side][c].transpose();
        xty_[side][c] += w * y_[r] * X_.row(r).transpose();
        yy_[side][c] += w * y_[r] * y_[r];
        count_[side][c] += w > 0 ? 1 : -1;
    }

    const MatrixXd& X_;
    const VectorXd& y_;
    int p_, n_, M_, tau_;
    std::vector<MatrixXd> gram_[2];
    std::vector<VectorXd> xty_[2];
    std::vector<double> yy_[2];
    std::vector<int> count_[2];
};

// Adapters presenting a uniform per-class interval API to the engine.
struct PrefixStatsView {
    PrefixFoldedStats* stats;
    void set_interval(int s, int e) { stats->set_interval(s, e); }
    int p() const { return stats->p(); }
    int folds() const { return stats->folds(); }
    int count(int c) const { return stats->count(c); }
    double yty(int c) const { return stats->yty(c); }
    void add_xty(int c, VectorXd& acc) const { stats->add_xty(c, acc); }
    void add_gram_col(int c, int j, VectorXd& acc) const { stats->add_gram_col(c, j, acc); }
    double gram_entry(int c, int j, int k) const { return stats->gram_entry(c, j, k); }
};

struct ScanSideView {
    ScanFoldedStats* stats;
    int side; // 0 = left (0,tau], 1 = right (tau, n]
    void set_interval(int s, int e) {
        const int tau = side == 0 ? e : s;
        stats->advance_to(tau);
        if ((side == 0 && s != 0) || (side == 1 && e != stats->n()))
            throw InvalidConfigError("ScanSideView: interval must touch the series boundary");
    }
    int p() const { return stats->p(); }
    int folds() const { return stats->folds(); }
    int count(int c) const { return stats->count(side, c); }
    double yty(int c) const { return stats->yty(side, c); }
    void add_xty(int c, VectorXd& acc) const { stats->add_xty(side, c, acc); }
    void add_gram_col(int c, int j, VectorXd& acc) const { stats->add_gram_col(side, c, j, acc); }
    double gram_entry(int c, int j, int k) const { return stats->gram_entry(side, c, j, k); }
};

// Which per-interval quantities a run needs.
struct EngineNeeds {
    bool in_sample = false; // in-ho / in-cv / in-fixed
    bool cf = false;        // cf-ho / cf-fixed / cf-cv*
    bool cf_cv = false;     // segment-specific tuning per excluded fold
};

struct SegmentMethodCosts {
    double in_sample = std::numeric_limits<double>::quiet_NaN();
    double cf_star = std::numeric_limits<double>::quiet_NaN(); // min over the ladder of S(lambda)
    double cf_cv = std::numeric_limits<double>::quiet_NaN();
    int in_lambda_index = -1; // ladder position chosen for the in-sample fit
};

template <class StatsView>
class LinearCostEngine {
  public:
    LinearCostEngine(StatsView view, LambdaGrid ladder, EngineNeeds needs, LassoControl ctrl = {})
        : view_(view), ladder_(std::move(ladder)), needs_(needs), ctrl_(ctrl), p_(view_.p()),
          M_(view_.folds()) {
        const int G = ladder_.size();
        need_singles_ = needs_.cf || needs_.cf_cv || (needs_.in_sample && G > 1);
        // FULL pattern
        if (needs_.in_sample) patterns_.push_back(make_pattern({}));
        full_idx_ = needs_.in_sample ? 0 : -1;
        if (need_singles_) {
            single_idx_.resize(M_);
            for (int m = 0; m < M_; ++m) {
                single_idx_[m] = static_cast<int>(patterns_.size());
                patterns_.push_back(make_pattern({m}));
            }
        }
        if (needs_.cf_cv) {
            if (M_ < 3) throw InvalidConfigError("cf-cv needs M >= 3 under residue-aligned inner folds");
            pair_idx_.assign(M_ * M_, -1);
            for (int a = 0; a < M_; ++a)
                for (int b = a + 1; b < M_; ++b) {
                    pair_idx_[a * M_ + b] = static_cast<int>(patterns_.size());
                    patterns_.push_back(make_pattern({a, b}));
                }
        }
        class_xty_.assign(M_, VectorXd::Zero(p_));
        val_single_.assign(M_, std::vector<double>(G, 0.0));
        val_pair_.assign(M_ * M_, std::vector<double>(G, 0.0));
    }

    const LambdaGrid& ladder() const { return ladder_; }

    // Forget warm-start chains (call when the scan restarts, e.g. a new DP
    // row).
    void start_chain() {
        for (auto& pat : patterns_)
            for (auto& st : pat->solver_state) st.valid = false;
    }

    // Evaluate segment (s, e]; consecutive calls along a scan reuse chains.
    SegmentMethodCosts evaluate(int s, int e) {
        view_.set_interval(s, e);
        for (int c = 0; c < M_; ++c) {
            class_xty_[c].setZero();
            view_.add_xty(c, class_xty_[c]);
        }
        const int G = ladder_.size();
        SegmentMethodCosts out;

        if (need_singles_)
            for (int m = 0; m < M_; ++m) solve_single_path(m);
        if (needs_.cf_cv)
            for (int a = 0; a < M_; ++a)
                for (int b = a + 1; b < M_; ++b) solve_pair_path(a, b);

        // S(lambda) = sum_m loss(I∩J_m ; f_{I\J_m}(lambda)), shared by in-cv
        // (argmin, ties to the larger lambda) and cf-cv* (min).
        int g_hat = 0;
        if (need_singles_) {
            double best = std::numeric_limits<double>::infinity();
            for (int g = 0; g < G; ++g) {
                double sum = 0.0;
                for (int m = 0; m < M_; ++m) sum += val_single_[m][g];
                if (sum < best) {
                    best = sum;
                    g_hat = g;
                }
            }
            if (needs_.cf) out.cf_star = best;
        }

        if (needs_.cf_cv) {
            double total = 0.0;
            for (int m = 0; m < M_; ++m) {
                int gm = 0;
                double best = std::numeric_limits<double>::infinity();
                for (int g = 0; g < G; ++g) {
                    double sum = 0.0;
                    for (int b = 0; b < M_; ++b)
                        if (b != m) sum += val_pair_[m * M_ + b][g];
                    if (sum < best) {
                        best = sum;
                        gm = g;
                    }
                }
                total += val_single_[m][gm];
            }
            out.cf_cv = total;
        }

        if (needs_.in_sample) {
            out.in_lambda_index = g_hat;
            Pattern& full = *patterns_[full_idx_];
            rebind_pattern(full);
            SolverState& st = full.solver_state[g_hat];
            prepare_state(full, st, g_hat);
            st.solver->solve(ladder_[g_hat]);
            st.valid = true;
            // In-sample loss = penalized objective minus the penalty term.
            double l1 = 0.0;
            for (int j : st.solver->active()) l1 += std::abs(st.solver->coefficients()[j]);
            out.in_sample = st.solver->objective(ladder_[g_hat]) -
                            ladder_[g_hat] * std::sqrt(full.provider->n_train()) * l1;
        }
        return out;
    }

  private:
    // Gram-column provider for an interval minus a set of residue classes.
    class PatternProvider {
      public:
        PatternProvider(StatsView& view, std::vector<int> excluded, int p, int M)
            : view_(view), excluded_(std::move(excluded)), p_(p) {
            for (int c = 0; c < M; ++c)
                if (std::find(excluded_.begin(), excluded_.end(), c) == excluded_.end())
                    included_.push_back(c);
            xty_ = VectorXd::Zero(p_);
            col_storage_.resize(p_);
            col_epoch_.assign(p_, 0);
        }

        void rebind(const std::vector<VectorXd>& class_xty) {
            count_ = 0;
            yty_ = 0.0;
            xty_.setZero();
            for (int c : included_) {
                count_ += view_.count(c);
                yty_ += view_.yty(c);
                xty_ += class_xty[c];
            }
            ++epoch_;
        }

        int p() const { return p_; }
        double n_train() const { return static_cast<double>(count_); }
        int count() const { return count_; }
        const VectorXd& xty() const { return xty_; }
        double yty() const { return yty_; }

        const double* gram_col(int j) {
            if (col_epoch_[j] != epoch_) {
                if (col_storage_[j].size() != p_) col_storage_[j] = VectorXd::Zero(p_);
                else col_storage_[j].setZero();
                for (int c : included_) view_.add_gram_col(c, j, col_storage_[j]);
                col_epoch_[j] = epoch_;
            }
            return col_storage_[j].data();
        }

        const std::vector<int>& included() const { return included_; }

      private:
        StatsView& view_;
        std::vector<int> excluded_;
        std::vector<int> included_;
        int p_;
        int count_ = 0;
        double yty_ = 0.0;
        VectorXd xty_;
        std::vector<VectorXd> col_storage_;
        std::vector<std::uint32_t> col_epoch_;
        std::uint32_t epoch_ = 0;
    };

    struct SolverState {
        std::unique_ptr<detail::CdSolver<PatternProvider>> solver;
        bool valid = false;
    };

    struct Pattern {
        std::unique_ptr<PatternProvider> provider;
        std::vector<SolverState> solver_state; // one chained solver per ladder position
    };

    std::unique_ptr<Pattern> make_pattern(std::vector<int> excluded) {
        auto pat = std::make_unique<Pattern>();
        pat->provider = std::make_unique<PatternProvider>(view_, std::move(excluded), p_, M_);
        pat->solver_state.resize(ladder_.size());
        for (auto& st : pat->solver_state)
            st.solver = std::make_unique<detail::CdSolver<PatternProvider>>(*pat->provider, ctrl_);
        return pat;
    }

    void rebind_pattern(Pattern& pat) { pat.provider->rebind(class_xty_); }

    // Seed a cold solver from the previous ladder position (path descent);
    // warm solvers keep their previous-interval coefficients.
    void prepare_state(Pattern& pat, SolverState& st, int g) {
        if (st.valid) {
            st.solver->rebind();
        } else if (g > 0 && pat.solver_state[g - 1].valid) {
            st.solver->set_coefficients(pat.solver_state[g - 1].solver->coefficients());
        } else {
            st.solver->reset();
        }
    }

    // Fit on I\J_{m+1} along the ladder, validating on class m.
    void solve_single_path(int m) {
        Pattern& pat = *patterns_[single_idx_[m]];
        rebind_pattern(pat);
        if (pat.provider->count() < 2) throw SegmentInfeasibleError("linear engine: training set below 2 rows");
        for (int g = 0; g < ladder_.size(); ++g) {
            SolverState& st = pat.solver_state[g];
            prepare_state(pat, st, g);
            st.solver->solve(ladder_[g]);
            st.valid = true;
            val_single_[m][g] = validation_loss(*st.solver, m);
        }
    }

    // Fit on I minus classes a and b; validate on both held-out classes.
    // val_pair_[m*M+b] holds the inner-CV loss for tuning fold m, validated on
    // class b.
    void solve_pair_path(int a, int b) {
        Pattern& pat = *patterns_[pair_idx_[a * M_ + b]];
        rebind_pattern(pat);
        if (pat.provider->count() < 2) throw SegmentInfeasibleError("linear engine: training set below 2 rows");
        for (int g = 0; g < ladder_.size(); ++g) {
            SolverState& st = pat.solver_state[g];
            prepare_state(pat, st, g);
            st.solver->solve(ladder_[g]);
            st.valid = true;
            val_pair_[a * M_ + b][g] = validation_loss(*st.solver, b);
            val_pair_[b * M_ + a][g] = validation_loss(*st.solver, a);
        }
    }

    double validation_loss(const detail::CdSolver<PatternProvider>& solver, int cls) {
        const auto& f = solver.coefficients();
        const auto& active = solver.active();
        double quad = 0.0, lin = 0.0;
        for (std::size_t a = 0; a < active.size(); ++a) {
            const int j = active[a];
            lin += f[j] * class_xty_[cls][j];
            double inner = 0.0;
            for (std::size_t b2 = 0; b2 < active.size(); ++b2) {
                const int k = active[b2];
                inner += f[k] * view_.gram_entry(cls, j, k);
            }
            quad += f[j] * inner;
        }
        return view_.yty(cls) - 2.0 * lin + quad;
    }

    StatsView view_;
    LambdaGrid ladder_;
    EngineNeeds needs_;
    LassoControl ctrl_;
    int p_;
    int M_;
    bool need_singles_ = false;
    int full_idx_ = -1;
    std::vector<int> single_idx_;
    std::vector<int> pair_idx_;
    std::vector<std::unique_ptr<Pattern>> patterns_;
    std::vector<VectorXd> class_xty_;
    std::vector<std::vector<double>> val_single_;
    std::vector<std::vector<double>> val_pair_;
};

} // namespace cpd
