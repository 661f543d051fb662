#pragma once

#include "cpd/core.hpp"

#include <limits>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace cpd {

// ---------------------------------------------------------------------------
// Loss-model contract
//
// fit() may use any row of the dataset except those listed in holdout_rows;
// parametric models use exactly train_rows, while the classifier model also
// consumes unlabeled background rows. loss() sums pointwise losses over
// eval_rows, so it is additive over disjoint evaluation sets.
// ---------------------------------------------------------------------------

struct ModelFit {
    virtual ~ModelFit() = default;
};
using FitPtr = std::shared_ptr<const ModelFit>;

class LossModel {
  public:
    virtual ~LossModel() = default;

    virtual FitPtr fit(const Dataset& data, const std::vector<int>& train_rows,
                       const std::vector<int>& holdout_rows) const = 0;
    virtual double loss(const Dataset& data, const ModelFit& fit, const std::vector<int>& eval_rows) const = 0;
    virtual int min_fit_size() const = 0;
    virtual std::string tag() const = 0;

    // Hyperparameter grid support for recycled evaluation; models without a
    // grid report size 0.
    virtual int grid_size() const { return 0; }
    virtual std::vector<FitPtr> fit_grid(const Dataset&, const std::vector<int>&,
                                         const std::vector<int>&) const {
        throw InvalidConfigError("LossModel: no hyperparameter grid");
    }
};

// ---------------------------------------------------------------------------
// Folds and row bookkeeping (rows are 0-based storage indices)
// ---------------------------------------------------------------------------

inline FoldPlan make_folds(int n, int M) { return FoldPlan(n, M); }

inline std::vector<int> interval_rows(const Interval& iv) {
    std::vector<int> rows;
    rows.reserve(iv.length());
    for (int r = iv.s; r < iv.e; ++r) rows.push_back(r);
    return rows;
}

// Rows of I that lie in fold m.
inline std::vector<int> interval_fold_rows(const Interval& iv, const FoldPlan& folds, int m) {
    std::vector<int> rows;
    for (int r = iv.s; r < iv.e; ++r)
        if (folds.fold_of_row(r) == m - 1) rows.push_back(r);
    return rows;
}

// Rows of I outside fold m.
inline std::vector<int> interval_excluding_fold(const Interval& iv, const FoldPlan& folds, int m) {
    std::vector<int> rows;
    for (int r = iv.s; r < iv.e; ++r)
        if (folds.fold_of_row(r) != m - 1) rows.push_back(r);
    return rows;
}

inline void check_interval(const Interval& iv, int n) {
    if (!(iv.s >= 0 && iv.s < iv.e && iv.e <= n))
        throw InvalidConfigError("interval must satisfy 0 <= s < e <= n");
}

// ---------------------------------------------------------------------------
// Segment costs
// ---------------------------------------------------------------------------

inline SegmentCost in_sample_cost(const LossModel& model, const Dataset& data, const Interval& iv) {
    check_interval(iv, data.n());
    if (iv.length() < model.min_fit_size())
        throw SegmentInfeasibleError("in_sample_cost: segment shorter than the model's minimum fit size");
    const auto rows = interval_rows(iv);
    const FitPtr f = model.fit(data, rows, {});
    SegmentCost cost;
    cost.interval = iv;
    cost.value = model.loss(data, *f, rows);
    cost.mode = CostMode::in_sample;
    cost.model_tag = model.tag();
    if (!std::isfinite(cost.value)) throw NumericError("in_sample_cost: non-finite segment cost");
    return cost;
}

// Sum over folds of the loss on I∩J_m under the fit on I\J_m. Folds that do
// not intersect I contribute 0 (possible only when |I| < M).
inline SegmentCost crossfit_cost(const LossModel& model, const Dataset& data, const Interval& iv,
                                 const FoldPlan& folds) {
    check_interval(iv, data.n());
    double total = 0.0;
    for (int m = 1; m <= folds.folds(); ++m) {
        const auto eval = interval_fold_rows(iv, folds, m);
        if (eval.empty()) continue;
        const auto train = interval_excluding_fold(iv, folds, m);
        if (static_cast<int>(train.size()) < model.min_fit_size())
            throw SegmentInfeasibleError("crossfit_cost: training complement below the minimum fit size");
        const FitPtr f = model.fit(data, train, folds.fold_rows(m));
        total += model.loss(data, *f, eval);
    }
    SegmentCost cost;
    cost.interval = iv;
    cost.value = total;
    cost.mode = CostMode::crossfit;
    cost.model_tag = model.tag();
    if (!std::isfinite(cost.value)) throw NumericError("crossfit_cost: non-finite segment cost");
    return cost;
}

// Recycled evaluation: one grid of candidate hyperparameters, M*|grid| fits,
// and the minimum over the grid of the summed out-of-sample losses.
inline SegmentCost crossfit_cost_recycled(const LossModel& model, const Dataset& data, const Interval& iv,
                                          const FoldPlan& folds) {
    check_interval(iv, data.n());
    const int G = model.grid_size();
    if (G < 1) throw InvalidConfigError("crossfit_cost_recycled: model has no hyperparameter grid");
    std::vector<double> per_grid(G, 0.0);
    bool any = false;
    for (int m = 1; m <= folds.folds(); ++m) {
        const auto eval = interval_fold_rows(iv, folds, m);
        if (eval.empty()) continue;
        const auto train = interval_excluding_fold(iv, folds, m);
        if (static_cast<int>(train.size()) < model.min_fit_size())
            throw SegmentInfeasibleError("crossfit_cost_recycled: training complement below the minimum fit size");
        const auto fits = model.fit_grid(data, train, folds.fold_rows(m));
        if (static_cast<int>(fits.size()) != G)
            throw NumericError("crossfit_cost_recycled: grid fit count mismatch");
        for (int g = 0; g < G; ++g) per_grid[g] += model.loss(data, *fits[g], eval);
        any = true;
    }
    SegmentCost cost;
    cost.interval = iv;
    cost.mode = CostMode::crossfit_recycled;
    cost.model_tag = model.tag();
    cost.value = 0.0;
    if (any) {
        double best = std::numeric_limits<double>::infinity();
        for (double v : per_grid) best = std::min(best, v);
        cost.value = best;
    }
    if (!std::isfinite(cost.value)) throw NumericError("crossfit_cost_recycled: non-finite segment cost");
    return cost;
}

// ---------------------------------------------------------------------------
// Memoized segment costs. Values are deterministic given (data, folds, tag),
// so concurrent insert collisions are benign.
// ---------------------------------------------------------------------------

class CostCache {
  public:
    struct Key {
        int s, e;
        CostMode mode;
        std::string tag;
        bool operator==(const Key&) const = default;
    };

    template <class Fn>
    double get_or_compute(const Key& key, Fn&& fn) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = map_.find(key);
            if (it != map_.end()) {
                ++hits_;
                return it->second;
            }
        }
        const double value = fn();
        {
            std::lock_guard<std::mutex> lock(mu_);
            map_.insert_or_assign(key, value);
        }
        return value;
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return map_.size();
    }
    std::size_t hits() const {
        std::lock_guard<std::mutex> lock(mu_);
        return hits_;
    }

  private:
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = std::hash<std::string>{}(k.tag);
            h ^= std::hash<long long>{}((static_cast<long long>(k.s) << 24) ^ (static_cast<long long>(k.e) << 4) ^
                                        static_cast<long long>(k.mode)) +
                 0x9e3779b9 + (h << 6) + (h >> 2);
            return h;
        }
    };
    mutable std::mutex mu_;
    std::unordered_map<Key, double, KeyHash> map_;
    std::size_t hits_ = 0;
};

} // namespace cpd
