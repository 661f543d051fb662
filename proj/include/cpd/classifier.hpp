#pragma once

#include "cpd/core.hpp"
#include "cpd/crossfit.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

namespace cpd {

// ---------------------------------------------------------------------------
// k-nearest-neighbor probabilistic classifier over dataset rows.
//
// The full neighbor ordering of every row (by squared Euclidean distance,
// ties to the lower row index) is computed once per dataset; a prediction
// under any training scope walks the list and keeps the first k in-scope
// rows. A row inside the scope is its own nearest neighbor; a held-out row
// is naturally excluded.
// ---------------------------------------------------------------------------

class KnnIndex {
  public:
    explicit KnnIndex(const MatrixXd& Z) : n_(static_cast<int>(Z.rows())) {
        order_.resize(static_cast<std::size_t>(n_) * n_);
        std::vector<std::pair<double, int>> dist(n_);
        const VectorXd sq = Z.rowwise().squaredNorm();
        for (int i = 0; i < n_; ++i) {
            const VectorXd zi = Z.row(i).transpose();
            for (int j = 0; j < n_; ++j)
                dist[j] = {sq[i] + sq[j] - 2.0 * Z.row(j).dot(zi), j};
            std::sort(dist.begin(), dist.end());
            for (int j = 0; j < n_; ++j) order_[static_cast<std::size_t>(i) * n_ + j] = dist[j].second;
        }
    }

    int n() const { return n_; }
    const int* neighbors_of(int row) const { return order_.data() + static_cast<std::size_t>(row) * n_; }

  private:
    int n_;
    std::vector<int> order_;
};

struct KnnClassifierConfig {
    int k = 0;                // 0 = ceil(sqrt(n)) at fit time
    std::vector<int> k_grid;  // empty = {ceil(sqrt(n)/2), ceil(sqrt(n)), 2 ceil(sqrt(n))}

    static int default_k(int n) { return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))); }
    int resolve_k(int n) const { return k > 0 ? k : default_k(n); }
    std::vector<int> resolve_grid(int n) const {
        if (!k_grid.empty()) return k_grid;
        const int base = default_k(n);
        return {(base + 1) / 2, base, 2 * base};
    }
};

struct KnnTuning {
    enum class Kind { fixed, cv, recycled };
    Kind kind = Kind::fixed;
    int B = 0; // inner folds for cv

    static KnnTuning fixed() { return {}; }
    static KnnTuning cv(int B) {
        if (B < 2) throw InvalidConfigError("KnnTuning::cv: need B >= 2");
        KnnTuning t;
        t.kind = Kind::cv;
        t.B = B;
        return t;
    }
    static KnnTuning recycled() {
        KnnTuning t;
        t.kind = Kind::recycled;
        return t;
    }
};

struct KnnFit : ModelFit {
    std::vector<char> scope;  // rows the classifier may see
    std::vector<char> label;  // 1 for the target-segment training rows
    int scope_size = 0;
    int train_size = 0;
    int k = 1;
    std::shared_ptr<const KnnIndex> index;
};

// Classifier-based segment loss: train on binary segment-membership labels,
// score an evaluation point by -log of the scaled class-1 probability.
class ClassifierLossModel final : public LossModel {
  public:
    ClassifierLossModel(KnnClassifierConfig config, KnnTuning tuning, int folds_M)
        : config_(config), tuning_(tuning), M_(folds_M) {}

    FitPtr fit(const Dataset& data, const std::vector<int>& train_rows,
               const std::vector<int>& holdout_rows) const override {
        if (data.kind() != DataKind::multivariate)
            throw UnsupportedModelError("classifier model needs multivariate data");
        auto index = ensure_index(data);
        const int n = data.n();
        std::vector<char> scope(n, 1);
        for (int r : holdout_rows) scope[r] = 0;
        std::vector<char> label(n, 0);
        int train_size = 0;
        for (int r : train_rows) {
            if (!scope[r]) throw InvalidConfigError("classifier fit: training row inside the holdout");
            label[r] = 1;
            ++train_size;
        }
        const int scope_size = n - static_cast<int>(holdout_rows.size());
        if (train_size == 0 || train_size == scope_size)
            throw SegmentInfeasibleError("classifier fit: degenerate segment labels");

        int k;
        if (tuning_.kind == KnnTuning::Kind::cv) {
            k = tune_k_by_cv(data, *index, scope, train_rows, holdout_rows);
        } else {
            k = config_.resolve_k(n);
        }
        return make_fit(index, std::move(scope), std::move(label), scope_size, train_size, k);
    }

    double loss(const Dataset& data, const ModelFit& fit, const std::vector<int>& eval_rows) const override {
        const auto& kf = static_cast<const KnnFit&>(fit);
        const double eps = clip_epsilon(data.n());
        const double scale = static_cast<double>(kf.scope_size) / kf.train_size;
        double total = 0.0;
        for (int r : eval_rows) {
            const double p = std::clamp(predict_proba(kf, r), eps, 1.0 - eps);
            total += -std::log(scale * p);
        }
        return total;
    }

    int min_fit_size() const override { return 2 * M_; }

    std::string tag() const override {
        std::string t = "classifier-knn:k=" + std::to_string(config_.k);
        switch (tuning_.kind) {
            case KnnTuning::Kind::fixed: t += ":fixed"; break;
            case KnnTuning::Kind::cv: t += ":cv(B=" + std::to_string(tuning_.B) + ")"; break;
            case KnnTuning::Kind::recycled: t += ":recycled"; break;
        }
        return t;
    }

    int grid_size() const override {
        return config_.k_grid.empty() ? 3 : static_cast<int>(config_.k_grid.size());
    }

    std::vector<FitPtr> fit_grid(const Dataset& data, const std::vector<int>& train_rows,
                                 const std::vector<int>& holdout_rows) const override {
        auto index = ensure_index(data);
        const int n = data.n();
        std::vector<char> scope(n, 1);
        for (int r : holdout_rows) scope[r] = 0;
        std::vector<char> label(n, 0);
        int train_size = 0;
        for (int r : train_rows) {
            label[r] = 1;
            ++train_size;
        }
        const int scope_size = n - static_cast<int>(holdout_rows.size());
        if (train_size == 0 || train_size == scope_size)
            throw SegmentInfeasibleError("classifier fit: degenerate segment labels");
        std::vector<FitPtr> fits;
        for (int k : config_.resolve_grid(n))
            fits.push_back(make_fit(index, scope, label, scope_size, train_size, k));
        return fits;
    }

    // Class-1 fraction among the k nearest in-scope rows.
    static double predict_proba(const KnnFit& fit, int row) {
        const int n = fit.index->n();
        const int k = std::min(fit.k, fit.scope_size);
        const int* order = fit.index->neighbors_of(row);
        int seen = 0, hits = 0;
        for (int j = 0; j < n && seen < k; ++j) {
            const int cand = order[j];
            if (!fit.scope[cand]) continue;
            ++seen;
            hits += fit.label[cand];
        }
        return static_cast<double>(hits) / std::max(1, seen);
    }

    static double clip_epsilon(int n) { return 1.0 / (2.0 * n); }

    const KnnClassifierConfig& config() const { return config_; }

  private:
    FitPtr make_fit(std::shared_ptr<const KnnIndex> index, std::vector<char> scope, std::vector<char> label,
                    int scope_size, int train_size, int k) const {
        auto f = std::make_shared<KnnFit>();
        f->scope = std::move(scope);
        f->label = std::move(label);
        f->scope_size = scope_size;
        f->train_size = train_size;
        f->k = std::max(1, std::min(k, scope_size)); // clamp to the training scope
        f->index = std::move(index);
        return f;
    }

    // Inner CV over the k grid with residue-aligned validation folds; ties go
    // to the larger k (more smoothing).
    int tune_k_by_cv(const Dataset& data, const KnnIndex&, const std::vector<char>& scope,
                     const std::vector<int>& train_rows, const std::vector<int>& holdout_rows) const {
        const int n = data.n();
        const int B = tuning_.B;
        const auto grid = config_.resolve_grid(n);
        std::vector<double> losses(grid.size(), 0.0);
        for (int b = 0; b < B; ++b) {
            std::vector<int> val, sub;
            for (int r : train_rows) {
                if (r % B == b) val.push_back(r);
                else sub.push_back(r);
            }
            if (val.empty() || sub.empty()) continue;
            std::vector<int> holdout_b = holdout_rows;
            for (int r : val) holdout_b.push_back(r);
            std::vector<char> scope_b = scope;
            for (int r : val) scope_b[r] = 0;
            const int scope_size = n - static_cast<int>(holdout_b.size());
            std::vector<char> label(n, 0);
            for (int r : sub) label[r] = 1;
            if (sub.empty() || static_cast<int>(sub.size()) == scope_size)
                throw SegmentInfeasibleError("classifier cv: degenerate inner fold");
            for (std::size_t g = 0; g < grid.size(); ++g) {
                auto f = make_fit(ensure_index(data), scope_b, label, scope_size,
                                  static_cast<int>(sub.size()), grid[g]);
                losses[g] += loss(data, *f, val);
            }
        }
        std::size_t best = 0;
        for (std::size_t g = 1; g < grid.size(); ++g)
            if (losses[g] < losses[best] || (losses[g] == losses[best] && grid[g] > grid[best])) best = g;
        return grid[best];
    }

    std::shared_ptr<const KnnIndex> ensure_index(const Dataset& data) const {
        std::lock_guard<std::mutex> lock(mu_);
        if (bound_ != &data) {
            index_ = std::make_shared<KnnIndex>(data.covariates());
            bound_ = &data;
        }
        return index_;
    }

    KnnClassifierConfig config_;
    KnnTuning tuning_;
    int M_;
    mutable std::mutex mu_;
    mutable std::shared_ptr<const KnnIndex> index_;
    mutable const Dataset* bound_ = nullptr;
};

inline std::shared_ptr<ClassifierLossModel> classifier_loss_model(KnnClassifierConfig config, KnnTuning tuning,
                                                                  int folds_M) {
    return std::make_shared<ClassifierLossModel>(config, tuning, folds_M);
}

} // namespace cpd
