#include <catch2/catch_amalgamated.hpp>

#include "cpd/crossfit.hpp"
#include "cpd/loss_models.hpp"
#include "support.hpp"

#include <set>

using namespace cpd;
using cpdtest::random_matrix;
using cpdtest::random_vector;

namespace {

Dataset series(std::initializer_list<double> values) {
    MatrixXd Z(values.size(), 1);
    int i = 0;
    for (double v : values) Z(i++, 0) = v;
    return Dataset::multivariate(Z);
}

// Ignores its training data and predicts a fixed vector.
struct ConstantPredictor final : LossModel {
    explicit ConstantPredictor(VectorXd v) : value(std::move(v)) {}
    VectorXd value;

    FitPtr fit(const Dataset&, const std::vector<int>&, const std::vector<int>&) const override {
        auto f = std::make_shared<MeanFit>();
        f->mean = value;
        return f;
    }
    double loss(const Dataset& data, const ModelFit& fit, const std::vector<int>& rows) const override {
        const auto& mf = static_cast<const MeanFit&>(fit);
        double total = 0.0;
        for (int r : rows) total += (data.covariates().row(r).transpose() - mf.mean).squaredNorm();
        return total;
    }
    int min_fit_size() const override { return 1; }
    std::string tag() const override { return "constant"; }
};

} // namespace

TEST_CASE("make_folds follows the order-preserving rule exactly") {
    SECTION("n=10, M=5") {
        auto plan = make_folds(10, 5);
        REQUIRE(plan.fold_rows(1) == std::vector<int>{0, 5});  // 1-based {1,6}
        REQUIRE(plan.fold_rows(2) == std::vector<int>{1, 6});
        REQUIRE(plan.fold_rows(3) == std::vector<int>{2, 7});
        REQUIRE(plan.fold_rows(4) == std::vector<int>{3, 8});
        REQUIRE(plan.fold_rows(5) == std::vector<int>{4, 9});
    }
    SECTION("n=4, M=2") {
        auto plan = make_folds(4, 2);
        REQUIRE(plan.fold_rows(1) == std::vector<int>{0, 2});
        REQUIRE(plan.fold_rows(2) == std::vector<int>{1, 3});
    }
    SECTION("n=7, M=3 sizes differ by at most one") {
        auto plan = make_folds(7, 3);
        REQUIRE(plan.fold_rows(1).size() == 3);
        REQUIRE(plan.fold_rows(2).size() == 2);
        REQUIRE(plan.fold_rows(3).size() == 2);
    }
    SECTION("invalid configurations") {
        REQUIRE_THROWS_AS(make_folds(10, 1), InvalidConfigError);
        REQUIRE_THROWS_AS(make_folds(3, 4), InvalidConfigError);
    }
}

TEST_CASE("fold partition laws hold on a randomized grid") {
    Rng rng(201);
    for (int rep = 0; rep < 60; ++rep) {
        const int n = 2 + static_cast<int>(rng.uniform_index(999));
        const int M = 2 + static_cast<int>(rng.uniform_index(std::min(9, n - 1)));
        auto plan = make_folds(n, M);
        std::set<int> seen;
        std::size_t smallest = n, largest = 0;
        for (int m = 1; m <= M; ++m) {
            auto rows = plan.fold_rows(m);
            smallest = std::min(smallest, rows.size());
            largest = std::max(largest, rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                REQUIRE(seen.insert(rows[i]).second); // disjoint
                // stride-M arithmetic progression starting at m-1
                REQUIRE(rows[i] == m - 1 + static_cast<int>(i) * M);
                REQUIRE(plan.fold_of(rows[i] + 1) == m);
            }
        }
        REQUIRE(seen.size() == static_cast<std::size_t>(n)); // covering
        REQUIRE(largest - smallest <= 1);
    }
}

TEST_CASE("gaussian in-sample segment costs") {
    auto model = gaussian_mean_model();
    SECTION("constant segment fits exactly") {
        auto d = series({2, 2, 2});
        REQUIRE(in_sample_cost(*model, d, {0, 3}).value == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("two-point segment") {
        auto d = series({1, 3});
        REQUIRE(in_sample_cost(*model, d, {0, 2}).value == Catch::Approx(2.0));
    }
    SECTION("empty training set is infeasible") {
        auto d = series({1, 2});
        REQUIRE_THROWS_AS(in_sample_cost(*model, d, {2, 2}), InvalidConfigError);
    }
}

TEST_CASE("ridgeless in-sample cost vanishes when p exceeds the segment length") {
    Rng rng(202);
    MatrixXd X = random_matrix(rng, 6, 10);
    VectorXd y = random_vector(rng, 6);
    auto d = Dataset::regression(X, y);
    auto model = linear_model(LinearFitter::ridgeless, TuningMethod::fixed(0.0), 2);
    REQUIRE(in_sample_cost(*model, d, {0, 6}).value <= 1e-10);
}

TEST_CASE("cross-fitted gaussian cost on the alternating series") {
    auto d = series({1, 3, 1, 3});
    auto model = gaussian_mean_model();
    auto plan = make_folds(4, 2);
    auto cost = crossfit_cost(*model, d, {0, 4}, plan);
    REQUIRE(cost.value == Catch::Approx(16.0));
    REQUIRE(cost.mode == CostMode::crossfit);

    // Additivity: the total is the sum of its per-fold terms.
    double manual = 0.0;
    for (int m = 1; m <= 2; ++m) {
        auto train = interval_excluding_fold({0, 4}, plan, m);
        auto eval = interval_fold_rows({0, 4}, plan, m);
        auto f = model->fit(d, train, plan.fold_rows(m));
        manual += model->loss(d, *f, eval);
    }
    REQUIRE(cost.value == Catch::Approx(manual));
}

TEST_CASE("cross-fitted cost of a truth-matching constant predictor is zero") {
    auto d = series({5, 5, 5, 5, 5, 5});
    ConstantPredictor model(VectorXd::Constant(1, 5.0));
    auto cost = crossfit_cost(model, d, {0, 6}, make_folds(6, 3));
    REQUIRE(cost.value == Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("cross-fitted cost is a fold-order-free sum") {
    Rng rng(203);
    MatrixXd Z = random_matrix(rng, 24, 2);
    auto d = Dataset::multivariate(Z);
    auto model = gaussian_mean_model();
    auto plan = make_folds(24, 4);
    auto total = crossfit_cost(*model, d, {3, 19}, plan).value;
    double permuted = 0.0;
    for (int m : {3, 1, 4, 2}) {
        auto eval = interval_fold_rows({3, 19}, plan, m);
        if (eval.empty()) continue;
        auto f = model->fit(d, interval_excluding_fold({3, 19}, plan, m), plan.fold_rows(m));
        permuted += model->loss(d, *f, eval);
    }
    REQUIRE(total == Catch::Approx(permuted));
}

TEST_CASE("leakage: fits and in-sample costs ignore rows outside their scope") {
    Rng rng(204);
    const int n = 30, p = 4;
    MatrixXd X = random_matrix(rng, n, p);
    VectorXd y = X * cpdtest::sparse_coef(rng, p, 2) + 0.2 * random_vector(rng, n);
    auto base = Dataset::regression(X, y);
    const Interval iv{8, 24};
    auto grid = lambda_grid(X, y, 8, 0.01);
    auto model = linear_model(LinearFitter::lasso_cv, TuningMethod::cv(3, grid), 3);
    auto plan = make_folds(n, 3);

    // Mutate rows outside I: in-sample cost of I is unchanged.
    MatrixXd X2 = X;
    VectorXd y2 = y;
    for (int r : {0, 1, 2, 27, 28}) {
        X2.row(r).setConstant(99.0);
        y2[r] = -99.0;
    }
    auto mutated_outside = Dataset::regression(X2, y2);
    REQUIRE(in_sample_cost(*model, base, iv).value ==
            in_sample_cost(*model, mutated_outside, iv).value);

    // Mutate rows in I∩J_m: the fit on I\J_m is unchanged.
    const int m = 2;
    MatrixXd X3 = X;
    VectorXd y3 = y;
    for (int r : interval_fold_rows(iv, plan, m)) {
        X3.row(r).setConstant(-7.0);
        y3[r] = 7.0;
    }
    auto mutated_eval = Dataset::regression(X3, y3);
    auto train = interval_excluding_fold(iv, plan, m);
    auto f1 = model->fit(base, train, plan.fold_rows(m));
    auto f2 = model->fit(mutated_eval, train, plan.fold_rows(m));
    const auto& c1 = static_cast<const LinearModelFit&>(*f1).fit.coefficients;
    const auto& c2 = static_cast<const LinearModelFit&>(*f2).fit.coefficients;
    REQUIRE(c1 == c2);
}

TEST_CASE("recycled cost with a singleton grid equals the fixed crossfit cost") {
    Rng rng(205);
    const int n = 24, p = 3;
    MatrixXd X = random_matrix(rng, n, p);
    VectorXd y = X * cpdtest::sparse_coef(rng, p, 2) + 0.1 * random_vector(rng, n);
    auto d = Dataset::regression(X, y);
    auto plan = make_folds(n, 2);
    const double lam = 0.3 * lambda_max(X, y);
    auto recycled_model = linear_model(LinearFitter::lasso_fixed, TuningMethod::recycled(LambdaGrid({lam})), 2);
    auto fixed_model = linear_model(LinearFitter::lasso_fixed, TuningMethod::fixed(lam), 2);
    auto a = crossfit_cost_recycled(*recycled_model, d, {0, 24}, plan);
    auto b = crossfit_cost(*fixed_model, d, {0, 24}, plan);
    REQUIRE(a.value == Catch::Approx(b.value).epsilon(1e-10));
    REQUIRE(a.mode == CostMode::crossfit_recycled);
}

TEST_CASE("recycled cost lower-bounds every per-lambda crossfit sum") {
    Rng rng(206);
    const int n = 30, p = 5;
    MatrixXd X = random_matrix(rng, n, p);
    VectorXd y = X * cpdtest::sparse_coef(rng, p, 3) + 0.4 * random_vector(rng, n);
    auto d = Dataset::regression(X, y);
    auto plan = make_folds(n, 3);
    auto grid = lambda_grid(X, y, 6, 0.05);
    auto model = linear_model(LinearFitter::lasso_fixed, TuningMethod::recycled(grid), 3);
    const double recycled = crossfit_cost_recycled(*model, d, {0, 30}, plan).value;
    for (int g = 0; g < grid.size(); ++g) {
        auto fixed = linear_model(LinearFitter::lasso_fixed, TuningMethod::fixed(grid[g]), 3);
        const double per_lambda = crossfit_cost(*fixed, d, {0, 30}, plan).value;
        // Slack covers coordinate-descent convergence noise between the
        // warm-started path fit and the one-shot fixed fit.
        REQUIRE(recycled <= per_lambda * (1.0 + 1e-7) + 1e-10);
    }
}

TEST_CASE("recycled lasso with a {0, lambda_large} grid recovers noiseless data") {
    Rng rng(207);
    const int n = 40, p = 4;
    MatrixXd X = random_matrix(rng, n, p);
    VectorXd f = VectorXd::Zero(p);
    f[0] = 1.5;
    f[2] = -1.0;
    VectorXd y = X * f; // noiseless
    auto d = Dataset::regression(X, y);
    auto plan = make_folds(n, 2);
    auto model = linear_model(LinearFitter::lasso_fixed,
                              TuningMethod::recycled(LambdaGrid({10.0 * lambda_max(X, y), 0.0})), 2);
    const double value = crossfit_cost_recycled(*model, d, {0, 40}, plan).value;
    REQUIRE(value <= 1e-12 * y.squaredNorm());
}

TEST_CASE("crossfit infeasibility below the minimum fit size") {
    Rng rng(208);
    auto model = linear_model(LinearFitter::lasso_fixed, TuningMethod::fixed(0.1), 2);
    MatrixXd X = random_matrix(rng, 6, 2);
    VectorXd y = random_vector(rng, 6);
    auto reg = Dataset::regression(X, y);
    // |I\J_m| = 2 < 2*M = 4 for a 4-point segment with M=2
    REQUIRE_THROWS_AS(crossfit_cost(*model, reg, {0, 4}, make_folds(6, 2)), SegmentInfeasibleError);
}

TEST_CASE("cost cache memoizes by interval, mode, and tag") {
    CostCache cache;
    int calls = 0;
    auto compute = [&] {
        ++calls;
        return 1.5;
    };
    CostCache::Key key{0, 5, CostMode::crossfit, "m"};
    REQUIRE(cache.get_or_compute(key, compute) == 1.5);
    REQUIRE(cache.get_or_compute(key, compute) == 1.5);
    REQUIRE(calls == 1);
    REQUIRE(cache.hits() == 1);
    CostCache::Key other{0, 5, CostMode::in_sample, "m"};
    cache.get_or_compute(other, compute);
    REQUIRE(calls == 2);
}
