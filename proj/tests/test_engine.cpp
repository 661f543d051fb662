#include <catch2/catch_amalgamated.hpp>

#include "cpd/engine_linear.hpp"
#include "cpd/methods.hpp"
#include "cpd/simulate.hpp"
#include "support.hpp"

using namespace cpd;
using cpdtest::random_matrix;
using cpdtest::random_vector;
using cpdtest::sparse_coef;

namespace {

Dataset small_regression(Rng& rng, int n, int p, double noise) {
    MatrixXd X = random_matrix(rng, n, p);
    VectorXd y = X * sparse_coef(rng, p, std::min(3, p)) + noise * random_vector(rng, n);
    return Dataset::regression(std::move(X), std::move(y));
}

} // namespace

TEST_CASE("engine segment costs match the generic contract path") {
    Rng rng(401);
    const int n = 60, p = 6, M = 3;
    auto data = small_regression(rng, n, p, 0.5);
    auto ladder = global_lambda_grid(data, 8, 0.01);
    FoldPlan folds(n, M);

    EngineNeeds needs;
    needs.in_sample = needs.cf = needs.cf_cv = true;
    PrefixFoldedStats stats(data.covariates(), data.responses(), M);
    LinearCostEngine<PrefixStatsView> engine(PrefixStatsView{&stats}, ladder, needs);

    auto cv_model = linear_model(LinearFitter::lasso_cv, TuningMethod::cv(M, ladder), M);
    auto recycled_model = linear_model(LinearFitter::lasso_fixed, TuningMethod::recycled(ladder), M);

    const std::vector<Interval> intervals = {{0, 24}, {0, 60}, {12, 40}, {25, 60}, {7, 31}};
    for (const auto& iv : intervals) {
        engine.start_chain();
        const auto costs = engine.evaluate(iv.s, iv.e);

        const double generic_in = in_sample_cost(*cv_model, data, iv).value;
        const double generic_star = crossfit_cost_recycled(*recycled_model, data, iv, folds).value;
        const double generic_cv = crossfit_cost(*cv_model, data, iv, folds).value;

        CAPTURE(iv.s, iv.e);
        REQUIRE(costs.in_sample == Catch::Approx(generic_in).epsilon(1e-5));
        REQUIRE(costs.cf_star == Catch::Approx(generic_star).epsilon(1e-5));
        REQUIRE(costs.cf_cv == Catch::Approx(generic_cv).epsilon(1e-5));
    }
}

TEST_CASE("warm-chained evaluations agree with cold evaluations") {
    Rng rng(402);
    const int n = 80, p = 8, M = 5;
    auto data = small_regression(rng, n, p, 1.0);
    auto ladder = global_lambda_grid(data, 6, 0.02);
    EngineNeeds needs;
    needs.in_sample = needs.cf = needs.cf_cv = true;

    PrefixFoldedStats stats(data.covariates(), data.responses(), M);
    LinearCostEngine<PrefixStatsView> chained(PrefixStatsView{&stats}, ladder, needs);
    chained.start_chain();
    PrefixFoldedStats stats2(data.covariates(), data.responses(), M);

    for (int e = 30; e <= n; e += 7) {
        const auto warm = chained.evaluate(0, e);
        LinearCostEngine<PrefixStatsView> cold(PrefixStatsView{&stats2}, ladder, needs);
        cold.start_chain();
        const auto ref = cold.evaluate(0, e);
        CAPTURE(e);
        REQUIRE(warm.in_sample == Catch::Approx(ref.in_sample).epsilon(1e-6));
        REQUIRE(warm.cf_star == Catch::Approx(ref.cf_star).epsilon(1e-6));
        REQUIRE(warm.cf_cv == Catch::Approx(ref.cf_cv).epsilon(1e-6));
    }
}

TEST_CASE("scan backend agrees with the prefix backend") {
    Rng rng(403);
    const int n = 50, p = 5, M = 5;
    auto data = small_regression(rng, n, p, 0.8);
    auto ladder = global_lambda_grid(data, 5, 0.05);
    EngineNeeds needs;
    needs.in_sample = needs.cf = true;

    const int d_m = 12;
    const auto scan = lasso_scan_costs(data, M, ladder, needs, d_m, {});

    PrefixFoldedStats stats(data.covariates(), data.responses(), M);
    for (int tau = d_m; tau <= n - d_m; ++tau) {
        LinearCostEngine<PrefixStatsView> left(PrefixStatsView{&stats}, ladder, needs);
        const auto lc = left.evaluate(0, tau);
        LinearCostEngine<PrefixStatsView> right(PrefixStatsView{&stats}, ladder, needs);
        const auto rc = right.evaluate(tau, n);
        CAPTURE(tau);
        REQUIRE(scan.left_in[tau] == Catch::Approx(lc.in_sample).epsilon(1e-6));
        REQUIRE(scan.right_in[tau] == Catch::Approx(rc.in_sample).epsilon(1e-6));
        REQUIRE(scan.left_cf_star[tau] == Catch::Approx(lc.cf_star).epsilon(1e-6));
        REQUIRE(scan.right_cf_star[tau] == Catch::Approx(rc.cf_star).epsilon(1e-6));
    }
}

TEST_CASE("engine-backed detection equals generic detection on small data") {
    Rng rng(404);
    const int n = 60, p = 4, M = 3;
    // Strong noiseless-ish single change so both routes agree decisively.
    MatrixXd X = random_matrix(rng, n, p);
    VectorXd f1 = VectorXd::Zero(p), f2 = VectorXd::Zero(p);
    f1[0] = 1.0;
    f2[0] = -2.0;
    f2[1] = 1.5;
    VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = X.row(i).dot(i < 30 ? f1 : f2) + 0.05 * rng.normal();
    auto data = Dataset::regression(std::move(X), std::move(y));

    for (Method method : {Method::in_cv, Method::cf_cv_star, Method::cf_cv}) {
        DetectConfig cfg;
        cfg.method = method;
        cfg.model = ModelChoice::lasso_cv;
        cfg.M = M;
        cfg.grid_size = 6;
        cfg.grid_ratio = 0.05;
        cfg.search = SearchConfig::fixed_K(1, 12);
        const auto via_engine = detect(data, cfg);

        auto ladder = global_lambda_grid(data, cfg.grid_size, cfg.grid_ratio);
        auto model = build_generic_model(cfg, data, ladder);
        auto folds = std::make_shared<FoldPlan>(n, M);
        auto cache = std::make_shared<CostCache>();
        const auto generic = dp_solve(generic_cost_fn(model, data, method, folds, cache), n, cfg.search);

        CAPTURE(to_string(method));
        REQUIRE(via_engine.segmentation.taus() == generic.segmentation.taus());
        REQUIRE(via_engine.total_loss == Catch::Approx(generic.total_loss).epsilon(1e-5));
    }
}

TEST_CASE("multi-changepoint engine detection matches the generic path") {
    Rng rng(405);
    const int n = 72, p = 4, M = 3;
    MatrixXd X = random_matrix(rng, n, p);
    VectorXd f1 = VectorXd::Zero(p), f2 = VectorXd::Zero(p);
    f1[0] = 2.0;
    f2[1] = -2.0;
    VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const VectorXd& f = (i < 24 || i >= 48) ? f1 : f2;
        y[i] = X.row(i).dot(f) + 0.1 * rng.normal();
    }
    auto data = Dataset::regression(std::move(X), std::move(y));

    DetectConfig cfg;
    cfg.method = Method::cf_cv_star;
    cfg.model = ModelChoice::lasso_cv;
    cfg.M = M;
    cfg.grid_size = 5;
    cfg.grid_ratio = 0.05;
    cfg.search = SearchConfig::fixed_K(2, 12);
    const auto via_engine = detect(data, cfg);

    auto ladder = global_lambda_grid(data, cfg.grid_size, cfg.grid_ratio);
    auto model = build_generic_model(cfg, data, ladder);
    auto folds = std::make_shared<FoldPlan>(n, M);
    auto cache = std::make_shared<CostCache>();
    const auto generic = dp_solve(generic_cost_fn(model, data, cfg.method, folds, cache), n, cfg.search);

    REQUIRE(via_engine.segmentation.taus() == generic.segmentation.taus());
    REQUIRE(via_engine.total_loss == Catch::Approx(generic.total_loss).epsilon(1e-5));
    REQUIRE(via_engine.segmentation.taus() == std::vector<int>{24, 48});
}
