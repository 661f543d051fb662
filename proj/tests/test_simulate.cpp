#include <catch2/catch_amalgamated.hpp>

#include "cpd/simulate.hpp"

#include <cmath>

using namespace cpd;

TEST_CASE("single-changepoint linear generator matches its configuration") {
    auto gen = gen_single_cp_linear(5.0, 7, 500, 1000);
    REQUIRE(gen.data.n() == 500);
    REQUIRE(gen.data.p() == 1000);
    REQUIRE(gen.data.truth().taus == std::vector<int>{150});

    const auto& params = gen.data.truth().segment_params;
    REQUIRE((params[1] - params[0]).norm() == Catch::Approx(std::sqrt(5.0)));

    // Determinism: same seed, identical bytes.
    auto again = gen_single_cp_linear(5.0, 7, 500, 1000);
    REQUIRE(gen.data.covariates() == again.data.covariates());
    REQUIRE(gen.data.responses() == again.data.responses());

    auto different = gen_single_cp_linear(5.0, 8, 500, 1000);
    REQUIRE(gen.data.responses() != different.data.responses());

    REQUIRE_THROWS_AS(gen_single_cp_linear(0.0, 7), InvalidConfigError);
}

TEST_CASE("responses regenerate bit-exactly from stored truth and noise") {
    auto gen = gen_single_cp_linear(1.0, 21, 120, 30);
    const auto& truth = gen.data.truth();
    for (int i = 0; i < gen.data.n(); ++i) {
        const int k = (i + 1 <= truth.taus[0]) ? 0 : 1;
        const double y = gen.data.covariates().row(i).dot(truth.segment_params[k]) +
                         truth.noise_sd[k] * gen.noise[i];
        REQUIRE(y == gen.data.responses()[i]);
    }
}

TEST_CASE("dgp1 structure") {
    auto gen = gen_dgp1(0.8, 3, 200, 40);
    REQUIRE(gen.data.truth().taus == std::vector<int>{70, 100, 176});
    const auto& p = gen.data.truth().segment_params;
    REQUIRE(p.size() == 4);
    REQUIRE(p[0] == p[2]); // segments 1 and 3 share the parameter
    REQUIRE_THROWS_AS(gen_dgp1(0.0, 3), InvalidConfigError);
}

TEST_CASE("dgp1 full-scale taus match {350,500,880}") {
    auto gen = gen_dgp1(0.6, 11, 1000, 10);
    REQUIRE(gen.data.truth().taus == std::vector<int>{350, 500, 880});
}

TEST_CASE("dgp2 keeps the response variance constant across segments") {
    for (double se : {0.8, 0.5, 0.2}) {
        auto gen = gen_dgp2(se, 13, 120, 50);
        const auto& truth = gen.data.truth();
        const MatrixXd sigma = truth.sigma.materialize(50);
        double first = 0.0;
        double min_sd = 1e18;
        for (std::size_t k = 0; k < truth.segment_params.size(); ++k) {
            const VectorXd& f = truth.segment_params[k];
            const double var = f.dot(sigma * f) + truth.noise_sd[k] * truth.noise_sd[k];
            if (k == 0) first = var;
            REQUIRE(var == Catch::Approx(first).margin(1e-10));
            min_sd = std::min(min_sd, truth.noise_sd[k]);
        }
        REQUIRE(min_sd == Catch::Approx(se).margin(1e-12));
    }
}

TEST_CASE("nonparametric generator marks mean and correlation shifts") {
    const double b = 0.5;
    auto gen = gen_nonparam(b, 17, 1000, 20);
    const auto& Z = gen.data.covariates();
    REQUIRE(gen.data.truth().taus == std::vector<int>{350, 500, 880});

    // Segment 3 mean of the first five coordinates is near b (4-sigma
    // Monte-Carlo bound over 380*5 draws).
    double seg3 = 0.0;
    for (int i = 500; i < 880; ++i)
        for (int j = 0; j < 5; ++j) seg3 += Z(i, j);
    seg3 /= 380.0 * 5.0;
    REQUIRE(std::abs(seg3 - b) <= 4.0 / std::sqrt(380.0 * 5.0));

    // Segments 2 and 4 are untouched standard normals.
    double other = 0.0;
    int count = 0;
    for (int i = 350; i < 500; ++i)
        for (int j = 0; j < 20; ++j, ++count) other += Z(i, j);
    for (int i = 880; i < 1000; ++i)
        for (int j = 0; j < 20; ++j, ++count) other += Z(i, j);
    other /= count;
    REQUIRE(std::abs(other) <= 4.0 / std::sqrt(static_cast<double>(count)));

    // Lag-1 correlation inside segment 1 is near b.
    double cross = 0.0, var = 0.0;
    for (int i = 0; i < 350; ++i) {
        for (int j = 0; j + 1 < 20; ++j) {
            cross += Z(i, j) * Z(i, j + 1);
            var += Z(i, j) * Z(i, j);
        }
    }
    REQUIRE(cross / var == Catch::Approx(b).margin(0.05));

    REQUIRE_THROWS_AS(gen_nonparam(1.2, 17), InvalidConfigError);
}

TEST_CASE("benign ridgeless generator geometry") {
    auto gen = gen_ridgeless_benign(5, 100, 60);
    const auto& truth = gen.data.truth();
    REQUIRE(truth.taus == std::vector<int>{30});
    REQUIRE(truth.segment_params[0].norm() == Catch::Approx(1.0));
    REQUIRE(truth.segment_params[1].norm() == Catch::Approx(1.0));
    REQUIRE(truth.segment_params[0].dot(truth.segment_params[1]) == Catch::Approx(-0.2));

    auto spec = benign_spectrum(60);
    REQUIRE(spec[0] == 1.0);
    for (int j = 6; j < 60; ++j) REQUIRE(spec[j] < spec[j - 1]);
}

TEST_CASE("replication substreams are independent and reproducible") {
    DgpSpec spec;
    spec.name = DgpName::single_cp_linear;
    spec.b = 1.0;
    spec.n = 40;
    spec.p = 5;
    spec.seed = substream_seed(42, 3);
    auto a = generate(spec);
    auto b2 = generate(spec);
    REQUIRE(a.data.responses() == b2.data.responses());
    spec.seed = substream_seed(42, 4);
    auto c = generate(spec);
    REQUIRE(a.data.responses() != c.data.responses());
}

TEST_CASE("hausdorff distance") {
    SECTION("identical sets") {
        auto r = hausdorff({100, 200}, {100, 200}, 500);
        REQUIRE(r.distance == 0.0);
    }
    SECTION("paper-style asymmetric example") {
        auto r = hausdorff({100, 200}, {120}, 500);
        REQUIRE(r.directed_est_to_true == 20.0);
        REQUIRE(r.directed_true_to_est == 80.0);
        REQUIRE(r.distance == 80.0);
    }
    SECTION("symmetry") {
        auto a = hausdorff({40, 90}, {10, 55, 77}, 100);
        auto b = hausdorff({10, 55, 77}, {40, 90}, 100);
        REQUIRE(a.distance == b.distance);
    }
    SECTION("empty-set conventions") {
        REQUIRE(hausdorff({}, {}, 100).distance == 0.0);
        REQUIRE(hausdorff({50}, {}, 100).distance == 100.0);
        REQUIRE(hausdorff({}, {50}, 100).distance == 100.0);
    }
}
