#include <catch2/catch_amalgamated.hpp>

#include "cpd/core.hpp"
#include "cpd/rng.hpp"

using namespace cpd;

TEST_CASE("segments_of covers (0,n] with contiguous half-open intervals") {
    SECTION("no changepoints") {
        auto segs = segments_of(Segmentation({}, 5));
        REQUIRE(segs == std::vector<Interval>{{0, 5}});
    }
    SECTION("single changepoint") {
        auto segs = segments_of(Segmentation({150}, 500));
        REQUIRE(segs == std::vector<Interval>{{0, 150}, {150, 500}});
    }
    SECTION("three changepoints give four intervals") {
        auto segs = segments_of(Segmentation({350, 500, 880}, 1000));
        REQUIRE(segs.size() == 4);
        REQUIRE(segs.front().s == 0);
        REQUIRE(segs.back().e == 1000);
    }
}

TEST_CASE("segment lengths sum to n for random segmentations") {
    Rng rng(20240811);
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 1 + static_cast<int>(rng.uniform_index(400));
        std::vector<int> taus;
        for (int t = 1; t < n; ++t)
            if (rng.uniform() < 0.1) taus.push_back(t);
        Segmentation seg(taus, n);
        auto segs = segments_of(seg);
        REQUIRE(segs.size() == taus.size() + 1);
        int total = 0;
        int prev_e = 0;
        for (const auto& iv : segs) {
            REQUIRE(iv.s == prev_e);
            REQUIRE(iv.e > iv.s);
            total += iv.length();
            prev_e = iv.e;
        }
        REQUIRE(total == n);
    }
}

TEST_CASE("Segmentation rejects non-increasing or out-of-range taus") {
    REQUIRE_THROWS_AS(Segmentation({0}, 5), InvalidConfigError);
    REQUIRE_THROWS_AS(Segmentation({5}, 5), InvalidConfigError);
    REQUIRE_THROWS_AS(Segmentation({3, 3}, 5), InvalidConfigError);
    REQUIRE_THROWS_AS(Segmentation({4, 2}, 5), InvalidConfigError);
    REQUIRE_THROWS_AS(Segmentation({-1}, 5), InvalidConfigError);
    REQUIRE_NOTHROW(Segmentation({1, 2, 3, 4}, 5));
}

TEST_CASE("Dataset invariants") {
    MatrixXd X(3, 2);
    X << 1, 2, 3, 4, 5, 6;
    VectorXd y(3);
    y << 1, 2, 3;
    auto reg = Dataset::regression(X, y);
    REQUIRE(reg.n() == 3);
    REQUIRE(reg.p() == 2);
    REQUIRE(reg.responses()[2] == 3.0);

    auto mv = Dataset::multivariate(X);
    REQUIRE_THROWS_AS(mv.responses(), DataError);

    VectorXd bad(2);
    bad << 1, 2;
    REQUIRE_THROWS_AS(Dataset::regression(X, bad), DataError);
}

TEST_CASE("GroundTruth validation and lookup") {
    GroundTruth t;
    t.taus = {2};
    t.segment_params = {VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 5.0)};
    MatrixXd Z = MatrixXd::Zero(4, 1);
    auto d = Dataset::multivariate(Z);
    d.attach_truth(t);
    REQUIRE(d.truth().param_at(1)[0] == 1.0);
    REQUIRE(d.truth().param_at(2)[0] == 1.0);
    REQUIRE(d.truth().param_at(3)[0] == 5.0);

    GroundTruth bad = t;
    bad.segment_params.pop_back();
    auto d2 = Dataset::multivariate(Z);
    REQUIRE_THROWS_AS(d2.attach_truth(bad), InvalidConfigError);
}

TEST_CASE("rng substreams are deterministic and independent of call order") {
    Rng a = Rng::substream(7, 3);
    Rng b = Rng::substream(7, 3);
    Rng c = Rng::substream(7, 4);
    REQUIRE(a.next_u64() == b.next_u64());
    REQUIRE(a.next_u64() == b.next_u64());
    REQUIRE(Rng::substream(7, 4).next_u64() == c.next_u64());
}

TEST_CASE("inverse normal cdf hits known quantiles") {
    REQUIRE(inverse_normal_cdf(0.5) == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(inverse_normal_cdf(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-12));
    REQUIRE(inverse_normal_cdf(0.025) == Catch::Approx(-1.959963984540054).epsilon(1e-12));
    REQUIRE(inverse_normal_cdf(1e-10) == Catch::Approx(-6.361340902404056).epsilon(1e-9));
}
