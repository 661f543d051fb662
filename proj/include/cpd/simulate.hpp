#pragma once

#include "cpd/core.hpp"
#include "cpd/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

namespace cpd {

// ---------------------------------------------------------------------------
// Data-generating processes. Output is a pure function of (name, params,
// seed): covariates are drawn first (row-major), then noises, each from its
// own substream. n/p overrides rescale the true changepoints proportionally.
// ---------------------------------------------------------------------------

enum class DgpName { single_cp_linear, dgp1, dgp2, nonparam_mixed, ridgeless_benign };

inline const char* to_string(DgpName d) {
    switch (d) {
        case DgpName::single_cp_linear: return "single-cp-linear";
        case DgpName::dgp1: return "dgp1";
        case DgpName::dgp2: return "dgp2";
        case DgpName::nonparam_mixed: return "nonparam";
        case DgpName::ridgeless_benign: return "ridgeless-benign";
    }
    return "?";
}

inline DgpName dgp_from_string(const std::string& s) {
    if (s == "single-cp-linear" || s == "single_cp_linear") return DgpName::single_cp_linear;
    if (s == "dgp1") return DgpName::dgp1;
    if (s == "dgp2") return DgpName::dgp2;
    if (s == "nonparam" || s == "nonparam_mixed") return DgpName::nonparam_mixed;
    if (s == "ridgeless-benign" || s == "ridgeless_benign") return DgpName::ridgeless_benign;
    throw InvalidConfigError("unknown dgp: " + s);
}

struct DgpSpec {
    DgpName name = DgpName::single_cp_linear;
    double b = 1.0;
    double se = 0.8;
    int n = 0; // 0 = paper default
    int p = 0;
    std::uint64_t seed = 1;
};

struct GenResult {
    Dataset data;
    VectorXd noise; // standard-normal draws before scaling; kept for tests
};

namespace detail {

// Symmetric square roots are cached; the eigendecomposition at p=1000 is the
// expensive part of generation.
inline const MatrixXd& sigma_sqrt_cached(const std::string& key, const CovarianceSpec& spec, int p) {
    static std::mutex mu;
    static std::unordered_map<std::string, std::unique_ptr<MatrixXd>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return *it->second;
    MatrixXd sigma = spec.materialize(p);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma);
    VectorXd vals = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    auto owned = std::make_unique<MatrixXd>(eig.eigenvectors() * vals.asDiagonal() *
                                            eig.eigenvectors().transpose());
    const MatrixXd& ref = *owned;
    cache.emplace(key, std::move(owned));
    return ref;
}

inline MatrixXd draw_gaussian_matrix(Rng& rng, int n, int p) {
    MatrixXd G(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) G(i, j) = rng.normal();
    return G;
}

inline std::vector<int> scale_taus(const std::vector<int>& base, int n, int n_base) {
    std::vector<int> out;
    out.reserve(base.size());
    for (int t : base) out.push_back(static_cast<int>(std::llround(static_cast<double>(t) * n / n_base)));
    return out;
}

// f* with the first `s` entries alternating +1, -1.
inline VectorXd alternating_coef(int p, int s) {
    VectorXd f = VectorXd::Zero(p);
    for (int j = 0; j < s && j < p; ++j) f[j] = (j % 2 == 0) ? 1.0 : -1.0;
    return f;
}

inline GenResult linear_from_params(const std::vector<int>& taus, const std::vector<VectorXd>& params,
                                    const std::vector<double>& noise_sd, const CovarianceSpec& sigma_spec,
                                    const std::string& sigma_key, int n, int p, std::uint64_t seed) {
    Rng rng_x = Rng::substream(seed, 0);
    Rng rng_eps = Rng::substream(seed, 1);
    MatrixXd X = draw_gaussian_matrix(rng_x, n, p);
    if (sigma_spec.kind == CovarianceSpec::Kind::diagonal) {
        X = X * sigma_spec.spectrum.cwiseSqrt().asDiagonal();
    } else if (sigma_spec.kind != CovarianceSpec::Kind::identity) {
        X = X * sigma_sqrt_cached(sigma_key, sigma_spec, p);
    }
    VectorXd eps(n);
    for (int i = 0; i < n; ++i) eps[i] = rng_eps.normal();

    VectorXd y(n);
    int k = 0;
    for (int i = 0; i < n; ++i) {
        while (k < static_cast<int>(taus.size()) && i + 1 > taus[k]) ++k;
        y[i] = X.row(i).dot(params[k]) + noise_sd[k] * eps[i];
    }
    Dataset data = Dataset::regression(std::move(X), std::move(y));
    GroundTruth truth;
    truth.taus = taus;
    truth.segment_params = params;
    truth.noise_sd = noise_sd;
    truth.sigma = sigma_spec;
    data.attach_truth(std::move(truth));
    return {std::move(data), std::move(eps)};
}

} // namespace detail

// Single changepoint at 150/500 of the series, AR(0.2) covariates,
// f*_2 = (1 + sqrt(b/5)) f*_1.
inline GenResult gen_single_cp_linear(double b, std::uint64_t seed, int n = 500, int p = 1000) {
    if (!(b > 0.0)) throw InvalidConfigError("gen_single_cp_linear: b must be > 0");
    const auto taus = detail::scale_taus({150}, n, 500);
    const VectorXd f1 = detail::alternating_coef(p, 5);
    const VectorXd f2 = (1.0 + std::sqrt(b / 5.0)) * f1;
    return detail::linear_from_params(taus, {f1, f2}, {1.0, 1.0}, CovarianceSpec::ar1(0.2),
                                      "ar1:0.2:" + std::to_string(p), n, p, seed);
}

// Three changepoints at {350,500,880}/1000; segments 1 and 3 share f*.
inline GenResult gen_dgp1(double b, std::uint64_t seed, int n = 1000, int p = 1000) {
    if (!(b > 0.0)) throw InvalidConfigError("gen_dgp1: b must be > 0");
    const auto taus = detail::scale_taus({350, 500, 880}, n, 1000);
    const VectorXd f1 = detail::alternating_coef(p, 5);
    const VectorXd f2 = (1.0 + std::sqrt(b / 5.0)) * f1;
    const VectorXd f4 = (1.0 - std::sqrt(b / 5.0)) * f1;
    return detail::linear_from_params(taus, {f1, f2, f1, f4}, {1.0, 1.0, 1.0, 1.0},
                                      CovarianceSpec::ar1(0.2), "ar1:0.2:" + std::to_string(p), n, p, seed);
}

// Heterogeneous-noise variant: noise variances keep Var(y) constant across
// segments, with min_k sd_k = se.
inline GenResult gen_dgp2(double se, std::uint64_t seed, int n = 1000, int p = 1000) {
    if (!(se > 0.0)) throw InvalidConfigError("gen_dgp2: se must be > 0");
    const auto taus = detail::scale_taus({350, 500, 880}, n, 1000);
    VectorXd ones5 = VectorXd::Zero(p);
    for (int j = 0; j < 5 && j < p; ++j) ones5[j] = 1.0;
    VectorXd q = VectorXd::Zero(p);
    for (int j = 0; j < 5 && j < p; ++j) q[j] = (j % 2 == 0) ? 1.0 : -1.3;
    q /= q.norm();
    const std::vector<VectorXd> params = {ones5, ones5 + q, ones5, ones5 - 0.9 * q};

    const CovarianceSpec sigma_spec = CovarianceSpec::ar1(0.2);
    const MatrixXd sigma = sigma_spec.materialize(p);
    std::vector<double> signal(params.size());
    double max_signal = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        signal[k] = params[k].dot(sigma * params[k]);
        max_signal = std::max(max_signal, signal[k]);
    }
    std::vector<double> noise_sd(params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        const double var = max_signal + se * se - signal[k];
        if (!(var > 0.0)) throw InvalidConfigError("gen_dgp2: nonpositive noise variance");
        noise_sd[k] = std::sqrt(var);
    }
    return detail::linear_from_params(taus, params, noise_sd, sigma_spec,
                                      "ar1:0.2:" + std::to_string(p), n, p, seed);
}

// Multivariate mixture: correlation shift on segment 1, mean shift on
// segment 3, standard normals elsewhere.
inline GenResult gen_nonparam(double b, std::uint64_t seed, int n = 1000, int p = 20) {
    if (!(b > 0.0 && b < 1.0)) throw InvalidConfigError("gen_nonparam: need 0 < b < 1");
    const auto taus = detail::scale_taus({350, 500, 880}, n, 1000);
    Rng rng = Rng::substream(seed, 0);
    MatrixXd Z = detail::draw_gaussian_matrix(rng, n, p);

    const CovarianceSpec corr = CovarianceSpec::ar1(b);
    const MatrixXd& S = detail::sigma_sqrt_cached("ar1:" + std::to_string(b) + ":" + std::to_string(p), corr, p);
    VectorXd mean_shift = VectorXd::Zero(p);
    for (int j = 0; j < 5 && j < p; ++j) mean_shift[j] = b;

    for (int i = 0; i < n; ++i) {
        if (i + 1 <= taus[0]) {
            Z.row(i) = Z.row(i) * S; // N(0, Sigma_b)
        } else if (i + 1 > taus[1] && i + 1 <= taus[2]) {
            Z.row(i) += mean_shift.transpose(); // N(b 1_5, I)
        } // segments 2 and 4 share the standard-normal branch
    }

    Dataset data = Dataset::multivariate(std::move(Z));
    GroundTruth truth;
    truth.taus = taus;
    truth.segment_params = {VectorXd::Zero(p), VectorXd::Zero(p), mean_shift, VectorXd::Zero(p)};
    truth.noise_sd = {1.0, 1.0, 1.0, 1.0};
    truth.sigma = CovarianceSpec::identity();
    data.attach_truth(std::move(truth));
    return {std::move(data), VectorXd()};
}

// Benign-covariance ridgeless setting: a few unit spikes plus a slowly
// decaying near-flat tail (effective rank of the tail ~ p >> n), diagonal so
// the top eigenvectors are coordinate axes.
inline VectorXd benign_spectrum(int p) {
    VectorXd mu(p);
    for (int j = 0; j < p; ++j) mu[j] = (j < 5) ? 1.0 : 0.05 / (1.0 + static_cast<double>(j - 5) / p);
    return mu;
}

inline GenResult gen_ridgeless_benign(std::uint64_t seed, int n = 500, int p = 1000) {
    const auto taus = detail::scale_taus({150}, n, 500);
    VectorXd f1 = VectorXd::Zero(p), f2 = VectorXd::Zero(p);
    for (int j = 0; j < 5; ++j) {
        f1[j] = 1.0 / std::sqrt(5.0);
        f2[j] = ((j + 1) % 2 == 0 ? 1.0 : -1.0) / std::sqrt(5.0); // (-1)^j over 1-based j
    }
    return detail::linear_from_params(taus, {f1, f2}, {1.0, 1.0},
                                      CovarianceSpec::diagonal(benign_spectrum(p)), "", n, p, seed);
}

inline GenResult generate(const DgpSpec& spec) {
    switch (spec.name) {
        case DgpName::single_cp_linear:
            return gen_single_cp_linear(spec.b, spec.seed, spec.n > 0 ? spec.n : 500, spec.p > 0 ? spec.p : 1000);
        case DgpName::dgp1:
            return gen_dgp1(spec.b, spec.seed, spec.n > 0 ? spec.n : 1000, spec.p > 0 ? spec.p : 1000);
        case DgpName::dgp2:
            return gen_dgp2(spec.se, spec.seed, spec.n > 0 ? spec.n : 1000, spec.p > 0 ? spec.p : 1000);
        case DgpName::nonparam_mixed:
            return gen_nonparam(spec.b, spec.seed, spec.n > 0 ? spec.n : 1000, spec.p > 0 ? spec.p : 20);
        case DgpName::ridgeless_benign:
            return gen_ridgeless_benign(spec.seed, spec.n > 0 ? spec.n : 500, spec.p > 0 ? spec.p : 1000);
    }
    throw InvalidConfigError("generate: bad dgp");
}

// ---------------------------------------------------------------------------
// Hausdorff distance between changepoint sets.
// ---------------------------------------------------------------------------

struct HausdorffResult {
    double distance = 0.0;
    double directed_est_to_true = 0.0; // max over estimates of the distance to the nearest truth
    double directed_true_to_est = 0.0;
};

inline HausdorffResult hausdorff(const std::vector<int>& true_taus, const std::vector<int>& est_taus, int n) {
    HausdorffResult r;
    if (true_taus.empty() && est_taus.empty()) return r;
    if (true_taus.empty() || est_taus.empty()) {
        // One-sided emptiness: distance n by convention.
        r.distance = n;
        r.directed_est_to_true = est_taus.empty() ? 0.0 : n;
        r.directed_true_to_est = true_taus.empty() ? 0.0 : n;
        return r;
    }
    auto directed = [](const std::vector<int>& from, const std::vector<int>& to) {
        double worst = 0.0;
        for (int a : from) {
            double best = std::numeric_limits<double>::infinity();
            for (int b : to) best = std::min(best, static_cast<double>(std::abs(a - b)));
            worst = std::max(worst, best);
        }
        return worst;
    };
    r.directed_est_to_true = directed(est_taus, true_taus);
    r.directed_true_to_est = directed(true_taus, est_taus);
    r.distance = std::max(r.directed_est_to_true, r.directed_true_to_est);
    return r;
}

} // namespace cpd
