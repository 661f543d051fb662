#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cpd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Bad solver/fold/search configuration (maps to CLI exit code 4).
struct InvalidConfigError : Error {
    using Error::Error;
};
// A segment cannot be fit (too short, rank-deficient, degenerate labels).
struct SegmentInfeasibleError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
// Malformed input data or files (maps to CLI exit code 3).
struct DataError : Error {
    using Error::Error;
};
struct TuningFailedError : Error {
    using Error::Error;
};
struct UnsupportedModelError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Intervals and segmentations
//
// Time indices are 1-based throughout the data model; a segment is the
// half-open interval (s, e] = {s+1, ..., e}, so storage row r (0-based)
// carries time index r+1.
// ---------------------------------------------------------------------------

struct Interval {
    int s = 0; // exclusive lower end, 0 <= s < e
    int e = 0; // inclusive upper end, e <= n

    int length() const { return e - s; }
    bool contains(int i) const { return i > s && i <= e; } // 1-based i
    friend bool operator==(const Interval&, const Interval&) = default;
    friend auto operator<=>(const Interval&, const Interval&) = default;
};

class Segmentation {
  public:
    Segmentation(std::vector<int> taus, int n) : taus_(std::move(taus)), n_(n) {
        if (n_ < 1) throw InvalidConfigError("Segmentation: n must be >= 1");
        int prev = 0;
        for (int t : taus_) {
            if (t <= prev || t >= n_)
                throw InvalidConfigError("Segmentation: taus must satisfy 0 < tau_1 < ... < tau_K < n");
            prev = t;
        }
    }
    explicit Segmentation(int n) : Segmentation({}, n) {}

    const std::vector<int>& taus() const { return taus_; }
    int n() const { return n_; }
    int num_changepoints() const { return static_cast<int>(taus_.size()); }

    friend bool operator==(const Segmentation&, const Segmentation&) = default;

  private:
    std::vector<int> taus_;
    int n_;
};

// The K+1 contiguous half-open intervals covering (0, n].
inline std::vector<Interval> segments_of(const Segmentation& seg) {
    std::vector<Interval> out;
    out.reserve(seg.taus().size() + 1);
    int prev = 0;
    for (int t : seg.taus()) {
        out.push_back({prev, t});
        prev = t;
    }
    out.push_back({prev, seg.n()});
    return out;
}

// ---------------------------------------------------------------------------
// Order-preserving fold plans: m(i) = ((i-1) mod M) + 1 for 1-based i.
// ---------------------------------------------------------------------------

class FoldPlan {
  public:
    FoldPlan(int n, int M) : n_(n), M_(M) {
        if (M < 2) throw InvalidConfigError("FoldPlan: M must be >= 2");
        if (M > n) throw InvalidConfigError("FoldPlan: M must be <= n");
    }

    int n() const { return n_; }
    int folds() const { return M_; }

    // Fold index in [1, M] of 1-based time index i.
    int fold_of(int i) const { return (i - 1) % M_ + 1; }
    // Fold index in [0, M) of 0-based storage row r.
    int fold_of_row(int r) const { return r % M_; }

    // 0-based storage rows of fold m (1-based m).
    std::vector<int> fold_rows(int m) const {
        std::vector<int> rows;
        rows.reserve((n_ - m) / M_ + 1);
        for (int r = m - 1; r < n_; r += M_) rows.push_back(r);
        return rows;
    }

    std::vector<int> assignment() const {
        std::vector<int> a(n_);
        for (int i = 1; i <= n_; ++i) a[i - 1] = fold_of(i);
        return a;
    }

  private:
    int n_;
    int M_;
};

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class DataKind { regression, multivariate };

// Covariance descriptor for the simulated covariate law; materialized on
// demand by diagnostics.
struct CovarianceSpec {
    enum class Kind { identity, ar1, diagonal, dense } kind = Kind::identity;
    double rho = 0.0;        // ar1: Sigma_ij = rho^|i-j|
    VectorXd spectrum;       // diagonal: Sigma = diag(spectrum)
    MatrixXd matrix;         // dense

    static CovarianceSpec identity() { return {}; }
    static CovarianceSpec ar1(double rho) {
        CovarianceSpec s;
        s.kind = Kind::ar1;
        s.rho = rho;
        return s;
    }
    static CovarianceSpec diagonal(VectorXd spec) {
        CovarianceSpec s;
        s.kind = Kind::diagonal;
        s.spectrum = std::move(spec);
        return s;
    }

    MatrixXd materialize(int p) const {
        switch (kind) {
            case Kind::identity: return MatrixXd::Identity(p, p);
            case Kind::ar1: {
                MatrixXd m(p, p);
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < p; ++j) m(i, j) = std::pow(rho, std::abs(i - j));
                return m;
            }
            case Kind::diagonal: {
                if (spectrum.size() != p) throw InvalidConfigError("CovarianceSpec: spectrum size mismatch");
                return spectrum.asDiagonal();
            }
            case Kind::dense:
                if (matrix.rows() != p || matrix.cols() != p)
                    throw InvalidConfigError("CovarianceSpec: matrix size mismatch");
                return matrix;
        }
        throw InvalidConfigError("CovarianceSpec: bad kind");
    }
};

struct GroundTruth {
    std::vector<int> taus;                 // true changepoints, strictly increasing in (0,n)
    std::vector<VectorXd> segment_params;  // K*+1 parameter vectors
    std::vector<double> noise_sd;          // per-segment noise standard deviations
    CovarianceSpec sigma;

    void validate(int n) const {
        Segmentation check(taus, n); // throws on bad taus
        if (segment_params.size() != taus.size() + 1)
            throw InvalidConfigError("GroundTruth: need |taus|+1 segment parameters");
        if (!noise_sd.empty() && noise_sd.size() != segment_params.size())
            throw InvalidConfigError("GroundTruth: noise_sd size mismatch");
    }

    // True parameter in effect at 1-based time index i.
    const VectorXd& param_at(int i) const {
        std::size_t k = 0;
        while (k < taus.size() && i > taus[k]) ++k;
        return segment_params[k];
    }
};

// Ordered observations; rows are immutable after construction and row r
// corresponds to time index r+1.
class Dataset {
  public:
    static Dataset regression(MatrixXd X, VectorXd y) {
        if (X.rows() != y.size()) throw DataError("Dataset: X rows and y length differ");
        if (X.rows() < 1 || X.cols() < 1) throw DataError("Dataset: need n >= 1 and p >= 1");
        Dataset d;
        d.kind_ = DataKind::regression;
        d.X_ = std::move(X);
        d.y_ = std::move(y);
        return d;
    }

    static Dataset multivariate(MatrixXd Z) {
        if (Z.rows() < 1 || Z.cols() < 1) throw DataError("Dataset: need n >= 1 and p >= 1");
        Dataset d;
        d.kind_ = DataKind::multivariate;
        d.X_ = std::move(Z);
        return d;
    }

    DataKind kind() const { return kind_; }
    int n() const { return static_cast<int>(X_.rows()); }
    int p() const { return static_cast<int>(X_.cols()); }

    // Covariates (regression) or observation vectors (multivariate), n x p.
    const MatrixXd& covariates() const { return X_; }
    const VectorXd& responses() const {
        if (kind_ != DataKind::regression) throw DataError("Dataset: no responses on multivariate data");
        return y_;
    }

    bool has_truth() const { return truth_.has_value(); }
    const GroundTruth& truth() const {
        if (!truth_) throw DataError("Dataset: no ground truth attached");
        return *truth_;
    }
    void attach_truth(GroundTruth t) {
        t.validate(n());
        truth_ = std::move(t);
    }

  private:
    DataKind kind_ = DataKind::multivariate;
    MatrixXd X_;
    VectorXd y_;
    std::optional<GroundTruth> truth_;
};

// ---------------------------------------------------------------------------
// Costs and detection results
// ---------------------------------------------------------------------------

enum class CostMode { in_sample, crossfit, crossfit_recycled };

inline const char* to_string(CostMode m) {
    switch (m) {
        case CostMode::in_sample: return "in_sample";
        case CostMode::crossfit: return "crossfit";
        case CostMode::crossfit_recycled: return "crossfit_recycled";
    }
    return "?";
}

struct SegmentCost {
    Interval interval;
    double value = 0.0; // always finite
    CostMode mode = CostMode::in_sample;
    std::string model_tag;
};

struct SearchSnapshot {
    bool penalized = false;
    int K = 0;          // fixed-K mode
    double gamma = 0.0; // penalized mode
    int d_m = 1;
    int M = 0;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> extra;
};

struct DetectionResult {
    Segmentation segmentation{1};
    double total_loss = 0.0;
    std::vector<SegmentCost> per_segment;
    std::string method;
    SearchSnapshot config;
};

} // namespace cpd
