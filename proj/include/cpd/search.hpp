#pragma once

#include "cpd/core.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace cpd {

// ---------------------------------------------------------------------------
// Exact dynamic-programming search over segmentations with minimum segment
// length d_m, either with a fixed number of changepoints K or with a
// per-changepoint penalty gamma. candidate_stride > 1 restricts admissible
// boundaries to multiples of the stride; it is an explicitly labeled
// approximation knob and defaults to the complete search.
// ---------------------------------------------------------------------------

struct SearchConfig {
    bool penalized = false;
    int K = 0;
    double gamma = 0.0;
    int d_m = 1;
    int candidate_stride = 1;

    // d_m = 0 is the "resolve from the model" sentinel; solvers require >= 1.
    static SearchConfig fixed_K(int K, int d_m = 1) {
        if (K < 0) throw InvalidConfigError("SearchConfig: K must be >= 0");
        if (d_m < 0) throw InvalidConfigError("SearchConfig: d_m must be >= 0");
        SearchConfig c;
        c.K = K;
        c.d_m = d_m;
        return c;
    }
    static SearchConfig penalized_mode(double gamma, int d_m = 1) {
        if (gamma < 0.0) throw InvalidConfigError("SearchConfig: gamma must be >= 0");
        if (d_m < 0) throw InvalidConfigError("SearchConfig: d_m must be >= 0");
        SearchConfig c;
        c.penalized = true;
        c.gamma = gamma;
        c.d_m = d_m;
        return c;
    }
};

using CostFn = std::function<double(int, int)>; // cost of segment (s, e]

namespace detail {

// Interval cost memo: the DP queries each admissible (s, e] at most once.
class CostTable {
  public:
    CostTable(const CostFn& fn, int n) : fn_(fn), n_(n), values_((n + 1) * (n + 1), kUnset) {}

    double operator()(int s, int e) {
        double& slot = values_[static_cast<std::size_t>(s) * (n_ + 1) + e];
        if (std::isnan(slot)) {
            slot = fn_(s, e);
            ++evaluations_;
        }
        return slot;
    }

    std::size_t evaluations() const { return evaluations_; }

  private:
    static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();
    const CostFn& fn_;
    int n_;
    std::vector<double> values_;
    std::size_t evaluations_ = 0;
};

// A boundary is admissible when it is 0, n, or a multiple of the stride.
inline bool admissible_boundary(int t, int n, int stride) {
    return t == 0 || t == n || (stride <= 1 || t % stride == 0);
}

} // namespace detail

// Number of interval-cost evaluations in the most recent dp_solve call on
// this thread (exposed for cache-behavior tests).
inline std::size_t& dp_last_evaluation_count() {
    thread_local std::size_t count = 0;
    return count;
}

inline DetectionResult dp_solve(const CostFn& cost, int n, const SearchConfig& config) {
    const int d = config.d_m;
    const int stride = std::max(1, config.candidate_stride);
    if (n < 1) throw InvalidConfigError("dp_solve: n must be >= 1");
    if (d < 1) throw InvalidConfigError("dp_solve: d_m must be >= 1");
    detail::CostTable table(cost, n);
    const double inf = std::numeric_limits<double>::infinity();

    std::vector<int> taus;
    double total = 0.0;

    if (!config.penalized) {
        const int K = config.K;
        if (static_cast<long long>(K + 1) * d > n)
            throw InvalidConfigError("dp_solve: infeasible, need (K+1)*d_m <= n");
        // B[r][s] = best cost of splitting (s, n] into exactly r segments.
        // s must be reachable as the right end of the K+1-r preceding
        // segments: s >= (K+1-r)*d_m, and s = 0 exactly when r = K+1.
        auto s_range = [&](int r, int& lo, int& hi) {
            lo = (K + 1 - r) * d;
            hi = n - r * d;
            if (r == K + 1) hi = 0;
        };
        std::vector<std::vector<double>> B(K + 2, std::vector<double>(n + 1, inf));
        {
            int lo, hi;
            s_range(1, lo, hi);
            for (int s = lo; s <= hi; ++s)
                if (detail::admissible_boundary(s, n, stride)) B[1][s] = table(s, n);
        }
        for (int r = 2; r <= K + 1; ++r) {
            int lo, hi;
            s_range(r, lo, hi);
            for (int s = lo; s <= hi; ++s) {
                if (!detail::admissible_boundary(s, n, stride)) continue;
                double best = inf;
                for (int t = s + d; t + (r - 1) * d <= n; ++t) {
                    if (!detail::admissible_boundary(t, n, stride)) continue;
                    if (B[r - 1][t] == inf) continue;
                    const double v = table(s, t) + B[r - 1][t];
                    if (v < best) best = v;
                }
                B[r][s] = best;
            }
        }
        total = B[K + 1][0];
        if (!(total < inf)) throw InvalidConfigError("dp_solve: no admissible segmentation");
        // Forward reconstruction; the smallest boundary achieving each level's
        // optimum yields the lexicographically smallest tau sequence.
        int s = 0;
        for (int r = K + 1; r >= 2; --r) {
            for (int t = s + d; t + (r - 1) * d <= n; ++t) {
                if (!detail::admissible_boundary(t, n, stride)) continue;
                if (B[r - 1][t] == inf) continue;
                if (table(s, t) + B[r - 1][t] == B[r][s]) {
                    taus.push_back(t);
                    s = t;
                    break;
                }
            }
        }
        if (static_cast<int>(taus.size()) != K) throw NumericError("dp_solve: reconstruction failed");
    } else {
        if (n < d) throw InvalidConfigError("dp_solve: n < d_m");
        const double gamma = config.gamma;
        // B[s] = best penalized cost of segmenting (s, n]; gamma per internal cut.
        std::vector<double> B(n + 1, inf);
        for (int s = n - d; s >= 0; --s) {
            if (!detail::admissible_boundary(s, n, stride)) continue;
            double best = table(s, n); // stop: single closing segment
            for (int t = s + d; t + d <= n; ++t) {
                if (!detail::admissible_boundary(t, n, stride)) continue;
                if (B[t] == inf) continue;
                const double v = table(s, t) + gamma + B[t];
                if (v < best) best = v;
            }
            B[s] = best;
        }
        total = B[0];
        if (!(total < inf)) throw InvalidConfigError("dp_solve: no admissible segmentation");
        // Forward reconstruction, preferring to stop on ties, then smaller t.
        int s = 0;
        while (true) {
            if (table(s, n) == B[s]) break;
            bool advanced = false;
            for (int t = s + d; t + d <= n; ++t) {
                if (!detail::admissible_boundary(t, n, stride)) continue;
                if (B[t] == inf) continue;
                if (table(s, t) + gamma + B[t] == B[s]) {
                    taus.push_back(t);
                    s = t;
                    advanced = true;
                    break;
                }
            }
            if (!advanced) throw NumericError("dp_solve: reconstruction failed");
        }
    }

    dp_last_evaluation_count() = table.evaluations();

    DetectionResult res;
    res.segmentation = Segmentation(taus, n);
    res.total_loss = total;
    res.config.penalized = config.penalized;
    res.config.K = config.K;
    res.config.gamma = config.gamma;
    res.config.d_m = config.d_m;
    for (const auto& iv : segments_of(res.segmentation)) {
        SegmentCost sc;
        sc.interval = iv;
        sc.value = table(iv.s, iv.e);
        res.per_segment.push_back(sc);
    }
    return res;
}

// Exhaustive enumeration with the identical objective and tie rule; the
// testing oracle for dp_solve. Refuses blown-up search spaces.
inline DetectionResult brute_force_solve(const CostFn& cost, int n, const SearchConfig& config,
                                         std::size_t enumeration_bound = 1000000) {
    const int d = config.d_m;
    const int stride = std::max(1, config.candidate_stride);
    if (d < 1) throw InvalidConfigError("brute_force_solve: d_m must be >= 1");
    std::vector<int> best_taus;
    double best_total = std::numeric_limits<double>::infinity();
    bool found = false;
    std::size_t visited = 0;

    std::vector<int> current;
    // Sequences are visited in lexicographic order (prefix before any
    // extension) and only strict improvements replace the incumbent, so ties
    // keep the lexicographically smallest taus.
    auto evaluate = [&](const std::vector<int>& taus) {
        if (++visited > enumeration_bound)
            throw InvalidConfigError("brute_force_solve: enumeration bound exceeded");
        double total = config.penalized ? config.gamma * static_cast<double>(taus.size()) : 0.0;
        int prev = 0;
        for (int t : taus) {
            total += cost(prev, t);
            prev = t;
        }
        total += cost(prev, n);
        if (!found || total < best_total) {
            found = true;
            best_total = total;
            best_taus = taus;
        }
    };

    if (!config.penalized) {
        if (static_cast<long long>(config.K + 1) * d > n)
            throw InvalidConfigError("brute_force_solve: infeasible, need (K+1)*d_m <= n");
        std::function<void(int, int)> recurse = [&](int prev, int remaining) {
            if (remaining == 0) {
                if (n - prev >= d) evaluate(current);
                return;
            }
            for (int t = prev + d; t + remaining * d <= n; ++t) {
                if (!detail::admissible_boundary(t, n, stride)) continue;
                current.push_back(t);
                recurse(t, remaining - 1);
                current.pop_back();
            }
        };
        recurse(0, config.K);
    } else {
        std::function<void(int)> recurse = [&](int prev) {
            if (n - prev >= d) evaluate(current); // close the final segment here
            for (int t = prev + d; t + d <= n; ++t) {
                if (!detail::admissible_boundary(t, n, stride)) continue;
                current.push_back(t);
                recurse(t);
                current.pop_back();
            }
        };
        recurse(0);
    }
    if (!found) throw InvalidConfigError("brute_force_solve: no admissible segmentation");

    DetectionResult res;
    res.segmentation = Segmentation(best_taus, n);
    res.total_loss = best_total;
    res.config.penalized = config.penalized;
    res.config.K = config.K;
    res.config.gamma = config.gamma;
    res.config.d_m = config.d_m;
    for (const auto& iv : segments_of(res.segmentation)) {
        SegmentCost sc;
        sc.interval = iv;
        sc.value = cost(iv.s, iv.e);
        res.per_segment.push_back(sc);
    }
    return res;
}

// Single-changepoint total-loss curve: one point per candidate location tau
// in [d_m, n - d_m], value cost((0,tau]) + cost((tau,n]).
struct LossCurvePoint {
    int tau;
    double total;
};

inline std::vector<LossCurvePoint> loss_curve(const CostFn& cost, int n, int d_m) {
    if (d_m < 1 || 2 * d_m > n) throw InvalidConfigError("loss_curve: need 1 <= d_m and 2*d_m <= n");
    std::vector<LossCurvePoint> out;
    out.reserve(n - 2 * d_m + 1);
    for (int tau = d_m; tau <= n - d_m; ++tau) out.push_back({tau, cost(0, tau) + cost(tau, n)});
    return out;
}

inline int loss_curve_argmin(const std::vector<LossCurvePoint>& curve) {
    int best = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        if (curve[i].total < curve[best].total) best = static_cast<int>(i);
    return curve[best].tau;
}

} // namespace cpd
