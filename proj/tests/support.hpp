#pragma once

#include "cpd/core.hpp"
#include "cpd/rng.hpp"

#include <vector>

namespace cpdtest {

inline cpd::MatrixXd random_matrix(cpd::Rng& rng, int n, int p) {
    cpd::MatrixXd X(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
    return X;
}

inline cpd::VectorXd random_vector(cpd::Rng& rng, int n) {
    cpd::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

// Sparse coefficient vector with the given support size, entries +-1-ish.
inline cpd::VectorXd sparse_coef(cpd::Rng& rng, int p, int support) {
    cpd::VectorXd f = cpd::VectorXd::Zero(p);
    for (int j = 0; j < support && j < p; ++j) f[j] = (j % 2 == 0 ? 1.0 : -1.0) * (0.5 + rng.uniform());
    return f;
}

inline std::vector<int> iota_rows(int lo, int hi) { // [lo, hi)
    std::vector<int> rows;
    rows.reserve(hi - lo);
    for (int r = lo; r < hi; ++r) rows.push_back(r);
    return rows;
}

} // namespace cpdtest
