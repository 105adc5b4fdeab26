#pragma once

#include <Eigen/Core>

#include <algorithm>

namespace airgap {

// Row-major so one matrix row is one batch example, contiguous in memory.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

inline Vec clip01(const Vec& v) {
    return v.cwiseMax(0.0).cwiseMin(1.0);
}

// argmax over a row, lowest index on ties.
inline Index argmax_row(const Mat& m, Index row) {
    Index best = 0;
    double best_v = m(row, 0);
    for (Index j = 1; j < m.cols(); ++j) {
        if (m(row, j) > best_v) {
            best_v = m(row, j);
            best = j;
        }
    }
    return best;
}

}  // namespace airgap
