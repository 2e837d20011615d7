#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace fdrag {

/// Euclidean projection onto the probability simplex {x >= 0, sum x = 1}
/// by sort-and-threshold: with v sorted descending, take the largest k such
/// that v_k - (sum_{i<=k} v_i - 1)/k > 0, then subtract that threshold and
/// clip at zero.
inline Eigen::VectorXd project_to_simplex(const Eigen::Ref<const Eigen::VectorXd>& v) {
    const Eigen::Index n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cumsum += u[static_cast<std::size_t>(k)];
        const double t = (cumsum - 1.0) / static_cast<double>(k + 1);
        if (u[static_cast<std::size_t>(k)] - t > 0.0) theta = t;
    }
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = std::max(v[i] - theta, 0.0);
    return x;
}

/// Row-wise projection of a matrix.
inline Eigen::MatrixXd project_rows_to_simplex(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    Eigen::MatrixXd out(m.rows(), m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.row(r) = project_to_simplex(m.row(r).transpose()).transpose();
    return out;
}

} // namespace fdrag
