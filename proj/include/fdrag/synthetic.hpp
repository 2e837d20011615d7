#pragma once

// Seeded synthetic embedding corpora and clustering agreement scores used by
// the convergence diagnostics.

#include <cmath>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fdrag/error.hpp"
#include "fdrag/rng.hpp"

namespace fdrag {

struct SyntheticCorpus {
    Eigen::MatrixXd x;        // N x D, unit rows
    std::vector<int> labels;  // generating cluster of each row
};

/// `k` unit vectors with pairwise cosine -1/(k-1) (vertices of a regular
/// simplex centred at the origin), randomly rotated. Needs k <= dim.
inline Eigen::MatrixXd equiangular_centers(int k, int dim, Rng& rng) {
    if (k > dim) throw InputError("equiangular_centers: more clusters than dimensions");
    Eigen::MatrixXd g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g(i, j) = standard_normal(rng);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Eigen::MatrixXd c = q.leftCols(k).transpose();  // k orthonormal rows
    if (k > 1) {
        const Eigen::RowVectorXd mean = c.colwise().mean();
        c.rowwise() -= mean;
        c.rowwise().normalize();
    }
    return c;
}

/// `clusters` Gaussian blobs of unit vectors around equiangular centers, isotropic noise of standard deviation `spread`, renormalized.
/// Rows are ordered round-robin over clusters.
inline SyntheticCorpus gaussian_blobs(int n, int dim, int clusters, double spread, std::uint64_t seed) {
    if (n < 1 || dim < 2 || clusters < 1) throw InputError("gaussian_blobs: invalid shape");
    Rng rng(seed);
    const Eigen::MatrixXd centers = equiangular_centers(clusters, dim, rng);
    SyntheticCorpus out;
    out.x.resize(n, dim);
    for (int i = 0; i < n; ++i) {
        const int c = i % clusters;
        for (int d = 0; d < dim; ++d) out.x(i, d) = centers(c, d) + spread * standard_normal(rng);
        out.x.row(i).normalize();
        out.labels.push_back(c);
    }
    return out;
}

/// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw InputError("adjusted_rand_index: label vectors differ in length");
    const auto choose2 = [](double v) { return v * (v - 1.0) / 2.0; };
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [k, v] : joint) sum_joint += choose2(v);
    for (const auto& [k, v] : ra) sum_a += choose2(v);
    for (const auto& [k, v] : rb) sum_b += choose2(v);
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = total > 0.0 ? sum_a * sum_b / total : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_joint - expected) / (max_index - expected);
}

} // namespace fdrag
