#pragma once

// Independent reference computations shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

/// Nearest simplex point to v by grid search: the full grid at step 0.1, then
/// repeated +-3-step boxes around the incumbent at steps 0.03, 0.01, ... down
/// to `final_step`.
inline Eigen::VectorXd grid_project(const Eigen::VectorXd& v, double final_step = 1e-4) {
    const int n = static_cast<int>(v.size());
    Eigen::VectorXd best = Eigen::VectorXd::Constant(n, 1.0 / n);
    double best_cost = (best - v).squaredNorm();
    auto consider = [&](const Eigen::VectorXd& x) {
        const double c = (x - v).squaredNorm();
        if (c < best_cost) {
            best_cost = c;
            best = x;
        }
    };
    // Level 0: every grid point with spacing 0.1.
    {
        Eigen::VectorXd x(n);
        std::function<void(int, int)> rec = [&](int i, int left) {
            if (i == n - 1) {
                x[i] = left * 0.1;
                consider(x);
                return;
            }
            for (int k = 0; k <= left; ++k) {
                x[i] = k * 0.1;
                rec(i + 1, left - k);
            }
        };
        rec(0, 10);
    }
    for (double step = 0.03; step >= final_step * 0.999; step /= 3.0) {
        const Eigen::VectorXd center = best;
        Eigen::VectorXd x(n);
        std::function<void(int, double)> rec = [&](int i, double used) {
            if (i == n - 1) {
                x[i] = 1.0 - used;
                if (x[i] >= -1e-15) {
                    x[i] = std::max(x[i], 0.0);
                    consider(x);
                }
                return;
            }
            for (int k = -3; k <= 3; ++k) {
                x[i] = center[i] + k * step;
                if (x[i] < 0.0) continue;
                rec(i + 1, used + x[i]);
            }
        };
        rec(0, 0.0);
    }
    return best;
}

/// Optimality conditions of the simplex projection: feasibility and a common
/// threshold theta with x_i = v_i - theta on the support, v_i <= theta off it.
inline bool simplex_kkt(const Eigen::VectorXd& v, const Eigen::VectorXd& x, double tol = 1e-12) {
    if ((x.array() < 0.0).any()) return false;
    if (std::abs(x.sum() - 1.0) > tol) return false;
    double theta = 0.0;
    int support = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] > 0.0) {
            theta += v[i] - x[i];
            ++support;
        }
    if (support == 0) return false;
    theta /= support;
    const double scale = tol * (1.0 + v.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0 && std::abs(v[i] - x[i] - theta) > scale) return false;
        if (x[i] == 0.0 && v[i] - theta > scale) return false;
    }
    return true;
}

/// Plain-loop weighted mean of rows of x with weights h(:, m).
inline Eigen::VectorXd weighted_mean(const Eigen::MatrixXd& h, const Eigen::MatrixXd& x, Eigen::Index m) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.cols());
    double mass = 1e-12;
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
        for (Eigen::Index d = 0; d < x.cols(); ++d) acc[d] += h(n, m) * x(n, d);
        mass += h(n, m);
    }
    return acc / mass;
}

/// Central difference of f along one coordinate of h.
inline double central_difference(const std::function<double(const Eigen::MatrixXd&)>& f, Eigen::MatrixXd h, Eigen::Index r,
                                 Eigen::Index c, double step = 1e-5) {
    const double orig = h(r, c);
    h(r, c) = orig + step;
    const double up = f(h);
    h(r, c) = orig - step;
    const double down = f(h);
    return (up - down) / (2.0 * step);
}

/// Least-squares slope of y against x.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

} // namespace oracle
