#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "aelsvi/errors.hpp"
#include "aelsvi/kernel.hpp"
#include "aelsvi/kernel_model.hpp"

namespace aelsvi {

/// 0.5 ln |I + K_XX / lambda| for the given point set; 0 when X is empty.
inline double information_gain(const KernelSpec& spec, const MatrixXd& X, double lambda) {
    if (!(lambda > 0.0)) throw InvalidInput("information_gain: lambda must be positive");
    if (X.rows() == 0) return 0.0;
    MatrixXd A = gram(spec, X) / lambda;
    A.diagonal().array() += 1.0;
    const MatrixXd L = detail::cholesky_lower(A);
    return L.diagonal().array().log().sum();
}

struct GreedyGainResult {
    double gain = 0.0;
    std::vector<Index> chosen;      // pool row indices, in selection order
    std::vector<double> prefix_gain; // prefix_gain[t] = gain of the first t + 1 chosen points
};

/// Greedy maximization of the log-determinant information gain over a pool.
///
/// Each step adds the pool point with the largest posterior variance given
/// the points chosen so far (lowest index on ties), which is the point with
/// the largest marginal gain 0.5 ln(1 + var / lambda). Runs in O(T^2 |pool|).
inline GreedyGainResult greedy_information_gain(const KernelSpec& spec, const MatrixXd& pool, Index T, double lambda) {
    if (!(lambda > 0.0)) throw InvalidInput("greedy_information_gain: lambda must be positive");
    if (T < 0) throw InvalidInput("greedy_information_gain: T must be non-negative");
    GreedyGainResult result;
    if (T == 0) return result;
    if (pool.rows() == 0) throw InvalidInput("greedy_information_gain: empty pool");
    if (T > pool.rows()) throw InvalidInput("greedy_information_gain: T exceeds pool size");

    const Index P = pool.rows();
    VectorXd var = kernel_diag(spec, pool);
    // Row t holds L^{-1} k(chosen, pool) for the regularized chosen set.
    MatrixXd V(T, P);
    for (Index t = 0; t < T; ++t) {
        Index best = 0;
        for (Index j = 1; j < P; ++j)
            if (var[j] > var[best]) best = j;
        const double v = std::max(var[best], 0.0);
        result.gain += 0.5 * std::log1p(v / lambda);
        result.chosen.push_back(best);
        result.prefix_gain.push_back(result.gain);

        // Column t of the Cholesky factor of K + lambda I, evaluated at every pool point.
        const double pivot = std::sqrt(v + lambda);
        const VectorXd kcol = cross(spec, pool, pool.row(best));
        VectorXd row = kcol;
        if (t > 0) row.noalias() -= V.topRows(t).transpose() * V.col(best).head(t);
        row /= pivot;
        V.row(t) = row.transpose();
        // Posterior variance with noise lambda: var_j -= row_j^2.
        var.array() -= row.array().square();
    }
    return result;
}

} // namespace aelsvi
