#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>

#include "aelsvi/kernel.hpp"
#include "aelsvi/kernel_model.hpp"

namespace aelsvi {

/// Log marginal likelihood of y under a zero-mean GP with kernel k and noise
/// variance lambda.
inline double log_marginal_likelihood(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y, double lambda) {
    const Index n = X.rows();
    if (n == 0) return 0.0;
    MatrixXd A = gram(spec, X);
    A.diagonal().array() += lambda;
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const VectorXd z = llt.matrixL().solve(y);
    const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * z.squaredNorm() - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

/// Grid for the per-dimension lengthscale search: `grid_points` log-spaced
/// multipliers in [low_factor, high_factor], applied to each input range.
struct LengthscaleSearch {
    int grid_points = 9;
    double low_factor = 0.1;
    double high_factor = 10.0;

    [[nodiscard]] VectorXd multipliers() const {
        VectorXd m(grid_points);
        if (grid_points == 1) {
            m[0] = std::sqrt(low_factor * high_factor);
            return m;
        }
        const double lo = std::log10(low_factor);
        const double hi = std::log10(high_factor);
        for (int i = 0; i < grid_points; ++i) m[i] = std::pow(10.0, lo + (hi - lo) * i / (grid_points - 1));
        return m;
    }
};

/// Lengthscales at the geometric centre of the search grid.
inline VectorXd default_lengthscales(const VectorXd& ranges, const LengthscaleSearch& search = {}) {
    return ranges * std::sqrt(search.low_factor * search.high_factor);
}

/// One sweep of coordinate search over SE lengthscales, maximizing the
/// marginal likelihood. Dimensions are visited in order; each keeps its
/// current value unless a grid value is strictly better. Non-SE specs are
/// returned unchanged.
inline KernelSpec coordinate_search(const KernelSpec& start, const MatrixXd& X, const VectorXd& y, double lambda,
                                    const VectorXd& ranges, const LengthscaleSearch& search = {}) {
    if (start.family != KernelFamily::SquaredExponential || X.rows() == 0) return start;
    if (ranges.size() != start.lengthscales.size()) throw InvalidInput("coordinate_search: ranges dimension mismatch");
    const VectorXd mult = search.multipliers();
    KernelSpec best = start;
    double best_ll = log_marginal_likelihood(best, X, y, lambda);
    for (Index d = 0; d < best.lengthscales.size(); ++d) {
        const double range = ranges[d] > 0.0 ? ranges[d] : 1.0;
        KernelSpec trial = best;
        for (Index i = 0; i < mult.size(); ++i) {
            trial.lengthscales[d] = range * mult[i];
            const double ll = log_marginal_likelihood(trial, X, y, lambda);
            if (ll > best_ll) {
                best_ll = ll;
                best.lengthscales[d] = trial.lengthscales[d];
            }
        }
    }
    return best;
}

} // namespace aelsvi
