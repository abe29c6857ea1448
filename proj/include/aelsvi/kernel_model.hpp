#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aelsvi/errors.hpp"
#include "aelsvi/kernel.hpp"

namespace aelsvi {

using TargetMap = std::map<std::string, VectorXd>;

// Strict enforces lambda >= 1. Relaxed accepts any lambda > 0 and exists for
// oracle checks that need the near-interpolating limit.
enum class LambdaCheck { Strict, Relaxed };

// Variances in (-kVarianceClampTolerance, 0) are rounding noise and are clamped to 0.
inline constexpr double kVarianceClampTolerance = 1e-10;

inline void check_lambda(double lambda, LambdaCheck check) {
    if (check == LambdaCheck::Strict && !(lambda >= 1.0))
        throw InvalidInput("regularization lambda must be >= 1, got " + std::to_string(lambda));
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidInput("regularization lambda must be positive");
}

namespace detail {

inline double clamp_variance(double var, double scale) {
    if (var >= 0.0) return var;
    if (var > -kVarianceClampTolerance * std::max(1.0, scale)) return 0.0;
    std::ostringstream msg;
    msg << "negative posterior variance " << var << " beyond round-off";
    throw NumericalError(msg.str());
}

inline MatrixXd cholesky_lower(const MatrixXd& A) {
    Eigen::LLT<MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "Cholesky failed on " << A.rows() << "x" << A.cols() << " matrix (min diag "
            << (A.rows() ? A.diagonal().minCoeff() : 0.0) << ")";
        throw NumericalError(msg.str());
    }
    return llt.matrixL();
}

} // namespace detail

/// Posterior quantities at a batch of query points.
struct Prediction {
    MatrixXd mean; // queries x labels, columns in label order
    VectorXd sd;   // sigma(x) including the lambda^{-1/2} factor
};

/// Kernel ridge regression posterior with Cholesky factor L, L L^T = K + lambda I.
///
/// Several target vectors can share one factorization; each is addressed by
/// label. sd(x) = lambda^{-1/2} (k(x,x) - k_n(x)^T (K + lambda I)^{-1} k_n(x))^{1/2}.
/// Values are immutable: extend() and with_targets() return new models.
class KernelModel {
public:
    KernelModel() = default;

    /// Model with no observations. Mean is 0 and sd is sqrt(k(x,x) / lambda).
    static KernelModel prior(KernelSpec spec, Index dim, double lambda, const std::vector<std::string>& labels,
                             LambdaCheck check = LambdaCheck::Strict) {
        TargetMap targets;
        for (const auto& label : labels) targets[label] = VectorXd();
        return fit(std::move(spec), MatrixXd(0, dim), targets, lambda, check);
    }

    static KernelModel fit(KernelSpec spec, const MatrixXd& X, const TargetMap& targets, double lambda,
                           LambdaCheck check = LambdaCheck::Strict) {
        check_lambda(lambda, check);
        spec.validate();
        if (X.rows() > 0) spec.check_dim(X.cols());
        MatrixXd A = gram(spec, X);
        A.diagonal().array() += lambda;
        MatrixXd L = detail::cholesky_lower(A);
        return from_factor(std::move(spec), lambda, X, std::move(L), targets);
    }

    /// Build from an existing factor of K + lambda I over X. The caller owns
    /// the correctness of the factor; only shapes are checked.
    static KernelModel from_factor(KernelSpec spec, double lambda, MatrixXd X, MatrixXd L, const TargetMap& targets) {
        if (L.rows() != X.rows() || L.cols() != X.rows()) throw InvalidInput("factor shape does not match inputs");
        KernelModel m;
        m.spec_ = std::move(spec);
        m.lambda_ = lambda;
        m.inputs_ = std::move(X);
        m.chol_ = std::move(L);
        m.targets_.resize(m.inputs_.rows(), static_cast<Index>(targets.size()));
        Index col = 0;
        for (const auto& [label, y] : targets) {
            if (y.size() != m.inputs_.rows())
                throw InvalidInput("target '" + label + "' has " + std::to_string(y.size()) + " entries for " +
                                   std::to_string(m.inputs_.rows()) + " inputs");
            m.labels_.push_back(label);
            m.targets_.col(col++) = y;
        }
        m.solve_weights();
        return m;
    }

    /// Same model with one more observation, via a rank-one extension of L.
    /// y_new must supply a value for every label.
    [[nodiscard]] KernelModel extend(const VectorXd& x_new, const std::map<std::string, double>& y_new) const {
        if (x_new.size() != dim()) throw InvalidInput("extend: point dimension mismatch");
        spec_.check_dim(x_new.size());
        const Index n = size();
        KernelModel m;
        m.spec_ = spec_;
        m.lambda_ = lambda_;
        m.labels_ = labels_;

        const VectorXd kx = n > 0 ? VectorXd(cross(spec_, inputs_, x_new.transpose())) : VectorXd(0);
        const double c = kernel(spec_, x_new, x_new) + lambda_;
        const VectorXd l = n > 0 ? VectorXd(chol_.triangularView<Eigen::Lower>().solve(kx)) : VectorXd(0);
        const double pivot = c - l.squaredNorm();
        if (!(pivot > 0.0)) {
            std::ostringstream msg;
            msg << "rank-one Cholesky extension lost positive definiteness (pivot " << pivot << ", n=" << n << ")";
            throw NumericalError(msg.str());
        }
        m.chol_ = MatrixXd::Zero(n + 1, n + 1);
        m.chol_.topLeftCorner(n, n) = chol_;
        m.chol_.block(n, 0, 1, n) = l.transpose();
        m.chol_(n, n) = std::sqrt(pivot);

        m.inputs_.resize(n + 1, dim());
        m.inputs_.topRows(n) = inputs_;
        m.inputs_.row(n) = x_new.transpose();

        m.targets_.resize(n + 1, targets_.cols());
        m.targets_.topRows(n) = targets_;
        for (Index j = 0; j < static_cast<Index>(labels_.size()); ++j) {
            auto it = y_new.find(labels_[j]);
            if (it == y_new.end()) throw InvalidInput("extend: missing value for label '" + labels_[j] + "'");
            m.targets_(n, j) = it->second;
        }
        m.solve_weights();
        return m;
    }

    /// Same inputs and factor, new target vectors.
    [[nodiscard]] KernelModel with_targets(const TargetMap& targets) const {
        return from_factor(spec_, lambda_, inputs_, chol_, targets);
    }

    [[nodiscard]] double mean(const std::string& label, const Eigen::Ref<const VectorXd>& x) const {
        const Index j = label_index(label);
        if (size() == 0) return 0.0;
        check_point(x);
        const VectorXd kx = cross(spec_, inputs_, x.transpose());
        return kx.dot(alpha_.col(j));
    }

    [[nodiscard]] double sd(const Eigen::Ref<const VectorXd>& x) const {
        check_point(x);
        const double kxx = kernel(spec_, x, x);
        if (size() == 0) return std::sqrt(std::max(kxx, 0.0) / lambda_);
        const VectorXd kx = cross(spec_, inputs_, x.transpose());
        const VectorXd v = chol_.triangularView<Eigen::Lower>().solve(kx);
        return std::sqrt(detail::clamp_variance(kxx - v.squaredNorm(), kxx) / lambda_);
    }

    /// Batch posterior at the rows of Xq.
    [[nodiscard]] Prediction predict(const MatrixXd& Xq) const {
        if (Xq.rows() > 0 && Xq.cols() != dim()) throw InvalidInput("predict: query dimension mismatch");
        const MatrixXd Kq = size() > 0 ? cross(spec_, Xq, inputs_) : MatrixXd(Xq.rows(), 0);
        return finish(Kq, kernel_diag(spec_, Xq));
    }

    /// Batch posterior at every (state, action) pair of a product grid; row
    /// c * G + g corresponds to (states.row(c), actions.row(g)).
    [[nodiscard]] Prediction predict_grid(const MatrixXd& states, const MatrixXd& actions) const {
        if (states.cols() + actions.cols() != dim()) throw InvalidInput("predict_grid: dimension mismatch");
        const MatrixXd Kq = size() > 0 ? cross_grid(spec_, states, actions, inputs_)
                                       : MatrixXd(states.rows() * actions.rows(), 0);
        return finish(Kq, kernel_diag_grid(spec_, states, actions));
    }

    /// ln |K + lambda I| from the factor.
    [[nodiscard]] double log_det() const { return 2.0 * chol_.diagonal().array().log().sum(); }

    /// Realized information gain 0.5 ln |I + K / lambda| of the stored inputs.
    [[nodiscard]] double information_gain() const {
        return 0.5 * log_det() - 0.5 * static_cast<double>(size()) * std::log(lambda_);
    }

    [[nodiscard]] Index size() const { return inputs_.rows(); }
    [[nodiscard]] Index dim() const { return inputs_.cols(); }
    [[nodiscard]] double lambda() const { return lambda_; }
    [[nodiscard]] const KernelSpec& spec() const { return spec_; }
    [[nodiscard]] const MatrixXd& inputs() const { return inputs_; }
    [[nodiscard]] const MatrixXd& chol() const { return chol_; }
    [[nodiscard]] const std::vector<std::string>& labels() const { return labels_; }
    [[nodiscard]] VectorXd weights(const std::string& label) const { return alpha_.col(label_index(label)); }
    [[nodiscard]] VectorXd targets(const std::string& label) const { return targets_.col(label_index(label)); }
    [[nodiscard]] const MatrixXd& weight_matrix() const { return alpha_; }
    [[nodiscard]] bool has_label(const std::string& label) const {
        return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
    }

    [[nodiscard]] Index label_index(const std::string& label) const {
        auto it = std::find(labels_.begin(), labels_.end(), label);
        if (it == labels_.end()) throw InvalidInput("unknown target label '" + label + "'");
        return static_cast<Index>(it - labels_.begin());
    }

private:
    void check_point(const Eigen::Ref<const VectorXd>& x) const {
        if (x.size() != dim()) throw InvalidInput("query dimension mismatch");
    }

    void solve_weights() {
        alpha_ = targets_;
        if (size() == 0) return;
        chol_.triangularView<Eigen::Lower>().solveInPlace(alpha_);
        chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
    }

    [[nodiscard]] Prediction finish(const MatrixXd& Kq, const VectorXd& kdiag) const {
        Prediction p;
        const Index q = kdiag.size();
        p.sd.resize(q);
        if (size() == 0) {
            p.mean = MatrixXd::Zero(q, targets_.cols());
            for (Index i = 0; i < q; ++i) p.sd[i] = std::sqrt(std::max(kdiag[i], 0.0) / lambda_);
            return p;
        }
        p.mean = Kq * alpha_;
        MatrixXd V = Kq.transpose();
        chol_.triangularView<Eigen::Lower>().solveInPlace(V);
        const VectorXd reduction = V.colwise().squaredNorm().transpose();
        for (Index i = 0; i < q; ++i)
            p.sd[i] = std::sqrt(detail::clamp_variance(kdiag[i] - reduction[i], kdiag[i]) / lambda_);
        return p;
    }

    KernelSpec spec_;
    double lambda_ = 1.0;
    MatrixXd inputs_;
    MatrixXd chol_;
    std::vector<std::string> labels_;
    MatrixXd targets_;
    MatrixXd alpha_;
};

} // namespace aelsvi
