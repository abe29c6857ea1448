#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <string>
#include <string_view>

#include "aelsvi/errors.hpp"

namespace aelsvi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class KernelFamily { SquaredExponential, Linear, Delta };

inline std::string_view to_string(KernelFamily family) {
    switch (family) {
    case KernelFamily::SquaredExponential: return "se";
    case KernelFamily::Linear: return "linear";
    case KernelFamily::Delta: return "delta";
    }
    return "unknown";
}

inline KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "se" || name == "squared_exponential") return KernelFamily::SquaredExponential;
    if (name == "linear") return KernelFamily::Linear;
    if (name == "delta") return KernelFamily::Delta;
    throw InvalidInput("unknown kernel family '" + std::string(name) + "'");
}

/// Kernel family plus its hyperparameters.
///
/// Squared exponential: k(x, y) = s * exp(-0.5 * sum_d ((x_d - y_d) / l_d)^2),
/// with one lengthscale per input dimension. Linear: k(x, y) = x . y.
/// Delta: 1 when the two inputs have bitwise-identical encodings, else 0.
struct KernelSpec {
    KernelFamily family = KernelFamily::SquaredExponential;
    VectorXd lengthscales;
    double signal_variance = 1.0;

    static KernelSpec squared_exponential(VectorXd lengthscales, double signal_variance = 1.0) {
        KernelSpec spec;
        spec.family = KernelFamily::SquaredExponential;
        spec.lengthscales = std::move(lengthscales);
        spec.signal_variance = signal_variance;
        spec.validate();
        return spec;
    }

    static KernelSpec linear() {
        KernelSpec spec;
        spec.family = KernelFamily::Linear;
        return spec;
    }

    static KernelSpec delta() {
        KernelSpec spec;
        spec.family = KernelFamily::Delta;
        return spec;
    }

    void validate() const {
        if (family != KernelFamily::SquaredExponential) return;
        if (lengthscales.size() == 0) throw InvalidInput("squared exponential kernel needs lengthscales");
        for (Index i = 0; i < lengthscales.size(); ++i) {
            if (!(lengthscales[i] > 0.0) || !std::isfinite(lengthscales[i]))
                throw InvalidInput("lengthscales must be strictly positive and finite");
        }
        if (!(signal_variance > 0.0)) throw InvalidInput("signal variance must be positive");
    }

    // Input dimension enforced by the kernel, or -1 if any dimension is accepted.
    [[nodiscard]] Index dim() const {
        return family == KernelFamily::SquaredExponential ? lengthscales.size() : -1;
    }

    void check_dim(Index d) const {
        if (dim() >= 0 && dim() != d)
            throw InvalidInput("kernel expects dimension " + std::to_string(dim()) + ", got " + std::to_string(d));
    }

    bool operator==(const KernelSpec& other) const {
        return family == other.family && signal_variance == other.signal_variance &&
               lengthscales.size() == other.lengthscales.size() && lengthscales == other.lengthscales;
    }
};

namespace detail {

inline bool bitwise_equal(const double* a, const double* b, Index n) {
    return std::memcmp(a, b, sizeof(double) * static_cast<std::size_t>(n)) == 0;
}

// Pairwise squared distances between rows of A and B after scaling column d by 1/l_d.
inline MatrixXd scaled_sqdist(const MatrixXd& A, const MatrixXd& B, const VectorXd& lengthscales) {
    const auto inv = lengthscales.cwiseInverse().asDiagonal();
    const MatrixXd As = A * inv;
    const MatrixXd Bs = B * inv;
    MatrixXd D = -2.0 * As * Bs.transpose();
    D.colwise() += As.rowwise().squaredNorm();
    D.rowwise() += Bs.rowwise().squaredNorm().transpose();
    return D.cwiseMax(0.0);
}

} // namespace detail

inline double kernel(const KernelSpec& spec, const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& y) {
    if (x.size() != y.size()) throw InvalidInput("kernel inputs differ in dimension");
    spec.check_dim(x.size());
    switch (spec.family) {
    case KernelFamily::SquaredExponential:
        return spec.signal_variance * std::exp(-0.5 * (x - y).cwiseQuotient(spec.lengthscales).squaredNorm());
    case KernelFamily::Linear:
        return x.dot(y);
    case KernelFamily::Delta: {
        const VectorXd xc = x;
        const VectorXd yc = y;
        return detail::bitwise_equal(xc.data(), yc.data(), xc.size()) ? 1.0 : 0.0;
    }
    }
    return 0.0;
}

/// k(A_i, B_j) for rows A_i, B_j.
inline MatrixXd cross(const KernelSpec& spec, const MatrixXd& A, const MatrixXd& B) {
    if (A.rows() > 0 && B.rows() > 0 && A.cols() != B.cols())
        throw InvalidInput("cross kernel: point sets differ in dimension");
    if (A.rows() > 0) spec.check_dim(A.cols());
    if (B.rows() > 0) spec.check_dim(B.cols());
    switch (spec.family) {
    case KernelFamily::SquaredExponential:
        if (A.rows() == 0 || B.rows() == 0) return MatrixXd(A.rows(), B.rows());
        return spec.signal_variance * (-0.5 * detail::scaled_sqdist(A, B, spec.lengthscales)).array().exp().matrix();
    case KernelFamily::Linear:
        return A * B.transpose();
    case KernelFamily::Delta: {
        // Row-major copies so each point is contiguous for the bitwise compare.
        using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        const RowMajor Ar = A;
        const RowMajor Br = B;
        MatrixXd K(A.rows(), B.rows());
        for (Index i = 0; i < A.rows(); ++i)
            for (Index j = 0; j < B.rows(); ++j)
                K(i, j) = detail::bitwise_equal(Ar.row(i).data(), Br.row(j).data(), A.cols()) ? 1.0 : 0.0;
        return K;
    }
    }
    return {};
}

inline MatrixXd gram(const KernelSpec& spec, const MatrixXd& X) {
    MatrixXd K = cross(spec, X, X);
    // Exact symmetry regardless of floating-point ordering in the product.
    K = 0.5 * (K + K.transpose()).eval();
    return K;
}

/// k(x, x) for every row x of X.
inline VectorXd kernel_diag(const KernelSpec& spec, const MatrixXd& X) {
    if (X.rows() > 0) spec.check_dim(X.cols());
    switch (spec.family) {
    case KernelFamily::SquaredExponential: return VectorXd::Constant(X.rows(), spec.signal_variance);
    case KernelFamily::Linear: return X.rowwise().squaredNorm();
    case KernelFamily::Delta: return VectorXd::Ones(X.rows());
    }
    return {};
}

/// Cross kernel between the product grid {(s_c, a_g)} and the rows of X, where
/// each row of X is a concatenated (state, action) point.
///
/// Output row c * G + g holds k((s_c, a_g), X_i). Every supported family
/// factorizes over the state/action split, so this costs one product per
/// entry instead of a full kernel evaluation.
inline MatrixXd cross_grid(const KernelSpec& spec, const MatrixXd& states, const MatrixXd& actions, const MatrixXd& X) {
    const Index C = states.rows();
    const Index G = actions.rows();
    const Index ds = states.cols();
    const Index da = actions.cols();
    if (X.rows() > 0 && X.cols() != ds + da) throw InvalidInput("cross_grid: data dimension mismatch");
    spec.check_dim(ds + da);
    MatrixXd out(C * G, X.rows());
    if (X.rows() == 0 || C * G == 0) return out;

    const MatrixXd Xs = X.leftCols(ds);
    const MatrixXd Xa = X.rightCols(da);
    switch (spec.family) {
    case KernelFamily::SquaredExponential: {
        const MatrixXd Ks = (-0.5 * detail::scaled_sqdist(states, Xs, spec.lengthscales.head(ds))).array().exp().matrix();
        const MatrixXd Ka = spec.signal_variance *
                            (-0.5 * detail::scaled_sqdist(actions, Xa, spec.lengthscales.tail(da))).array().exp().matrix();
        for (Index c = 0; c < C; ++c)
            out.middleRows(c * G, G) = Ka.array().rowwise() * Ks.row(c).array();
        break;
    }
    case KernelFamily::Linear: {
        const MatrixXd Ks = states * Xs.transpose();
        const MatrixXd Ka = actions * Xa.transpose();
        for (Index c = 0; c < C; ++c)
            out.middleRows(c * G, G) = Ka.rowwise() + Ks.row(c);
        break;
    }
    case KernelFamily::Delta: {
        KernelSpec d = KernelSpec::delta();
        const MatrixXd Ks = cross(d, states, Xs);
        const MatrixXd Ka = cross(d, actions, Xa);
        for (Index c = 0; c < C; ++c)
            out.middleRows(c * G, G) = Ka.array().rowwise() * Ks.row(c).array();
        break;
    }
    }
    return out;
}

/// kernel_diag of the product grid, in the same row order as cross_grid.
inline VectorXd kernel_diag_grid(const KernelSpec& spec, const MatrixXd& states, const MatrixXd& actions) {
    const Index C = states.rows();
    const Index G = actions.rows();
    VectorXd out(C * G);
    if (spec.family == KernelFamily::Linear) {
        const VectorXd ns = states.rowwise().squaredNorm();
        const VectorXd na = actions.rowwise().squaredNorm();
        for (Index c = 0; c < C; ++c) out.segment(c * G, G) = na.array() + ns[c];
    } else {
        out.setConstant(spec.family == KernelFamily::SquaredExponential ? spec.signal_variance : 1.0);
    }
    return out;
}

/// Concatenate a state and an action into a regression input.
inline VectorXd join(const Eigen::Ref<const VectorXd>& s, const Eigen::Ref<const VectorXd>& a) {
    VectorXd x(s.size() + a.size());
    x << s, a;
    return x;
}

} // namespace aelsvi
