#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "aelsvi/contextual_bo.hpp"

namespace aelsvi::fixture {

/// f(x) = sum_i alpha_i k(x, z_i) with RKHS norm sqrt(alpha^T K_z alpha) rescaled to `norm`.
struct RkhsFunction {
    KernelSpec spec;
    MatrixXd centres;
    VectorXd alpha;

    [[nodiscard]] double operator()(const VectorXd& x) const {
        double v = 0.0;
        for (Index i = 0; i < centres.rows(); ++i) v += alpha[i] * kernel(spec, centres.row(i).transpose(), x);
        return v;
    }

    [[nodiscard]] double norm() const { return std::sqrt(alpha.dot(gram(spec, centres) * alpha)); }
};

inline RkhsFunction random_rkhs_function(const KernelSpec& spec, Index dim, Index terms, double norm, Rng& rng) {
    RkhsFunction f{spec, MatrixXd(terms, dim), VectorXd(terms)};
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < terms; ++i) {
        for (Index j = 0; j < dim; ++j) f.centres(i, j) = uniform01(rng);
        f.alpha[i] = normal(rng);
    }
    f.alpha *= norm / f.norm();
    return f;
}

/// 5 contexts in [0, 1] with 100 grid actions each, objective drawn from the
/// RKHS of a fixed SE kernel with norm 2.
struct RkhsSetup {
    BOTask task;
    BOSettings settings;
    RkhsFunction f;
};

inline RkhsSetup rkhs_setup(std::uint64_t seed, double noise_sd = 0.01) {
    Rng rng = make_stream(seed, "rkhs");
    const KernelSpec spec = KernelSpec::squared_exponential(VectorXd::Constant(2, 0.25));
    RkhsSetup out{BOTask{}, BOSettings{}, random_rkhs_function(spec, 2, 20, 2.0, rng)};
    out.task.name = "rkhs";
    out.task.contexts = equispaced_contexts(1, 5);
    out.task.action_box = Box{VectorXd::Zero(1), VectorXd::Ones(1)};
    out.task.action_grid = product_grid(out.task.action_box, 100);
    out.task.noise_sd = noise_sd;
    out.task.objective = [f = out.f](const VectorXd& s, const VectorXd& a) { return f(join(s, a)); };
    out.settings.kernel = spec;
    out.settings.lambda = 1.0;
    out.settings.standardize = false;
    out.settings.refit_every = 0;
    out.settings.beta.kind = BetaSchedule::Kind::Theory;
    out.settings.beta.rkhs_bound = 2.0;
    out.settings.beta.delta = 0.05;
    return out;
}

/// Runs AE-LSVI for `rounds` rounds and reports whether LCB <= f <= UCB held on
/// every grid point after initialization and after every round.
inline bool rkhs_coverage_run(std::uint64_t seed, Index rounds = 40) {
    RkhsSetup setup = rkhs_setup(seed);
    const BOTask& task = setup.task;
    const Index C = task.context_count();
    const Index G = task.action_grid.rows();
    MatrixXd truth(C, G);
    for (Index c = 0; c < C; ++c)
        for (Index g = 0; g < G; ++g) truth(c, g) = task.objective(task.context(c), task.action_grid.row(g).transpose());

    Rng rng = make_stream(seed, "agent");
    BOState state(task, setup.settings);
    state.initialize(rng);
    auto covered = [&](const BOBounds& b) { return (b.lcb.array() <= truth.array()).all() && (truth.array() <= b.ucb.array()).all(); };
    BOBounds b = state.bounds();
    if (!covered(b)) return false;
    for (Index t = 1; t <= rounds; ++t) {
        const BOChoice ch = bo_select(state, b);
        state.observe(ch.context, ch.action, rng);
        b = state.bounds();
        if (!covered(b)) return false;
    }
    return true;
}

} // namespace aelsvi::fixture
