#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "aelsvi/errors.hpp"
#include "aelsvi/kernel.hpp"
#include "aelsvi/rng.hpp"

namespace aelsvi {

enum class InitialVariant { Standard, Shifted, Uniform };

inline std::string_view to_string(InitialVariant v) {
    switch (v) {
    case InitialVariant::Standard: return "standard";
    case InitialVariant::Shifted: return "shifted";
    case InitialVariant::Uniform: return "uniform";
    }
    return "unknown";
}

inline InitialVariant parse_initial_variant(std::string_view name) {
    if (name == "standard") return InitialVariant::Standard;
    if (name == "shifted") return InitialVariant::Shifted;
    if (name == "uniform") return InitialVariant::Uniform;
    throw InvalidInput("unknown initial-state variant '" + std::string(name) + "'");
}

/// Axis-aligned box.
struct Box {
    VectorXd lower;
    VectorXd upper;

    [[nodiscard]] Index dim() const { return lower.size(); }
    [[nodiscard]] VectorXd width() const { return upper - lower; }

    [[nodiscard]] bool contains(const Eigen::Ref<const VectorXd>& x, double tol = 1e-9) const {
        if (x.size() != dim()) return false;
        return ((x.array() >= lower.array() - tol) && (x.array() <= upper.array() + tol)).all();
    }

    [[nodiscard]] VectorXd clip(const Eigen::Ref<const VectorXd>& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

    [[nodiscard]] VectorXd sample(Rng& rng) const {
        VectorXd x(dim());
        for (Index i = 0; i < dim(); ++i) x[i] = lower[i] + (upper[i] - lower[i]) * uniform01(rng);
        return x;
    }
};

/// Evenly spaced values including both endpoints.
inline VectorXd linspace(double lo, double hi, Index n) {
    if (n == 1) return VectorXd::Constant(1, 0.5 * (lo + hi));
    return VectorXd::LinSpaced(n, lo, hi);
}

/// Cartesian product of `bins` evenly spaced values per dimension of `box`;
/// the first dimension varies slowest.
inline MatrixXd product_grid(const Box& box, Index bins) {
    const Index d = box.dim();
    Index total = 1;
    for (Index i = 0; i < d; ++i) total *= bins;
    MatrixXd grid(total, d);
    for (Index row = 0; row < total; ++row) {
        Index rem = row;
        for (Index i = d - 1; i >= 0; --i) {
            const VectorXd axis = linspace(box.lower[i], box.upper[i], bins);
            grid(row, i) = axis[rem % bins];
            rem /= bins;
        }
    }
    return grid;
}

struct StepResult {
    double reward = 0.0; // raw, unscaled
    VectorXd next_state;
};

/// One generative-model sample: the learner picked (state, action) at step h.
struct Transition {
    VectorXd state;
    VectorXd action;
    double reward = 0.0; // scaled to [0, 1]
    VectorXd next_state;
};

/// Environment with generative access: step() can be queried at any state
/// within state_bounds() and any step h in [1, H].
class GenerativeEnv {
public:
    virtual ~GenerativeEnv() = default;

    [[nodiscard]] virtual std::string name() const = 0;
    [[nodiscard]] virtual int horizon() const = 0;
    [[nodiscard]] virtual const Box& state_bounds() const = 0;
    [[nodiscard]] virtual const Box& action_bounds() const = 0;
    /// Finite action set used for every max/argmax over actions; rows are actions.
    [[nodiscard]] virtual const MatrixXd& action_grid() const = 0;
    /// Raw reward range [r_lo, r_hi] used for scaling.
    [[nodiscard]] virtual std::pair<double, double> reward_bounds() const = 0;
    [[nodiscard]] virtual StepResult step(const VectorXd& s, const VectorXd& a, int h, Rng& rng) const = 0;
    [[nodiscard]] virtual VectorXd sample_initial(InitialVariant variant, Rng& rng) const = 0;

    /// States scored by the generative acquisition rules. Continuous
    /// environments draw `count` uniform samples from state_bounds().
    [[nodiscard]] virtual MatrixXd candidate_states(Index count, Rng& rng) const {
        MatrixXd out(count, state_dim());
        for (Index i = 0; i < count; ++i) out.row(i) = state_bounds().sample(rng).transpose();
        return out;
    }

    /// Uniform draw over the whole state space.
    [[nodiscard]] virtual VectorXd sample_state(Rng& rng) const { return state_bounds().sample(rng); }

    [[nodiscard]] Index state_dim() const { return state_bounds().dim(); }
    [[nodiscard]] Index action_dim() const { return action_grid().cols(); }

    [[nodiscard]] double scale_reward(double raw) const {
        const auto [lo, hi] = reward_bounds();
        return std::clamp((raw - lo) / (hi - lo), 0.0, 1.0);
    }

    /// Step with validation and reward scaling.
    [[nodiscard]] Transition transition(const VectorXd& s, const VectorXd& a, int h, Rng& rng) const {
        if (h < 1 || h > horizon()) throw InvalidInput("step index h out of range");
        if (!state_bounds().contains(s)) throw InvalidInput("state outside environment bounds");
        if (a.size() != action_dim()) throw InvalidInput("action dimension mismatch");
        StepResult r = step(s, a, h, rng);
        return Transition{s, a, scale_reward(r.reward), std::move(r.next_state)};
    }
};

} // namespace aelsvi
