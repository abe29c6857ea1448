#pragma once

#include <cmath>

#include "aelsvi/environment.hpp"

namespace aelsvi {

/// 2-D navigation with state-dependent actuation:
/// s' = clip(s + B(s) a), B(s) = diag(sin(s_2 / 10) + 4, 1.5 cos(s_1 / 10) - 2).
/// The raw reward is the negative l1 distance from s' to the goal (6, 9).
class Navigation final : public GenerativeEnv {
public:
    static constexpr double kRewardLow = -38.0;
    static constexpr int kDefaultHorizon = 25;
    static constexpr Index kActionBins = 10;

    explicit Navigation(int horizon = kDefaultHorizon) : horizon_(horizon) {
        if (horizon < 1) throw InvalidInput("navigation horizon must be >= 1");
        states_ = Box{VectorXd::Constant(2, -10.0), VectorXd::Constant(2, 10.0)};
        actions_ = Box{VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)};
        grid_ = product_grid(actions_, kActionBins);
        goal_ = VectorXd(2);
        goal_ << 6.0, 9.0;
    }

    [[nodiscard]] std::string name() const override { return "navigation"; }
    [[nodiscard]] int horizon() const override { return horizon_; }
    [[nodiscard]] const Box& state_bounds() const override { return states_; }
    [[nodiscard]] const Box& action_bounds() const override { return actions_; }
    [[nodiscard]] const MatrixXd& action_grid() const override { return grid_; }
    [[nodiscard]] std::pair<double, double> reward_bounds() const override { return {kRewardLow, 0.0}; }
    [[nodiscard]] const VectorXd& goal() const { return goal_; }

    /// Diagonal of B(s).
    [[nodiscard]] static VectorXd actuation(const VectorXd& s) {
        VectorXd b(2);
        b << std::sin(s[1] / 10.0) + 4.0, 1.5 * std::cos(s[0] / 10.0) - 2.0;
        return b;
    }

    [[nodiscard]] StepResult step(const VectorXd& s, const VectorXd& a, int, Rng&) const override {
        const VectorXd next = states_.clip(s + actuation(s).cwiseProduct(actions_.clip(a)));
        return {-(next - goal_).lpNorm<1>(), next};
    }

    [[nodiscard]] VectorXd sample_initial(InitialVariant variant, Rng& rng) const override {
        switch (variant) {
        case InitialVariant::Standard: return standard_start().sample(rng);
        case InitialVariant::Shifted: return shifted_start().sample(rng);
        case InitialVariant::Uniform: return states_.sample(rng);
        }
        return states_.sample(rng);
    }

    [[nodiscard]] static Box standard_start() {
        Box b{VectorXd(2), VectorXd(2)};
        b.lower << -8.0, -9.0;
        b.upper << -6.0, -6.0;
        return b;
    }

    [[nodiscard]] static Box shifted_start() {
        Box b{VectorXd(2), VectorXd(2)};
        b.lower << 1.0, 4.0;
        b.upper << 3.0, 7.0;
        return b;
    }

private:
    int horizon_;
    Box states_;
    Box actions_;
    MatrixXd grid_;
    VectorXd goal_;
};

} // namespace aelsvi
