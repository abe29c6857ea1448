#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "aelsvi/environment.hpp"

namespace aelsvi {

struct CartpoleParams {
    double cart_mass = 1.0;
    double pole_mass = 0.1;
    double half_length = 0.5; // pivot to centre of mass; the tip is at 2 * half_length
    double gravity = 9.8;
    double dt = 0.1;
    int substeps = 4; // RK4 steps per dt
    double force_bound = 10.0;
    int horizon = 25;
    double start_sd = 0.02;
    double shift = 5.0;
};

/// Cart-pole swing-up with dense reward.
///
/// State (x, x_dot, theta, theta_dot) with theta = 0 upright and theta = pi
/// hanging down; theta is wrapped to [-pi, pi). The raw reward is the negative
/// Euclidean distance from the pole tip to the upright tip position above x = 0.
class Cartpole final : public GenerativeEnv {
public:
    static constexpr Index kActionBins = 10;

    explicit Cartpole(CartpoleParams params = {}) : p_(params) {
        if (p_.horizon < 1 || p_.substeps < 1 || !(p_.dt > 0.0)) throw InvalidInput("invalid cartpole parameters");
        states_ = Box{VectorXd(4), VectorXd(4)};
        states_.lower << -10.0, -10.0, -std::numbers::pi, -15.0;
        states_.upper << 10.0, 10.0, std::numbers::pi, 15.0;
        actions_ = Box{VectorXd::Constant(1, -p_.force_bound), VectorXd::Constant(1, p_.force_bound)};
        grid_ = product_grid(actions_, kActionBins);
    }

    [[nodiscard]] std::string name() const override { return "cartpole"; }
    [[nodiscard]] int horizon() const override { return p_.horizon; }
    [[nodiscard]] const Box& state_bounds() const override { return states_; }
    [[nodiscard]] const Box& action_bounds() const override { return actions_; }
    [[nodiscard]] const MatrixXd& action_grid() const override { return grid_; }
    [[nodiscard]] const CartpoleParams& params() const { return p_; }

    [[nodiscard]] std::pair<double, double> reward_bounds() const override {
        // Farthest tip: cart at a position bound, pole hanging down.
        const double reach = 2.0 * p_.half_length;
        const double dx = states_.upper[0] + reach;
        return {-std::hypot(dx, 2.0 * reach), 0.0};
    }

    /// Time derivative of the state under a constant force.
    [[nodiscard]] Eigen::Vector4d derivative(const Eigen::Vector4d& s, double force) const {
        const double total = p_.cart_mass + p_.pole_mass;
        const double pml = p_.pole_mass * p_.half_length;
        const double sin_t = std::sin(s[2]);
        const double cos_t = std::cos(s[2]);
        const double temp = (force + pml * s[3] * s[3] * sin_t) / total;
        const double theta_acc = (p_.gravity * sin_t - cos_t * temp) /
                                 (p_.half_length * (4.0 / 3.0 - p_.pole_mass * cos_t * cos_t / total));
        const double x_acc = temp - pml * theta_acc * cos_t / total;
        return {s[1], x_acc, s[3], theta_acc};
    }

    /// Unclipped, unwrapped RK4 integration over one dt.
    [[nodiscard]] Eigen::Vector4d integrate(const Eigen::Vector4d& s0, double force) const {
        const double h = p_.dt / p_.substeps;
        Eigen::Vector4d s = s0;
        for (int i = 0; i < p_.substeps; ++i) {
            const Eigen::Vector4d k1 = derivative(s, force);
            const Eigen::Vector4d k2 = derivative(s + 0.5 * h * k1, force);
            const Eigen::Vector4d k3 = derivative(s + 0.5 * h * k2, force);
            const Eigen::Vector4d k4 = derivative(s + h * k3, force);
            s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        return s;
    }

    [[nodiscard]] static double wrap_angle(double theta) {
        const double two_pi = 2.0 * std::numbers::pi;
        double w = std::fmod(theta + std::numbers::pi, two_pi);
        if (w < 0.0) w += two_pi;
        return w - std::numbers::pi;
    }

    [[nodiscard]] double raw_reward(const VectorXd& s) const {
        const double reach = 2.0 * p_.half_length;
        const double tip_x = s[0] + reach * std::sin(s[2]);
        const double tip_y = reach * std::cos(s[2]);
        return -std::hypot(tip_x, tip_y - reach);
    }

    [[nodiscard]] StepResult step(const VectorXd& s, const VectorXd& a, int, Rng&) const override {
        const double force = std::clamp(a[0], -p_.force_bound, p_.force_bound);
        Eigen::Vector4d next = integrate(Eigen::Vector4d(s[0], s[1], s[2], s[3]), force);
        next[2] = wrap_angle(next[2]);
        VectorXd out = states_.clip(VectorXd(next));
        return {raw_reward(out), out};
    }

    [[nodiscard]] VectorXd sample_initial(InitialVariant variant, Rng& rng) const override {
        if (variant == InitialVariant::Uniform) return states_.sample(rng);
        std::normal_distribution<double> noise(0.0, p_.start_sd);
        VectorXd s(4);
        s << noise(rng), noise(rng), std::numbers::pi + noise(rng), noise(rng);
        s[2] = wrap_angle(s[2]);
        if (variant == InitialVariant::Shifted) s[0] += p_.shift;
        return states_.clip(s);
    }

private:
    CartpoleParams p_;
    Box states_;
    Box actions_;
    MatrixXd grid_;
};

} // namespace aelsvi
