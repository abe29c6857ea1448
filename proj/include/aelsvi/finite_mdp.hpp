#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "aelsvi/environment.hpp"

namespace aelsvi {

/// Tabular episodic MDP with step-dependent transitions and rewards.
/// transition[h][s][a] is a distribution over next states (h is 0-based here).
struct FiniteMdp {
    int n_states = 0;
    int n_actions = 0;
    int horizon = 0;
    std::vector<std::vector<std::vector<std::vector<double>>>> transition;
    std::vector<std::vector<std::vector<double>>> reward;
    std::vector<double> p0;

    void validate() const {
        if (n_states < 1 || n_actions < 1 || horizon < 1) throw InvalidInput("finite MDP sizes must be positive");
        if (static_cast<int>(transition.size()) != horizon || static_cast<int>(reward.size()) != horizon)
            throw InvalidInput("finite MDP tables must have one entry per step");
        for (int h = 0; h < horizon; ++h) {
            if (static_cast<int>(transition[h].size()) != n_states || static_cast<int>(reward[h].size()) != n_states)
                throw InvalidInput("finite MDP tables must have one row per state");
            for (int s = 0; s < n_states; ++s) {
                if (static_cast<int>(transition[h][s].size()) != n_actions ||
                    static_cast<int>(reward[h][s].size()) != n_actions)
                    throw InvalidInput("finite MDP tables must have one entry per action");
                for (int a = 0; a < n_actions; ++a) {
                    const double r = reward[h][s][a];
                    if (!(r >= 0.0 && r <= 1.0)) throw InvalidInput("finite MDP rewards must lie in [0, 1]");
                    const auto& row = transition[h][s][a];
                    if (static_cast<int>(row.size()) != n_states)
                        throw InvalidInput("transition rows must cover every next state");
                    double total = 0.0;
                    for (double p : row) {
                        if (!(p >= 0.0)) throw InvalidInput("transition probabilities must be non-negative");
                        total += p;
                    }
                    if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("transition rows must sum to 1");
                }
            }
        }
        if (static_cast<int>(p0.size()) != n_states) throw InvalidInput("p0 must have one entry per state");
        double total = 0.0;
        for (double p : p0) {
            if (!(p >= 0.0)) throw InvalidInput("p0 entries must be non-negative");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("p0 must sum to 1");
    }
};

/// Optimal values by backward induction. Indices are 0-based in h; q[H] and
/// v[H] are the zero terminal values.
struct FiniteMdpSolution {
    std::vector<std::vector<std::vector<double>>> q;
    std::vector<std::vector<double>> v;
    std::vector<std::vector<int>> policy;
};

inline FiniteMdpSolution solve_finite_mdp(const FiniteMdp& mdp) {
    const int H = mdp.horizon;
    const int S = mdp.n_states;
    const int A = mdp.n_actions;
    FiniteMdpSolution sol;
    sol.q.assign(H + 1, std::vector<std::vector<double>>(S, std::vector<double>(A, 0.0)));
    sol.v.assign(H + 1, std::vector<double>(S, 0.0));
    sol.policy.assign(H, std::vector<int>(S, 0));
    for (int h = H - 1; h >= 0; --h) {
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                double q = mdp.reward[h][s][a];
                for (int sp = 0; sp < S; ++sp) q += mdp.transition[h][s][a][sp] * sol.v[h + 1][sp];
                sol.q[h][s][a] = q;
            }
            int best = 0;
            for (int a = 1; a < A; ++a)
                if (sol.q[h][s][a] > sol.q[h][s][best]) best = a;
            sol.policy[h][s] = best;
            sol.v[h][s] = sol.q[h][s][best];
        }
    }
    return sol;
}

/// Exact value of a deterministic policy; policy(h, s) gets a 0-based h.
inline std::vector<std::vector<double>> policy_value(const FiniteMdp& mdp, const std::function<int(int, int)>& policy) {
    const int H = mdp.horizon;
    std::vector<std::vector<double>> v(H + 1, std::vector<double>(mdp.n_states, 0.0));
    for (int h = H - 1; h >= 0; --h) {
        for (int s = 0; s < mdp.n_states; ++s) {
            const int a = policy(h, s);
            if (a < 0 || a >= mdp.n_actions) throw InvalidInput("policy returned an invalid action");
            double value = mdp.reward[h][s][a];
            for (int sp = 0; sp < mdp.n_states; ++sp) value += mdp.transition[h][s][a][sp] * v[h + 1][sp];
            v[h][s] = value;
        }
    }
    return v;
}

/// Exact Bellman optimality backup r_h(s,a) + E_{s'}[max_a' q(s', a')] where
/// q is the next-step table q[s'][a'] (0-based h).
inline double bellman_backup_target(const FiniteMdp& mdp, int h, const std::vector<std::vector<double>>& q_next, int s,
                                    int a) {
    if (h < 0 || h >= mdp.horizon || s < 0 || s >= mdp.n_states || a < 0 || a >= mdp.n_actions)
        throw InvalidInput("bellman_backup_target: index out of range");
    double value = mdp.reward[h][s][a];
    for (int sp = 0; sp < mdp.n_states; ++sp) {
        double best = q_next[sp][0];
        for (int ap = 1; ap < mdp.n_actions; ++ap) best = std::max(best, q_next[sp][ap]);
        value += mdp.transition[h][s][a][sp] * best;
    }
    return value;
}

/// Random MDP with Uniform(0, 1) rewards. Transitions are one-hot when
/// `deterministic`, otherwise Dirichlet(concentration) rows.
inline FiniteMdp random_finite_mdp(int n_states, int n_actions, int horizon, Rng& rng, bool deterministic,
                                   double concentration = 1.0) {
    FiniteMdp mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.horizon = horizon;
    mdp.transition.assign(horizon, std::vector<std::vector<std::vector<double>>>(
                                       n_states, std::vector<std::vector<double>>(n_actions, std::vector<double>(n_states, 0.0))));
    mdp.reward.assign(horizon, std::vector<std::vector<double>>(n_states, std::vector<double>(n_actions, 0.0)));
    std::gamma_distribution<double> gamma(concentration, 1.0);
    for (int h = 0; h < horizon; ++h) {
        for (int s = 0; s < n_states; ++s) {
            for (int a = 0; a < n_actions; ++a) {
                mdp.reward[h][s][a] = uniform01(rng);
                auto& row = mdp.transition[h][s][a];
                if (deterministic) {
                    row[uniform_index(rng, static_cast<std::size_t>(n_states))] = 1.0;
                } else {
                    double total = 0.0;
                    for (auto& p : row) total += (p = gamma(rng));
                    for (auto& p : row) p /= total;
                }
            }
        }
    }
    mdp.p0.assign(n_states, 1.0 / n_states);
    return mdp;
}

namespace detail {

inline int json_depth(const nlohmann::json& j) {
    int depth = 0;
    const nlohmann::json* cur = &j;
    while (cur->is_array() && !cur->empty()) {
        ++depth;
        cur = &(*cur)[0];
    }
    return depth;
}

} // namespace detail

/// Load {n_states, n_actions, H, P, r, p0}. P is [H][S][A][S'] or a
/// stationary [S][A][S']; r is [H][S][A] or [S][A].
inline FiniteMdp finite_mdp_from_json(const nlohmann::json& j) {
    FiniteMdp mdp;
    try {
        mdp.n_states = j.at("n_states").get<int>();
        mdp.n_actions = j.at("n_actions").get<int>();
        mdp.horizon = j.at("H").get<int>();
        const auto& P = j.at("P");
        const auto& r = j.at("r");
        if (detail::json_depth(P) == 4) {
            P.get_to(mdp.transition);
        } else if (detail::json_depth(P) == 3) {
            mdp.transition.assign(mdp.horizon, P.get<std::vector<std::vector<std::vector<double>>>>());
        } else {
            throw InvalidInput("P must be a 3- or 4-level nested array");
        }
        if (detail::json_depth(r) == 3) {
            r.get_to(mdp.reward);
        } else if (detail::json_depth(r) == 2) {
            mdp.reward.assign(mdp.horizon, r.get<std::vector<std::vector<double>>>());
        } else {
            throw InvalidInput("r must be a 2- or 3-level nested array");
        }
        j.at("p0").get_to(mdp.p0);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("finite MDP JSON: ") + e.what());
    }
    mdp.validate();
    return mdp;
}

inline nlohmann::json finite_mdp_to_json(const FiniteMdp& mdp) {
    return nlohmann::json{{"n_states", mdp.n_states}, {"n_actions", mdp.n_actions}, {"H", mdp.horizon},
                          {"P", mdp.transition},     {"r", mdp.reward},            {"p0", mdp.p0}};
}

/// Generative-model wrapper around a FiniteMdp. States and actions are
/// encoded as 1-D vectors holding the integer index.
class FiniteMdpEnv final : public GenerativeEnv {
public:
    explicit FiniteMdpEnv(FiniteMdp mdp) : mdp_(std::move(mdp)) {
        mdp_.validate();
        states_ = Box{VectorXd::Zero(1), VectorXd::Constant(1, mdp_.n_states - 1)};
        actions_ = Box{VectorXd::Zero(1), VectorXd::Constant(1, mdp_.n_actions - 1)};
        grid_ = MatrixXd(mdp_.n_actions, 1);
        for (int a = 0; a < mdp_.n_actions; ++a) grid_(a, 0) = a;
    }

    [[nodiscard]] std::string name() const override { return "finite"; }
    [[nodiscard]] int horizon() const override { return mdp_.horizon; }
    [[nodiscard]] const Box& state_bounds() const override { return states_; }
    [[nodiscard]] const Box& action_bounds() const override { return actions_; }
    [[nodiscard]] const MatrixXd& action_grid() const override { return grid_; }
    [[nodiscard]] std::pair<double, double> reward_bounds() const override { return {0.0, 1.0}; }
    [[nodiscard]] const FiniteMdp& mdp() const { return mdp_; }

    [[nodiscard]] int state_index(const VectorXd& s) const { return checked_index(s, mdp_.n_states, "state"); }
    [[nodiscard]] int action_index(const VectorXd& a) const { return checked_index(a, mdp_.n_actions, "action"); }

    [[nodiscard]] static VectorXd encode(int index) { return VectorXd::Constant(1, static_cast<double>(index)); }

    [[nodiscard]] StepResult step(const VectorXd& s, const VectorXd& a, int h, Rng& rng) const override {
        const int si = state_index(s);
        const int ai = action_index(a);
        if (h < 1 || h > mdp_.horizon) throw InvalidInput("finite MDP step index out of range");
        const auto& row = mdp_.transition[h - 1][si][ai];
        return {mdp_.reward[h - 1][si][ai], encode(sample_from(row, rng))};
    }

    [[nodiscard]] VectorXd sample_initial(InitialVariant variant, Rng& rng) const override {
        switch (variant) {
        case InitialVariant::Standard: return encode(sample_from(mdp_.p0, rng));
        case InitialVariant::Shifted: {
            // p0'(s) = p0(s - 1), cyclically.
            const int s = sample_from(mdp_.p0, rng);
            return encode((s + 1) % mdp_.n_states);
        }
        case InitialVariant::Uniform: return sample_state(rng);
        }
        return sample_state(rng);
    }

    [[nodiscard]] VectorXd sample_state(Rng& rng) const override {
        return encode(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(mdp_.n_states))));
    }

    /// Every state, in index order; `count` is ignored.
    [[nodiscard]] MatrixXd candidate_states(Index, Rng&) const override {
        MatrixXd out(mdp_.n_states, 1);
        for (int s = 0; s < mdp_.n_states; ++s) out(s, 0) = s;
        return out;
    }

private:
    static int sample_from(const std::vector<double>& probs, Rng& rng) {
        const double u = uniform01(rng);
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return static_cast<int>(i);
        }
        // u landed in the rounding gap above the last cumulative sum.
        for (std::size_t i = probs.size(); i-- > 0;)
            if (probs[i] > 0.0) return static_cast<int>(i);
        return 0;
    }

    static int checked_index(const VectorXd& v, int n, const char* what) {
        if (v.size() != 1) throw InvalidInput(std::string("finite MDP ") + what + " must be 1-D");
        const double x = v[0];
        const int i = static_cast<int>(std::lround(x));
        if (x != static_cast<double>(i) || i < 0 || i >= n)
            throw InvalidInput(std::string("finite MDP ") + what + " index out of range");
        return i;
    }

    FiniteMdp mdp_;
    Box states_;
    Box actions_;
    MatrixXd grid_;
};

} // namespace aelsvi
