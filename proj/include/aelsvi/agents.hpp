#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "aelsvi/confidence_q.hpp"
#include "aelsvi/environment.hpp"
#include "aelsvi/errors.hpp"
#include "aelsvi/rng.hpp"

namespace aelsvi {

enum class Strategy { AELSVI, LSVIUCB, UncertaintySampling, RandomSampling, Greedy };

inline std::string_view to_string(Strategy s) {
    switch (s) {
    case Strategy::AELSVI: return "aelsvi";
    case Strategy::LSVIUCB: return "lsviucb";
    case Strategy::UncertaintySampling: return "us";
    case Strategy::RandomSampling: return "random";
    case Strategy::Greedy: return "greedy";
    }
    return "unknown";
}

inline Strategy parse_strategy(std::string_view name) {
    if (name == "aelsvi") return Strategy::AELSVI;
    if (name == "lsviucb") return Strategy::LSVIUCB;
    if (name == "us") return Strategy::UncertaintySampling;
    if (name == "random") return Strategy::RandomSampling;
    if (name == "greedy") return Strategy::Greedy;
    throw InvalidInput("unknown strategy '" + std::string(name) + "'");
}

/// Rollout strategies follow trajectories from p0; the rest pick states freely.
inline bool is_generative(Strategy s) { return s != Strategy::LSVIUCB && s != Strategy::Greedy; }

// Pessimistic: argmax_a max_t lower_q^{(t)}. Mean: argmax_a of the latest optimistic-target regression mean.
enum class ReportRule { Pessimistic, Mean };

inline std::string_view to_string(ReportRule r) { return r == ReportRule::Pessimistic ? "pessimistic" : "mean"; }

inline ReportRule parse_report_rule(std::string_view name) {
    if (name == "pessimistic") return ReportRule::Pessimistic;
    if (name == "mean") return ReportRule::Mean;
    throw InvalidInput("unknown report rule '" + std::string(name) + "'");
}

inline ReportRule default_report_rule(Strategy s) {
    return (s == Strategy::AELSVI || s == Strategy::LSVIUCB) ? ReportRule::Pessimistic : ReportRule::Mean;
}

struct AgentConfig {
    Strategy strategy = Strategy::AELSVI;
    double beta = 0.5;
    double lambda = 1.0;
    Index candidate_states = 1000;
    int warmup_episodes = 2;
    int refit_every = 10;

    void validate() const {
        if (!(beta >= 0.0)) throw InvalidInput("beta must be non-negative");
        if (!(lambda > 0.0)) throw InvalidInput("lambda must be positive");
        if (candidate_states < 1) throw InvalidInput("candidate_states must be >= 1");
        if (warmup_episodes < 0) throw InvalidInput("warmup_episodes must be >= 0");
        if (refit_every < 0) throw InvalidInput("refit_every must be >= 0");
    }
};

struct Selection {
    VectorXd state;
    VectorXd action;
    Index action_index = 0;
    double gap = std::numeric_limits<double>::quiet_NaN(); // acquisition value at the chosen state (AE-LSVI only)
};

namespace detail {
inline constexpr Index kScoreChunk = 128; // candidate states scored per batch
}

/// State-action choice for the generative strategies at step h.
///
/// AE-LSVI: the candidate maximizing upper_v - lower_v, then the grid action
/// maximizing upper_q there. Uncertainty sampling: the (candidate, action)
/// pair with the largest sd. Random: uniform over candidates x grid. Ties go
/// to the lowest index.
inline Selection select_state_action(Strategy strategy, const QBounds& qb, int h, const MatrixXd& candidates, Rng& rng) {
    if (candidates.rows() == 0) throw InvalidInput("select_state_action: no candidate states");
    const MatrixXd& grid = qb.action_grid();
    const Index C = candidates.rows();
    const Index G = grid.rows();
    Selection sel;

    switch (strategy) {
    case Strategy::RandomSampling: {
        const Index c = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(C)));
        const Index g = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(G)));
        sel.state = candidates.row(c).transpose();
        sel.action_index = g;
        break;
    }
    case Strategy::AELSVI: {
        Index best_c = 0;
        double best_gap = -std::numeric_limits<double>::infinity();
        VectorXd best_upper;
        for (Index start = 0; start < C; start += detail::kScoreChunk) {
            const Index len = std::min(detail::kScoreChunk, C - start);
            const GridBounds b = qb.grid_bounds(h, candidates.middleRows(start, len));
            for (Index c = 0; c < len; ++c) {
                const double gap = b.upper_v[c] - b.lower_v[c];
                if (gap > best_gap) {
                    best_gap = gap;
                    best_c = start + c;
                    best_upper = b.upper.row(c).transpose();
                }
            }
        }
        sel.state = candidates.row(best_c).transpose();
        sel.action_index = argmax_first(best_upper);
        sel.gap = best_gap;
        break;
    }
    case Strategy::UncertaintySampling: {
        Index best_c = 0;
        Index best_g = 0;
        double best_sd = -1.0;
        for (Index start = 0; start < C; start += detail::kScoreChunk) {
            const Index len = std::min(detail::kScoreChunk, C - start);
            const GridBounds b = qb.grid_bounds(h, candidates.middleRows(start, len));
            for (Index c = 0; c < len; ++c)
                for (Index g = 0; g < G; ++g)
                    if (b.sd(c, g) > best_sd) {
                        best_sd = b.sd(c, g);
                        best_c = start + c;
                        best_g = g;
                    }
        }
        sel.state = candidates.row(best_c).transpose();
        sel.action_index = best_g;
        break;
    }
    case Strategy::LSVIUCB:
    case Strategy::Greedy:
        throw InvalidInput("rollout strategies do not choose states; use select_action");
    }
    sel.action = grid.row(sel.action_index).transpose();
    return sel;
}

/// Action choice at a given state for the rollout strategies: LSVI-UCB takes
/// argmax upper_q, Greedy argmax of the regression mean.
inline Index select_action(Strategy strategy, const QBounds& qb, int h, const VectorXd& state) {
    const GridBounds b = qb.grid_bounds(h, state.transpose());
    switch (strategy) {
    case Strategy::LSVIUCB: return argmax_first(VectorXd(b.upper.row(0).transpose()));
    case Strategy::Greedy: return argmax_first(VectorXd(b.mean.row(0).transpose()));
    default: throw InvalidInput("select_action is only defined for rollout strategies");
    }
}

struct EpisodeResult {
    std::vector<Transition> transitions;
    std::vector<double> gaps; // per step; NaN unless AE-LSVI
};

/// H random generative queries: uniform state, uniform grid action.
inline EpisodeResult random_episode(const GenerativeEnv& env, Rng& rng) {
    EpisodeResult out;
    const MatrixXd& grid = env.action_grid();
    for (int h = 1; h <= env.horizon(); ++h) {
        const VectorXd s = env.sample_state(rng);
        const Index g = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(grid.rows())));
        out.transitions.push_back(env.transition(s, grid.row(g).transpose(), h, rng));
        out.gaps.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    return out;
}

/// One episode of data collection. Generative strategies pick a fresh state
/// per step; rollout strategies start from p0 and follow s'.
inline EpisodeResult run_episode(const AgentConfig& config, const GenerativeEnv& env, const QBounds& qb, Rng& rng) {
    if (qb.horizon() != env.horizon()) throw InvalidInput("run_episode: horizon mismatch");
    EpisodeResult out;
    const MatrixXd& grid = env.action_grid();
    if (is_generative(config.strategy)) {
        for (int h = 1; h <= env.horizon(); ++h) {
            Selection sel;
            if (config.strategy == Strategy::RandomSampling) {
                sel = select_state_action(config.strategy, qb, h, env.sample_state(rng).transpose(), rng);
            } else {
                const MatrixXd candidates = env.candidate_states(config.candidate_states, rng);
                sel = select_state_action(config.strategy, qb, h, candidates, rng);
            }
            out.transitions.push_back(env.transition(sel.state, sel.action, h, rng));
            out.gaps.push_back(sel.gap);
        }
    } else {
        VectorXd s = env.sample_initial(InitialVariant::Standard, rng);
        for (int h = 1; h <= env.horizon(); ++h) {
            const Index g = select_action(config.strategy, qb, h, s);
            Transition tr = env.transition(s, grid.row(g).transpose(), h, rng);
            s = tr.next_state;
            out.transitions.push_back(std::move(tr));
            out.gaps.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return out;
}

using Snapshot = std::shared_ptr<const QBounds>;

/// Per-episode bounds kept for the reported policy. Every episode is kept up
/// to `keep_all`, after which only every `thin_every`-th episode is kept.
class SnapshotStore {
public:
    explicit SnapshotStore(Index keep_all = 500, Index thin_every = 5) : keep_all_(keep_all), thin_every_(thin_every) {}

    void add(Index episode, Snapshot snap) {
        if (episode > keep_all_) thinned_ = true;
        if (episode <= keep_all_ || episode % thin_every_ == 0) snaps_.push_back(std::move(snap));
    }

    [[nodiscard]] const std::vector<Snapshot>& snapshots() const { return snaps_; }
    [[nodiscard]] bool thinned() const { return thinned_; }

private:
    Index keep_all_;
    Index thin_every_;
    bool thinned_ = false;
    std::vector<Snapshot> snaps_;
};

/// pi_h(s) = argmax_a max_t lower_q^{(t)}(h, s, a) over the stored snapshots
/// (Pessimistic rule), or argmax_a of the newest snapshot's regression mean
/// (Mean rule).
class ReportedPolicy {
public:
    ReportedPolicy(std::vector<Snapshot> snapshots, ReportRule rule) : snaps_(std::move(snapshots)), rule_(rule) {
        if (snaps_.empty()) throw InvalidInput("report_policy: need at least one snapshot");
        for (const auto& s : snaps_)
            if (!s) throw InvalidInput("report_policy: null snapshot");
    }

    [[nodiscard]] int horizon() const { return snaps_.front()->horizon(); }
    [[nodiscard]] const MatrixXd& action_grid() const { return snaps_.front()->action_grid(); }
    [[nodiscard]] ReportRule rule() const { return rule_; }
    [[nodiscard]] std::size_t snapshot_count() const { return snaps_.size(); }

    /// max_t lower_q^{(t)}(h, s, .) over the action grid.
    [[nodiscard]] VectorXd lower_envelope(int h, const VectorXd& s) const {
        VectorXd best;
        for (const auto& snap : snaps_) {
            const VectorXd lower = snap->grid_bounds(h, s.transpose()).lower.row(0).transpose();
            best = best.size() == 0 ? lower : VectorXd(best.cwiseMax(lower));
        }
        return best;
    }

    [[nodiscard]] Index action_index(int h, const VectorXd& s) const {
        if (rule_ == ReportRule::Mean)
            return argmax_first(VectorXd(snaps_.back()->grid_bounds(h, s.transpose()).mean.row(0).transpose()));
        return argmax_first(lower_envelope(h, s));
    }

    [[nodiscard]] VectorXd act(int h, const VectorXd& s) const { return action_grid().row(action_index(h, s)).transpose(); }

private:
    std::vector<Snapshot> snaps_;
    ReportRule rule_;
};

inline ReportedPolicy report_policy(std::vector<Snapshot> snapshots, ReportRule rule = ReportRule::Pessimistic) {
    return ReportedPolicy(std::move(snapshots), rule);
}

/// The episode loop of one learner: warmup, per-episode bounds, data
/// collection, periodic lengthscale refits and snapshot retention.
///
/// Episode t (1-based) acts on the bounds built from episodes 1..t-1; those
/// bounds are kept as snapshot t. The reported policy also includes the
/// bounds built from all data collected so far.
class Agent {
public:
    Agent(AgentConfig config, const GenerativeEnv& env, std::vector<KernelSpec> specs,
          LambdaCheck lambda_check = LambdaCheck::Strict, SnapshotStore store = SnapshotStore())
        : config_(config), env_(&env), learner_(make_settings(config, env, lambda_check), std::move(specs)),
          store_(std::move(store)) {
        config_.validate();
        input_ranges_ = join(env.state_bounds().width(), env.action_bounds().width());
    }

    [[nodiscard]] const AgentConfig& config() const { return config_; }
    [[nodiscard]] const LsviLearner& learner() const { return learner_; }
    [[nodiscard]] Index episodes() const { return learner_.episodes(); }
    [[nodiscard]] const SnapshotStore& store() const { return store_; }

    /// Collect one episode and add it to the data set.
    EpisodeResult run_episode(Rng& rng) {
        const Index t = learner_.episodes() + 1;
        EpisodeResult result;
        if (is_generative(config_.strategy) && t <= config_.warmup_episodes) {
            result = random_episode(*env_, rng);
        } else {
            if (due_for_refit()) learner_.refit_hyperparameters(input_ranges_);
            auto qb = std::make_shared<const QBounds>(learner_.bounds());
            result = aelsvi::run_episode(config_, *env_, *qb, rng);
            store_.add(t, std::move(qb));
            ++acting_episodes_;
        }
        learner_.add_episode(result.transitions);
        return result;
    }

    /// Current bounds from every episode collected so far.
    [[nodiscard]] QBounds bounds() const { return learner_.bounds(); }

    [[nodiscard]] ReportedPolicy report(ReportRule rule) const {
        std::vector<Snapshot> snaps = store_.snapshots();
        snaps.push_back(std::make_shared<const QBounds>(learner_.bounds()));
        return ReportedPolicy(std::move(snaps), rule);
    }

    [[nodiscard]] ReportedPolicy report() const { return report(default_report_rule(config_.strategy)); }

private:
    static LsviSettings make_settings(const AgentConfig& config, const GenerativeEnv& env, LambdaCheck check) {
        LsviSettings s;
        s.horizon = env.horizon();
        s.state_dim = env.state_dim();
        s.beta = config.beta;
        s.lambda = config.lambda;
        s.action_grid = env.action_grid();
        s.lambda_check = check;
        return s;
    }

    // First acting episode, then every refit_every acting episodes.
    [[nodiscard]] bool due_for_refit() const {
        if (config_.refit_every <= 0 || learner_.episodes() == 0) return false;
        return acting_episodes_ % config_.refit_every == 0;
    }

    AgentConfig config_;
    const GenerativeEnv* env_;
    LsviLearner learner_;
    SnapshotStore store_;
    VectorXd input_ranges_;
    int acting_episodes_ = 0;
};

struct PolicyEvaluation {
    double mean_return = 0.0;
    double se_return = 0.0;
};

/// Mean and standard error of the scaled undiscounted return over
/// `n_episodes` rollouts from the chosen initial distribution.
template <class Policy>
PolicyEvaluation evaluate_policy(const Policy& policy, const GenerativeEnv& env, InitialVariant variant, int n_episodes,
                                 Rng& rng) {
    if (n_episodes < 1) throw InvalidInput("evaluate_policy: n_episodes must be >= 1");
    std::vector<double> returns;
    returns.reserve(static_cast<std::size_t>(n_episodes));
    for (int e = 0; e < n_episodes; ++e) {
        VectorXd s = env.sample_initial(variant, rng);
        double total = 0.0;
        for (int h = 1; h <= env.horizon(); ++h) {
            Transition tr = env.transition(s, policy.act(h, s), h, rng);
            total += tr.reward;
            s = std::move(tr.next_state);
        }
        returns.push_back(total);
    }
    PolicyEvaluation ev;
    for (double r : returns) ev.mean_return += r;
    ev.mean_return /= n_episodes;
    if (n_episodes > 1) {
        double ss = 0.0;
        for (double r : returns) ss += (r - ev.mean_return) * (r - ev.mean_return);
        ev.se_return = std::sqrt(ss / (n_episodes - 1)) / std::sqrt(static_cast<double>(n_episodes));
    }
    return ev;
}

} // namespace aelsvi
