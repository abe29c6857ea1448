#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aelsvi/environment.hpp"
#include "aelsvi/errors.hpp"
#include "aelsvi/hyperparameters.hpp"
#include "aelsvi/kernel.hpp"
#include "aelsvi/kernel_model.hpp"

namespace aelsvi {

inline const std::string kUpperLabel = "ubar";
inline const std::string kLowerLabel = "lbar";

/// Transitions grouped by step: step(h) lists one tuple per completed episode.
class EpisodeLog {
public:
    EpisodeLog() = default;
    explicit EpisodeLog(int horizon) : steps_(static_cast<std::size_t>(horizon)) {
        if (horizon < 1) throw InvalidInput("episode log horizon must be >= 1");
    }

    void append_episode(std::span<const Transition> episode) {
        if (static_cast<int>(episode.size()) != horizon())
            throw InvalidInput("episode must contain exactly H transitions");
        for (const auto& tr : episode)
            if (!(tr.reward >= 0.0 && tr.reward <= 1.0)) throw InvalidInput("rewards must lie in [0, 1]");
        for (int h = 0; h < horizon(); ++h) steps_[static_cast<std::size_t>(h)].push_back(episode[static_cast<std::size_t>(h)]);
    }

    [[nodiscard]] int horizon() const { return static_cast<int>(steps_.size()); }
    [[nodiscard]] Index episodes() const { return steps_.empty() ? 0 : static_cast<Index>(steps_.front().size()); }

    /// Tuples recorded at step h, 1 <= h <= H.
    [[nodiscard]] const std::vector<Transition>& step(int h) const {
        if (h < 1 || h > horizon()) throw InvalidInput("episode log step out of range");
        return steps_[static_cast<std::size_t>(h - 1)];
    }

    [[nodiscard]] MatrixXd inputs(int h) const {
        const auto& rows = step(h);
        if (rows.empty()) return MatrixXd(0, 0);
        MatrixXd X(static_cast<Index>(rows.size()), rows.front().state.size() + rows.front().action.size());
        for (std::size_t i = 0; i < rows.size(); ++i) X.row(static_cast<Index>(i)) = join(rows[i].state, rows[i].action).transpose();
        return X;
    }

    [[nodiscard]] MatrixXd next_states(int h) const {
        const auto& rows = step(h);
        if (rows.empty()) return MatrixXd(0, 0);
        MatrixXd S(static_cast<Index>(rows.size()), rows.front().next_state.size());
        for (std::size_t i = 0; i < rows.size(); ++i) S.row(static_cast<Index>(i)) = rows[i].next_state.transpose();
        return S;
    }

    [[nodiscard]] VectorXd rewards(int h) const {
        const auto& rows = step(h);
        VectorXd r(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) r[static_cast<Index>(i)] = rows[i].reward;
        return r;
    }

private:
    std::vector<std::vector<Transition>> steps_;
};

/// Optimistic and pessimistic values on a product grid of states x actions.
/// Matrices are (states x actions).
struct GridBounds {
    MatrixXd upper;
    MatrixXd lower;
    MatrixXd mean;  // untruncated mean of the optimistic regression
    MatrixXd sd;
    VectorXd upper_v; // row maxima
    VectorXd lower_v;
};

inline double truncate(double value, double hi) { return std::clamp(value, 0.0, hi); }

/// Index of the largest entry, lowest index on ties.
template <class Vec>
Index argmax_first(const Vec& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

/// Per-step optimistic and pessimistic Q-functions,
///   upper_q(h,s,a) = [mean_ubar + beta sd]_0^{H-h+1},
///   lower_q(h,s,a) = [mean_lbar - beta sd]_0^{H-h+1},
/// with Q_{H+1} = 0. Steps are 1-based. Immutable; safe for concurrent queries.
class QBounds {
public:
    QBounds(int horizon, double beta, MatrixXd action_grid, std::vector<KernelModel> models)
        : horizon_(horizon), beta_(beta), grid_(std::move(action_grid)), models_(std::move(models)) {
        if (horizon < 1) throw InvalidInput("QBounds: horizon must be >= 1");
        if (!(beta >= 0.0)) throw InvalidInput("QBounds: beta must be non-negative");
        if (grid_.rows() == 0) throw InvalidInput("QBounds: action grid must be non-empty");
        if (static_cast<int>(models_.size()) != horizon) throw InvalidInput("QBounds: need one model per step");
        for (const auto& m : models_)
            if (!m.has_label(kUpperLabel) || !m.has_label(kLowerLabel))
                throw InvalidInput("QBounds: models must carry ubar and lbar targets");
    }

    [[nodiscard]] int horizon() const { return horizon_; }
    [[nodiscard]] double beta() const { return beta_; }
    [[nodiscard]] const MatrixXd& action_grid() const { return grid_; }
    [[nodiscard]] const KernelModel& model(int h) const {
        check_step(h, false);
        return models_[static_cast<std::size_t>(h - 1)];
    }
    [[nodiscard]] double cap(int h) const { return static_cast<double>(horizon_ - h + 1); }

    [[nodiscard]] double upper_q(int h, const VectorXd& s, const VectorXd& a) const {
        check_step(h, true);
        if (h == horizon_ + 1) return 0.0;
        const auto& m = model(h);
        const VectorXd x = join(s, a);
        return truncate(m.mean(kUpperLabel, x) + beta_ * m.sd(x), cap(h));
    }

    [[nodiscard]] double lower_q(int h, const VectorXd& s, const VectorXd& a) const {
        check_step(h, true);
        if (h == horizon_ + 1) return 0.0;
        const auto& m = model(h);
        const VectorXd x = join(s, a);
        return truncate(m.mean(kLowerLabel, x) - beta_ * m.sd(x), cap(h));
    }

    [[nodiscard]] double upper_v(int h, const VectorXd& s) const {
        if (h == horizon_ + 1) return 0.0;
        return grid_bounds(h, s.transpose()).upper_v[0];
    }

    [[nodiscard]] double lower_v(int h, const VectorXd& s) const {
        if (h == horizon_ + 1) return 0.0;
        return grid_bounds(h, s.transpose()).lower_v[0];
    }

    /// Bounds for every (state row, grid action) pair at step h.
    [[nodiscard]] GridBounds grid_bounds(int h, const MatrixXd& states) const {
        check_step(h, false);
        const auto& m = model(h);
        const Prediction p = m.predict_grid(states, grid_);
        return assemble(p, m.label_index(kUpperLabel), m.label_index(kLowerLabel), states.rows(), grid_.rows(), beta_,
                        cap(h));
    }

    /// Shared by the incremental learner so both paths truncate identically.
    static GridBounds assemble(const Prediction& p, Index upper_col, Index lower_col, Index C, Index G, double beta,
                               double cap) {
        GridBounds b;
        b.upper.resize(C, G);
        b.lower.resize(C, G);
        b.mean.resize(C, G);
        b.sd.resize(C, G);
        b.upper_v.resize(C);
        b.lower_v.resize(C);
        for (Index c = 0; c < C; ++c) {
            for (Index g = 0; g < G; ++g) {
                const Index row = c * G + g;
                const double sd = p.sd[row];
                b.mean(c, g) = p.mean(row, upper_col);
                b.sd(c, g) = sd;
                b.upper(c, g) = truncate(p.mean(row, upper_col) + beta * sd, cap);
                b.lower(c, g) = truncate(p.mean(row, lower_col) - beta * sd, cap);
            }
            b.upper_v[c] = b.upper.row(c).maxCoeff();
            b.lower_v[c] = b.lower.row(c).maxCoeff();
        }
        return b;
    }

private:
    void check_step(int h, bool allow_terminal) const {
        const int top = allow_terminal ? horizon_ + 1 : horizon_;
        if (h < 1 || h > top) throw InvalidInput("step index h out of range");
    }

    int horizon_;
    double beta_;
    MatrixXd grid_;
    std::vector<KernelModel> models_;
};

struct LsviSettings {
    int horizon = 1;
    Index state_dim = 1;
    double beta = 0.5;
    double lambda = 1.0;
    MatrixXd action_grid;
    LambdaCheck lambda_check = LambdaCheck::Strict;
};

/// Backward least-squares value iteration from scratch.
///
/// For h = H..1 the optimistic targets are r + upper_v(h+1, s') and the
/// pessimistic targets r + lower_v(h+1, s'); both regressions share one
/// factorization per step. `specs` holds one kernel per step (or a single
/// kernel used for every step).
inline QBounds build_qbounds(const EpisodeLog& log, const std::vector<KernelSpec>& specs, const LsviSettings& settings) {
    const int H = settings.horizon;
    if (log.horizon() != H) throw InvalidInput("build_qbounds: log horizon mismatch");
    if (settings.action_grid.rows() == 0) throw InvalidInput("build_qbounds: empty action grid");
    if (specs.size() != 1 && static_cast<int>(specs.size()) != H)
        throw InvalidInput("build_qbounds: need one kernel or one per step");
    const Index dim = settings.state_dim + settings.action_grid.cols();

    std::vector<KernelModel> models(static_cast<std::size_t>(H));
    VectorXd next_upper;
    VectorXd next_lower;
    for (int h = H; h >= 1; --h) {
        const KernelSpec& spec = specs.size() == 1 ? specs.front() : specs[static_cast<std::size_t>(h - 1)];
        const Index n = log.episodes();
        if (n == 0) {
            models[static_cast<std::size_t>(h - 1)] =
                KernelModel::prior(spec, dim, settings.lambda,
                                   {kLowerLabel, kUpperLabel}, settings.lambda_check);
            continue;
        }
        const VectorXd r = log.rewards(h);
        VectorXd y_upper = r;
        VectorXd y_lower = r;
        if (h < H) {
            y_upper += next_upper;
            y_lower += next_lower;
        }
        models[static_cast<std::size_t>(h - 1)] =
            KernelModel::fit(spec, log.inputs(h), {{kUpperLabel, y_upper}, {kLowerLabel, y_lower}}, settings.lambda,
                             settings.lambda_check);
        if (h > 1) {
            // Values of this step's bounds at the next states observed one step earlier.
            const auto& m = models[static_cast<std::size_t>(h - 1)];
            const Prediction p = m.predict_grid(log.next_states(h - 1), settings.action_grid);
            const GridBounds b = QBounds::assemble(p, m.label_index(kUpperLabel), m.label_index(kLowerLabel), n,
                                                   settings.action_grid.rows(), settings.beta, H - h + 1);
            next_upper = b.upper_v;
            next_lower = b.lower_v;
        }
    }
    return QBounds(H, settings.beta, settings.action_grid, std::move(models));
}

inline QBounds build_qbounds(const EpisodeLog& log, const KernelSpec& spec, const LsviSettings& settings) {
    return build_qbounds(log, std::vector<KernelSpec>{spec}, settings);
}

/// Incremental version of build_qbounds for the episode loop.
///
/// Inputs only ever append, so each step's Cholesky factor is extended by
/// one row per episode. The next-state queries (s'_{h,i}, a) for all grid
/// actions are cached as L_{h+1}^{-1} k(X_{h+1}, query); a new episode adds
/// one row and G columns to that cache, so a backward pass costs
/// O(n * n * G) instead of O(n^3 * G). Targets are rebuilt every pass since
/// the downstream values change every episode.
class LsviLearner {
public:
    LsviLearner(LsviSettings settings, std::vector<KernelSpec> specs)
        : settings_(std::move(settings)), state_dim_(settings_.state_dim), log_(settings_.horizon) {
        check_lambda(settings_.lambda, settings_.lambda_check);
        if (settings_.action_grid.rows() == 0) throw InvalidInput("LsviLearner: empty action grid");
        if (specs.size() == 1) specs.assign(static_cast<std::size_t>(settings_.horizon), specs.front());
        if (static_cast<int>(specs.size()) != settings_.horizon)
            throw InvalidInput("LsviLearner: need one kernel or one per step");
        steps_.resize(specs.size());
        for (std::size_t i = 0; i < specs.size(); ++i) {
            specs[i].validate();
            specs[i].check_dim(input_dim());
            steps_[i].spec = specs[i];
            steps_[i].inputs.resize(0, input_dim());
            steps_[i].chol.resize(0, 0);
            steps_[i].next_states.resize(0, state_dim_);
            steps_[i].cache.resize(0, 0);
        }
    }

    [[nodiscard]] const LsviSettings& settings() const { return settings_; }
    [[nodiscard]] const EpisodeLog& log() const { return log_; }
    [[nodiscard]] Index episodes() const { return log_.episodes(); }
    [[nodiscard]] const KernelSpec& kernel(int h) const { return step(h).spec; }
    [[nodiscard]] Index input_dim() const { return state_dim_ + settings_.action_grid.cols(); }

    void add_episode(std::span<const Transition> episode) {
        log_.append_episode(episode);
        const int H = settings_.horizon;
        const Index G = settings_.action_grid.rows();
        for (int h = 1; h <= H; ++h) {
            Step& st = step(h);
            const Transition& tr = episode[static_cast<std::size_t>(h - 1)];
            const VectorXd x = join(tr.state, tr.action);
            const Index n = st.inputs.rows();

            const VectorXd kx = n > 0 ? VectorXd(cross(st.spec, st.inputs, x.transpose())) : VectorXd(0);
            const VectorXd l = n > 0 ? VectorXd(st.chol.triangularView<Eigen::Lower>().solve(kx)) : VectorXd(0);
            const double pivot = aelsvi::kernel(st.spec, x, x) + settings_.lambda - l.squaredNorm();
            if (!(pivot > 0.0)) throw NumericalError("LsviLearner: Cholesky extension lost positive definiteness");
            const double d = std::sqrt(pivot);

            // New row of the cache held by step h-1 (its queries are evaluated by this step's model).
            if (h > 1) {
                Step& prev = step(h - 1);
                const Index cached_states = prev.cache.cols() / G;
                prev.cache.conservativeResize(n + 1, Eigen::NoChange);
                if (cached_states > 0) {
                    RowVector row = cross_grid(st.spec, prev.next_states.topRows(cached_states), settings_.action_grid,
                                               x.transpose())
                                        .transpose();
                    if (n > 0) row.noalias() -= l.transpose() * prev.cache.topRows(n);
                    row /= d;
                    prev.cache.row(n) = row;
                    prev.cache_norm.array() += row.transpose().array().square();
                }
            }

            st.chol.conservativeResize(n + 1, n + 1);
            st.chol.row(n).setZero();
            st.chol.col(n).setZero();
            if (n > 0) st.chol.block(n, 0, 1, n) = l.transpose();
            st.chol(n, n) = d;
            st.inputs.conservativeResize(n + 1, Eigen::NoChange);
            st.inputs.row(n) = x.transpose();
            st.rewards.conservativeResize(n + 1);
            st.rewards[n] = tr.reward;
            st.next_states.conservativeResize(n + 1, Eigen::NoChange);
            st.next_states.row(n) = tr.next_state.transpose();
        }
        // New query columns use the fully updated factor of the next step.
        for (int h = 1; h < H; ++h) append_query_columns(h, step(h).next_states.rows() - 1);
    }

    /// Optimistic/pessimistic bounds for the data seen so far.
    [[nodiscard]] QBounds bounds() const {
        const int H = settings_.horizon;
        const Index G = settings_.action_grid.rows();
        std::vector<KernelModel> models(static_cast<std::size_t>(H));
        VectorXd next_upper;
        VectorXd next_lower;
        for (int h = H; h >= 1; --h) {
            const Step& st = step(h);
            const Index n = st.inputs.rows();
            VectorXd y_upper = st.rewards;
            VectorXd y_lower = st.rewards;
            if (h < H && n > 0) {
                y_upper += next_upper;
                y_lower += next_lower;
            }
            models[static_cast<std::size_t>(h - 1)] = KernelModel::from_factor(
                st.spec, settings_.lambda, st.inputs, st.chol, {{kUpperLabel, y_upper}, {kLowerLabel, y_lower}});
            if (h > 1 && n > 0) {
                const Step& prev = step(h - 1);
                // mean = k^T (K + lambda I)^{-1} y = (L^{-1} k)^T (L^{-1} y).
                MatrixXd z(n, 2);
                z.col(0) = y_upper;
                z.col(1) = y_lower;
                st.chol.triangularView<Eigen::Lower>().solveInPlace(z);
                Prediction p;
                p.mean = prev.cache.transpose() * z;
                p.sd.resize(prev.cache_norm.size());
                for (Index i = 0; i < p.sd.size(); ++i)
                    p.sd[i] = std::sqrt(detail::clamp_variance(prev.cache_diag[i] - prev.cache_norm[i], prev.cache_diag[i]) /
                                        settings_.lambda);
                const GridBounds b = QBounds::assemble(p, 0, 1, prev.next_states.rows(), G, settings_.beta, H - h + 1);
                next_upper = b.upper_v;
                next_lower = b.lower_v;
            }
        }
        return QBounds(H, settings_.beta, settings_.action_grid, std::move(models));
    }

    /// Replace the kernel of step h and refactor from scratch.
    void set_kernel(int h, KernelSpec spec) {
        spec.validate();
        spec.check_dim(input_dim());
        Step& st = step(h);
        st.spec = std::move(spec);
        const Index n = st.inputs.rows();
        MatrixXd A = gram(st.spec, st.inputs);
        A.diagonal().array() += settings_.lambda;
        st.chol = n > 0 ? detail::cholesky_lower(A) : MatrixXd(0, 0);
        if (h > 1) {
            Step& prev = step(h - 1);
            prev.cache.resize(0, 0);
            prev.cache_norm.resize(0);
            prev.cache_diag.resize(0);
            for (Index i = 0; i < prev.next_states.rows(); ++i) append_query_columns(h - 1, i);
        }
    }

    /// One coordinate-search sweep of SE lengthscales per step, run inside a
    /// backward pass so each step is tuned on its current optimistic targets.
    void refit_hyperparameters(const VectorXd& input_ranges, const LengthscaleSearch& search = {}) {
        const int H = settings_.horizon;
        for (int h = H; h >= 1; --h) {
            const Step& st = step(h);
            if (st.inputs.rows() == 0 || st.spec.family != KernelFamily::SquaredExponential) continue;
            const QBounds qb = bounds();
            const VectorXd y = qb.model(h).targets(kUpperLabel);
            KernelSpec best = coordinate_search(st.spec, st.inputs, y, settings_.lambda, input_ranges, search);
            if (!(best == st.spec)) set_kernel(h, best);
        }
    }

private:
    using RowVector = Eigen::RowVectorXd;

    struct Step {
        KernelSpec spec;
        MatrixXd inputs;
        MatrixXd chol;
        VectorXd rewards;
        MatrixXd next_states;
        // L_{h+1}^{-1} k(X_{h+1}, q) for queries q = (next_states[i], grid[g]), column i * G + g.
        MatrixXd cache;
        VectorXd cache_norm; // column squared norms of cache
        VectorXd cache_diag; // k(q, q)

    };

    Step& step(int h) { return steps_[static_cast<std::size_t>(h - 1)]; }
    [[nodiscard]] const Step& step(int h) const {
        if (h < 1 || h > settings_.horizon) throw InvalidInput("step index h out of range");
        return steps_[static_cast<std::size_t>(h - 1)];
    }

    // Cache columns for next state i of step h against the model of step h+1.
    void append_query_columns(int h, Index i) {
        Step& st = step(h);
        const Step& nxt = step(h + 1);
        const Index G = settings_.action_grid.rows();
        const Index n = nxt.inputs.rows();
        const MatrixXd state = st.next_states.row(i);
        MatrixXd block = cross_grid(nxt.spec, state, settings_.action_grid, nxt.inputs).transpose(); // n x G
        if (n > 0) nxt.chol.triangularView<Eigen::Lower>().solveInPlace(block);
        const Index old_cols = st.cache.cols();
        st.cache.conservativeResize(n, old_cols + G);
        st.cache.rightCols(G) = block;
        st.cache_norm.conservativeResize(old_cols + G);
        st.cache_norm.tail(G) = block.colwise().squaredNorm().transpose();
        st.cache_diag.conservativeResize(old_cols + G);
        st.cache_diag.tail(G) = kernel_diag_grid(nxt.spec, state, settings_.action_grid);
    }

    LsviSettings settings_;
    Index state_dim_;
    EpisodeLog log_;
    std::vector<Step> steps_;
};

} // namespace aelsvi
