#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "aelsvi/confidence_q.hpp"
#include "aelsvi/environment.hpp"
#include "aelsvi/errors.hpp"
#include "aelsvi/hyperparameters.hpp"
#include "aelsvi/kernel.hpp"
#include "aelsvi/kernel_model.hpp"
#include "aelsvi/rng.hpp"

namespace aelsvi {

using Objective = std::function<double(const VectorXd& context, const VectorXd& action)>;

/// Offline contextual optimization problem: a finite context set, a box of
/// actions searched on a fixed grid, and a noisy black-box objective to maximize.
struct BOTask {
    std::string name;
    MatrixXd contexts; // one context per row
    Box action_box;
    MatrixXd action_grid;
    Objective objective;
    double noise_sd = 0.01;
    VectorXd weights; // empty for the unweighted rule

    [[nodiscard]] Index context_count() const { return contexts.rows(); }
    [[nodiscard]] Index context_dim() const { return contexts.cols(); }
    [[nodiscard]] Index action_dim() const { return action_box.dim(); }
    [[nodiscard]] VectorXd context(Index c) const { return contexts.row(c).transpose(); }

    void validate() const {
        if (contexts.rows() < 1) throw InvalidInput("task needs at least one context");
        if (action_box.dim() < 1 || action_box.upper.size() != action_box.dim())
            throw InvalidInput("task action box is malformed");
        if (((action_box.upper - action_box.lower).array() < 0.0).any())
            throw InvalidInput("task action box has lower > upper");
        if (action_grid.rows() < 1 || action_grid.cols() != action_box.dim())
            throw InvalidInput("task action grid does not match the action box");
        if (!objective) throw InvalidInput("task has no objective");
        if (!(noise_sd >= 0.0)) throw InvalidInput("noise_sd must be non-negative");
        if (weights.size() != 0) {
            if (weights.size() != contexts.rows()) throw InvalidInput("need one weight per context");
            if (!(weights.array() > 0.0).all()) throw InvalidInput("context weights must be strictly positive");
        }
    }
};

/// 50 points per action dimension up to two dimensions, 20 above.
inline MatrixXd default_action_grid(const Box& box) {
    return product_grid(box, box.dim() <= 2 ? 50 : 20);
}

/// Cell-centred equispaced points in [0, 1]^dim, `per_dim` per axis.
inline MatrixXd equispaced_contexts(Index dim, Index per_dim) {
    Box unit{VectorXd::Constant(dim, 0.5 / static_cast<double>(per_dim)),
             VectorXd::Constant(dim, 1.0 - 0.5 / static_cast<double>(per_dim))};
    return product_grid(unit, per_dim);
}

namespace benchmarks {

/// Branin-Hoo in its usual minimization form on x1 in [-5, 10], x2 in [0, 15].
inline double branin(double x1, double x2) {
    constexpr double pi = std::numbers::pi;
    const double b = 5.1 / (4.0 * pi * pi);
    const double c = 5.0 / pi;
    const double t = 1.0 / (8.0 * pi);
    const double u = x2 - b * x1 * x1 + c * x1 - 6.0;
    return u * u + 10.0 * (1.0 - t) * std::cos(x1) + 10.0;
}

inline constexpr double kHartmannAlpha[4] = {1.0, 1.2, 3.0, 3.2};
inline constexpr double kHartmannA[4][6] = {{10, 3, 17, 3.5, 1.7, 8},
                                            {0.05, 10, 17, 0.1, 8, 14},
                                            {3, 3.5, 1.7, 10, 17, 8},
                                            {17, 8, 0.05, 10, 0.1, 14}};
inline constexpr double kHartmannP[4][6] = {{1312, 1696, 5569, 124, 8283, 5886},
                                            {2329, 4135, 8307, 3736, 1004, 9991},
                                            {2348, 1451, 3522, 2883, 3047, 6650},
                                            {4047, 8828, 8732, 5743, 1091, 381}};

inline double hartmann_inner(const Eigen::Ref<const VectorXd>& x, Index dims) {
    double total = 0.0;
    for (int i = 0; i < 4; ++i) {
        double e = 0.0;
        for (Index j = 0; j < dims; ++j) {
            const double d = x[j] - 1e-4 * kHartmannP[i][j];
            e += kHartmannA[i][j] * d * d;
        }
        total += kHartmannAlpha[i] * std::exp(-e);
    }
    return total;
}

/// Six-dimensional Hartmann on [0, 1]^6 (minimization form, minimum about -3.32237).
inline double hartmann6(const Eigen::Ref<const VectorXd>& x) { return -hartmann_inner(x, 6); }

/// Four-dimensional Hartmann on [0, 1]^4, rescaled form (1.1 - sum) / 0.839.
inline double hartmann4(const Eigen::Ref<const VectorXd>& x) { return (1.1 - hartmann_inner(x, 4)) / 0.839; }

/// Maximization objective on [0, 1]^d inputs (context first, then action).
inline std::function<double(const VectorXd&)> unit_objective(std::string_view name) {
    if (name == "branin")
        return [](const VectorXd& u) { return -branin(-5.0 + 15.0 * u[0], 15.0 * u[1]); };
    if (name == "hartmann4") return [](const VectorXd& u) { return -hartmann4(u); };
    if (name == "hartmann6") return [](const VectorXd& u) { return -hartmann6(u); };
    throw InvalidInput("unknown objective '" + std::string(name) + "'");
}

inline Index objective_dim(std::string_view name) {
    if (name == "branin") return 2;
    if (name == "hartmann4") return 4;
    if (name == "hartmann6") return 6;
    throw InvalidInput("unknown objective '" + std::string(name) + "'");
}

} // namespace benchmarks

enum class BenchmarkName { Branin11, Hartmann22, Hartmann31, Hartmann42 };

inline BenchmarkName parse_benchmark(std::string_view name) {
    if (name == "branin11" || name == "Branin11") return BenchmarkName::Branin11;
    if (name == "hartmann22" || name == "Hartmann22") return BenchmarkName::Hartmann22;
    if (name == "hartmann31" || name == "Hartmann31") return BenchmarkName::Hartmann31;
    if (name == "hartmann42" || name == "Hartmann42") return BenchmarkName::Hartmann42;
    throw InvalidInput("unknown benchmark '" + std::string(name) + "'");
}

/// Task whose objective is a named function on [0, 1]^(ds + da); contexts
/// take the leading coordinates.
inline BOTask unit_task(std::string name, std::string_view objective, MatrixXd contexts, double noise_sd,
                        VectorXd weights = {}) {
    const Index total = benchmarks::objective_dim(objective);
    const Index ds = contexts.cols();
    if (ds < 1 || ds >= total) throw InvalidInput("context dimension must leave at least one action dimension");
    BOTask task;
    task.name = std::move(name);
    task.contexts = std::move(contexts);
    task.action_box = Box{VectorXd::Zero(total - ds), VectorXd::Ones(total - ds)};
    task.action_grid = default_action_grid(task.action_box);
    task.noise_sd = noise_sd;
    task.weights = std::move(weights);
    task.objective = [f = benchmarks::unit_objective(objective)](const VectorXd& s, const VectorXd& a) {
        return f(join(s, a));
    };
    task.validate();
    return task;
}

/// Branin 1-1 (10 contexts), Hartmann 2-2 (9), Hartmann 3-1 (8), Hartmann 4-2 (16).
inline BOTask benchmark_task(BenchmarkName which, double noise_sd = 0.01) {
    switch (which) {
    case BenchmarkName::Branin11: return unit_task("branin11", "branin", equispaced_contexts(1, 10), noise_sd);
    case BenchmarkName::Hartmann22: return unit_task("hartmann22", "hartmann4", equispaced_contexts(2, 3), noise_sd);
    case BenchmarkName::Hartmann31: return unit_task("hartmann31", "hartmann4", equispaced_contexts(3, 2), noise_sd);
    case BenchmarkName::Hartmann42: return unit_task("hartmann42", "hartmann6", equispaced_contexts(4, 2), noise_sd);
    }
    throw InvalidInput("unknown benchmark");
}

inline BOTask benchmark_task(std::string_view name, double noise_sd = 0.01) {
    return benchmark_task(parse_benchmark(name), noise_sd);
}

/// Task from JSON. Either {"benchmark": name, ...overrides} or
/// {"objective": "branin"|"hartmann4"|"hartmann6", "contexts": [[...]], ...}.
/// Optional keys: noise_sd, weights, action_box, action_grid_per_dim.
inline BOTask bo_task_from_json(const nlohmann::json& j) {
    try {
        const double noise = j.value("noise_sd", 0.01);
        BOTask task;
        if (j.contains("benchmark")) {
            task = benchmark_task(j.at("benchmark").get<std::string>(), noise);
        } else {
            const auto rows = j.at("contexts").get<std::vector<std::vector<double>>>();
            if (rows.empty() || rows.front().empty()) throw InvalidInput("contexts must be a non-empty matrix");
            MatrixXd contexts(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (rows[i].size() != rows.front().size()) throw InvalidInput("contexts rows differ in length");
                for (std::size_t k = 0; k < rows[i].size(); ++k) contexts(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
            }
            task = unit_task(j.value("name", std::string("custom")), j.at("objective").get<std::string>(), contexts, noise);
        }
        if (j.contains("contexts") && j.contains("benchmark"))
            throw InvalidInput("give either a benchmark or explicit contexts, not both");
        if (j.contains("weights")) {
            const auto w = j.at("weights").get<std::vector<double>>();
            task.weights = Eigen::Map<const VectorXd>(w.data(), static_cast<Index>(w.size()));
        }
        if (j.contains("action_box")) {
            // [[lo, hi], ...] per action dimension, inside the unit cube the objective is defined on.
            const auto box = j.at("action_box").get<std::vector<std::vector<double>>>();
            if (static_cast<Index>(box.size()) != task.action_dim()) throw InvalidInput("action_box needs one [lo, hi] per action dimension");
            for (std::size_t i = 0; i < box.size(); ++i) {
                if (box[i].size() != 2 || !(0.0 <= box[i][0] && box[i][0] <= box[i][1] && box[i][1] <= 1.0))
                    throw InvalidInput("action_box entries must satisfy 0 <= lo <= hi <= 1");
                task.action_box.lower[static_cast<Index>(i)] = box[i][0];
                task.action_box.upper[static_cast<Index>(i)] = box[i][1];
            }
            task.action_grid = default_action_grid(task.action_box);
        }
        if (j.contains("action_grid_per_dim")) {
            const auto per_dim = j.at("action_grid_per_dim").get<Index>();
            if (per_dim < 1) throw InvalidInput("action_grid_per_dim must be >= 1");
            task.action_grid = product_grid(task.action_box, per_dim);
        }
        task.validate();
        return task;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidInput(std::string("bad task JSON: ") + e.what());
    }
}

/// Per-context maxima of the objective on a dense action grid.
inline VectorXd true_context_maxima(const BOTask& task, Index points_per_context = 10000) {
    const Index da = task.action_dim();
    const auto per_dim = static_cast<Index>(std::ceil(std::pow(static_cast<double>(points_per_context), 1.0 / static_cast<double>(da)) - 1e-9));
    const MatrixXd dense = product_grid(task.action_box, per_dim);
    VectorXd best(task.context_count());
    for (Index c = 0; c < task.context_count(); ++c) {
        const VectorXd s = task.context(c);
        double m = -std::numeric_limits<double>::infinity();
        for (Index g = 0; g < dense.rows(); ++g) m = std::max(m, task.objective(s, dense.row(g).transpose()));
        best[c] = m;
    }
    return best;
}

/// max over contexts of [max_a f(s, a) - f(s, pi(s))], with pi given as grid indices.
inline double max_simple_regret(const BOTask& task, const std::vector<Index>& policy, const VectorXd& true_max) {
    if (static_cast<Index>(policy.size()) != task.context_count() || true_max.size() != task.context_count())
        throw InvalidInput("max_simple_regret: need one action and one maximum per context");
    double worst = 0.0;
    for (Index c = 0; c < task.context_count(); ++c) {
        const double value = task.objective(task.context(c), task.action_grid.row(policy[static_cast<std::size_t>(c)]).transpose());
        worst = std::max(worst, true_max[c] - value);
    }
    return worst;
}

/// Confidence width schedule. Theory: beta_t = B + R sqrt(2 (gamma_t + ln(1/delta)))
/// with R the noise sd in model units and gamma_t the realized information gain.
struct BetaSchedule {
    enum class Kind { Theory, Constant };
    Kind kind = Kind::Theory;
    double constant = 0.5;
    double rkhs_bound = 2.0;
    double delta = 0.05;

    [[nodiscard]] double value(double gamma, double noise_sd) const {
        if (kind == Kind::Constant) return constant;
        return rkhs_bound + noise_sd * std::sqrt(2.0 * (gamma + std::log(1.0 / delta)));
    }

    void validate() const {
        if (kind == Kind::Constant && !(constant >= 0.0)) throw InvalidInput("beta must be non-negative");
        if (!(rkhs_bound >= 0.0)) throw InvalidInput("rkhs_bound must be non-negative");
        if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("delta must lie in (0, 1)");
    }
};

enum class BOStrategy { AELSVI, RoundRobinEI, RoundRobinTS, Random };

inline std::string_view to_string(BOStrategy s) {
    switch (s) {
    case BOStrategy::AELSVI: return "aelsvi";
    case BOStrategy::RoundRobinEI: return "ei";
    case BOStrategy::RoundRobinTS: return "ts";
    case BOStrategy::Random: return "random";
    }
    return "unknown";
}

inline BOStrategy parse_bo_strategy(std::string_view name) {
    if (name == "aelsvi") return BOStrategy::AELSVI;
    if (name == "ei") return BOStrategy::RoundRobinEI;
    if (name == "ts") return BOStrategy::RoundRobinTS;
    if (name == "random") return BOStrategy::Random;
    throw InvalidInput("unknown BO strategy '" + std::string(name) + "'");
}

struct BOSettings {
    std::optional<KernelSpec> kernel; // default: SE with lengthscale = input range
    double lambda = 1.0;
    LambdaCheck lambda_check = LambdaCheck::Strict;
    BetaSchedule beta;
    int init_per_context = 5;
    bool standardize = true; // targets scaled by the mean/sd of the initial data, then frozen
    int refit_every = 10;    // rounds between lengthscale refits; 0 disables
    LengthscaleSearch search;
    Index ts_max_points = 500;

    void validate() const {
        check_lambda(lambda, lambda_check);
        beta.validate();
        if (init_per_context < 0) throw InvalidInput("init_per_context must be >= 0");
        if (refit_every < 0) throw InvalidInput("refit_every must be >= 0");
        if (ts_max_points < 1) throw InvalidInput("ts_max_points must be >= 1");
    }
};

/// Confidence bounds on the contexts x grid product. Matrices are (C x G).
struct BOBounds {
    MatrixXd mean;
    MatrixXd sd;
    MatrixXd ucb;
    MatrixXd lcb;
    double beta = 0.0;
};

/// Index of the context maximizing w(s) * [max_a UCB - max_a LCB]; lowest index on ties.
inline Index select_context(const VectorXd& gaps, const VectorXd& weights) {
    if (gaps.size() == 0) throw InvalidInput("select_context: no contexts");
    if (weights.size() == 0) return argmax_first(gaps);
    if (weights.size() != gaps.size()) throw InvalidInput("select_context: weight count mismatch");
    return argmax_first(VectorXd(gaps.cwiseProduct(weights)));
}

struct BORound {
    Index context = -1;
    VectorXd action;
    double y = std::numeric_limits<double>::quiet_NaN();
};

/// Surrogate state for the offline contextual loop.
///
/// Keeps a Cholesky factor of K + lambda I over all observations and the
/// products L^{-1} k(X, q) for every (context, grid action) query q, so one
/// observation costs O(n * C * G) instead of a refit.
class BOState {
public:
    BOState(BOTask task, BOSettings settings) : task_(std::move(task)), settings_(std::move(settings)) {
        task_.validate();
        settings_.validate();
        const Index d = task_.context_dim() + task_.action_dim();
        ranges_ = VectorXd(d);
        for (Index j = 0; j < task_.context_dim(); ++j) {
            const double w = task_.contexts.col(j).maxCoeff() - task_.contexts.col(j).minCoeff();
            ranges_[j] = w > 0.0 ? w : 1.0;
        }
        for (Index j = 0; j < task_.action_dim(); ++j) {
            const double w = task_.action_box.upper[j] - task_.action_box.lower[j];
            ranges_[task_.context_dim() + j] = w > 0.0 ? w : 1.0;
        }
        spec_ = settings_.kernel ? *settings_.kernel : KernelSpec::squared_exponential(default_lengthscales(ranges_));
        spec_.validate();
        spec_.check_dim(d);
        queries_ = MatrixXd(task_.context_count() * task_.action_grid.rows(), d);
        for (Index c = 0; c < task_.context_count(); ++c)
            for (Index g = 0; g < task_.action_grid.rows(); ++g)
                queries_.row(c * task_.action_grid.rows() + g) = join(task_.context(c), task_.action_grid.row(g).transpose()).transpose();
        query_diag_ = kernel_diag(spec_, queries_);
        inputs_.resize(0, d);
        chol_.resize(0, 0);
        cache_.resize(0, queries_.rows());
        cache_norm_ = VectorXd::Zero(queries_.rows());
    }

    [[nodiscard]] const BOTask& task() const { return task_; }
    [[nodiscard]] const BOSettings& settings() const { return settings_; }
    [[nodiscard]] const KernelSpec& kernel() const { return spec_; }
    [[nodiscard]] Index size() const { return inputs_.rows(); }
    [[nodiscard]] const std::vector<BORound>& history() const { return history_; }
    [[nodiscard]] double offset() const { return offset_; }
    [[nodiscard]] double scale() const { return scale_; }
    [[nodiscard]] const VectorXd& raw_targets() const { return y_raw_; }
    [[nodiscard]] const MatrixXd& inputs() const { return inputs_; }

    /// Noise level in the units the model is fit in.
    [[nodiscard]] double model_noise_sd() const { return task_.noise_sd / scale_; }

    /// 0.5 ln |I + K / lambda| over all observations so far.
    [[nodiscard]] double information_gain() const {
        if (size() == 0) return 0.0;
        return chol_.diagonal().array().log().sum() - 0.5 * static_cast<double>(size()) * std::log(settings_.lambda);
    }

    /// Current width, never below any earlier value (a lengthscale refit can lower gamma).
    [[nodiscard]] double beta() const {
        return std::max(beta_floor_, settings_.beta.value(information_gain(), model_noise_sd()));
    }

    /// Regression model over the current data (targets in model units, label "y").
    [[nodiscard]] KernelModel model() const {
        return KernelModel::from_factor(spec_, settings_.lambda, inputs_, chol_, {{"y", targets()}});
    }

    /// Observe the objective with noise at (context c, action) and update the surrogate.
    BORound observe(Index c, const VectorXd& action, Rng& rng) {
        if (c < 0 || c >= task_.context_count()) throw InvalidInput("observe: context index out of range");
        if (action.size() != task_.action_dim()) throw InvalidInput("observe: action dimension mismatch");
        double y = task_.objective(task_.context(c), action);
        if (task_.noise_sd > 0.0) y += std::normal_distribution<double>(0.0, task_.noise_sd)(rng);
        add_point(join(task_.context(c), action), y);
        BORound r{c, action, y};
        history_.push_back(r);
        if (initialized_) beta_floor_ = beta();
        return r;
    }

    /// Five (by default) uniformly random actions per context, then freeze the
    /// output scaling and fit the initial lengthscales.
    void initialize(Rng& rng) {
        for (Index c = 0; c < task_.context_count(); ++c)
            for (int i = 0; i < settings_.init_per_context; ++i) observe(c, task_.action_box.sample(rng), rng);
        if (settings_.standardize && size() > 1) {
            offset_ = y_raw_.mean();
            const double var = (y_raw_.array() - offset_).square().sum() / static_cast<double>(size() - 1);
            scale_ = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        refresh_targets();
        initialized_ = true;
        if (settings_.refit_every > 0) refit();
        beta_floor_ = beta();
    }

    [[nodiscard]] bool initialized() const { return initialized_; }

    /// Coordinate-search the SE lengthscales on the current data and refactor.
    void refit() {
        if (size() == 0 || spec_.family != KernelFamily::SquaredExponential) return;
        const KernelSpec best = coordinate_search(spec_, inputs_, targets(), settings_.lambda, ranges_, settings_.search);
        if (!(best == spec_)) set_kernel(best);
    }

    void set_kernel(KernelSpec spec) {
        spec.validate();
        spec.check_dim(inputs_.cols());
        spec_ = std::move(spec);
        query_diag_ = kernel_diag(spec_, queries_);
        if (size() == 0) return;
        MatrixXd A = gram(spec_, inputs_);
        A.diagonal().array() += settings_.lambda;
        chol_ = detail::cholesky_lower(A);
        cache_ = cross(spec_, inputs_, queries_);
        chol_.triangularView<Eigen::Lower>().solveInPlace(cache_);
        cache_norm_ = cache_.colwise().squaredNorm().transpose();
        refresh_targets();
        if (initialized_) beta_floor_ = beta();
    }

    /// Mean, sd and confidence bounds at every (context, grid action) pair.
    [[nodiscard]] BOBounds bounds() const {
        const Index C = task_.context_count();
        const Index G = task_.action_grid.rows();
        BOBounds b;
        b.beta = beta();
        b.mean.resize(C, G);
        b.sd.resize(C, G);
        const VectorXd mean = size() > 0 ? VectorXd(cache_.transpose() * z_) : VectorXd(VectorXd::Zero(queries_.rows()));
        for (Index c = 0; c < C; ++c)
            for (Index g = 0; g < G; ++g) {
                const Index q = c * G + g;
                b.mean(c, g) = mean[q];
                b.sd(c, g) = std::sqrt(detail::clamp_variance(query_diag_[q] - cache_norm_[q], query_diag_[q]) / settings_.lambda);
            }
        b.ucb = b.mean + b.beta * b.sd;
        b.lcb = b.mean - b.beta * b.sd;
        return b;
    }

    /// Joint posterior covariance k(q, q') - k_q^T (K + lambda I)^{-1} k_q' over query indices.
    [[nodiscard]] MatrixXd posterior_covariance(const std::vector<Index>& query_index) const {
        const auto m = static_cast<Index>(query_index.size());
        MatrixXd Q(m, queries_.cols());
        MatrixXd W(size(), m);
        for (Index i = 0; i < m; ++i) {
            Q.row(i) = queries_.row(query_index[static_cast<std::size_t>(i)]);
            if (size() > 0) W.col(i) = cache_.col(query_index[static_cast<std::size_t>(i)]);
        }
        MatrixXd cov = gram(spec_, Q);
        if (size() > 0) cov.noalias() -= W.transpose() * W;
        return cov;
    }

private:
    [[nodiscard]] VectorXd targets() const { return (y_raw_.array() - offset_) / scale_; }

    // z = L^{-1} y in model units.
    void refresh_targets() {
        z_ = targets();
        if (size() > 0) chol_.triangularView<Eigen::Lower>().solveInPlace(z_);
    }

    void add_point(const VectorXd& x, double y) {
        const Index n = size();
        const VectorXd kx = n > 0 ? VectorXd(cross(spec_, inputs_, x.transpose())) : VectorXd(0);
        const VectorXd l = n > 0 ? VectorXd(chol_.triangularView<Eigen::Lower>().solve(kx)) : VectorXd(0);
        const double pivot = aelsvi::kernel(spec_, x, x) + settings_.lambda - l.squaredNorm();
        if (!(pivot > 0.0)) throw NumericalError("BOState: Cholesky extension lost positive definiteness");
        const double d = std::sqrt(pivot);

        Eigen::RowVectorXd row = cross(spec_, x.transpose(), queries_);
        if (n > 0) row.noalias() -= l.transpose() * cache_;
        row /= d;
        cache_.conservativeResize(n + 1, Eigen::NoChange);
        cache_.row(n) = row;
        cache_norm_.array() += row.transpose().array().square();

        chol_.conservativeResize(n + 1, n + 1);
        chol_.row(n).setZero();
        chol_.col(n).setZero();
        if (n > 0) chol_.block(n, 0, 1, n) = l.transpose();
        chol_(n, n) = d;
        inputs_.conservativeResize(n + 1, Eigen::NoChange);
        inputs_.row(n) = x.transpose();
        y_raw_.conservativeResize(n + 1);
        y_raw_[n] = y;
        const double y_model = (y - offset_) / scale_;
        z_.conservativeResize(n + 1);
        z_[n] = n > 0 ? (y_model - l.dot(z_.head(n))) / d : y_model / d;
    }

    BOTask task_;
    BOSettings settings_;
    KernelSpec spec_;
    VectorXd ranges_;
    MatrixXd queries_;
    VectorXd query_diag_;
    MatrixXd inputs_;
    VectorXd y_raw_;
    MatrixXd chol_;
    MatrixXd cache_;
    VectorXd cache_norm_;
    VectorXd z_;
    double offset_ = 0.0;
    double scale_ = 1.0;
    bool initialized_ = false;
    double beta_floor_ = 0.0;
    std::vector<BORound> history_;
};

struct BOChoice {
    Index context = 0;
    Index action_index = -1; // grid index, -1 for off-grid actions
    VectorXd action;
    double gap = std::numeric_limits<double>::quiet_NaN();
};

/// Context with the largest (weighted) UCB-LCB value gap, then the UCB-maximizing grid action.
inline BOChoice bo_select(const BOState& state, const BOBounds& b) {
    const Index C = b.ucb.rows();
    VectorXd gaps(C);
    for (Index c = 0; c < C; ++c) gaps[c] = b.ucb.row(c).maxCoeff() - b.lcb.row(c).maxCoeff();
    BOChoice ch;
    ch.context = select_context(gaps, state.task().weights);
    ch.gap = gaps[ch.context];
    ch.action_index = argmax_first(VectorXd(b.ucb.row(ch.context).transpose()));
    ch.action = state.task().action_grid.row(ch.action_index).transpose();
    return ch;
}

inline BOChoice bo_select(const BOState& state) { return bo_select(state, state.bounds()); }

inline double standard_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Expected improvement over `incumbent` for a Gaussian with mean mu and sd s; 0 when s = 0.
inline double expected_improvement(double mu, double s, double incumbent) {
    if (!(s > 0.0)) return 0.0;
    const double z = (mu - incumbent) / s;
    return (mu - incumbent) * standard_normal_cdf(z) + s * standard_normal_pdf(z);
}

/// Baseline choice at round t (1-based). EI and TS visit contexts round robin.
inline BOChoice bo_baseline_select(BOStrategy strategy, const BOState& state, const BOBounds& b, Index t, Rng& rng) {
    const BOTask& task = state.task();
    const Index C = task.context_count();
    const Index G = task.action_grid.rows();
    BOChoice ch;
    switch (strategy) {
    case BOStrategy::Random:
        ch.context = static_cast<Index>(uniform_index(rng, static_cast<std::size_t>(C)));
        ch.action = task.action_box.sample(rng);
        return ch;
    case BOStrategy::RoundRobinEI: {
        ch.context = (t - 1) % C;
        // Incumbent: best observed value in this context, in model units.
        double incumbent = -std::numeric_limits<double>::infinity();
        for (const auto& r : state.history())
            if (r.context == ch.context) incumbent = std::max(incumbent, (r.y - state.offset()) / state.scale());
        if (!std::isfinite(incumbent)) incumbent = b.mean.row(ch.context).maxCoeff();
        const double to_gp_sd = std::sqrt(state.settings().lambda);
        VectorXd ei(G);
        for (Index g = 0; g < G; ++g) ei[g] = expected_improvement(b.mean(ch.context, g), to_gp_sd * b.sd(ch.context, g), incumbent);
        ch.action_index = argmax_first(ei);
        break;
    }
    case BOStrategy::RoundRobinTS: {
        ch.context = (t - 1) % C;
        std::vector<Index> pick(static_cast<std::size_t>(G));
        for (Index g = 0; g < G; ++g) pick[static_cast<std::size_t>(g)] = g;
        if (G > state.settings().ts_max_points) {
            std::shuffle(pick.begin(), pick.end(), rng);
            pick.resize(static_cast<std::size_t>(state.settings().ts_max_points));
            std::sort(pick.begin(), pick.end());
        }
        std::vector<Index> query(pick.size());
        for (std::size_t i = 0; i < pick.size(); ++i) query[i] = ch.context * G + pick[i];
        MatrixXd cov = state.posterior_covariance(query);
        cov.diagonal().array() += 1e-9 * std::max(1.0, cov.diagonal().maxCoeff());
        Eigen::LDLT<MatrixXd> ldlt(cov);
        if (ldlt.info() != Eigen::Success) throw NumericalError("Thompson sampling: posterior covariance factorization failed");
        std::normal_distribution<double> normal(0.0, 1.0);
        VectorXd z(static_cast<Index>(pick.size()));
        for (Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
        const VectorXd root_d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
        VectorXd sample = ldlt.transpositionsP().transpose() * VectorXd(ldlt.matrixL() * root_d.cwiseProduct(z));
        for (Index i = 0; i < z.size(); ++i) sample[i] += b.mean(ch.context, pick[static_cast<std::size_t>(i)]);
        ch.action_index = pick[static_cast<std::size_t>(argmax_first(sample))];
        break;
    }
    case BOStrategy::AELSVI: return bo_select(state, b);
    }
    ch.action = task.action_grid.row(ch.action_index).transpose();
    return ch;
}

/// Reported per-context policy: argmax over grid actions of max_t LCB^t.
class BOReport {
public:
    void add(const BOBounds& b) {
        running_ = running_.size() == 0 ? b.lcb : MatrixXd(running_.cwiseMax(b.lcb));
        latest_mean_ = b.mean;
    }

    [[nodiscard]] bool empty() const { return running_.size() == 0; }
    [[nodiscard]] const MatrixXd& running_lcb() const { return running_; }

    [[nodiscard]] std::vector<Index> pessimistic() const {
        if (empty()) throw InvalidInput("report: no rounds recorded");
        std::vector<Index> out(static_cast<std::size_t>(running_.rows()));
        for (Index c = 0; c < running_.rows(); ++c) out[static_cast<std::size_t>(c)] = argmax_first(VectorXd(running_.row(c).transpose()));
        return out;
    }

    /// argmax of the latest posterior mean, used for the baselines.
    [[nodiscard]] std::vector<Index> mean() const {
        if (empty()) throw InvalidInput("report: no rounds recorded");
        std::vector<Index> out(static_cast<std::size_t>(latest_mean_.rows()));
        for (Index c = 0; c < latest_mean_.rows(); ++c) out[static_cast<std::size_t>(c)] = argmax_first(VectorXd(latest_mean_.row(c).transpose()));
        return out;
    }

private:
    MatrixXd running_;
    MatrixXd latest_mean_;
};

struct BORow {
    Index t = 0;
    Index context = -1;
    VectorXd action;
    double y = std::numeric_limits<double>::quiet_NaN();
    double max_simple_regret = 0.0;
};

/// Initialize, then T rounds of the chosen strategy. Row t is the regret of
/// the reported policy after t rounds (row 0: initial data only).
inline std::vector<BORow> run_bo_loop(const BOTask& task, const BOSettings& settings, BOStrategy strategy, Index T,
                                      const VectorXd& true_max, Rng& rng) {
    if (T < 0) throw InvalidInput("T must be non-negative");
    BOState state(task, settings);
    state.initialize(rng);
    BOReport report;
    BOBounds b = state.bounds();
    report.add(b);
    auto regret = [&]() {
        return max_simple_regret(task, strategy == BOStrategy::AELSVI ? report.pessimistic() : report.mean(), true_max);
    };
    std::vector<BORow> rows;
    rows.push_back(BORow{0, -1, VectorXd(), std::numeric_limits<double>::quiet_NaN(), regret()});
    for (Index t = 1; t <= T; ++t) {
        const BOChoice ch = bo_baseline_select(strategy, state, b, t, rng);
        const BORound r = state.observe(ch.context, ch.action, rng);
        if (settings.refit_every > 0 && t % settings.refit_every == 0) state.refit();
        b = state.bounds();
        report.add(b);
        rows.push_back(BORow{t, r.context, r.action, r.y, regret()});
    }
    return rows;
}

} // namespace aelsvi
