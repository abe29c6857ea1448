#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aelsvi/agents.hpp"
#include "aelsvi/cartpole.hpp"
#include "aelsvi/contextual_bo.hpp"
#include "aelsvi/errors.hpp"
#include "aelsvi/finite_mdp.hpp"
#include "aelsvi/hyperparameters.hpp"
#include "aelsvi/information_gain.hpp"
#include "aelsvi/navigation.hpp"
#include "aelsvi/rng.hpp"

namespace aelsvi {

inline constexpr int kSchemaVersion = 1;

/// Flat run configuration. Every field can come from a JSON file and be
/// overridden from the command line.
struct RunConfig {
    std::string mode = "rl"; // rl | bo | info-gain | policy-eval
    std::string env = "navigation";
    std::string strategy = "aelsvi";
    int T = 40;
    std::optional<double> beta;   // rl: 0.5 when unset; bo: theory schedule when unset
    std::optional<double> lambda; // 1 + 1/T when unset
    std::uint64_t seed = 0;
    int seeds = 1; // bo: consecutive seeds starting at `seed`
    int eval_every = 1;
    int eval_episodes = 10;
    std::string eval_variant = "standard";
    std::string out;

    // rl
    std::optional<int> horizon;
    std::string kernel; // se | delta; default delta for the finite env, se otherwise
    Index candidate_states = 1000;
    int warmup_episodes = 2;
    int refit_every = 10;
    std::string report_rule; // pessimistic | mean; default per strategy
    nlohmann::json mdp;      // finite env: inline MDP document
    std::string mdp_path;    // finite env: MDP document on disk

    // bo
    std::string task = "branin11";
    nlohmann::json task_spec; // explicit task document, overrides `task`
    double noise_sd = 0.01;
    int bo_refit_every = 10;

    // info-gain
    Index pool_size = 500;
    Index dim = 2;
    double lengthscale = 0.2;

    [[nodiscard]] double effective_lambda() const { return lambda ? *lambda : 1.0 + 1.0 / static_cast<double>(T); }

    void validate() const {
        static const std::set<std::string> modes{"rl", "bo", "info-gain", "policy-eval"};
        if (!modes.count(mode)) throw ConfigError("mode must be one of rl, bo, info-gain, policy-eval (got '" + mode + "')");
        if (T < 1) throw ConfigError("T must be >= 1 (got " + std::to_string(T) + ")");
        if (beta && !(*beta >= 0.0)) throw ConfigError("beta must be >= 0");
        if (lambda && !(*lambda >= 1.0)) throw ConfigError("lambda must be >= 1");
        if (seeds < 1) throw ConfigError("seeds must be >= 1");
        if (eval_every < 0) throw ConfigError("eval_every must be >= 0");
        if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
        if (horizon && *horizon < 1) throw ConfigError("horizon must be >= 1");
        if (candidate_states < 1) throw ConfigError("candidate_states must be >= 1");
        if (warmup_episodes < 0) throw ConfigError("warmup_episodes must be >= 0");
        if (refit_every < 0 || bo_refit_every < 0) throw ConfigError("refit_every must be >= 0");
        if (!(noise_sd >= 0.0)) throw ConfigError("noise_sd must be >= 0");
        if (pool_size < 1 || dim < 1) throw ConfigError("pool_size and dim must be >= 1");
        if (!(lengthscale > 0.0)) throw ConfigError("lengthscale must be > 0");
        if (!kernel.empty() && kernel != "se" && kernel != "delta") throw ConfigError("kernel must be se or delta");
        try {
            (void)parse_initial_variant(eval_variant);
            if (mode == "rl" || mode == "policy-eval") {
                (void)parse_strategy(strategy);
                if (!report_rule.empty()) (void)parse_report_rule(report_rule);
            }
            if (mode == "bo") (void)parse_bo_strategy(strategy);
        } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
        }
        if (mode == "rl" || mode == "policy-eval") {
            static const std::set<std::string> envs{"navigation", "cartpole", "finite"};
            if (!envs.count(env)) throw ConfigError("env must be one of navigation, cartpole, finite (got '" + env + "')");
            if (env == "finite" && mdp.is_null() && mdp_path.empty()) throw ConfigError("env 'finite' needs 'mdp' or 'mdp_path'");
        }
    }
};

namespace detail {

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, std::optional<T>& field) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    T value{};
    read_key(j, key, value);
    field = value;
}

} // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{
        "mode",     "env",       "strategy",    "T",          "beta",          "lambda",     "seed",
        "seeds",    "eval_every", "eval_episodes", "eval_variant", "out",     "horizon",    "kernel",
        "candidate_states", "warmup_episodes", "refit_every", "report_rule", "mdp", "mdp_path", "task",
        "task_spec", "noise_sd", "bo_refit_every", "pool_size", "dim", "lengthscale"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    RunConfig c;
    detail::read_key(j, "mode", c.mode);
    detail::read_key(j, "env", c.env);
    detail::read_key(j, "strategy", c.strategy);
    detail::read_key(j, "T", c.T);
    detail::read_key(j, "beta", c.beta);
    detail::read_key(j, "lambda", c.lambda);
    detail::read_key(j, "seed", c.seed);
    detail::read_key(j, "seeds", c.seeds);
    detail::read_key(j, "eval_every", c.eval_every);
    detail::read_key(j, "eval_episodes", c.eval_episodes);
    detail::read_key(j, "eval_variant", c.eval_variant);
    detail::read_key(j, "out", c.out);
    detail::read_key(j, "horizon", c.horizon);
    detail::read_key(j, "kernel", c.kernel);
    detail::read_key(j, "candidate_states", c.candidate_states);
    detail::read_key(j, "warmup_episodes", c.warmup_episodes);
    detail::read_key(j, "refit_every", c.refit_every);
    detail::read_key(j, "report_rule", c.report_rule);
    if (j.contains("mdp")) c.mdp = j.at("mdp");
    detail::read_key(j, "mdp_path", c.mdp_path);
    detail::read_key(j, "task", c.task);
    if (j.contains("task_spec")) c.task_spec = j.at("task_spec");
    detail::read_key(j, "noise_sd", c.noise_sd);
    detail::read_key(j, "bo_refit_every", c.bo_refit_every);
    detail::read_key(j, "pool_size", c.pool_size);
    detail::read_key(j, "dim", c.dim);
    detail::read_key(j, "lengthscale", c.lengthscale);
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    try {
        return run_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
}

/// Canonical JSON form; keys are sorted, so the dump is stable.
inline nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json j = {{"mode", c.mode},
                        {"env", c.env},
                        {"strategy", c.strategy},
                        {"T", c.T},
                        {"lambda", c.effective_lambda()},
                        {"seed", c.seed},
                        {"seeds", c.seeds},
                        {"eval_every", c.eval_every},
                        {"eval_episodes", c.eval_episodes},
                        {"eval_variant", c.eval_variant},
                        {"candidate_states", c.candidate_states},
                        {"warmup_episodes", c.warmup_episodes},
                        {"refit_every", c.refit_every},
                        {"task", c.task},
                        {"noise_sd", c.noise_sd},
                        {"bo_refit_every", c.bo_refit_every},
                        {"pool_size", c.pool_size},
                        {"dim", c.dim},
                        {"lengthscale", c.lengthscale}};
    j["beta"] = c.beta ? nlohmann::json(*c.beta) : nlohmann::json(nullptr);
    j["horizon"] = c.horizon ? nlohmann::json(*c.horizon) : nlohmann::json(nullptr);
    if (!c.kernel.empty()) j["kernel"] = c.kernel;
    if (!c.report_rule.empty()) j["report_rule"] = c.report_rule;
    if (!c.mdp.is_null()) j["mdp"] = c.mdp;
    if (!c.mdp_path.empty()) j["mdp_path"] = c.mdp_path;
    if (!c.task_spec.is_null()) j["task_spec"] = c.task_spec;
    return j;
}

/// FNV-1a of the canonical config, without the seed and output path, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
    nlohmann::json j = to_json(c);
    j.erase("seed");
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(j.dump());
    return os.str();
}

inline std::unique_ptr<GenerativeEnv> make_env(const RunConfig& c) {
    try {
        if (c.env == "navigation") return std::make_unique<Navigation>(c.horizon.value_or(Navigation::kDefaultHorizon));
        if (c.env == "cartpole") {
            CartpoleParams p;
            if (c.horizon) p.horizon = *c.horizon;
            return std::make_unique<Cartpole>(p);
        }
        if (c.env == "finite") {
            nlohmann::json doc = c.mdp;
            if (doc.is_null()) {
                std::ifstream in(c.mdp_path);
                if (!in) throw ConfigError("cannot open MDP file '" + c.mdp_path + "'");
                doc = nlohmann::json::parse(in);
            }
            return std::make_unique<FiniteMdpEnv>(finite_mdp_from_json(doc));
        }
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad MDP document: ") + e.what());
    }
    throw ConfigError("unknown env '" + c.env + "'");
}

/// One kernel per step: SE with lengthscales equal to the state-action ranges, or Delta.
inline std::vector<KernelSpec> make_kernels(const RunConfig& c, const GenerativeEnv& env) {
    const std::string family = c.kernel.empty() ? (c.env == "finite" ? "delta" : "se") : c.kernel;
    KernelSpec spec = KernelSpec::delta();
    if (family == "se") {
        const VectorXd ranges = join(env.state_bounds().width(), env.action_bounds().width());
        spec = KernelSpec::squared_exponential(default_lengthscales(ranges.unaryExpr([](double w) { return w > 0.0 ? w : 1.0; })));
    }
    return std::vector<KernelSpec>(static_cast<std::size_t>(env.horizon()), spec);
}

inline AgentConfig make_agent_config(const RunConfig& c) {
    AgentConfig a;
    try {
        a.strategy = parse_strategy(c.strategy);
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
    a.beta = c.beta.value_or(0.5);
    a.lambda = c.effective_lambda();
    a.candidate_states = c.candidate_states;
    a.warmup_episodes = c.warmup_episodes;
    a.refit_every = c.refit_every;
    return a;
}

inline ReportRule report_rule_for(const RunConfig& c) {
    return c.report_rule.empty() ? default_report_rule(parse_strategy(c.strategy)) : parse_report_rule(c.report_rule);
}

struct RlRow {
    Index t = 0;
    Index env_steps = 0;
    std::string strategy;
    std::string eval_variant;
    double mean_return = 0.0;
    double se_return = 0.0;
    std::optional<double> max_gap;
    double wall_ms = 0.0;
};

inline nlohmann::json to_json(const RlRow& r) {
    return {{"kind", "row"},
            {"t", r.t},
            {"env_steps", r.env_steps},
            {"strategy", r.strategy},
            {"eval_variant", r.eval_variant},
            {"mean_return", r.mean_return},
            {"se_return", r.se_return},
            {"max_gap", r.max_gap ? nlohmann::json(*r.max_gap) : nlohmann::json(nullptr)},
            {"wall_ms", r.wall_ms}};
}

inline nlohmann::json run_header(const RunConfig& c) {
    return {{"schema_version", kSchemaVersion}, {"kind", "header"}, {"config", to_json(c)},
            {"config_hash", config_hash(c)},     {"seed", c.seed}};
}

struct RlRun {
    nlohmann::json header;
    std::vector<RlRow> rows;
};

/// Trains one learner for T episodes. `on_episode(t, agent, result)` runs
/// after each episode. Returns the agent; `env` must outlive it.
template <class Callback>
Agent train_rl(const RunConfig& c, const GenerativeEnv& env, Callback&& on_episode) {
    Agent agent(make_agent_config(c), env, make_kernels(c, env));
    Rng rng = make_stream(c.seed, "agent");
    for (Index t = 1; t <= c.T; ++t) {
        const EpisodeResult result = agent.run_episode(rng);
        on_episode(t, agent, result);
    }
    return agent;
}

/// Evaluation uses a fresh "eval" stream each time, so every evaluation point
/// and every strategy sees the same initial states.
inline PolicyEvaluation evaluate_agent(const Agent& agent, const GenerativeEnv& env, const RunConfig& c,
                                       InitialVariant variant) {
    Rng rng = make_stream(c.seed, "eval");
    return evaluate_policy(agent.report(report_rule_for(c)), env, variant, c.eval_episodes, rng);
}

/// Episode loop with periodic evaluation; rows are also written to `jsonl` when given.
inline RlRun run_rl(const RunConfig& c, std::ostream* jsonl = nullptr) {
    c.validate();
    const auto env = make_env(c);
    const InitialVariant variant = parse_initial_variant(c.eval_variant);
    RlRun run;
    run.header = run_header(c);
    if (jsonl) *jsonl << run.header.dump() << '\n';
    const auto start = std::chrono::steady_clock::now();
    train_rl(c, *env, [&](Index t, const Agent& agent, const EpisodeResult& result) {
        const bool due = (c.eval_every > 0 && t % c.eval_every == 0) || t == c.T;
        if (!due) return;
        RlRow row;
        row.t = t;
        row.env_steps = t * env->horizon();
        row.strategy = c.strategy;
        row.eval_variant = c.eval_variant;
        const PolicyEvaluation ev = evaluate_agent(agent, *env, c, variant);
        row.mean_return = ev.mean_return;
        row.se_return = ev.se_return;
        for (double g : result.gaps)
            if (std::isfinite(g)) row.max_gap = row.max_gap ? std::max(*row.max_gap, g) : g;
        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (jsonl) *jsonl << to_json(row).dump() << '\n';
        run.rows.push_back(std::move(row));
    });
    return run;
}

/// Rebuilds the run recorded in a JSONL file by replaying its config and seed,
/// then evaluates the reported policy from the requested initial distribution.
inline PolicyEvaluation policy_eval(const std::string& run_path, InitialVariant variant, std::optional<int> episodes = {}) {
    std::ifstream in(run_path);
    if (!in) throw ConfigError("cannot open run file '" + run_path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("run file '" + run_path + "' is empty");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("run file header is not valid JSON: " + std::string(e.what()));
    }
    if (header.value("kind", "") != "header" || header.value("schema_version", 0) != kSchemaVersion)
        throw ConfigError("run file '" + run_path + "' has no schema_version 1 header");
    RunConfig c = run_config_from_json(header.at("config"));
    if (config_hash(c) != header.value("config_hash", "")) throw ConfigError("run file config hash does not match its config");
    if (episodes) c.eval_episodes = *episodes;
    c.validate();
    const auto env = make_env(c);
    const Agent agent = train_rl(c, *env, [](Index, const Agent&, const EpisodeResult&) {});
    return evaluate_agent(agent, *env, c, variant);
}

struct SweepRow {
    double beta = 0.0;
    std::uint64_t seed = 0;
    double mean_return = 0.0;
    double se_return = 0.0;
};

/// Final evaluation of one run per (beta, seed); seeds are c.seed .. c.seed + c.seeds - 1.
inline std::vector<SweepRow> beta_sweep(const RunConfig& base, const std::vector<double>& betas) {
    if (betas.empty()) throw ConfigError("beta sweep needs at least one beta");
    std::vector<SweepRow> rows;
    for (double beta : betas)
        for (int k = 0; k < base.seeds; ++k) {
            RunConfig c = base;
            c.beta = beta;
            c.seed = base.seed + static_cast<std::uint64_t>(k);
            c.eval_every = 0;
            const RlRun run = run_rl(c);
            rows.push_back(SweepRow{beta, c.seed, run.rows.back().mean_return, run.rows.back().se_return});
        }
    return rows;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
    MeanSe out;
    if (v.empty()) return out;
    for (double x : v) out.mean += x;
    out.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw InvalidInput("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline BOTask make_bo_task(const RunConfig& c) {
    try {
        if (!c.task_spec.is_null()) {
            nlohmann::json spec = c.task_spec;
            if (!spec.contains("noise_sd")) spec["noise_sd"] = c.noise_sd;
            return bo_task_from_json(spec);
        }
        return benchmark_task(c.task, c.noise_sd);
    } catch (const InvalidInput& e) {
        throw ConfigError(e.what());
    }
}

inline BOSettings make_bo_settings(const RunConfig& c) {
    BOSettings s;
    s.lambda = c.effective_lambda();
    if (c.beta) {
        s.beta.kind = BetaSchedule::Kind::Constant;
        s.beta.constant = *c.beta;
    }
    s.refit_every = c.bo_refit_every;
    return s;
}

struct BoRun {
    std::uint64_t seed = 0;
    std::vector<BORow> rows;
};

/// One BO loop per seed, all against the same dense-grid true maxima.
inline std::vector<BoRun> run_bo(const RunConfig& c) {
    c.validate();
    const BOTask task = make_bo_task(c);
    const BOSettings settings = make_bo_settings(c);
    const BOStrategy strategy = parse_bo_strategy(c.strategy);
    const VectorXd true_max = true_context_maxima(task);
    std::vector<BoRun> runs;
    for (int k = 0; k < c.seeds; ++k) {
        const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(k);
        Rng rng = make_stream(seed, "agent");
        runs.push_back(BoRun{seed, run_bo_loop(task, settings, strategy, c.T, true_max, rng)});
    }
    return runs;
}

inline std::string csv_metadata(const RunConfig& c, std::uint64_t seed) {
    std::ostringstream os;
    os << "# schema_version=" << kSchemaVersion << ",config_hash=" << config_hash(c) << ",seed=" << seed;
    return os.str();
}

inline void write_bo_csv(std::ostream& os, const RunConfig& c, const BoRun& run) {
    os << csv_metadata(c, run.seed) << '\n' << "t,context_index,action,y,max_simple_regret\n";
    os << std::setprecision(17);
    for (const BORow& r : run.rows) {
        os << r.t << ',';
        if (r.context >= 0) os << r.context;
        os << ',';
        for (Index i = 0; i < r.action.size(); ++i) os << (i ? ";" : "") << r.action[i];
        os << ',';
        if (std::isfinite(r.y)) os << r.y;
        os << ',' << r.max_simple_regret << '\n';
    }
}

/// Per-round median of max_simple_regret across seeds.
inline void write_bo_median_csv(std::ostream& os, const RunConfig& c, const std::vector<BoRun>& runs) {
    if (runs.empty()) return;
    os << csv_metadata(c, c.seed) << '\n' << "t,median_max_simple_regret,seeds\n" << std::setprecision(17);
    for (std::size_t i = 0; i < runs.front().rows.size(); ++i) {
        std::vector<double> v;
        for (const auto& run : runs) v.push_back(run.rows[i].max_simple_regret);
        os << runs.front().rows[i].t << ',' << median(v) << ',' << runs.size() << '\n';
    }
}

struct InfoGainRow {
    Index T = 0;
    double gamma = 0.0;
};

/// Greedy information gain at T = 1, 2, 4, ... and the final T, over a
/// uniform pool in [0, 1]^dim. The greedy set for a smaller T is a prefix
/// of the one for a larger T, so a single greedy pass serves the schedule.
inline std::vector<InfoGainRow> info_gain_report(const RunConfig& c) {
    c.validate();
    if (c.T > c.pool_size) throw ConfigError("T must not exceed pool_size");
    const std::string family = c.kernel.empty() ? "se" : c.kernel;
    const KernelSpec spec =
        family == "se" ? KernelSpec::squared_exponential(VectorXd::Constant(c.dim, c.lengthscale)) : KernelSpec::delta();
    Rng rng = make_stream(c.seed, "env");
    MatrixXd pool(c.pool_size, c.dim);
    for (Index i = 0; i < pool.rows(); ++i)
        for (Index j = 0; j < c.dim; ++j) pool(i, j) = uniform01(rng);
    const GreedyGainResult g = greedy_information_gain(spec, pool, c.T, c.effective_lambda());
    std::vector<InfoGainRow> rows;
    for (Index t = 1; t <= c.T; t *= 2) rows.push_back({t, g.prefix_gain[static_cast<std::size_t>(t - 1)]});
    if (rows.back().T != c.T) rows.push_back({c.T, g.gain});
    return rows;
}

} // namespace aelsvi
