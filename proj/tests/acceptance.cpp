// Acceptance runs. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. `acceptance 3 6` runs only the listed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aelsvi/aelsvi.hpp"
#include "support/bo_fixtures.hpp"
#include "support/mdp_fixtures.hpp"
#include "support/oracles.hpp"

using namespace aelsvi;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

Outcome kernel_oracle() {
    Rng rng(1001);
    std::uniform_int_distribution<int> size(1, 30);
    std::uniform_int_distribution<int> dims(1, 4);
    std::uniform_real_distribution<double> ls(0.1, 1.5);
    std::uniform_real_distribution<double> lam(1.0, 3.0);
    double worst = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const Index n = size(rng);
        const Index d = dims(rng);
        VectorXd l(d);
        for (Index j = 0; j < d; ++j) l[j] = ls(rng);
        const KernelSpec spec = KernelSpec::squared_exponential(l);
        const double lambda = lam(rng);
        const MatrixXd X = oracle::uniform_points(rng, n, d);
        const VectorXd y = oracle::normal_vector(rng, n);
        KernelModel m = KernelModel::prior(spec, d, lambda, {"y"});
        for (Index i = 0; i < n; ++i) m = m.extend(X.row(i).transpose(), {{"y", y[i]}});
        const MatrixXd Q = oracle::uniform_points(rng, 20, d);
        const Prediction batch = m.predict(Q);
        for (Index q = 0; q < Q.rows(); ++q) {
            const VectorXd x = Q.row(q).transpose();
            const auto ref = oracle::dense_posterior(spec, X, y, lambda, x);
            worst = std::max({worst, std::abs(m.mean("y", x) - ref.mean), std::abs(m.sd(x) - ref.sd),
                              std::abs(batch.mean(q, 0) - ref.mean), std::abs(batch.sd[q] - ref.sd)});
        }
    }
    return {worst <= 1e-8, "max abs error " + fmt(worst)};
}

Outcome finite_exactness() {
    Rng rng = make_stream(2002, "mdp");
    const FiniteMdpEnv env(random_finite_mdp(5, 3, 3, rng, true));
    const auto sol = solve_finite_mdp(env.mdp());
    LsviLearner learner(fixture::finite_settings(env, 0.0, 1e-6), {KernelSpec::delta()});
    for (const auto& ep : fixture::covering_episodes(env, rng)) learner.add_episode(ep);
    auto qb = std::make_shared<const QBounds>(learner.bounds());
    double worst = 0.0;
    for (int h = 1; h <= 3; ++h)
        for (int s = 0; s < 5; ++s)
            for (int a = 0; a < 3; ++a)
                worst = std::max(worst, std::abs(qb->upper_q(h, FiniteMdpEnv::encode(s), FiniteMdpEnv::encode(a)) -
                                                 sol.q[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]));
    const ReportedPolicy policy = report_policy({qb});
    int mismatches = 0;
    for (int h = 1; h <= 3; ++h)
        for (int s = 0; s < 5; ++s)
            if (policy.action_index(h, FiniteMdpEnv::encode(s)) != sol.policy[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(s)])
                ++mismatches;
    return {worst <= 1e-3 && mismatches == 0, "max |upper_q - Q*| " + fmt(worst) + ", policy mismatches " + std::to_string(mismatches)};
}

Outcome confidence_sandwich() {
    int covered = 0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng g = make_stream(static_cast<std::uint64_t>(seed), "mdp");
        const FiniteMdpEnv env(random_finite_mdp(5, 3, 3, g, false));
        const auto sol = solve_finite_mdp(env.mdp());
        AgentConfig cfg;
        cfg.beta = 5.0;
        cfg.refit_every = 0;
        Agent agent(cfg, env, {KernelSpec::delta()});
        Rng rng = make_stream(static_cast<std::uint64_t>(seed), "agent");
        bool ok = true;
        for (int t = 1; t <= 200 && ok; ++t) {
            agent.run_episode(rng);
            const QBounds qb = agent.bounds();
            for (int h = 1; h <= 3; ++h)
                for (int s = 0; s < 5; ++s)
                    for (int a = 0; a < 3; ++a) {
                        const double q = sol.q[static_cast<std::size_t>(h - 1)][static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
                        const VectorXd ss = FiniteMdpEnv::encode(s);
                        const VectorXd aa = FiniteMdpEnv::encode(a);
                        if (qb.lower_q(h, ss, aa) > q + 1e-12 || qb.upper_q(h, ss, aa) < q - 1e-12) ok = false;
                    }
        }
        if (ok) ++covered;
    }
    return {covered >= 19, std::to_string(covered) + "/20 seeds covered at every episode"};
}

Outcome sum_bound() {
    int violations = 0;
    double tightest = 0.0;
    for (int run = 0; run < 20; ++run) {
        RunConfig c;
        c.env = "navigation";
        c.T = 100;
        c.seed = static_cast<std::uint64_t>(run);
        c.refit_every = 0;
        c.candidate_states = 25;
        const auto env = make_env(c);
        const Agent agent = train_rl(c, *env, [](Index, const Agent&, const EpisodeResult&) {});
        const LsviLearner& learner = agent.learner();
        for (int h = 1; h <= env->horizon(); ++h) {
            const MatrixXd X = learner.log().inputs(h);
            const KernelSpec& spec = learner.kernel(h);
            const double lambda = learner.settings().lambda;
            KernelModel m = KernelModel::prior(spec, X.cols(), lambda, {"y"});
            double sum = 0.0;
            for (Index t = 0; t < X.rows(); ++t) {
                sum += m.sd(X.row(t).transpose());
                m = m.extend(X.row(t).transpose(), {{"y", 0.0}});
            }
            const double bound = std::sqrt(3.0 * information_gain(spec, X, lambda) * static_cast<double>(X.rows()));
            if (sum > bound) ++violations;
            tightest = std::max(tightest, sum / bound);
        }
    }
    return {violations == 0, std::to_string(violations) + " violations over 20 runs x 25 steps, max sum/bound " + fmt(tightest)};
}

Outcome uniform_gap_decay() {
    const std::vector<int> budgets = {10, 40, 160};
    std::vector<std::vector<double>> gaps(budgets.size());
    for (int seed = 0; seed < 10; ++seed) {
        Rng g = make_stream(static_cast<std::uint64_t>(seed), "mdp");
        const FiniteMdpEnv env(random_finite_mdp(5, 3, 2, g, false));
        const auto sol = solve_finite_mdp(env.mdp());
        AgentConfig cfg;
        cfg.beta = 2.0;
        cfg.refit_every = 0;
        Agent agent(cfg, env, {KernelSpec::delta()});
        Rng rng = make_stream(static_cast<std::uint64_t>(seed), "agent");
        std::size_t next = 0;
        for (int t = 1; t <= budgets.back(); ++t) {
            agent.run_episode(rng);
            if (t != budgets[next]) continue;
            const ReportedPolicy p = agent.report();
            const auto v = policy_value(env.mdp(), [&](int h, int s) {
                return static_cast<int>(p.action_index(h + 1, FiniteMdpEnv::encode(s)));
            });
            double worst = 0.0;
            for (int s = 0; s < 5; ++s)
                worst = std::max(worst, sol.v[0][static_cast<std::size_t>(s)] - v[0][static_cast<std::size_t>(s)]);
            gaps[next].push_back(worst);
            ++next;
        }
    }
    std::vector<double> med;
    for (const auto& g : gaps) med.push_back(median(g));
    const bool strictly = med[1] < med[0] && med[2] < med[1];
    const bool third = med[2] <= med[0] / 3.0;
    return {strictly && third, "medians T=10 " + fmt(med[0]) + ", T=40 " + fmt(med[1]) + ", T=160 " + fmt(med[2])};
}

RunConfig navigation(const std::string& strategy, std::uint64_t seed) {
    RunConfig c;
    c.env = "navigation";
    c.strategy = strategy;
    c.T = 40;
    c.seed = seed;
    c.eval_every = 0;
    return c;
}

struct NavigationReturns {
    std::vector<double> shifted;
    std::vector<double> standard;
};

// Trains once per seed and evaluates the final reported policy from both initial distributions.
NavigationReturns navigation_returns(const std::string& strategy, std::optional<double> beta = {}) {
    NavigationReturns out;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RunConfig c = navigation(strategy, seed);
        c.beta = beta;
        const auto env = make_env(c);
        const Agent agent = train_rl(c, *env, [](Index, const Agent&, const EpisodeResult&) {});
        out.shifted.push_back(evaluate_agent(agent, *env, c, InitialVariant::Shifted).mean_return);
        out.standard.push_back(evaluate_agent(agent, *env, c, InitialVariant::Standard).mean_return);
    }
    return out;
}

std::map<std::string, NavigationReturns>& navigation_cache() {
    static std::map<std::string, NavigationReturns> cache;
    return cache;
}

const NavigationReturns& cached_returns(const std::string& strategy) {
    auto& cache = navigation_cache();
    auto it = cache.find(strategy);
    if (it == cache.end()) it = cache.emplace(strategy, navigation_returns(strategy)).first;
    return it->second;
}

double mean_of(const std::vector<double>& v) { return mean_se(v).mean; }

Outcome shifted_ordering() {
    const double ae = mean_of(cached_returns("aelsvi").shifted);
    const double random = mean_of(cached_returns("random").shifted);
    const double us = mean_of(cached_returns("us").shifted);
    return {ae > random && ae > us, "shifted means AE-LSVI " + fmt(ae) + ", Random " + fmt(random) + ", US " + fmt(us)};
}

Outcome standard_ordering() {
    const double ae = mean_of(cached_returns("aelsvi").standard);
    const double ucb = mean_of(cached_returns("lsviucb").standard);
    return {ucb >= ae, "standard means LSVI-UCB " + fmt(ucb) + ", AE-LSVI " + fmt(ae)};
}

Outcome bo_coverage_regret() {
    int covered = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed)
        if (fixture::rkhs_coverage_run(seed)) ++covered;

    auto regrets_at = [](const std::string& strategy, int t) {
        RunConfig c;
        c.mode = "bo";
        c.task = "branin11";
        c.strategy = strategy;
        c.T = 150;
        c.seeds = 10;
        std::map<int, std::vector<double>> out;
        for (const BoRun& run : run_bo(c))
            for (const BORow& row : run.rows)
                if (row.t == t || row.t == c.T) out[static_cast<int>(row.t)].push_back(row.max_simple_regret);
        return out;
    };
    const auto ae = regrets_at("aelsvi", 30);
    const auto random = regrets_at("random", 30);
    const double ae30 = median(ae.at(30));
    const double ae150 = median(ae.at(150));
    const double rnd150 = median(random.at(150));
    const bool pass = covered >= 38 && ae150 <= rnd150 && ae150 < ae30;
    return {pass, "coverage " + std::to_string(covered) + "/40; Branin11 median regret AE-LSVI T=30 " + fmt(ae30) + ", T=150 " +
                      fmt(ae150) + ", Random T=150 " + fmt(rnd150)};
}

Outcome beta_direction() {
    const NavigationReturns low = navigation_returns("aelsvi", 0.25);
    const NavigationReturns high = navigation_returns("aelsvi", 2.0);
    const double lo = mean_of(low.shifted);
    const double hi = mean_of(high.shifted);
    return {lo >= hi, "shifted means beta=0.25 " + fmt(lo) + ", beta=2 " + fmt(hi)};
}

std::vector<nlohmann::json> rows_without_timing(const RlRun& run) {
    std::vector<nlohmann::json> out;
    for (const RlRow& r : run.rows) {
        nlohmann::json j = to_json(r);
        j.erase("wall_ms");
        out.push_back(std::move(j));
    }
    return out;
}

// The initialization row has no observation; its y is NaN in both runs.
bool same_value(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

Outcome determinism() {
    int identical = 0;
    int total = 0;
    for (const std::string& strategy : {"aelsvi", "lsviucb", "us", "random", "greedy"}) {
        RunConfig c = navigation(strategy, 7);
        c.T = 6;
        c.eval_every = 2;
        c.candidate_states = 100;
        ++total;
        if (rows_without_timing(run_rl(c)) == rows_without_timing(run_rl(c))) ++identical;
    }
    RunConfig b;
    b.mode = "bo";
    b.task = "hartmann22";
    b.T = 20;
    b.seeds = 2;
    const auto first = run_bo(b);
    const auto second = run_bo(b);
    ++total;
    bool same = first.size() == second.size();
    for (std::size_t k = 0; same && k < first.size(); ++k) {
        same = first[k].rows.size() == second[k].rows.size();
        for (std::size_t i = 0; same && i < first[k].rows.size(); ++i) {
            const BORow& x = first[k].rows[i];
            const BORow& y = second[k].rows[i];
            same = x.t == y.t && x.context == y.context && x.action == y.action && same_value(x.y, y.y) && x.max_simple_regret == y.max_simple_regret;
        }
    }
    if (same) ++identical;
    return {identical == total, std::to_string(identical) + "/" + std::to_string(total) + " configs reproduced exactly"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"kernel regression oracle equivalence", kernel_oracle},
        {"finite MDP exactness", finite_exactness},
        {"confidence sandwich", confidence_sandwich},
        {"sum of sd bound", sum_bound},
        {"uniform gap decay", uniform_gap_decay},
        {"shifted initial state ordering", shifted_ordering},
        {"standard initial state ordering", standard_ordering},
        {"BO coverage and regret", bo_coverage_regret},
        {"beta direction", beta_direction},
        {"determinism", determinism},
    };
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!wanted.empty() && !wanted.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!out.pass) ++failed;
        std::printf("%s %2d %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), out.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
