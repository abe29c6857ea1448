#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aelsvi/aelsvi.hpp"

namespace {

using namespace aelsvi;

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

// Flags shared by the run subcommands; unset flags leave the config file's value alone.
struct Overrides {
    std::string config_path;
    std::optional<std::string> strategy;
    std::optional<double> beta;
    std::optional<double> lambda;
    std::optional<std::uint64_t> seed;
    std::optional<int> seeds;
    std::optional<int> T;
    std::optional<std::string> env;
    std::optional<std::string> task;
    std::optional<std::string> eval_variant;
    std::optional<int> eval_every;
    std::optional<int> eval_episodes;
    std::optional<std::string> out;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat JSON config file");
        cmd->add_option("--strategy", strategy, "strategy name");
        cmd->add_option("--beta", beta, "confidence width");
        cmd->add_option("--lambda", lambda, "regularization (default 1 + 1/T)");
        cmd->add_option("--seed", seed, "run seed");
        cmd->add_option("--seeds", seeds, "number of consecutive seeds");
        cmd->add_option("--T", T, "episodes or rounds");
        cmd->add_option("--env", env, "navigation|cartpole|finite");
        cmd->add_option("--task", task, "branin11|hartmann22|hartmann31|hartmann42");
        cmd->add_option("--eval-variant", eval_variant, "standard|shifted|uniform");
        cmd->add_option("--eval-every", eval_every, "episodes between evaluations (0: final only)");
        cmd->add_option("--eval-episodes", eval_episodes, "rollouts per evaluation");
        cmd->add_option("--out", out, "output path (default stdout)");
    }

    [[nodiscard]] RunConfig resolve(const std::string& mode) const {
        RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        c.mode = mode;
        if (strategy) c.strategy = *strategy;
        if (beta) c.beta = *beta;
        if (lambda) c.lambda = *lambda;
        if (seed) c.seed = *seed;
        if (seeds) c.seeds = *seeds;
        if (T) c.T = *T;
        if (env) c.env = *env;
        if (task) c.task = *task;
        if (eval_variant) c.eval_variant = *eval_variant;
        if (eval_every) c.eval_every = *eval_every;
        if (eval_episodes) c.eval_episodes = *eval_episodes;
        if (out) c.out = *out;
        c.validate();
        return c;
    }
};

std::ofstream open_output(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write '" + path + "'");
    return os;
}

std::vector<double> parse_betas(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse beta value '" + item + "'");
        }
        if (!(out.back() >= 0.0)) throw ConfigError("beta values must be >= 0");
    }
    if (out.empty()) throw ConfigError("--betas needs at least one value");
    return out;
}

void cmd_rl(const RunConfig& c) {
    if (c.out.empty()) {
        run_rl(c, &std::cout);
        return;
    }
    std::ofstream os = open_output(c.out);
    run_rl(c, &os);
}

void cmd_bo(const RunConfig& c) {
    const std::vector<BoRun> runs = run_bo(c);
    if (runs.size() == 1) {
        if (c.out.empty()) {
            write_bo_csv(std::cout, c, runs.front());
        } else {
            std::ofstream os = open_output(c.out);
            write_bo_csv(os, c, runs.front());
        }
        return;
    }
    if (c.out.empty()) {
        write_bo_median_csv(std::cout, c, runs);
        return;
    }
    const std::filesystem::path out(c.out);
    const std::filesystem::path stem = out.parent_path() / out.stem();
    for (const BoRun& run : runs) {
        std::ofstream os = open_output(stem.string() + "_seed" + std::to_string(run.seed) + ".csv");
        write_bo_csv(os, c, run);
    }
    std::ofstream os = open_output(stem.string() + "_median.csv");
    write_bo_median_csv(os, c, runs);
}

void cmd_sweep(const RunConfig& c, const std::vector<double>& betas) {
    const std::vector<SweepRow> rows = beta_sweep(c, betas);
    std::ofstream file;
    if (!c.out.empty()) file = open_output(c.out);
    std::ostream& os = c.out.empty() ? std::cout : file;
    os << csv_metadata(c, c.seed) << '\n' << "env,strategy,beta,seed,mean_return,se_return\n" << std::setprecision(10);
    for (const SweepRow& r : rows)
        os << c.env << ',' << c.strategy << ',' << r.beta << ',' << r.seed << ',' << r.mean_return << ',' << r.se_return << '\n';
    std::map<double, std::vector<double>> by_beta;
    for (const SweepRow& r : rows) by_beta[r.beta].push_back(r.mean_return);
    for (const auto& [beta, values] : by_beta) {
        const MeanSe m = mean_se(values);
        std::cerr << c.env << " beta=" << beta << ": " << m.mean << " +- " << m.se << " (" << values.size() << " seeds)\n";
    }
}

void cmd_info_gain(const RunConfig& c) {
    const std::vector<InfoGainRow> rows = info_gain_report(c);
    std::ofstream file;
    if (!c.out.empty()) file = open_output(c.out);
    std::ostream& os = c.out.empty() ? std::cout : file;
    os << csv_metadata(c, c.seed) << '\n' << "T,gamma\n" << std::setprecision(17);
    for (const InfoGainRow& r : rows) os << r.T << ',' << r.gamma << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kernelized value iteration with active exploration"};
    app.require_subcommand(1);

    Overrides rl_flags;
    auto* rl = app.add_subcommand("rl-run", "run one RL learner and write JSONL evaluation rows");
    rl_flags.add_to(rl);

    Overrides bo_flags;
    auto* bo = app.add_subcommand("bo-run", "run the offline contextual optimization loop and write CSV rows");
    bo_flags.add_to(bo);
    std::optional<int> bo_refit;
    std::optional<double> noise_sd;
    bo->add_option("--refit-every", bo_refit, "rounds between lengthscale refits");
    bo->add_option("--noise-sd", noise_sd, "observation noise sd");

    Overrides sweep_flags;
    std::string betas_text;
    auto* sweep = app.add_subcommand("beta-sweep", "final returns of rl-run over a list of beta values");
    sweep_flags.add_to(sweep);
    sweep->add_option("--betas", betas_text, "comma-separated beta values")->required();

    RunConfig ig;
    ig.mode = "info-gain";
    std::string ig_kernel = "se";
    std::optional<double> ig_lambda;
    std::string ig_out;
    auto* info = app.add_subcommand("info-gain", "greedy information gain on a random pool");
    info->add_option("--kernel", ig_kernel, "se|delta");
    info->add_option("--pool-size", ig.pool_size, "pool points")->required();
    info->add_option("--T", ig.T, "largest subset size")->required();
    info->add_option("--dim", ig.dim, "pool dimension");
    info->add_option("--lengthscale", ig.lengthscale, "SE lengthscale");
    info->add_option("--lambda", ig_lambda, "regularization (default 1 + 1/T)");
    info->add_option("--seed", ig.seed, "pool seed");
    info->add_option("--out", ig_out, "output path (default stdout)");

    std::string run_path;
    std::string variant = "standard";
    std::optional<int> episodes;
    auto* peval = app.add_subcommand("policy-eval", "replay a recorded rl-run and evaluate its reported policy");
    peval->add_option("--run", run_path, "JSONL file written by rl-run")->required();
    peval->add_option("--variant", variant, "standard|shifted|uniform");
    peval->add_option("--episodes", episodes, "evaluation rollouts (default: the run's eval_episodes)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (rl->parsed()) {
            cmd_rl(rl_flags.resolve("rl"));
        } else if (bo->parsed()) {
            RunConfig c = bo_flags.resolve("bo");
            if (bo_refit) c.bo_refit_every = *bo_refit;
            if (noise_sd) c.noise_sd = *noise_sd;
            c.validate();
            cmd_bo(c);
        } else if (sweep->parsed()) {
            cmd_sweep(sweep_flags.resolve("rl"), parse_betas(betas_text));
        } else if (info->parsed()) {
            ig.kernel = ig_kernel;
            ig.lambda = ig_lambda;
            ig.out = ig_out;
            ig.validate();
            cmd_info_gain(ig);
        } else if (peval->parsed()) {
            const PolicyEvaluation ev = policy_eval(run_path, parse_initial_variant(variant), episodes);
            nlohmann::json j = {{"run", run_path}, {"variant", variant}, {"mean_return", ev.mean_return}, {"se_return", ev.se_return}};
            std::cout << j.dump() << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InvalidInput& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
    return 0;
}
