// Command-line front end. Exit codes: 0 success, 1 a check failed,
// 2 bad arguments or configuration, 3 file error, 4 training aborted.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "dribo/evaluation.hpp"
#include "dribo/training.hpp"
#include "dribo/verify.hpp"

namespace {

using namespace dribo;

RunConfig build_config(const std::string& path, bool full_scale, const std::vector<std::string>& overrides) {
    RunConfig base = full_scale ? full_scale_config() : default_config();
    RunConfig cfg = path.empty() ? base : load_config(path, base);
    if (overrides.empty()) return cfg;
    auto kv = config_to_map(cfg);
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + o + "'");
        const std::string key = o.substr(0, eq);
        if (!kv.count(key)) throw ConfigError("unknown config key '" + key + "'");
        kv[key] = o.substr(eq + 1);
    }
    return config_from_map(kv);
}

Learner load_learner(const std::string& path) { return Learner::from_checkpoint(load_checkpoint(path)); }

BackgroundMode parse_mode(const std::string& s) {
    if (s == "train") return BackgroundMode::train;
    if (s == "test") return BackgroundMode::test;
    throw ConfigError("--backgrounds must be train or test");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dribo: multi-view information bottleneck representations for RL"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, out_path, mode = "test";
    std::vector<std::string> overrides;
    bool full_scale = false, print_only = false;
    std::size_t episodes = 8;
    std::uint64_t seed = 1;

    auto* train_cmd = app.add_subcommand("train", "train an encoder jointly with its agent");
    train_cmd->add_option("-c,--config", config_path, "INI config file")->check(CLI::ExistingFile);
    train_cmd->add_flag("--full-scale", full_scale, "start from the full-scale preset");
    train_cmd->add_option("--set", overrides, "override one key, e.g. --set run.episodes=20");
    train_cmd->add_flag("--print-config", print_only, "print the resolved config and exit");

    auto* eval_cmd = app.add_subcommand("eval", "returns on train and test backgrounds plus the SKL probe");
    eval_cmd->add_option("checkpoint", checkpoint)->required();
    eval_cmd->add_option("-n,--episodes", episodes);
    eval_cmd->add_option("-s,--seed", seed);

    auto* export_cmd = app.add_subcommand("export-embeddings", "write representations of played episodes as CSV");
    export_cmd->add_option("checkpoint", checkpoint)->required();
    export_cmd->add_option("-o,--out", out_path)->required();
    export_cmd->add_option("-n,--episodes", episodes);
    export_cmd->add_option("-s,--seed", seed);
    export_cmd->add_option("--backgrounds", mode, "train or test");

    auto* verify_cmd = app.add_subcommand("verify", "exact information checks on enumerable processes");
    verify_cmd->add_option("-s,--seed", seed);

    auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference checks of every gradient");
    grad_cmd->add_option("-s,--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train_cmd) {
            const RunConfig cfg = build_config(config_path, full_scale, overrides);
            if (print_only) {
                std::cout << format_config(cfg);
                return 0;
            }
            const TrainResult r = train(cfg, [](std::size_t e, double ret) {
                std::cout << "episode " << e << " return " << ret << '\n' << std::flush;
            });
            std::cout << "wrote " << r.output.string() << " after " << r.env_steps << " environment steps\n";
        } else if (*eval_cmd) {
            const Learner learner = load_learner(checkpoint);
            const GeneralizationReport r = eval_generalization(learner, episodes, seed);
            std::cout << "train_return\t" << r.train.mean << "\t" << r.train.stddev << '\n'
                      << "test_return\t" << r.test.mean << "\t" << r.test.stddev << '\n'
                      << "skl_probe\t" << r.skl_probe << '\n';
        } else if (*export_cmd) {
            const Learner learner = load_learner(checkpoint);
            std::ofstream out(out_path);
            if (!out) throw IoError("cannot open " + out_path);
            const std::size_t rows = export_embeddings(learner, parse_mode(mode), episodes, seed, out);
            std::cout << "wrote " << rows << " rows to " << out_path << '\n';
        } else if (*verify_cmd) {
            OracleSuiteOptions options;
            options.seed = seed;
            return report_checks(run_oracle_suite(options), std::cout) ? 0 : 1;
        } else if (*grad_cmd) {
            return report_gradchecks(full_gradient_suite(seed), std::cout) ? 0 : 1;
        }
    } catch (const TrainingAborted& e) {
        std::cerr << "training aborted: " << e.what() << '\n';
        return 4;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
