// Command-line front end: data generation, training, closed-loop runs,
// controller comparison and model inspection, driven by one JSON config.
//
// Exit codes: 0 success (target reached for runs), 1 target not reached,
// 2 usage/config error, 3 IO/parse error.

#include "dmpc/config.hpp"
#include "dmpc/model_io.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace dmpc;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> members, kappa, horizon;
    std::optional<double> dropout, lambda, xi;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "JSON config file")
        ->envname("DMPC_CONFIG")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "override the global seed");
}

void add_tuning(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--members", o.members, "ensemble size M");
    cmd->add_option("--dropout", o.dropout, "ensemble dropout rate p");
    cmd->add_option("--kappa", o.kappa, "weight temperature kappa");
    cmd->add_option("--lambda", o.lambda, "full-network blend weight");
    cmd->add_option("--xi", o.xi, "ensemble blend weight");
    cmd->add_option("--horizon", o.horizon, "MPC horizon N");
}

config::Config make_config(const CommonOpts& o) {
    config::Config c =
        o.config_path.empty() ? config::Config{} : config::load_config(o.config_path);
    if (o.seed) c.seed = *o.seed;
    if (o.members) c.ens.members = *o.members;
    if (o.dropout) c.ens.dropout_rate = *o.dropout;
    if (o.kappa) c.ens.kappa = *o.kappa;
    if (o.lambda) c.ens.lambda = *o.lambda;
    if (o.xi) c.ens.xi = *o.xi;
    if (o.horizon) c.mpc.horizon = *o.horizon;
    c.validate();
    return c;
}

int cmd_gen_data(const CommonOpts& opts, const std::string& out_override) {
    config::Config c = make_config(opts);
    c.data.seed = c.seed;
    const std::string out = out_override.empty() ? c.dataset_path : out_override;
    if (c.data.n_random_walk_runs + c.data.n_scripted_runs == 0)
        std::cerr << "warning: zero runs configured; writing a header-only dataset\n";
    const auto runs = plant::generate_corpus(c.data);
    const auto samples = plant::build_dataset(runs, c.data.sample_rate_hz);
    io::save_dataset(samples, out);
    std::cout << "wrote " << samples.size() << " samples to " << out << "\n";
    return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& dataset_override,
              const std::string& model_out_override) {
    config::Config c = make_config(opts);
    const std::string dataset_path =
        dataset_override.empty() ? c.dataset_path : dataset_override;
    const std::string model_out = model_out_override.empty() ? c.model_path : model_out_override;
    const auto samples = io::load_dataset(dataset_path);
    if (samples.size() < 2) throw ConfigError("dataset has fewer than 2 samples");

    net::TrainConfig tc = c.train;
    tc.seed = c.seed;
    std::mt19937_64 rng(mix_seed(c.seed, 1));
    const net::TrainResult result = net::train(samples, tc, rng, c.hidden_dim);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

    net::save_model(result.params, model_out);
    io::save_loss_history(result.train_mse, result.test_mse, c.loss_history_path);
    std::cout << "trained on " << result.train_indices.size() << " samples, tested on "
              << result.test_indices.size() << "\n";
    std::cout << "final_train_mse " << dmpc::detail::fmt17(result.train_mse.back()) << "\n";
    std::cout << "final_test_mse " << dmpc::detail::fmt17(result.test_mse.back()) << "\n";
    std::cout << "wrote model to " << model_out << " and loss history to "
              << c.loss_history_path << "\n";
    return 0;
}

void print_run_summary(const runner::RunLog& log) {
    std::cout << "scenario " << log.scenario_name << ", controller " << log.controller << ": "
              << (log.reached ? "reached" : "not reached") << " in " << log.steps_used
              << " steps\n";
    if (!log.records.empty()) {
        const runner::Metrics m = runner::metrics(log);
        std::cout << "  path_length " << m.path_length << " m, control_effort "
                  << m.control_effort << ", mean_sigma " << m.mean_sigma << ", mean_solve_ms "
                  << m.mean_solve_ms << "\n";
    }
    for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
}

int cmd_run(const CommonOpts& opts, const std::string& scenario_name,
            const std::string& controller, const std::string& model_override,
            const std::string& out_override) {
    config::Config c = make_config(opts);
    const runner::ControllerKind kind = runner::parse_controller(controller);
    runner::Scenario sc = c.scenario(scenario_name);

    net::ModelParams params;
    const net::ModelParams* params_ptr = nullptr;
    if (kind != runner::ControllerKind::oracle_model_mpc) {
        params = net::load_model(model_override.empty() ? c.model_path : model_override);
        params_ptr = &params;
    }
    const runner::RunLog log =
        runner::run_closed_loop(sc, kind, params_ptr, c.mpc, c.ens, c.seed);
    const std::string out = out_override.empty() ? c.run_log_path : out_override;
    runner::save_run_log(log, out);
    print_run_summary(log);
    std::cout << "wrote run log to " << out << "\n";
    return log.reached ? 0 : 1;
}

int cmd_compare(const CommonOpts& opts, const std::string& scenario_name,
                const std::string& model_override, const std::string& out_prefix) {
    config::Config c = make_config(opts);
    runner::Scenario sc = c.scenario(scenario_name);
    const net::ModelParams params =
        net::load_model(model_override.empty() ? c.model_path : model_override);

    const runner::RunLog vanilla = runner::run_closed_loop(
        sc, runner::ControllerKind::vanilla_mpc, &params, c.mpc, c.ens, c.seed);
    const runner::RunLog dropout = runner::run_closed_loop(
        sc, runner::ControllerKind::dropout_mpc, &params, c.mpc, c.ens, c.seed);
    const std::string prefix = out_prefix.empty() ? ("compare_" + scenario_name) : out_prefix;
    runner::save_run_log(vanilla, prefix + "_vanilla.csv");
    runner::save_run_log(dropout, prefix + "_dropout.csv");
    print_run_summary(vanilla);
    print_run_summary(dropout);

    const runner::Comparison cmp = runner::compare(vanilla, dropout);
    std::ofstream csv(prefix + "_table.csv");
    if (!csv) throw IoError("cannot open comparison table for writing");
    csv << "metric,vanilla,dropout,delta_pct\n";
    std::cout << "metric                 vanilla      dropout      delta_pct\n";
    for (const auto& row : cmp.rows) {
        csv << row.metric << ',' << dmpc::detail::fmt17(row.a) << ','
            << dmpc::detail::fmt17(row.b) << ',' << dmpc::detail::fmt17(row.delta_pct) << '\n';
        std::printf("%-22s %-12.5g %-12.5g %.2f\n", row.metric.c_str(), row.a, row.b,
                    row.delta_pct);
    }
    if (!csv) throw IoError("failed while writing comparison table");
    std::cout << "wrote " << prefix << "_{vanilla,dropout}.csv and " << prefix
              << "_table.csv\n";
    return vanilla.reached && dropout.reached ? 0 : 1;
}

int cmd_inspect(const std::string& model_path) {
    const net::ModelParams p = net::load_model(model_path);
    std::cout << "model file: " << model_path << "\n";
    std::cout << "dims: " << p.in_dim << " -> " << p.hidden_dim << " (sigmoid) -> " << p.out_dim
              << "\n";
    std::cout << "dropout_rate: " << p.dropout_rate << "\n";
    std::cout << "input_mean:  " << p.input_mean.transpose() << "\n";
    std::cout << "input_std:   " << p.input_std.transpose() << "\n";
    std::cout << "target_mean: " << p.target_mean.transpose() << "\n";
    std::cout << "target_std:  " << p.target_std.transpose() << "\n";
    std::cout << "||W1||_F " << p.W1.norm() << ", ||b1|| " << p.b1.norm() << ", ||W2||_F "
              << p.W2.norm() << ", ||b2|| " << p.b2.norm() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dropout-ensemble neural MPC for a differential-drive robot"};
    app.require_subcommand(1);

    CommonOpts gen_opts, train_opts, run_opts, cmp_opts;
    std::string gen_out, train_dataset, train_model_out, run_model, run_out, cmp_model,
        cmp_prefix, inspect_path, run_scenario, run_controller, cmp_scenario;

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset CSV");
    add_common(gen, gen_opts);
    gen->add_option("--out", gen_out, "output CSV path (default from config)");

    CLI::App* train = app.add_subcommand("train", "train the dynamics network");
    add_common(train, train_opts);
    train->add_option("--dataset", train_dataset, "dataset CSV (default from config)");
    train->add_option("--model-out", train_model_out, "model file to write");

    CLI::App* run = app.add_subcommand("run", "run one closed-loop experiment");
    add_common(run, run_opts);
    add_tuning(run, run_opts);
    run->add_option("scenario", run_scenario, "nav | park")->required();
    run->add_option("controller", run_controller, "dropout | vanilla | oracle")->required();
    run->add_option("--model", run_model, "model file (default from config)");
    run->add_option("--out", run_out, "run-log CSV to write");

    CLI::App* cmp = app.add_subcommand("compare", "vanilla vs dropout on one scenario");
    add_common(cmp, cmp_opts);
    add_tuning(cmp, cmp_opts);
    cmp->add_option("scenario", cmp_scenario, "nav | park")->required();
    cmp->add_option("--model", cmp_model, "model file (default from config)");
    cmp->add_option("--out-prefix", cmp_prefix, "prefix for the emitted CSVs");

    CLI::App* inspect = app.add_subcommand("inspect", "print a model-file summary");
    inspect->add_option("model", inspect_path, "model file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // help/version exit cleanly; usage errors map to 2
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_opts, gen_out);
        if (train->parsed()) return cmd_train(train_opts, train_dataset, train_model_out);
        if (run->parsed())
            return cmd_run(run_opts, run_scenario, run_controller, run_model, run_out);
        if (cmp->parsed()) return cmd_compare(cmp_opts, cmp_scenario, cmp_model, cmp_prefix);
        if (inspect->parsed()) return cmd_inspect(inspect_path);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
