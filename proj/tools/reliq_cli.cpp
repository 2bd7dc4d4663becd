#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "reliq/exp.hpp"
#include "reliq/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void bind_experiment_flags(CLI::App* cmd, reliq::exp::ExperimentConfig& cfg) {
    cmd->add_option("--planner", cfg.planner,
                    "reliq | random | ger | mger | lber | nonlber | qpath | "
                    "qleap")
        ->capture_default_str();
    cmd->add_option("--checkpoint", cfg.checkpoint,
                    "model checkpoint (required for the reliq planner)");
    cmd->add_option("--topology", cfg.topology_file,
                    "topology file (.json or .graphml); omit for random");
    cmd->add_option("--repeaters", cfg.repeaters)->capture_default_str();
    cmd->add_option("--pairs", cfg.pairs)->capture_default_str();
    cmd->add_option("--alpha", cfg.alpha_db_per_km, "fiber loss in dB/km")
        ->capture_default_str();
    cmd->add_option("--f0", cfg.f0, "initial link fidelity")
        ->capture_default_str();
    cmd->add_option("--f-gate", cfg.f_gate_mean)->capture_default_str();
    cmd->add_option("--f-gate-spread", cfg.f_gate_spread)
        ->capture_default_str();
    cmd->add_option("--n-dec", cfg.n_dec_mean)->capture_default_str();
    cmd->add_option("--n-dec-spread", cfg.n_dec_spread)
        ->capture_default_str();
    cmd->add_option("--episodes", cfg.episodes)->capture_default_str();
    cmd->add_option("--steps", cfg.steps)->capture_default_str();
    cmd->add_option("--seed", cfg.seed)->capture_default_str();
    cmd->add_option("--workers", cfg.workers,
                    "0 = RELIQ_WORKERS env var, then all cores")
        ->capture_default_str();
    cmd->add_option("--step-duration", cfg.sim.step_duration, "seconds")
        ->capture_default_str();
    cmd->add_flag("--distill", cfg.sim.distill_enabled,
                  "enable on-edge distillation");
}

// The config file (if any) seeds the defaults; explicit flags override.
std::string preparse_config_path(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") return argv[i + 1];
    }
    return "";
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw reliq::exp::ExpError("cannot write " + path);
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Entanglement routing simulator and experiment harness"};
    app.require_subcommand(1);

    reliq::exp::ExperimentConfig cfg;
    try {
        const std::string config_path = preparse_config_path(argc, argv);
        if (!config_path.empty()) {
            cfg = reliq::exp::load_experiment_config(config_path);
        }
    } catch (const std::exception& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    }
    std::string config_file;  // consumed by the preparse above

    // run
    auto* run = app.add_subcommand("run", "run one experiment");
    run->add_option("--config", config_file, "JSON config file");
    bind_experiment_flags(run, cfg);
    std::string run_out, run_csv;
    run->add_option("--out", run_out, "report JSON path (default: stdout)");
    run->add_option("--csv", run_csv, "per-episode CSV path");

    // train
    auto* tr = app.add_subcommand("train", "train the learned router");
    reliq::train::TrainConfig tcfg;
    tcfg.total_steps = 200000;
    std::uint64_t train_seed = 1;
    std::string ckpt_out = "reliq_model.ckpt";
    std::string curve_out;
    bool no_gnn = false;
    tr->add_option("--steps", tcfg.total_steps, "env step budget")
        ->capture_default_str();
    tr->add_option("--nodes", tcfg.n_nodes)->capture_default_str();
    tr->add_option("--pairs", tcfg.n_pairs)->capture_default_str();
    tr->add_option("--episode-length", tcfg.episode_length)
        ->capture_default_str();
    tr->add_option("--batch", tcfg.batch)->capture_default_str();
    tr->add_option("--lr", tcfg.lr)->capture_default_str();
    tr->add_option("--updates", tcfg.updates_per_iteration)
        ->capture_default_str();
    tr->add_option("--seed", train_seed)->capture_default_str();
    tr->add_option("--checkpoint", ckpt_out, "output checkpoint path")
        ->capture_default_str();
    tr->add_option("--curve", curve_out, "learning-curve CSV path");
    tr->add_flag("--q-head-only", no_gnn,
                 "train only the Q head against snapshotted hidden states");

    // sweep
    auto* sw = app.add_subcommand("sweep", "grid of experiments");
    sw->add_option("--config", config_file, "JSON config file");
    bind_experiment_flags(sw, cfg);
    std::vector<std::string> axis_specs;
    std::string sweep_dir = "sweep_out";
    sw->add_option("--axis", axis_specs,
                   "axis as name=v1,v2,... (repeaters, pairs, alpha, f0, "
                   "f_gate_mean, n_dec_mean)")
        ->required();
    sw->add_option("--out-dir", sweep_dir)->capture_default_str();

    // overhead
    auto* ov = app.add_subcommand("overhead", "monitoring traffic model");
    int ov_pairs = 1;
    double ov_step = 0.01;
    int ov_repeaters = 100;
    std::uint64_t ov_seed = 1;
    std::string ov_csv;
    ov->add_option("--pairs", ov_pairs)->capture_default_str();
    ov->add_option("--step-duration", ov_step, "seconds")
        ->capture_default_str();
    ov->add_option("--repeaters", ov_repeaters)->capture_default_str();
    ov->add_option("--seed", ov_seed)->capture_default_str();
    ov->add_option("--csv", ov_csv, "per-node message-count CSV path");

    // tables
    auto* tb = app.add_subcommand(
        "tables", "print the parameter grid and defaults as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) {
            const auto report = reliq::exp::run_experiment(cfg);
            write_or_print(run_out, reliq::exp::report_json(report));
            if (!run_csv.empty()) {
                write_or_print(run_csv, reliq::exp::report_csv(report));
            }
        } else if (*tr) {
            tcfg.train_gnn = !no_gnn;
            tcfg.sim.training_decay = true;
            const auto result = reliq::train::training_run(
                tcfg, train_seed, ckpt_out, curve_out);
            std::cout << "trained for " << tcfg.total_steps
                      << " env steps; checkpoint written to " << ckpt_out
                      << "\n";
            if (!result.curve.empty()) {
                const auto& last = result.curve.back();
                std::cout << "final window: edr/step " << last.edr
                          << ", mean reward " << last.mean_reward
                          << ", loss " << last.loss << "\n";
            }
        } else if (*sw) {
            std::vector<reliq::exp::SweepAxis> axes;
            for (const auto& spec : axis_specs) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) {
                    throw reliq::exp::ExpError("bad axis spec: " + spec);
                }
                reliq::exp::SweepAxis axis;
                axis.name = spec.substr(0, eq);
                std::stringstream ss(spec.substr(eq + 1));
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    axis.values.push_back(std::stod(tok));
                }
                axes.push_back(std::move(axis));
            }
            const auto cells = reliq::exp::sweep(cfg, axes, sweep_dir);
            std::cout << cells.size() << " cells written to " << sweep_dir
                      << "\n";
        } else if (*ov) {
            const auto t = reliq::topo::generate_random(ov_repeaters, ov_seed);
            const auto rep = reliq::exp::overhead_report(t, ov_pairs, ov_step);
            std::cout << "message bytes: " << rep.message_bytes << "\n"
                      << "bits per link per step: " << rep.bits_per_link_step
                      << "\n"
                      << "kbps per link: " << rep.kbps_per_link << "\n";
            if (!ov_csv.empty()) {
                std::string csv = "node,messages_per_step\n";
                for (size_t v = 0; v < rep.per_node_messages.size(); ++v) {
                    csv += std::to_string(v) + "," +
                           std::to_string(rep.per_node_messages[v]) + "\n";
                }
                write_or_print(ov_csv, csv);
            }
        } else if (*tb) {
            std::cout
                << "{\n  \"defaults\": "
                << reliq::exp::experiment_config_json(
                       reliq::exp::ExperimentConfig{})
                << ",\n  \"domains\": {\n"
                << "    \"repeaters\": [10, 30, 100, 300, 1000],\n"
                << "    \"pairs\": [1, 3, 10, 30, 100],\n"
                << "    \"alpha_db_per_km\": [0.15, 0.2, 0.25],\n"
                << "    \"f0\": [0.8, 0.85, 0.9, 0.95, 1.0],\n"
                << "    \"f_gate\": {\"mean\": 1.0, \"spread\": 0.1},\n"
                << "    \"n_dec\": {\"mean\": 1024, \"spread\": 0},\n"
                << "    \"episodes\": 100,\n"
                << "    \"steps\": 1000\n  }\n}\n";
        }
    } catch (const reliq::exp::ExpError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const reliq::topo::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const reliq::topo::IngestionError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const reliq::base::BaseError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const reliq::nn::CheckpointError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        std::cerr << "runtime error: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
