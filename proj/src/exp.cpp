#include "reliq/exp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "reliq/nn.hpp"

namespace reliq::exp {

using nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
}

topo::GenConfig gen_config(const ExperimentConfig& cfg) {
    topo::GenConfig g;
    g.f_gate_mean = cfg.f_gate_mean;
    g.f_gate_spread = cfg.f_gate_spread;
    g.n_dec_mean = cfg.n_dec_mean;
    g.n_dec_spread = cfg.n_dec_spread;
    return g;
}

std::vector<std::pair<int, int>> pick_pairs(int n_nodes, int n_pairs,
                                            std::mt19937_64& rng) {
    std::vector<std::pair<int, int>> pairs;
    std::uniform_int_distribution<int> node(0, n_nodes - 1);
    for (int i = 0; i < n_pairs; ++i) {
        const int s = node(rng);
        int d = node(rng);
        while (d == s) d = node(rng);
        pairs.emplace_back(s, d);
    }
    return pairs;
}

enum class Driver { reliq, random, baseline };

sim::EpisodeMetrics run_one_episode(const ExperimentConfig& cfg,
                                    const topo::PhysicalTopology& topology,
                                    Driver driver,
                                    const policy::PolicyNet* net,
                                    std::uint64_t episode_seed) {
    std::mt19937_64 rng(mix(episode_seed, 11));
    const auto pairs = pick_pairs(topology.node_count(), cfg.pairs, rng);
    sim::SimConfig scfg = cfg.sim;
    scfg.alpha_db_per_km = cfg.alpha_db_per_km;
    scfg.f0 = cfg.f0;
    sim::Simulation s(topology, scfg, pairs, mix(episode_seed, 13));
    const int n_agents = static_cast<int>(pairs.size());

    policy::MonitorState st;
    std::optional<base::Planner> planner;
    if (driver == Driver::baseline) {
        planner.emplace(base::planner_from_name(cfg.planner), topology,
                        cfg.qpath);
    } else if (driver == Driver::reliq) {
        st.reset(n_agents, topology.node_count());
    }

    const auto hook = [&](sim::Simulation& ss) {
        if (driver == Driver::reliq) {
            policy::monitor_cycle(ss, *net, st);
        } else if (driver == Driver::baseline) {
            planner->observe(ss);
        }
    };
    const auto decide = [&](sim::Simulation& ss) {
        std::vector<int> actions(n_agents, sim::kActionAbort);
        for (int a = 0; a < n_agents; ++a) {
            if (driver == Driver::baseline) {
                actions[a] = planner->decide(ss, a);
                continue;
            }
            const auto mask = policy::build_action_mask(ss, a);
            if (std::none_of(mask.begin(), mask.end(),
                             [](bool m) { return m; })) {
                continue;
            }
            if (driver == Driver::reliq) {
                const nn::Vector q = policy::q_values(ss, *net, st, a);
                actions[a] = policy::select_action(q, mask, 0.0, rng);
            } else {
                nn::Vector q = nn::Vector::Zero(policy::kMaxDegree);
                actions[a] = policy::select_action(q, mask, 1.0, rng);
            }
        }
        return actions;
    };

    const auto t0 = std::chrono::steady_clock::now();
    for (int step = 0; step < cfg.steps; ++step) {
        s.env_step_decide(decide, hook);
    }
    const auto t1 = std::chrono::steady_clock::now();
    s.metrics().wall_seconds =
        std::chrono::duration<double>(t1 - t0).count();
    return s.metrics();
}

int worker_count(const ExperimentConfig& cfg) {
    if (cfg.workers > 0) return cfg.workers;
    if (const char* env = std::getenv("RELIQ_WORKERS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

double quantile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<RankPoint> fidelity_rank_curve(
    const std::vector<std::vector<double>>& per_episode_fidelities) {
    std::vector<std::vector<double>> sorted = per_episode_fidelities;
    std::size_t max_rank = 0;
    for (auto& f : sorted) {
        std::sort(f.begin(), f.end(), std::greater<>());
        max_rank = std::max(max_rank, f.size());
    }
    std::vector<RankPoint> curve;
    for (std::size_t r = 1; r <= max_rank; ++r) {
        std::vector<double> at_rank;
        for (const auto& f : sorted) {
            if (f.size() >= r) at_rank.push_back(f[r - 1]);
        }
        RankPoint pt;
        pt.rank = static_cast<int>(r);
        pt.episodes = static_cast<long>(at_rank.size());
        pt.median = quantile(at_rank, 0.5);
        pt.p25 = quantile(at_rank, 0.25);
        pt.p75 = quantile(at_rank, 0.75);
        curve.push_back(pt);
    }
    return curve;
}

OverheadReport overhead_report(const topo::PhysicalTopology& t, int pairs,
                               double step_duration) {
    OverheadReport rep;
    rep.message_bytes = policy::kMessageSize * 8;  // 32 doubles
    // Two directions per link, once per pair, every step.
    rep.bits_per_link_step = 2L * rep.message_bytes * 8L * pairs;
    const long step_ms = std::llround(step_duration * 1000.0);
    if (step_ms <= 0) throw ExpError("step duration below 1 ms");
    rep.kbps_per_link =
        static_cast<double>(rep.bits_per_link_step * 1000L / step_ms) /
        1000.0;
    rep.per_node_messages.resize(t.node_count());
    for (int v = 0; v < t.node_count(); ++v) {
        rep.per_node_messages[v] = static_cast<long>(t.degree(v)) * pairs;
    }
    return rep;
}

AggregateReport run_experiment(const ExperimentConfig& cfg) {
    if (cfg.episodes <= 0) throw ExpError("episodes must be positive");
    if (cfg.steps < 0) throw ExpError("steps must be nonnegative");

    Driver driver = Driver::baseline;
    policy::PolicyNet net;
    if (cfg.planner == "reliq") {
        driver = Driver::reliq;
        if (cfg.checkpoint.empty()) {
            throw ExpError("the learned planner needs a checkpoint");
        }
        net = policy::PolicyNet(0);
        nn::load_checkpoint(net.parameters(), cfg.checkpoint);
    } else if (cfg.planner == "random") {
        driver = Driver::random;
    } else {
        base::planner_from_name(cfg.planner);  // validates the name
    }

    std::optional<topo::PhysicalTopology> fixed;
    if (!cfg.topology_file.empty()) {
        fixed = topo::load_topology(cfg.topology_file, gen_config(cfg));
    }

    std::vector<sim::EpisodeMetrics> results(cfg.episodes);
    std::vector<int> node_counts(cfg.episodes, 0);
    const int workers = std::min(worker_count(cfg), cfg.episodes);
    auto run_range = [&](int from_worker) {
        for (int e = from_worker; e < cfg.episodes; e += workers) {
            const std::uint64_t eseed = mix(cfg.seed, 100000 + e);
            topo::PhysicalTopology topology =
                fixed ? *fixed
                      : topo::generate_random(cfg.repeaters, eseed,
                                              gen_config(cfg));
            node_counts[e] = topology.node_count();
            results[e] =
                run_one_episode(cfg, topology, driver,
                                driver == Driver::reliq ? &net : nullptr,
                                eseed);
        }
    };
    if (workers <= 1) {
        run_range(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(run_range, w);
        for (auto& th : pool) th.join();
    }

    AggregateReport rep;
    rep.episodes = results;
    std::vector<double> edrs;
    std::vector<std::vector<double>> fids;
    double wall = 0.0;
    double node_step_ops = 0.0;
    long node_steps = 0;
    for (int e = 0; e < cfg.episodes; ++e) {
        const auto& m = results[e];
        edrs.push_back(static_cast<double>(m.edr));
        fids.push_back(m.e2e_fidelities);
        for (int c = 0; c < sim::kFailureCauseCount; ++c) {
            rep.failures[c] += m.failures[c];
        }
        wall += m.wall_seconds;
        node_step_ops += static_cast<double>(m.node_ops);
        node_steps += static_cast<long>(node_counts[e]) * cfg.steps;
    }
    rep.mean_edr =
        std::accumulate(edrs.begin(), edrs.end(), 0.0) / edrs.size();
    rep.median_edr = quantile(edrs, 0.5);
    rep.p25_edr = quantile(edrs, 0.25);
    rep.p75_edr = quantile(edrs, 0.75);
    rep.fidelity_curve = fidelity_rank_curve(fids);
    const auto& overhead_topo =
        fixed ? *fixed
              : topo::generate_random(cfg.repeaters, mix(cfg.seed, 100000),
                                      gen_config(cfg));
    rep.kbps_per_link =
        overhead_report(overhead_topo, cfg.pairs, cfg.sim.step_duration)
            .kbps_per_link;
    rep.node_ops_per_node_step =
        node_steps > 0 ? node_step_ops / static_cast<double>(node_steps)
                       : 0.0;
    rep.wall_seconds_per_step =
        cfg.steps > 0 ? wall / (static_cast<double>(cfg.steps) * cfg.episodes)
                      : 0.0;
    return rep;
}

namespace {

void apply_json(const json& j, ExperimentConfig& cfg) {
    cfg.planner = j.value("planner", cfg.planner);
    cfg.checkpoint = j.value("checkpoint", cfg.checkpoint);
    cfg.topology_file = j.value("topology_file", cfg.topology_file);
    cfg.repeaters = j.value("repeaters", cfg.repeaters);
    cfg.pairs = j.value("pairs", cfg.pairs);
    cfg.alpha_db_per_km = j.value("alpha_db_per_km", cfg.alpha_db_per_km);
    cfg.f0 = j.value("f0", cfg.f0);
    cfg.f_gate_mean = j.value("f_gate_mean", cfg.f_gate_mean);
    cfg.f_gate_spread = j.value("f_gate_spread", cfg.f_gate_spread);
    cfg.n_dec_mean = j.value("n_dec_mean", cfg.n_dec_mean);
    cfg.n_dec_spread = j.value("n_dec_spread", cfg.n_dec_spread);
    cfg.episodes = j.value("episodes", cfg.episodes);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.sim.step_duration = j.value("step_duration", cfg.sim.step_duration);
    cfg.sim.p_max = j.value("p_max", cfg.sim.p_max);
    cfg.sim.distill_enabled =
        j.value("distill_enabled", cfg.sim.distill_enabled);
    cfg.qpath.fidelity_threshold =
        j.value("fidelity_threshold", cfg.qpath.fidelity_threshold);
}

json config_json(const ExperimentConfig& cfg) {
    return json{{"planner", cfg.planner},
                {"checkpoint", cfg.checkpoint},
                {"topology_file", cfg.topology_file},
                {"repeaters", cfg.repeaters},
                {"pairs", cfg.pairs},
                {"alpha_db_per_km", cfg.alpha_db_per_km},
                {"f0", cfg.f0},
                {"f_gate_mean", cfg.f_gate_mean},
                {"f_gate_spread", cfg.f_gate_spread},
                {"n_dec_mean", cfg.n_dec_mean},
                {"n_dec_spread", cfg.n_dec_spread},
                {"episodes", cfg.episodes},
                {"steps", cfg.steps},
                {"seed", cfg.seed},
                {"workers", cfg.workers},
                {"step_duration", cfg.sim.step_duration},
                {"p_max", cfg.sim.p_max},
                {"distill_enabled", cfg.sim.distill_enabled},
                {"fidelity_threshold", cfg.qpath.fidelity_threshold}};
}

json report_to_json(const AggregateReport& rep) {
    json curve = json::array();
    for (const auto& pt : rep.fidelity_curve) {
        curve.push_back(json{{"rank", pt.rank},
                             {"median", pt.median},
                             {"p25", pt.p25},
                             {"p75", pt.p75},
                             {"episodes", pt.episodes}});
    }
    json failures;
    for (int c = 0; c < sim::kFailureCauseCount; ++c) {
        failures[sim::failure_cause_name(
            static_cast<sim::FailureCause>(c))] = rep.failures[c];
    }
    return json{{"mean_edr", rep.mean_edr},
                {"median_edr", rep.median_edr},
                {"p25_edr", rep.p25_edr},
                {"p75_edr", rep.p75_edr},
                {"failures", failures},
                {"fidelity_curve", curve},
                {"kbps_per_link", rep.kbps_per_link},
                {"node_ops_per_node_step", rep.node_ops_per_node_step},
                {"wall_seconds_per_step", rep.wall_seconds_per_step}};
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ExpError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& ex) {
        throw ExpError(std::string("bad config JSON: ") + ex.what());
    }
    ExperimentConfig cfg;
    apply_json(j, cfg);
    return cfg;
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
    return config_json(cfg).dump(2);
}

std::string report_json(const AggregateReport& rep) {
    return report_to_json(rep).dump(2);
}

std::string report_csv(const AggregateReport& rep) {
    std::string out =
        "episode,edr,successes,no_link,swap_failed,below_threshold,ttl,"
        "wall_seconds\n";
    for (size_t e = 0; e < rep.episodes.size(); ++e) {
        const auto& m = rep.episodes[e];
        out += std::to_string(e) + "," + std::to_string(m.edr) + "," +
               std::to_string(m.e2e_fidelities.size());
        for (int c = 0; c < sim::kFailureCauseCount; ++c) {
            out += "," + std::to_string(m.failures[c]);
        }
        out += "," + std::to_string(m.wall_seconds) + "\n";
    }
    return out;
}

std::vector<SweepCell> sweep(const ExperimentConfig& base,
                             const std::vector<SweepAxis>& axes,
                             const std::string& out_dir) {
    if (axes.empty()) throw ExpError("empty sweep grid");
    for (const auto& axis : axes) {
        if (axis.values.empty()) throw ExpError("empty sweep axis: " +
                                                axis.name);
    }
    std::vector<ExperimentConfig> cells{base};
    for (const auto& axis : axes) {
        std::vector<ExperimentConfig> next;
        for (const auto& cfg : cells) {
            for (double v : axis.values) {
                ExperimentConfig c = cfg;
                if (axis.name == "repeaters") {
                    c.repeaters = static_cast<int>(v);
                } else if (axis.name == "pairs") {
                    c.pairs = static_cast<int>(v);
                } else if (axis.name == "alpha") {
                    c.alpha_db_per_km = v;
                } else if (axis.name == "f0") {
                    c.f0 = v;
                } else if (axis.name == "f_gate_mean") {
                    c.f_gate_mean = v;
                } else if (axis.name == "n_dec_mean") {
                    c.n_dec_mean = v;
                } else {
                    throw ExpError("unknown sweep axis: " + axis.name);
                }
                next.push_back(c);
            }
        }
        cells = std::move(next);
    }

    std::vector<SweepCell> out;
    json manifest = json::array();
    for (size_t i = 0; i < cells.size(); ++i) {
        SweepCell cell;
        cell.cfg = cells[i];
        cell.cfg.seed = mix(base.seed, 777 + i);
        cell.report = run_experiment(cell.cfg);
        if (!out_dir.empty()) {
            std::filesystem::create_directories(out_dir);
            const std::string name = "cell_" + std::to_string(i);
            std::ofstream rj(out_dir + "/" + name + ".json");
            rj << json{{"config", config_json(cell.cfg)},
                       {"report", report_to_json(cell.report)}}
                      .dump(2);
            std::ofstream rc(out_dir + "/" + name + ".csv");
            rc << report_csv(cell.report);
        }
        manifest.push_back(json{{"cell", i},
                                {"seed", cell.cfg.seed},
                                {"planner", cell.cfg.planner},
                                {"repeaters", cell.cfg.repeaters},
                                {"pairs", cell.cfg.pairs},
                                {"alpha_db_per_km", cell.cfg.alpha_db_per_km},
                                {"f0", cell.cfg.f0}});
        out.push_back(std::move(cell));
    }
    if (!out_dir.empty()) {
        std::ofstream mf(out_dir + "/manifest.json");
        mf << manifest.dump(2);
    }
    return out;
}

}  // namespace reliq::exp
