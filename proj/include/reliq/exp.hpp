#pragma once

#include <array>
#include <string>
#include <vector>

#include "reliq/base.hpp"
#include "reliq/policy.hpp"

// Experiment harness: episode orchestration over planners and the learned
// router, metric aggregation with percentiles, fidelity-by-rank curves,
// monitoring-overhead accounting and parameter sweeps.
namespace reliq::exp {

struct ExpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    std::string planner = "reliq";  // reliq | random | ger | mger | lber |
                                    // nonlber | qpath | qleap
    std::string checkpoint;         // required when planner == reliq
    std::string topology_file;      // fixed topology; empty -> random
    int repeaters = 100;
    int pairs = 1;
    double alpha_db_per_km = 0.2;
    double f0 = 0.95;
    double f_gate_mean = 1.0;
    double f_gate_spread = 0.1;
    double n_dec_mean = 1024.0;
    double n_dec_spread = 0.0;
    int episodes = 100;
    int steps = 1000;
    std::uint64_t seed = 1;
    int workers = 0;  // 0 -> RELIQ_WORKERS env var, then hardware
    sim::SimConfig sim;
    base::QPathConfig qpath;
};

// JSON (de)serialization of the experiment configuration.
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& cfg);

struct RankPoint {
    int rank = 1;           // 1-based
    double median = 0.0;
    double p25 = 0.0;
    double p75 = 0.0;
    long episodes = 0;      // episodes contributing at this rank
};

struct AggregateReport {
    double mean_edr = 0.0;
    double median_edr = 0.0;
    double p25_edr = 0.0;
    double p75_edr = 0.0;
    std::array<long, sim::kFailureCauseCount> failures{};
    std::vector<RankPoint> fidelity_curve;
    double kbps_per_link = 0.0;         // monitoring load model
    double node_ops_per_node_step = 0.0;
    double wall_seconds_per_step = 0.0;
    std::vector<sim::EpisodeMetrics> episodes;  // raw, per episode
};

// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> values, double q);

// Full experiment: one fresh topology and simulation per episode (seeded
// from the experiment seed and the episode index), episodes fanned out to
// a worker pool, deterministic aggregation.
AggregateReport run_experiment(const ExperimentConfig& cfg);

// Per-rank percentile curve: rank r summarizes the r-th highest
// end-to-end fidelity across the episodes that achieved at least r
// successes.
std::vector<RankPoint> fidelity_rank_curve(
    const std::vector<std::vector<double>>& per_episode_fidelities);

struct OverheadReport {
    long message_bytes = 0;        // one monitoring message
    long bits_per_link_step = 0;   // both directions, all pairs
    double kbps_per_link = 0.0;
    // messages emitted per node per step: degree * pairs (one message to
    // every neighbor, per pair).
    std::vector<long> per_node_messages;
};

// Exact integer accounting of the monitoring traffic.
OverheadReport overhead_report(const topo::PhysicalTopology& t, int pairs,
                               double step_duration);

struct SweepAxis {
    std::string name;  // repeaters | pairs | alpha | f0 | f_gate_mean |
                       // n_dec_mean
    std::vector<double> values;
};

struct SweepCell {
    ExperimentConfig cfg;
    AggregateReport report;
};

// Cartesian product over the axes with otherwise-base values; writes one
// report JSON per cell plus a manifest to out_dir (if non-empty).
std::vector<SweepCell> sweep(const ExperimentConfig& base,
                             const std::vector<SweepAxis>& axes,
                             const std::string& out_dir);

std::string report_json(const AggregateReport& report);
std::string report_csv(const AggregateReport& report);

}  // namespace reliq::exp
