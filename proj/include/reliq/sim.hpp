#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reliq/qcalc.hpp"
#include "reliq/topo.hpp"

// Discrete-time environment: elementary-link generation, decay and
// pruning, agent stepping with count-based reservations, sequential swap
// execution and metric collection.
namespace reliq::sim {

struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct SimConfig {
    double step_duration = 0.01;     // seconds per step
    double alpha_db_per_km = 0.2;
    double c_fiber = 2.0e8;          // m/s
    double gen_rate_cap = 1.0e6;     // attempts/s per neighbor
    double f0 = 0.95;                // initial link fidelity
    double f_threshold = 0.5;        // F_th for end-to-end acceptance
    int p_max = 20;                  // TTL in planning hops
    double beta = 2.0 / 3.0;         // T2 pulse scaling
    double swap_success_prob = 1.0;  // Bernoulli swap success
    double distill_target = 0.98;
    bool distill_enabled = false;
    // Training mode swaps Eq-style stretched decay for a plain
    // exponential with per-link tau ~ U[0.5, 1.5] * T2.
    bool training_decay = false;
    int warmup_steps = 1;            // Phase-1 generation rounds
    bool record_events = false;
};

struct ElementaryLink {
    double f0 = 1.0;
    long created_step = 0;
    double tau = 0.0;  // only used under training_decay
};

struct EdgeState {
    std::vector<ElementaryLink> links;
    int reserved = 0;  // count-based, not link-specific
};

enum class FailureCause : int { no_link = 0, swap_failed, below_threshold, ttl };
constexpr int kFailureCauseCount = 4;
const char* failure_cause_name(FailureCause c);

struct SwapOutcome {
    bool success = false;
    FailureCause cause = FailureCause::no_link;
    double fidelity = 0.0;
};

struct RoutingAgent {
    int id = 0;
    int source = 0;
    int dest = 0;
    int current = 0;
    std::vector<int> path;            // starts at {source}
    int age = 0;                      // planning hops so far
    std::map<int, int> reservations;  // edge index -> count
};

struct EpisodeMetrics {
    int edr = 0;
    std::vector<double> e2e_fidelities;
    std::array<long, kFailureCauseCount> failures{};
    long messages_sent = 0;  // monitoring messages, counted by the hook
    long node_ops = 0;       // per-node work units, counted by the hook
    double wall_seconds = 0.0;
};

// Special actions understood by env_step.
constexpr int kActionWait = -1;   // hold position, age still advances
constexpr int kActionAbort = -2;  // give up (dead end), TTL failure

struct AgentEvent {
    long step = 0;
    int agent = 0;
    std::string event;  // moved | success | failure:<cause> | wait
    int edge = -1;
    double fidelity = 0.0;
};

double link_success_prob(double alpha_db_per_km, double length_km);
long attempts_per_step(double length_km, const SimConfig& cfg, int free_slots);
long sample_binomial(long attempts, double p, std::mt19937_64& rng);

class Simulation {
  public:
    Simulation(const topo::PhysicalTopology& topology, SimConfig cfg,
               std::vector<std::pair<int, int>> pairs, std::uint64_t seed);

    // One full environment step: link generation, decay/pruning,
    // optional distillation, the monitoring hook, then one action per
    // live agent. Deterministic given seed, config and actions.
    std::vector<AgentEvent> env_step(
        const std::vector<int>& actions,
        const std::function<void(Simulation&)>& monitor_hook = {});
    // Variant where the actions are decided after link generation and
    // the monitoring hook, from the up-to-date state.
    std::vector<AgentEvent> env_step_decide(
        const std::function<std::vector<int>(Simulation&)>& decide,
        const std::function<void(Simulation&)>& monitor_hook = {});

    // Sub-phases, exposed for targeted tests.
    void generate_links();
    void decay_and_prune();
    void maybe_distill();
    // Moves the agent across the action slot; throws ContractViolation
    // if the move is not allowed (env_step pre-checks instead).
    void agent_move(int agent, int action_slot);
    SwapOutcome execute_swap_chain(int agent);
    void reset_agent(int agent);

    // Views.
    [[nodiscard]] const topo::PhysicalTopology& topology() const {
        return *topo_;
    }
    [[nodiscard]] const SimConfig& config() const { return cfg_; }
    [[nodiscard]] long step() const { return step_; }
    [[nodiscard]] const std::vector<RoutingAgent>& agents() const {
        return agents_;
    }
    [[nodiscard]] const std::vector<EdgeState>& edges() const { return edges_; }
    [[nodiscard]] EpisodeMetrics& metrics() { return metrics_; }
    [[nodiscard]] const EpisodeMetrics& metrics() const { return metrics_; }
    [[nodiscard]] const std::vector<AgentEvent>& event_log() const {
        return events_;
    }

    [[nodiscard]] double link_fidelity(int edge, const ElementaryLink& link) const;
    // Best current fidelity on the edge, 0 when empty.
    [[nodiscard]] double max_link_fidelity(int edge) const;
    [[nodiscard]] int link_count(int edge) const {
        return static_cast<int>(edges_[edge].links.size());
    }
    [[nodiscard]] int available_links(int edge) const {
        return link_count(edge) - edges_[edge].reserved;
    }
    [[nodiscard]] int effective_capacity(int edge) const {
        return capacity_[edge];
    }
    [[nodiscard]] int free_slots(int edge) const {
        return capacity_[edge] - link_count(edge);
    }
    // True when the action slot is a legal move for the agent: slot
    // within degree, loop-free (destination always allowed), and at
    // least one unreserved link on the edge.
    [[nodiscard]] bool move_allowed(int agent, int action_slot) const;
    [[nodiscard]] std::mt19937_64& rng() { return rng_; }

    // Serialized event log, for byte-identical replay checks.
    [[nodiscard]] std::string event_log_json() const;

  private:
    void fail_agent(int agent, FailureCause cause);
    void log(long step, int agent, std::string event, int edge, double f);

    const topo::PhysicalTopology* topo_;
    SimConfig cfg_;
    std::vector<EdgeState> edges_;
    std::vector<int> capacity_;   // effective per-edge slot count
    std::vector<int> min_n_dec_;  // per edge, min endpoint n_dec
    std::vector<RoutingAgent> agents_;
    EpisodeMetrics metrics_;
    std::vector<AgentEvent> events_;
    std::mt19937_64 rng_;
    long step_ = 0;
};

}  // namespace reliq::sim
