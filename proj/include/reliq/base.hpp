#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "reliq/sim.hpp"

// Baseline planners: local greedy heuristics (GER, MGER, LBER, NoNLBER)
// and centralized snapshot planners (Q-PATH, Q-LEAP) with an explicit
// information-staleness model. The heuristic rules are reconstructions of
// commonly cited schemes: greedy hop-distance routing, load-spread and
// fidelity-greedy variants, a two-hop lookahead, and utility-cost /
// fidelity-product global path selection with a feasibility threshold.
namespace reliq::base {

struct BaseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All-pairs hop distances by breadth-first search.
std::vector<std::vector<int>> hop_distances(const topo::PhysicalTopology& t);

// Node with minimum eccentricity (ties to the lowest id); the natural
// coordinator placement.
int min_eccentricity_node(const topo::PhysicalTopology& t);

struct EdgeRecord {
    int link_count = 0;
    double max_fidelity = 0.0;
};

// Coordinator-side view: per edge, the most recent record that could have
// reached the coordinator, which is the state from `age[e]` steps ago
// where age = hop distance from the nearer endpoint.
struct StaleSnapshot {
    int coordinator = 0;
    std::vector<int> age;                         // per edge
    std::vector<std::vector<EdgeRecord>> history;  // per edge, newest first
    std::vector<int> node_dist;                   // coordinator -> node

    // Record as seen with `extra_age` additional steps of staleness
    // (e.g. the dispatch distance from the coordinator to the source).
    [[nodiscard]] EdgeRecord edge_at(int e, int extra_age = 0) const;
    [[nodiscard]] EdgeRecord edge(int e) const { return edge_at(e, 0); }
};

// Per-step recorder feeding the coordinator. record() must be called
// once per env step after link generation.
class CentralMonitor {
  public:
    CentralMonitor(const topo::PhysicalTopology& t, int coordinator,
                   int horizon = 64);
    void record(const sim::Simulation& s);
    [[nodiscard]] StaleSnapshot central_collect() const;
    [[nodiscard]] int coordinator() const { return coordinator_; }

  private:
    const topo::PhysicalTopology* topo_;
    int coordinator_;
    int horizon_;
    std::vector<int> age_;
    std::vector<int> node_dist_;
    std::vector<std::deque<EdgeRecord>> history_;
};

// One-step-stale per-edge view used for the two-hop lookahead.
struct TwoHopView {
    std::vector<EdgeRecord> prev;  // state recorded on the previous step
    std::vector<EdgeRecord> next;  // pending, becomes prev on the next tick
    void record(const sim::Simulation& s);
};

// Local heuristics. Each returns an action slot at the agent's current
// node, or sim::kActionAbort when no candidate neighbor qualifies.
// Candidates always satisfy the loop rule and hold an unreserved link.
int ger_next_hop(const sim::Simulation& s, int agent,
                 const std::vector<std::vector<int>>& dist);
int mger_next_hop(const sim::Simulation& s, int agent,
                  const std::vector<std::vector<int>>& dist);
int lber_next_hop(const sim::Simulation& s, int agent,
                  const std::vector<std::vector<int>>& dist);
int nonlber_next_hop(const sim::Simulation& s, int agent,
                     const std::vector<std::vector<int>>& dist,
                     const TwoHopView& view);

struct QPathConfig {
    double fidelity_threshold = 0.7;
    double alpha_star = 0.5;  // resource weight
    double beta_star = 0.5;   // hop weight
};

struct Plan {
    std::vector<int> path;           // node sequence source..dest
    std::vector<int> distill_edges;  // edges budgeted for distillation
    double estimated_fidelity = 0.0;
};

// Min-cost path over snapshot edges with links; edge cost
// alpha*/link_count + beta*. Feasible when the product of per-edge best
// fidelities (after budgeted distillation on weak edges with spare
// links) reaches the threshold. Snapshot entries are read with the
// dispatch distance coordinator->source as extra staleness.
std::optional<Plan> qpath_plan(const topo::PhysicalTopology& t,
                               const StaleSnapshot& snap, int source,
                               int dest, const QPathConfig& cfg);

// Same feasibility rules, but the path maximizes the fidelity product
// (shortest path under -log fidelity weights).
std::optional<Plan> qleap_plan(const topo::PhysicalTopology& t,
                               const StaleSnapshot& snap, int source,
                               int dest, const QPathConfig& cfg);

enum class PlannerKind { ger, mger, lber, nonlber, qpath, qleap };
PlannerKind planner_from_name(const std::string& name);
const char* planner_name(PlannerKind kind);

// Uniform driver: observe() once per step (from the env monitoring
// hook), then decide() per agent. Global planners hold per-agent plans
// and replan after every agent reset.
class Planner {
  public:
    Planner(PlannerKind kind, const topo::PhysicalTopology& t,
            QPathConfig qcfg = {});
    void observe(const sim::Simulation& s);
    int decide(const sim::Simulation& s, int agent);
    [[nodiscard]] PlannerKind kind() const { return kind_; }
    [[nodiscard]] int coordinator() const { return monitor_.coordinator(); }

  private:
    PlannerKind kind_;
    const topo::PhysicalTopology* topo_;
    QPathConfig qcfg_;
    std::vector<std::vector<int>> dist_;
    CentralMonitor monitor_;
    TwoHopView twohop_;
    std::vector<Plan> plans_;          // per agent
    std::vector<bool> plan_valid_;
};

}  // namespace reliq::base
