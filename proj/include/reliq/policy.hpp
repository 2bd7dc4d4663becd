#pragma once

#include <random>
#include <vector>

#include "reliq/nn.hpp"
#include "reliq/sim.hpp"

// Decision stack for the learned router: per-node observations, recurrent
// one-hop message passing over the fiber graph, agent observations, action
// masking and masked Q-value selection.
namespace reliq::policy {

struct PolicyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Maximum supported node degree; topologies above this are rejected.
inline constexpr int kMaxDegree = 5;
inline constexpr int kHiddenWidth = 32;
inline constexpr int kMessageSize = 32;
// is_target, f_gate, then per edge slot: link_count, max_fidelity,
// neighbor_is_target.
inline constexpr int kNodeObsSize = 2 + 3 * kMaxDegree;
// pair id, age, then per edge slot: neighbor f_gate, link_count,
// max_fidelity, visited, is_source, is_dest.
inline constexpr int kAgentObsSize = 2 + 6 * kMaxDegree;
inline constexpr int kUpdateInputSize =
    kNodeObsSize + kMaxDegree * kMessageSize;

// Parameter bundle: the per-node update network and GRU that evolve the
// hidden state, the linear message head, and the Q head evaluated at the
// agent's current node.
struct PolicyNet {
    nn::Mlp update_net;   // kUpdateInputSize -> 64 -> kHiddenWidth
    nn::GruCell gru;      // hidden and input both kHiddenWidth
    nn::Mlp message_net;  // kHiddenWidth -> kMessageSize, linear
    nn::Mlp q_net;        // kAgentObsSize + kHiddenWidth -> 64 -> 64 -> D

    PolicyNet() = default;
    explicit PolicyNet(std::uint64_t seed);
    std::vector<nn::ParamTensor*> parameters();
};

// One hidden vector and one outbound message per (pair, node), zeroed at
// episode start. Double-buffered inside monitor_cycle: every new state is
// a function of the previous cycle's messages only.
struct MonitorState {
    std::vector<std::vector<nn::Vector>> hidden;   // [pair][node]
    std::vector<std::vector<nn::Vector>> message;  // [pair][node]
    void reset(int pairs, int nodes);
};

// Local view of `node` for the given pair: target flag, gate quality and
// per-slot link statistics net of reservations. Zero-padded to kMaxDegree.
nn::Vector build_node_observation(const sim::Simulation& s, int node,
                                  int pair);

// View of the agent's current node: pair id, normalized age and per-slot
// neighbor descriptors. Zero-padded to kMaxDegree.
nn::Vector build_agent_observation(const sim::Simulation& s, int agent);

// Node observation followed by the neighbors' previous outbound messages
// in action-slot order; the update network's input.
nn::Vector build_update_input(const sim::Simulation& s,
                              const MonitorState& st, int node, int pair);

// Slot allowed iff within degree, loop-free (destination exempt) and the
// edge has at least one unreserved link.
std::vector<bool> build_action_mask(const sim::Simulation& s, int agent);

// One synchronous message-passing cycle for every (pair, node); also
// accounts messages and node operations into the episode metrics.
void monitor_cycle(sim::Simulation& s, const PolicyNet& net,
                   MonitorState& st);

// Q head over the concatenated agent observation and the hidden state of
// (current node, pair).
nn::Vector q_values(const sim::Simulation& s, const PolicyNet& net,
                    const MonitorState& st, int agent);

// Epsilon-greedy over allowed slots; greedy ties resolve to the lowest
// index. Throws PolicyError when no slot is allowed.
int select_action(const nn::Vector& q, const std::vector<bool>& mask,
                  double epsilon, std::mt19937_64& rng);

}  // namespace reliq::policy
