#include "reliq/policy.hpp"

#include <algorithm>

namespace reliq::policy {

PolicyNet::PolicyNet(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    update_net = nn::Mlp("update", {kUpdateInputSize, 64, kHiddenWidth}, rng);
    gru = nn::GruCell("gru", kHiddenWidth, kHiddenWidth, rng);
    message_net = nn::Mlp("message", {kHiddenWidth, kMessageSize}, rng);
    q_net = nn::Mlp("q", {kAgentObsSize + kHiddenWidth, 64, 64, kMaxDegree},
                    rng);
}

std::vector<nn::ParamTensor*> PolicyNet::parameters() {
    std::vector<nn::ParamTensor*> out;
    for (auto* p : update_net.params()) out.push_back(p);
    for (auto* p : gru.params()) out.push_back(p);
    for (auto* p : message_net.params()) out.push_back(p);
    for (auto* p : q_net.params()) out.push_back(p);
    return out;
}

void MonitorState::reset(int pairs, int nodes) {
    hidden.assign(pairs, std::vector<nn::Vector>(
                             nodes, nn::Vector::Zero(kHiddenWidth)));
    message.assign(pairs, std::vector<nn::Vector>(
                              nodes, nn::Vector::Zero(kMessageSize)));
}

namespace {

void check_degree(const topo::PhysicalTopology& t, int node) {
    if (t.degree(node) > kMaxDegree) {
        throw PolicyError("node degree exceeds the supported maximum of " +
                          std::to_string(kMaxDegree));
    }
}

}  // namespace

nn::Vector build_node_observation(const sim::Simulation& s, int node,
                                  int pair) {
    const auto& t = s.topology();
    check_degree(t, node);
    const auto& agent = s.agents()[pair];
    nn::Vector obs = nn::Vector::Zero(kNodeObsSize);
    obs(0) = node == agent.dest ? 1.0 : 0.0;
    obs(1) = t.nodes()[node].gate.f_gate;
    const auto& incident = t.incident_edges(node);
    for (size_t slot = 0; slot < incident.size(); ++slot) {
        const int edge = incident[slot];
        const int nb = t.other_end(edge, node);
        const int base = 2 + 3 * static_cast<int>(slot);
        obs(base + 0) = static_cast<double>(s.available_links(edge));
        obs(base + 1) = s.max_link_fidelity(edge);
        obs(base + 2) = nb == agent.dest ? 1.0 : 0.0;
    }
    return obs;
}

nn::Vector build_agent_observation(const sim::Simulation& s, int agent) {
    const auto& t = s.topology();
    const auto& a = s.agents()[agent];
    check_degree(t, a.current);
    nn::Vector obs = nn::Vector::Zero(kAgentObsSize);
    obs(0) = static_cast<double>(a.id) /
             static_cast<double>(std::max<size_t>(1, s.agents().size()));
    obs(1) = static_cast<double>(a.age) / static_cast<double>(s.config().p_max);
    const auto& incident = t.incident_edges(a.current);
    for (size_t slot = 0; slot < incident.size(); ++slot) {
        const int edge = incident[slot];
        const int nb = t.other_end(edge, a.current);
        const int base = 2 + 6 * static_cast<int>(slot);
        obs(base + 0) = t.nodes()[nb].gate.f_gate;
        obs(base + 1) = static_cast<double>(s.available_links(edge));
        obs(base + 2) = s.max_link_fidelity(edge);
        obs(base + 3) =
            std::find(a.path.begin(), a.path.end(), nb) != a.path.end() ? 1.0
                                                                        : 0.0;
        obs(base + 4) = nb == a.source ? 1.0 : 0.0;
        obs(base + 5) = nb == a.dest ? 1.0 : 0.0;
    }
    return obs;
}

nn::Vector build_update_input(const sim::Simulation& s,
                              const MonitorState& st, int node, int pair) {
    const auto& t = s.topology();
    nn::Vector in = nn::Vector::Zero(kUpdateInputSize);
    in.head(kNodeObsSize) = build_node_observation(s, node, pair);
    const auto& incident = t.incident_edges(node);
    for (size_t slot = 0; slot < incident.size(); ++slot) {
        const int nb = t.other_end(incident[slot], node);
        in.segment(kNodeObsSize + static_cast<int>(slot) * kMessageSize,
                   kMessageSize) = st.message[pair][nb];
    }
    return in;
}

std::vector<bool> build_action_mask(const sim::Simulation& s, int agent) {
    const auto& a = s.agents()[agent];
    check_degree(s.topology(), a.current);
    std::vector<bool> mask(kMaxDegree, false);
    for (int slot = 0; slot < s.topology().degree(a.current); ++slot) {
        mask[slot] = s.move_allowed(agent, slot);
    }
    return mask;
}

void monitor_cycle(sim::Simulation& s, const PolicyNet& net,
                   MonitorState& st) {
    const auto& t = s.topology();
    const int pairs = static_cast<int>(s.agents().size());
    const int nodes = t.node_count();
    if (st.hidden.size() != static_cast<size_t>(pairs)) st.reset(pairs, nodes);

    std::vector<std::vector<nn::Vector>> new_hidden(st.hidden);
    std::vector<std::vector<nn::Vector>> new_message(st.message);
    for (int pair = 0; pair < pairs; ++pair) {
        for (int v = 0; v < nodes; ++v) {
            const nn::Vector input = build_update_input(s, st, v, pair);
            const nn::Vector candidate = net.update_net.forward(input);
            new_hidden[pair][v] = net.gru.step(st.hidden[pair][v], candidate);
            new_message[pair][v] = net.message_net.forward(new_hidden[pair][v]);
        }
    }
    st.hidden = std::move(new_hidden);
    st.message = std::move(new_message);

    long degree_sum = 0;
    for (int v = 0; v < nodes; ++v) degree_sum += t.degree(v);
    s.metrics().messages_sent += degree_sum * pairs;
    s.metrics().node_ops += static_cast<long>(nodes) * pairs;
}

nn::Vector q_values(const sim::Simulation& s, const PolicyNet& net,
                    const MonitorState& st, int agent) {
    const auto& a = s.agents()[agent];
    nn::Vector in(kAgentObsSize + kHiddenWidth);
    in.head(kAgentObsSize) = build_agent_observation(s, agent);
    in.tail(kHiddenWidth) = st.hidden[agent][a.current];
    return net.q_net.forward(in);
}

int select_action(const nn::Vector& q, const std::vector<bool>& mask,
                  double epsilon, std::mt19937_64& rng) {
    std::vector<int> allowed;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) allowed.push_back(static_cast<int>(i));
    }
    if (allowed.empty()) {
        throw PolicyError("no allowed action slot");
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < epsilon) {
        std::uniform_int_distribution<size_t> pick(0, allowed.size() - 1);
        return allowed[pick(rng)];
    }
    int best = allowed[0];
    for (int slot : allowed) {
        if (q(slot) > q(best)) best = slot;
    }
    return best;
}

}  // namespace reliq::policy
