#include "reliq/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace reliq::sim {

const char* failure_cause_name(FailureCause c) {
    switch (c) {
        case FailureCause::no_link: return "no_link";
        case FailureCause::swap_failed: return "swap_failed";
        case FailureCause::below_threshold: return "below_threshold";
        case FailureCause::ttl: return "ttl";
    }
    return "?";
}

double link_success_prob(double alpha_db_per_km, double length_km) {
    return std::exp(-alpha_db_per_km * length_km / 10.0);
}

long attempts_per_step(double length_km, const SimConfig& cfg, int free_slots) {
    if (free_slots <= 0) return 0;
    const double round_trips =
        cfg.c_fiber * cfg.step_duration / (2.0 * length_km * 1000.0);
    const long per_slot =
        std::min(static_cast<long>(round_trips),
                 static_cast<long>(cfg.gen_rate_cap * cfg.step_duration));
    return per_slot * free_slots;
}

long sample_binomial(long attempts, double p, std::mt19937_64& rng) {
    if (attempts <= 0 || p <= 0.0) return 0;
    if (p >= 1.0) return attempts;
    std::binomial_distribution<long> dist(attempts, p);
    return dist(rng);
}

Simulation::Simulation(const topo::PhysicalTopology& topology, SimConfig cfg,
                       std::vector<std::pair<int, int>> pairs,
                       std::uint64_t seed)
    : topo_(&topology), cfg_(std::move(cfg)), rng_(seed) {
    edges_.resize(topo_->edge_count());
    capacity_.resize(topo_->edge_count());
    min_n_dec_.resize(topo_->edge_count());
    const auto buckets = topo::qubit_buckets(*topo_);
    for (int e = 0; e < topo_->edge_count(); ++e) {
        const auto& edge = topo_->edges()[e];
        int cap = std::min(buckets.buckets[edge.u].at(edge.v),
                           buckets.buckets[edge.v].at(edge.u));
        if (edge.capacity > 0) cap = std::min(cap, edge.capacity);
        capacity_[e] = cap;
        min_n_dec_[e] = std::min(topo_->nodes()[edge.u].n_dec,
                                 topo_->nodes()[edge.v].n_dec);
    }
    int id = 0;
    for (const auto& [s, d] : pairs) {
        if (s < 0 || s >= topo_->node_count() || d < 0 ||
            d >= topo_->node_count() || s == d) {
            throw ContractViolation("invalid source-destination pair");
        }
        RoutingAgent a;
        a.id = id++;
        a.source = s;
        a.dest = d;
        a.current = s;
        a.path = {s};
        agents_.push_back(std::move(a));
    }
    for (int w = 0; w < cfg_.warmup_steps; ++w) generate_links();
}

double Simulation::link_fidelity(int edge, const ElementaryLink& link) const {
    const double age_s =
        static_cast<double>(step_ - link.created_step) * cfg_.step_duration;
    if (cfg_.training_decay && link.tau > 0.0) {
        return (link.f0 - qcalc::kBaselineFidelity) * std::exp(-age_s / link.tau) +
               qcalc::kBaselineFidelity;
    }
    qcalc::DecayParams p;
    p.f0 = link.f0;
    p.n_dec = min_n_dec_[edge];
    p.beta = cfg_.beta;
    return qcalc::decay_fidelity(p, age_s);
}

double Simulation::max_link_fidelity(int edge) const {
    double best = 0.0;
    for (const auto& l : edges_[edge].links) {
        best = std::max(best, link_fidelity(edge, l));
    }
    return best;
}

void Simulation::generate_links() {
    for (int e = 0; e < topo_->edge_count(); ++e) {
        const int free = free_slots(e);
        if (free <= 0) continue;
        const double length = topo_->edges()[e].length_km;
        const long attempts = attempts_per_step(length, cfg_, free);
        const double p = link_success_prob(cfg_.alpha_db_per_km, length);
        const long successes = sample_binomial(attempts, p, rng_);
        const long created = std::min<long>(successes, free);
        for (long i = 0; i < created; ++i) {
            ElementaryLink link;
            link.f0 = cfg_.f0;
            link.created_step = step_;
            if (cfg_.training_decay) {
                qcalc::DecayParams dp;
                dp.n_dec = min_n_dec_[e];
                dp.beta = cfg_.beta;
                const double t2 =
                    qcalc::t2_from_pulses(dp.n_dec, dp.beta, dp.t2_base);
                std::uniform_real_distribution<double> u(0.5, 1.5);
                link.tau = u(rng_) * t2;
            }
            edges_[e].links.push_back(link);
        }
    }
}

void Simulation::decay_and_prune() {
    for (int e = 0; e < topo_->edge_count(); ++e) {
        auto& st = edges_[e];
        std::erase_if(st.links, [&](const ElementaryLink& l) {
            return link_fidelity(e, l) <= qcalc::kBaselineFidelity;
        });
        // Reserved links expire with the rest; agents discover the loss
        // as a no_link failure at execution time.
        st.reserved = std::min(st.reserved, link_count(e));
    }
}

void Simulation::maybe_distill() {
    if (!cfg_.distill_enabled) return;
    for (int e = 0; e < topo_->edge_count(); ++e) {
        auto& st = edges_[e];
        while (available_links(e) >= 2) {
            // Two lowest-fidelity unreserved candidates.
            int lo1 = -1, lo2 = -1;
            double f1 = 2.0, f2 = 2.0;
            for (int i = 0; i < link_count(e); ++i) {
                const double f = link_fidelity(e, st.links[i]);
                if (f < f1) {
                    lo2 = lo1;
                    f2 = f1;
                    lo1 = i;
                    f1 = f;
                } else if (f < f2) {
                    lo2 = i;
                    f2 = f;
                }
            }
            if (lo1 < 0 || lo2 < 0 || f1 >= cfg_.distill_target) break;
            if (f1 <= 0.5 || f2 <= 0.5) break;
            const auto res = qcalc::distill_pair(f1, f2);
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const bool ok = u(rng_) < res.p_success;
            // Remove the consumed pair (higher index first).
            st.links.erase(st.links.begin() + std::max(lo1, lo2));
            st.links.erase(st.links.begin() + std::min(lo1, lo2));
            if (ok) {
                ElementaryLink fresh;
                fresh.f0 = res.f_out;
                fresh.created_step = step_;
                edges_[e].links.push_back(fresh);
            }
        }
    }
}

bool Simulation::move_allowed(int agent, int action_slot) const {
    const RoutingAgent& a = agents_[agent];
    const auto& incident = topo_->incident_edges(a.current);
    if (action_slot < 0 || action_slot >= static_cast<int>(incident.size())) {
        return false;
    }
    const int edge = incident[action_slot];
    const int target = topo_->other_end(edge, a.current);
    if (target != a.dest &&
        std::find(a.path.begin(), a.path.end(), target) != a.path.end()) {
        return false;
    }
    return available_links(edge) >= 1;
}

void Simulation::agent_move(int agent, int action_slot) {
    if (!move_allowed(agent, action_slot)) {
        throw ContractViolation("agent move not allowed by the mask");
    }
    RoutingAgent& a = agents_[agent];
    const int edge = topo_->incident_edges(a.current)[action_slot];
    edges_[edge].reserved += 1;
    a.reservations[edge] += 1;
    a.current = topo_->other_end(edge, a.current);
    a.path.push_back(a.current);
    a.age += 1;
}

void Simulation::reset_agent(int agent) {
    RoutingAgent& a = agents_[agent];
    for (const auto& [edge, count] : a.reservations) {
        edges_[edge].reserved -= count;
        if (edges_[edge].reserved < 0) edges_[edge].reserved = 0;
    }
    a.reservations.clear();
    a.current = a.source;
    a.path = {a.source};
    a.age = 0;
}

SwapOutcome Simulation::execute_swap_chain(int agent) {
    RoutingAgent& a = agents_[agent];
    if (a.current != a.dest || a.path.size() < 2) {
        throw ContractViolation("swap chain requires a completed path");
    }
    SwapOutcome out;
    double running = 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (size_t hop = 0; hop + 1 < a.path.size(); ++hop) {
        const int from = a.path[hop];
        const int to = a.path[hop + 1];
        int edge = -1;
        for (int ei : topo_->incident_edges(from)) {
            if (topo_->other_end(ei, from) == to) {
                edge = ei;
                break;
            }
        }
        auto& st = edges_[edge];
        if (st.links.empty()) {
            out.cause = FailureCause::no_link;
            return out;
        }
        // Consume the best link on this edge.
        int best = 0;
        double best_f = -1.0;
        for (int i = 0; i < link_count(edge); ++i) {
            const double f = link_fidelity(edge, st.links[i]);
            if (f > best_f) {
                best_f = f;
                best = i;
            }
        }
        st.links.erase(st.links.begin() + best);
        st.reserved = std::min(st.reserved, link_count(edge));
        if (hop == 0) {
            running = best_f;
        } else {
            // Swap happens at the intermediate repeater a.path[hop].
            if (cfg_.swap_success_prob < 1.0 &&
                u(rng_) >= cfg_.swap_success_prob) {
                out.cause = FailureCause::swap_failed;
                return out;
            }
            const double f_gate = topo_->nodes()[a.path[hop]].gate.f_gate;
            running = qcalc::swap_fidelity_closed(running, best_f, f_gate);
        }
        if (running <= cfg_.f_threshold) {
            out.cause = FailureCause::below_threshold;
            return out;
        }
    }
    out.success = true;
    out.fidelity = running;
    return out;
}

void Simulation::fail_agent(int agent, FailureCause cause) {
    metrics_.failures[static_cast<int>(cause)] += 1;
    log(step_, agent, std::string("failure:") + failure_cause_name(cause), -1,
        0.0);
    reset_agent(agent);
}

void Simulation::log(long step, int agent, std::string event, int edge,
                     double f) {
    if (!cfg_.record_events) return;
    events_.push_back({step, agent, std::move(event), edge, f});
}

std::vector<AgentEvent> Simulation::env_step(
    const std::vector<int>& actions,
    const std::function<void(Simulation&)>& monitor_hook) {
    return env_step_decide(
        [&actions](Simulation&) { return actions; }, monitor_hook);
}

std::vector<AgentEvent> Simulation::env_step_decide(
    const std::function<std::vector<int>(Simulation&)>& decide,
    const std::function<void(Simulation&)>& monitor_hook) {
    std::vector<AgentEvent> step_events;
    auto emit = [&](int agent, std::string event, int edge, double f) {
        step_events.push_back({step_, agent, event, edge, f});
        log(step_, agent, std::move(event), edge, f);
    };

    generate_links();
    decay_and_prune();
    maybe_distill();
    if (monitor_hook) monitor_hook(*this);
    const std::vector<int> actions = decide(*this);
    if (actions.size() != agents_.size()) {
        throw ContractViolation("need exactly one action per agent");
    }

    for (size_t i = 0; i < agents_.size(); ++i) {
        RoutingAgent& a = agents_[i];
        const int action = actions[i];
        if (action == kActionAbort) {
            metrics_.failures[static_cast<int>(FailureCause::ttl)] += 1;
            emit(a.id, "failure:ttl", -1, 0.0);
            reset_agent(a.id);
            continue;
        }
        if (action == kActionWait) {
            a.age += 1;
            if (a.age > cfg_.p_max) {
                metrics_.failures[static_cast<int>(FailureCause::ttl)] += 1;
                emit(a.id, "failure:ttl", -1, 0.0);
                reset_agent(a.id);
            } else {
                emit(a.id, "wait", -1, 0.0);
            }
            continue;
        }
        if (!move_allowed(a.id, action)) {
            // Planner-directed move onto a depleted or illegal edge:
            // the paper's stale-information failure mode.
            const auto& incident = topo_->incident_edges(a.current);
            const bool is_edge =
                action >= 0 && action < static_cast<int>(incident.size());
            metrics_.failures[static_cast<int>(is_edge ? FailureCause::no_link
                                                       : FailureCause::ttl)] +=
                1;
            emit(a.id,
                 std::string("failure:") +
                     failure_cause_name(is_edge ? FailureCause::no_link
                                                : FailureCause::ttl),
                 -1, 0.0);
            reset_agent(a.id);
            continue;
        }
        const int edge = topo_->incident_edges(a.current)[action];
        agent_move(a.id, action);
        emit(a.id, "moved", edge, 0.0);
        if (a.current == a.dest) {
            const SwapOutcome outcome = execute_swap_chain(a.id);
            if (outcome.success) {
                metrics_.edr += 1;
                metrics_.e2e_fidelities.push_back(outcome.fidelity);
                emit(a.id, "success", -1, outcome.fidelity);
                reset_agent(a.id);
            } else {
                // Distinct prefix: the path was found, only the
                // entanglement itself failed.
                metrics_.failures[static_cast<int>(outcome.cause)] += 1;
                emit(a.id,
                     std::string("chain_failure:") +
                         failure_cause_name(outcome.cause),
                     -1, 0.0);
                reset_agent(a.id);
            }
        } else if (a.age >= cfg_.p_max) {
            metrics_.failures[static_cast<int>(FailureCause::ttl)] += 1;
            emit(a.id, "failure:ttl", -1, 0.0);
            reset_agent(a.id);
        }
    }
    ++step_;
    return step_events;
}

std::string Simulation::event_log_json() const {
    std::ostringstream os;
    os.precision(17);
    for (const auto& ev : events_) {
        os << "{\"step\":" << ev.step << ",\"agent\":" << ev.agent
           << ",\"event\":\"" << ev.event << "\"";
        if (ev.edge >= 0) os << ",\"edge\":" << ev.edge;
        if (ev.fidelity > 0.0) os << ",\"fidelity\":" << ev.fidelity;
        os << "}\n";
    }
    return os.str();
}

}  // namespace reliq::sim
