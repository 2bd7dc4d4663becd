#include "reliq/base.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <queue>

namespace reliq::base {

std::vector<std::vector<int>> hop_distances(const topo::PhysicalTopology& t) {
    const int n = t.node_count();
    std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
    for (int src = 0; src < n; ++src) {
        auto& d = dist[src];
        d[src] = 0;
        std::queue<int> q;
        q.push(src);
        while (!q.empty()) {
            const int v = q.front();
            q.pop();
            for (int e : t.incident_edges(v)) {
                const int w = t.other_end(e, v);
                if (d[w] < 0) {
                    d[w] = d[v] + 1;
                    q.push(w);
                }
            }
        }
    }
    return dist;
}

int min_eccentricity_node(const topo::PhysicalTopology& t) {
    const auto dist = hop_distances(t);
    int best = 0;
    int best_ecc = std::numeric_limits<int>::max();
    for (int v = 0; v < t.node_count(); ++v) {
        const int ecc = *std::max_element(dist[v].begin(), dist[v].end());
        if (ecc < best_ecc) {
            best_ecc = ecc;
            best = v;
        }
    }
    return best;
}

EdgeRecord StaleSnapshot::edge_at(int e, int extra_age) const {
    const auto& h = history[e];
    if (h.empty()) return {};
    const std::size_t idx = std::min<std::size_t>(
        static_cast<std::size_t>(age[e] + extra_age), h.size() - 1);
    return h[idx];
}

CentralMonitor::CentralMonitor(const topo::PhysicalTopology& t,
                               int coordinator, int horizon)
    : topo_(&t), coordinator_(coordinator), horizon_(horizon) {
    const auto dist = hop_distances(t);
    node_dist_ = dist[coordinator_];
    age_.resize(t.edge_count());
    history_.resize(t.edge_count());
    for (int e = 0; e < t.edge_count(); ++e) {
        const auto& edge = t.edges()[e];
        age_[e] = std::min(node_dist_[edge.u], node_dist_[edge.v]);
    }
}

void CentralMonitor::record(const sim::Simulation& s) {
    for (int e = 0; e < topo_->edge_count(); ++e) {
        EdgeRecord rec;
        rec.link_count = s.available_links(e);
        rec.max_fidelity = s.max_link_fidelity(e);
        history_[e].push_front(rec);
        while (static_cast<int>(history_[e].size()) > horizon_) {
            history_[e].pop_back();
        }
    }
}

StaleSnapshot CentralMonitor::central_collect() const {
    StaleSnapshot snap;
    snap.coordinator = coordinator_;
    snap.age = age_;
    snap.node_dist = node_dist_;
    snap.history.resize(history_.size());
    for (size_t e = 0; e < history_.size(); ++e) {
        snap.history[e].assign(history_[e].begin(), history_[e].end());
    }
    return snap;
}

void TwoHopView::record(const sim::Simulation& s) {
    std::vector<EdgeRecord> current(s.topology().edge_count());
    for (int e = 0; e < s.topology().edge_count(); ++e) {
        current[e].link_count = s.available_links(e);
        current[e].max_fidelity = s.max_link_fidelity(e);
    }
    prev = next.empty() ? current : next;
    next = std::move(current);
}

namespace {

struct Candidate {
    int slot;
    int neighbor;
    int edge;
};

std::vector<Candidate> allowed_moves(const sim::Simulation& s, int agent) {
    const auto& t = s.topology();
    const auto& a = s.agents()[agent];
    std::vector<Candidate> out;
    const auto& incident = t.incident_edges(a.current);
    for (int slot = 0; slot < static_cast<int>(incident.size()); ++slot) {
        if (!s.move_allowed(agent, slot)) continue;
        out.push_back({slot, t.other_end(incident[slot], a.current),
                       incident[slot]});
    }
    return out;
}

int edge_between(const topo::PhysicalTopology& t, int u, int v) {
    for (int e : t.incident_edges(u)) {
        if (t.other_end(e, u) == v) return e;
    }
    return -1;
}

// Dijkstra over usable edges; deterministic tie-breaking by node id.
std::optional<std::vector<int>> min_cost_path(
    const topo::PhysicalTopology& t, int source, int dest,
    const std::function<std::optional<double>(int)>& edge_cost) {
    const int n = t.node_count();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, kInf);
    std::vector<int> pred(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.push({0.0, source});
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (d > dist[v]) continue;
        for (int e : t.incident_edges(v)) {
            const auto cost = edge_cost(e);
            if (!cost) continue;
            const int w = t.other_end(e, v);
            const double nd = d + *cost;
            if (nd < dist[w] - 1e-15 ||
                (std::abs(nd - dist[w]) <= 1e-15 && v < pred[w])) {
                dist[w] = nd;
                pred[w] = v;
                heap.push({nd, w});
            }
        }
    }
    if (!std::isfinite(dist[dest])) return std::nullopt;
    std::vector<int> path;
    for (int v = dest; v != -1; v = pred[v]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    if (path.front() != source) return std::nullopt;
    return path;
}

// Shared feasibility rule: multiply per-edge best fidelities; while the
// estimate misses the threshold, budget one distillation on the weakest
// not-yet-distilled edge that has a spare link.
std::optional<Plan> finish_plan(const topo::PhysicalTopology& t,
                                const StaleSnapshot& snap, int extra_age,
                                std::vector<int> path,
                                const QPathConfig& cfg) {
    Plan plan;
    plan.path = std::move(path);
    std::vector<int> edges;
    std::vector<double> fid;
    std::vector<int> count;
    for (size_t i = 0; i + 1 < plan.path.size(); ++i) {
        const int e = edge_between(t, plan.path[i], plan.path[i + 1]);
        const auto rec = snap.edge_at(e, extra_age);
        edges.push_back(e);
        fid.push_back(rec.max_fidelity);
        count.push_back(rec.link_count);
    }
    std::vector<bool> distilled(edges.size(), false);
    auto product = [&]() {
        double p = 1.0;
        for (double f : fid) p *= f;
        return p;
    };
    while (product() < cfg.fidelity_threshold) {
        int weakest = -1;
        for (size_t i = 0; i < edges.size(); ++i) {
            if (distilled[i] || count[i] < 2 || fid[i] <= 0.5) continue;
            if (weakest < 0 || fid[i] < fid[weakest]) {
                weakest = static_cast<int>(i);
            }
        }
        if (weakest < 0) return std::nullopt;
        fid[weakest] = qcalc::distill_pair(fid[weakest], fid[weakest]).f_out;
        distilled[weakest] = true;
        plan.distill_edges.push_back(edges[weakest]);
    }
    plan.estimated_fidelity = product();
    return plan;
}

}  // namespace

int ger_next_hop(const sim::Simulation& s, int agent,
                 const std::vector<std::vector<int>>& dist) {
    const int dest = s.agents()[agent].dest;
    const auto cand = allowed_moves(s, agent);
    int best = -1;
    for (size_t i = 0; i < cand.size(); ++i) {
        if (best < 0 ||
            dist[cand[i].neighbor][dest] < dist[cand[best].neighbor][dest]) {
            best = static_cast<int>(i);
        }
    }
    return best < 0 ? sim::kActionAbort : cand[best].slot;
}

int mger_next_hop(const sim::Simulation& s, int agent,
                  const std::vector<std::vector<int>>& dist) {
    const int dest = s.agents()[agent].dest;
    const auto cand = allowed_moves(s, agent);
    int best = -1;
    for (size_t i = 0; i < cand.size(); ++i) {
        if (best < 0) {
            best = static_cast<int>(i);
            continue;
        }
        const int di = dist[cand[i].neighbor][dest];
        const int db = dist[cand[best].neighbor][dest];
        if (di < db ||
            (di == db && s.available_links(cand[i].edge) >
                             s.available_links(cand[best].edge))) {
            best = static_cast<int>(i);
        }
    }
    return best < 0 ? sim::kActionAbort : cand[best].slot;
}

int lber_next_hop(const sim::Simulation& s, int agent,
                  const std::vector<std::vector<int>>& dist) {
    const auto& a = s.agents()[agent];
    const auto cand = allowed_moves(s, agent);
    int best = -1;
    double best_f = -1.0;
    for (const auto& c : cand) {
        if (dist[c.neighbor][a.dest] > dist[a.current][a.dest]) continue;
        const double f = s.max_link_fidelity(c.edge);
        if (f > best_f) {
            best_f = f;
            best = c.slot;
        }
    }
    return best < 0 ? sim::kActionAbort : best;
}

int nonlber_next_hop(const sim::Simulation& s, int agent,
                     const std::vector<std::vector<int>>& dist,
                     const TwoHopView& view) {
    const auto& t = s.topology();
    const auto& a = s.agents()[agent];
    const auto cand = allowed_moves(s, agent);
    int best = -1;
    double best_score = 0.0;
    for (const auto& c : cand) {
        if (dist[c.neighbor][a.dest] > dist[a.current][a.dest]) continue;
        const double f_hop = s.max_link_fidelity(c.edge);
        double score = -1.0;
        if (c.neighbor == a.dest) {
            score = f_hop;
        } else {
            // Best continuation through the neighbor, judged on the
            // one-step-stale two-hop view.
            const double f_gate = t.nodes()[c.neighbor].gate.f_gate;
            for (int relay : t.incident_edges(c.neighbor)) {
                if (relay == c.edge) continue;
                const int w = t.other_end(relay, c.neighbor);
                if (w == a.current) continue;
                const auto& rec = view.prev[relay];
                if (rec.link_count < 1) continue;
                score = std::max(score,
                                 qcalc::swap_fidelity_closed(
                                     f_hop, rec.max_fidelity, f_gate));
            }
        }
        if (score > best_score) {
            best_score = score;
            best = c.slot;
        }
    }
    return best < 0 ? sim::kActionAbort : best;
}

std::optional<Plan> qpath_plan(const topo::PhysicalTopology& t,
                               const StaleSnapshot& snap, int source,
                               int dest, const QPathConfig& cfg) {
    const int extra = snap.node_dist[source];
    const auto path = min_cost_path(t, source, dest, [&](int e) {
        const auto rec = snap.edge_at(e, extra);
        if (rec.link_count < 1) return std::optional<double>{};
        return std::optional<double>(cfg.alpha_star / rec.link_count +
                                     cfg.beta_star);
    });
    if (!path) return std::nullopt;
    return finish_plan(t, snap, extra, *path, cfg);
}

std::optional<Plan> qleap_plan(const topo::PhysicalTopology& t,
                               const StaleSnapshot& snap, int source,
                               int dest, const QPathConfig& cfg) {
    const int extra = snap.node_dist[source];
    const auto path = min_cost_path(t, source, dest, [&](int e) {
        const auto rec = snap.edge_at(e, extra);
        if (rec.link_count < 1 || rec.max_fidelity <= 0.0) {
            return std::optional<double>{};
        }
        // Tiny hop term keeps perfect-fidelity ties at the fewest hops.
        return std::optional<double>(-std::log(rec.max_fidelity) + 1e-12);
    });
    if (!path) return std::nullopt;
    return finish_plan(t, snap, extra, *path, cfg);
}

PlannerKind planner_from_name(const std::string& name) {
    std::string n;
    for (char c : name) n.push_back(static_cast<char>(std::tolower(c)));
    if (n == "ger") return PlannerKind::ger;
    if (n == "mger") return PlannerKind::mger;
    if (n == "lber") return PlannerKind::lber;
    if (n == "nonlber") return PlannerKind::nonlber;
    if (n == "q-path" || n == "qpath") return PlannerKind::qpath;
    if (n == "q-leap" || n == "qleap") return PlannerKind::qleap;
    throw BaseError("unknown planner: " + name);
}

const char* planner_name(PlannerKind kind) {
    switch (kind) {
        case PlannerKind::ger: return "GER";
        case PlannerKind::mger: return "MGER";
        case PlannerKind::lber: return "LBER";
        case PlannerKind::nonlber: return "NoNLBER";
        case PlannerKind::qpath: return "Q-PATH";
        case PlannerKind::qleap: return "Q-LEAP";
    }
    return "?";
}

Planner::Planner(PlannerKind kind, const topo::PhysicalTopology& t,
                 QPathConfig qcfg)
    : kind_(kind),
      topo_(&t),
      qcfg_(qcfg),
      dist_(hop_distances(t)),
      monitor_(t, min_eccentricity_node(t)) {}

void Planner::observe(const sim::Simulation& s) {
    monitor_.record(s);
    twohop_.record(s);
}

int Planner::decide(const sim::Simulation& s, int agent) {
    switch (kind_) {
        case PlannerKind::ger: return ger_next_hop(s, agent, dist_);
        case PlannerKind::mger: return mger_next_hop(s, agent, dist_);
        case PlannerKind::lber: return lber_next_hop(s, agent, dist_);
        case PlannerKind::nonlber:
            return nonlber_next_hop(s, agent, dist_, twohop_);
        case PlannerKind::qpath:
        case PlannerKind::qleap: break;
    }

    if (plans_.size() != s.agents().size()) {
        plans_.resize(s.agents().size());
        plan_valid_.assign(s.agents().size(), false);
    }
    const auto& a = s.agents()[agent];
    if (a.current == a.source && a.age == 0) {
        const auto snap = monitor_.central_collect();
        const auto plan =
            kind_ == PlannerKind::qpath
                ? qpath_plan(*topo_, snap, a.source, a.dest, qcfg_)
                : qleap_plan(*topo_, snap, a.source, a.dest, qcfg_);
        plan_valid_[agent] = plan.has_value();
        if (plan) plans_[agent] = *plan;
    }
    if (!plan_valid_[agent]) return sim::kActionWait;
    const auto& path = plans_[agent].path;
    const size_t pos = a.path.size() - 1;
    if (pos + 1 >= path.size() || path[pos] != a.current) {
        return sim::kActionWait;  // desynchronized; replan after reset
    }
    const int next = path[pos + 1];
    const auto& incident = topo_->incident_edges(a.current);
    for (int slot = 0; slot < static_cast<int>(incident.size()); ++slot) {
        if (topo_->other_end(incident[slot], a.current) == next) return slot;
    }
    return sim::kActionWait;
}

}  // namespace reliq::base
