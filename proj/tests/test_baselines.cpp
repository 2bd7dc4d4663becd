#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reliq/base.hpp"

using namespace reliq;
using namespace reliq::base;

namespace {

topo::PhysicalTopology make_line(int n, double length_km = 1.0, int cap = 2,
                                 int n_dec = 1024) {
    std::vector<topo::RepeaterProfile> nodes(n);
    for (int i = 0; i < n; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 4;
        nodes[i].n_dec = n_dec;
    }
    std::vector<topo::Edge> edges;
    for (int i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, length_km, cap});
    return {nodes, edges};
}

StaleSnapshot fresh_snapshot(const topo::PhysicalTopology& t,
                             const std::vector<double>& fid,
                             const std::vector<int>& count) {
    StaleSnapshot snap;
    snap.coordinator = 0;
    snap.age.assign(t.edge_count(), 0);
    snap.node_dist.assign(t.node_count(), 0);
    snap.history.resize(t.edge_count());
    for (int e = 0; e < t.edge_count(); ++e) {
        snap.history[e] = {EdgeRecord{count[e], fid[e]}};
    }
    return snap;
}

void run_with_planner(Planner& pl, sim::Simulation& s, int steps) {
    for (int i = 0; i < steps; ++i) {
        s.env_step_decide(
            [&](sim::Simulation& ss) {
                std::vector<int> acts;
                for (size_t a = 0; a < ss.agents().size(); ++a) {
                    acts.push_back(pl.decide(ss, static_cast<int>(a)));
                }
                return acts;
            },
            [&](sim::Simulation& ss) { pl.observe(ss); });
    }
}

}  // namespace

TEST_CASE("hop distances match a Floyd-Warshall oracle") {
    const auto t = topo::generate_random(25, 5);
    const auto dist = hop_distances(t);
    const int n = t.node_count();
    const int inf = 1 << 20;
    std::vector<std::vector<int>> fw(n, std::vector<int>(n, inf));
    for (int v = 0; v < n; ++v) fw[v][v] = 0;
    for (const auto& e : t.edges()) fw[e.u][e.v] = fw[e.v][e.u] = 1;
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                fw[i][j] = std::min(fw[i][j], fw[i][k] + fw[k][j]);
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) CHECK(dist[i][j] == fw[i][j]);
    }
}

TEST_CASE("coordinator sits at minimum eccentricity") {
    CHECK(min_eccentricity_node(make_line(5)) == 2);
    CHECK(min_eccentricity_node(make_line(7)) == 3);
}

TEST_CASE("greedy routing advances along a chain") {
    const auto t = make_line(5);
    sim::SimConfig cfg;
    sim::Simulation s(t, cfg, {{0, 4}}, 1);
    const auto dist = hop_distances(t);
    for (int hop = 0; hop < 4; ++hop) {
        const int slot = ger_next_hop(s, 0, dist);
        REQUIRE(slot >= 0);
        const int before = s.agents()[0].current;
        s.agent_move(0, slot);
        CHECK(s.agents()[0].current == before + 1);
    }
    CHECK(s.agents()[0].current == 4);
}

TEST_CASE("greedy routing skips linkless edges") {
    // Diamond where the 1-branch has a 500 km (linkless) first edge.
    std::vector<topo::RepeaterProfile> nodes(4);
    for (int i = 0; i < 4; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 4;
    }
    std::vector<topo::Edge> edges = {{0, 1, 500.0, 2},
                                     {0, 2, 1.0, 2},
                                     {1, 3, 1.0, 2},
                                     {2, 3, 1.0, 2}};
    topo::PhysicalTopology t(nodes, edges);
    sim::SimConfig cfg;
    sim::Simulation s(t, cfg, {{0, 3}}, 2);
    REQUIRE(s.available_links(0) == 0);
    const auto dist = hop_distances(t);
    const int slot = ger_next_hop(s, 0, dist);
    CHECK(t.other_end(t.incident_edges(0)[slot], 0) == 2);
}

TEST_CASE("greedy path length equals the BFS distance on a grid") {
    // 3x3 grid, pair corner-to-corner, abundant links.
    std::vector<topo::RepeaterProfile> nodes(9);
    for (int i = 0; i < 9; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 8;
    }
    std::vector<topo::Edge> edges;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const int v = 3 * r + c;
            if (c + 1 < 3) edges.push_back({v, v + 1, 1.0, 2});
            if (r + 1 < 3) edges.push_back({v, v + 3, 1.0, 2});
        }
    }
    topo::PhysicalTopology t(nodes, edges);
    sim::SimConfig cfg;
    cfg.record_events = true;
    sim::Simulation s(t, cfg, {{0, 8}}, 3);
    Planner pl(PlannerKind::ger, t);
    run_with_planner(pl, s, 6);
    long success_step = -1;
    for (const auto& ev : s.event_log()) {
        if (ev.event == "success") {
            success_step = ev.step;
            break;
        }
    }
    CHECK(success_step == hop_distances(t)[0][8] - 1);
}

TEST_CASE("fidelity-greedy picks the better link") {
    // Diamond 0-{1,2}-3; the 0-2 branch keeps fidelity (large n_dec),
    // the 0-1 branch decays fast.
    std::vector<topo::RepeaterProfile> nodes(4);
    for (int i = 0; i < 4; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 4;
        nodes[i].n_dec = 1024;
    }
    nodes[1].n_dec = 1;
    std::vector<topo::Edge> edges = {{0, 1, 1.0, 2},
                                     {0, 2, 1.0, 2},
                                     {1, 3, 1.0, 2},
                                     {2, 3, 1.0, 2}};
    topo::PhysicalTopology t(nodes, edges);
    sim::SimConfig cfg;
    sim::Simulation s(t, cfg, {{0, 3}}, 4);
    s.env_step({sim::kActionWait});  // one step of decay
    REQUIRE(s.max_link_fidelity(0) < s.max_link_fidelity(1));
    const auto dist = hop_distances(t);
    // Index tie-break would pick node 1; fidelity-greedy picks node 2.
    CHECK(t.other_end(t.incident_edges(0)[ger_next_hop(s, 0, dist)], 0) == 1);
    CHECK(t.other_end(t.incident_edges(0)[lber_next_hop(s, 0, dist)], 0) == 2);
}

TEST_CASE("load-spread tie-break prefers the fuller edge") {
    const auto t = make_line(3);
    // Make both of node 1's choices... use a Y instead: 0 at center.
    std::vector<topo::RepeaterProfile> nodes(4);
    for (int i = 0; i < 4; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 6;
    }
    std::vector<topo::Edge> edges = {{0, 1, 1.0, 1},
                                     {0, 2, 1.0, 2},
                                     {1, 3, 1.0, 2},
                                     {2, 3, 1.0, 2}};
    topo::PhysicalTopology y(nodes, edges);
    sim::SimConfig cfg;
    sim::Simulation s(y, cfg, {{0, 3}}, 5);
    REQUIRE(s.available_links(0) == 1);
    REQUIRE(s.available_links(1) == 2);
    const auto dist = hop_distances(y);
    CHECK(t.node_count() == 3);  // silence unused line fixture
    // Equal distance through 1 and 2; MGER prefers the 2-link edge.
    CHECK(y.other_end(y.incident_edges(0)[mger_next_hop(s, 0, dist)], 0) == 2);
    CHECK(y.other_end(y.incident_edges(0)[ger_next_hop(s, 0, dist)], 0) == 1);
}

TEST_CASE("two-hop lookahead avoids a dead zone") {
    std::vector<topo::RepeaterProfile> nodes(6);
    for (int i = 0; i < 6; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 4;
    }
    // 0-1-3-5 has a linkless 500 km middle edge; 0-2-4-5 is healthy.
    std::vector<topo::Edge> edges = {{0, 1, 1.0, 2}, {0, 2, 1.0, 2},
                                     {1, 3, 500.0, 2}, {2, 4, 1.0, 2},
                                     {3, 5, 1.0, 2},  {4, 5, 1.0, 2}};
    topo::PhysicalTopology t(nodes, edges);
    sim::SimConfig cfg;
    sim::Simulation s(t, cfg, {{0, 5}}, 6);
    REQUIRE(s.available_links(2) == 0);  // edge (1,3)
    const auto dist = hop_distances(t);
    TwoHopView view;
    view.record(s);
    // One-hop fidelity ties: LBER falls back to the index order and walks
    // into the dead zone; the two-hop view steers around it.
    CHECK(t.other_end(t.incident_edges(0)[lber_next_hop(s, 0, dist)], 0) == 1);
    CHECK(t.other_end(t.incident_edges(0)[nonlber_next_hop(s, 0, dist, view)],
                      0) == 2);
}

TEST_CASE("snapshot ages follow reporter distance") {
    const auto t = make_line(11);
    CentralMonitor mon(t, 5);
    sim::SimConfig cfg;
    sim::Simulation s(t, cfg, {{0, 10}}, 7);
    mon.record(s);
    const auto snap = mon.central_collect();
    CHECK(snap.age[4] == 0);   // edge (4,5), touches the coordinator
    CHECK(snap.age[5] == 0);   // edge (5,6)
    CHECK(snap.age[3] == 1);   // edge (3,4)
    CHECK(snap.age[0] == 4);   // edge (0,1), reporter node 1 is 4 hops out
    CHECK(snap.node_dist[0] == 5);
}

TEST_CASE("stale snapshot still shows a consumed link") {
    const auto t = make_line(5, 1.0, 1);
    CentralMonitor mon(t, 2);
    sim::SimConfig cfg;
    sim::Simulation s(t, cfg, {{0, 4}}, 8);
    REQUIRE(s.available_links(0) == 1);
    mon.record(s);
    s.agent_move(0, 0);  // consumes edge (0,1)'s only link
    mon.record(s);
    mon.record(s);
    const auto snap = mon.central_collect();
    // Edge (0,1) is 1 hop from the coordinator: the view is one step old
    // at minimum, and two steps back the link was still there.
    CHECK(snap.edge_at(0, 0).link_count == 0);
    CHECK(snap.edge_at(0, 1).link_count == 1);
    // Edge (1,2) touches... its nearer endpoint node 1 is 1 hop out too;
    // untouched edges report their real counts at any age.
    CHECK(snap.edge_at(1, 0).link_count == 1);
}

TEST_CASE("utility planner takes the chain when links abound") {
    const auto t = make_line(4);
    const auto snap =
        fresh_snapshot(t, {0.95, 0.95, 0.95}, {2, 2, 2});
    const auto plan = qpath_plan(t, snap, 0, 3, {});
    REQUIRE(plan.has_value());
    CHECK(plan->path == std::vector<int>{0, 1, 2, 3});
    CHECK(plan->distill_edges.empty());
    CHECK(plan->estimated_fidelity ==
          doctest::Approx(0.95 * 0.95 * 0.95).epsilon(1e-12));
}

TEST_CASE("utility planner budgets distillation on the weakest edge") {
    const auto t = make_line(4);
    const auto snap = fresh_snapshot(t, {0.89, 0.88, 0.89}, {1, 2, 1});
    REQUIRE(0.89 * 0.88 * 0.89 < 0.7);
    const auto plan = qpath_plan(t, snap, 0, 3, {});
    REQUIRE(plan.has_value());
    CHECK(plan->distill_edges == std::vector<int>{1});
    const double boosted = qcalc::distill_pair(0.88, 0.88).f_out;
    CHECK(plan->estimated_fidelity ==
          doctest::Approx(0.89 * boosted * 0.89).epsilon(1e-12));
    CHECK(plan->estimated_fidelity >= 0.7);
}

TEST_CASE("infeasible fidelity yields no plan") {
    const auto t = make_line(4);
    const auto snap = fresh_snapshot(t, {0.6, 0.6, 0.6}, {1, 1, 1});
    CHECK(!qpath_plan(t, snap, 0, 3, {}).has_value());
    // And with no links at all, not even a path.
    const auto empty = fresh_snapshot(t, {0.0, 0.0, 0.0}, {0, 0, 0});
    CHECK(!qpath_plan(t, empty, 0, 3, {}).has_value());
}

TEST_CASE("fidelity-product planner prefers the long high-product route") {
    std::vector<topo::RepeaterProfile> nodes(5);
    for (int i = 0; i < 5; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 6;
    }
    std::vector<topo::Edge> edges = {{0, 1, 1.0, 2},
                                     {1, 4, 1.0, 2},
                                     {0, 2, 1.0, 2},
                                     {2, 3, 1.0, 2},
                                     {3, 4, 1.0, 2}};
    topo::PhysicalTopology t(nodes, edges);
    const auto snap =
        fresh_snapshot(t, {0.9, 0.9, 0.95, 0.95, 0.99}, {2, 2, 2, 2, 2});

    const auto leap = qleap_plan(t, snap, 0, 4, {});
    REQUIRE(leap.has_value());
    CHECK(leap->path == std::vector<int>{0, 2, 3, 4});
    CHECK(leap->estimated_fidelity ==
          doctest::Approx(0.95 * 0.95 * 0.99).epsilon(1e-12));

    // The utility planner keeps the short route instead.
    const auto upath = qpath_plan(t, snap, 0, 4, {});
    REQUIRE(upath.has_value());
    CHECK(upath->path == std::vector<int>{0, 1, 4});

    // Equal fidelities: fewest hops wins under the log weights.
    const auto flat = fresh_snapshot(t, {0.9, 0.9, 0.9, 0.9, 0.9},
                                     {2, 2, 2, 2, 2});
    const auto tie = qleap_plan(t, flat, 0, 4, {});
    REQUIRE(tie.has_value());
    CHECK(tie->path == std::vector<int>{0, 1, 4});
}

TEST_CASE("single route is taken as-is") {
    const auto t = make_line(3);
    const auto snap = fresh_snapshot(t, {0.9, 0.9}, {1, 1});
    const auto plan = qleap_plan(t, snap, 0, 2, {});
    REQUIRE(plan.has_value());
    CHECK(plan->path == std::vector<int>{0, 1, 2});
}

TEST_CASE("planner name parsing") {
    CHECK(planner_from_name("GER") == PlannerKind::ger);
    CHECK(planner_from_name("q-path") == PlannerKind::qpath);
    CHECK(planner_from_name("QLEAP") == PlannerKind::qleap);
    CHECK_THROWS_AS(planner_from_name("dijkstra"), BaseError);
    CHECK(std::string(planner_name(PlannerKind::nonlber)) == "NoNLBER");
}

TEST_CASE("stale plan runs into a depleted edge") {
    const auto t = make_line(3, 1.0, 1);
    sim::SimConfig cfg;
    sim::Simulation s(t, cfg, {{0, 2}, {0, 2}}, 9);
    Planner pl(PlannerKind::qpath, t);
    run_with_planner(pl, s, 1);
    // Both agents were planned onto the single-link chain; one advanced,
    // the other found the edge reserved.
    CHECK(s.metrics().failures[static_cast<int>(
              sim::FailureCause::no_link)] == 1);
}

TEST_CASE("all planners coincide on a bare chain") {
    const auto t = make_line(5, 40.0, 2);
    sim::SimConfig cfg;
    const int steps = 200;
    std::vector<int> edrs;
    std::vector<double> mean_fs;
    for (const char* name :
         {"ger", "mger", "lber", "nonlber", "qpath", "qleap"}) {
        sim::Simulation s(t, cfg, {{0, 4}}, 1234);
        Planner pl(planner_from_name(name), t);
        run_with_planner(pl, s, steps);
        edrs.push_back(s.metrics().edr);
        double f = 0.0;
        for (double v : s.metrics().e2e_fidelities) f += v;
        mean_fs.push_back(s.metrics().e2e_fidelities.empty()
                              ? 0.0
                              : f / s.metrics().e2e_fidelities.size());
    }
    CHECK(edrs[0] > 0);
    for (size_t i = 1; i < edrs.size(); ++i) {
        CHECK(edrs[i] == edrs[0]);
        CHECK(mean_fs[i] == doctest::Approx(mean_fs[0]).epsilon(1e-12));
    }
}
