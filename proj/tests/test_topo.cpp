#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <set>

#include "reliq/topo.hpp"

using namespace reliq::topo;

namespace {
const std::string kFixtures = RELIQ_FIXTURES;
}

TEST_CASE("random generation basics") {
    const auto two = generate_random(2, 1);
    CHECK(two.node_count() == 2);
    CHECK(two.edge_count() == 1);
    CHECK(two.degree(0) == 1);
    CHECK(two.degree(1) == 1);

    const auto a = generate_random(100, 7);
    const auto b = generate_random(100, 7);
    CHECK(a.serialize() == b.serialize());
    const auto c = generate_random(100, 8);
    CHECK(a.serialize() != c.serialize());
}

TEST_CASE("random generation degree and diameter statistics") {
    double degree_sum = 0.0;
    int count = 0;
    int min_diameter = 1 << 20;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto t = generate_random(100, seed);
        CHECK(t.max_degree() <= 5);
        for (int v = 0; v < t.node_count(); ++v) degree_sum += t.degree(v);
        count += t.node_count();
        // BFS diameter lower bound from node 0 eccentricity.
        std::vector<int> dist(t.node_count(), -1);
        std::vector<int> queue{0};
        dist[0] = 0;
        for (size_t qi = 0; qi < queue.size(); ++qi) {
            const int v = queue[qi];
            for (int ei : t.incident_edges(v)) {
                const int w = t.other_end(ei, v);
                if (dist[w] < 0) {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        min_diameter = std::min(
            min_diameter, *std::max_element(dist.begin(), dist.end()));
    }
    const double mean_degree = degree_sum / count;
    CHECK(mean_degree >= 2.5);
    CHECK(mean_degree <= 5.0);
    CHECK(min_diameter >= 4);
}

TEST_CASE("edge lengths are euclidean distances") {
    const auto t = generate_random(30, 3);
    for (const auto& e : t.edges()) {
        const auto& pu = t.positions()[e.u];
        const auto& pv = t.positions()[e.v];
        const double d = std::hypot(pu.x_km - pv.x_km, pu.y_km - pv.y_km);
        CHECK(e.length_km == doctest::Approx(d).epsilon(1e-12));
    }
}

TEST_CASE("json fixture round trip") {
    const auto t = load_topology(kFixtures + "/toy5.json");
    CHECK(t.node_count() == 5);
    CHECK(t.edge_count() == 5);
    CHECK(t.edges()[0].length_km == doctest::Approx(40.0));
    CHECK(t.nodes()[1].gate.f_gate == doctest::Approx(0.98));
    CHECK(t.nodes()[2].n_dec == 512);
}

TEST_CASE("graphml fixture matches json fixture") {
    const auto t = load_topology(kFixtures + "/toy5.graphml");
    CHECK(t.node_count() == 5);
    CHECK(t.edge_count() == 5);
    CHECK(t.edges()[0].length_km == doctest::Approx(40.0));
}

TEST_CASE("disconnected input is rejected") {
    CHECK_THROWS_AS(load_topology(kFixtures + "/disconnected.json"),
                    IngestionError);
    CHECK_THROWS_AS(load_topology(kFixtures + "/does_not_exist.json"),
                    IngestionError);
}

TEST_CASE("germany fixture ingests with great-circle lengths") {
    const auto t = load_topology(kFixtures + "/germany17.graphml");
    CHECK(t.node_count() == 17);
    CHECK(t.edge_count() == 26);
    for (const auto& e : t.edges()) CHECK(e.length_km > 0.0);
    // Berlin-Hamburg is roughly 255 km great circle.
    bool found = false;
    for (const auto& e : t.edges()) {
        if (std::minmax(e.u, e.v) == std::minmax(0, 1)) {
            CHECK(e.length_km == doctest::Approx(255.0).epsilon(0.02));
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("segment long links") {
    const auto t = load_topology(kFixtures + "/toy5.json");
    const auto same = segment_long_links(t, 50.0, 1);
    CHECK(same.node_count() == 5);
    CHECK(same.edge_count() == 5);

    const auto split = segment_long_links(t, 25.0, 1);
    // 40 km edges become 2x20, 30 km edges become 2x15.
    CHECK(split.node_count() == 10);
    CHECK(split.edge_count() == 10);
    for (const auto& e : split.edges()) CHECK(e.length_km <= 25.0 + 1e-9);

    // One 120 km edge against max 50 gives 3 segments of 40.
    std::vector<RepeaterProfile> nodes(2);
    nodes[0].id = 0;
    nodes[1].id = 1;
    PhysicalTopology line(nodes, {{0, 1, 120.0, 0}});
    const auto seg = segment_long_links(line, 50.0, 1);
    CHECK(seg.node_count() == 4);
    CHECK(seg.edge_count() == 3);
    for (const auto& e : seg.edges()) CHECK(e.length_km == doctest::Approx(40.0));

    // Idempotence at the same max_len.
    const auto again = segment_long_links(split, 25.0, 1);
    CHECK(again.serialize() == split.serialize());
}

TEST_CASE("segmentation property over random graphs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto t = generate_random(40, seed);
        const auto seg = segment_long_links(t, 30.0, seed);
        for (const auto& e : seg.edges()) CHECK(e.length_km <= 30.0 + 1e-9);
    }
}

TEST_CASE("capacity assignment") {
    const auto t = load_topology(kFixtures + "/toy5.json");
    const auto sized = assign_capacities(t, 2);
    for (int v = 0; v < sized.node_count(); ++v) {
        CHECK(sized.nodes()[v].qubit_capacity == 2 * sized.degree(v));
    }
    for (const auto& e : sized.edges()) {
        CHECK(e.capacity <= std::min(sized.nodes()[e.u].qubit_capacity,
                                     sized.nodes()[e.v].qubit_capacity));
        CHECK(e.capacity >= 1);
    }
}

TEST_CASE("capacity property over random graphs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = generate_random(50, seed);
        for (const auto& e : t.edges()) {
            CHECK(e.capacity <= std::min(t.nodes()[e.u].qubit_capacity,
                                         t.nodes()[e.v].qubit_capacity));
        }
    }
}

TEST_CASE("qubit buckets even split") {
    // Star with 3 leaves; center capacity 6 then 7.
    auto star = [](int cap) {
        std::vector<RepeaterProfile> nodes(4);
        for (int i = 0; i < 4; ++i) {
            nodes[i].id = i;
            nodes[i].qubit_capacity = 4;
        }
        nodes[0].qubit_capacity = cap;
        std::vector<Edge> edges = {
            {0, 1, 10.0, 0}, {0, 2, 10.0, 0}, {0, 3, 10.0, 0}};
        return PhysicalTopology(nodes, edges);
    };
    const auto alloc6 = qubit_buckets(star(6));
    CHECK(alloc6.buckets[0].at(1) == 2);
    CHECK(alloc6.buckets[0].at(2) == 2);
    CHECK(alloc6.buckets[0].at(3) == 2);

    const auto alloc7 = qubit_buckets(star(7));
    CHECK(alloc7.buckets[0].at(1) == 3);
    CHECK(alloc7.buckets[0].at(2) == 2);
    CHECK(alloc7.buckets[0].at(3) == 2);
}

TEST_CASE("qubit buckets scarce case keeps connectivity") {
    // 5-node fixture: node 0 has 2 qubits but 3 neighbors. The spanning
    // tree neighbors must receive one qubit each.
    std::vector<RepeaterProfile> nodes(5);
    for (int i = 0; i < 5; ++i) {
        nodes[i].id = i;
        nodes[i].qubit_capacity = 4;
    }
    nodes[0].qubit_capacity = 2;
    std::vector<Edge> edges = {{0, 1, 10.0, 0},
                               {0, 2, 10.0, 0},
                               {0, 3, 10.0, 0},
                               {1, 4, 10.0, 0},
                               {2, 4, 10.0, 0},
                               {3, 4, 10.0, 0}};
    PhysicalTopology t(nodes, edges);
    const auto alloc = qubit_buckets(t);
    int total = 0;
    int nonzero = 0;
    for (const auto& [nb, q] : alloc.buckets[0]) {
        total += q;
        if (q > 0) ++nonzero;
    }
    CHECK(total == 2);
    CHECK(nonzero == 2);

    // Bucket graph stays connected: edges with both-side buckets >= 1
    // must span all nodes.
    std::vector<int> comp(5);
    std::iota(comp.begin(), comp.end(), 0);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& e : t.edges()) {
            if (alloc.buckets[e.u].at(e.v) >= 1 &&
                alloc.buckets[e.v].at(e.u) >= 1) {
                if (comp[e.u] != comp[e.v]) {
                    const int from = std::max(comp[e.u], comp[e.v]);
                    const int to = std::min(comp[e.u], comp[e.v]);
                    for (auto& c : comp)
                        if (c == from) c = to;
                    changed = true;
                }
            }
        }
    }
    CHECK(std::set<int>(comp.begin(), comp.end()).size() == 1);
}

TEST_CASE("bucket sums respect capacity") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto t = generate_random(40, seed);
        const auto alloc = qubit_buckets(t);
        for (int v = 0; v < t.node_count(); ++v) {
            int total = 0;
            for (const auto& [nb, q] : alloc.buckets[v]) total += q;
            CHECK(total <= t.nodes()[v].qubit_capacity);
            if (t.nodes()[v].qubit_capacity >= t.degree(v)) {
                CHECK(total == t.nodes()[v].qubit_capacity);
            }
        }
    }
}

TEST_CASE("invariant enforcement in the constructor") {
    std::vector<RepeaterProfile> nodes(2);
    nodes[0].id = 0;
    nodes[1].id = 1;
    CHECK_THROWS_AS(PhysicalTopology(nodes, {{0, 0, 5.0, 0}}), ConfigError);
    CHECK_THROWS_AS(PhysicalTopology(nodes, {{0, 1, -1.0, 0}}), ConfigError);
    CHECK_THROWS_AS(PhysicalTopology(nodes, {}), ConfigError);
}
