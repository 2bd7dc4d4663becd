#include "reliq/topo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace reliq::topo {

namespace {

struct Dsu {
    std::vector<int> parent;
    explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[b] = a;
        return true;
    }
};

bool is_connected(int n, const std::vector<Edge>& edges) {
    if (n == 0) return false;
    Dsu dsu(n);
    int components = n;
    for (const auto& e : edges) {
        if (dsu.unite(e.u, e.v)) --components;
    }
    return components == 1;
}

double sample_f_gate(std::mt19937_64& rng, const GenConfig& cfg) {
    if (cfg.f_gate_spread <= 0.0) return std::min(1.0, cfg.f_gate_mean);
    std::normal_distribution<double> dist(cfg.f_gate_mean, cfg.f_gate_spread);
    return std::clamp(dist(rng), 0.0, 1.0);
}

int sample_n_dec(std::mt19937_64& rng, const GenConfig& cfg) {
    if (cfg.n_dec_spread <= 0.0)
        return std::max(1, static_cast<int>(std::lround(cfg.n_dec_mean)));
    std::normal_distribution<double> dist(cfg.n_dec_mean, cfg.n_dec_spread);
    return std::max(1, static_cast<int>(std::lround(dist(rng))));
}

std::vector<std::map<int, int>> even_split_buckets(const PhysicalTopology& t);

}  // namespace

PhysicalTopology::PhysicalTopology(std::vector<RepeaterProfile> nodes,
                                   std::vector<Edge> edges,
                                   std::vector<Position> positions)
    : nodes_(std::move(nodes)),
      edges_(std::move(edges)),
      positions_(std::move(positions)) {
    const int n = static_cast<int>(nodes_.size());
    if (n < 1) throw ConfigError("topology needs at least one node");
    if (!positions_.empty() && static_cast<int>(positions_.size()) != n) {
        throw ConfigError("positions must cover every node");
    }
    std::set<std::pair<int, int>> seen;
    for (const auto& e : edges_) {
        if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
            throw ConfigError("edge references unknown node");
        }
        if (e.u == e.v) throw ConfigError("self-loops are not allowed");
        if (!(e.length_km > 0.0)) throw ConfigError("edge length must be > 0");
        auto key = std::minmax(e.u, e.v);
        if (!seen.insert(key).second) throw ConfigError("parallel edge");
        if (e.capacity > 0) {
            const int cu = nodes_[e.u].qubit_capacity;
            const int cv = nodes_[e.v].qubit_capacity;
            if (cu > 0 && cv > 0 && e.capacity > std::min(cu, cv)) {
                throw ConfigError("edge capacity exceeds endpoint qubits");
            }
        }
    }
    if (n > 1 && !is_connected(n, edges_)) {
        throw ConfigError("topology is not connected");
    }
    incidence_.assign(n, {});
    for (int i = 0; i < static_cast<int>(edges_.size()); ++i) {
        incidence_[edges_[i].u].push_back(i);
        incidence_[edges_[i].v].push_back(i);
    }
    for (int v = 0; v < n; ++v) {
        std::sort(incidence_[v].begin(), incidence_[v].end(),
                  [&](int a, int b) {
                      return other_end(a, v) < other_end(b, v);
                  });
    }
}

int PhysicalTopology::other_end(int edge, int node) const {
    const Edge& e = edges_[edge];
    return e.u == node ? e.v : e.u;
}

int PhysicalTopology::max_degree() const {
    int d = 0;
    for (const auto& inc : incidence_) d = std::max(d, static_cast<int>(inc.size()));
    return d;
}

std::string PhysicalTopology::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "nodes " << nodes_.size() << "\n";
    for (const auto& nd : nodes_) {
        os << nd.id << " " << nd.qubit_capacity << " " << nd.gate.f_gate
           << " " << nd.n_dec << "\n";
    }
    os << "edges " << edges_.size() << "\n";
    for (const auto& e : edges_) {
        os << e.u << " " << e.v << " " << e.length_km << " " << e.capacity
           << "\n";
    }
    return os.str();
}

PhysicalTopology generate_random(int n_nodes, std::uint64_t seed,
                                 const GenConfig& cfg) {
    if (n_nodes < 2) throw ConfigError("random topology needs >= 2 nodes");
    if (cfg.max_degree < 2) throw ConfigError("max_degree must be >= 2");
    std::mt19937_64 rng(seed);
    const double side = 50.0 * std::sqrt(static_cast<double>(n_nodes));
    std::uniform_real_distribution<double> coord(0.0, side);

    std::vector<Position> pos(n_nodes);
    for (auto& p : pos) {
        p.x_km = coord(rng);
        p.y_km = coord(rng);
    }
    auto dist = [&](int a, int b) {
        const double dx = pos[a].x_km - pos[b].x_km;
        const double dy = pos[a].y_km - pos[b].y_km;
        return std::hypot(dx, dy);
    };

    // Euclidean MST as the connected backbone. With points in general
    // position its degree stays within 5, matching the model's action
    // space.
    struct Cand {
        double len;
        int u, v;
    };
    std::vector<Cand> all;
    all.reserve(static_cast<size_t>(n_nodes) * (n_nodes - 1) / 2);
    for (int u = 0; u < n_nodes; ++u)
        for (int v = u + 1; v < n_nodes; ++v) all.push_back({dist(u, v), u, v});
    std::sort(all.begin(), all.end(), [](const Cand& a, const Cand& b) {
        return std::tie(a.len, a.u, a.v) < std::tie(b.len, b.u, b.v);
    });

    std::vector<int> degree(n_nodes, 0);
    std::set<std::pair<int, int>> used;
    std::vector<Edge> edges;
    Dsu dsu(n_nodes);
    for (const auto& c : all) {
        if (dsu.unite(c.u, c.v)) {
            edges.push_back({c.u, c.v, c.len, 0});
            used.insert({c.u, c.v});
            ++degree[c.u];
            ++degree[c.v];
        }
    }

    // k-nearest-neighbor edges, shortest first, subject to the degree cap.
    std::vector<Cand> knn_cands;
    for (int u = 0; u < n_nodes; ++u) {
        std::vector<int> order(n_nodes);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double da = a == u ? 1e18 : dist(u, a);
            const double db = b == u ? 1e18 : dist(u, b);
            return std::tie(da, a) < std::tie(db, b);
        });
        for (int k = 0; k < std::min(cfg.knn, n_nodes - 1); ++k) {
            const int v = order[k];
            const auto key = std::minmax(u, v);
            knn_cands.push_back({dist(u, v), key.first, key.second});
        }
    }
    std::sort(knn_cands.begin(), knn_cands.end(),
              [](const Cand& a, const Cand& b) {
                  return std::tie(a.len, a.u, a.v) < std::tie(b.len, b.u, b.v);
              });
    for (const auto& c : knn_cands) {
        if (used.count({c.u, c.v})) continue;
        if (degree[c.u] >= cfg.max_degree || degree[c.v] >= cfg.max_degree)
            continue;
        used.insert({c.u, c.v});
        edges.push_back({c.u, c.v, c.len, 0});
        ++degree[c.u];
        ++degree[c.v];
    }

    if (*std::max_element(degree.begin(), degree.end()) > cfg.max_degree) {
        throw ConfigError("degree cap violated by generated backbone");
    }

    std::vector<RepeaterProfile> nodes(n_nodes);
    for (int v = 0; v < n_nodes; ++v) {
        nodes[v] = {v, 0, {sample_f_gate(rng, cfg)}, sample_n_dec(rng, cfg)};
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.u, a.v) < std::tie(b.u, b.v);
    });
    PhysicalTopology t(std::move(nodes), std::move(edges), std::move(pos));
    return assign_capacities(t, cfg.qubits_per_degree);
}

PhysicalTopology segment_long_links(const PhysicalTopology& t,
                                    double max_len_km, std::uint64_t seed,
                                    const GenConfig& cfg) {
    if (!(max_len_km > 0.0)) throw ConfigError("max_len_km must be > 0");
    std::mt19937_64 rng(seed);
    std::vector<RepeaterProfile> nodes = t.nodes();
    std::vector<Position> pos = t.positions();
    const bool have_pos = !pos.empty();
    std::vector<Edge> edges;
    for (const auto& e : t.edges()) {
        if (e.length_km <= max_len_km) {
            edges.push_back(e);
            continue;
        }
        const int segments =
            static_cast<int>(std::ceil(e.length_km / max_len_km));
        const double seg_len = e.length_km / segments;
        int prev = e.u;
        for (int s = 1; s < segments; ++s) {
            const int fresh = static_cast<int>(nodes.size());
            nodes.push_back(
                {fresh, 0, {sample_f_gate(rng, cfg)}, sample_n_dec(rng, cfg)});
            if (have_pos) {
                const double frac = static_cast<double>(s) / segments;
                pos.push_back({pos[e.u].x_km +
                                   frac * (pos[e.v].x_km - pos[e.u].x_km),
                               pos[e.u].y_km +
                                   frac * (pos[e.v].y_km - pos[e.u].y_km)});
            }
            edges.push_back({prev, fresh, seg_len, 0});
            prev = fresh;
        }
        edges.push_back({prev, e.v, seg_len, 0});
    }
    PhysicalTopology out(std::move(nodes), std::move(edges), std::move(pos));
    return assign_capacities(out, cfg.qubits_per_degree);
}

PhysicalTopology assign_capacities(const PhysicalTopology& t,
                                   int qubits_per_degree) {
    if (qubits_per_degree < 1) throw ConfigError("qubits_per_degree must be >= 1");
    std::vector<RepeaterProfile> nodes = t.nodes();
    for (int v = 0; v < t.node_count(); ++v) {
        nodes[v].qubit_capacity = t.degree(v) * qubits_per_degree;
    }
    PhysicalTopology sized(std::move(nodes), t.edges(), t.positions());
    const auto buckets = even_split_buckets(sized);
    std::vector<Edge> edges = sized.edges();
    for (auto& e : edges) {
        e.capacity = std::min(buckets[e.u].at(e.v), buckets[e.v].at(e.u));
    }
    return {sized.nodes(), std::move(edges), sized.positions()};
}

namespace {

std::vector<std::map<int, int>> even_split_buckets(const PhysicalTopology& t) {
    std::vector<std::map<int, int>> buckets(t.node_count());
    for (int v = 0; v < t.node_count(); ++v) {
        const int deg = t.degree(v);
        if (deg == 0) continue;
        const int cap = t.nodes()[v].qubit_capacity;
        const int base = cap / deg;
        int rem = cap % deg;
        for (int ei : t.incident_edges(v)) {
            const int nb = t.other_end(ei, v);
            buckets[v][nb] = base + (rem > 0 ? 1 : 0);
            if (rem > 0) --rem;
        }
    }
    return buckets;
}

}  // namespace

QubitAllocation qubit_buckets(const PhysicalTopology& t) {
    QubitAllocation alloc;
    alloc.buckets.assign(t.node_count(), {});

    // Maximum spanning tree weighted by the scarcer endpoint capacity;
    // guarantees every node keeps at least one qubit toward a tree
    // neighbor when qubits are scarce.
    struct WEdge {
        int weight;
        int idx;
    };
    std::vector<WEdge> wedges;
    for (int i = 0; i < t.edge_count(); ++i) {
        const Edge& e = t.edges()[i];
        wedges.push_back({std::min(t.nodes()[e.u].qubit_capacity,
                                   t.nodes()[e.v].qubit_capacity),
                          i});
    }
    std::sort(wedges.begin(), wedges.end(), [](const WEdge& a, const WEdge& b) {
        return std::tie(b.weight, b.idx) < std::tie(a.weight, a.idx);
    });
    Dsu dsu(t.node_count());
    std::vector<bool> in_tree(t.edge_count(), false);
    for (const auto& w : wedges) {
        const Edge& e = t.edges()[w.idx];
        if (dsu.unite(e.u, e.v)) in_tree[w.idx] = true;
    }

    for (int v = 0; v < t.node_count(); ++v) {
        const int deg = t.degree(v);
        if (deg == 0) continue;
        const int cap = t.nodes()[v].qubit_capacity;
        auto& bucket = alloc.buckets[v];
        if (cap >= deg) {
            const int base = cap / deg;
            int rem = cap % deg;
            for (int ei : t.incident_edges(v)) {
                bucket[t.other_end(ei, v)] = base + (rem > 0 ? 1 : 0);
                if (rem > 0) --rem;
            }
            continue;
        }
        // Scarce case: tree neighbors first, then round-robin by
        // descending edge weight, ties by ascending neighbor id.
        for (int ei : t.incident_edges(v)) bucket[t.other_end(ei, v)] = 0;
        int remaining = cap;
        std::vector<std::pair<int, int>> order;  // (edge idx, neighbor)
        for (int ei : t.incident_edges(v)) order.push_back({ei, t.other_end(ei, v)});
        std::stable_sort(order.begin(), order.end(),
                         [&](const auto& a, const auto& b) {
                             const bool ta = in_tree[a.first];
                             const bool tb = in_tree[b.first];
                             if (ta != tb) return ta;
                             const Edge& ea = t.edges()[a.first];
                             const Edge& eb = t.edges()[b.first];
                             const int wa = std::min(
                                 t.nodes()[ea.u].qubit_capacity,
                                 t.nodes()[ea.v].qubit_capacity);
                             const int wb = std::min(
                                 t.nodes()[eb.u].qubit_capacity,
                                 t.nodes()[eb.v].qubit_capacity);
                             if (wa != wb) return wa > wb;
                             return a.second < b.second;
                         });
        for (const auto& [ei, nb] : order) {
            if (remaining == 0) break;
            if (in_tree[ei]) {
                bucket[nb] = 1;
                --remaining;
            }
        }
        // Remaining qubits go to the emptiest buckets first (descending
        // weight within a tier), spreading quantum connectivity.
        while (remaining > 0) {
            int best = -1;
            for (const auto& [ei, nb] : order) {
                if (best < 0 || bucket[nb] < bucket[best]) best = nb;
            }
            ++bucket[best];
            --remaining;
        }
    }
    return alloc;
}

double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
    constexpr double kEarthRadiusKm = 6371.0;
    constexpr double kDeg = M_PI / 180.0;
    const double phi1 = lat1 * kDeg;
    const double phi2 = lat2 * kDeg;
    const double dphi = (lat2 - lat1) * kDeg;
    const double dlam = (lon2 - lon1) * kDeg;
    const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                     std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) *
                         std::sin(dlam / 2);
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

PhysicalTopology load_topology(const std::string& path, const GenConfig& cfg) {
    if (path.size() >= 8 && path.substr(path.size() - 8) == ".graphml") {
        return load_topology_graphml(path, cfg);
    }
    return load_topology_json(path, cfg);
}

PhysicalTopology load_topology_json(const std::string& path,
                                    const GenConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open topology file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& ex) {
        throw IngestionError(path + ": JSON parse failure: " + ex.what());
    }
    if (!j.contains("nodes") || !j.contains("edges")) {
        throw IngestionError(path + ": missing nodes/edges arrays");
    }
    std::map<long long, int> index;
    std::vector<RepeaterProfile> nodes;
    std::vector<Position> pos;
    for (const auto& nj : j["nodes"]) {
        const long long id = nj.at("id").get<long long>();
        if (index.count(id)) throw IngestionError(path + ": duplicate node id");
        const int idx = static_cast<int>(nodes.size());
        index[id] = idx;
        RepeaterProfile p;
        p.id = idx;
        p.gate.f_gate = nj.value("f_gate", std::min(1.0, cfg.f_gate_mean));
        p.n_dec = nj.value("n_dec",
                           std::max(1, static_cast<int>(
                                           std::lround(cfg.n_dec_mean))));
        p.qubit_capacity = nj.value("qubits", 0);
        nodes.push_back(p);
        pos.push_back({nj.value("x_km", 0.0), nj.value("y_km", 0.0)});
    }
    std::vector<Edge> edges;
    for (const auto& ej : j["edges"]) {
        Edge e;
        const long long u = ej.at("u").get<long long>();
        const long long v = ej.at("v").get<long long>();
        if (!index.count(u) || !index.count(v)) {
            throw IngestionError(path + ": edge references unknown node id");
        }
        e.u = index[u];
        e.v = index[v];
        if (ej.contains("length_km")) {
            e.length_km = ej["length_km"].get<double>();
        } else {
            const double dx = pos[e.u].x_km - pos[e.v].x_km;
            const double dy = pos[e.u].y_km - pos[e.v].y_km;
            e.length_km = std::hypot(dx, dy);
            if (!(e.length_km > 0.0)) {
                throw IngestionError(path +
                                     ": edge has neither length nor usable "
                                     "coordinates");
            }
        }
        e.capacity = ej.value("capacity", 0);
        edges.push_back(e);
    }
    try {
        PhysicalTopology t(std::move(nodes), std::move(edges), std::move(pos));
        if (t.edges()[0].capacity == 0 || t.nodes()[0].qubit_capacity == 0) {
            return assign_capacities(t, cfg.qubits_per_degree);
        }
        return t;
    } catch (const ConfigError& ex) {
        throw IngestionError(path + ": " + ex.what());
    }
}

}  // namespace reliq::topo
