#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Physical fiber topologies: random generation, GraphML / JSON ingestion,
// long-link segmentation, capacity assignment and Phase-1 qubit bucketing.
namespace reliq::topo {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IngestionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GateProfile {
    double f_gate = 1.0;
};

struct RepeaterProfile {
    int id = 0;
    int qubit_capacity = 0;  // C_v
    GateProfile gate;
    int n_dec = 1024;
};

struct Edge {
    int u = 0;
    int v = 0;
    double length_km = 0.0;
    int capacity = 0;  // C_e, assigned by assign_capacities
};

struct Position {
    double x_km = 0.0;
    double y_km = 0.0;
};

// Static fiber graph G_P. The checked constructor enforces: simple
// undirected graph, connected, no self-loops, positive lengths, and
// C_e <= min(C_u, C_v) whenever capacities are set.
class PhysicalTopology {
  public:
    PhysicalTopology(std::vector<RepeaterProfile> nodes,
                     std::vector<Edge> edges,
                     std::vector<Position> positions = {});

    [[nodiscard]] int node_count() const {
        return static_cast<int>(nodes_.size());
    }
    [[nodiscard]] int edge_count() const {
        return static_cast<int>(edges_.size());
    }
    [[nodiscard]] const std::vector<RepeaterProfile>& nodes() const {
        return nodes_;
    }
    [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
    [[nodiscard]] const std::vector<Position>& positions() const {
        return positions_;
    }
    // Incident edge indices, sorted by neighbor node id ascending. This
    // ordering defines the per-node action slots.
    [[nodiscard]] const std::vector<int>& incident_edges(int node) const {
        return incidence_[node];
    }
    [[nodiscard]] int degree(int node) const {
        return static_cast<int>(incidence_[node].size());
    }
    [[nodiscard]] int other_end(int edge, int node) const;
    [[nodiscard]] int max_degree() const;
    // Byte-stable textual serialization, used for determinism checks.
    [[nodiscard]] std::string serialize() const;

  private:
    std::vector<RepeaterProfile> nodes_;
    std::vector<Edge> edges_;
    std::vector<Position> positions_;
    std::vector<std::vector<int>> incidence_;
};

// Per-node split of C_v into per-neighbor buckets.
struct QubitAllocation {
    // buckets[node] maps neighbor id -> reserved qubit count.
    std::vector<std::map<int, int>> buckets;
};

struct GenConfig {
    int max_degree = 5;
    int knn = 3;
    double f_gate_mean = 1.0;
    double f_gate_spread = 0.1;   // f_gate ~ min(1, N(mean, spread^2))
    double n_dec_mean = 1024.0;
    double n_dec_spread = 0.0;    // n_dec ~ max(1, round(N(mean, spread^2)))
    int qubits_per_degree = 2;
};

// Geometric random topology: n points uniform in a square of side
// 50*sqrt(n) km, k-nearest-neighbor edges plus a minimum spanning tree
// for connectivity, then degree pruning. Deterministic per seed.
PhysicalTopology generate_random(int n_nodes, std::uint64_t seed,
                                 const GenConfig& cfg = {});

// Reads either the JSON topology schema or GraphML (decided by file
// extension). Lat/long coordinates are converted to km via great-circle
// distances; declared lengths take precedence over coordinates.
PhysicalTopology load_topology(const std::string& path,
                               const GenConfig& cfg = {});
PhysicalTopology load_topology_json(const std::string& path,
                                    const GenConfig& cfg = {});
PhysicalTopology load_topology_graphml(const std::string& path,
                                       const GenConfig& cfg = {});

// Replaces every edge longer than max_len_km by ceil(L/max_len) equal
// segments through fresh degree-2 repeaters. Idempotent at the same
// max_len.
PhysicalTopology segment_long_links(const PhysicalTopology& t,
                                    double max_len_km, std::uint64_t seed,
                                    const GenConfig& cfg = {});

// C_v = degree * qubits_per_degree, C_e = min over both endpoints of the
// per-neighbor bucket an even split would give.
PhysicalTopology assign_capacities(const PhysicalTopology& t,
                                   int qubits_per_degree);

// Phase-1 bucketing. When C_v >= degree the qubits split as evenly as
// possible (remainder to the lowest neighbor ids). Otherwise a maximum
// spanning tree weighted by min endpoint capacity decides which
// neighbors receive the scarce qubits.
QubitAllocation qubit_buckets(const PhysicalTopology& t);

double great_circle_km(double lat1, double lon1, double lat2, double lon2);

}  // namespace reliq::topo
