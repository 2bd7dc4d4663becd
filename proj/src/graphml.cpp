#include "reliq/topo.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

// Minimal GraphML reader covering the Topology Zoo / SNDlib export shape:
// <key> declarations, <node> elements with coordinate <data> entries and
// <edge source=... target=...> elements, optionally carrying a length
// attribute. No external XML dependency.
namespace reliq::topo {

namespace {

struct Tag {
    std::string name;
    std::map<std::string, std::string> attrs;
    bool closing = false;
    bool self_closing = false;
    size_t end = 0;  // index just past '>'
};

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(c));
    return s;
}

// Parses the tag starting at text[pos] == '<'. Returns nullopt for
// comments / declarations.
std::optional<Tag> parse_tag(const std::string& text, size_t pos) {
    const size_t close = text.find('>', pos);
    if (close == std::string::npos) return std::nullopt;
    Tag tag;
    tag.end = close + 1;
    size_t i = pos + 1;
    if (i < text.size() && (text[i] == '?' || text[i] == '!')) return std::nullopt;
    if (text[i] == '/') {
        tag.closing = true;
        ++i;
    }
    while (i < close && !std::isspace(static_cast<unsigned char>(text[i])) &&
           text[i] != '/')
        tag.name += text[i++];
    while (i < close) {
        while (i < close && (std::isspace(static_cast<unsigned char>(text[i])) ||
                             text[i] == '/'))
            ++i;
        if (i >= close) break;
        std::string key;
        while (i < close && text[i] != '=' &&
               !std::isspace(static_cast<unsigned char>(text[i])))
            key += text[i++];
        while (i < close && (text[i] == '=' ||
                             std::isspace(static_cast<unsigned char>(text[i]))))
            ++i;
        if (i < close && (text[i] == '"' || text[i] == '\'')) {
            const char quote = text[i++];
            std::string value;
            while (i < close && text[i] != quote) value += text[i++];
            ++i;
            tag.attrs[key] = value;
        }
    }
    if (close > pos && text[close - 1] == '/') tag.self_closing = true;
    return tag;
}

struct RawNode {
    std::string id;
    std::map<std::string, std::string> data;  // key id -> value
};

struct RawEdge {
    std::string source, target;
    std::map<std::string, std::string> data;
};

double to_double(const std::string& s, const std::string& path) {
    try {
        return std::stod(s);
    } catch (...) {
        throw IngestionError(path + ": non-numeric attribute value '" + s + "'");
    }
}

}  // namespace

PhysicalTopology load_topology_graphml(const std::string& path,
                                       const GenConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open topology file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();

    std::map<std::string, std::string> key_names;  // key id -> attr.name
    std::vector<RawNode> raw_nodes;
    std::vector<RawEdge> raw_edges;

    enum class Ctx { None, Node, Edge } ctx = Ctx::None;
    size_t pos = 0;
    while ((pos = text.find('<', pos)) != std::string::npos) {
        auto tag = parse_tag(text, pos);
        if (!tag) {
            pos = text.find('>', pos);
            if (pos == std::string::npos) break;
            ++pos;
            continue;
        }
        if (tag->name == "key" && !tag->closing) {
            if (tag->attrs.count("id") && tag->attrs.count("attr.name")) {
                key_names[tag->attrs["id"]] = lower(tag->attrs["attr.name"]);
            }
        } else if (tag->name == "node" && !tag->closing) {
            RawNode n;
            n.id = tag->attrs.count("id") ? tag->attrs["id"] : "";
            raw_nodes.push_back(n);
            ctx = tag->self_closing ? Ctx::None : Ctx::Node;
        } else if (tag->name == "edge" && !tag->closing) {
            RawEdge e;
            e.source = tag->attrs["source"];
            e.target = tag->attrs["target"];
            raw_edges.push_back(e);
            ctx = tag->self_closing ? Ctx::None : Ctx::Edge;
        } else if (tag->name == "data" && !tag->closing && !tag->self_closing) {
            const size_t vstart = tag->end;
            const size_t vend = text.find('<', vstart);
            const std::string value = text.substr(vstart, vend - vstart);
            const std::string key = tag->attrs["key"];
            const std::string name =
                key_names.count(key) ? key_names[key] : lower(key);
            if (ctx == Ctx::Node && !raw_nodes.empty()) {
                raw_nodes.back().data[name] = value;
            } else if (ctx == Ctx::Edge && !raw_edges.empty()) {
                raw_edges.back().data[name] = value;
            }
        } else if (tag->closing && (tag->name == "node" || tag->name == "edge")) {
            ctx = Ctx::None;
        }
        pos = tag->end;
    }

    if (raw_nodes.empty()) throw IngestionError(path + ": no nodes found");

    std::map<std::string, int> index;
    std::vector<RepeaterProfile> nodes;
    std::vector<Position> pos_km;
    std::vector<std::pair<double, double>> latlon(raw_nodes.size(),
                                                  {NAN, NAN});
    bool any_latlon = false;
    for (const auto& rn : raw_nodes) {
        if (index.count(rn.id)) {
            throw IngestionError(path + ": duplicate node id " + rn.id);
        }
        const int idx = static_cast<int>(nodes.size());
        index[rn.id] = idx;
        RepeaterProfile p;
        p.id = idx;
        p.gate.f_gate = std::min(1.0, cfg.f_gate_mean);
        p.n_dec = std::max(1, static_cast<int>(std::lround(cfg.n_dec_mean)));
        nodes.push_back(p);
        Position xy{0.0, 0.0};
        auto get = [&](const char* name) -> std::optional<double> {
            auto it = rn.data.find(name);
            if (it == rn.data.end()) return std::nullopt;
            return to_double(it->second, path);
        };
        if (auto lat = get("latitude"); lat) {
            latlon[idx] = {*lat, get("longitude").value_or(NAN)};
            any_latlon = true;
        } else if (auto x = get("x"); x) {
            xy = {*x, get("y").value_or(0.0)};
        } else if (auto xk = get("x_km"); xk) {
            xy = {*xk, get("y_km").value_or(0.0)};
        }
        pos_km.push_back(xy);
    }
    if (any_latlon) {
        // Equirectangular projection around the mean latitude; edge
        // lengths still come from the exact great-circle formula.
        double lat0 = 0.0;
        int cnt = 0;
        for (const auto& [la, lo] : latlon)
            if (!std::isnan(la)) {
                lat0 += la;
                ++cnt;
            }
        lat0 /= std::max(1, cnt);
        for (size_t i = 0; i < latlon.size(); ++i) {
            if (std::isnan(latlon[i].first)) continue;
            pos_km[i].x_km = great_circle_km(lat0, 0.0, lat0,
                                             latlon[i].second) *
                             (latlon[i].second < 0 ? -1.0 : 1.0);
            pos_km[i].y_km = great_circle_km(0.0, 0.0, latlon[i].first, 0.0) *
                             (latlon[i].first < 0 ? -1.0 : 1.0);
        }
    }

    std::vector<Edge> edges;
    for (const auto& re : raw_edges) {
        if (!index.count(re.source) || !index.count(re.target)) {
            throw IngestionError(path + ": edge references unknown node");
        }
        Edge e;
        e.u = index[re.source];
        e.v = index[re.target];
        if (e.u == e.v) continue;
        bool dup = false;
        for (const auto& prev : edges) {
            if (std::minmax(prev.u, prev.v) == std::minmax(e.u, e.v)) {
                dup = true;
                break;
            }
        }
        if (dup) continue;
        for (const char* name : {"length", "length_km", "distance"}) {
            auto it = re.data.find(name);
            if (it != re.data.end()) {
                e.length_km = to_double(it->second, path);
                break;
            }
        }
        if (!(e.length_km > 0.0)) {
            if (any_latlon && !std::isnan(latlon[e.u].first) &&
                !std::isnan(latlon[e.v].first)) {
                e.length_km =
                    great_circle_km(latlon[e.u].first, latlon[e.u].second,
                                    latlon[e.v].first, latlon[e.v].second);
            } else {
                const double dx = pos_km[e.u].x_km - pos_km[e.v].x_km;
                const double dy = pos_km[e.u].y_km - pos_km[e.v].y_km;
                e.length_km = std::hypot(dx, dy);
            }
        }
        if (!(e.length_km > 0.0)) {
            throw IngestionError(path + ": edge " + re.source + "-" +
                                 re.target +
                                 " has neither length nor coordinates");
        }
        edges.push_back(e);
    }

    try {
        PhysicalTopology t(std::move(nodes), std::move(edges),
                           std::move(pos_km));
        return assign_capacities(t, cfg.qubits_per_degree);
    } catch (const ConfigError& ex) {
        throw IngestionError(path + ": " + ex.what());
    }
}

}  // namespace reliq::topo
