#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dqos/common.hpp"
#include "dqos/ini.hpp"

namespace dqos {

enum class NodeKind { Host, Server, Switch, Controller, Attacker, Dummy };

inline std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Host: return "host";
    case NodeKind::Server: return "server";
    case NodeKind::Switch: return "switch";
    case NodeKind::Controller: return "controller";
    case NodeKind::Attacker: return "attacker";
    case NodeKind::Dummy: return "dummy";
  }
  return "?";
}

inline std::optional<NodeKind> parse_node_kind(std::string_view s) {
  for (auto k : {NodeKind::Host, NodeKind::Server, NodeKind::Switch, NodeKind::Controller, NodeKind::Attacker,
                 NodeKind::Dummy})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::Host;
  std::string name;
  std::uint32_t address = 0;  // 10.0.x.y, derived from the id
};

struct Link {
  NodeId a;
  NodeId b;
  double bandwidth_bps = 0.0;
  double delay_ms = 0.0;
};

using Route = std::vector<NodeId>;

class TopologyBuilder;

// Immutable description of the network. Produced by TopologyBuilder::build(),
// which enforces every structural invariant.
class Topology {
 public:
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(id.value); }
  const std::vector<Link>& links() const { return links_; }
  const std::vector<std::size_t>& incident_links(NodeId id) const { return adjacency_.at(id.value); }

  std::optional<NodeId> find(std::string_view name) const {
    for (const auto& n : nodes_)
      if (n.name == name) return n.id;
    return std::nullopt;
  }

  NodeId id(std::string_view name) const {
    if (auto n = find(name)) return *n;
    throw Error("unknown node '" + std::string(name) + "'");
  }

  std::optional<std::size_t> link_between(NodeId a, NodeId b) const {
    for (auto li : adjacency_.at(a.value)) {
      const auto& l = links_[li];
      if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) return li;
    }
    return std::nullopt;
  }

  const Route& route(NodeId src, NodeId dst) const {
    auto it = routes_.find({src, dst});
    if (it == routes_.end())
      throw UnknownRoute("no route from " + node(src).name + " to " + node(dst).name);
    return it->second;
  }

  const std::map<std::pair<NodeId, NodeId>, Route>& routes() const { return routes_; }

  double controller_rtt_ms() const { return controller_rtt_ms_; }
  NodeId target_switch() const { return target_switch_; }
  NodeId controller() const { return of_kind(NodeKind::Controller).front(); }

  // Ids of one kind, ascending. The telemetry layout depends on this order.
  std::vector<NodeId> of_kind(NodeKind kind) const {
    std::vector<NodeId> out;
    for (const auto& n : nodes_)
      if (n.kind == kind) out.push_back(n.id);
    return out;
  }
  std::vector<NodeId> switches() const { return of_kind(NodeKind::Switch); }
  std::vector<NodeId> hosts() const { return of_kind(NodeKind::Host); }
  std::vector<NodeId> servers() const { return of_kind(NodeKind::Server); }
  std::vector<NodeId> attackers() const { return of_kind(NodeKind::Attacker); }
  std::vector<NodeId> dummies() const { return of_kind(NodeKind::Dummy); }

  // Links whose endpoints are both switches, ascending by link index.
  std::vector<std::size_t> switch_links() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < links_.size(); ++i)
      if (is_switch(links_[i].a) && is_switch(links_[i].b)) out.push_back(i);
    return out;
  }

  bool is_switch(NodeId id) const { return node(id).kind == NodeKind::Switch; }

  // Index of a switch within switches(); -1 for non-switch nodes.
  int switch_index(NodeId id) const { return switch_index_.at(id.value); }

  // Canonical text form, accepted back by parse_topology().
  std::string dump() const {
    std::ostringstream os;
    os << "# dqos topology v1\n";
    os << "controller_rtt_ms = " << format_double(controller_rtt_ms_) << "\n";
    os << "target_switch = " << node(target_switch_).name << "\n\n";
    os << "[nodes]\n# name = kind\n";
    for (const auto& n : nodes_) os << n.name << " = " << to_string(n.kind) << "\n";
    os << "\n[links]\n# link = endpoint endpoint bandwidth_mbps delay_ms\n";
    for (const auto& l : links_)
      os << "link = " << node(l.a).name << " " << node(l.b).name << " " << format_double(l.bandwidth_bps / 1e6)
         << " " << format_double(l.delay_ms) << "\n";
    os << "\n[routes]\n# route = source destination : switch sequence\n";
    for (const auto& [key, r] : routes_) {
      os << "route = " << node(key.first).name << " " << node(key.second).name << " :";
      for (auto s : r) os << " " << node(s).name;
      os << "\n";
    }
    return os.str();
  }

  std::uint64_t fingerprint() const { return fnv1a(dump()); }

 private:
  friend class TopologyBuilder;
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<std::vector<std::size_t>> adjacency_;
  std::vector<int> switch_index_;
  std::map<std::pair<NodeId, NodeId>, Route> routes_;
  double controller_rtt_ms_ = 68.0;
  NodeId target_switch_;
};

class TopologyBuilder {
 public:
  NodeId add_node(std::string name, NodeKind kind) {
    for (const auto& n : topo_.nodes_)
      if (n.name == name) throw Error("duplicate node name '" + name + "'");
    if (topo_.nodes_.size() >= 60000) throw Error("too many nodes");
    NodeId id{static_cast<std::uint16_t>(topo_.nodes_.size())};
    std::uint32_t addr = 0x0A000000u | (static_cast<std::uint32_t>(id.value) + 1);
    topo_.nodes_.push_back({id, kind, std::move(name), addr});
    return id;
  }

  TopologyBuilder& add_link(NodeId a, NodeId b, double bandwidth_mbps, double delay_ms) {
    topo_.links_.push_back({a, b, bandwidth_mbps * 1e6, delay_ms});
    return *this;
  }

  TopologyBuilder& add_link(std::string_view a, std::string_view b, double bandwidth_mbps, double delay_ms) {
    return add_link(lookup(a), lookup(b), bandwidth_mbps, delay_ms);
  }

  TopologyBuilder& set_route(NodeId src, NodeId dst, Route switches) {
    topo_.routes_[{src, dst}] = std::move(switches);
    return *this;
  }

  TopologyBuilder& controller_rtt_ms(double v) {
    topo_.controller_rtt_ms_ = v;
    return *this;
  }

  TopologyBuilder& target_switch(std::string_view name) {
    target_name_ = std::string(name);
    return *this;
  }

  NodeId lookup(std::string_view name) const {
    for (const auto& n : topo_.nodes_)
      if (n.name == name) return n.id;
    throw Error("unknown node '" + std::string(name) + "'");
  }

  // Fills in a route for every (traffic source, server) pair that has none:
  // fewest switch hops, ties resolved towards lower node ids.
  TopologyBuilder& compute_missing_routes() {
    index();
    for (const auto& src : topo_.nodes_) {
      if (src.kind != NodeKind::Host && src.kind != NodeKind::Attacker && src.kind != NodeKind::Dummy) continue;
      for (const auto& dst : topo_.nodes_) {
        if (dst.kind != NodeKind::Server) continue;
        if (topo_.routes_.count({src.id, dst.id})) continue;
        if (auto r = shortest_switch_path(src.id, dst.id)) topo_.routes_[{src.id, dst.id}] = std::move(*r);
      }
    }
    return *this;
  }

  Topology build() {
    index();
    validate();
    return topo_;
  }

 private:
  void index() {
    auto& t = topo_;
    t.adjacency_.assign(t.nodes_.size(), {});
    for (std::size_t i = 0; i < t.links_.size(); ++i) {
      const auto& l = t.links_[i];
      if (l.a.value >= t.nodes_.size() || l.b.value >= t.nodes_.size()) throw Error("link endpoint out of range");
      t.adjacency_[l.a.value].push_back(i);
      t.adjacency_[l.b.value].push_back(i);
    }
    t.switch_index_.assign(t.nodes_.size(), -1);
    int si = 0;
    for (const auto& n : t.nodes_)
      if (n.kind == NodeKind::Switch) t.switch_index_[n.id.value] = si++;
  }

  std::optional<Route> shortest_switch_path(NodeId src, NodeId dst) const {
    const auto& t = topo_;
    const std::size_t n = t.nodes_.size();
    std::vector<int> prev(n, -2);
    std::queue<NodeId> q;
    prev[src.value] = -1;
    q.push(src);
    while (!q.empty()) {
      NodeId u = q.front();
      q.pop();
      if (u == dst) break;
      if (u != src && t.nodes_[u.value].kind != NodeKind::Switch) continue;
      std::vector<NodeId> nbrs;
      for (auto li : t.adjacency_[u.value]) {
        const auto& l = t.links_[li];
        nbrs.push_back(l.a == u ? l.b : l.a);
      }
      std::sort(nbrs.begin(), nbrs.end());
      for (auto v : nbrs) {
        if (prev[v.value] != -2) continue;
        if (v != dst && t.nodes_[v.value].kind != NodeKind::Switch) continue;
        prev[v.value] = u.value;
        q.push(v);
      }
    }
    if (prev[dst.value] == -2) return std::nullopt;
    Route r;
    for (int v = prev[dst.value]; v >= 0 && NodeId{static_cast<std::uint16_t>(v)} != src; v = prev[v])
      r.push_back(NodeId{static_cast<std::uint16_t>(v)});
    std::reverse(r.begin(), r.end());
    if (r.empty()) return std::nullopt;
    return r;
  }

  void validate() {
    auto& t = topo_;
    int controllers = 0;
    for (const auto& n : t.nodes_)
      if (n.kind == NodeKind::Controller) ++controllers;
    if (controllers != 1) throw Error("topology must have exactly one controller node");
    for (std::size_t i = 0; i < t.links_.size(); ++i) {
      const auto& l = t.links_[i];
      if (l.a == l.b) throw Error("self-loop on " + t.nodes_[l.a.value].name);
      if (!(l.bandwidth_bps > 0)) throw Error("link bandwidth must be positive");
      if (!(l.delay_ms >= 0)) throw Error("link delay must be non-negative");
      for (std::size_t j = 0; j < i; ++j) {
        const auto& o = t.links_[j];
        if ((o.a == l.a && o.b == l.b) || (o.a == l.b && o.b == l.a))
          throw Error("duplicate link " + t.nodes_[l.a.value].name + "-" + t.nodes_[l.b.value].name);
      }
    }
    if (!(t.controller_rtt_ms_ > 0)) throw Error("controller_rtt_ms must be positive");
    if (target_name_.empty()) throw Error("target_switch not set");
    t.target_switch_ = lookup(target_name_);
    if (t.nodes_[t.target_switch_.value].kind != NodeKind::Switch) throw Error("target_switch is not a switch");

    auto linked = [&](NodeId a, NodeId b) { return t.link_between(a, b).has_value(); };
    for (const auto& [key, r] : t.routes_) {
      const auto& [src, dst] = key;
      std::string label = t.nodes_[src.value].name + "->" + t.nodes_[dst.value].name;
      if (src == dst) throw Error("self route " + label);
      if (r.empty()) throw Error("empty route " + label);
      for (auto s : r)
        if (!t.is_switch(s)) throw Error("route " + label + " passes through a non-switch node");
      if (!linked(src, r.front())) throw Error("route " + label + ": source not attached to first switch");
      for (std::size_t i = 1; i < r.size(); ++i)
        if (!linked(r[i - 1], r[i])) throw Error("route " + label + ": consecutive switches not linked");
      if (!linked(r.back(), dst)) throw Error("route " + label + ": last switch not attached to destination");
      if (t.nodes_[src.value].kind == NodeKind::Host && t.nodes_[dst.value].kind == NodeKind::Server &&
          std::find(r.begin(), r.end(), t.target_switch_) == r.end())
        throw Error("route " + label + " bypasses the target switch");
    }
    for (auto h : t.hosts())
      for (auto s : t.servers())
        if (!t.routes_.count({h, s}))
          throw Error("missing route " + t.nodes_[h.value].name + "->" + t.nodes_[s.value].name);
  }

  Topology topo_;
  std::string target_name_;
};

// Built-in three-site network: two host sites (switch1x, switch2x) reaching the
// server site (switch3x) through the entry switch switch34. switch33 aggregates
// the two server racks (switch31, switch32).
inline Topology default_topology() {
  TopologyBuilder b;
  for (auto name : {"switch11", "switch12", "switch13", "switch21", "switch22", "switch23", "switch31", "switch32",
                    "switch33", "switch34"})
    b.add_node(name, NodeKind::Switch);
  for (int i = 1; i <= 6; ++i) b.add_node("host" + std::to_string(i), NodeKind::Host);
  for (int i = 1; i <= 4; ++i) b.add_node("server" + std::to_string(i), NodeKind::Server);
  for (int i = 1; i <= 3; ++i) b.add_node("attacker" + std::to_string(i), NodeKind::Attacker);
  for (int i = 1; i <= 2; ++i) b.add_node("dummy" + std::to_string(i), NodeKind::Dummy);
  b.add_node("controller", NodeKind::Controller);

  constexpr double kEdge = 100.0;  // inter-site links into switch34
  constexpr double kOther = 50.0;
  // Site 1.
  b.add_link("host1", "switch11", kOther, 0.5).add_link("host2", "switch11", kOther, 0.5);
  b.add_link("host3", "switch12", kOther, 0.5);
  b.add_link("attacker1", "switch11", kOther, 0.5).add_link("attacker2", "switch12", kOther, 0.5);
  b.add_link("dummy1", "switch12", kOther, 0.5);
  b.add_link("switch11", "switch13", kOther, 1.0).add_link("switch12", "switch13", kOther, 1.0);
  // Site 2.
  b.add_link("host4", "switch21", kOther, 0.5).add_link("host5", "switch21", kOther, 0.5);
  b.add_link("host6", "switch22", kOther, 0.5);
  b.add_link("attacker3", "switch21", kOther, 0.5);
  b.add_link("dummy2", "switch22", kOther, 0.5);
  b.add_link("switch21", "switch23", kOther, 1.0).add_link("switch22", "switch23", kOther, 1.0);
  // Wide-area links into the server site.
  b.add_link("switch13", "switch34", kEdge, 8.0).add_link("switch23", "switch34", kEdge, 10.0);
  // Server site.
  b.add_link("switch34", "switch33", kOther, 0.5);
  b.add_link("switch33", "switch31", kOther, 0.5).add_link("switch33", "switch32", kOther, 0.5);
  b.add_link("server1", "switch31", kOther, 0.5).add_link("server2", "switch31", kOther, 0.5);
  b.add_link("server3", "switch32", kOther, 0.5).add_link("server4", "switch32", kOther, 0.5);

  b.controller_rtt_ms(68.0).target_switch("switch34");
  b.compute_missing_routes();
  return b.build();
}

// Single-site chain host1 - switch1 - switch2 - switch3 - server1 whose
// unloaded one-way latency for a 1250-byte packet is 10 ms.
inline Topology same_site_topology(double controller_rtt_ms = 68.0) {
  TopologyBuilder b;
  for (auto name : {"switch1", "switch2", "switch3"}) b.add_node(name, NodeKind::Switch);
  b.add_node("host1", NodeKind::Host);
  b.add_node("server1", NodeKind::Server);
  b.add_node("controller", NodeKind::Controller);
  // 4 links x (0.2 ms transmission at 50 Mbps + 2.3 ms propagation) = 10 ms.
  b.add_link("host1", "switch1", 50, 2.3).add_link("switch1", "switch2", 50, 2.3);
  b.add_link("switch2", "switch3", 50, 2.3).add_link("switch3", "server1", 50, 2.3);
  b.controller_rtt_ms(controller_rtt_ms).target_switch("switch1");
  b.compute_missing_routes();
  return b.build();
}

inline Topology parse_topology(std::string_view text) {
  auto doc = IniDocument::parse(text);
  TopologyBuilder b;
  bool have_target = false;
  for (const auto* e : doc.section("")) {
    if (e->key == "controller_rtt_ms") {
      b.controller_rtt_ms(entry_number(*e));
    } else if (e->key == "target_switch") {
      b.target_switch(e->value);
      have_target = true;
    } else {
      throw ConfigError("unknown topology key '" + e->key + "'", e->line);
    }
  }
  if (!have_target) throw ConfigError("target_switch missing");
  for (const auto* e : doc.section("nodes")) {
    auto kind = parse_node_kind(e->value);
    if (!kind) throw ConfigError("unknown node kind '" + e->value + "'", e->line);
    try {
      b.add_node(e->key, *kind);
    } catch (const Error& err) {
      throw ConfigError(err.what(), e->line);
    }
  }
  for (const auto* e : doc.section("links")) {
    if (e->key != "link") throw ConfigError("expected 'link = a b bandwidth_mbps delay_ms'", e->line);
    auto f = split_ws(e->value);
    if (f.size() != 4) throw ConfigError("expected 'link = a b bandwidth_mbps delay_ms'", e->line);
    try {
      b.add_link(f[0], f[1], parse_double(f[2]), parse_double(f[3]));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& err) {
      throw ConfigError(err.what(), e->line);
    }
  }
  for (const auto* e : doc.section("routes")) {
    if (e->key != "route") throw ConfigError("expected 'route = src dst : switches...'", e->line);
    auto colon = e->value.find(':');
    if (colon == std::string::npos) throw ConfigError("route needs ':' before the switch list", e->line);
    auto ends = split_ws(std::string_view(e->value).substr(0, colon));
    auto hops = split_ws(std::string_view(e->value).substr(colon + 1));
    if (ends.size() != 2 || hops.empty()) throw ConfigError("malformed route", e->line);
    try {
      Route r;
      for (auto h : hops) r.push_back(b.lookup(h));
      b.set_route(b.lookup(ends[0]), b.lookup(ends[1]), std::move(r));
    } catch (const Error& err) {
      throw ConfigError(err.what(), e->line);
    }
  }
  b.compute_missing_routes();
  try {
    return b.build();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw ConfigError(err.what());
  }
}

}  // namespace dqos
