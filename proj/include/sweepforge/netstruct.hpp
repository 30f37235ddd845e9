#pragma once

// Dynamic network structures: nodes, links, networks and a network set that
// owns them all. Networks may share nodes; each link belongs to exactly one
// network. Everything is held by value, so copying a NetworkSet is a deep
// clone of the whole system including element states.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sweepforge/error.hpp"
#include "sweepforge/value.hpp"

namespace sweepforge::net {

template <typename Tag>
struct Id {
  std::uint64_t value = 0;

  auto operator<=>(const Id&) const = default;
};

using NodeId = Id<struct NodeTag>;
using LinkId = Id<struct LinkTag>;
using NetId = Id<struct NetTag>;

using StateBag = std::map<std::string, Value, std::less<>>;

struct Node {
  NodeId id;
  StateBag state;
  std::set<NetId> membership;

  bool operator==(const Node&) const = default;
};

struct Link {
  LinkId id;
  NodeId src;
  NodeId dst;
  bool directed = false;
  StateBag state;
  NetId owner;

  bool operator==(const Link&) const = default;
};

struct Network {
  NetId id;
  std::set<NodeId> members;
  std::set<LinkId> links;
  StateBag state;
  // Per member: link -> node at the other end, for links leaving (out) or
  // entering (in) the member. Undirected links appear in both maps of both
  // endpoints.
  std::map<NodeId, std::map<LinkId, NodeId>> out;
  std::map<NodeId, std::map<LinkId, NodeId>> in;

  bool operator==(const Network&) const = default;
};

class NetworkSet {
 public:
  explicit NetworkSet(bool allow_self_loops = false) : allow_self_loops_(allow_self_loops) {}

  bool allow_self_loops() const noexcept { return allow_self_loops_; }

  // --- networks ---------------------------------------------------------

  NetId add_network(StateBag state = {}) {
    NetId id{next_net_++};
    networks_.emplace(id, Network{id, {}, {}, std::move(state), {}, {}});
    return id;
  }

  /// Removes a network with its links; nodes left without any network are
  /// deleted.
  void remove_network(NetId id) {
    Network& n = net_mut(id);
    for (NodeId v : std::vector<NodeId>(n.members.begin(), n.members.end())) remove_node(id, v);
    networks_.erase(id);
  }

  // --- nodes ------------------------------------------------------------

  NodeId add_node(NetId net, StateBag state = {}) {
    Network& n = net_mut(net);
    NodeId id{next_node_++};
    nodes_.emplace(id, Node{id, std::move(state), {net}});
    n.members.insert(id);
    return id;
  }

  /// Makes an existing node a member of another network as well.
  void enroll_node(NetId net, NodeId node) {
    Network& n = net_mut(net);
    Node& v = node_mut(node);
    v.membership.insert(net);
    n.members.insert(node);
  }

  /// Drops `node` from `net` together with the links of `net` incident to it.
  /// The node is deleted outright once it belongs to no network.
  void remove_node(NetId net, NodeId node) {
    Network& n = net_mut(net);
    if (!n.members.count(node)) throw NetworkError("node " + std::to_string(node.value) + " is not a member of network " +
                                                   std::to_string(net.value));
    std::set<LinkId> incident;
    if (auto it = n.out.find(node); it != n.out.end())
      for (const auto& [l, _] : it->second) incident.insert(l);
    if (auto it = n.in.find(node); it != n.in.end())
      for (const auto& [l, _] : it->second) incident.insert(l);
    for (LinkId l : incident) remove_link(l);
    n.members.erase(node);
    n.out.erase(node);
    n.in.erase(node);
    Node& v = nodes_.at(node);
    v.membership.erase(net);
    if (v.membership.empty()) nodes_.erase(node);
  }

  // --- links ------------------------------------------------------------

  LinkId add_link(NetId net, NodeId src, NodeId dst, bool directed, StateBag state = {}) {
    Network& n = net_mut(net);
    for (NodeId v : {src, dst}) {
      node(v);
      if (!n.members.count(v))
        throw NetworkError("node " + std::to_string(v.value) + " is not a member of network " +
                           std::to_string(net.value));
    }
    if (src == dst && !allow_self_loops_) throw NetworkError("self-loops are disabled");
    LinkId id{next_link_++};
    links_.emplace(id, Link{id, src, dst, directed, std::move(state), net});
    n.links.insert(id);
    n.out[src][id] = dst;
    n.in[dst][id] = src;
    if (!directed) {
      n.out[dst][id] = src;
      n.in[src][id] = dst;
    }
    return id;
  }

  void remove_link(LinkId id) {
    const Link& l = link(id);
    Network& n = networks_.at(l.owner);
    auto drop = [&](std::map<NodeId, std::map<LinkId, NodeId>>& adj, NodeId v) {
      auto it = adj.find(v);
      if (it == adj.end()) return;
      it->second.erase(id);
      if (it->second.empty()) adj.erase(it);
    };
    drop(n.out, l.src);
    drop(n.in, l.dst);
    drop(n.out, l.dst);
    drop(n.in, l.src);
    n.links.erase(id);
    links_.erase(id);
  }

  // --- merge / clone ------------------------------------------------------

  /// New network holding the union of the targets' members and copies of all
  /// their links (fresh ids, same states). Targets are left untouched.
  /// Parallel links can result when targets link the same pair.
  NetId merge(std::span<const NetId> targets) {
    if (targets.size() < 2) throw NetworkError("merge needs at least two networks");
    std::set<NetId> unique;
    for (NetId t : targets) {
      net(t);
      if (!unique.insert(t).second) throw NetworkError("network " + std::to_string(t.value) + " listed twice in merge");
    }
    NetId merged = add_network();
    for (NetId t : targets)
      for (NodeId v : networks_.at(t).members) enroll_node(merged, v);
    for (NetId t : targets) {
      std::vector<LinkId> ids(networks_.at(t).links.begin(), networks_.at(t).links.end());
      for (LinkId l : ids) {
        Link copy = links_.at(l);
        add_link(merged, copy.src, copy.dst, copy.directed, copy.state);
      }
    }
    return merged;
  }

  NetId merge(std::initializer_list<NetId> targets) { return merge(std::span<const NetId>(targets.begin(), targets.size())); }

  /// Independent deep copy with identical ids, states and topology.
  NetworkSet clone_system() const { return *this; }

  // --- queries ----------------------------------------------------------

  const Node& node(NodeId id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw NetworkError("unknown node " + std::to_string(id.value));
    return it->second;
  }
  const Link& link(LinkId id) const {
    auto it = links_.find(id);
    if (it == links_.end()) throw NetworkError("unknown link " + std::to_string(id.value));
    return it->second;
  }
  const Network& net(NetId id) const {
    auto it = networks_.find(id);
    if (it == networks_.end()) throw NetworkError("unknown network " + std::to_string(id.value));
    return it->second;
  }

  bool has_node(NodeId id) const { return nodes_.count(id) != 0; }
  bool has_link(LinkId id) const { return links_.count(id) != 0; }
  bool has_net(NetId id) const { return networks_.count(id) != 0; }

  const std::map<NodeId, Node>& nodes() const noexcept { return nodes_; }
  const std::map<LinkId, Link>& links() const noexcept { return links_; }
  const std::map<NetId, Network>& networks() const noexcept { return networks_; }

  /// Nodes reachable over one link leaving `node` (undirected links count in
  /// both directions), ascending, without duplicates.
  std::vector<NodeId> out_neighbors(NetId net_id, NodeId node) const { return collect(member_net(net_id, node).out, node); }
  std::vector<NodeId> in_neighbors(NetId net_id, NodeId node) const { return collect(member_net(net_id, node).in, node); }

  /// All adjacent nodes regardless of direction, ascending.
  std::vector<NodeId> neighbors(NetId net_id, NodeId node) const {
    auto a = out_neighbors(net_id, node);
    auto b = in_neighbors(net_id, node);
    std::vector<NodeId> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
  }

  /// Out-degree counting links: undirected links count once per endpoint
  /// (twice for an undirected self-loop), directed links count at the source.
  std::size_t degree(NetId net_id, NodeId node) const {
    const Network& n = member_net(net_id, node);
    auto it = n.out.find(node);
    if (it == n.out.end()) return 0;
    std::size_t d = 0;
    for (const auto& [l, other] : it->second) d += (other == node && !links_.at(l).directed) ? 2 : 1;
    return d;
  }

  // --- state ------------------------------------------------------------

  void set_node_state(NodeId id, std::string_view key, Value v) { set(node_mut(id).state, key, std::move(v)); }
  void set_link_state(LinkId id, std::string_view key, Value v) { set(link_mut(id).state, key, std::move(v)); }
  void set_net_state(NetId id, std::string_view key, Value v) { set(net_mut(id).state, key, std::move(v)); }

  const Value* node_state(NodeId id, std::string_view key) const { return get(node(id).state, key); }
  const Value* link_state(LinkId id, std::string_view key) const { return get(link(id).state, key); }
  const Value* net_state(NetId id, std::string_view key) const { return get(net(id).state, key); }

  /// Throws NetworkError describing the first broken invariant.
  void check_integrity() const {
    auto fail = [](const std::string& m) { throw NetworkError("integrity: " + m); };
    for (const auto& [id, v] : nodes_) {
      if (v.membership.empty()) fail("node without network");
      for (NetId n : v.membership)
        if (!networks_.count(n) || !networks_.at(n).members.count(id)) fail("membership not mirrored");
    }
    for (const auto& [nid, n] : networks_) {
      for (NodeId v : n.members)
        if (!nodes_.count(v) || !nodes_.at(v).membership.count(nid)) fail("member set not mirrored");
      for (LinkId l : n.links)
        if (!links_.count(l) || links_.at(l).owner != nid) fail("link ownership");
      for (const auto* adj : {&n.out, &n.in})
        for (const auto& [v, m] : *adj) {
          if (!n.members.count(v) || m.empty()) fail("stale adjacency");
          for (const auto& [l, other] : m)
            if (!n.links.count(l) || !n.members.count(other)) fail("dangling adjacency");
        }
    }
    for (const auto& [id, l] : links_) {
      if (!networks_.count(l.owner)) fail("link owner missing");
      const Network& n = networks_.at(l.owner);
      if (!n.members.count(l.src) || !n.members.count(l.dst)) fail("link endpoint not a member");
      if (!n.links.count(id)) fail("link not listed by owner");
    }
  }

  /// Canonical dump, one element per line, ids ascending:
  ///   node <id> k=v...
  ///   link <id> <src> <dst> <d|u> <net> k=v...
  ///   net <id> members=<ids> k=v...
  std::string to_text() const {
    std::string out;
    for (const auto& [id, v] : nodes_) out += "node " + std::to_string(id.value) + bag_text(v.state) + "\n";
    for (const auto& [id, l] : links_)
      out += "link " + std::to_string(id.value) + " " + std::to_string(l.src.value) + " " +
             std::to_string(l.dst.value) + (l.directed ? " d " : " u ") + std::to_string(l.owner.value) +
             bag_text(l.state) + "\n";
    for (const auto& [id, n] : networks_) {
      out += "net " + std::to_string(id.value) + " members=";
      bool first = true;
      for (NodeId v : n.members) {
        out += (first ? "" : ",") + std::to_string(v.value);
        first = false;
      }
      out += bag_text(n.state) + "\n";
    }
    return out;
  }

  /// Rebuilds a set from to_text() output. Ids are preserved; fresh ids
  /// continue after the largest id seen.
  static NetworkSet from_text(std::string_view text, bool allow_self_loops = false) {
    NetworkSet s(allow_self_loops);
    struct PendingLink {
      Link link;
    };
    std::vector<Link> pending;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() : nl + 1;
      ++line_no;
      if (line.empty()) continue;
      auto fail = [&](const std::string& m) -> NetworkError {
        return NetworkError("network text line " + std::to_string(line_no) + ": " + m);
      };
      auto fields = split_fields(line);
      auto num = [&](std::size_t i) {
        auto v = i < fields.size() ? parse_integer<std::uint64_t>(fields[i]) : std::nullopt;
        if (!v) throw fail("expected an id");
        return *v;
      };
      auto bag_from = [&](std::size_t first) {
        StateBag bag;
        for (std::size_t i = first; i < fields.size(); ++i) {
          auto eq = fields[i].find('=');
          if (eq == std::string::npos || !is_identifier(fields[i].substr(0, eq))) throw fail("expected key=value");
          auto v = parse_canonical_value(fields[i].substr(eq + 1));
          if (!v) throw fail("bad value");
          bag[fields[i].substr(0, eq)] = std::move(*v);
        }
        return bag;
      };
      if (fields[0] == "node") {
        NodeId id{num(1)};
        s.nodes_[id] = Node{id, bag_from(2), {}};
        s.next_node_ = std::max(s.next_node_, id.value + 1);
      } else if (fields[0] == "link") {
        if (fields.size() < 6 || (fields[4] != "d" && fields[4] != "u")) throw fail("malformed link");
        pending.push_back(Link{LinkId{num(1)}, NodeId{num(2)}, NodeId{num(3)}, fields[4] == "d", bag_from(6),
                               NetId{num(5)}});
      } else if (fields[0] == "net") {
        NetId id{num(1)};
        if (fields.size() < 3 || fields[2].substr(0, 8) != "members=") throw fail("expected members=");
        Network n{id, {}, {}, bag_from(3), {}, {}};
        std::string_view ids = std::string_view(fields[2]).substr(8);
        while (!ids.empty()) {
          auto comma = ids.find(',');
          auto v = parse_integer<std::uint64_t>(ids.substr(0, comma));
          if (!v) throw fail("bad member id");
          n.members.insert(NodeId{*v});
          ids = comma == std::string_view::npos ? std::string_view{} : ids.substr(comma + 1);
        }
        s.networks_[id] = std::move(n);
        s.next_net_ = std::max(s.next_net_, id.value + 1);
      } else {
        throw fail("unknown element '" + fields[0] + "'");
      }
    }
    for (auto& [nid, n] : s.networks_)
      for (NodeId v : n.members) {
        auto it = s.nodes_.find(v);
        if (it == s.nodes_.end()) throw NetworkError("network text: member " + std::to_string(v.value) + " undefined");
        it->second.membership.insert(nid);
      }
    for (auto& l : pending) {
      if (!s.networks_.count(l.owner)) throw NetworkError("network text: link owner undefined");
      const std::uint64_t next = s.next_link_;
      s.next_link_ = l.id.value;
      LinkId got = s.add_link(l.owner, l.src, l.dst, l.directed, l.state);
      s.next_link_ = std::max(next, got.value + 1);
    }
    s.check_integrity();
    return s;
  }

  bool operator==(const NetworkSet&) const = default;

 private:
  static void set(StateBag& bag, std::string_view key, Value v) {
    if (!is_identifier(key)) throw NetworkError("invalid attribute name '" + std::string(key) + "'");
    bag.insert_or_assign(std::string(key), std::move(v));
  }
  static const Value* get(const StateBag& bag, std::string_view key) {
    auto it = bag.find(key);
    return it == bag.end() ? nullptr : &it->second;
  }

  static std::string bag_text(const StateBag& bag) {
    std::string out;
    for (const auto& [k, v] : bag) out += " " + k + "=" + canonical_text(v);
    return out;
  }

  /// Splits on spaces, keeping quoted strings (which may contain spaces) whole.
  static std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if (quoted && c == '\\' && i + 1 < line.size()) {
        cur += c;
        cur += line[++i];
        continue;
      }
      if (c == '"') quoted = !quoted;
      if (c == ' ' && !quoted) {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    if (out.empty()) out.emplace_back();
    return out;
  }

  static std::vector<NodeId> collect(const std::map<NodeId, std::map<LinkId, NodeId>>& adj, NodeId node) {
    std::vector<NodeId> out;
    auto it = adj.find(node);
    if (it == adj.end()) return out;
    for (const auto& [l, other] : it->second) out.push_back(other);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  const Network& member_net(NetId net_id, NodeId node_id) const {
    const Network& n = net(net_id);
    node(node_id);
    if (!n.members.count(node_id))
      throw NetworkError("node " + std::to_string(node_id.value) + " is not a member of network " +
                         std::to_string(net_id.value));
    return n;
  }

  Node& node_mut(NodeId id) { return const_cast<Node&>(node(id)); }
  Link& link_mut(LinkId id) { return const_cast<Link&>(link(id)); }
  Network& net_mut(NetId id) { return const_cast<Network&>(net(id)); }

  bool allow_self_loops_ = false;
  std::uint64_t next_node_ = 1;
  std::uint64_t next_link_ = 1;
  std::uint64_t next_net_ = 1;
  std::map<NodeId, Node> nodes_;
  std::map<LinkId, Link> links_;
  std::map<NetId, Network> networks_;
};

}  // namespace sweepforge::net
