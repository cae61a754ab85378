#include "hgs/graph.hpp"

#include <algorithm>
#include <functional>
#include <queue>

#include "json.hpp"

namespace hgs::graph {

namespace {

// Index-based adjacency view shared by both graph types.
struct Adj {
  std::vector<std::string> ids;           // sorted
  std::map<std::string, int> index;
  std::vector<std::vector<int>> succ;

  int at(const std::string& id) const {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("unknown node id: " + id);
    return it->second;
  }
};

template <typename G>
Adj make_adj(const G& g) {
  Adj a;
  a.ids = g.node_ids();
  for (size_t i = 0; i < a.ids.size(); ++i) a.index[a.ids[i]] = static_cast<int>(i);
  a.succ.resize(a.ids.size());
  for (const auto& [u, v] : g.edges) a.succ[a.at(u)].push_back(a.at(v));
  for (auto& s : a.succ) std::sort(s.begin(), s.end());
  return a;
}

// Paths of length >= 1: seed the BFS with the successors of `from`.
bool reachable_idx(const Adj& a, int from, int to) {
  std::vector<char> seen(a.ids.size(), 0);
  std::queue<int> q;
  for (int w : a.succ[from]) {
    if (w == to) return true;
    if (!seen[w]) {
      seen[w] = 1;
      q.push(w);
    }
  }
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int w : a.succ[u]) {
      if (w == to) return true;
      if (!seen[w]) {
        seen[w] = 1;
        q.push(w);
      }
    }
  }
  return false;
}

std::vector<std::vector<int>> tarjan_sccs(const Adj& a) {
  int n = static_cast<int>(a.ids.size());
  std::vector<int> num(n, -1), low(n, 0);
  std::vector<char> on_stack(n, 0);
  std::vector<int> stack;
  std::vector<std::vector<int>> comps;
  int counter = 0;

  std::function<void(int)> dfs = [&](int v) {
    num[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = 1;
    for (int w : a.succ[v]) {
      if (num[w] < 0) {
        dfs(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], num[w]);
      }
    }
    if (low[v] == num[v]) {
      comps.emplace_back();
      int w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = 0;
        comps.back().push_back(w);
      } while (w != v);
    }
  };
  for (int v = 0; v < n; ++v)
    if (num[v] < 0) dfs(v);
  return comps;
}

template <typename G>
bool is_rdag_impl(const G& g) {
  Adj a = make_adj(g);
  for (const auto& comp : tarjan_sccs(a))
    if (comp.size() > 1) return false;
  return true;
}

void add_state_parents(MechGraph& g, const std::string& node,
                       const std::vector<std::string>& parents) {
  for (const auto& p : parents) g.edges.insert({p, node});
}

}  // namespace

// ---- MechGraph ----------------------------------------------------------------

bool MechGraph::has_node(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return true;
  return false;
}

NodeKind MechGraph::kind_of(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n.kind;
  throw ValidationError("unknown node id: " + id);
}

std::vector<std::string> MechGraph::node_ids() const {
  std::vector<std::string> ids;
  ids.reserve(nodes.size());
  for (const auto& n : nodes) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void MechGraph::validate() const {
  std::set<std::string> seen;
  for (const auto& n : nodes)
    if (!seen.insert(n.id).second) throw ValidationError("duplicate node id: " + n.id);
  for (const auto& [u, v] : edges) {
    if (!seen.count(u) || !seen.count(v))
      throw ValidationError("edge endpoint not declared: " + u + "->" + v);
    if (kind_of(v) == NodeKind::Input)
      throw ValidationError("edge into input node: " + u + "->" + v);
  }
}

// ---- SuperGraph ----------------------------------------------------------------

bool SuperGraph::has_node(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return true;
  return false;
}

const SuperGraph::Node& SuperGraph::node(const std::string& id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n;
  throw ValidationError("unknown node id: " + id);
}

std::vector<std::string> SuperGraph::node_ids() const {
  std::vector<std::string> ids;
  ids.reserve(nodes.size());
  for (const auto& n : nodes) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> SuperGraph::ids_of(NodeKind k) const {
  std::vector<std::string> ids;
  for (const auto& n : nodes)
    if (n.kind == k) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void SuperGraph::validate() const {
  std::set<std::string> seen;
  for (const auto& n : nodes) {
    if (!seen.insert(n.id).second) throw ValidationError("duplicate node id: " + n.id);
    if (n.dim < 1) throw ValidationError("node dim must be >= 1: " + n.id);
  }
  for (const auto& [u, v] : edges) {
    if (!seen.count(u) || !seen.count(v))
      throw ValidationError("edge endpoint not declared: " + u + "->" + v);
    if (node(v).kind == NodeKind::Input)
      throw ValidationError("edge into input node: " + u + "->" + v);
  }
}

// ---- step 1 ----------------------------------------------------------------------

std::vector<NodeSet> mscc_partition(const MechGraph& g) {
  g.validate();
  Adj a = make_adj(g);
  std::vector<NodeSet> comps;
  for (const auto& c : tarjan_sccs(a)) {
    NodeSet s;
    for (int v : c) s.insert(a.ids[v]);
    comps.push_back(std::move(s));
  }
  std::sort(comps.begin(), comps.end(),
            [](const NodeSet& l, const NodeSet& r) { return *l.begin() < *r.begin(); });
  return comps;
}

SuperGraph condense(const MechGraph& g, const CondenseOptions& opt) {
  auto comps = mscc_partition(g);

  // Resolve exclusions: any member id names its component.
  std::set<std::string> keep;
  for (const auto& id : opt.keep_msccs) {
    bool found = false;
    for (const auto& c : comps)
      if (c.count(id)) {
        keep.insert(*c.begin());
        found = true;
      }
    if (!found) throw ValidationError("keep-mscc id not in graph: " + id);
  }

  std::vector<NodeSet> units;
  std::set<std::string> split_units;  // smallest-member ids of exploded components
  for (const auto& c : comps) {
    if (keep.count(*c.begin()) && c.size() > 1) {
      for (const auto& id : c) {
        units.push_back({id});
        split_units.insert(id);
      }
    } else {
      units.push_back(c);
    }
  }

  SuperGraph sg;
  std::map<std::string, std::string> super_of;
  std::map<std::string, size_t> member_count;
  for (const auto& u : units) {
    SuperGraph::Node n;
    n.id = "sc_" + *u.begin();
    n.members = u;
    int n_obs = 0, n_input = 0;
    for (const auto& m : u) {
      NodeKind k = g.kind_of(m);
      n_obs += k == NodeKind::Observable;
      n_input += k == NodeKind::Input;
    }
    if (n_obs > 0) {
      n.kind = NodeKind::Observable;
      n.dim = n_obs;
    } else if (n_input > 0) {
      n.kind = NodeKind::Input;
      n.dim = static_cast<int>(u.size());
    } else {
      n.kind = NodeKind::Latent;
      n.dim = 1;
    }
    for (const auto& m : u) super_of[m] = n.id;
    member_count[n.id] = u.size();
    sg.nodes.push_back(std::move(n));
  }

  for (const auto& [u, v] : g.edges) {
    Edge e{super_of.at(u), super_of.at(v)};
    bool intra_multi = e.first == e.second && member_count.at(e.first) > 1;
    auto [it, inserted] = sg.provenance.emplace(
        e, intra_multi ? Provenance::CollapsedCycle : Provenance::Original);
    if (!inserted && intra_multi) it->second = Provenance::CollapsedCycle;
    sg.edges.insert(e);
  }

  if (!is_rdag(sg) && !opt.force)
    throw ValidationError(
        "condense: excluded MSCC leaves a non-self-loop cycle; pass force to accept a "
        "non-RDAG result");
  return sg;
}

// ---- step 2 ----------------------------------------------------------------------

NodeSet disconnecting_set(const SuperGraph& sg, const std::string& x, const std::string& s) {
  if (!sg.has_node(x) || !sg.has_node(s))
    throw ValidationError("disconnecting_set: unknown node " + (sg.has_node(x) ? s : x));
  if (sg.node(x).kind != NodeKind::Input || sg.node(s).kind != NodeKind::Observable || x == s)
    throw ValidationError("disconnecting_set: expects distinct (input, observable) pair");

  Adj a = make_adj(sg);
  int xi = a.at(x), si = a.at(s);
  NodeSet d;
  if (!reachable_idx(a, xi, si)) return d;

  for (size_t v = 0; v < a.ids.size(); ++v) {
    if (static_cast<int>(v) == xi || static_cast<int>(v) == si) continue;
    // Remove v by filtering its incident edges out of the BFS.
    Adj b = a;
    b.succ[v].clear();
    for (auto& lst : b.succ)
      lst.erase(std::remove(lst.begin(), lst.end(), static_cast<int>(v)), lst.end());
    if (!reachable_idx(b, xi, si)) d.insert(a.ids[v]);
  }
  return d;
}

EdgeSet pathway_closure_edges(const SuperGraph& sg, const std::string& x, const std::string& s) {
  NodeSet verts = disconnecting_set(sg, x, s);
  verts.insert(x);
  verts.insert(s);

  Adj a = make_adj(sg);
  EdgeSet out;
  for (const auto& u : verts)
    for (const auto& v : verts)
      if (reachable_idx(a, a.at(u), a.at(v))) out.insert({u, v});

  out.erase({x, x});
  if (!sg.edges.count({x, s})) out.erase({x, s});
  return out;
}

SuperGraph augment(const SuperGraph& sg, const AugmentOptions& opt) {
  sg.validate();
  if (!is_rdag(sg)) throw ValidationError("augment: input graph is not an RDAG");

  SuperGraph out = sg;
  for (const auto& x : sg.ids_of(NodeKind::Input)) {
    for (const auto& s : sg.ids_of(NodeKind::Observable)) {
      if (opt.skip_pairs.count({x, s})) continue;
      for (const auto& e : pathway_closure_edges(sg, x, s)) {
        if (out.edges.insert(e).second) out.provenance[e] = Provenance::Shortcut;
      }
    }
  }
  if (!is_rdag(out))
    throw Error("augment: internal error, shortcut edges broke the RDAG property");
  return out;
}

// ---- built-in graphs ---------------------------------------------------------------

MechGraph build_uva_graph(const UvaGraphOptions& opt) {
  MechGraph g;
  const std::vector<std::string> states = {
      "Gp", "Gt", "Ip", "Il", "Qsto1", "Qsto2", "Qgut", "XL", "Ir",  "XH",
      "X",  "E",  "Isc1", "Isc2", "Gs", "H", "SRsH", "SRdH", "Hsc1", "Hsc2"};
  for (const auto& s : states)
    g.nodes.push_back({s, s == "Gs" ? NodeKind::Observable : NodeKind::Latent});
  for (const auto& x : {"delta", "IIR", "Hinf"}) g.nodes.push_back({x, NodeKind::Input});

  // Parents read off the S2013 equations with EGP, Ra, Rai, Uid, Uii, RaH,
  // kempt, risk, SRH, G and I inlined. dot-G inside SRdH expands to Gp's RHS.
  add_state_parents(g, "Gp", {"Gp", "Gt", "XL", "XH", "Qgut", "E"});
  add_state_parents(g, "Gt", {"Gp", "Gt", "X"});
  add_state_parents(g, "Ip", {"Ip", "Il", "Isc1", "Isc2"});
  add_state_parents(g, "Il", {"Il", "Ip"});
  add_state_parents(g, "Qsto1", {"Qsto1", "delta"});
  add_state_parents(g, "Qsto2", {"Qsto1", "Qsto2"});
  add_state_parents(g, "Qgut", {"Qgut", "Qsto1", "Qsto2"});
  add_state_parents(g, "XL", {"XL", "Ir"});
  add_state_parents(g, "Ir", {"Ir", "Ip"});
  add_state_parents(g, "XH", {"XH", "H"});
  add_state_parents(g, "X", {"X", "Ip"});
  add_state_parents(g, "E", {"Gp"});
  add_state_parents(g, "Isc1", {"Isc1", "IIR"});
  add_state_parents(g, "Isc2", {"Isc1", "Isc2"});
  add_state_parents(g, "Gs", {"Gs", "Gp"});
  add_state_parents(g, "H", {"H", "SRsH", "SRdH", "Hsc2"});
  add_state_parents(g, "SRsH", {"SRsH", "Gp", "Ip"});
  add_state_parents(g, "SRdH", {"Gp", "Gt", "XL", "XH", "Qgut", "E"});
  add_state_parents(g, "Hsc1", {"Hsc1", "Hinf"});
  add_state_parents(g, "Hsc2", {"Hsc1", "Hsc2"});

  if (opt.exercise_inputs) {
    for (const auto& x : {"hr", "steps"}) {
      g.nodes.push_back({x, NodeKind::Input});
      for (const auto& s : states) g.edges.insert({x, s});
    }
  }
  g.validate();
  return g;
}

MechGraph build_synthetic_graph(SynthGraphKind kind, SparsityRegime) {
  // True system: x1 -> s1 with a self-loop. Redundant part per the stated
  // counts; the "latent cycles" are self-loops (self-loops count as directed
  // cycles under the RDAG definition), wired as a latent chain feeding s1.
  MechGraph g;
  g.nodes.push_back({"s1", NodeKind::Observable});
  g.nodes.push_back({"l1", NodeKind::Latent});
  for (const auto& x : {"x1", "x2", "x3", "x4"}) g.nodes.push_back({x, NodeKind::Input});
  g.edges = {{"x1", "s1"}, {"s1", "s1"}, {"x2", "s1"}, {"x3", "l1"},
             {"x4", "l1"}, {"l1", "s1"}, {"l1", "l1"}};
  if (kind == SynthGraphKind::Comprehensive) {
    g.nodes.push_back({"l2", NodeKind::Latent});
    g.nodes.push_back({"l3", NodeKind::Latent});
    for (const auto& x : {"x5", "x6", "x7"}) g.nodes.push_back({x, NodeKind::Input});
    for (const auto& e : std::initializer_list<Edge>{{"l2", "l2"}, {"l3", "l3"},
                                                     {"l2", "l1"}, {"l3", "l2"},
                                                     {"x5", "l2"}, {"x6", "l3"},
                                                     {"x7", "l3"}})
      g.edges.insert(e);
  }
  g.validate();
  return g;
}

// ---- predicates ----------------------------------------------------------------------

bool reachable(const SuperGraph& sg, const std::string& u, const std::string& v) {
  Adj a = make_adj(sg);
  return reachable_idx(a, a.at(u), a.at(v));
}

bool reachable(const MechGraph& g, const std::string& u, const std::string& v) {
  Adj a = make_adj(g);
  return reachable_idx(a, a.at(u), a.at(v));
}

bool is_rdag(const SuperGraph& sg) { return is_rdag_impl(sg); }
bool is_rdag(const MechGraph& g) { return is_rdag_impl(g); }

SuperGraph lift(const MechGraph& g) {
  g.validate();
  SuperGraph sg;
  for (const auto& n : g.nodes) sg.nodes.push_back({n.id, n.kind, {n.id}, 1});
  sg.edges = g.edges;
  for (const auto& e : g.edges) sg.provenance[e] = Provenance::Original;
  return sg;
}

SuperGraph with_edges(const SuperGraph& sg, const EdgeSet& edges) {
  SuperGraph out = sg;
  out.edges.clear();
  out.provenance.clear();
  for (const auto& e : edges) {
    if (!sg.edges.count(e))
      throw ValidationError("with_edges: edge not in graph: " + e.first + "->" + e.second);
    out.edges.insert(e);
    out.provenance[e] = sg.provenance.count(e) ? sg.provenance.at(e) : Provenance::Original;
  }
  return out;
}

// ---- serialization ---------------------------------------------------------------------

std::string kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Observable: return "observable";
    case NodeKind::Latent: return "latent";
    case NodeKind::Input: return "input";
  }
  return "?";
}

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::Original: return "original";
    case Provenance::CollapsedCycle: return "collapsed-cycle";
    case Provenance::Shortcut: return "shortcut";
  }
  return "?";
}

namespace {

NodeKind kind_from_name(const std::string& s) {
  if (s == "observable") return NodeKind::Observable;
  if (s == "latent") return NodeKind::Latent;
  if (s == "input") return NodeKind::Input;
  throw ValidationError("unknown node kind: " + s);
}

Provenance provenance_from_name(const std::string& s) {
  if (s == "original") return Provenance::Original;
  if (s == "collapsed-cycle") return Provenance::CollapsedCycle;
  if (s == "shortcut") return Provenance::Shortcut;
  throw ValidationError("unknown provenance: " + s);
}

nlohmann::json graph_json(const std::vector<std::string>& ids,
                          const std::function<nlohmann::json(const std::string&)>& node_of,
                          const EdgeSet& edges,
                          const std::map<Edge, Provenance>& prov) {
  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  for (const auto& id : ids) j["nodes"].push_back(node_of(id));
  j["edges"] = nlohmann::json::array();
  for (const auto& [u, v] : edges) j["edges"].push_back({u, v});
  j["provenance"] = nlohmann::json::object();
  for (const auto& [e, p] : prov) j["provenance"][e.first + "->" + e.second] = provenance_name(p);
  return j;
}

}  // namespace

std::string to_json(const SuperGraph& sg) {
  auto ids = sg.node_ids();
  auto j = graph_json(
      ids,
      [&](const std::string& id) {
        const auto& n = sg.node(id);
        return nlohmann::json{{"id", n.id}, {"kind", kind_name(n.kind)}, {"dim", n.dim}};
      },
      sg.edges, sg.provenance);
  return j.dump();
}

std::string to_json(const MechGraph& g) {
  auto ids = g.node_ids();
  std::map<Edge, Provenance> prov;
  auto j = graph_json(
      ids,
      [&](const std::string& id) {
        return nlohmann::json{{"id", id}, {"kind", kind_name(g.kind_of(id))}, {"dim", 1}};
      },
      g.edges, prov);
  return j.dump();
}

SuperGraph super_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  SuperGraph sg;
  for (const auto& n : j.at("nodes")) {
    SuperGraph::Node node;
    node.id = n.at("id").get<std::string>();
    node.kind = kind_from_name(n.at("kind").get<std::string>());
    node.dim = n.value("dim", 1);
    node.members = {node.id};  // member info is not part of the wire format
    sg.nodes.push_back(std::move(node));
  }
  for (const auto& e : j.at("edges"))
    sg.edges.insert({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
  if (j.contains("provenance")) {
    for (auto it = j["provenance"].begin(); it != j["provenance"].end(); ++it) {
      const std::string key = it.key();
      auto pos = key.find("->");
      if (pos == std::string::npos) throw ValidationError("bad provenance key: " + key);
      sg.provenance[{key.substr(0, pos), key.substr(pos + 2)}] =
          provenance_from_name(it.value().get<std::string>());
    }
  }
  sg.validate();
  return sg;
}

MechGraph mech_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MechGraph g;
  for (const auto& n : j.at("nodes")) {
    NodeKind k = kind_from_name(n.at("kind").get<std::string>());
    g.nodes.push_back({n.at("id").get<std::string>(), k});
  }
  for (const auto& e : j.at("edges"))
    g.edges.insert({e.at(0).get<std::string>(), e.at(1).get<std::string>()});
  g.validate();
  return g;
}

}  // namespace hgs::graph
