#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hgs/core.hpp"

namespace hgs::graph {

enum class NodeKind { Observable, Latent, Input };

using Edge = std::pair<std::string, std::string>;
using EdgeSet = std::set<Edge>;
using NodeSet = std::set<std::string>;

enum class Provenance { Original, CollapsedCycle, Shortcut };

/// Directed dependency graph of a mechanistic ODE system.
/// Nodes are state variables (observable or latent) and exogenous inputs;
/// an edge (u,v) means u's value appears in v's derivative. Self-loops on
/// state nodes are allowed; inputs never have incoming edges.
struct MechGraph {
  struct Node {
    std::string id;
    NodeKind kind;
  };
  std::vector<Node> nodes;
  EdgeSet edges;

  bool has_node(const std::string& id) const;
  NodeKind kind_of(const std::string& id) const;
  std::vector<std::string> node_ids() const;  // sorted
  /// Throws ValidationError on duplicate ids, dangling edges, or edges into inputs.
  void validate() const;
};

/// Condensed (and possibly shortcut-augmented) graph of super-nodes.
/// Every non-self-loop cycle of the source graph lives inside one super-node,
/// so after condense() the graph is an RDAG unless the caller forced
/// exclusions through. `members` records the originating node ids.
struct SuperGraph {
  struct Node {
    std::string id;
    NodeKind kind;
    NodeSet members;
    int dim = 1;
  };
  std::vector<Node> nodes;
  EdgeSet edges;
  std::map<Edge, Provenance> provenance;

  bool has_node(const std::string& id) const;
  const Node& node(const std::string& id) const;
  std::vector<std::string> node_ids() const;  // sorted
  std::vector<std::string> ids_of(NodeKind k) const;  // sorted
  void validate() const;
};

// -- HGS step 1: condensation -------------------------------------------------

/// Partition into maximal strongly connected components (Tarjan).
/// Singleton sets for nodes on no non-self cycle; components returned
/// sorted by their smallest member id.
std::vector<NodeSet> mscc_partition(const MechGraph& g);

struct CondenseOptions {
  /// MSCCs to leave uncollapsed, named by any member id; the excluded
  /// component maps one member per super-node.
  std::vector<std::string> keep_msccs;
  /// Acknowledge that exclusions may leave non-self-loop cycles; without it,
  /// such an exclusion is an error.
  bool force = false;
};

/// Collapse every MSCC (minus exclusions) into a super-node. Super-node id =
/// "sc_" + lexicographically smallest member. Intra-component edges of
/// multi-member components become collapsed-cycle self-loops.
SuperGraph condense(const MechGraph& g, const CondenseOptions& opt = {});

// -- HGS step 2: shortcut augmentation ---------------------------------------

/// D_{x,s}: nodes (other than x,s) whose individual removal disconnects
/// s from x. Empty when s is not reachable from x.
NodeSet disconnecting_set(const SuperGraph& sg, const std::string& x, const std::string& s);

/// Partial transitive closure over {x,s} + D_{x,s}: pairs (u,v) with v
/// reachable from u in the full graph (paths of length >= 1), minus (x,x),
/// minus (x,s) when (x,s) is not an existing edge.
EdgeSet pathway_closure_edges(const SuperGraph& sg, const std::string& x, const std::string& s);

struct AugmentOptions {
  /// (input id, observable id) pairs whose shortcut set is omitted.
  std::set<Edge> skip_pairs;
};

/// Union of pathway closures over all (input, observable) pairs. New edges
/// get Shortcut provenance. Output remains an RDAG whenever the input is.
SuperGraph augment(const SuperGraph& sg, const AugmentOptions& opt = {});

// -- built-in graphs ----------------------------------------------------------

struct UvaGraphOptions {
  /// Append heart-rate and step-count input nodes wired to every state node.
  bool exercise_inputs = false;
};

/// Dependency graph of the UVA-Padova S2013 equations (20 state nodes, Gs
/// observable, inputs delta/IIR/Hinf; algebraic intermediates inlined).
MechGraph build_uva_graph(const UvaGraphOptions& opt = {});

enum class SynthGraphKind { Refined, Comprehensive };
enum class SparsityRegime { TrueSparsity, QuasiSparsity };

/// Starting graphs of the synthetic experiments: the true system x1->s1,
/// s1 self-loop, plus redundant inputs/latents/cycles. Wiring is identical
/// across regimes; the regime only matters to the data generator.
MechGraph build_synthetic_graph(SynthGraphKind kind,
                                SparsityRegime regime = SparsityRegime::TrueSparsity);

// -- plumbing predicates -------------------------------------------------------

/// Reachability via directed paths of length >= 1 (so reachable(u,u) holds
/// exactly when u lies on a cycle or self-loop).
bool reachable(const SuperGraph& sg, const std::string& u, const std::string& v);
bool reachable(const MechGraph& g, const std::string& u, const std::string& v);

/// No directed cycles except self-loops.
bool is_rdag(const SuperGraph& sg);
bool is_rdag(const MechGraph& g);

/// Lift a mechanistic graph to a SuperGraph with singleton members and
/// unchanged ids/edges (used by reduction baselines that skip condensation;
/// the result is generally not an RDAG).
SuperGraph lift(const MechGraph& g);

/// Subgraph with the same node set and a restricted edge set.
SuperGraph with_edges(const SuperGraph& sg, const EdgeSet& edges);

// -- serialization -------------------------------------------------------------

/// Canonical graph JSON: sorted node ids, lexicographically sorted edges,
/// byte-stable for golden-file tests.
std::string to_json(const SuperGraph& sg);
std::string to_json(const MechGraph& g);
SuperGraph super_from_json(const std::string& text);
MechGraph mech_from_json(const std::string& text);

std::string kind_name(NodeKind k);
std::string provenance_name(Provenance p);

}  // namespace hgs::graph
