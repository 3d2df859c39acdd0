#ifndef IAGCN_GRAPH_HPP
#define IAGCN_GRAPH_HPP

#include "iagcn/data.hpp"
#include "iagcn/rng.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace iagcn {

enum class Side : std::uint8_t { user, item };

constexpr Side opposite(Side s) { return s == Side::user ? Side::item : Side::user; }

struct NodeRef {
  Side side;
  NodeId index;
  friend bool operator==(const NodeRef&, const NodeRef&) = default;
};

constexpr NodeRef user_node(NodeId u) { return {Side::user, u}; }
constexpr NodeRef item_node(NodeId i) { return {Side::item, i}; }

/// Undirected user-item graph in compressed offset+values form, both directions.
class BipartiteGraph {
public:
  BipartiteGraph() = default;

  static BipartiteGraph build(const InteractionDataset& data);

  NodeId num_users() const { return num_users_; }
  NodeId num_items() const { return num_items_; }
  NodeId num_nodes(Side side) const { return side == Side::user ? num_users_ : num_items_; }
  std::size_t num_edges() const { return user_values_.size(); }

  /// Sorted ascending, no duplicates.
  std::span<const NodeId> neighbors(NodeRef node) const {
    const auto& off = node.side == Side::user ? user_offsets_ : item_offsets_;
    const auto& val = node.side == Side::user ? user_values_ : item_values_;
    return {val.data() + off[node.index], val.data() + off[node.index + 1]};
  }
  std::size_t degree(NodeRef node) const {
    const auto& off = node.side == Side::user ? user_offsets_ : item_offsets_;
    return off[node.index + 1] - off[node.index];
  }
  bool has_edge(NodeId user, NodeId item) const;
  /// 1/sqrt(degree), 0 for isolated nodes.
  double inv_sqrt_degree(NodeRef node) const {
    return node.side == Side::user ? user_isd_[node.index] : item_isd_[node.index];
  }

  /// Largest degree on either side.
  std::size_t max_degree() const { return max_degree_; }

private:
  NodeId num_users_ = 0;
  NodeId num_items_ = 0;
  std::vector<std::size_t> user_offsets_{0};
  std::vector<NodeId> user_values_;
  std::vector<std::size_t> item_offsets_{0};
  std::vector<NodeId> item_values_;
  std::size_t max_degree_ = 0;
  std::vector<double> user_isd_;
  std::vector<double> item_isd_;
};

/// One depth of a propagation tree. Slot `s` holds graph node `nodes[s]`; its
/// children are `children[child_offsets[s] .. child_offsets[s+1])`, given as
/// slot indices into the next level. The deepest level has no child lists.
struct TreeLevel {
  Side side = Side::user;
  std::vector<NodeId> nodes;
  std::vector<std::uint32_t> child_offsets{0};
  std::vector<std::uint32_t> children;

  std::size_t size() const { return nodes.size(); }
  std::span<const std::uint32_t> children_of(std::size_t slot) const {
    return {children.data() + child_offsets[slot], children.data() + child_offsets[slot + 1]};
  }
};

/// K-level propagation structure rooted at one node.
///
/// In a plain tree every slot has one parent, and a graph node may occupy
/// several slots. A merged tree (full expansion only) keeps one slot per
/// (depth, node): subtrees below equal nodes at equal depth are identical
/// under full expansion, so sharing them changes no value.
struct SampledTree {
  NodeRef root{Side::user, 0};
  int depth = 0;
  bool merged = false;
  /// Root had no neighbours although depth >= 1; deeper levels are empty.
  bool degenerate = false;
  std::vector<TreeLevel> levels;
};

/// Fanout value meaning "all neighbours".
constexpr std::size_t kFullFanout = 0;

/// Plain tree. Children are the full sorted neighbour list when it fits in
/// `fanout`, otherwise a uniform sample without replacement (kept sorted).
/// `exclude` removes one node from every child list.
SampledTree sample_tree(const BipartiteGraph& graph, NodeRef root, int depth, std::size_t fanout,
                        Rng& rng, std::optional<NodeRef> exclude = std::nullopt);

/// Reusable per-thread marks for expand_merged.
class ExpansionScratch {
public:
  explicit ExpansionScratch(const BipartiteGraph& graph);
  std::vector<std::int32_t>& slots(Side side) { return side == Side::user ? user_slot_ : item_slot_; }

private:
  std::vector<std::int32_t> user_slot_;
  std::vector<std::int32_t> item_slot_;
};

/// Full expansion with one slot per (depth, node).
SampledTree expand_merged(const BipartiteGraph& graph, NodeRef root, int depth,
                          ExpansionScratch& scratch, std::optional<NodeRef> exclude = std::nullopt);
SampledTree expand_merged(const BipartiteGraph& graph, NodeRef root, int depth,
                          std::optional<NodeRef> exclude = std::nullopt);

} // namespace iagcn

#endif // IAGCN_GRAPH_HPP
