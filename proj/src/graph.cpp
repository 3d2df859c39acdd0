#include "iagcn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iagcn {

namespace {

void fill_csr(std::size_t rows, const std::vector<Edge>& edges, bool by_user,
              std::vector<std::size_t>& offsets, std::vector<NodeId>& values) {
  offsets.assign(rows + 1, 0);
  for (const Edge& e : edges) {
    ++offsets[(by_user ? e.user : e.item) + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) {
    offsets[r + 1] += offsets[r];
  }
  values.resize(edges.size());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const Edge& e : edges) {
    values[cursor[by_user ? e.user : e.item]++] = by_user ? e.item : e.user;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    std::sort(values.begin() + offsets[r], values.begin() + offsets[r + 1]);
  }
}

} // namespace

BipartiteGraph BipartiteGraph::build(const InteractionDataset& data) {
  data.validate();
  BipartiteGraph g;
  g.num_users_ = data.num_users;
  g.num_items_ = data.num_items;
  fill_csr(data.num_users, data.train_edges, true, g.user_offsets_, g.user_values_);
  fill_csr(data.num_items, data.train_edges, false, g.item_offsets_, g.item_values_);
  for (NodeId u = 0; u < g.num_users_; ++u) {
    g.max_degree_ = std::max(g.max_degree_, g.degree(user_node(u)));
  }
  for (NodeId i = 0; i < g.num_items_; ++i) {
    g.max_degree_ = std::max(g.max_degree_, g.degree(item_node(i)));
  }
  auto isd = [&](Side side, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(g.num_nodes(side)));
    for (NodeId n = 0; n < g.num_nodes(side); ++n) {
      const auto d = g.degree({side, n});
      out[n] = d == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(d));
    }
  };
  isd(Side::user, g.user_isd_);
  isd(Side::item, g.item_isd_);
  return g;
}

bool BipartiteGraph::has_edge(NodeId user, NodeId item) const {
  const auto adj = neighbors(user_node(user));
  return std::binary_search(adj.begin(), adj.end(), item);
}

namespace {

void check_root(const BipartiteGraph& graph, NodeRef root, int depth) {
  if (depth < 0) {
    throw std::invalid_argument("tree depth must be non-negative");
  }
  if (root.index < 0 || root.index >= graph.num_nodes(root.side)) {
    throw std::out_of_range("tree root out of range");
  }
}

bool excluded(const std::optional<NodeRef>& exclude, Side side, NodeId node) {
  return exclude && exclude->side == side && exclude->index == node;
}

} // namespace

SampledTree sample_tree(const BipartiteGraph& graph, NodeRef root, int depth, std::size_t fanout,
                        Rng& rng, std::optional<NodeRef> exclude) {
  check_root(graph, root, depth);
  SampledTree tree;
  tree.root = root;
  tree.depth = depth;
  tree.levels.resize(depth + 1);
  tree.levels[0].side = root.side;
  tree.levels[0].nodes.push_back(root.index);

  std::vector<NodeId> pool;
  for (int k = 0; k < depth; ++k) {
    TreeLevel& parent = tree.levels[k];
    TreeLevel& child = tree.levels[k + 1];
    child.side = opposite(parent.side);
    for (std::size_t s = 0; s < parent.size(); ++s) {
      pool.clear();
      for (NodeId c : graph.neighbors({parent.side, parent.nodes[s]})) {
        if (!excluded(exclude, child.side, c)) {
          pool.push_back(c);
        }
      }
      if (fanout != kFullFanout && pool.size() > fanout) {
        // Partial Fisher-Yates: the first `fanout` entries become the sample.
        for (std::size_t j = 0; j < fanout; ++j) {
          std::swap(pool[j], pool[j + rng.uniform_index(pool.size() - j)]);
        }
        pool.resize(fanout);
        std::sort(pool.begin(), pool.end());
      }
      for (NodeId c : pool) {
        parent.children.push_back(static_cast<std::uint32_t>(child.nodes.size()));
        child.nodes.push_back(c);
      }
      parent.child_offsets.push_back(static_cast<std::uint32_t>(parent.children.size()));
    }
  }
  tree.degenerate = depth >= 1 && tree.levels[1].nodes.empty();
  return tree;
}

ExpansionScratch::ExpansionScratch(const BipartiteGraph& graph)
    : user_slot_(graph.num_users(), -1), item_slot_(graph.num_items(), -1) {}

SampledTree expand_merged(const BipartiteGraph& graph, NodeRef root, int depth,
                          ExpansionScratch& scratch, std::optional<NodeRef> exclude) {
  check_root(graph, root, depth);
  SampledTree tree;
  tree.root = root;
  tree.depth = depth;
  tree.merged = true;
  tree.levels.resize(depth + 1);
  tree.levels[0].side = root.side;
  tree.levels[0].nodes.push_back(root.index);

  for (int k = 0; k < depth; ++k) {
    TreeLevel& parent = tree.levels[k];
    TreeLevel& child = tree.levels[k + 1];
    child.side = opposite(parent.side);
    auto& slot_of = scratch.slots(child.side);
    for (std::size_t s = 0; s < parent.size(); ++s) {
      for (NodeId c : graph.neighbors({parent.side, parent.nodes[s]})) {
        if (excluded(exclude, child.side, c)) {
          continue;
        }
        if (slot_of[c] < 0) {
          slot_of[c] = static_cast<std::int32_t>(child.nodes.size());
          child.nodes.push_back(c);
        }
        parent.children.push_back(static_cast<std::uint32_t>(slot_of[c]));
      }
      parent.child_offsets.push_back(static_cast<std::uint32_t>(parent.children.size()));
    }
    for (NodeId c : child.nodes) {
      slot_of[c] = -1;
    }
  }
  tree.degenerate = depth >= 1 && tree.levels[1].nodes.empty();
  return tree;
}

SampledTree expand_merged(const BipartiteGraph& graph, NodeRef root, int depth,
                          std::optional<NodeRef> exclude) {
  ExpansionScratch scratch(graph);
  return expand_merged(graph, root, depth, scratch, exclude);
}

} // namespace iagcn
