#ifndef IAGCN_PROPAGATION_HPP
#define IAGCN_PROPAGATION_HPP

#include "iagcn/model.hpp"

#include <vector>

namespace iagcn {

/// Forward record of one tree evaluated under one guide.
///
/// Because every aggregation is a weighted sum, the order-k root feature is
/// sum_x mass[k][x] * e0_x over the slots x at depth k, where mass is the
/// product of weights along the path from the root. The pass therefore
/// pushes scalar path masses top-down and touches each slot's embedding
/// once per order, instead of carrying vectors bottom-up.
struct TreePass {
  const SampledTree* tree = nullptr;
  GuideMode mode = GuideMode::lightgcn_norm;
  NodeRef guide{Side::user, 0};
  /// weights[j][e]: weight of edge e from depth j to depth j+1.
  std::vector<std::vector<double>> weights;
  /// mass[j][s]: summed path weight from the root to slot s of depth j.
  std::vector<std::vector<double>> mass;
  /// Row k is the order-k root feature.
  RowMatrixXd layers;
};

/// Runs the forward pass. `guide` is the root of the other tree; self-guided
/// mode substitutes the tree's own root and lightgcn_norm ignores it.
void forward_pass(TreePass& pass, const SampledTree& tree, NodeRef guide,
                  const EmbeddingTable& table, const BipartiteGraph& graph, const Hyperparams& hp);

inline TreePass forward_pass(const SampledTree& tree, NodeRef guide, const EmbeddingTable& table,
                             const BipartiteGraph& graph, const Hyperparams& hp) {
  TreePass pass;
  forward_pass(pass, tree, guide, table, graph, hp);
  return pass;
}

/// Fills `weights` for one level from per-slot attention logits
/// (<e0_g, e0_c>/tau), normalising per parent with overflow-safe shifts.
void softmax_level(const TreeLevel& parent, std::span<const double> child_logits,
                   std::vector<double>& weights);

/// Tree rooted at `root` for a pair whose other member is `target`: merged
/// full expansion under full fanout, a sampled plain tree otherwise.
SampledTree build_tree(const BipartiteGraph& graph, NodeRef root, std::optional<NodeRef> target,
                       const Hyperparams& hp, Rng* rng, ExpansionScratch* scratch = nullptr);

} // namespace iagcn

#endif // IAGCN_PROPAGATION_HPP
