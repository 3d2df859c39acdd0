#include "iagcn/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iagcn {

namespace {

// Below this a per-parent normaliser is recomputed against the parent's own
// maximum instead of the level maximum.
constexpr double kTinyNormaliser = 1e-280;

} // namespace

void softmax_level(const TreeLevel& parent, std::span<const double> child_logits,
                   std::vector<double>& weights) {
  weights.resize(parent.children.size());
  if (child_logits.empty()) {
    return;
  }
  const double top = *std::max_element(child_logits.begin(), child_logits.end());
  thread_local std::vector<double> shifted;
  shifted.resize(child_logits.size());
  for (std::size_t c = 0; c < child_logits.size(); ++c) {
    shifted[c] = std::exp(child_logits[c] - top);
  }
  for (std::size_t p = 0; p < parent.size(); ++p) {
    const auto begin = parent.child_offsets[p];
    const auto end = parent.child_offsets[p + 1];
    if (begin == end) {
      continue;
    }
    double z = 0.0;
    for (auto e = begin; e < end; ++e) {
      z += shifted[parent.children[e]];
    }
    if (z > kTinyNormaliser) {
      const double inv = 1.0 / z;
      for (auto e = begin; e < end; ++e) {
        weights[e] = shifted[parent.children[e]] * inv;
      }
      continue;
    }
    double local_top = -std::numeric_limits<double>::infinity();
    for (auto e = begin; e < end; ++e) {
      local_top = std::max(local_top, child_logits[parent.children[e]]);
    }
    z = 0.0;
    for (auto e = begin; e < end; ++e) {
      weights[e] = std::exp(child_logits[parent.children[e]] - local_top);
      z += weights[e];
    }
    for (auto e = begin; e < end; ++e) {
      weights[e] /= z;
    }
  }
}

void forward_pass(TreePass& pass, const SampledTree& tree, NodeRef guide,
                  const EmbeddingTable& table, const BipartiteGraph& graph, const Hyperparams& hp) {
  const int depth = tree.depth;
  const GuideMode mode = hp.guide_mode;
  pass.tree = &tree;
  pass.mode = mode;
  pass.guide = guide_for(tree, guide, mode);
  pass.weights.resize(depth);
  pass.mass.resize(depth + 1);
  pass.layers.setZero(depth + 1, table.dim());
  pass.mass[0].assign(1, 1.0);
  pass.layers.row(0) = table.row(tree.root);

  thread_local std::vector<double> logits;
  const double inv_tau = 1.0 / hp.temperature;
  for (int j = 0; j < depth; ++j) {
    const TreeLevel& parent = tree.levels[j];
    const TreeLevel& child = tree.levels[j + 1];
    const RowMatrixXd& child_rows = table.side(child.side);
    auto& w = pass.weights[j];

    if (mode == GuideMode::lightgcn_norm) {
      w.resize(parent.children.size());
      for (std::size_t p = 0; p < parent.size(); ++p) {
        const double sp = graph.inv_sqrt_degree({parent.side, parent.nodes[p]});
        for (auto e = parent.child_offsets[p]; e < parent.child_offsets[p + 1]; ++e) {
          w[e] = sp * graph.inv_sqrt_degree({child.side, child.nodes[parent.children[e]]});
        }
      }
    } else {
      const auto g = table.row(pass.guide);
      logits.resize(child.size());
      for (std::size_t c = 0; c < child.size(); ++c) {
        logits[c] = child_rows.row(child.nodes[c]).dot(g) * inv_tau;
        if (!std::isfinite(logits[c])) {
          throw std::domain_error("non-finite attention logit");
        }
      }
      softmax_level(parent, logits, w);
    }

    const auto& up = pass.mass[j];
    auto& down = pass.mass[j + 1];
    down.assign(child.size(), 0.0);
    for (std::size_t p = 0; p < parent.size(); ++p) {
      const double m = up[p];
      for (auto e = parent.child_offsets[p]; e < parent.child_offsets[p + 1]; ++e) {
        down[parent.children[e]] += m * w[e];
      }
    }
    auto layer = pass.layers.row(j + 1);
    for (std::size_t c = 0; c < child.size(); ++c) {
      layer.noalias() += down[c] * child_rows.row(child.nodes[c]);
    }
  }
}

SampledTree build_tree(const BipartiteGraph& graph, NodeRef root, std::optional<NodeRef> target,
                       const Hyperparams& hp, Rng* rng, ExpansionScratch* scratch) {
  const std::optional<NodeRef> exclude = hp.exclude_target ? target : std::nullopt;
  if (hp.fanout == kFullFanout) {
    if (scratch != nullptr) {
      return expand_merged(graph, root, hp.num_layers, *scratch, exclude);
    }
    return expand_merged(graph, root, hp.num_layers, exclude);
  }
  if (rng == nullptr) {
    throw std::invalid_argument("bounded fanout needs a random stream for tree sampling");
  }
  return sample_tree(graph, root, hp.num_layers, hp.fanout, *rng, exclude);
}

} // namespace iagcn
