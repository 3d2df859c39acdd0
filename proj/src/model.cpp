#include "iagcn/model.hpp"

#include "iagcn/propagation.hpp"

#include <cmath>

namespace iagcn {

std::string_view to_string(GuideMode mode) {
  switch (mode) {
  case GuideMode::interactive:
    return "interactive";
  case GuideMode::self_guided:
    return "self_guided";
  case GuideMode::lightgcn_norm:
    return "lightgcn_norm";
  }
  return "?";
}

std::string_view to_string(BetaMode mode) { return mode == BetaMode::mean ? "mean" : "learned"; }

GuideMode parse_guide_mode(std::string_view text) {
  for (auto m : {GuideMode::interactive, GuideMode::self_guided, GuideMode::lightgcn_norm}) {
    if (text == to_string(m)) {
      return m;
    }
  }
  throw std::invalid_argument("unknown guide_mode '" + std::string(text) +
                              "' (interactive, self_guided, lightgcn_norm)");
}

BetaMode parse_beta_mode(std::string_view text) {
  if (text == "mean") {
    return BetaMode::mean;
  }
  if (text == "learned") {
    return BetaMode::learned;
  }
  throw std::invalid_argument("unknown beta_mode '" + std::string(text) + "' (mean, learned)");
}

void Hyperparams::validate() const {
  if (embedding_dim < 1) {
    throw std::invalid_argument("embedding dimension must be at least 1");
  }
  if (num_layers < 0) {
    throw std::invalid_argument("number of layers must be non-negative");
  }
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (!(l2_lambda >= 0.0)) {
    throw std::invalid_argument("l2 lambda must be non-negative");
  }
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("learning rate must be positive");
  }
}

EmbeddingTable init_embeddings(NodeId num_users, NodeId num_items, int dim, std::uint64_t seed) {
  if (num_users <= 0 || num_items <= 0 || dim <= 0) {
    throw std::invalid_argument("embedding table dimensions must be positive");
  }
  const double bound = std::sqrt(6.0 / (2.0 * dim));
  Rng rng(seed);
  EmbeddingTable table{RowMatrixXd(num_users, dim), RowMatrixXd(num_items, dim)};
  for (RowMatrixXd* m : {&table.users, &table.items}) {
    for (Eigen::Index k = 0; k < m->size(); ++k) {
      m->data()[k] = bound * (2.0 * rng.uniform01() - 1.0);
    }
  }
  return table;
}

LayerWeights LayerWeights::mean(int num_layers) {
  LayerWeights w;
  w.mode_ = BetaMode::mean;
  w.logits_ = Eigen::VectorXd::Zero(num_layers + 1);
  return w;
}

LayerWeights LayerWeights::learned(int num_layers) {
  LayerWeights w = mean(num_layers);
  w.mode_ = BetaMode::learned;
  return w;
}

LayerWeights LayerWeights::from_beta(const Eigen::VectorXd& beta, BetaMode mode) {
  if (beta.size() == 0 || (beta.array() < 0.0).any() || std::abs(beta.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("layer weights must be non-negative and sum to one");
  }
  LayerWeights w;
  w.mode_ = mode;
  // log(0) clamps to a logit whose softmax weight underflows to zero.
  w.logits_ = beta.unaryExpr([](double b) { return b > 0.0 ? std::log(b) : -745.0; });
  return w;
}

Eigen::VectorXd LayerWeights::beta() const {
  if (mode_ == BetaMode::mean) {
    return Eigen::VectorXd::Constant(logits_.size(), 1.0 / static_cast<double>(logits_.size()));
  }
  return beta_from_logits(logits_);
}

std::size_t parameter_count(const EmbeddingTable& table, const LayerWeights& beta) {
  return static_cast<std::size_t>(table.users.size() + table.items.size()) +
         (beta.trainable() ? static_cast<std::size_t>(beta.size()) : 0);
}

Eigen::VectorXd lightgcn_weights(const BipartiteGraph& graph, NodeRef parent,
                                 std::span<const NodeId> children) {
  const auto dp = graph.degree(parent);
  Eigen::VectorXd w(static_cast<Eigen::Index>(children.size()));
  for (std::size_t c = 0; c < children.size(); ++c) {
    const auto dc = graph.degree({opposite(parent.side), children[c]});
    if (dp == 0 || dc == 0) {
      throw std::invalid_argument("lightgcn weight for a zero-degree node");
    }
    w[static_cast<Eigen::Index>(c)] = 1.0 / std::sqrt(static_cast<double>(dp) * static_cast<double>(dc));
  }
  return w;
}

NodeRef guide_for(const SampledTree& tree, NodeRef target, GuideMode mode) {
  switch (mode) {
  case GuideMode::interactive:
    if (target.side == tree.root.side) {
      throw std::invalid_argument("interactive guide must sit on the other side of the tree root");
    }
    return target;
  case GuideMode::self_guided:
    return tree.root;
  case GuideMode::lightgcn_norm:
    break;
  }
  return tree.root;
}

template <typename Scalar>
LayerStack<Scalar> propagate(const SampledTree& tree, NodeRef guide,
                             const EmbeddingTableT<Scalar>& table, const BipartiteGraph& graph,
                             const Hyperparams& hp) {
  if (tree.depth != hp.num_layers || static_cast<int>(tree.levels.size()) != tree.depth + 1) {
    throw std::invalid_argument("tree depth " + std::to_string(tree.depth) +
                                " does not match num_layers " + std::to_string(hp.num_layers));
  }
  const int depth = tree.depth;
  const Eigen::Index dim = table.dim();
  const NodeRef g = guide_for(tree, guide, hp.guide_mode);

  // features[s].row(h): order-h feature of slot s at the current depth.
  std::vector<RowMatrix<Scalar>> below;
  std::vector<RowMatrix<Scalar>> current;
  for (int j = depth; j >= 0; --j) {
    const TreeLevel& level = tree.levels[j];
    const int height = depth - j;
    current.assign(level.size(), RowMatrix<Scalar>::Zero(height + 1, dim));
    for (std::size_t s = 0; s < level.size(); ++s) {
      const NodeRef node{level.side, level.nodes[s]};
      current[s].row(0) = table.row(node);
      if (j == depth) {
        continue;
      }
      const auto kids = level.children_of(s);
      if (kids.empty()) {
        continue;
      }
      const Side child_side = tree.levels[j + 1].side;
      Vector<Scalar> w;
      if (hp.guide_mode == GuideMode::lightgcn_norm) {
        std::vector<NodeId> ids;
        for (auto c : kids) {
          ids.push_back(tree.levels[j + 1].nodes[c]);
        }
        w = lightgcn_weights(graph, node, ids).cast<Scalar>();
      } else {
        RowMatrix<Scalar> child_rows(static_cast<Eigen::Index>(kids.size()), dim);
        for (std::size_t c = 0; c < kids.size(); ++c) {
          child_rows.row(static_cast<Eigen::Index>(c)) =
              table.row({child_side, tree.levels[j + 1].nodes[kids[c]]});
        }
        w = attention_weights(table.row(g), child_rows, hp.temperature);
      }
      RowMatrix<Scalar> child_feats(static_cast<Eigen::Index>(kids.size()), dim);
      for (int h = 1; h <= height; ++h) {
        for (std::size_t c = 0; c < kids.size(); ++c) {
          child_feats.row(static_cast<Eigen::Index>(c)) = below[kids[c]].row(h - 1);
        }
        current[s].row(h) = aggregate_level(child_feats, w).transpose();
      }
    }
    below.swap(current);
  }
  return below.front();
}

template LayerStack<double> propagate(const SampledTree&, NodeRef, const EmbeddingTableT<double>&,
                                      const BipartiteGraph&, const Hyperparams&);
template LayerStack<long double> propagate(const SampledTree&, NodeRef,
                                           const EmbeddingTableT<long double>&,
                                           const BipartiteGraph&, const Hyperparams&);

double score_pair(NodeId user, NodeId item, const EmbeddingTable& table, const LayerWeights& beta,
                  const BipartiteGraph& graph, const Hyperparams& hp, Rng* rng) {
  const NodeRef u = user_node(user);
  const NodeRef i = item_node(item);
  const SampledTree user_tree = build_tree(graph, u, i, hp, rng);
  const SampledTree item_tree = build_tree(graph, i, u, hp, rng);
  const TreePass up = forward_pass(user_tree, i, table, graph, hp);
  const TreePass ip = forward_pass(item_tree, u, table, graph, hp);
  const Eigen::VectorXd b = beta.beta();
  return combine<double>(up.layers, b).dot(combine<double>(ip.layers, b));
}

} // namespace iagcn
