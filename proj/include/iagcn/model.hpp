#ifndef IAGCN_MODEL_HPP
#define IAGCN_MODEL_HPP

#include "iagcn/graph.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace iagcn {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixXd = RowMatrix<double>;

/// Where the aggregation weights of a tree come from.
enum class GuideMode {
  interactive,   ///< softmax similarity to the root of the other tree
  self_guided,   ///< softmax similarity to the tree's own root
  lightgcn_norm, ///< 1/sqrt(|N_p| |N_c|)
};

enum class BetaMode { mean, learned };

std::string_view to_string(GuideMode mode);
std::string_view to_string(BetaMode mode);
GuideMode parse_guide_mode(std::string_view text);
BetaMode parse_beta_mode(std::string_view text);

/// Attention weights depend on the target pair only in interactive mode.
constexpr bool target_dependent(GuideMode mode) { return mode == GuideMode::interactive; }

struct Hyperparams {
  int embedding_dim = 64;
  int num_layers = 3;
  double temperature = 1.0;
  GuideMode guide_mode = GuideMode::interactive;
  BetaMode beta_mode = BetaMode::mean;
  double l2_lambda = 1e-4;
  double learning_rate = 5e-4;
  /// kFullFanout expands every neighbour.
  std::size_t fanout = kFullFanout;
  /// Drop the opposite target from each tree (off by default).
  bool exclude_target = false;

  void validate() const;
};

/// 0-order embeddings, one row per node.
template <typename Scalar>
struct EmbeddingTableT {
  RowMatrix<Scalar> users;
  RowMatrix<Scalar> items;

  Eigen::Index dim() const { return users.cols(); }
  auto row(NodeRef node) { return node.side == Side::user ? users.row(node.index) : items.row(node.index); }
  auto row(NodeRef node) const {
    return node.side == Side::user ? users.row(node.index) : items.row(node.index);
  }
  RowMatrix<Scalar>& side(Side s) { return s == Side::user ? users : items; }
  const RowMatrix<Scalar>& side(Side s) const { return s == Side::user ? users : items; }

  template <typename To>
  EmbeddingTableT<To> cast() const {
    return {users.template cast<To>(), items.template cast<To>()};
  }

  bool all_finite() const { return users.allFinite() && items.allFinite(); }
};

using EmbeddingTable = EmbeddingTableT<double>;

/// Glorot-uniform rows with fan_in = fan_out = d.
EmbeddingTable init_embeddings(NodeId num_users, NodeId num_items, int dim, std::uint64_t seed);

/// Layer-combination coefficients on the probability simplex.
///
/// Learned weights are stored as free logits and mapped through a softmax on
/// read, so non-negativity and unit sum hold for any logit values.
class LayerWeights {
public:
  LayerWeights() = default;
  static LayerWeights mean(int num_layers);
  static LayerWeights learned(int num_layers);
  static LayerWeights from_beta(const Eigen::VectorXd& beta, BetaMode mode);

  BetaMode mode() const { return mode_; }
  bool trainable() const { return mode_ == BetaMode::learned; }
  Eigen::Index size() const { return logits_.size(); }
  Eigen::VectorXd beta() const;
  template <typename Scalar>
  Vector<Scalar> beta_as() const {
    return beta_from_logits(logits_.cast<Scalar>().eval());
  }
  Eigen::VectorXd& logits() { return logits_; }
  const Eigen::VectorXd& logits() const { return logits_; }

  template <typename Scalar>
  static Vector<Scalar> beta_from_logits(const Vector<Scalar>& logits) {
    using std::exp;
    const Scalar top = logits.maxCoeff();
    Vector<Scalar> w = (logits.array() - top).unaryExpr([](Scalar x) { return exp(x); }).matrix();
    return w / w.sum();
  }

private:
  BetaMode mode_ = BetaMode::mean;
  Eigen::VectorXd logits_;
};

/// Number of trainable scalars: all embedding entries plus learned logits.
std::size_t parameter_count(const EmbeddingTable& table, const LayerWeights& beta);

/// Softmax over <guide, child>/tau for the rows of `children`.
template <typename GuideVec, typename ChildRows>
Vector<typename GuideVec::Scalar> attention_weights(const Eigen::MatrixBase<GuideVec>& guide,
                                                    const Eigen::MatrixBase<ChildRows>& children,
                                                    double tau) {
  using Scalar = typename GuideVec::Scalar;
  using std::exp;
  if (children.rows() == 0) {
    throw std::invalid_argument("attention needs at least one child");
  }
  if (!(tau > 0.0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  if (!guide.allFinite() || !children.allFinite()) {
    throw std::domain_error("non-finite embedding in attention");
  }
  Vector<Scalar> logits = (children * guide.derived().transpose()) / Scalar(tau);
  const Scalar top = logits.maxCoeff();
  Vector<Scalar> w = (logits.array() - top).unaryExpr([](Scalar x) { return exp(x); }).matrix();
  return w / w.sum();
}

/// 1/sqrt(|N_parent| |N_child|) with full graph degrees.
Eigen::VectorXd lightgcn_weights(const BipartiteGraph& graph, NodeRef parent,
                                 std::span<const NodeId> children);

/// sum_c weights[c] * children.row(c)
template <typename ChildRows, typename Weights>
Vector<typename ChildRows::Scalar> aggregate_level(const Eigen::MatrixBase<ChildRows>& children,
                                                   const Eigen::MatrixBase<Weights>& weights) {
  if (children.rows() != weights.size()) {
    throw std::invalid_argument("aggregate_level: weight count does not match children");
  }
  return children.transpose() * weights;
}

/// Root representations e^0 .. e^K, one row per order.
template <typename Scalar>
using LayerStack = RowMatrix<Scalar>;

/// Guide node used by the aggregations of `tree`.
NodeRef guide_for(const SampledTree& tree, NodeRef target, GuideMode mode);

/// Bottom-up evaluation over tree slots: every slot of depth j gets its
/// 0..K-j order features from its children. Reference implementation; the
/// training and ranking paths use the path-weight engine in propagation.hpp.
template <typename Scalar>
LayerStack<Scalar> propagate(const SampledTree& tree, NodeRef guide,
                             const EmbeddingTableT<Scalar>& table, const BipartiteGraph& graph,
                             const Hyperparams& hp);

extern template LayerStack<double> propagate(const SampledTree&, NodeRef,
                                             const EmbeddingTableT<double>&,
                                             const BipartiteGraph&, const Hyperparams&);
extern template LayerStack<long double> propagate(const SampledTree&, NodeRef,
                                                  const EmbeddingTableT<long double>&,
                                                  const BipartiteGraph&, const Hyperparams&);

/// e* = sum_k beta_k e^k
template <typename Scalar>
Vector<Scalar> combine(const LayerStack<Scalar>& stack, const Vector<Scalar>& beta) {
  if (stack.rows() != beta.size()) {
    throw std::invalid_argument("combine: " + std::to_string(beta.size()) + " weights for " +
                                std::to_string(stack.rows()) + " layers");
  }
  return stack.transpose() * beta;
}

/// Conditional score <e*_u|i, e*_i|u>. With bounded fanout the trees are
/// sampled from `rng`, which must then be supplied.
double score_pair(NodeId user, NodeId item, const EmbeddingTable& table, const LayerWeights& beta,
                  const BipartiteGraph& graph, const Hyperparams& hp, Rng* rng = nullptr);

} // namespace iagcn

#endif // IAGCN_MODEL_HPP
