#ifndef IAGCN_GRAD_HPP
#define IAGCN_GRAD_HPP

#include "iagcn/propagation.hpp"

#include <optional>
#include <span>
#include <vector>

namespace iagcn {

/// (u, i+, i-): u prefers i+ to i-.
struct Triplet {
  NodeId user;
  NodeId pos;
  NodeId neg;
};

/// Row-sparse gradient for one embedding matrix.
class SparseRowGrad {
public:
  SparseRowGrad() = default;
  SparseRowGrad(NodeId rows, Eigen::Index dim) { reset(rows, dim); }

  void reset(NodeId rows, Eigen::Index dim);
  void clear();

  Eigen::Map<Eigen::RowVectorXd> row(NodeId r) {
    const auto s = static_cast<std::size_t>(slot(r)); // may grow the pool
    return {pool_.data() + s * dim_, dim_};
  }
  Eigen::Map<const Eigen::RowVectorXd> row(NodeId r) const {
    return {pool_.data() + static_cast<std::size_t>(slot_of_[r]) * dim_, dim_};
  }
  bool contains(NodeId r) const { return slot_of_[r] >= 0; }
  /// Rows in first-touch order.
  std::span<const NodeId> touched() const { return touched_; }
  Eigen::Index dim() const { return dim_; }

  /// this += scale * other
  void merge(const SparseRowGrad& other, double scale = 1.0);

private:
  std::int32_t slot(NodeId r);

  Eigen::Index dim_ = 0;
  std::vector<std::int32_t> slot_of_;
  std::vector<NodeId> touched_;
  std::vector<double> pool_;
};

/// Gradients of the loss w.r.t. touched embedding rows and the beta logits.
struct GradientBuffer {
  SparseRowGrad users;
  SparseRowGrad items;
  Eigen::VectorXd beta_logits;

  GradientBuffer() = default;
  GradientBuffer(NodeId num_users, NodeId num_items, Eigen::Index dim, Eigen::Index num_beta);

  SparseRowGrad& side(Side s) { return s == Side::user ? users : items; }
  const SparseRowGrad& side(Side s) const { return s == Side::user ? users : items; }
  void clear();
  void merge(const GradientBuffer& other, double scale = 1.0);
};

/// Trees of one triplet. `user_neg` is set only when the user tree depends on
/// the target (target exclusion); otherwise `user` serves both pairs.
struct TripletTrees {
  SampledTree user;
  std::optional<SampledTree> user_neg;
  SampledTree pos;
  SampledTree neg;

  const SampledTree& user_for_neg() const { return user_neg ? *user_neg : user; }
};

TripletTrees build_triplet_trees(const BipartiteGraph& graph, const Triplet& t,
                                 const Hyperparams& hp, Rng* rng,
                                 ExpansionScratch* scratch = nullptr);

/// Everything the backward pass replays: both pairs' tree passes, combined
/// representations and scores.
struct TripletTape {
  Triplet triplet{};
  TreePass user_pos;
  TreePass user_neg; ///< unused when user_shared
  TreePass item_pos;
  TreePass item_neg;
  bool user_shared = false;
  Eigen::RowVectorXd beta;
  Eigen::RowVectorXd user_star_pos;
  Eigen::RowVectorXd user_star_neg;
  Eigen::RowVectorXd pos_star;
  Eigen::RowVectorXd neg_star;
  double score_pos = 0.0;
  double score_neg = 0.0;
  double reg = 0.0; ///< |e0_u|^2 + |e0_i+|^2 + |e0_i-|^2
  bool complete = false;
};

void forward_triplet(TripletTape& tape, const Triplet& t, const TripletTrees& trees,
                     const EmbeddingTable& table, const LayerWeights& beta,
                     const BipartiteGraph& graph, const Hyperparams& hp);

/// softplus(-(y+ - y-)) + lambda * reg for one triplet.
double triplet_loss(const TripletTape& tape, const Hyperparams& hp);

/// Fault injection for exercising the gradient checker.
struct BackwardOptions {
  bool flip_attention_sign = false;
};

/// Accumulates scale * d(triplet_loss)/d(theta) into `out`.
void backward_triplet(const TripletTape& tape, const EmbeddingTable& table,
                      const LayerWeights& beta, const Hyperparams& hp, double scale,
                      GradientBuffer& out, const BackwardOptions& options = {});

/// Accumulates the gradient of one tree pass given dL/de^k for every order k
/// (rows of `layer_grads`).
void backward_pass(const TreePass& pass, const RowMatrixXd& layer_grads,
                   const EmbeddingTable& table, const Hyperparams& hp, GradientBuffer& out,
                   const BackwardOptions& options = {});

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Central-difference check of backward_triplet. The perturbed losses are
/// recomputed with the bottom-up reference propagation in extended precision
/// over the same trees. Under bounded fanout the trees must be supplied
/// (`frozen`), since resampling would compare different functions.
GradCheckResult finite_diff_check(const BipartiteGraph& graph, const Triplet& t,
                                  const EmbeddingTable& table, const LayerWeights& beta,
                                  const Hyperparams& hp, double epsilon,
                                  const TripletTrees* frozen = nullptr,
                                  const BackwardOptions& options = {});

} // namespace iagcn

#endif // IAGCN_GRAD_HPP
