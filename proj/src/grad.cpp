#include "iagcn/grad.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace iagcn {

void SparseRowGrad::reset(NodeId rows, Eigen::Index dim) {
  dim_ = dim;
  slot_of_.assign(static_cast<std::size_t>(rows), -1);
  touched_.clear();
  pool_.clear();
}

void SparseRowGrad::clear() {
  for (NodeId r : touched_) {
    slot_of_[r] = -1;
  }
  touched_.clear();
  pool_.clear();
}

std::int32_t SparseRowGrad::slot(NodeId r) {
  std::int32_t& s = slot_of_[r];
  if (s < 0) {
    s = static_cast<std::int32_t>(touched_.size());
    touched_.push_back(r);
    pool_.resize(pool_.size() + static_cast<std::size_t>(dim_), 0.0);
  }
  return s;
}

void SparseRowGrad::merge(const SparseRowGrad& other, double scale) {
  for (NodeId r : other.touched()) {
    row(r) += scale * other.row(r);
  }
}

GradientBuffer::GradientBuffer(NodeId num_users, NodeId num_items, Eigen::Index dim,
                               Eigen::Index num_beta)
    : users(num_users, dim), items(num_items, dim), beta_logits(Eigen::VectorXd::Zero(num_beta)) {}

void GradientBuffer::clear() {
  users.clear();
  items.clear();
  beta_logits.setZero();
}

void GradientBuffer::merge(const GradientBuffer& other, double scale) {
  users.merge(other.users, scale);
  items.merge(other.items, scale);
  beta_logits += scale * other.beta_logits;
}

TripletTrees build_triplet_trees(const BipartiteGraph& graph, const Triplet& t,
                                 const Hyperparams& hp, Rng* rng, ExpansionScratch* scratch) {
  const NodeRef u = user_node(t.user);
  const NodeRef ip = item_node(t.pos);
  const NodeRef in = item_node(t.neg);
  TripletTrees trees;
  trees.user = build_tree(graph, u, ip, hp, rng, scratch);
  if (hp.exclude_target && hp.num_layers >= 1) {
    trees.user_neg = build_tree(graph, u, in, hp, rng, scratch);
  }
  trees.pos = build_tree(graph, ip, u, hp, rng, scratch);
  trees.neg = build_tree(graph, in, u, hp, rng, scratch);
  return trees;
}

void forward_triplet(TripletTape& tape, const Triplet& t, const TripletTrees& trees,
                     const EmbeddingTable& table, const LayerWeights& beta,
                     const BipartiteGraph& graph, const Hyperparams& hp) {
  const NodeRef u = user_node(t.user);
  const NodeRef ip = item_node(t.pos);
  const NodeRef in = item_node(t.neg);
  tape.triplet = t;
  tape.user_shared = !target_dependent(hp.guide_mode) && !trees.user_neg;
  tape.beta = beta.beta().transpose();

  forward_pass(tape.user_pos, trees.user, ip, table, graph, hp);
  if (!tape.user_shared) {
    forward_pass(tape.user_neg, trees.user_for_neg(), in, table, graph, hp);
  }
  forward_pass(tape.item_pos, trees.pos, u, table, graph, hp);
  forward_pass(tape.item_neg, trees.neg, u, table, graph, hp);

  tape.user_star_pos = tape.beta * tape.user_pos.layers;
  tape.user_star_neg = tape.user_shared ? tape.user_star_pos : tape.beta * tape.user_neg.layers;
  tape.pos_star = tape.beta * tape.item_pos.layers;
  tape.neg_star = tape.beta * tape.item_neg.layers;
  tape.score_pos = tape.user_star_pos.dot(tape.pos_star);
  tape.score_neg = tape.user_star_neg.dot(tape.neg_star);
  tape.reg = table.users.row(t.user).squaredNorm() + table.items.row(t.pos).squaredNorm() +
             table.items.row(t.neg).squaredNorm();
  tape.complete = true;
}

namespace {

template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::exp;
  using std::log1p;
  return x > 0 ? x + log1p(exp(-x)) : log1p(exp(x));
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

} // namespace

double triplet_loss(const TripletTape& tape, const Hyperparams& hp) {
  return softplus(-(tape.score_pos - tape.score_neg)) + hp.l2_lambda * tape.reg;
}

void backward_pass(const TreePass& pass, const RowMatrixXd& layer_grads,
                   const EmbeddingTable& table, const Hyperparams& hp, GradientBuffer& out,
                   const BackwardOptions& options) {
  if (pass.tree == nullptr) {
    throw std::invalid_argument("backward over a tree pass that was never run");
  }
  const SampledTree& tree = *pass.tree;
  const int depth = tree.depth;
  const bool attention = pass.mode != GuideMode::lightgcn_norm;
  const double inv_tau = (options.flip_attention_sign ? -1.0 : 1.0) / hp.temperature;

  thread_local std::vector<std::vector<double>> direct; // dL/dmass through e^k only
  thread_local std::vector<std::vector<double>> adjoint;
  thread_local std::vector<std::vector<double>> logit_grad;
  direct.resize(depth + 1);
  adjoint.resize(depth + 1);
  logit_grad.resize(depth + 1);

  for (int j = 0; j <= depth; ++j) {
    const TreeLevel& level = tree.levels[j];
    const RowMatrixXd& rows = table.side(level.side);
    const auto g = layer_grads.row(j);
    direct[j].resize(level.size());
    for (std::size_t s = 0; s < level.size(); ++s) {
      direct[j][s] = g.dot(rows.row(level.nodes[s]));
    }
    logit_grad[j].assign(level.size(), 0.0);
  }

  adjoint[depth] = direct[depth];
  for (int j = depth - 1; j >= 0; --j) {
    const TreeLevel& parent = tree.levels[j];
    const auto& w = pass.weights[j];
    const auto& below = adjoint[j + 1];
    auto& here = adjoint[j];
    here.resize(parent.size());
    for (std::size_t p = 0; p < parent.size(); ++p) {
      const auto begin = parent.child_offsets[p];
      const auto end = parent.child_offsets[p + 1];
      double mean = 0.0;
      for (auto e = begin; e < end; ++e) {
        mean += w[e] * below[parent.children[e]];
      }
      here[p] = direct[j][p] + mean;
      if (attention) {
        // Softmax Jacobian: d w_c = w_c (d logit_c - sum_c' w_c' d logit_c').
        const double m = pass.mass[j][p] * inv_tau;
        for (auto e = begin; e < end; ++e) {
          const auto c = parent.children[e];
          logit_grad[j + 1][c] += m * w[e] * (below[c] - mean);
        }
      }
    }
  }

  const auto guide_row = table.row(pass.guide);
  Eigen::RowVectorXd guide_grad = Eigen::RowVectorXd::Zero(table.dim());
  for (int j = 0; j <= depth; ++j) {
    const TreeLevel& level = tree.levels[j];
    const RowMatrixXd& rows = table.side(level.side);
    SparseRowGrad& grad = out.side(level.side);
    const auto g = layer_grads.row(j);
    for (std::size_t s = 0; s < level.size(); ++s) {
      auto target = grad.row(level.nodes[s]);
      target.noalias() += pass.mass[j][s] * g;
      if (attention && j > 0) {
        const double lg = logit_grad[j][s];
        target.noalias() += lg * guide_row;
        guide_grad.noalias() += lg * rows.row(level.nodes[s]);
      }
    }
  }
  if (attention) {
    out.side(pass.guide.side).row(pass.guide.index) += guide_grad;
  }
}

void backward_triplet(const TripletTape& tape, const EmbeddingTable& table,
                      const LayerWeights& beta, const Hyperparams& hp, double scale,
                      GradientBuffer& out, const BackwardOptions& options) {
  if (!tape.complete) {
    throw std::invalid_argument("backward_triplet: tape has no forward record");
  }
  const Triplet& t = tape.triplet;
  const double delta = tape.score_pos - tape.score_neg;
  // d softplus(-delta) / d delta
  const double coef = -sigmoid(-delta) * scale;

  const Eigen::RowVectorXd g_user_pos = coef * tape.pos_star;
  const Eigen::RowVectorXd g_pos = coef * tape.user_star_pos;
  const Eigen::RowVectorXd g_user_neg = -coef * tape.neg_star;
  const Eigen::RowVectorXd g_neg = -coef * tape.user_star_neg;

  const Eigen::VectorXd b = tape.beta.transpose();
  auto spread = [&](const Eigen::RowVectorXd& g) -> RowMatrixXd { return b * g; };

  if (beta.trainable()) {
    // d/d beta_k of sum over uses <G, e^k>, then through the softmax.
    Eigen::VectorXd beta_bar = tape.user_pos.layers * g_user_pos.transpose() +
                               tape.item_pos.layers * g_pos.transpose() +
                               tape.item_neg.layers * g_neg.transpose();
    beta_bar += (tape.user_shared ? tape.user_pos.layers : tape.user_neg.layers) *
                g_user_neg.transpose();
    out.beta_logits += b.cwiseProduct((beta_bar.array() - b.dot(beta_bar)).matrix());
  }

  if (tape.user_shared) {
    backward_pass(tape.user_pos, spread(g_user_pos + g_user_neg), table, hp, out, options);
  } else {
    backward_pass(tape.user_pos, spread(g_user_pos), table, hp, out, options);
    backward_pass(tape.user_neg, spread(g_user_neg), table, hp, out, options);
  }
  backward_pass(tape.item_pos, spread(g_pos), table, hp, out, options);
  backward_pass(tape.item_neg, spread(g_neg), table, hp, out, options);

  const double reg = 2.0 * hp.l2_lambda * scale;
  if (reg != 0.0) {
    out.users.row(t.user) += reg * table.users.row(t.user);
    out.items.row(t.pos) += reg * table.items.row(t.pos);
    out.items.row(t.neg) += reg * table.items.row(t.neg);
  }
}

namespace {

using Real = long double;

// Plain (unmerged) trees: the reference path never shares subtrees.
TripletTrees plain_trees(const BipartiteGraph& graph, const Triplet& t, const Hyperparams& hp) {
  Rng unused(0);
  const NodeRef u = user_node(t.user);
  const NodeRef ip = item_node(t.pos);
  const NodeRef in = item_node(t.neg);
  auto excl = [&](NodeRef target) {
    return hp.exclude_target ? std::optional<NodeRef>(target) : std::nullopt;
  };
  TripletTrees trees;
  trees.user = sample_tree(graph, u, hp.num_layers, kFullFanout, unused, excl(ip));
  if (hp.exclude_target && hp.num_layers >= 1) {
    trees.user_neg = sample_tree(graph, u, hp.num_layers, kFullFanout, unused, excl(in));
  }
  trees.pos = sample_tree(graph, ip, hp.num_layers, kFullFanout, unused, excl(u));
  trees.neg = sample_tree(graph, in, hp.num_layers, kFullFanout, unused, excl(u));
  return trees;
}

Real reference_loss(const BipartiteGraph& graph, const Triplet& t, const TripletTrees& trees,
                    const EmbeddingTableT<Real>& table, const Vector<Real>& logits,
                    const LayerWeights& beta, const Hyperparams& hp) {
  const Vector<Real> b = beta.trainable()
                             ? LayerWeights::beta_from_logits<Real>(logits)
                             : Vector<Real>::Constant(logits.size(), Real(1) / logits.size());
  const NodeRef u = user_node(t.user);
  const NodeRef ip = item_node(t.pos);
  const NodeRef in = item_node(t.neg);
  const Vector<Real> up = combine<Real>(propagate<Real>(trees.user, ip, table, graph, hp), b);
  const Vector<Real> un =
      combine<Real>(propagate<Real>(trees.user_for_neg(), in, table, graph, hp), b);
  const Vector<Real> pp = combine<Real>(propagate<Real>(trees.pos, u, table, graph, hp), b);
  const Vector<Real> nn = combine<Real>(propagate<Real>(trees.neg, u, table, graph, hp), b);
  const Real delta = up.dot(pp) - un.dot(nn);
  const Real reg = table.users.row(t.user).squaredNorm() + table.items.row(t.pos).squaredNorm() +
                   table.items.row(t.neg).squaredNorm();
  return softplus(-delta) + Real(hp.l2_lambda) * reg;
}

} // namespace

GradCheckResult finite_diff_check(const BipartiteGraph& graph, const Triplet& t,
                                  const EmbeddingTable& table, const LayerWeights& beta,
                                  const Hyperparams& hp, double epsilon,
                                  const TripletTrees* frozen, const BackwardOptions& options) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
    throw std::invalid_argument("finite-difference epsilon must lie in [1e-7, 1e-4]");
  }
  if (hp.fanout != kFullFanout && frozen == nullptr) {
    throw std::logic_error("gradient check under sampled fanout needs frozen trees");
  }
  const TripletTrees fast_trees = frozen ? *frozen : build_triplet_trees(graph, t, hp, nullptr);
  const TripletTrees ref_trees = frozen ? *frozen : plain_trees(graph, t, hp);

  TripletTape tape;
  forward_triplet(tape, t, fast_trees, table, beta, graph, hp);
  GradientBuffer analytic(graph.num_users(), graph.num_items(), table.dim(), beta.size());
  backward_triplet(tape, table, beta, hp, 1.0, analytic, options);

  EmbeddingTableT<Real> probe = table.cast<Real>();
  Vector<Real> logits = beta.logits().cast<Real>();
  const Real eps = epsilon;

  GradCheckResult result;
  auto record = [&](double a, Real plus, Real minus) {
    const double numeric = static_cast<double>((plus - minus) / (2 * eps));
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
    ++result.coordinates;
  };

  for (Side side : {Side::user, Side::item}) {
    const SparseRowGrad& grad = analytic.side(side);
    RowMatrix<Real>& m = probe.side(side);
    for (NodeId r : grad.touched()) {
      for (Eigen::Index c = 0; c < table.dim(); ++c) {
        const Real saved = m(r, c);
        m(r, c) = saved + eps;
        const Real plus = reference_loss(graph, t, ref_trees, probe, logits, beta, hp);
        m(r, c) = saved - eps;
        const Real minus = reference_loss(graph, t, ref_trees, probe, logits, beta, hp);
        m(r, c) = saved;
        record(grad.row(r)[c], plus, minus);
      }
    }
  }
  if (beta.trainable()) {
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
      const Real saved = logits[k];
      logits[k] = saved + eps;
      const Real plus = reference_loss(graph, t, ref_trees, probe, logits, beta, hp);
      logits[k] = saved - eps;
      const Real minus = reference_loss(graph, t, ref_trees, probe, logits, beta, hp);
      logits[k] = saved;
      record(analytic.beta_logits[k], plus, minus);
    }
  }
  return result;
}

} // namespace iagcn
