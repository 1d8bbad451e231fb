#pragma once

#include <cstdint>

#include "ssmpc/network_model.hpp"
#include "ssmpc/scenario_tree.hpp"

namespace ssmpc {

/// Tuning weights of the stage cost and of the soft state penalties.
struct CostWeights {
  double w_alpha = 1.0;  // economic cost scaling
  Matrix w_u;            // smooth-operation weight, symmetric positive definite
  double w_s = 1.0;      // safety-level violation
  double w_x = 1.0;      // state-bound violation

  static CostWeights scaled_identity(int num_inputs, double w_alpha, double w_u, double w_s,
                                     double w_x);

  /// Throws std::invalid_argument unless all weights are positive and w_u is
  /// symmetric positive definite with `num_inputs` rows.
  void validate(int num_inputs) const;
};

/// One scenario-based MPC problem over a forecast-attached tree.
///
/// Decision variables live on the non-root nodes: node n >= 1 carries the
/// input u_n applied over the interval ending at n and the resulting state
/// x_n. Primal vectors are node-major blocks [u_n; x_n] ordered by node index,
/// dual vectors are node-major blocks [y1_n; y2_n; y3_n] paired with
/// (x_n, x_n, u_n).
class ProblemInstance {
 public:
  const NetworkModel& model() const { return model_; }
  const ScenarioTree& tree() const { return tree_; }
  const CostWeights& weights() const { return weights_; }
  const Vector& initial_state() const { return initial_state_; }
  const Vector& previous_input() const { return previous_input_; }
  int time_index() const { return time_index_; }

  int num_states() const { return model_.num_states(); }
  int num_inputs() const { return model_.num_inputs(); }
  int num_blocks() const { return tree_.num_nonroot_nodes(); }
  int primal_block() const { return num_inputs() + num_states(); }
  int dual_block() const { return 2 * num_states() + num_inputs(); }
  std::int64_t primal_dim() const {
    return static_cast<std::int64_t>(num_blocks()) * primal_block();
  }
  std::int64_t dual_dim() const { return static_cast<std::int64_t>(num_blocks()) * dual_block(); }

  /// Column of the block matrices that belongs to tree node `node` (>= 1).
  static int block_of(int node) { return node - 1; }

 private:
  friend ProblemInstance assemble_problem(NetworkModel, ScenarioTree, CostWeights, Vector, Vector,
                                          int);
  NetworkModel model_;
  ScenarioTree tree_;
  CostWeights weights_;
  Vector initial_state_;
  Vector previous_input_;
  int time_index_ = 0;
};

/// Validates dimensions, the tree and the weights, then bundles them.
ProblemInstance assemble_problem(NetworkModel model, ScenarioTree tree, CostWeights weights,
                                 Vector initial_state, Vector previous_input, int time_index);

/// Primal vector viewed as a (n_u + n_x) x blocks matrix.
inline Eigen::Map<Matrix> primal_blocks(const ProblemInstance& p, Vector& x) {
  return {x.data(), p.primal_block(), p.num_blocks()};
}
inline Eigen::Map<const Matrix> primal_blocks(const ProblemInstance& p, const Vector& x) {
  return {x.data(), p.primal_block(), p.num_blocks()};
}
inline Eigen::Map<Matrix> dual_blocks(const ProblemInstance& p, Vector& y) {
  return {y.data(), p.dual_block(), p.num_blocks()};
}
inline Eigen::Map<const Matrix> dual_blocks(const ProblemInstance& p, const Vector& y) {
  return {y.data(), p.dual_block(), p.num_blocks()};
}

/// Smooth cost plus indicators of the dynamics and mixing-node coupling;
/// +infinity outside the domain (relative tolerance 1e-8).
double eval_f(const ProblemInstance& problem, const Vector& x);

/// g(z): distance penalties on the two state copies plus the input-box
/// indicator. Exact: any input outside the box gives +infinity.
double eval_g(const ProblemInstance& problem, const Vector& z);

/// Convex conjugate g*(y).
double eval_g_conjugate(const ProblemInstance& problem, const Vector& y);

Vector apply_H(const ProblemInstance& problem, const Vector& x);
Vector apply_H_adjoint(const ProblemInstance& problem, const Vector& y);

/// prox of gamma*g, separable per node and per slot.
Vector prox_g(const ProblemInstance& problem, const Vector& v, double gamma, int threads = 1);

/// prox of gamma*g* via the Moreau decomposition.
Vector prox_g_conjugate(const ProblemInstance& problem, const Vector& w, double gamma,
                        int threads = 1);

/// f(x) + g(Hx).
double primal_objective(const ProblemInstance& problem, const Vector& x);

/// Euclidean projection onto {v : lo <= v <= hi}; infinite bounds allowed.
Vector project_box(const Vector& v, const Vector& lo, const Vector& hi);

/// prox of lambda*dist(.|[lo, hi]).
Vector prox_box_distance(const Vector& v, const Vector& lo, const Vector& hi, double lambda);

}  // namespace ssmpc
