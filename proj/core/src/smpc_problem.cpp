#include "ssmpc/smpc_problem.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "parallel.hpp"

namespace ssmpc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double distance_to_box(const Vector& v, const Vector& lo, const Vector& hi) {
  return (v - project_box(v, lo, hi)).norm();
}

// sup over lo <= z <= hi of y'z; +inf when unbounded in the direction of y.
double box_support(const Vector& y, const Vector& lo, const Vector& hi) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] > 0.0) {
      if (std::isinf(hi[i])) return kInf;
      s += y[i] * hi[i];
    } else if (y[i] < 0.0) {
      if (std::isinf(lo[i])) return kInf;
      s += y[i] * lo[i];
    }
  }
  return s;
}

}  // namespace

CostWeights CostWeights::scaled_identity(int num_inputs, double w_alpha, double w_u, double w_s,
                                         double w_x) {
  return {w_alpha, w_u * Matrix::Identity(num_inputs, num_inputs), w_s, w_x};
}

void CostWeights::validate(int num_inputs) const {
  if (!(w_alpha > 0.0)) throw std::invalid_argument("Walpha must be positive");
  if (!(w_s > 0.0)) throw std::invalid_argument("Ws must be positive");
  if (!(w_x > 0.0)) throw std::invalid_argument("Wx must be positive");
  if (w_u.rows() != num_inputs || w_u.cols() != num_inputs) {
    throw DimensionError("Wu must be " + std::to_string(num_inputs) + "x" +
                         std::to_string(num_inputs));
  }
  if (!w_u.isApprox(w_u.transpose(), 1e-12)) throw std::invalid_argument("Wu must be symmetric");
  Eigen::LLT<Matrix> llt(w_u);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("Wu is not positive definite");
}

ProblemInstance assemble_problem(NetworkModel model, ScenarioTree tree, CostWeights weights,
                                 Vector initial_state, Vector previous_input, int time_index) {
  model.validate();
  if (tree.horizon() < 1) throw std::invalid_argument("prediction horizon must be >= 1");
  if (!tree.is_attached()) {
    throw std::invalid_argument("scenario tree has no demand/price values; attach a forecast first");
  }
  if (tree.demand_dim() != model.num_demands() || tree.price_dim() != model.num_inputs()) {
    throw DimensionError("tree values are (" + std::to_string(tree.demand_dim()) + " demands, " +
                         std::to_string(tree.price_dim()) + " prices) but the network has " +
                         std::to_string(model.num_demands()) + " demands and " +
                         std::to_string(model.num_inputs()) + " flows");
  }
  if (const auto issues = validate_tree(tree); !issues.empty()) {
    throw std::invalid_argument("invalid scenario tree: " + issues.front());
  }
  weights.validate(model.num_inputs());
  if (initial_state.size() != model.num_states()) throw DimensionError("initial state has wrong size");
  if (previous_input.size() != model.num_inputs()) throw DimensionError("previous input has wrong size");

  ProblemInstance problem;
  problem.model_ = std::move(model);
  problem.tree_ = std::move(tree);
  problem.weights_ = std::move(weights);
  problem.initial_state_ = std::move(initial_state);
  problem.previous_input_ = std::move(previous_input);
  problem.time_index_ = time_index;
  return problem;
}

double eval_f(const ProblemInstance& problem, const Vector& x) {
  if (x.size() != problem.primal_dim()) throw DimensionError("eval_f: primal vector has wrong size");
  const NetworkModel& m = problem.model();
  const ScenarioTree& tree = problem.tree();
  const CostWeights& w = problem.weights();
  const int nu = problem.num_inputs();
  const int nx = problem.num_states();
  const auto blocks = primal_blocks(problem, x);
  const double tol = 1e-8 * (1.0 + x.lpNorm<Eigen::Infinity>());

  double value = 0.0;
  for (int node = 1; node < tree.num_nodes(); ++node) {
    const auto col = blocks.col(ProblemInstance::block_of(node));
    const Vector u = col.head(nu);
    const Vector state = col.tail(nx);
    const int a = tree.ancestor(node);
    const Vector x_prev = a == 0 ? problem.initial_state()
                                 : Vector(blocks.col(ProblemInstance::block_of(a)).tail(nx));
    const Vector u_prev = a == 0 ? problem.previous_input()
                                 : Vector(blocks.col(ProblemInstance::block_of(a)).head(nu));
    const Vector d = tree.demands().col(node);

    if ((m.E * u + m.Ed * d).lpNorm<Eigen::Infinity>() > tol) return kInf;
    if ((state - (m.A * x_prev + m.B * u + m.Gd * d)).lpNorm<Eigen::Infinity>() > tol) return kInf;

    const Vector du = u - u_prev;
    const double economic = w.w_alpha * (m.alpha0 + tree.prices().col(node)).dot(u);
    value += tree.probability(node) * (economic + du.dot(w.w_u * du));
  }
  return value;
}

double eval_g(const ProblemInstance& problem, const Vector& z) {
  if (z.size() != problem.dual_dim()) throw DimensionError("eval_g: vector has wrong size");
  const NetworkModel& m = problem.model();
  const CostWeights& w = problem.weights();
  const int nx = problem.num_states();
  const int nu = problem.num_inputs();
  const Vector no_upper = Vector::Constant(nx, kInf);
  const auto blocks = dual_blocks(problem, z);
  double value = 0.0;
  for (int b = 0; b < problem.num_blocks(); ++b) {
    const auto col = blocks.col(b);
    const Vector u = col.tail(nu);
    if ((u.array() < m.u_min.array()).any() || (u.array() > m.u_max.array()).any()) return kInf;
    value += w.w_x * distance_to_box(col.head(nx), m.x_min, m.x_max);
    value += w.w_s * distance_to_box(col.segment(nx, nx), m.x_safe, no_upper);
  }
  return value;
}

double eval_g_conjugate(const ProblemInstance& problem, const Vector& y) {
  if (y.size() != problem.dual_dim()) throw DimensionError("eval_g_conjugate: vector has wrong size");
  const NetworkModel& m = problem.model();
  const CostWeights& w = problem.weights();
  const int nx = problem.num_states();
  const int nu = problem.num_inputs();
  const auto blocks = dual_blocks(problem, y);
  // Iterates produced through the Moreau decomposition sit on the boundary of
  // dom g* only up to rounding.
  const double ball_slack = 1e-9;
  double value = 0.0;
  for (int b = 0; b < problem.num_blocks(); ++b) {
    const auto col = blocks.col(b);
    const Vector y1 = col.head(nx);
    const Vector y2 = col.segment(nx, nx);
    const Vector y3 = col.tail(nu);
    if (y1.norm() > w.w_x * (1.0 + ball_slack)) return kInf;
    if (y2.norm() > w.w_s * (1.0 + ball_slack)) return kInf;
    if (y2.maxCoeff() > ball_slack * w.w_s) return kInf;
    value += box_support(y1, m.x_min, m.x_max);
    value += y2.cwiseMin(0.0).dot(m.x_safe);
    value += box_support(y3, m.u_min, m.u_max);
  }
  return value;
}

Vector apply_H(const ProblemInstance& problem, const Vector& x) {
  if (x.size() != problem.primal_dim()) throw DimensionError("apply_H: primal vector has wrong size");
  const int nx = problem.num_states();
  const int nu = problem.num_inputs();
  Vector y(problem.dual_dim());
  auto out = dual_blocks(problem, y);
  const auto in = primal_blocks(problem, x);
  out.topRows(nx) = in.bottomRows(nx);
  out.middleRows(nx, nx) = in.bottomRows(nx);
  out.bottomRows(nu) = in.topRows(nu);
  return y;
}

Vector apply_H_adjoint(const ProblemInstance& problem, const Vector& y) {
  if (y.size() != problem.dual_dim()) throw DimensionError("apply_H_adjoint: dual vector has wrong size");
  const int nx = problem.num_states();
  const int nu = problem.num_inputs();
  Vector x(problem.primal_dim());
  auto out = primal_blocks(problem, x);
  const auto in = dual_blocks(problem, y);
  out.topRows(nu) = in.bottomRows(nu);
  out.bottomRows(nx) = in.topRows(nx) + in.middleRows(nx, nx);
  return x;
}

Vector project_box(const Vector& v, const Vector& lo, const Vector& hi) {
  return v.cwiseMax(lo).cwiseMin(hi);
}

Vector prox_box_distance(const Vector& v, const Vector& lo, const Vector& hi, double lambda) {
  Vector proj = project_box(v, lo, hi);
  const double dist = (proj - v).norm();
  if (dist > lambda) return v + (lambda / dist) * (proj - v);
  return proj;
}

Vector prox_g(const ProblemInstance& problem, const Vector& v, double gamma, int threads) {
  if (!(gamma > 0.0)) throw std::invalid_argument("prox_g: gamma must be positive");
  if (v.size() != problem.dual_dim()) throw DimensionError("prox_g: vector has wrong size");
  const NetworkModel& m = problem.model();
  const CostWeights& w = problem.weights();
  const int nx = problem.num_states();
  const int nu = problem.num_inputs();
  const Vector no_upper = Vector::Constant(nx, kInf);

  Vector out(v.size());
  auto dst = dual_blocks(problem, out);
  const auto src = dual_blocks(problem, v);
  detail::parallel_for(0, problem.num_blocks(), threads, [&](int b) {
    const auto in = src.col(b);
    auto o = dst.col(b);
    o.head(nx) = prox_box_distance(in.head(nx), m.x_min, m.x_max, gamma * w.w_x);
    o.segment(nx, nx) = prox_box_distance(in.segment(nx, nx), m.x_safe, no_upper, gamma * w.w_s);
    o.tail(nu) = in.tail(nu).cwiseMax(m.u_min).cwiseMin(m.u_max);
  });
  return out;
}

Vector prox_g_conjugate(const ProblemInstance& problem, const Vector& w, double gamma,
                        int threads) {
  if (!(gamma > 0.0)) throw std::invalid_argument("prox_g_conjugate: gamma must be positive");
  return w - gamma * prox_g(problem, w / gamma, 1.0 / gamma, threads);
}

double primal_objective(const ProblemInstance& problem, const Vector& x) {
  const double f = eval_f(problem, x);
  if (std::isinf(f)) return f;
  return f + eval_g(problem, apply_H(problem, x));
}

}  // namespace ssmpc
