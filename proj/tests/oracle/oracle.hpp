#pragma once

// Slow reference implementations for tests. Everything here works on stacked
// dense matrices over the full primal vector and never touches the tree
// recursion of the solver.

#include <cstdint>
#include <vector>

#include "ssmpc/smpc_problem.hpp"

namespace ssmpc::oracle {

/// f(x) = 1/2 x'Qx + c'x + constant on {x : Cx = r}.
struct DenseKkt {
  Matrix Q;
  Vector c;
  double constant = 0.0;
  Matrix C;
  Vector r;
};

DenseKkt assemble_dense(const ProblemInstance& problem);

/// Dense H (dual_dim x primal_dim).
Matrix dense_H(const ProblemInstance& problem);

/// argmin f(x) + <y, Hx> from the full KKT system. Throws std::runtime_error
/// when the KKT matrix is singular.
Vector dense_kkt_solve(const ProblemInstance& problem, const Vector& y);

/// Smooth part on the constraint set (no feasibility check).
double smooth_cost(const DenseKkt& kkt, const Vector& x);

/// g(Hx): distance penalties plus the input-box indicator (+inf outside,
/// with a 1e-9 relative slack).
double penalty(const ProblemInstance& problem, const Vector& x);

/// g*(y): box support functions inside the norm balls, +inf outside.
double conjugate(const ProblemInstance& problem, const Vector& y);

/// f + g(H.), +inf when Cx = r fails by more than 1e-9 relative.
double full_objective(const ProblemInstance& problem, const Vector& x);

/// D(y) = -min_x { f(x) + <y, Hx> } + g*(y); the dual problem minimizes D.
double dual_value(const ProblemInstance& problem, const Vector& y);

/// Moves the inputs of x into the intersection of the input box and the
/// coupling set (Dykstra per node) and rolls the states forward.
Vector project_feasible(const ProblemInstance& problem, const Vector& x);

/// full_objective(project_feasible(xbar)) + D(y).
double duality_gap(const ProblemInstance& problem, const Vector& xbar, const Vector& y);

/// dual_value and duality_gap with the KKT factorization computed once,
/// for repeated evaluation along solver traces.
class DualEvaluator {
 public:
  explicit DualEvaluator(const ProblemInstance& problem);

  Vector minimizer(const Vector& y) const;
  double dual_value(const Vector& y) const;
  double primal_value(const Vector& xbar) const;  // full objective after projection
  double gap(const Vector& xbar, const Vector& y) const { return primal_value(xbar) + dual_value(y); }

 private:
  const ProblemInstance& problem_;
  DenseKkt kkt_;
  Matrix H_;
  Eigen::PartialPivLU<Matrix> lu_;
};

struct BruteForceResult {
  Vector x;                    // best primal point
  double objective = 0.0;
  std::vector<double> scan;    // objective along the grid (1 free input only)
};

/// Grid search over the input boxes (resolution 1e-3 of each range). Needs
/// no coupling rows and at most 3 free inputs in total.
BruteForceResult brute_force_min(const ProblemInstance& problem);

struct AdmmResult {
  Vector x;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

/// Dense ADMM on min f(x) + g(z) s.t. Hx = z.
AdmmResult admm_solve(const ProblemInstance& problem, int max_iterations = 200000,
                      double tolerance = 1e-11, double rho = 0.0);

/// Random instance for cross-checks: general A, random coupling of full row
/// rank, random tree, attached values.
struct RandomSpec {
  int max_states = 5;
  int max_inputs = 6;
  int max_mixing = 2;
  int max_horizon = 4;
  int max_nodes = 30;  // 1 gives a single-branch tree
};

ProblemInstance random_instance(std::uint64_t seed, const RandomSpec& spec = {});

/// Tree with given per-node branching at each stage, random probabilities.
ScenarioTree random_tree(int horizon, const std::vector<int>& branching, int demand_dim,
                         int price_dim, std::uint64_t seed);

}  // namespace ssmpc::oracle
