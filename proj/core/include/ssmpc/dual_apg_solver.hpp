#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssmpc/smpc_problem.hpp"

namespace ssmpc {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stage-wise factors of the inner equality-constrained QP. They depend only
/// on the network, W_u and the horizon, so one set serves every node of a
/// stage (node Hessians are the stage matrix scaled by the node probability).
struct StageFactors {
  int horizon = 0;
  Matrix null_basis;       // N: n_u x n_v, orthonormal columns spanning null(E)
  Matrix particular_map;   // P: u_part = P d solves E u + Ed d = 0
  Matrix w_u;
  Matrix coupling;         // E and Ed the factors were built from
  Matrix coupling_demand;
  // Index s = 1..horizon (entry 0 unused).
  std::vector<Matrix> hessian;      // M_s = 2 W_u + K_s
  std::vector<Matrix> projector;    // T_s = N (N' M_s N)^-1 N'
  std::vector<Matrix> feedback;     // Phi_s = 2 T_s W_u, u_node = z_node + Phi_s u_parent
  std::vector<Matrix> gradient_map; // Q_s = 2 W_u T_s
};

/// Everything dual_gradient needs for one ProblemInstance.
struct FactorCache {
  std::shared_ptr<const StageFactors> stages;
  int num_nodes = 0;
  bool identity_dynamics = false;
  Matrix u_part;       // n_u x nodes, particular inputs (column 0 unused)
  Matrix z_offset;     // n_u x nodes, u_part - T_s M_s u_part
  Matrix h_offset;     // n_u x nodes, -2 p W_u z_offset
  Matrix linear_cost;  // n_u x nodes, p W_alpha (alpha0 + alpha)
  Matrix disturbance;  // n_x x nodes, Gd d
};

/// Builds the cache. When `reuse` holds stage factors compatible with this
/// instance (same network, W_u and horizon) they are shared instead of
/// recomputed.
FactorCache factor_step(const ProblemInstance& problem, const FactorCache* reuse = nullptr);

struct DualGradient {
  Vector primal;       // x*(y) = argmin f(x) + <y, Hx>
  double value = 0.0;  // f(x*) + <y, H x*> = -f*(-H'y)
};

DualGradient dual_gradient(const FactorCache& cache, const ProblemInstance& problem,
                           const Vector& y, int threads = 1);

struct LipschitzEstimate {
  double value = 0.0;        // includes the 10% safety margin
  double eigenvalue = 0.0;   // raw power-iteration estimate
  int iterations = 0;
  bool converged = false;
};

/// Largest eigenvalue of y -> -H (x*(y) - x*(0)) by power iteration
/// (relative change <= 1e-3, at most 500 iterations), plus 10% margin.
LipschitzEstimate estimate_lipschitz(const FactorCache& cache, const ProblemInstance& problem,
                                     int threads = 1);

struct IterationInfo {
  int iteration = 0;        // number of completed iterations
  const Vector* dual = nullptr;          // y^{nu+1}
  const Vector* primal = nullptr;        // x^nu = x*(w^nu)
  const Vector* averaged_primal = nullptr;
  double primal_residual = 0.0;
  double dual_change = 0.0;
};

struct SolverConfig {
  int max_iterations = 1000;
  double tolerance = 5e-2;
  std::optional<double> step_size;  // 1/L when unset
  bool averaged_primal = false;  // u0 from the ergodic average instead of the last iterate
  int threads = 1;
  std::function<void(const IterationInfo&)> on_iteration;

  void validate() const;
};

enum class Termination { Converged, MaxIterations };

std::string to_string(Termination reason);

struct SolverResult {
  Vector u0;                 // first-stage control action
  Vector primal;             // last primal iterate
  Vector averaged_primal;    // ergodic average
  Vector dual;
  int iterations = 0;
  Termination termination = Termination::MaxIterations;
  double primal_residual = 0.0;
  double dual_change = 0.0;
  double step_size = 0.0;
  double solve_seconds = 0.0;
};

/// theta_{nu+1} from theta_nu.
double next_theta(double theta);

SolverResult solve(const ProblemInstance& problem, const SolverConfig& config,
                   const FactorCache* cache = nullptr);

/// Input-box violation of the input slots u of Hx relative to their size:
/// ||u - proj(u)||_inf / (1 + ||u||_inf).
double primal_residual(const ProblemInstance& problem, const Vector& x);

/// Probability-weighted stage-1 input, clipped to the input box.
Vector first_stage_input(const ProblemInstance& problem, const Vector& x);

/// D(y) = f*(-H'y) + g*(y) (minimized by the dual iterates).
double dual_objective(const FactorCache& cache, const ProblemInstance& problem, const Vector& y,
                      int threads = 1);

}  // namespace ssmpc
