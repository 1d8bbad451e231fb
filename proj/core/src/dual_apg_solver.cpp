#include "ssmpc/dual_apg_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "parallel.hpp"

namespace ssmpc {
namespace {

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
}

std::shared_ptr<const StageFactors> build_stage_factors(const NetworkModel& model,
                                                        const Matrix& w_u, int horizon) {
  const int nu = model.num_inputs();
  auto f = std::make_shared<StageFactors>();
  f->horizon = horizon;
  f->w_u = w_u;
  f->coupling = model.E;
  f->coupling_demand = model.Ed;

  if (model.num_mixing_nodes() == 0) {
    f->null_basis = Matrix::Identity(nu, nu);
    f->particular_map = Matrix::Zero(nu, model.num_demands());
  } else {
    Eigen::JacobiSVD<Matrix> svd(model.E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sigma = svd.singularValues();
    const double threshold = std::max(model.E.rows(), model.E.cols()) *
                             std::numeric_limits<double>::epsilon() *
                             (sigma.size() > 0 ? sigma[0] : 0.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) rank += sigma[i] > threshold ? 1 : 0;
    f->null_basis = svd.matrixV().rightCols(nu - rank);
    Matrix pinv = Matrix::Zero(nu, model.num_mixing_nodes());
    for (int i = 0; i < rank; ++i) {
      pinv += svd.matrixV().col(i) * (svd.matrixU().col(i).transpose() / sigma[i]);
    }
    f->particular_map = -pinv * model.Ed;
  }

  const Matrix& N = f->null_basis;
  f->hessian.resize(horizon + 1);
  f->projector.resize(horizon + 1);
  f->feedback.resize(horizon + 1);
  f->gradient_map.resize(horizon + 1);

  Matrix cost_to_go = Matrix::Zero(nu, nu);
  for (int s = horizon; s >= 1; --s) {
    Matrix M = 2.0 * w_u + cost_to_go;
    Matrix T = Matrix::Zero(nu, nu);
    if (N.cols() > 0) {
      const Matrix reduced = N.transpose() * M * N;
      Eigen::LLT<Matrix> llt(reduced);
      if (llt.info() != Eigen::Success) {
        throw SolverError("W_u is singular on the null space of E (stage " + std::to_string(s) + ")");
      }
      T = N * llt.solve(N.transpose());
    }
    f->feedback[s] = 2.0 * T * w_u;
    f->gradient_map[s] = 2.0 * w_u * T;
    Matrix J = 2.0 * w_u - 4.0 * w_u * T * w_u;
    cost_to_go = 0.5 * (J + J.transpose());
    f->hessian[s] = std::move(M);
    f->projector[s] = std::move(T);
  }
  return f;
}

// Solves min f(x) + <y, Hx> by a backward sweep over the stages followed by
// a forward rollout. With `homogeneous` set, all data terms (prices,
// demands, initial state and previous input) are dropped, which yields the
// linear part of y -> x*(y).
class InnerSolver {
 public:
  InnerSolver(const FactorCache& cache, const ProblemInstance& problem)
      : cache_(cache), problem_(problem) {
    const int n = problem.tree().num_nodes();
    lambda_.resize(problem.num_states(), n);
    child_sum_.resize(problem.num_states(), n);
    h_.resize(problem.num_inputs(), n);
    g_.resize(problem.num_inputs(), n);
    z_.resize(problem.num_inputs(), n);
  }

  void run(const Vector* y, bool homogeneous, Vector& x, int threads) {
    const ScenarioTree& tree = problem_.tree();
    const NetworkModel& m = problem_.model();
    const StageFactors& sf = *cache_.stages;
    const int nx = problem_.num_states();
    const int nu = problem_.num_inputs();
    const bool identity = cache_.identity_dynamics;
    const int horizon = tree.horizon();

    x.resize(problem_.primal_dim());
    auto out = primal_blocks(problem_, x);
    std::optional<Eigen::Map<const Matrix>> yb;
    if (y) yb.emplace(y->data(), problem_.dual_block(), problem_.num_blocks());

    for (int s = horizon; s >= 1; --s) {
      const Matrix& T = sf.projector[s];
      const Matrix& Q = sf.gradient_map[s];
      detail::parallel_for(tree.stage_begin(s), tree.stage_end(s), threads, [&](int n) {
        const int b = ProblemInstance::block_of(n);
        const double p = tree.probability(n);
        auto lam = lambda_.col(n);
        auto eta = g_.col(n);
        if (yb) {
          lam = yb->col(b).head(nx) + yb->col(b).segment(nx, nx);
        } else {
          lam.setZero();
        }
        eta.setZero();
        const auto kids = tree.children(n);
        if (!kids.empty()) {
          auto sum = child_sum_.col(n);
          sum.setZero();
          for (int c : kids) {
            sum += lambda_.col(c);
            eta += h_.col(c);
          }
          if (identity) {
            lam += sum;
          } else {
            lam.noalias() += m.A.transpose() * sum;
          }
        }
        // g = p Walpha (alpha0 + alpha) + y3 + eta + B' lambda, stored in g_.
        if (!homogeneous) eta += cache_.linear_cost.col(n);
        if (yb) eta += yb->col(b).tail(nu);
        eta.noalias() += m.B.transpose() * lam;

        auto z = z_.col(n);
        auto h = h_.col(n);
        if (homogeneous) {
          z.setZero();
          h.setZero();
        } else {
          z = cache_.z_offset.col(n);
          h = cache_.h_offset.col(n);
        }
        z.noalias() -= (1.0 / p) * (T * eta);
        h.noalias() += Q * eta;
      });
    }

    const Vector zero_u = Vector::Zero(nu);
    const Vector zero_x = Vector::Zero(nx);
    const Vector& u_root = homogeneous ? zero_u : problem_.previous_input();
    const Vector& x_root = homogeneous ? zero_x : problem_.initial_state();
    for (int s = 1; s <= horizon; ++s) {
      const Matrix& Phi = sf.feedback[s];
      detail::parallel_for(tree.stage_begin(s), tree.stage_end(s), threads, [&](int n) {
        const int a = tree.ancestor(n);
        auto col = out.col(ProblemInstance::block_of(n));
        auto u = col.head(nu);
        auto xs = col.tail(nx);
        u = z_.col(n);
        if (a == 0) {
          u.noalias() += Phi * u_root;
        } else {
          u.noalias() += Phi * out.col(ProblemInstance::block_of(a)).head(nu);
        }
        if (homogeneous) {
          xs.setZero();
        } else {
          xs = cache_.disturbance.col(n);
        }
        xs.noalias() += m.B * u;
        if (a == 0) {
          if (identity) {
            xs += x_root;
          } else {
            xs.noalias() += m.A * x_root;
          }
        } else if (identity) {
          xs += out.col(ProblemInstance::block_of(a)).tail(nx);
        } else {
          xs.noalias() += m.A * out.col(ProblemInstance::block_of(a)).tail(nx);
        }
      });
    }
  }

 private:
  const FactorCache& cache_;
  const ProblemInstance& problem_;
  Matrix lambda_, child_sum_, h_, g_, z_;
};

// f(x) + <y, Hx> at a dynamics-feasible x, summed in node order.
double inner_value(const FactorCache& cache, const ProblemInstance& problem, const Vector& y,
                   const Vector& x) {
  const ScenarioTree& tree = problem.tree();
  const int nx = problem.num_states();
  const int nu = problem.num_inputs();
  const auto xb = primal_blocks(problem, x);
  const auto yb = dual_blocks(problem, y);
  const Matrix& W = problem.weights().w_u;
  double value = 0.0;
  for (int n = 1; n < tree.num_nodes(); ++n) {
    const int b = ProblemInstance::block_of(n);
    const int a = tree.ancestor(n);
    const auto u = xb.col(b).head(nu);
    const Vector du = a == 0 ? Vector(u - problem.previous_input())
                             : Vector(u - xb.col(ProblemInstance::block_of(a)).head(nu));
    value += cache.linear_cost.col(n).dot(u) + tree.probability(n) * du.dot(W * du);
    value += yb.col(b).tail(nu).dot(u);
    value += (yb.col(b).head(nx) + yb.col(b).segment(nx, nx)).dot(xb.col(b).tail(nx));
  }
  return value;
}

// y <- projection of (w + gamma Hx) - gamma prox_{g/gamma}((w + gamma Hx)/gamma),
// written per slot as a scaled residual so that no cancellation occurs.
void dual_prox_step(const ProblemInstance& problem, const Vector& w, const Vector& x, double gamma,
                    Vector& y, int threads) {
  const NetworkModel& m = problem.model();
  const CostWeights& cw = problem.weights();
  const int nx = problem.num_states();
  const int nu = problem.num_inputs();
  const auto wb = dual_blocks(problem, w);
  const auto xb = primal_blocks(problem, x);
  auto yb = dual_blocks(problem, y);
  detail::parallel_for(0, problem.num_blocks(), threads, [&](int b) {
    const auto wc = wb.col(b);
    const auto xc = xb.col(b);
    auto yc = yb.col(b);
    // Slot 1: distance to [xmin, xmax].
    double dist2 = 0.0;
    for (int i = 0; i < nx; ++i) {
      const double s = wc[i] / gamma + xc[nu + i];
      const double r = s - std::clamp(s, m.x_min[i], m.x_max[i]);
      yc[i] = r;
      dist2 += r * r;
    }
    double scale = gamma;
    if (dist2 > 0.0) scale = std::min(gamma, cw.w_x / std::sqrt(dist2));
    for (int i = 0; i < nx; ++i) yc[i] *= scale;
    // Slot 2: distance to [xsafe, inf).
    dist2 = 0.0;
    for (int i = 0; i < nx; ++i) {
      const double s = wc[nx + i] / gamma + xc[nu + i];
      const double r = std::min(s - m.x_safe[i], 0.0);
      yc[nx + i] = r;
      dist2 += r * r;
    }
    scale = gamma;
    if (dist2 > 0.0) scale = std::min(gamma, cw.w_s / std::sqrt(dist2));
    for (int i = 0; i < nx; ++i) yc[nx + i] *= scale;
    // Slot 3: input box.
    for (int i = 0; i < nu; ++i) {
      const double s = wc[2 * nx + i] / gamma + xc[i];
      yc[2 * nx + i] = gamma * (s - std::clamp(s, m.u_min[i], m.u_max[i]));
    }
  });
}

Vector start_vector(const ProblemInstance& problem) {
  // Identical in every node block so node permutations permute the iterates.
  const int block = problem.dual_block();
  Vector v(problem.dual_dim());
  auto vb = dual_blocks(problem, v);
  for (int i = 0; i < block; ++i) vb.row(i).setConstant(1.0 + 0.5 * std::sin(1.0 + i));
  return v / v.norm();
}

}  // namespace

FactorCache factor_step(const ProblemInstance& problem, const FactorCache* reuse) {
  const NetworkModel& m = problem.model();
  const ScenarioTree& tree = problem.tree();
  const CostWeights& w = problem.weights();
  const int horizon = tree.horizon();
  const int nu = problem.num_inputs();
  const int n = tree.num_nodes();

  FactorCache cache;
  if (reuse && reuse->stages && reuse->stages->horizon == horizon &&
      same_matrix(reuse->stages->w_u, w.w_u) && same_matrix(reuse->stages->coupling, m.E) &&
      same_matrix(reuse->stages->coupling_demand, m.Ed)) {
    cache.stages = reuse->stages;
  } else {
    cache.stages = build_stage_factors(m, w.w_u, horizon);
  }
  const StageFactors& sf = *cache.stages;
  cache.num_nodes = n;
  cache.identity_dynamics = m.A.isIdentity(0.0);

  cache.u_part = Matrix::Zero(nu, n);
  cache.z_offset = Matrix::Zero(nu, n);
  cache.h_offset = Matrix::Zero(nu, n);
  cache.linear_cost = Matrix::Zero(nu, n);
  cache.disturbance = Matrix::Zero(problem.num_states(), n);
  for (int node = 1; node < n; ++node) {
    const int s = tree.stage(node);
    const double p = tree.probability(node);
    const auto d = tree.demands().col(node);
    cache.u_part.col(node) = sf.particular_map * d;
    if (m.num_mixing_nodes() > 0) {
      const Vector residual = m.E * cache.u_part.col(node) + m.Ed * d;
      const double scale = 1.0 + (m.Ed * d).lpNorm<Eigen::Infinity>();
      if (residual.lpNorm<Eigen::Infinity>() > 1e-9 * scale) {
        throw SolverError("mixing-node balance cannot be met at tree node " + std::to_string(node));
      }
    }
    cache.z_offset.col(node) =
        cache.u_part.col(node) - sf.projector[s] * (sf.hessian[s] * cache.u_part.col(node));
    cache.h_offset.col(node) = -2.0 * p * (w.w_u * cache.z_offset.col(node));
    cache.linear_cost.col(node) = p * w.w_alpha * (m.alpha0 + tree.prices().col(node));
    cache.disturbance.col(node) = m.Gd * d;
  }
  return cache;
}

DualGradient dual_gradient(const FactorCache& cache, const ProblemInstance& problem,
                           const Vector& y, int threads) {
  if (cache.num_nodes != problem.tree().num_nodes() || !cache.stages ||
      cache.stages->horizon != problem.tree().horizon()) {
    throw SolverError("factor cache does not belong to this problem");
  }
  if (y.size() != problem.dual_dim()) throw DimensionError("dual_gradient: dual vector has wrong size");
  DualGradient result;
  InnerSolver(cache, problem).run(&y, false, result.primal, threads);
  result.value = inner_value(cache, problem, y, result.primal);
  return result;
}

LipschitzEstimate estimate_lipschitz(const FactorCache& cache, const ProblemInstance& problem,
                                     int threads) {
  constexpr int kMaxIterations = 500;
  constexpr double kRelTol = 1e-3;
  constexpr double kMargin = 1.1;

  InnerSolver inner(cache, problem);
  Vector v = start_vector(problem);
  Vector x;
  LipschitzEstimate est;
  double previous = 0.0;
  for (int it = 1; it <= kMaxIterations; ++it) {
    inner.run(&v, true, x, threads);
    Vector t = -apply_H(problem, x);
    const double rayleigh = v.dot(t);
    const double norm = t.norm();
    est.iterations = it;
    est.eigenvalue = rayleigh;
    if (norm == 0.0) break;
    if (it > 1 && std::abs(rayleigh - previous) <= kRelTol * std::abs(rayleigh)) {
      est.converged = true;
      break;
    }
    previous = rayleigh;
    v = t / norm;
  }

  if (!est.converged) {
    constexpr std::int64_t kTraceLimit = 20000;
    std::cerr << "warning: power iteration did not converge after " << kMaxIterations
              << " iterations; ";
    if (problem.dual_dim() <= kTraceLimit) {
      std::cerr << "using the trace bound\n";
      double trace = 0.0;
      Vector e = Vector::Zero(problem.dual_dim());
      for (Eigen::Index i = 0; i < e.size(); ++i) {
        e[i] = 1.0;
        inner.run(&e, true, x, threads);
        trace -= apply_H(problem, x)[i];
        e[i] = 0.0;
      }
      est.value = trace;
      return est;
    }
    std::cerr << "problem too large for the trace bound, doubling the Rayleigh estimate\n";
    est.value = 2.0 * est.eigenvalue;
    return est;
  }
  if (!(est.eigenvalue > 0.0)) throw SolverError("dual Hessian estimate is not positive");
  est.value = kMargin * est.eigenvalue;
  return est;
}

void SolverConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("maxIter must be >= 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (step_size && !(*step_size > 0.0)) throw std::invalid_argument("gamma must be positive");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::string to_string(Termination reason) {
  return reason == Termination::Converged ? "converged" : "max_iter";
}

double next_theta(double theta) {
  const double t2 = theta * theta;
  return 0.5 * (std::sqrt(t2 * t2 + 4.0 * t2) - t2);
}

double primal_residual(const ProblemInstance& problem, const Vector& x) {
  const NetworkModel& m = problem.model();
  const int nu = problem.num_inputs();
  const auto xb = primal_blocks(problem, x);
  double violation = 0.0;
  double size = 0.0;
  for (int b = 0; b < problem.num_blocks(); ++b) {
    const auto u = xb.col(b).head(nu);
    violation = std::max(violation, (u - m.u_max).maxCoeff());
    violation = std::max(violation, (m.u_min - u).maxCoeff());
    size = std::max(size, u.lpNorm<Eigen::Infinity>());
  }
  // Only the input slots have a hard set; states would swamp the scale.
  return violation / (1.0 + size);
}

Vector first_stage_input(const ProblemInstance& problem, const Vector& x) {
  const ScenarioTree& tree = problem.tree();
  const NetworkModel& m = problem.model();
  const auto xb = primal_blocks(problem, x);
  Vector u = Vector::Zero(problem.num_inputs());
  double mass = 0.0;
  for (int n = tree.stage_begin(1); n < tree.stage_end(1); ++n) {
    u += tree.probability(n) * xb.col(ProblemInstance::block_of(n)).head(problem.num_inputs());
    mass += tree.probability(n);
  }
  return project_box(u / mass, m.u_min, m.u_max);
}

double dual_objective(const FactorCache& cache, const ProblemInstance& problem, const Vector& y,
                      int threads) {
  return -dual_gradient(cache, problem, y, threads).value + eval_g_conjugate(problem, y);
}

SolverResult solve(const ProblemInstance& problem, const SolverConfig& config,
                   const FactorCache* cache) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  FactorCache local;
  if (!cache) {
    local = factor_step(problem);
    cache = &local;
  }
  const int threads = config.threads;
  const double gamma =
      config.step_size ? *config.step_size : 1.0 / estimate_lipschitz(*cache, problem, threads).value;

  InnerSolver inner(*cache, problem);
  const Eigen::Index m = problem.dual_dim();
  Vector y = Vector::Zero(m);
  Vector y_prev = Vector::Zero(m);
  Vector y_next(m);
  Vector w(m);
  Vector x, x_check, y_check(m);
  Vector x_avg = Vector::Zero(problem.primal_dim());
  double weight_sum = 0.0;
  double theta = 1.0;
  double theta_prev = 1.0;

  SolverResult result;
  result.step_size = gamma;
  for (int it = 0; it < config.max_iterations; ++it) {
    const double beta = theta * (1.0 / theta_prev - 1.0);
    w = y + beta * (y - y_prev);
    inner.run(&w, false, x, threads);
    dual_prox_step(problem, w, x, gamma, y_next, threads);
    if (!y_next.allFinite() || !x.allFinite()) {
      throw SolverError("non-finite iterate at iteration " + std::to_string(it + 1));
    }

    const double weight = 1.0 / theta;
    weight_sum += weight;
    x_avg += (weight / weight_sum) * (x - x_avg);

    result.primal_residual = primal_residual(problem, x_avg);
    result.dual_change =
        (y_next - y).lpNorm<Eigen::Infinity>() / (1.0 + y.lpNorm<Eigen::Infinity>());
    result.iterations = it + 1;

    y_prev.swap(y);
    y.swap(y_next);
    theta_prev = theta;
    theta = next_theta(theta);

    if (config.on_iteration) {
      IterationInfo info;
      info.iteration = it + 1;
      info.dual = &y;
      info.primal = &x;
      info.averaged_primal = &x_avg;
      info.primal_residual = result.primal_residual;
      info.dual_change = result.dual_change;
      config.on_iteration(info);
    }
    if (result.primal_residual <= config.tolerance && result.dual_change <= config.tolerance) {
      // y^{nu+1} = y^nu can happen while w^nu != y^nu. Accept only if y is
      // also (nearly) a fixed point of the unextrapolated step.
      inner.run(&y, false, x_check, threads);
      dual_prox_step(problem, y, x_check, gamma, y_check, threads);
      const double fixed_point =
          (y_check - y).lpNorm<Eigen::Infinity>() / (1.0 + y.lpNorm<Eigen::Infinity>());
      if (fixed_point <= config.tolerance) {
        x.swap(x_check);
        result.termination = Termination::Converged;
        break;
      }
    }
  }

  result.primal = std::move(x);
  result.averaged_primal = std::move(x_avg);
  result.dual = std::move(y);
  result.u0 = first_stage_input(problem, config.averaged_primal ? result.averaged_primal
                                                                : result.primal);
  result.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace ssmpc
