#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>

namespace ssmpc::oracle {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Layout {
  int nu, nx, block, dblock, blocks;
  Eigen::Index u(int node) const { return static_cast<Eigen::Index>(node - 1) * block; }
  Eigen::Index x(int node) const { return u(node) + nu; }
  Eigen::Index y1(int node) const { return static_cast<Eigen::Index>(node - 1) * dblock; }
  Eigen::Index y2(int node) const { return y1(node) + nx; }
  Eigen::Index y3(int node) const { return y1(node) + 2 * nx; }
};

Layout layout(const ProblemInstance& p) {
  const int nu = p.model().num_inputs();
  const int nx = p.model().num_states();
  return {nu, nx, nu + nx, 2 * nx + nu, p.tree().num_nodes() - 1};
}

double dist_box(const Vector& v, const Vector& lo, const Vector& hi) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double d = 0.0;
    if (v[i] < lo[i]) d = lo[i] - v[i];
    if (v[i] > hi[i]) d = v[i] - hi[i];
    s += d * d;
  }
  return std::sqrt(s);
}

Vector clip(const Vector& v, const Vector& lo, const Vector& hi) {
  Vector out = v;
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = std::min(std::max(v[i], lo[i]), hi[i]);
  return out;
}

// prox of t * dist(.|[lo, hi]) written from the definition of the
// Moreau envelope of a distance function.
Vector prox_dist(const Vector& v, const Vector& lo, const Vector& hi, double t) {
  const Vector proj = clip(v, lo, hi);
  const double d = (v - proj).norm();
  if (d <= t) return proj;
  return proj + (1.0 - t / d) * (v - proj);
}

// Rolls the dynamics forward from the inputs stored in x.
void roll_states(const ProblemInstance& p, Vector& x) {
  const Layout L = layout(p);
  const NetworkModel& m = p.model();
  const ScenarioTree& t = p.tree();
  for (int n = 1; n < t.num_nodes(); ++n) {
    const int a = t.ancestor(n);
    const Vector prev = a == 0 ? p.initial_state() : Vector(x.segment(L.x(a), L.nx));
    x.segment(L.x(n), L.nx) = m.A * prev + m.B * x.segment(L.u(n), L.nu) + m.Gd * t.demands().col(n);
  }
}

}  // namespace

DenseKkt assemble_dense(const ProblemInstance& p) {
  const Layout L = layout(p);
  const NetworkModel& m = p.model();
  const ScenarioTree& t = p.tree();
  const CostWeights& w = p.weights();
  const int ns = m.num_mixing_nodes();
  const Eigen::Index dim = static_cast<Eigen::Index>(L.blocks) * L.block;
  const Eigen::Index rows = static_cast<Eigen::Index>(L.blocks) * (L.nx + ns);

  DenseKkt k;
  k.Q = Matrix::Zero(dim, dim);
  k.c = Vector::Zero(dim);
  k.C = Matrix::Zero(rows, dim);
  k.r = Vector::Zero(rows);
  const Vector& q = p.previous_input();
  for (int n = 1; n < t.num_nodes(); ++n) {
    const int a = t.ancestor(n);
    const double prob = t.probability(n);
    // S x = u_n - u_a (u_a constant q at the root).
    Matrix S = Matrix::Zero(L.nu, dim);
    S.middleCols(L.u(n), L.nu) = Matrix::Identity(L.nu, L.nu);
    if (a != 0) S.middleCols(L.u(a), L.nu) -= Matrix::Identity(L.nu, L.nu);
    k.Q += 2.0 * prob * S.transpose() * w.w_u * S;
    if (a == 0) {
      k.c -= 2.0 * prob * S.transpose() * (w.w_u * q);
      k.constant += prob * q.dot(w.w_u * q);
    }
    k.c.segment(L.u(n), L.nu) += prob * w.w_alpha * (m.alpha0 + t.prices().col(n));

    const Eigen::Index row = static_cast<Eigen::Index>(n - 1) * (L.nx + ns);
    k.C.block(row, L.x(n), L.nx, L.nx) = Matrix::Identity(L.nx, L.nx);
    k.C.block(row, L.u(n), L.nx, L.nu) = -m.B;
    Vector rhs = m.Gd * t.demands().col(n);
    if (a == 0) {
      rhs += m.A * p.initial_state();
    } else {
      k.C.block(row, L.x(a), L.nx, L.nx) = -m.A;
    }
    k.r.segment(row, L.nx) = rhs;
    if (ns > 0) {
      k.C.block(row + L.nx, L.u(n), ns, L.nu) = m.E;
      k.r.segment(row + L.nx, ns) = -m.Ed * t.demands().col(n);
    }
  }
  return k;
}

Matrix dense_H(const ProblemInstance& p) {
  const Layout L = layout(p);
  Matrix H = Matrix::Zero(static_cast<Eigen::Index>(L.blocks) * L.dblock,
                          static_cast<Eigen::Index>(L.blocks) * L.block);
  for (int n = 1; n <= L.blocks; ++n) {
    H.block(L.y1(n), L.x(n), L.nx, L.nx).setIdentity();
    H.block(L.y2(n), L.x(n), L.nx, L.nx).setIdentity();
    H.block(L.y3(n), L.u(n), L.nu, L.nu).setIdentity();
  }
  return H;
}

Vector dense_kkt_solve(const ProblemInstance& p, const Vector& y) {
  const DenseKkt k = assemble_dense(p);
  const Matrix H = dense_H(p);
  const Eigen::Index n = k.Q.rows();
  const Eigen::Index m = k.C.rows();
  Matrix K = Matrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = k.Q;
  K.topRightCorner(n, m) = k.C.transpose();
  K.bottomLeftCorner(m, n) = k.C;
  Vector rhs(n + m);
  rhs.head(n) = -(k.c + H.transpose() * y);
  rhs.tail(m) = k.r;
  Eigen::FullPivLU<Matrix> lu(K);
  if (!lu.isInvertible()) {
    throw std::runtime_error("singular KKT matrix: reduced cost is not strongly convex");
  }
  const Vector sol = lu.solve(rhs);
  return sol.head(n);
}

double smooth_cost(const DenseKkt& k, const Vector& x) {
  return 0.5 * x.dot(k.Q * x) + k.c.dot(x) + k.constant;
}

double penalty(const ProblemInstance& p, const Vector& x) {
  const Layout L = layout(p);
  const NetworkModel& m = p.model();
  const CostWeights& w = p.weights();
  const Vector no_upper = Vector::Constant(L.nx, kInf);
  double value = 0.0;
  for (int n = 1; n <= L.blocks; ++n) {
    const Vector u = x.segment(L.u(n), L.nu);
    const Vector s = x.segment(L.x(n), L.nx);
    for (int i = 0; i < L.nu; ++i) {
      const double slack = 1e-9 * (1.0 + std::abs(m.u_max[i] - m.u_min[i]));
      if (u[i] < m.u_min[i] - slack || u[i] > m.u_max[i] + slack) return kInf;
    }
    value += w.w_x * dist_box(s, m.x_min, m.x_max);
    value += w.w_s * dist_box(s, m.x_safe, no_upper);
  }
  return value;
}

double conjugate(const ProblemInstance& p, const Vector& y) {
  const Layout L = layout(p);
  const NetworkModel& m = p.model();
  const CostWeights& w = p.weights();
  double value = 0.0;
  for (int n = 1; n <= L.blocks; ++n) {
    const Vector y1 = y.segment(L.y1(n), L.nx);
    const Vector y2 = y.segment(L.y2(n), L.nx);
    const Vector y3 = y.segment(L.y3(n), L.nu);
    if (y1.norm() > w.w_x * (1.0 + 1e-9)) return kInf;
    if (y2.norm() > w.w_s * (1.0 + 1e-9)) return kInf;
    for (int i = 0; i < L.nx; ++i) {
      if (y2[i] > 1e-9 * w.w_s) return kInf;
      value += y1[i] >= 0.0 ? y1[i] * m.x_max[i] : y1[i] * m.x_min[i];
      value += std::min(y2[i], 0.0) * m.x_safe[i];
    }
    for (int i = 0; i < L.nu; ++i) value += y3[i] >= 0.0 ? y3[i] * m.u_max[i] : y3[i] * m.u_min[i];
  }
  return value;
}

double full_objective(const ProblemInstance& p, const Vector& x) {
  const DenseKkt k = assemble_dense(p);
  const double scale = 1.0 + x.lpNorm<Eigen::Infinity>() + k.r.lpNorm<Eigen::Infinity>();
  if ((k.C * x - k.r).lpNorm<Eigen::Infinity>() > 1e-9 * scale) return kInf;
  return smooth_cost(k, x) + penalty(p, x);
}

double dual_value(const ProblemInstance& p, const Vector& y) {
  const DenseKkt k = assemble_dense(p);
  const Vector x = dense_kkt_solve(p, y);
  const double inner = smooth_cost(k, x) + y.dot(dense_H(p) * x);
  return -inner + conjugate(p, y);
}

Vector project_feasible(const ProblemInstance& p, const Vector& xbar) {
  const Layout L = layout(p);
  const NetworkModel& m = p.model();
  const ScenarioTree& t = p.tree();
  Vector x = xbar;
  const int ns = m.num_mixing_nodes();
  Matrix pinv;
  if (ns > 0) pinv = m.E.completeOrthogonalDecomposition().pseudoInverse();
  for (int n = 1; n < t.num_nodes(); ++n) {
    Vector u = x.segment(L.u(n), L.nu);
    if (ns == 0) {
      u = clip(u, m.u_min, m.u_max);
    } else {
      const Vector target = -m.Ed * t.demands().col(n);
      auto affine = [&](const Vector& v) -> Vector { return v - pinv * (m.E * v - target); };
      // Dykstra: projection onto box intersect affine set.
      Vector a = u, pa = Vector::Zero(L.nu), qa = Vector::Zero(L.nu);
      for (int it = 0; it < 200000; ++it) {
        const Vector b = clip(a + pa, m.u_min, m.u_max);
        pa = a + pa - b;
        const Vector next = affine(b + qa);
        qa = b + qa - next;
        const double change = (next - a).lpNorm<Eigen::Infinity>();
        a = next;
        if (change < 1e-15 * (1.0 + a.lpNorm<Eigen::Infinity>()) && it > 10) break;
      }
      // The last iterate comes from the affine step; rounding can leave it
      // just outside the box.
      u = clip(a, m.u_min, m.u_max);
    }
    x.segment(L.u(n), L.nu) = u;
  }
  roll_states(p, x);
  return x;
}

double duality_gap(const ProblemInstance& p, const Vector& xbar, const Vector& y) {
  return full_objective(p, project_feasible(p, xbar)) + dual_value(p, y);
}

DualEvaluator::DualEvaluator(const ProblemInstance& problem)
    : problem_(problem), kkt_(assemble_dense(problem)), H_(dense_H(problem)) {
  const Eigen::Index n = kkt_.Q.rows();
  const Eigen::Index m = kkt_.C.rows();
  Matrix K = Matrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = kkt_.Q;
  K.topRightCorner(n, m) = kkt_.C.transpose();
  K.bottomLeftCorner(m, n) = kkt_.C;
  lu_.compute(K);
}

Vector DualEvaluator::minimizer(const Vector& y) const {
  const Eigen::Index n = kkt_.Q.rows();
  Vector rhs(n + kkt_.C.rows());
  rhs.head(n) = -(kkt_.c + H_.transpose() * y);
  rhs.tail(kkt_.C.rows()) = kkt_.r;
  return lu_.solve(rhs).head(n);
}

double DualEvaluator::dual_value(const Vector& y) const {
  const Vector x = minimizer(y);
  return -(smooth_cost(kkt_, x) + y.dot(H_ * x)) + conjugate(problem_, y);
}

double DualEvaluator::primal_value(const Vector& xbar) const {
  const Vector x = project_feasible(problem_, xbar);
  const double scale = 1.0 + x.lpNorm<Eigen::Infinity>() + kkt_.r.lpNorm<Eigen::Infinity>();
  if ((kkt_.C * x - kkt_.r).lpNorm<Eigen::Infinity>() > 1e-9 * scale) return kInf;
  return smooth_cost(kkt_, x) + penalty(problem_, x);
}

BruteForceResult brute_force_min(const ProblemInstance& p) {
  const Layout L = layout(p);
  const NetworkModel& m = p.model();
  if (m.num_mixing_nodes() != 0) throw std::invalid_argument("brute force needs an instance without coupling");
  const int free = L.blocks * L.nu;
  if (free > 3) throw std::invalid_argument("brute force supports at most 3 free inputs");

  const DenseKkt k = assemble_dense(p);
  std::vector<double> lo(free), hi(free);
  for (int i = 0; i < free; ++i) {
    lo[i] = m.u_min[i % L.nu];
    hi[i] = m.u_max[i % L.nu];
  }
  auto evaluate = [&](const std::vector<double>& u) {
    Vector x = Vector::Zero(static_cast<Eigen::Index>(L.blocks) * L.block);
    for (int i = 0; i < free; ++i) x[L.u(1 + i / L.nu) + i % L.nu] = u[i];
    roll_states(p, x);
    return std::make_pair(smooth_cost(k, x) + penalty(p, x), x);
  };

  BruteForceResult best;
  best.objective = kInf;
  constexpr int kFine = 1000;
  if (free == 1) {
    for (int i = 0; i <= kFine; ++i) {
      const auto [value, x] = evaluate({lo[0] + (hi[0] - lo[0]) * i / kFine});
      best.scan.push_back(value);
      if (value < best.objective) {
        best.objective = value;
        best.x = x;
      }
    }
    return best;
  }

  // Coarse-to-fine: a 21-point grid per axis, re-centred on the best point
  // with a window of +-2 cells, until cells reach 1e-3 of each range.
  std::vector<double> a = lo, b = hi, center(free);
  constexpr int kPoints = 21;
  for (;;) {
    std::vector<int> idx(free, 0);
    std::vector<double> u(free);
    double cell = 0.0;
    for (int i = 0; i < free; ++i) cell = std::max(cell, (b[i] - a[i]) / (kPoints - 1) / (hi[i] - lo[i]));
    for (;;) {
      for (int i = 0; i < free; ++i) u[i] = a[i] + (b[i] - a[i]) * idx[i] / (kPoints - 1);
      const auto [value, x] = evaluate(u);
      if (value < best.objective) {
        best.objective = value;
        best.x = x;
        center = u;
      }
      int d = 0;
      while (d < free && ++idx[d] == kPoints) idx[d++] = 0;
      if (d == free) break;
    }
    if (cell <= 1e-3) break;
    for (int i = 0; i < free; ++i) {
      const double h = (b[i] - a[i]) / (kPoints - 1);
      a[i] = std::max(lo[i], center[i] - 2.0 * h);
      b[i] = std::min(hi[i], center[i] + 2.0 * h);
    }
  }
  return best;
}

AdmmResult admm_solve(const ProblemInstance& p, int max_iterations, double tolerance, double rho) {
  const Layout L = layout(p);
  const NetworkModel& m = p.model();
  const CostWeights& w = p.weights();
  const DenseKkt k = assemble_dense(p);
  const Matrix H = dense_H(p);
  const Eigen::Index n = k.Q.rows();
  const Eigen::Index c = k.C.rows();
  if (rho <= 0.0) rho = std::max(1e-12, k.Q.diagonal().maxCoeff());

  Matrix K = Matrix::Zero(n + c, n + c);
  K.topLeftCorner(n, n) = k.Q + rho * H.transpose() * H;
  K.topRightCorner(n, c) = k.C.transpose();
  K.bottomLeftCorner(c, n) = k.C;
  Eigen::FullPivLU<Matrix> lu(K);
  // Weights of 1e7 next to unit dynamics put the pivot ratio below the
  // default rank threshold; only exact singularity matters here.
  lu.setThreshold(1e-30);
  if (!lu.isInvertible()) throw std::runtime_error("ADMM: singular KKT matrix");

  const Vector no_upper = Vector::Constant(L.nx, kInf);
  Vector z = Vector::Zero(H.rows());
  Vector v = Vector::Zero(H.rows());  // scaled multiplier
  Vector x = Vector::Zero(n);
  Vector rhs(n + c);
  AdmmResult res;
  for (int it = 1; it <= max_iterations; ++it) {
    rhs.head(n) = -k.c + rho * H.transpose() * (z - v);
    rhs.tail(c) = k.r;
    x = lu.solve(rhs).head(n);
    const Vector hx = H * x;
    const Vector z_old = z;
    const Vector t = hx + v;
    for (int nd = 1; nd <= L.blocks; ++nd) {
      z.segment(L.y1(nd), L.nx) = prox_dist(t.segment(L.y1(nd), L.nx), m.x_min, m.x_max, w.w_x / rho);
      z.segment(L.y2(nd), L.nx) = prox_dist(t.segment(L.y2(nd), L.nx), m.x_safe, no_upper, w.w_s / rho);
      z.segment(L.y3(nd), L.nu) = clip(t.segment(L.y3(nd), L.nu), m.u_min, m.u_max);
    }
    v += hx - z;
    res.iterations = it;
    res.primal_residual = (hx - z).lpNorm<Eigen::Infinity>() / (1.0 + hx.lpNorm<Eigen::Infinity>());
    res.dual_residual = rho * (z - z_old).lpNorm<Eigen::Infinity>() / (1.0 + rho * v.lpNorm<Eigen::Infinity>());
    if (res.primal_residual < tolerance && res.dual_residual < tolerance) break;
  }
  // Report the feasible point with inputs taken from z.
  for (int nd = 1; nd <= L.blocks; ++nd) x.segment(L.u(nd), L.nu) = z.segment(L.y3(nd), L.nu);
  if (m.num_mixing_nodes() == 0) roll_states(p, x);
  res.x = x;
  return res;
}

ScenarioTree random_tree(int horizon, const std::vector<int>& branching, int demand_dim, int price_dim,
                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.2, 1.0);
  std::vector<int> per_stage{1};
  std::vector<int> anc{-1};
  std::vector<double> prob{1.0};
  int begin = 0;
  for (int j = 1; j <= horizon; ++j) {
    const int b = j - 1 < static_cast<int>(branching.size()) ? branching[j - 1] : 1;
    const int end = static_cast<int>(anc.size());
    int count = 0;
    for (int parent = begin; parent < end; ++parent) {
      std::vector<double> wts(b);
      double sum = 0.0;
      for (double& v : wts) sum += (v = uni(rng));
      for (int c = 0; c < b; ++c) {
        anc.push_back(parent);
        prob.push_back(prob[parent] * wts[c] / sum);
        ++count;
      }
    }
    per_stage.push_back(count);
    begin = end;
  }
  return ScenarioTree::from_structure(per_stage, anc, prob, demand_dim, price_dim);
}

ProblemInstance random_instance(std::uint64_t seed, const RandomSpec& spec) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const int nx = pick(1, spec.max_states);
  const int nu = pick(1, spec.max_inputs);
  const int ns = std::min(pick(0, spec.max_mixing), nu - 1);
  const int nd = pick(1, 3);
  const int horizon = pick(1, spec.max_horizon);

  NetworkModel m;
  m.dt = 1.0;
  m.A = Matrix::Identity(nx, nx);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < nx; ++j) m.A(i, j) += 0.1 * normal(rng);
  }
  m.B = Matrix(nx, nu);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < nu; ++j) m.B(i, j) = normal(rng);
  }
  m.Gd = Matrix(nx, nd);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < nd; ++j) m.Gd(i, j) = -uni(rng);
  }
  m.E = Matrix(ns, nu);
  m.Ed = Matrix(ns, nd);
  // Ed = -E P with |P d| <= 1 for d in [0, 1]: u = P d is always a feasible
  // input strictly inside the box.
  Matrix P(nu, nd);
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nd; ++j) P(i, j) = (2.0 * uni(rng) - 1.0) / nd;
  }
  for (int i = 0; i < ns; ++i) {
    for (int j = 0; j < nu; ++j) m.E(i, j) = normal(rng);
  }
  m.Ed = -m.E * P;
  m.x_min = Vector::Zero(nx);
  m.x_max = Vector::Constant(nx, 10.0);
  m.x_safe = Vector::Constant(nx, 3.0);
  m.u_min = Vector::Constant(nu, -2.0);
  m.u_max = Vector::Constant(nu, 2.0);
  m.alpha0 = Vector(nu);
  for (int i = 0; i < nu; ++i) m.alpha0[i] = uni(rng);

  // Branching chosen so the tree stays within max_nodes.
  std::vector<int> branching;
  int nodes = 1, width = 1;
  for (int j = 1; j <= horizon; ++j) {
    int b = pick(1, 3);
    while (b > 1 && nodes + width * b + width * b * (horizon - j) > spec.max_nodes) --b;
    branching.push_back(b);
    width *= b;
    nodes += width;
  }
  ScenarioTree tree = random_tree(horizon, branching, nd, nu, seed ^ 0x5bd1e995ULL);
  Matrix d(nd, tree.num_nodes()), a(nu, tree.num_nodes());
  for (int n = 0; n < tree.num_nodes(); ++n) {
    for (int i = 0; i < nd; ++i) d(i, n) = n == 0 ? 0.0 : uni(rng);
    for (int i = 0; i < nu; ++i) a(i, n) = n == 0 ? 0.0 : 0.5 * normal(rng);
  }
  tree.set_values(d, a);

  Matrix R(nu, nu);
  for (int i = 0; i < nu; ++i) {
    for (int j = 0; j < nu; ++j) R(i, j) = normal(rng);
  }
  CostWeights w;
  w.w_alpha = 0.5 + uni(rng);
  w.w_u = R * R.transpose() / nu + 0.5 * Matrix::Identity(nu, nu);
  w.w_s = 1.0 + uni(rng);
  w.w_x = 5.0 + uni(rng);

  Vector x0(nx), q(nu);
  for (int i = 0; i < nx; ++i) x0[i] = 5.0 * uni(rng);
  for (int i = 0; i < nu; ++i) q[i] = normal(rng);
  return assemble_problem(std::move(m), std::move(tree), std::move(w), std::move(x0), std::move(q), 0);
}

}  // namespace ssmpc::oracle
