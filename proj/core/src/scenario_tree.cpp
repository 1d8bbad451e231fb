#include "ssmpc/scenario_tree.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ssmpc {
namespace {

constexpr double kProbabilityTol = 1e-9;

std::string fmt_number(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  std::string s = os.str();
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

}  // namespace

ScenarioTree ScenarioTree::from_structure(std::vector<int> nodes_per_stage,
                                          std::vector<int> ancestor,
                                          std::vector<double> probability, int demand_dim,
                                          int price_dim) {
  if (nodes_per_stage.empty()) throw std::invalid_argument("nodesPerStage is empty");
  for (int count : nodes_per_stage) {
    if (count < 1) throw std::invalid_argument("every stage needs at least one node");
  }
  const long total = std::accumulate(nodes_per_stage.begin(), nodes_per_stage.end(), 0L);
  if (static_cast<long>(ancestor.size()) != total || static_cast<long>(probability.size()) != total) {
    throw std::invalid_argument("ancestor/probability arrays must have one entry per node (" +
                                std::to_string(total) + ")");
  }
  if (demand_dim < 0 || price_dim < 0) throw std::invalid_argument("negative value dimension");

  ScenarioTree tree;
  tree.nodes_per_stage_ = std::move(nodes_per_stage);
  tree.ancestor_ = std::move(ancestor);
  tree.probability_ = std::move(probability);
  tree.demand_dim_ = demand_dim;
  tree.price_dim_ = price_dim;

  const int n = static_cast<int>(total);
  const int stages = static_cast<int>(tree.nodes_per_stage_.size());
  tree.stage_offset_.resize(stages);
  tree.stage_.resize(n);
  int offset = 0;
  for (int j = 0; j < stages; ++j) {
    tree.stage_offset_[j] = offset;
    for (int i = 0; i < tree.nodes_per_stage_[j]; ++i) tree.stage_[offset + i] = j;
    offset += tree.nodes_per_stage_[j];
  }

  std::vector<int> count(n, 0);
  for (int node = 1; node < n; ++node) {
    const int a = tree.ancestor_[node];
    if (a < 0 || a >= n) {
      throw std::invalid_argument("node " + std::to_string(node) + " has invalid ancestor " +
                                  std::to_string(a));
    }
    ++count[a];
  }
  tree.child_offset_.assign(n + 1, 0);
  for (int node = 0; node < n; ++node) tree.child_offset_[node + 1] = tree.child_offset_[node] + count[node];
  tree.children_.resize(n > 0 ? n - 1 : 0);
  std::vector<int> fill(tree.child_offset_.begin(), tree.child_offset_.end() - 1);
  for (int node = 1; node < n; ++node) tree.children_[fill[tree.ancestor_[node]]++] = node;
  return tree;
}

ScenarioTree ScenarioTree::chain(int horizon, int demand_dim, int price_dim) {
  std::vector<int> per_stage(horizon + 1, 1);
  std::vector<int> anc(horizon + 1);
  for (int j = 0; j <= horizon; ++j) anc[j] = j - 1;
  ScenarioTree tree = from_structure(per_stage, anc, std::vector<double>(horizon + 1, 1.0),
                                     demand_dim, price_dim);
  tree.set_errors(Matrix::Zero(demand_dim + price_dim, horizon + 1));
  return tree;
}

void ScenarioTree::set_errors(Matrix errors) {
  if (errors.rows() != error_dim() || errors.cols() != num_nodes()) {
    throw DimensionError("error values must be " + std::to_string(error_dim()) + "x" +
                         std::to_string(num_nodes()));
  }
  errors_ = std::move(errors);
}

void ScenarioTree::set_values(Matrix demands, Matrix prices) {
  if (demands.rows() != demand_dim_ || demands.cols() != num_nodes() ||
      prices.rows() != price_dim_ || prices.cols() != num_nodes()) {
    throw DimensionError("node values do not match tree dimensions");
  }
  demands_ = std::move(demands);
  prices_ = std::move(prices);
}

ScenarioTree ScenarioTree::without_price_errors() const {
  ScenarioTree copy = *this;
  if (copy.has_errors()) copy.errors_.bottomRows(price_dim_).setZero();
  return copy;
}

std::vector<std::string> validate_tree(const ScenarioTree& tree) {
  std::vector<std::string> issues;
  const int n = tree.num_nodes();
  if (n == 0) {
    issues.emplace_back("tree has no nodes");
    return issues;
  }
  if (tree.nodes_at_stage(0) != 1) issues.emplace_back("stage 0 must contain exactly the root");
  if (tree.ancestor(0) != -1) issues.emplace_back("root must have ancestor -1");
  if (std::abs(tree.probability(0) - 1.0) > kProbabilityTol) {
    issues.push_back("root probability " + fmt_number(tree.probability(0)) + " ≠ 1.0");
  }

  const int horizon = tree.horizon();
  int last_ancestor = -1;
  for (int node = 1; node < n; ++node) {
    const int a = tree.ancestor(node);
    if (a < 0 || a >= n) {
      issues.push_back("node " + std::to_string(node) + ": invalid ancestor");
      continue;
    }
    if (tree.stage(a) + 1 != tree.stage(node)) {
      issues.push_back("node " + std::to_string(node) + " at stage " +
                       std::to_string(tree.stage(node)) + " has ancestor at stage " +
                       std::to_string(tree.stage(a)));
    }
    if (node == tree.stage_begin(tree.stage(node))) last_ancestor = -1;
    if (a < last_ancestor) {
      issues.push_back("node " + std::to_string(node) + ": nodes are not grouped by ancestor");
    }
    last_ancestor = a;
  }

  for (int node = 0; node < n; ++node) {
    const double p = tree.probability(node);
    if (!(p > 0.0 && p <= 1.0 + kProbabilityTol)) {
      issues.push_back("node " + std::to_string(node) + ": probability " + fmt_number(p) +
                       " outside (0, 1]");
    }
    if (tree.is_leaf(node)) {
      if (tree.stage(node) != horizon) {
        issues.push_back("node " + std::to_string(node) + " is a leaf at stage " +
                         std::to_string(tree.stage(node)) + " < horizon " +
                         std::to_string(horizon));
      }
      continue;
    }
    double sum = 0.0;
    for (int child : tree.children(node)) sum += tree.probability(child);
    if (std::abs(sum - p) > kProbabilityTol) {
      issues.push_back("node " + std::to_string(node) + ": children probabilities sum " +
                       fmt_number(sum) + " ≠ " + fmt_number(p));
    }
  }

  for (int j = 0; j <= horizon; ++j) {
    double sum = 0.0;
    for (int node = tree.stage_begin(j); node < tree.stage_end(j); ++node) sum += tree.probability(node);
    if (std::abs(sum - 1.0) > kProbabilityTol) {
      issues.push_back("stage " + std::to_string(j) + ": probabilities sum " + fmt_number(sum) +
                       " ≠ 1.0");
    }
  }

  if (tree.errors().size() > 0 && !tree.has_errors()) issues.emplace_back("error values have the wrong shape");
  if ((tree.demands().size() > 0 || tree.prices().size() > 0) && !tree.is_attached()) {
    issues.emplace_back("demand/price values have the wrong shape");
  }
  return issues;
}

ScenarioTree attach_forecast(const ScenarioTree& tree, const Matrix& demand_forecast,
                             const Matrix& price_forecast) {
  if (!tree.has_errors()) throw std::invalid_argument("attach_forecast: tree carries no error values");
  const int horizon = tree.horizon();
  const int nd = tree.demand_dim();
  const int nu = tree.price_dim();
  if (demand_forecast.rows() != horizon || demand_forecast.cols() != nd ||
      price_forecast.rows() != horizon || price_forecast.cols() != nu) {
    throw DimensionError("forecast must be " + std::to_string(horizon) + "x" + std::to_string(nd) +
                         " (demand) and " + std::to_string(horizon) + "x" + std::to_string(nu) +
                         " (price)");
  }
  Matrix demands = Matrix::Zero(nd, tree.num_nodes());
  Matrix prices = Matrix::Zero(nu, tree.num_nodes());
  for (int node = 1; node < tree.num_nodes(); ++node) {
    const int row = tree.stage(node) - 1;
    demands.col(node) = demand_forecast.row(row).transpose() + tree.errors().col(node).head(nd);
    prices.col(node) = price_forecast.row(row).transpose() + tree.errors().col(node).tail(nu);
  }
  ScenarioTree attached = tree;
  attached.set_values(std::move(demands), std::move(prices));
  return attached;
}

namespace {

// Chooses `count` representatives out of `members` by greedy forward
// selection on the stage values; returns positions into `members`.
std::vector<int> forward_select(const std::vector<const double*>& points, int dim,
                                const std::vector<double>& weights, int count) {
  const int m = static_cast<int>(points.size());
  auto dist = [&](int a, int b) {
    double s = 0.0;
    for (int c = 0; c < dim; ++c) {
      const double diff = points[a][c] - points[b][c];
      s += diff * diff;
    }
    return std::sqrt(s);
  };

  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(m, false);
  std::vector<int> selected;
  selected.reserve(count);
  for (int round = 0; round < count; ++round) {
    int best = -1;
    double best_value = std::numeric_limits<double>::infinity();
    for (int u = 0; u < m; ++u) {
      if (chosen[u]) continue;
      double value = 0.0;
      for (int k = 0; k < m; ++k) {
        if (chosen[k] || k == u) continue;
        value += weights[k] * std::min(nearest[k], dist(k, u));
      }
      if (best < 0 || value < best_value) {
        best = u;
        best_value = value;
      }
    }
    chosen[best] = true;
    selected.push_back(best);
    for (int k = 0; k < m; ++k) nearest[k] = std::min(nearest[k], dist(k, best));
  }
  return selected;
}

}  // namespace

ScenarioTree reduce_fan_to_tree(const ScenarioFan& fan, const std::vector<int>& branching) {
  const int S = fan.size();
  if (S == 0) throw std::invalid_argument("reduce_fan_to_tree: empty fan");
  const int horizon = fan.horizon();
  const int dim = fan.demand_dim + fan.price_dim;
  if (horizon < 1) throw std::invalid_argument("reduce_fan_to_tree: scenarios have no stages");
  for (const Matrix& s : fan.scenarios) {
    if (s.rows() != horizon || s.cols() != dim) {
      throw DimensionError("reduce_fan_to_tree: scenarios differ in shape");
    }
  }
  if (branching.size() > static_cast<std::size_t>(horizon)) {
    throw std::invalid_argument("branching has more stages than the fan horizon");
  }
  double leaves = 1.0;
  for (int b : branching) {
    if (b < 1) throw std::invalid_argument("branching counts must be >= 1");
    leaves *= b;
  }
  if (leaves > S) throw std::invalid_argument("branching exceeds scenario count");

  // Stage values stored row-major per scenario so each point is contiguous.
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> rows;
  rows.reserve(S);
  for (const Matrix& s : fan.scenarios) rows.emplace_back(s);

  const double weight = 1.0 / S;
  std::vector<std::vector<int>> bundles{std::vector<int>(S)};
  std::iota(bundles[0].begin(), bundles[0].end(), 0);

  std::vector<int> per_stage{1};
  std::vector<int> ancestors{-1};
  std::vector<double> probs{1.0};
  std::vector<Vector> errors{Vector::Zero(dim)};

  int parent_begin = 0;
  for (int j = 1; j <= horizon; ++j) {
    const int b = j - 1 < static_cast<int>(branching.size()) ? branching[j - 1] : 1;
    const int parent_end = static_cast<int>(ancestors.size());
    std::vector<std::vector<int>> next_bundles;
    int stage_count = 0;
    for (int parent = parent_begin; parent < parent_end; ++parent) {
      const std::vector<int>& bundle = bundles[parent - parent_begin];
      // Uneven bundles: a node cannot have more children than scenarios.
      const int children = std::min(b, static_cast<int>(bundle.size()));
      std::vector<const double*> points;
      points.reserve(bundle.size());
      for (int s : bundle) points.push_back(rows[s].row(j - 1).data());
      std::vector<double> weights(bundle.size(), weight);

      std::vector<int> reps =
          children == 1 ? std::vector<int>{0} : forward_select(points, dim, weights, children);
      std::sort(reps.begin(), reps.end());

      std::vector<std::vector<int>> groups(reps.size());
      for (int k = 0; k < static_cast<int>(bundle.size()); ++k) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int r = 0; r < static_cast<int>(reps.size()); ++r) {
          double d = 0.0;
          for (int c = 0; c < dim; ++c) {
            const double diff = points[k][c] - points[reps[r]][c];
            d += diff * diff;
          }
          if (d < best_d) {
            best_d = d;
            best = r;
          }
        }
        groups[best].push_back(bundle[k]);
      }

      for (auto& group : groups) {
        if (group.empty()) continue;
        Vector centroid = Vector::Zero(dim);
        for (int s : group) centroid += weight * rows[s].row(j - 1).transpose();
        const double mass = weight * static_cast<double>(group.size());
        centroid /= mass;
        ancestors.push_back(parent);
        probs.push_back(mass);
        errors.push_back(std::move(centroid));
        next_bundles.push_back(std::move(group));
        ++stage_count;
      }
    }
    per_stage.push_back(stage_count);
    bundles = std::move(next_bundles);
    parent_begin = parent_end;
  }

  ScenarioTree tree = ScenarioTree::from_structure(per_stage, ancestors, probs, fan.demand_dim,
                                                   fan.price_dim);
  Matrix values(dim, tree.num_nodes());
  for (int node = 0; node < tree.num_nodes(); ++node) values.col(node) = errors[node];
  tree.set_errors(std::move(values));
  return tree;
}

std::vector<ScenarioPath> leaves_to_scenarios(const ScenarioTree& tree) {
  std::vector<ScenarioPath> paths;
  const int horizon = tree.horizon();
  for (int leaf = tree.stage_begin(horizon); leaf < tree.stage_end(horizon); ++leaf) {
    ScenarioPath path;
    path.probability = tree.probability(leaf);
    path.nodes.resize(horizon);
    int node = leaf;
    for (int j = horizon; j >= 1; --j) {
      path.nodes[j - 1] = node;
      node = tree.ancestor(node);
    }
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace ssmpc
