#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssmpc/network_model.hpp"

namespace ssmpc {

/// Scenario tree over joint demand/price prediction errors.
///
/// Nodes are stored breadth-first by stage with the root at index 0, so the
/// nodes of stage j occupy the contiguous range [stage_begin(j), stage_end(j)).
/// Every node carries either an error vector (demand part first, then price
/// part) or, once a forecast is attached, absolute demand and price values.
class ScenarioTree {
 public:
  ScenarioTree() = default;

  /// Builds the link structure from per-stage node counts and the ancestor
  /// array (root ancestor = -1). Shape problems throw std::invalid_argument;
  /// probability consistency is left to validate_tree().
  static ScenarioTree from_structure(std::vector<int> nodes_per_stage, std::vector<int> ancestor,
                                     std::vector<double> probability, int demand_dim,
                                     int price_dim);

  /// Single-branch tree with probability one at every stage and zero errors.
  static ScenarioTree chain(int horizon, int demand_dim, int price_dim);

  int horizon() const { return static_cast<int>(nodes_per_stage_.size()) - 1; }
  int num_nodes() const { return static_cast<int>(ancestor_.size()); }
  int num_nonroot_nodes() const { return num_nodes() - 1; }
  int nodes_at_stage(int j) const { return nodes_per_stage_[j]; }
  int stage_begin(int j) const { return stage_offset_[j]; }
  int stage_end(int j) const { return stage_offset_[j] + nodes_per_stage_[j]; }

  int stage(int node) const { return stage_[node]; }
  int ancestor(int node) const { return ancestor_[node]; }
  double probability(int node) const { return probability_[node]; }
  std::span<const int> children(int node) const {
    return {children_.data() + child_offset_[node],
            static_cast<std::size_t>(child_offset_[node + 1] - child_offset_[node])};
  }
  bool is_leaf(int node) const { return child_offset_[node + 1] == child_offset_[node]; }

  const std::vector<int>& nodes_per_stage() const { return nodes_per_stage_; }
  const std::vector<int>& ancestors() const { return ancestor_; }
  const std::vector<double>& probabilities() const { return probability_; }

  int demand_dim() const { return demand_dim_; }
  int price_dim() const { return price_dim_; }
  int error_dim() const { return demand_dim_ + price_dim_; }

  bool has_errors() const { return errors_.cols() == num_nodes() && num_nodes() > 0; }
  bool is_attached() const {
    return demands_.cols() == num_nodes() && prices_.cols() == num_nodes() && num_nodes() > 0;
  }

  /// Column per node, (demand_dim + price_dim) rows.
  const Matrix& errors() const { return errors_; }
  /// Column per node, demand_dim rows; root column is zero.
  const Matrix& demands() const { return demands_; }
  /// Column per node, price_dim rows; root column is zero.
  const Matrix& prices() const { return prices_; }

  void set_errors(Matrix errors);
  void set_values(Matrix demands, Matrix prices);

  /// Copy with the price part of every error vector set to zero.
  ScenarioTree without_price_errors() const;

  void set_probability(int node, double p) { probability_[node] = p; }

 private:
  std::vector<int> nodes_per_stage_;
  std::vector<int> stage_offset_;
  std::vector<int> stage_;
  std::vector<int> ancestor_;
  std::vector<double> probability_;
  std::vector<int> child_offset_;
  std::vector<int> children_;
  int demand_dim_ = 0;
  int price_dim_ = 0;
  Matrix errors_;
  Matrix demands_;
  Matrix prices_;
};

/// Equally weighted sampled error trajectories; scenario s is a horizon x dim
/// matrix whose row j-1 holds the stage-j error (demand part first).
struct ScenarioFan {
  int demand_dim = 0;
  int price_dim = 0;
  std::vector<Matrix> scenarios;

  int horizon() const { return scenarios.empty() ? 0 : static_cast<int>(scenarios[0].rows()); }
  int size() const { return static_cast<int>(scenarios.size()); }
};

struct ScenarioPath {
  double probability = 0.0;
  std::vector<int> nodes;  // stage 1 .. horizon, root excluded
};

/// Returns human-readable violations; empty means the tree is valid.
std::vector<std::string> validate_tree(const ScenarioTree& tree);

/// Adds the nominal forecast (rows = stages 1..H) to every node's error.
ScenarioTree attach_forecast(const ScenarioTree& tree, const Matrix& demand_forecast,
                             const Matrix& price_forecast);

/// Stage-recursive greedy forward selection. `branching[j]` is the number of
/// children per node at stage j (stages past the list keep one child).
ScenarioTree reduce_fan_to_tree(const ScenarioFan& fan, const std::vector<int>& branching);

std::vector<ScenarioPath> leaves_to_scenarios(const ScenarioTree& tree);

}  // namespace ssmpc
