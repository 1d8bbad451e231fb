#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ssmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised when vector or matrix shapes do not agree with the model.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for inconsistent network topologies.
class TopologyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ActuatorKind { Pump, Valve };

struct ControlledFlow {
  ActuatorKind kind = ActuatorKind::Pump;
  double q_max = 0.0;   // m^3/s
  double alpha0 = 0.0;  // production price component
  std::string name;
};

struct Tank {
  double v_min = 0.0;
  double v_max = 0.0;
  double v_safe = 0.0;
  std::vector<int> inflows;   // controlled flow indices entering the tank
  std::vector<int> outflows;  // controlled flow indices leaving the tank
  std::vector<int> demands;   // demand indices drawn directly from the tank
  std::string name;
};

/// Reference to either a controlled flow or a demand flow.
struct FlowRef {
  enum class Kind { Controlled, Demand };
  Kind kind = Kind::Controlled;
  int index = 0;

  static FlowRef controlled(int i) { return {Kind::Controlled, i}; }
  static FlowRef demand(int i) { return {Kind::Demand, i}; }
};

/// Junction without storage: sum of incoming flows equals sum of outgoing.
struct MixingNode {
  std::vector<FlowRef> incoming;
  std::vector<FlowRef> outgoing;
  std::string name;
};

struct NetworkTopology {
  std::vector<Tank> tanks;
  std::vector<ControlledFlow> flows;
  std::vector<std::string> demand_names;  // one entry per demand sector
  std::vector<MixingNode> mixing_nodes;

  int num_demands = 0;
};

/// Discrete-time LTI water network
///
///   x+ = A x + B u + Gd d,    0 = E u + Ed d,
///
/// together with state/input bounds, safety volumes and production prices.
/// Matrices are dense; E and Ed have zero rows when there are no mixing nodes.
struct NetworkModel {
  Matrix A, B, Gd, E, Ed;
  Vector x_min, x_max, x_safe;
  Vector u_min, u_max;
  Vector alpha0;
  double dt = 0.0;

  std::vector<std::string> tank_names;
  std::vector<std::string> flow_names;
  std::vector<std::string> demand_names;

  int num_states() const { return static_cast<int>(A.rows()); }
  int num_inputs() const { return static_cast<int>(B.cols()); }
  int num_demands() const { return static_cast<int>(Gd.cols()); }
  int num_mixing_nodes() const { return static_cast<int>(E.rows()); }

  /// Throws DimensionError (shape) or std::invalid_argument (bounds).
  void validate() const;
};

/// Builds the integrator model of the network with sampling time `dt`.
NetworkModel build_lti(const NetworkTopology& topology, double dt);

/// A x + B u + Gd d, without clamping.
Vector step_dynamics(const NetworkModel& model, const Vector& x, const Vector& u,
                     const Vector& d);

/// E u + Ed d; zero iff mass balance holds at every mixing node.
Vector coupling_residual(const NetworkModel& model, const Vector& u, const Vector& d);

}  // namespace ssmpc
