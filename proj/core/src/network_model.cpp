#include "ssmpc/network_model.hpp"

#include <algorithm>
#include <sstream>

namespace ssmpc {
namespace {

void check_index(int index, int count, const std::string& what) {
  if (index < 0 || index >= count) {
    std::ostringstream msg;
    msg << what << " index " << index << " out of range [0, " << count << ")";
    throw TopologyError(msg.str());
  }
}

void check_vector(const Vector& v, int n, const char* name) {
  if (v.size() != n) {
    std::ostringstream msg;
    msg << name << " has length " << v.size() << ", expected " << n;
    throw DimensionError(msg.str());
  }
}

void check_matrix(const Matrix& m, int rows, int cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream msg;
    msg << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x"
        << cols;
    throw DimensionError(msg.str());
  }
}

}  // namespace

void NetworkModel::validate() const {
  const int nx = num_states();
  const int nu = num_inputs();
  const int nd = num_demands();
  const int ns = num_mixing_nodes();
  check_matrix(A, nx, nx, "A");
  check_matrix(B, nx, nu, "B");
  check_matrix(Gd, nx, nd, "Gd");
  check_matrix(E, ns, nu, "E");
  check_matrix(Ed, ns, nd, "Ed");
  check_vector(x_min, nx, "xmin");
  check_vector(x_max, nx, "xmax");
  check_vector(x_safe, nx, "xsafe");
  check_vector(u_min, nu, "umin");
  check_vector(u_max, nu, "umax");
  check_vector(alpha0, nu, "alpha0");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if ((x_min.array() > x_max.array()).any())
    throw std::invalid_argument("xmin exceeds xmax for some tank");
  if ((u_min.array() > u_max.array()).any())
    throw std::invalid_argument("umin exceeds umax for some flow");
}

NetworkModel build_lti(const NetworkTopology& topology, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");

  const int nx = static_cast<int>(topology.tanks.size());
  const int nu = static_cast<int>(topology.flows.size());
  const int nd = topology.num_demands;
  const int ns = static_cast<int>(topology.mixing_nodes.size());
  if (nx < 1 || nu < 1 || nd < 1)
    throw TopologyError("a network needs at least one tank, one controlled flow and one demand");

  std::vector<bool> flow_used(nu, false);
  std::vector<bool> demand_used(nd, false);

  NetworkModel model;
  model.dt = dt;
  model.A = Matrix::Identity(nx, nx);
  model.B = Matrix::Zero(nx, nu);
  model.Gd = Matrix::Zero(nx, nd);
  model.E = Matrix::Zero(ns, nu);
  model.Ed = Matrix::Zero(ns, nd);
  model.x_min.resize(nx);
  model.x_max.resize(nx);
  model.x_safe.resize(nx);

  for (int j = 0; j < nx; ++j) {
    const Tank& tank = topology.tanks[j];
    if (!(tank.v_min <= tank.v_safe && tank.v_safe <= tank.v_max)) {
      throw TopologyError("tank " + std::to_string(j) + ": need v_min <= v_safe <= v_max");
    }
    model.x_min[j] = tank.v_min;
    model.x_max[j] = tank.v_max;
    model.x_safe[j] = tank.v_safe;

    for (int i : tank.inflows) {
      check_index(i, nu, "flow");
      if (std::find(tank.outflows.begin(), tank.outflows.end(), i) != tank.outflows.end()) {
        throw TopologyError("flow " + std::to_string(i) +
                            " is both an inflow and an outflow of tank " + std::to_string(j));
      }
      model.B(j, i) += dt;
      flow_used[i] = true;
    }
    for (int i : tank.outflows) {
      check_index(i, nu, "flow");
      model.B(j, i) -= dt;
      flow_used[i] = true;
    }
    for (int i : tank.demands) {
      check_index(i, nd, "demand");
      model.Gd(j, i) -= dt;
      demand_used[i] = true;
    }
  }

  for (int s = 0; s < ns; ++s) {
    const MixingNode& node = topology.mixing_nodes[s];
    if (node.incoming.empty() || node.outgoing.empty()) {
      throw TopologyError("mixing node " + std::to_string(s) +
                          " needs at least one incoming and one outgoing flow");
    }
    auto add = [&](const FlowRef& ref, double sign) {
      if (ref.kind == FlowRef::Kind::Controlled) {
        check_index(ref.index, nu, "flow");
        model.E(s, ref.index) += sign;
        flow_used[ref.index] = true;
      } else {
        check_index(ref.index, nd, "demand");
        model.Ed(s, ref.index) += sign;
        demand_used[ref.index] = true;
      }
    };
    for (const FlowRef& ref : node.incoming) add(ref, 1.0);
    for (const FlowRef& ref : node.outgoing) add(ref, -1.0);
  }

  for (int i = 0; i < nu; ++i) {
    if (!flow_used[i]) throw TopologyError("flow " + std::to_string(i) + " is not connected");
  }
  for (int i = 0; i < nd; ++i) {
    if (!demand_used[i]) throw TopologyError("demand " + std::to_string(i) + " is not connected");
  }

  model.u_min = Vector::Zero(nu);
  model.u_max.resize(nu);
  model.alpha0.resize(nu);
  for (int i = 0; i < nu; ++i) {
    const ControlledFlow& flow = topology.flows[i];
    if (!(flow.q_max > 0.0)) throw TopologyError("flow " + std::to_string(i) + ": q_max must be > 0");
    model.u_max[i] = flow.q_max;
    model.alpha0[i] = flow.alpha0;
    model.flow_names.push_back(flow.name);
  }
  for (const Tank& tank : topology.tanks) model.tank_names.push_back(tank.name);
  model.demand_names = topology.demand_names;
  model.demand_names.resize(nd);
  return model;
}

Vector step_dynamics(const NetworkModel& model, const Vector& x, const Vector& u,
                     const Vector& d) {
  if (x.size() != model.num_states() || u.size() != model.num_inputs() ||
      d.size() != model.num_demands()) {
    throw DimensionError("step_dynamics: dimension mismatch");
  }
  return model.A * x + model.B * u + model.Gd * d;
}

Vector coupling_residual(const NetworkModel& model, const Vector& u, const Vector& d) {
  if (u.size() != model.num_inputs() || d.size() != model.num_demands()) {
    throw DimensionError("coupling_residual: dimension mismatch");
  }
  return model.E * u + model.Ed * d;
}

}  // namespace ssmpc
