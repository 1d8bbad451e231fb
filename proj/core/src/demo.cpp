#include "ssmpc/demo.hpp"

#include <stdexcept>
#include <string>

namespace ssmpc {
namespace {

// Scaled units: volumes in 10^3 m^3, flows in 10^3 m^3 per step.
constexpr double kStep = 1.0;

int add_flow(NetworkTopology& t, ActuatorKind kind, double q_max, double alpha0, std::string name) {
  t.flows.push_back({kind, q_max, alpha0, std::move(name)});
  return static_cast<int>(t.flows.size()) - 1;
}

int add_tank(NetworkTopology& t, double v_max, double v_safe, std::string name) {
  Tank tank;
  tank.v_min = 0.0;
  tank.v_max = v_max;
  tank.v_safe = v_safe;
  tank.name = std::move(name);
  t.tanks.push_back(std::move(tank));
  return static_cast<int>(t.tanks.size()) - 1;
}

int add_demand(NetworkTopology& t, std::string name) {
  t.demand_names.push_back(std::move(name));
  return t.num_demands++;
}

void connect(NetworkTopology& t, int from_tank, int flow, int to_tank) {
  if (from_tank >= 0) t.tanks[from_tank].outflows.push_back(flow);
  if (to_tank >= 0) t.tanks[to_tank].inflows.push_back(flow);
}

NetworkTopology tank1() {
  NetworkTopology t;
  const int tank = add_tank(t, 20.0, 6.0, "T0");
  const int pump = add_flow(t, ActuatorKind::Pump, 3.0, 0.05, "P0");
  connect(t, -1, pump, tank);
  t.tanks[tank].demands.push_back(add_demand(t, "D0"));
  return t;
}

NetworkTopology net3() {
  NetworkTopology t;
  const int t0 = add_tank(t, 24.0, 8.0, "T0");
  const int t1 = add_tank(t, 16.0, 5.0, "T1");
  const int t2 = add_tank(t, 12.0, 4.0, "T2");
  const int p0 = add_flow(t, ActuatorKind::Pump, 3.0, 0.04, "P0");
  const int p1 = add_flow(t, ActuatorKind::Pump, 3.5, 0.06, "P1");
  const int v1 = add_flow(t, ActuatorKind::Valve, 2.4, 0.0, "V1");
  const int v2 = add_flow(t, ActuatorKind::Valve, 2.4, 0.0, "V2");
  const int v01 = add_flow(t, ActuatorKind::Valve, 1.5, 0.0, "V01");
  connect(t, -1, p0, t0);
  connect(t, -1, v1, t1);
  connect(t, -1, v2, t2);
  connect(t, t0, v01, t1);
  for (int j = 0; j < 3; ++j) t.tanks[j].demands.push_back(add_demand(t, "D" + std::to_string(j)));
  const int dm = add_demand(t, "DM");
  t.mixing_nodes.push_back({{FlowRef::controlled(p1)},
                            {FlowRef::controlled(v1), FlowRef::controlled(v2), FlowRef::demand(dm)},
                            "M0"});
  return t;
}

NetworkTopology net10() {
  NetworkTopology t;
  const double v_max[10] = {30, 23, 27, 20, 22, 33, 17, 18, 15, 17};
  for (int j = 0; j < 10; ++j) add_tank(t, v_max[j], 0.3 * v_max[j], "T" + std::to_string(j));
  for (int j = 0; j < 10; ++j) t.tanks[j].demands.push_back(add_demand(t, "D" + std::to_string(j)));
  const int dm1 = add_demand(t, "DM1");
  const int dm3 = add_demand(t, "DM3");

  auto pump = [&](double q, double a, const std::string& n) { return add_flow(t, ActuatorKind::Pump, q, a, n); };
  auto valve = [&](double q, const std::string& n) { return add_flow(t, ActuatorKind::Valve, q, 0.0, n); };

  // M0 splits the first source over T0..T2.
  const int p0 = pump(6.0, 0.035, "P0");
  const int m00 = valve(3.0, "V0-0");
  const int m01 = valve(3.0, "V0-1");
  const int m02 = valve(3.0, "V0-2");
  connect(t, -1, m00, 0);
  connect(t, -1, m01, 1);
  connect(t, -1, m02, 2);
  t.mixing_nodes.push_back({{FlowRef::controlled(p0)},
                            {FlowRef::controlled(m00), FlowRef::controlled(m01), FlowRef::controlled(m02)},
                            "M0"});

  // M1 feeds T3, T4 and a direct consumer.
  const int p1 = pump(4.8, 0.045, "P1");
  const int m13 = valve(3.0, "V1-3");
  const int m14 = valve(3.0, "V1-4");
  connect(t, -1, m13, 3);
  connect(t, -1, m14, 4);
  t.mixing_nodes.push_back({{FlowRef::controlled(p1)},
                            {FlowRef::controlled(m13), FlowRef::controlled(m14), FlowRef::demand(dm1)},
                            "M1"});

  // T5 is filled directly and lifts water to M2 (T6, T7).
  const int p2 = pump(4.5, 0.03, "P2");
  connect(t, -1, p2, 5);
  const int p3 = pump(3.6, 0.01, "P3");
  connect(t, 5, p3, -1);
  const int m26 = valve(2.4, "V2-6");
  const int m27 = valve(2.4, "V2-7");
  connect(t, -1, m26, 6);
  connect(t, -1, m27, 7);
  t.mixing_nodes.push_back({{FlowRef::controlled(p3)},
                            {FlowRef::controlled(m26), FlowRef::controlled(m27)},
                            "M2"});

  // M3 blends a gravity draw from T2 with a fourth source.
  const int g23 = valve(1.8, "G2-M3");
  connect(t, 2, g23, -1);
  const int p4 = pump(3.6, 0.05, "P4");
  const int m38 = valve(2.4, "V3-8");
  const int m39 = valve(2.4, "V3-9");
  connect(t, -1, m38, 8);
  connect(t, -1, m39, 9);
  t.mixing_nodes.push_back({{FlowRef::controlled(g23), FlowRef::controlled(p4)},
                            {FlowRef::controlled(m38), FlowRef::controlled(m39), FlowRef::demand(dm3)},
                            "M3"});

  // Tank-to-tank transfers.
  const int transfers[][2] = {{0, 3}, {1, 4}, {3, 6}, {4, 7}, {6, 8}, {7, 9}, {5, 2}};
  for (const auto& tr : transfers) {
    const int v = valve(1.2, "V" + std::to_string(tr[0]) + std::to_string(tr[1]));
    connect(t, tr[0], v, tr[1]);
  }
  return t;
}

}  // namespace

DemoKind parse_demo_kind(std::string_view name) {
  if (name == "tank1") return DemoKind::Tank1;
  if (name == "net3") return DemoKind::Net3;
  if (name == "net10") return DemoKind::Net10;
  throw std::invalid_argument("unknown demo kind '" + std::string(name) + "' (expected tank1, net3 or net10)");
}

std::string_view to_string(DemoKind kind) {
  switch (kind) {
    case DemoKind::Tank1: return "tank1";
    case DemoKind::Net3: return "net3";
    case DemoKind::Net10: return "net10";
  }
  return "unknown";
}

NetworkTopology demo_topology(DemoKind kind) {
  switch (kind) {
    case DemoKind::Tank1: return tank1();
    case DemoKind::Net3: return net3();
    case DemoKind::Net10: return net10();
  }
  throw std::invalid_argument("unknown demo kind");
}

NetworkModel demo_network(DemoKind kind) { return build_lti(demo_topology(kind), kStep); }

SyntheticProfile demo_profile(DemoKind kind) {
  const NetworkTopology topo = demo_topology(kind);
  SyntheticProfile p;
  p.energy_intensity = Vector::Zero(static_cast<Eigen::Index>(topo.flows.size()));
  for (std::size_t i = 0; i < topo.flows.size(); ++i) {
    if (topo.flows[i].kind == ActuatorKind::Pump) p.energy_intensity[static_cast<Eigen::Index>(i)] = 0.04;
  }
  switch (kind) {
    case DemoKind::Tank1:
      p.base_demand = Vector::Constant(1, 1.0);
      break;
    case DemoKind::Net3:
      p.base_demand = (Vector(4) << 0.8, 0.6, 0.45, 0.3).finished();
      break;
    case DemoKind::Net10:
      p.base_demand = Vector::Constant(12, 0.36);
      break;
  }
  return p;
}

std::vector<int> demo_branching(DemoKind kind) {
  switch (kind) {
    case DemoKind::Tank1: return {2, 2};
    case DemoKind::Net3: return {3, 2, 2};
    case DemoKind::Net10: return {4, 3, 2, 2};
  }
  return {};
}

DemoSet make_demo(DemoKind kind, const DemoOptions& options) {
  DemoSet demo;
  demo.network = demo_network(kind);
  const SyntheticProfile profile = demo_profile(kind);
  demo.config = ControllerConfig{};
  const int horizon = demo.config.horizon;

  demo.fan = persistence_error_fan(profile, horizon, options.fan_size, 2 * options.seed + 1);
  demo.tree = reduce_fan_to_tree(demo.fan, options.branching.empty() ? demo_branching(kind) : options.branching);
  demo.realizations = synthetic_realizations(profile, 2 * profile.period, options.steps, options.seed);
  const PersistenceForecaster forecaster(demo.realizations.demand, demo.realizations.price,
                                         demo.realizations.offset, demo.realizations.period);
  demo.forecast = forecaster.forecast(0, horizon);
  demo.state.x = 0.5 * (demo.network.x_safe + demo.network.x_max);
  demo.state.u_prev = Vector::Zero(demo.network.num_inputs());
  demo.state.k = 0;
  return demo;
}

void write_demo(const DemoSet& demo, const std::filesystem::path& dir) {
  save_network(demo.network, dir / "network.json");
  save_tree(demo.tree, dir / "scenarioTree.json");
  save_forecast(demo.forecast, dir / "forecaster.json");
  save_controller_config(demo.config, dir / "controllerconfig.json");
  save_state(demo.state, dir / "state.json");
  save_realizations(demo.realizations, dir / "realizations.json");
  save_fan(demo.fan, dir / "fan.json");
}

}  // namespace ssmpc
