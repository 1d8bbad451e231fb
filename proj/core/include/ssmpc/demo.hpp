#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "ssmpc/io.hpp"
#include "ssmpc/simulator.hpp"

namespace ssmpc {

enum class DemoKind { Tank1, Net3, Net10 };

/// "tank1", "net3" or "net10"; anything else throws std::invalid_argument.
DemoKind parse_demo_kind(std::string_view name);
std::string_view to_string(DemoKind kind);

/// Bundled test networks: one tank with one pump; three tanks around one
/// mixing node; ten tanks with four mixing nodes.
NetworkTopology demo_topology(DemoKind kind);
NetworkModel demo_network(DemoKind kind);
SyntheticProfile demo_profile(DemoKind kind);
std::vector<int> demo_branching(DemoKind kind);

struct DemoSet {
  NetworkModel network;
  ScenarioTree tree;  // error tree
  ForecastSeries forecast;
  ControllerConfig config;
  ControllerState state;
  Realizations realizations;
  ScenarioFan fan;
};

struct DemoOptions {
  std::uint64_t seed = 1;
  int steps = 168;
  int fan_size = 1000;
  std::vector<int> branching;  // empty: demo_branching(kind)
};

DemoSet make_demo(DemoKind kind, const DemoOptions& options = {});

/// network.json, scenarioTree.json, forecaster.json, controllerconfig.json,
/// state.json, realizations.json and fan.json under `dir`.
void write_demo(const DemoSet& demo, const std::filesystem::path& dir);

}  // namespace ssmpc
