#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include "ssmpc/dual_apg_solver.hpp"
#include "ssmpc/forecaster.hpp"
#include "ssmpc/network_model.hpp"
#include "ssmpc/scenario_tree.hpp"
#include "ssmpc/smpc_problem.hpp"

namespace ssmpc {

inline constexpr int kSchemaVersion = 1;

/// Malformed document. The message names the document and a JSON pointer
/// (or the byte offset for syntax errors).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// controllerconfig.json
struct ControllerConfig {
  int horizon = 24;
  double w_alpha = 1e6;
  std::variant<double, Matrix> w_u = 1.3e7;  // scalar means scalar * I
  double w_s = 1e5;
  double w_x = 1e8;
  int max_iterations = 1000;
  double tolerance = 5e-2;
  std::optional<double> gamma;

  CostWeights weights(int num_inputs) const;
  SolverConfig solver_config(int threads = 1) const;
};

/// Measured state and last applied input (the state file of `solve`).
struct ControllerState {
  Vector x;
  Vector u_prev;
  int k = 0;
};

/// controlOutput.json
struct ControlOutput {
  Vector u0;
  int iterations = 0;
  std::string termination_reason;
  double primal_residual = 0.0;
  double dual_change = 0.0;
  double solve_time_ms = 0.0;

  static ControlOutput from_result(const SolverResult& result);
};

/// Realized disturbances for closed-loop runs. Rows [0, offset] are history
/// observed up to step 0; row offset + 1 + k drives the transition from
/// x_k to x_{k+1}.
struct Realizations {
  int period = 24;
  int offset = 24;
  Matrix demand;  // rows x n_d
  Matrix price;   // rows x n_u (alpha_k, added to alpha0)
};

NetworkModel parse_network(std::string_view text, std::string_view origin = "network.json");
ScenarioTree parse_tree(std::string_view text, std::string_view origin = "scenarioTree.json");
ForecastSeries parse_forecast(std::string_view text, std::string_view origin = "forecaster.json");
ControllerConfig parse_controller_config(std::string_view text,
                                         std::string_view origin = "controllerconfig.json");
ControllerState parse_state(std::string_view text, std::string_view origin = "state.json");
ControlOutput parse_control_output(std::string_view text,
                                   std::string_view origin = "controlOutput.json");
ScenarioFan parse_fan(std::string_view text, std::string_view origin = "fan.json");
Realizations parse_realizations(std::string_view text,
                                std::string_view origin = "realizations.json");

std::string dump_network(const NetworkModel& model);
std::string dump_tree(const ScenarioTree& tree);
std::string dump_forecast(const ForecastSeries& forecast);
std::string dump_controller_config(const ControllerConfig& config);
std::string dump_state(const ControllerState& state);
std::string dump_control_output(const ControlOutput& output);
std::string dump_fan(const ScenarioFan& fan);
std::string dump_realizations(const Realizations& realizations);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

NetworkModel load_network(const std::filesystem::path& path);
ScenarioTree load_tree(const std::filesystem::path& path);
ForecastSeries load_forecast(const std::filesystem::path& path);
ControllerConfig load_controller_config(const std::filesystem::path& path);
ControllerState load_state(const std::filesystem::path& path);
ControlOutput load_control_output(const std::filesystem::path& path);
ScenarioFan load_fan(const std::filesystem::path& path);
Realizations load_realizations(const std::filesystem::path& path);

void save_network(const NetworkModel& model, const std::filesystem::path& path);
void save_tree(const ScenarioTree& tree, const std::filesystem::path& path);
void save_forecast(const ForecastSeries& forecast, const std::filesystem::path& path);
void save_controller_config(const ControllerConfig& config, const std::filesystem::path& path);
void save_state(const ControllerState& state, const std::filesystem::path& path);
void save_control_output(const ControlOutput& output, const std::filesystem::path& path);
void save_fan(const ScenarioFan& fan, const std::filesystem::path& path);
void save_realizations(const Realizations& realizations, const std::filesystem::path& path);

}  // namespace ssmpc
