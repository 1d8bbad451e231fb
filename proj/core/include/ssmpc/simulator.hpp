#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssmpc/forecaster.hpp"
#include "ssmpc/io.hpp"
#include "ssmpc/network_model.hpp"
#include "ssmpc/scenario_tree.hpp"

namespace ssmpc {

class SimulationError : public std::runtime_error {
 public:
  SimulationError(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct SimulationConfig {
  int steps = 168;
  ControllerConfig controller;
  bool nominal_prices_only = false;
  int threads = 1;
  std::optional<Vector> initial_state;   // default: midpoint of [x_safe, x_max]
  std::optional<Vector> previous_input;  // default: zero
};

/// Row k of states is x_k (steps + 1 rows); row k of the other matrices
/// belongs to step k.
struct SimulationLog {
  Vector alpha0;
  Vector x_safe;
  Matrix states;
  Matrix inputs;
  Matrix demands;
  Matrix prices;
  std::vector<double> solve_seconds;
  std::vector<int> iterations;
  std::vector<double> primal_residual;
  std::vector<double> dual_change;
  std::vector<std::string> termination;

  int steps() const { return static_cast<int>(inputs.rows()); }
};

/// Receding-horizon loop. At step k the forecast is attached to the error
/// tree (price errors zeroed when nominal_prices_only), the instance is solved
/// from (x_k, u_{k-1}) and u_0 is applied with the realized disturbance.
SimulationLog run_closed_loop(const NetworkModel& model, const ScenarioTree& tree_template,
                              const Forecaster& forecaster, const Realizations& realizations,
                              const SimulationConfig& config);

/// (1/H_s) sum_k (alpha0 + alpha_k)' u_k
double kpi_economic(const SimulationLog& log);
/// sum_{k>=1} || max(x_s - x_k, 0) ||_1 over the states reached by the loop.
double kpi_safety(const SimulationLog& log);
/// max_k tau_k
double kpi_complexity(const SimulationLog& log);

struct KpiSummary {
  double economic = 0.0;
  double safety = 0.0;
  double complexity_seconds = 0.0;
};

KpiSummary summarize(const SimulationLog& log);

/// Shape of the synthetic disturbance generator.
struct SyntheticProfile {
  int period = 24;
  Vector base_demand;         // n_d, mean demand per sector
  double demand_amplitude = 0.4;   // relative diurnal swing
  double demand_noise = 0.05;      // relative AR(1) innovation
  double demand_correlation = 0.8;
  Vector energy_intensity;    // n_u, price sensitivity of each flow
  double price_base = 1.0;
  double price_amplitude = 0.5;
  double price_noise = 0.1;
  double price_correlation = 0.7;
  double spike_probability = 0.05;
  double spike_size = 2.0;
};

/// Seeded realizations covering `steps` closed-loop steps after `history`
/// rows of history (offset = history - 1).
Realizations synthetic_realizations(const SyntheticProfile& profile, int history, int steps,
                                    std::uint64_t seed);

/// Equally weighted error samples of the seasonal persistence forecast,
/// taken at `count` random times of a fresh synthetic series.
ScenarioFan persistence_error_fan(const SyntheticProfile& profile, int horizon, int count,
                                  std::uint64_t seed);

/// Zeroes every timing field (for byte-reproducible output).
void strip_timing(SimulationLog& log);

std::string dump_simulation_log(const SimulationLog& log);
std::string dump_kpis(const KpiSummary& kpis);
KpiSummary parse_kpis(std::string_view text, std::string_view origin = "kpi.json");

}  // namespace ssmpc
