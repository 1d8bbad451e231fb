#include "ssmpc/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "ssmpc/dual_apg_solver.hpp"
#include "ssmpc/smpc_problem.hpp"

namespace ssmpc {
namespace {

using json = nlohmann::json;

json rows_to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

struct SyntheticSeries {
  Matrix demand;
  Matrix price;
};

SyntheticSeries generate_series(const SyntheticProfile& p, int rows, std::uint64_t seed) {
  const Eigen::Index nd = p.base_demand.size();
  const Eigen::Index nu = p.energy_intensity.size();
  if (nd == 0 || nu == 0) throw std::invalid_argument("synthetic profile needs demand and price dimensions");
  if (p.period < 1) throw std::invalid_argument("synthetic profile period must be >= 1");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  SyntheticSeries s{Matrix(rows, nd), Matrix(rows, nu)};
  Vector demand_noise = Vector::Zero(nd);
  double price_noise = 0.0;
  const double demand_scale = p.demand_noise * std::sqrt(1.0 - p.demand_correlation * p.demand_correlation);
  const double price_scale = p.price_noise * std::sqrt(1.0 - p.price_correlation * p.price_correlation);
  for (int t = 0; t < rows; ++t) {
    const double phase = 2.0 * std::numbers::pi * (t % p.period) / p.period;
    // Demand peaks in the morning and evening; prices peak in the afternoon.
    const double demand_shape = 0.6 * std::sin(phase - 2.0) + 0.4 * std::sin(2.0 * phase - 1.0);
    const double price_shape = std::sin(phase - 2.6);
    for (Eigen::Index i = 0; i < nd; ++i) {
      demand_noise[i] = p.demand_correlation * demand_noise[i] + demand_scale * normal(rng);
      s.demand(t, i) = std::max(0.0, p.base_demand[i] * (1.0 + p.demand_amplitude * demand_shape +
                                                         demand_noise[i]));
    }
    price_noise = p.price_correlation * price_noise + price_scale * normal(rng);
    double price = p.price_base * (1.0 + p.price_amplitude * price_shape + price_noise);
    if (uniform(rng) < p.spike_probability) price += p.spike_size * p.price_base;
    price = std::max(0.0, price);
    s.price.row(t) = (price * p.energy_intensity).transpose();
  }
  return s;
}

}  // namespace

SimulationLog run_closed_loop(const NetworkModel& model, const ScenarioTree& tree_template,
                              const Forecaster& forecaster, const Realizations& realizations,
                              const SimulationConfig& config) {
  model.validate();
  if (config.steps < 1) throw std::invalid_argument("simulation needs at least one step");
  const int horizon = config.controller.horizon;
  if (tree_template.horizon() != horizon) {
    throw std::invalid_argument("tree horizon " + std::to_string(tree_template.horizon()) +
                                " does not match controller horizon " + std::to_string(horizon));
  }
  if (!tree_template.has_errors()) throw std::invalid_argument("tree template carries no error values");
  const int nx = model.num_states();
  const int nu = model.num_inputs();
  const int nd = model.num_demands();
  if (realizations.demand.cols() != nd || realizations.price.cols() != nu) {
    throw DimensionError("realizations are " + std::to_string(realizations.demand.cols()) + " demands and " +
                         std::to_string(realizations.price.cols()) + " prices, network has " +
                         std::to_string(nd) + " and " + std::to_string(nu));
  }
  const Eigen::Index needed = realizations.offset + 1 + config.steps;
  if (realizations.demand.rows() < needed || realizations.price.rows() < needed) {
    throw std::invalid_argument("realizations cover " + std::to_string(realizations.demand.rows()) +
                                " rows, the run needs " + std::to_string(needed));
  }

  const ScenarioTree base = config.nominal_prices_only ? tree_template.without_price_errors() : tree_template;
  const CostWeights weights = config.controller.weights(nu);
  const SolverConfig solver_config = config.controller.solver_config(config.threads);

  Vector x = config.initial_state ? *config.initial_state : Vector(0.5 * (model.x_safe + model.x_max));
  Vector u_prev = config.previous_input ? *config.previous_input : Vector(Vector::Zero(nu));
  if (x.size() != nx) throw DimensionError("initial state has wrong size");
  if (u_prev.size() != nu) throw DimensionError("previous input has wrong size");

  SimulationLog log;
  log.alpha0 = model.alpha0;
  log.x_safe = model.x_safe;
  log.states = Matrix(config.steps + 1, nx);
  log.inputs = Matrix(config.steps, nu);
  log.demands = Matrix(config.steps, nd);
  log.prices = Matrix(config.steps, nu);
  log.states.row(0) = x.transpose();

  FactorCache cache;
  bool have_cache = false;
  for (int k = 0; k < config.steps; ++k) {
    SolverResult result;
    double seconds = 0.0;
    try {
      const ForecastSeries forecast = forecaster.forecast(k, horizon);
      ScenarioTree tree = attach_forecast(base, forecast.demand, forecast.price);
      const auto start = std::chrono::steady_clock::now();
      const ProblemInstance problem = assemble_problem(model, std::move(tree), weights, x, u_prev, k);
      cache = factor_step(problem, have_cache ? &cache : nullptr);
      have_cache = true;
      result = solve(problem, solver_config, &cache);
      seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } catch (const std::exception& e) {
      throw SimulationError(k, e.what());
    }

    const Vector d = realizations.demand.row(realizations.offset + 1 + k).transpose();
    const Vector alpha = realizations.price.row(realizations.offset + 1 + k).transpose();
    const Vector& u = result.u0;
    x = step_dynamics(model, x, u, d);
    u_prev = u;

    log.inputs.row(k) = u.transpose();
    log.demands.row(k) = d.transpose();
    log.prices.row(k) = alpha.transpose();
    log.states.row(k + 1) = x.transpose();
    log.solve_seconds.push_back(seconds);
    log.iterations.push_back(result.iterations);
    log.primal_residual.push_back(result.primal_residual);
    log.dual_change.push_back(result.dual_change);
    log.termination.push_back(to_string(result.termination));
  }
  return log;
}

double kpi_economic(const SimulationLog& log) {
  if (log.steps() == 0) throw std::invalid_argument("kpi_economic: empty log");
  double total = 0.0;
  for (int k = 0; k < log.steps(); ++k) {
    total += (log.alpha0 + log.prices.row(k).transpose()).dot(log.inputs.row(k).transpose());
  }
  return total / log.steps();
}

double kpi_safety(const SimulationLog& log) {
  if (log.steps() == 0) throw std::invalid_argument("kpi_safety: empty log");
  double total = 0.0;
  for (Eigen::Index k = 1; k < log.states.rows(); ++k) {
    total += (log.x_safe - log.states.row(k).transpose()).cwiseMax(0.0).sum();
  }
  return total;
}

double kpi_complexity(const SimulationLog& log) {
  if (log.solve_seconds.empty()) throw std::invalid_argument("kpi_complexity: empty log");
  return *std::max_element(log.solve_seconds.begin(), log.solve_seconds.end());
}

KpiSummary summarize(const SimulationLog& log) {
  return {kpi_economic(log), kpi_safety(log), kpi_complexity(log)};
}

Realizations synthetic_realizations(const SyntheticProfile& profile, int history, int steps,
                                    std::uint64_t seed) {
  if (history < profile.period) throw std::invalid_argument("history must cover one period");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  SyntheticSeries s = generate_series(profile, history + steps, seed);
  Realizations r;
  r.period = profile.period;
  r.offset = history - 1;
  r.demand = std::move(s.demand);
  r.price = std::move(s.price);
  return r;
}

ScenarioFan persistence_error_fan(const SyntheticProfile& profile, int horizon, int count,
                                  std::uint64_t seed) {
  if (horizon < 1 || count < 1) throw std::invalid_argument("horizon and count must be >= 1");
  const int span = 20 * profile.period;
  const int rows = profile.period + span + horizon;
  const SyntheticSeries s = generate_series(profile, rows, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> pick(profile.period - 1, profile.period - 1 + span);

  ScenarioFan fan;
  fan.demand_dim = static_cast<int>(s.demand.cols());
  fan.price_dim = static_cast<int>(s.price.cols());
  for (int i = 0; i < count; ++i) {
    const int k = pick(rng);
    const ForecastSeries f = seasonal_persistence_forecast(s.demand.topRows(k + 1), s.price.topRows(k + 1),
                                                           horizon, profile.period);
    Matrix e(horizon, fan.demand_dim + fan.price_dim);
    e.leftCols(fan.demand_dim) = s.demand.middleRows(k + 1, horizon) - f.demand;
    e.rightCols(fan.price_dim) = s.price.middleRows(k + 1, horizon) - f.price;
    fan.scenarios.push_back(std::move(e));
  }
  return fan;
}

void strip_timing(SimulationLog& log) {
  std::fill(log.solve_seconds.begin(), log.solve_seconds.end(), 0.0);
}

std::string dump_simulation_log(const SimulationLog& log) {
  json j = json::object();
  j["schemaVersion"] = kSchemaVersion;
  j["steps"] = log.steps();
  j["alpha0"] = vector_to_json(log.alpha0);
  j["xsafe"] = vector_to_json(log.x_safe);
  j["states"] = rows_to_json(log.states);
  j["inputs"] = rows_to_json(log.inputs);
  j["demands"] = rows_to_json(log.demands);
  j["prices"] = rows_to_json(log.prices);
  j["solveSeconds"] = log.solve_seconds;
  j["iterations"] = log.iterations;
  j["primalResidual"] = log.primal_residual;
  j["dualChange"] = log.dual_change;
  j["terminationReason"] = log.termination;
  return j.dump(2) + "\n";
}

std::string dump_kpis(const KpiSummary& kpis) {
  json j = json::object();
  j["schemaVersion"] = kSchemaVersion;
  j["kpiE"] = kpis.economic;
  j["kpiS"] = kpis.safety;
  j["kpiTauSeconds"] = kpis.complexity_seconds;
  return j.dump(2) + "\n";
}

KpiSummary parse_kpis(std::string_view text, std::string_view origin) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(origin) + ": parse error at byte " + std::to_string(e.byte));
  }
  KpiSummary k;
  for (const char* key : {"kpiE", "kpiS", "kpiTauSeconds"}) {
    if (!j.contains(key) || !j[key].is_number()) {
      throw ParseError(std::string(origin) + ": /" + key + ": expected a number");
    }
  }
  k.economic = j["kpiE"].get<double>();
  k.safety = j["kpiS"].get<double>();
  k.complexity_seconds = j["kpiTauSeconds"].get<double>();
  return k;
}

}  // namespace ssmpc
