// ssmpc: command-line front end for the scenario-based stochastic MPC solver.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssmpc/demo.hpp"
#include "ssmpc/dual_apg_solver.hpp"
#include "ssmpc/io.hpp"
#include "ssmpc/simulator.hpp"

namespace fs = std::filesystem;
using namespace ssmpc;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kSolverFailure = 2 };

struct Documents {
  std::string dir;
  std::string network;
  std::string tree;
  std::string forecast;
  std::string config;
  std::string state;
  std::string realizations;
  std::string fan;

  // Explicit path, else <dir>/<default_name> when that file exists.
  std::optional<fs::path> find(const std::string& explicit_path, const char* default_name) const {
    if (!explicit_path.empty()) return fs::path(explicit_path);
    if (!dir.empty() && fs::exists(fs::path(dir) / default_name)) return fs::path(dir) / default_name;
    return std::nullopt;
  }

  fs::path need(const std::string& explicit_path, const char* default_name, const char* flag) const {
    if (auto p = find(explicit_path, default_name)) return *p;
    throw std::invalid_argument(std::string("missing ") + default_name + " (pass " + flag + " or --dir)");
  }
};

struct Common {
  std::string out = ".";
  std::uint64_t seed = 1;
  int threads = 1;
  bool nominal_prices = false;
  bool reproducible = false;
};

void add_documents(CLI::App* cmd, Documents& docs, bool with_realizations, bool with_fan) {
  cmd->add_option("--dir", docs.dir, "Directory holding the default-named documents");
  cmd->add_option("--network", docs.network, "network.json");
  cmd->add_option("--tree", docs.tree, "scenarioTree.json");
  cmd->add_option("--forecast", docs.forecast, "forecaster.json");
  cmd->add_option("--config", docs.config, "controllerconfig.json");
  cmd->add_option("--state", docs.state, "State file with x, uPrev and k");
  if (with_realizations) cmd->add_option("--realizations", docs.realizations, "realizations.json");
  if (with_fan) cmd->add_option("--fan", docs.fan, "fan.json");
}

void add_common(CLI::App* cmd, Common& c, bool out, bool seed, bool threads, bool nominal) {
  if (out) cmd->add_option("--out", c.out, "Output directory");
  if (seed) cmd->add_option("--seed", c.seed, "Random seed");
  if (threads) cmd->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
  if (nominal) cmd->add_flag("--nominal-prices", c.nominal_prices, "Drop price branches from the tree");
}

std::vector<int> parse_branching(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int b = 0;
    try {
      b = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || b < 1) {
      throw std::invalid_argument("invalid branching '" + text + "' (expected e.g. 5,3,2)");
    }
    out.push_back(b);
  }
  if (out.empty()) throw std::invalid_argument("empty branching specification");
  return out;
}

// Cross-document checks; every problem is reported, none is fatal on its own.
std::vector<std::string> cross_check(const std::optional<NetworkModel>& net,
                                     const std::optional<ScenarioTree>& tree,
                                     const std::optional<ForecastSeries>& fc,
                                     const std::optional<ControllerConfig>& cfg,
                                     const std::optional<ControllerState>& st,
                                     const std::optional<Realizations>& re) {
  std::vector<std::string> issues;
  auto dims = [&](const std::string& what, long have, const std::string& other, long want) {
    if (have != want) {
      issues.push_back(what + " is " + std::to_string(have) + " but " + other + " is " + std::to_string(want));
    }
  };
  if (tree) {
    for (const auto& msg : validate_tree(*tree)) issues.push_back("scenarioTree.json: " + msg);
  }
  if (net && tree) {
    dims("scenarioTree.json demandDim n_d", tree->demand_dim(), "network.json n_d", net->num_demands());
    dims("scenarioTree.json priceDim n_u", tree->price_dim(), "network.json n_u", net->num_inputs());
  }
  if (net && fc) {
    dims("forecaster.json dHat columns n_d", fc->demand.cols(), "network.json n_d", net->num_demands());
    dims("forecaster.json alphaHat columns n_u", fc->price.cols(), "network.json n_u", net->num_inputs());
  }
  if (cfg && tree) dims("scenarioTree.json horizon", tree->horizon(), "controllerconfig.json horizon", cfg->horizon);
  if (cfg && fc) dims("forecaster.json horizon", fc->horizon(), "controllerconfig.json horizon", cfg->horizon);
  if (cfg && net) {
    if (const auto* m = std::get_if<Matrix>(&cfg->w_u)) {
      dims("controllerconfig.json Wu size", m->rows(), "network.json n_u", net->num_inputs());
    }
    try {
      cfg->weights(net->num_inputs()).validate(net->num_inputs());
    } catch (const std::exception& e) {
      issues.push_back(std::string("controllerconfig.json: ") + e.what());
    }
  }
  if (net && st) {
    dims("state x size N_t", st->x.size(), "network.json N_t", net->num_states());
    dims("state uPrev size n_u", st->u_prev.size(), "network.json n_u", net->num_inputs());
  }
  if (net && re) {
    dims("realizations.json demand columns n_d", re->demand.cols(), "network.json n_d", net->num_demands());
    dims("realizations.json price columns n_u", re->price.cols(), "network.json n_u", net->num_inputs());
  }
  return issues;
}

template <class T, class Loader>
std::optional<T> try_load(const std::optional<fs::path>& path, Loader load, std::vector<std::string>& errors) {
  if (!path) return std::nullopt;
  try {
    return load(*path);
  } catch (const std::exception& e) {
    errors.push_back(e.what());
    return std::nullopt;
  }
}

int cmd_validate(const Documents& docs) {
  std::vector<std::string> errors;
  const auto net = try_load<NetworkModel>(docs.find(docs.network, "network.json"), load_network, errors);
  const auto tree = try_load<ScenarioTree>(docs.find(docs.tree, "scenarioTree.json"), load_tree, errors);
  const auto fc = try_load<ForecastSeries>(docs.find(docs.forecast, "forecaster.json"), load_forecast, errors);
  const auto cfg = try_load<ControllerConfig>(docs.find(docs.config, "controllerconfig.json"),
                                              load_controller_config, errors);
  const auto st = try_load<ControllerState>(docs.find(docs.state, "state.json"), load_state, errors);
  const auto re = try_load<Realizations>(docs.find(docs.realizations, "realizations.json"),
                                         load_realizations, errors);
  const auto fan = try_load<ScenarioFan>(docs.find(docs.fan, "fan.json"), load_fan, errors);
  const int loaded = net.has_value() + tree.has_value() + fc.has_value() + cfg.has_value() + st.has_value() +
                     re.has_value() + fan.has_value();
  if (loaded == 0 && errors.empty()) {
    std::cerr << "validate: no documents given\n";
    return kInvalid;
  }
  for (const auto& msg : cross_check(net, tree, fc, cfg, st, re)) errors.push_back(msg);
  if (net && fan && (fan->demand_dim != net->num_demands() || fan->price_dim != net->num_inputs())) {
    errors.push_back("fan.json dims (" + std::to_string(fan->demand_dim) + ", " + std::to_string(fan->price_dim) +
                     ") do not match network.json (" + std::to_string(net->num_demands()) + ", " +
                     std::to_string(net->num_inputs()) + ")");
  }
  for (const auto& msg : errors) std::cerr << "error: " << msg << "\n";
  if (!errors.empty()) return kInvalid;
  std::cout << "ok: " << loaded << " document(s) valid\n";
  return kOk;
}

ScenarioTree attached_tree(const ScenarioTree& tree, const std::optional<ForecastSeries>& fc, bool nominal) {
  if (tree.has_errors()) {
    if (!fc) throw std::invalid_argument("scenario tree holds errors; a forecast is required");
    const ScenarioTree base = nominal ? tree.without_price_errors() : tree;
    return attach_forecast(base, fc->demand, fc->price);
  }
  if (!tree.is_attached()) throw std::invalid_argument("scenario tree has no values");
  return tree;
}

int cmd_solve(const Documents& docs, const Common& c, std::optional<double> tol, std::optional<int> max_iter) {
  NetworkModel net;
  ScenarioTree tree;
  ControllerConfig cfg;
  ControllerState st;
  std::optional<ForecastSeries> fc;
  try {
    net = load_network(docs.need(docs.network, "network.json", "--network"));
    tree = load_tree(docs.need(docs.tree, "scenarioTree.json", "--tree"));
    cfg = load_controller_config(docs.need(docs.config, "controllerconfig.json", "--config"));
    st = load_state(docs.need(docs.state, "state.json", "--state"));
    if (auto p = docs.find(docs.forecast, "forecaster.json")) fc = load_forecast(*p);
    const auto issues = cross_check(net, tree, fc, cfg, st, std::nullopt);
    if (!issues.empty()) throw std::invalid_argument(issues.front());
    if (tol) cfg.tolerance = *tol;
    if (max_iter) cfg.max_iterations = *max_iter;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }

  SolverResult result;
  try {
    const ProblemInstance problem = assemble_problem(net, attached_tree(tree, fc, c.nominal_prices),
                                                     cfg.weights(net.num_inputs()), st.x, st.u_prev, st.k);
    result = solve(problem, cfg.solver_config(c.threads));
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  }

  ControlOutput out = ControlOutput::from_result(result);
  if (c.reproducible) out.solve_time_ms = 0.0;
  save_control_output(out, fs::path(c.out) / "controlOutput.json");
  std::cout << "iters=" << out.iterations << " residual=" << std::setprecision(6) << out.primal_residual
            << " time_ms=" << std::fixed << std::setprecision(3) << out.solve_time_ms << "\n";
  return kOk;
}

int cmd_simulate(const Documents& docs, const Common& c, int steps, const std::string& demo, bool seed_given) {
  NetworkModel net;
  ScenarioTree tree;
  ControllerConfig cfg;
  Realizations re;
  SimulationConfig sim;
  try {
    net = load_network(docs.need(docs.network, "network.json", "--network"));
    tree = load_tree(docs.need(docs.tree, "scenarioTree.json", "--tree"));
    cfg = load_controller_config(docs.need(docs.config, "controllerconfig.json", "--config"));
    if (seed_given) {
      if (demo.empty()) throw std::invalid_argument("--seed needs --demo to pick the disturbance profile");
      const int rows = steps > 0 ? steps : 168;
      re = synthetic_realizations(demo_profile(parse_demo_kind(demo)), 48, rows, c.seed);
    } else {
      re = load_realizations(docs.need(docs.realizations, "realizations.json", "--realizations"));
    }
    std::optional<ControllerState> st;
    if (auto p = docs.find(docs.state, "state.json")) st = load_state(*p);
    const auto issues = cross_check(net, tree, std::nullopt, cfg, st, re);
    if (!issues.empty()) throw std::invalid_argument(issues.front());
    if (!tree.has_errors()) throw std::invalid_argument("simulate needs a tree with errorValues");

    sim.controller = cfg;
    sim.threads = c.threads;
    sim.nominal_prices_only = c.nominal_prices;
    const int available = static_cast<int>(re.demand.rows()) - re.offset - 1;
    sim.steps = steps > 0 ? steps : std::min(168, available);
    if (st) {
      sim.initial_state = st->x;
      sim.previous_input = st->u_prev;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }

  SimulationLog log;
  try {
    const PersistenceForecaster forecaster(re.demand, re.price, re.offset, re.period);
    log = run_closed_loop(net, tree, forecaster, re, sim);
  } catch (const std::exception& e) {
    std::cerr << "simulation failure: " << e.what() << "\n";
    return kSolverFailure;
  }
  if (c.reproducible) strip_timing(log);
  const KpiSummary kpis = summarize(log);
  write_text_file(fs::path(c.out) / "simlog.json", dump_simulation_log(log));
  write_text_file(fs::path(c.out) / "kpi.json", dump_kpis(kpis));
  std::cout << "steps=" << log.steps() << " kpiE=" << std::setprecision(10) << kpis.economic
            << " kpiS=" << kpis.safety << " kpiTauSeconds=" << kpis.complexity_seconds << "\n";
  return kOk;
}

int cmd_reduce(const Documents& docs, const Common& c, const std::string& branching) {
  try {
    const ScenarioFan fan = load_fan(docs.need(docs.fan, "fan.json", "--fan"));
    const ScenarioTree tree = reduce_fan_to_tree(fan, parse_branching(branching));
    const auto issues = validate_tree(tree);
    if (!issues.empty()) throw std::runtime_error("reduced tree is invalid: " + issues.front());
    save_tree(tree, fs::path(c.out) / "scenarioTree.json");
    std::cout << "nodes=" << tree.num_nodes() << " leaves=" << tree.nodes_at_stage(tree.horizon()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}

int cmd_generate_demo(const std::string& kind, const Common& c, int steps, const std::string& branching) {
  try {
    DemoOptions opt;
    opt.seed = c.seed;
    if (steps > 0) opt.steps = steps;
    if (!branching.empty()) opt.branching = parse_branching(branching);
    const DemoSet demo = make_demo(parse_demo_kind(kind), opt);
    write_demo(demo, c.out);
    std::cout << "wrote " << kind << " demo to " << c.out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scenario-based stochastic MPC for drinking water networks"};
  app.require_subcommand(1);

  Documents docs;
  Common common;

  auto* validate = app.add_subcommand("validate", "Check documents and their mutual consistency");
  add_documents(validate, docs, true, true);

  std::optional<double> tol;
  std::optional<int> max_iter;
  auto* solve_cmd = app.add_subcommand("solve", "Compute one control action");
  add_documents(solve_cmd, docs, false, false);
  add_common(solve_cmd, common, true, false, true, true);
  solve_cmd->add_option("--tol", tol, "Override the solver tolerance");
  solve_cmd->add_option("--max-iter", max_iter, "Override the iteration limit");
  solve_cmd->add_flag("--reproducible", common.reproducible, "Write zero timings");

  int steps = 0;
  std::string demo;
  auto* simulate = app.add_subcommand("simulate", "Closed-loop simulation with KPI summary");
  add_documents(simulate, docs, true, false);
  add_common(simulate, common, true, true, true, true);
  simulate->add_option("--steps", steps, "Closed-loop steps (default: 168 or what the realizations cover)");
  simulate->add_option("--demo", demo, "Demo profile used with --seed to synthesize realizations");
  simulate->add_flag("--reproducible", common.reproducible, "Write zero timings");

  std::string branching;
  auto* reduce = app.add_subcommand("reduce", "Reduce a scenario fan to a tree");
  reduce->add_option("--fan", docs.fan, "fan.json")->required();
  reduce->add_option("--branching", branching, "Children per node per stage, e.g. 5,3,2")->required();
  add_common(reduce, common, true, false, false, false);

  std::string kind;
  auto* generate = app.add_subcommand("generate-demo", "Write a demo document set");
  generate->add_option("kind", kind, "tank1, net3 or net10")->required();
  generate->add_option("--branching", branching, "Tree branching override");
  generate->add_option("--steps", steps, "Closed-loop steps covered by the realizations");
  add_common(generate, common, true, true, false, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (*validate) return cmd_validate(docs);
  if (*solve_cmd) return cmd_solve(docs, common, tol, max_iter);
  if (*simulate) return cmd_simulate(docs, common, steps, demo, simulate->count("--seed") > 0);
  if (*reduce) return cmd_reduce(docs, common, branching);
  if (*generate) return cmd_generate_demo(kind, common, steps, branching);
  return kInvalid;
}
