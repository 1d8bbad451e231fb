#include "ssmpc/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ssmpc {
namespace {

using json = nlohmann::json;

[[noreturn]] void fail(std::string_view origin, const std::string& pointer, const std::string& msg) {
  throw ParseError(std::string(origin) + ": " + (pointer.empty() ? "/" : pointer) + ": " + msg);
}

json parse_json(std::string_view text, std::string_view origin) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(origin) + ": parse error at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
}

class Reader {
 public:
  Reader(const json& root, std::string_view origin) : root_(root), origin_(origin) {
    if (!root_.is_object()) fail(origin_, "", "document must be a JSON object");
    if (!root_.contains("schemaVersion")) fail(origin_, "/schemaVersion", "missing field");
    if (!root_["schemaVersion"].is_number_integer() ||
        root_["schemaVersion"].get<int>() != kSchemaVersion) {
      fail(origin_, "/schemaVersion", "unsupported schema version (expected 1)");
    }
  }

  bool has(const char* key) const { return root_.contains(key) && !root_[key].is_null(); }

  const json& field(const char* key) const {
    if (!root_.contains(key)) fail(origin_, ptr(key), "missing field");
    return root_[key];
  }

  double number(const char* key) const { return number_at(field(key), ptr(key)); }

  int integer(const char* key) const {
    const json& j = field(key);
    if (!j.is_number_integer()) fail(origin_, ptr(key), "expected an integer");
    return j.get<int>();
  }

  Vector vector(const char* key, std::optional<Eigen::Index> size = std::nullopt) const {
    return vector_at(field(key), ptr(key), size);
  }

  Matrix matrix(const char* key, std::optional<Eigen::Index> rows = std::nullopt,
                std::optional<Eigen::Index> cols = std::nullopt, bool allow_empty = true) const {
    return matrix_at(field(key), ptr(key), rows, cols, allow_empty);
  }

  std::vector<int> int_array(const char* key) const {
    const json& j = field(key);
    if (!j.is_array()) fail(origin_, ptr(key), "expected an array");
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_number_integer()) fail(origin_, ptr(key) + "/" + std::to_string(i), "expected an integer");
      out.push_back(j[i].get<int>());
    }
    return out;
  }

  std::vector<std::string> string_array(const json& j, const std::string& pointer) const {
    if (!j.is_array()) fail(origin_, pointer, "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_string()) fail(origin_, pointer + "/" + std::to_string(i), "expected a string");
      out.push_back(j[i].get<std::string>());
    }
    return out;
  }

  double number_at(const json& j, const std::string& pointer) const {
    if (!j.is_number()) fail(origin_, pointer, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(origin_, pointer, "number is not finite");
    return v;
  }

  Vector vector_at(const json& j, const std::string& pointer,
                   std::optional<Eigen::Index> size) const {
    if (!j.is_array()) fail(origin_, pointer, "expected an array of numbers");
    if (size && static_cast<Eigen::Index>(j.size()) != *size) {
      fail(origin_, pointer,
           "expected " + std::to_string(*size) + " entries, found " + std::to_string(j.size()));
    }
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = number_at(j[i], pointer + "/" + std::to_string(i));
    return v;
  }

  Matrix matrix_at(const json& j, const std::string& pointer, std::optional<Eigen::Index> rows,
                   std::optional<Eigen::Index> cols, bool allow_empty) const {
    if (!j.is_array()) fail(origin_, pointer, "expected an array of rows");
    if (j.empty() && !allow_empty) fail(origin_, pointer, "must be a non-empty array");
    if (rows && static_cast<Eigen::Index>(j.size()) != *rows) {
      fail(origin_, pointer,
           "expected " + std::to_string(*rows) + " rows, found " + std::to_string(j.size()));
    }
    Eigen::Index ncols = cols ? *cols : (j.empty() ? 0 : static_cast<Eigen::Index>(j[0].size()));
    Matrix m(static_cast<Eigen::Index>(j.size()), ncols);
    for (std::size_t r = 0; r < j.size(); ++r) {
      const std::string row_ptr = pointer + "/" + std::to_string(r);
      if (!j[r].is_array()) fail(origin_, row_ptr, "expected an array of numbers");
      if (static_cast<Eigen::Index>(j[r].size()) != ncols) {
        fail(origin_, row_ptr,
             "expected " + std::to_string(ncols) + " columns, found " + std::to_string(j[r].size()));
      }
      for (Eigen::Index c = 0; c < ncols; ++c) {
        m(static_cast<Eigen::Index>(r), c) = number_at(j[r][c], row_ptr + "/" + std::to_string(c));
      }
    }
    return m;
  }

  std::string ptr(const char* key) const { return std::string("/") + key; }
  std::string_view origin() const { return origin_; }

 private:
  const json& root_;
  std::string_view origin_;
};

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + " is not finite");
}

json to_json(const Vector& v, const char* what) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    require_finite(v[i], what);
    a.push_back(v[i]);
  }
  return a;
}

json to_json(const Matrix& m, const char* what) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      require_finite(m(r, c), what);
      row.push_back(m(r, c));
    }
    a.push_back(std::move(row));
  }
  return a;
}

// Node values are stored with one column per node and written one row per node.
json columns_to_json(const Matrix& m, const char* what) {
  return to_json(Matrix(m.transpose()), what);
}

json header() {
  json j = json::object();
  j["schemaVersion"] = kSchemaVersion;
  return j;
}

std::string finish(const json& j) { return j.dump(2) + "\n"; }

bool any_nonempty(const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (!n.empty()) return true;
  }
  return false;
}

template <class Fn>
auto wrap_semantic(std::string_view origin, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string(origin) + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------- network

NetworkModel parse_network(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  NetworkModel m;
  m.dt = r.number("dt");
  m.A = r.matrix("A", std::nullopt, std::nullopt, false);
  const Eigen::Index nx = m.A.rows();
  m.A = r.matrix("A", nx, nx, false);
  const json& b = r.field("B");
  const Eigen::Index nu = b.is_array() && !b.empty() && b[0].is_array() ? b[0].size() : 0;
  if (nu == 0) fail(origin, "/B", "must be a non-empty matrix");
  m.B = r.matrix("B", nx, nu, false);
  const json& gd = r.field("Gd");
  const Eigen::Index nd = gd.is_array() && !gd.empty() && gd[0].is_array() ? gd[0].size() : 0;
  if (nd == 0) fail(origin, "/Gd", "must have at least one demand column");
  m.Gd = r.matrix("Gd", nx, nd, false);
  m.E = r.matrix("E", std::nullopt, nu);
  m.Ed = r.matrix("Ed", m.E.rows(), nd);
  m.x_min = r.vector("xmin", nx);
  m.x_max = r.vector("xmax", nx);
  m.x_safe = r.vector("xsafe", nx);
  m.u_min = r.vector("umin", nu);
  m.u_max = r.vector("umax", nu);
  m.alpha0 = r.vector("alpha0", nu);
  if (r.has("names")) {
    const json& names = r.field("names");
    if (!names.is_object()) fail(origin, "/names", "expected an object");
    auto list = [&](const char* key, std::vector<std::string>& out, Eigen::Index n) {
      if (!names.contains(key)) return;
      out = r.string_array(names[key], std::string("/names/") + key);
      if (static_cast<Eigen::Index>(out.size()) != n) {
        fail(origin, std::string("/names/") + key, "expected " + std::to_string(n) + " names");
      }
    };
    list("tanks", m.tank_names, nx);
    list("flows", m.flow_names, nu);
    list("demands", m.demand_names, nd);
  }
  wrap_semantic(origin, [&] { m.validate(); });
  return m;
}

std::string dump_network(const NetworkModel& m) {
  json j = header();
  j["dt"] = m.dt;
  j["A"] = to_json(m.A, "A");
  j["B"] = to_json(m.B, "B");
  j["Gd"] = to_json(m.Gd, "Gd");
  j["E"] = to_json(m.E, "E");
  j["Ed"] = to_json(m.Ed, "Ed");
  j["xmin"] = to_json(m.x_min, "xmin");
  j["xmax"] = to_json(m.x_max, "xmax");
  j["xsafe"] = to_json(m.x_safe, "xsafe");
  j["umin"] = to_json(m.u_min, "umin");
  j["umax"] = to_json(m.u_max, "umax");
  j["alpha0"] = to_json(m.alpha0, "alpha0");
  if (any_nonempty(m.tank_names) || any_nonempty(m.flow_names) || any_nonempty(m.demand_names)) {
    json names = json::object();
    if (!m.tank_names.empty()) names["tanks"] = m.tank_names;
    if (!m.flow_names.empty()) names["flows"] = m.flow_names;
    if (!m.demand_names.empty()) names["demands"] = m.demand_names;
    j["names"] = std::move(names);
  }
  return finish(j);
}

// ---------------------------------------------------------------- tree

ScenarioTree parse_tree(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  const int horizon = r.integer("horizon");
  std::vector<int> per_stage = r.int_array("nodesPerStage");
  if (static_cast<int>(per_stage.size()) != horizon + 1) {
    fail(origin, "/nodesPerStage", "expected horizon + 1 = " + std::to_string(horizon + 1) + " entries");
  }
  std::vector<int> anc = r.int_array("ancestor");
  const Vector prob = r.vector("probability", static_cast<Eigen::Index>(anc.size()));
  const int nd = r.integer("demandDim");
  const int nu = r.integer("priceDim");
  ScenarioTree tree = wrap_semantic(origin, [&] {
    return ScenarioTree::from_structure(per_stage, anc,
                                        std::vector<double>(prob.data(), prob.data() + prob.size()),
                                        nd, nu);
  });
  const Eigen::Index n = tree.num_nodes();
  bool any_values = false;
  if (r.has("errorValues")) {
    tree.set_errors(r.matrix("errorValues", n, nd + nu).transpose());
    any_values = true;
  }
  if (r.has("demandValues") || r.has("priceValues")) {
    Matrix d = r.matrix("demandValues", n, nd).transpose();
    Matrix p = r.matrix("priceValues", n, nu).transpose();
    tree.set_values(std::move(d), std::move(p));
    any_values = true;
  }
  if (!any_values) fail(origin, "", "tree needs errorValues or demandValues/priceValues");
  return tree;
}

std::string dump_tree(const ScenarioTree& tree) {
  json j = header();
  j["horizon"] = tree.horizon();
  j["nodesPerStage"] = tree.nodes_per_stage();
  j["ancestor"] = tree.ancestors();
  j["probability"] = tree.probabilities();
  j["demandDim"] = tree.demand_dim();
  j["priceDim"] = tree.price_dim();
  if (tree.has_errors()) j["errorValues"] = columns_to_json(tree.errors(), "errorValues");
  if (tree.is_attached()) {
    j["demandValues"] = columns_to_json(tree.demands(), "demandValues");
    j["priceValues"] = columns_to_json(tree.prices(), "priceValues");
  }
  return finish(j);
}

// ---------------------------------------------------------------- forecast

ForecastSeries parse_forecast(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  const int horizon = r.integer("horizon");
  if (horizon < 1) fail(origin, "/horizon", "must be >= 1");
  ForecastSeries f;
  f.demand = r.matrix("dHat", horizon, std::nullopt, false);
  f.price = r.matrix("alphaHat", horizon, std::nullopt, false);
  if (f.demand.cols() == 0) fail(origin, "/dHat", "rows must be non-empty");
  if (f.price.cols() == 0) fail(origin, "/alphaHat", "rows must be non-empty");
  for (Eigen::Index i = 0; i < f.demand.rows(); ++i) {
    for (Eigen::Index c = 0; c < f.demand.cols(); ++c) {
      if (f.demand(i, c) < 0.0) {
        fail(origin, "/dHat/" + std::to_string(i) + "/" + std::to_string(c), "negative demand");
      }
    }
  }
  return f;
}

std::string dump_forecast(const ForecastSeries& f) {
  json j = header();
  j["horizon"] = f.horizon();
  j["dHat"] = to_json(f.demand, "dHat");
  j["alphaHat"] = to_json(f.price, "alphaHat");
  return finish(j);
}

// ---------------------------------------------------------------- controller config

CostWeights ControllerConfig::weights(int num_inputs) const {
  CostWeights w;
  w.w_alpha = w_alpha;
  w.w_s = w_s;
  w.w_x = w_x;
  if (const double* s = std::get_if<double>(&w_u)) {
    w.w_u = *s * Matrix::Identity(num_inputs, num_inputs);
  } else {
    w.w_u = std::get<Matrix>(w_u);
  }
  return w;
}

SolverConfig ControllerConfig::solver_config(int threads) const {
  SolverConfig c;
  c.max_iterations = max_iterations;
  c.tolerance = tolerance;
  c.step_size = gamma;
  c.threads = threads;
  return c;
}

ControllerConfig parse_controller_config(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  ControllerConfig c;
  c.horizon = r.integer("horizon");
  if (c.horizon < 1) fail(origin, "/horizon", "must be >= 1");
  c.w_alpha = r.number("Walpha");
  const json& wu = r.field("Wu");
  if (wu.is_number()) {
    c.w_u = r.number("Wu");
  } else {
    Matrix m = r.matrix("Wu", std::nullopt, std::nullopt, false);
    if (m.rows() != m.cols()) fail(origin, "/Wu", "matrix must be square");
    c.w_u = std::move(m);
  }
  c.w_s = r.number("Ws");
  c.w_x = r.number("Wx");
  c.max_iterations = r.integer("maxIter");
  if (c.max_iterations < 1) fail(origin, "/maxIter", "must be >= 1");
  c.tolerance = r.number("tol");
  if (!(c.tolerance > 0.0)) fail(origin, "/tol", "must be positive");
  if (r.has("gamma")) {
    c.gamma = r.number("gamma");
    if (!(*c.gamma > 0.0)) fail(origin, "/gamma", "must be positive");
  }
  return c;
}

std::string dump_controller_config(const ControllerConfig& c) {
  json j = header();
  j["horizon"] = c.horizon;
  j["Walpha"] = c.w_alpha;
  if (const double* s = std::get_if<double>(&c.w_u)) {
    j["Wu"] = *s;
  } else {
    j["Wu"] = to_json(std::get<Matrix>(c.w_u), "Wu");
  }
  j["Ws"] = c.w_s;
  j["Wx"] = c.w_x;
  j["maxIter"] = c.max_iterations;
  j["tol"] = c.tolerance;
  if (c.gamma) j["gamma"] = *c.gamma;
  return finish(j);
}

// ---------------------------------------------------------------- state

ControllerState parse_state(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  ControllerState s;
  s.x = r.vector("x");
  s.u_prev = r.vector("uPrev");
  if (r.has("k")) s.k = r.integer("k");
  return s;
}

std::string dump_state(const ControllerState& s) {
  json j = header();
  j["x"] = to_json(s.x, "x");
  j["uPrev"] = to_json(s.u_prev, "uPrev");
  j["k"] = s.k;
  return finish(j);
}

// ---------------------------------------------------------------- control output

ControlOutput ControlOutput::from_result(const SolverResult& result) {
  ControlOutput out;
  out.u0 = result.u0;
  out.iterations = result.iterations;
  out.termination_reason = to_string(result.termination);
  out.primal_residual = result.primal_residual;
  out.dual_change = result.dual_change;
  out.solve_time_ms = 1e3 * result.solve_seconds;
  return out;
}

ControlOutput parse_control_output(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  ControlOutput out;
  out.u0 = r.vector("u0");
  out.iterations = r.integer("iterations");
  const json& reason = r.field("terminationReason");
  if (!reason.is_string()) fail(origin, "/terminationReason", "expected a string");
  out.termination_reason = reason.get<std::string>();
  out.primal_residual = r.number("primalResidual");
  out.dual_change = r.number("dualChange");
  out.solve_time_ms = r.number("solveTimeMs");
  return out;
}

std::string dump_control_output(const ControlOutput& out) {
  json j = header();
  j["u0"] = to_json(out.u0, "u0");
  j["iterations"] = out.iterations;
  j["terminationReason"] = out.termination_reason;
  j["primalResidual"] = out.primal_residual;
  j["dualChange"] = out.dual_change;
  j["solveTimeMs"] = out.solve_time_ms;
  return finish(j);
}

// ---------------------------------------------------------------- fan

ScenarioFan parse_fan(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  ScenarioFan fan;
  fan.demand_dim = r.integer("demandDim");
  fan.price_dim = r.integer("priceDim");
  const json& scenarios = r.field("scenarios");
  if (!scenarios.is_array() || scenarios.empty()) fail(origin, "/scenarios", "must be a non-empty array");
  const Eigen::Index dim = fan.demand_dim + fan.price_dim;
  std::optional<Eigen::Index> horizon;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    Matrix m = r.matrix_at(scenarios[s], "/scenarios/" + std::to_string(s), horizon, dim, false);
    horizon = m.rows();
    fan.scenarios.push_back(std::move(m));
  }
  return fan;
}

std::string dump_fan(const ScenarioFan& fan) {
  json j = header();
  j["demandDim"] = fan.demand_dim;
  j["priceDim"] = fan.price_dim;
  json scenarios = json::array();
  for (const Matrix& s : fan.scenarios) scenarios.push_back(to_json(s, "scenarios"));
  j["scenarios"] = std::move(scenarios);
  return finish(j);
}

// ---------------------------------------------------------------- realizations

Realizations parse_realizations(std::string_view text, std::string_view origin) {
  const json root = parse_json(text, origin);
  Reader r(root, origin);
  Realizations out;
  out.period = r.integer("period");
  out.offset = r.integer("offset");
  out.demand = r.matrix("demand", std::nullopt, std::nullopt, false);
  out.price = r.matrix("price", out.demand.rows(), std::nullopt, false);
  if (out.period < 1) fail(origin, "/period", "must be >= 1");
  if (out.offset < out.period - 1 || out.offset + 1 >= out.demand.rows()) {
    fail(origin, "/offset", "must cover one period of history and leave at least one step");
  }
  return out;
}

std::string dump_realizations(const Realizations& re) {
  json j = header();
  j["period"] = re.period;
  j["offset"] = re.offset;
  j["demand"] = to_json(re.demand, "demand");
  j["price"] = to_json(re.price, "price");
  return finish(j);
}

// ---------------------------------------------------------------- files

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
}

NetworkModel load_network(const std::filesystem::path& p) {
  return parse_network(read_text_file(p), p.string());
}
ScenarioTree load_tree(const std::filesystem::path& p) { return parse_tree(read_text_file(p), p.string()); }
ForecastSeries load_forecast(const std::filesystem::path& p) {
  return parse_forecast(read_text_file(p), p.string());
}
ControllerConfig load_controller_config(const std::filesystem::path& p) {
  return parse_controller_config(read_text_file(p), p.string());
}
ControllerState load_state(const std::filesystem::path& p) { return parse_state(read_text_file(p), p.string()); }
ControlOutput load_control_output(const std::filesystem::path& p) {
  return parse_control_output(read_text_file(p), p.string());
}
ScenarioFan load_fan(const std::filesystem::path& p) { return parse_fan(read_text_file(p), p.string()); }
Realizations load_realizations(const std::filesystem::path& p) {
  return parse_realizations(read_text_file(p), p.string());
}

void save_network(const NetworkModel& m, const std::filesystem::path& p) { write_text_file(p, dump_network(m)); }
void save_tree(const ScenarioTree& t, const std::filesystem::path& p) { write_text_file(p, dump_tree(t)); }
void save_forecast(const ForecastSeries& f, const std::filesystem::path& p) {
  write_text_file(p, dump_forecast(f));
}
void save_controller_config(const ControllerConfig& c, const std::filesystem::path& p) {
  write_text_file(p, dump_controller_config(c));
}
void save_state(const ControllerState& s, const std::filesystem::path& p) { write_text_file(p, dump_state(s)); }
void save_control_output(const ControlOutput& o, const std::filesystem::path& p) {
  write_text_file(p, dump_control_output(o));
}
void save_fan(const ScenarioFan& f, const std::filesystem::path& p) { write_text_file(p, dump_fan(f)); }
void save_realizations(const Realizations& r, const std::filesystem::path& p) {
  write_text_file(p, dump_realizations(r));
}

}  // namespace ssmpc
