#pragma once

/// JSON-configured experiment runs: convergence studies over a refinement
/// sequence and moving-mesh runs, with CSV / VTK / JSON outputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmigm/movemesh.hpp"
#include "mmigm/postproc.hpp"
#include "mmigm/problems.hpp"

namespace mmigm {

/// Invalid configuration; the message names the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RunMode { Convergence, MoveMesh };
enum class Refinement { K, HP };

struct ProblemConfig {
  enum class Kind { Case1Sine, Case2Tanh, Manufactured } kind = Kind::Case1Sine;
  std::string u, f, grad_x, grad_y;
  Rect domain{0.0, 1.0, 0.0, 1.0};
};

struct RunConfig {
  RunMode mode = RunMode::Convergence;
  ProblemConfig problem;
  int degree = 3;
  Refinement refinement = Refinement::K;
  int levels = 5;
  int base_elements = 2;
  int elements = 32;
  MonitorSpec monitor = MonitorSpec::gradient(0.1);
  MoveMeshConfig movemesh;
  LinearSolverSettings solver;
  std::string output_directory = "out";
  int vtk_samples = 4;
  int snapshot_every = 5;
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ConfigError(path + "." + k + ": unknown key");
}

template <class T>
T get(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

inline int get_int(const json& j, const std::string& key, const std::string& path, int fallback, int lo, int hi) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
  const long long v = j.at(key).get<long long>();
  if (v < lo || v > hi)
    throw ConfigError(path + "." + key + ": must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(v);
}

inline double get_double(const json& j, const std::string& key, const std::string& path, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(path + "." + key + ": expected a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + "." + key + ": must be finite");
  return v;
}

inline ProblemConfig parse_problem(const json& j) {
  ProblemConfig p;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "case1_sine") p.kind = ProblemConfig::Kind::Case1Sine;
    else if (s == "case2_tanh") p.kind = ProblemConfig::Kind::Case2Tanh;
    else throw ConfigError("$.problem: unknown problem '" + s + "'");
    return p;
  }
  check_keys(j, "$.problem", {"manufactured"});
  if (!j.contains("manufactured")) throw ConfigError("$.problem: expected a name or {\"manufactured\": {...}}");
  const json& m = j.at("manufactured");
  const std::string path = "$.problem.manufactured";
  check_keys(m, path, {"u", "f", "grad_x", "grad_y", "domain"});
  p.kind = ProblemConfig::Kind::Manufactured;
  if (!m.contains("u") || !m.contains("f")) throw ConfigError(path + ": 'u' and 'f' are required");
  p.u = get<std::string>(m, "u", path, {});
  p.f = get<std::string>(m, "f", path, {});
  p.grad_x = get<std::string>(m, "grad_x", path, {});
  p.grad_y = get<std::string>(m, "grad_y", path, {});
  if (p.grad_x.empty() != p.grad_y.empty()) throw ConfigError(path + ": give both grad_x and grad_y or neither");
  if (m.contains("domain")) {
    const json& d = m.at("domain");
    if (!d.is_array() || d.size() != 4 || !std::all_of(d.begin(), d.end(), [](const json& v) { return v.is_number(); }))
      throw ConfigError(path + ".domain: expected [xmin, xmax, ymin, ymax]");
    p.domain = {d[0].get<double>(), d[1].get<double>(), d[2].get<double>(), d[3].get<double>()};
    if (!(p.domain.xmax > p.domain.xmin) || !(p.domain.ymax > p.domain.ymin))
      throw ConfigError(path + ".domain: empty rectangle");
  }
  try {
    Expression(p.u), Expression(p.f);
    if (!p.grad_x.empty()) Expression(p.grad_x), Expression(p.grad_y);
  } catch (const ExpressionError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return p;
}

}  // namespace detail

/// Parses and validates a config document. Unknown keys are rejected.
inline RunConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  check_keys(j, "$", {"mode", "problem", "degree", "refinement", "levels", "base_elements", "elements", "monitor",
                      "movemesh", "solver", "output"});
  RunConfig c;
  if (!j.contains("mode")) throw ConfigError("$.mode: required");
  const std::string mode = get<std::string>(j, "mode", "$", {});
  if (mode == "convergence") c.mode = RunMode::Convergence;
  else if (mode == "movemesh") c.mode = RunMode::MoveMesh;
  else throw ConfigError("$.mode: expected 'convergence' or 'movemesh'");

  if (!j.contains("problem")) throw ConfigError("$.problem: required");
  c.problem = parse_problem(j.at("problem"));
  if (c.problem.kind == ProblemConfig::Kind::Case1Sine && c.mode != RunMode::Convergence)
    throw ConfigError("$.problem: case1_sine is only available in convergence mode");
  if (c.problem.kind == ProblemConfig::Kind::Case2Tanh && c.mode != RunMode::MoveMesh)
    throw ConfigError("$.problem: case2_tanh is only available in movemesh mode");

  c.degree = get_int(j, "degree", "$", c.degree, 1, 4);
  const std::string ref = get<std::string>(j, "refinement", "$", "k");
  if (ref == "k") c.refinement = Refinement::K;
  else if (ref == "hp") c.refinement = Refinement::HP;
  else throw ConfigError("$.refinement: expected 'k' or 'hp'");
  c.levels = get_int(j, "levels", "$", c.levels, 1, 8);
  c.base_elements = get_int(j, "base_elements", "$", c.base_elements, 1, 1024);
  c.elements = get_int(j, "elements", "$", c.elements, 1, 1024);

  if (j.contains("monitor")) {
    const json& m = j.at("monitor");
    check_keys(m, "$.monitor", {"kind", "epsilon", "alpha", "beta"});
    const std::string kind = get<std::string>(m, "kind", "$.monitor", "gradient");
    if (kind == "gradient") c.monitor.kind = MonitorKind::Gradient;
    else if (kind == "hessian") c.monitor.kind = MonitorKind::Hessian;
    else if (kind == "combined") c.monitor.kind = MonitorKind::Combined;
    else throw ConfigError("$.monitor.kind: expected 'gradient', 'hessian' or 'combined'");
    c.monitor.epsilon = get_double(m, "epsilon", "$.monitor", 1.0);
    c.monitor.alpha = get_double(m, "alpha", "$.monitor", c.monitor.kind == MonitorKind::Gradient ? 0.1 : 0.0);
    c.monitor.beta = get_double(m, "beta", "$.monitor", c.monitor.kind == MonitorKind::Hessian ? 0.01 : 0.0);
    if (c.monitor.kind == MonitorKind::Gradient && m.contains("beta"))
      throw ConfigError("$.monitor.beta: not used by the gradient monitor");
    if (c.monitor.kind == MonitorKind::Hessian && m.contains("alpha"))
      throw ConfigError("$.monitor.alpha: not used by the hessian monitor");
    if (c.monitor.kind != MonitorKind::Combined && m.contains("epsilon") && c.monitor.epsilon != 1.0)
      throw ConfigError("$.monitor.epsilon: fixed to 1 for the " + kind + " monitor");
    if (c.monitor.alpha < 0.0) throw ConfigError("$.monitor.alpha: must be nonnegative");
    if (c.monitor.beta < 0.0) throw ConfigError("$.monitor.beta: must be nonnegative");
    if (!(c.monitor.epsilon > 0.0)) throw ConfigError("$.monitor.epsilon: must be positive");
  }

  if (j.contains("movemesh")) {
    const json& m = j.at("movemesh");
    check_keys(m, "$.movemesh", {"tau", "tolerance", "max_outer", "max_halvings", "smoothing_passes"});
    c.movemesh.tau = get_double(m, "tau", "$.movemesh", c.movemesh.tau);
    if (!(c.movemesh.tau > 0.0) || c.movemesh.tau > 1.0) throw ConfigError("$.movemesh.tau: must lie in (0, 1]");
    c.movemesh.tolerance = get_double(m, "tolerance", "$.movemesh", 1e-4 * c.movemesh.logical.diameter());
    if (!(c.movemesh.tolerance > 0.0)) throw ConfigError("$.movemesh.tolerance: must be positive");
    c.movemesh.max_outer = get_int(m, "max_outer", "$.movemesh", 50, 1, 10000);
    c.movemesh.max_halvings = get_int(m, "max_halvings", "$.movemesh", 6, 0, 6);
    c.movemesh.smoothing_passes = get_int(m, "smoothing_passes", "$.movemesh", 0, 0, 1000);
  }

  if (j.contains("solver")) {
    const json& s = j.at("solver");
    check_keys(s, "$.solver", {"tol", "maxit", "preconditioner"});
    c.solver.tol = get_double(s, "tol", "$.solver", c.solver.tol);
    if (!(c.solver.tol > 0.0) || c.solver.tol >= 1.0) throw ConfigError("$.solver.tol: must lie in (0, 1)");
    c.solver.maxit = static_cast<std::size_t>(get_int(s, "maxit", "$.solver", 0, 0, 1 << 30));
    const std::string pc = get<std::string>(s, "preconditioner", "$.solver", "diagonal");
    if (pc == "diagonal") c.solver.precond = Preconditioner::Diagonal;
    else if (pc == "none") c.solver.precond = Preconditioner::None;
    else throw ConfigError("$.solver.preconditioner: expected 'diagonal' or 'none'");
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, "$.output", {"directory", "vtk_samples", "snapshot_every"});
    c.output_directory = get<std::string>(o, "directory", "$.output", c.output_directory);
    if (c.output_directory.empty()) throw ConfigError("$.output.directory: must not be empty");
    c.vtk_samples = get_int(o, "vtk_samples", "$.output", c.vtk_samples, 2, 64);
    c.snapshot_every = get_int(o, "snapshot_every", "$.output", c.snapshot_every, 1, 10000);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

inline ProblemDefinition make_problem(const ProblemConfig& p) {
  switch (p.kind) {
    case ProblemConfig::Kind::Case1Sine: return case1_sine();
    case ProblemConfig::Kind::Case2Tanh: return case2_tanh();
    case ProblemConfig::Kind::Manufactured: return manufactured(p.u, p.f, p.domain, p.grad_x, p.grad_y);
  }
  throw std::logic_error("make_problem: bad kind");
}

/// Uniform geometry of the problem domain with m elements per direction.
inline NurbsGeometry make_geometry(const Rect& domain, int degree, Refinement r, int m) {
  const KnotVector kv = make_open_knot_vector(degree, m, r == Refinement::HP ? degree : 1);
  return build_identity_geometry(domain, kv, kv);
}

struct LevelResult {
  int elements = 0;
  ErrorReport report;
  SolveStats stats;
};

struct ConvergenceResult {
  std::vector<LevelResult> levels;
  ConvergenceOrders orders;
};

struct MoveMeshResult {
  MoveMeshState state;
  double initial_max_abs = 0.0;
  double final_max_abs = 0.0;
};

inline const char* kConvergenceHeader = "dofs,L2,L2_order,H1,H1_order";

inline std::string order_cell(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); }

inline void write_convergence_csv(const ConvergenceResult& r, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << kConvergenceHeader << '\n';
  for (std::size_t k = 0; k < r.levels.size(); ++k) {
    const auto& rep = r.levels[k].report;
    os << rep.dofs << ',' << fmt17(rep.L2) << ',' << (k < r.orders.L2.size() ? order_cell(r.orders.L2[k]) : "") << ','
       << fmt17(rep.H1_semi) << ',' << (k < r.orders.H1.size() ? order_cell(r.orders.H1[k]) : "") << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

inline std::vector<NamedField> solution_fields(const NurbsGeometry& g, const FieldCoefficients& u,
                                               const ExactSolution& exact) {
  auto uh = [&g, &u](double s, double t) { return eval_field(g, u, s, t, 0).value; };
  auto ex = [&g, &exact](double s, double t) { return exact.u(map_point(g, s, t, 0).point); };
  return {{"u_h", uh}, {"exact", ex}, {"error", [uh, ex](double s, double t) { return uh(s, t) - ex(s, t); }}};
}

inline std::vector<NamedField> movemesh_fields(const NurbsGeometry& g, const FieldCoefficients& u,
                                               const ExactSolution& exact, const MonitorSpec& spec) {
  auto f = solution_fields(g, u, exact);
  f.push_back({"monitor", [&g, &u, spec](double s, double t) { return eval_monitor(spec, g, u, s, t); }});
  return f;
}

inline nlohmann::json report_json(const ErrorReport& r, double max_abs) {
  return {{"L2", r.L2}, {"H1", r.H1_semi}, {"Linf", r.L_inf}, {"max_element_L2", r.max_element_L2()},
          {"max_abs_uh", max_abs}};
}

inline void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << j.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed for " + path);
}

/// Solves the problem on m = base * 2^k elements per direction, k < levels.
/// Writes convergence.csv, level_<k>.vtk and summary.json into `dir`
/// when `dir` is non-empty.
inline ConvergenceResult run_convergence(const RunConfig& c, const std::string& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemDefinition prob = make_problem(c.problem);
  ConvergenceResult res;
  std::vector<ErrorReport> reports;
  for (int k = 0; k < c.levels; ++k) {
    LevelResult lv;
    lv.elements = c.base_elements << k;
    const NurbsGeometry g = make_geometry(prob.domain, c.degree, c.refinement, lv.elements);
    const auto s0 = std::chrono::steady_clock::now();
    const FieldCoefficients u = solve_poisson(g, prob.f, prob.bc, c.solver, &lv.stats);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - s0).count();
    lv.report = error_norms(g, u, prob.exact);
    lv.report.cpu_seconds = secs;
    if (!dir.empty())
      export_vtk(g, solution_fields(g, u, prob.exact), c.vtk_samples, dir + "/level_" + std::to_string(k) + ".vtk");
    reports.push_back(lv.report);
    res.levels.push_back(std::move(lv));
  }
  if (reports.size() >= 2) {
    res.orders = convergence_orders(reports);
  } else {
    res.orders.L2.assign(reports.size(), std::nullopt);
    res.orders.H1.assign(reports.size(), std::nullopt);
  }
  if (!dir.empty()) {
    write_convergence_csv(res, dir + "/convergence.csv");
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& lv : res.levels)
      levels.push_back({{"elements", lv.elements},
                        {"dofs", lv.report.dofs},
                        {"h", lv.report.h},
                        {"L2", lv.report.L2},
                        {"H1", lv.report.H1_semi},
                        {"Linf", lv.report.L_inf},
                        {"cg_iterations", lv.stats.cg_iterations},
                        {"solve_seconds", lv.report.cpu_seconds}});
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json({{"mode", "convergence"}, {"problem", prob.name}, {"levels", levels}, {"wall_seconds", wall}},
               dir + "/summary.json");
  }
  return res;
}

/// One moving-mesh run on `elements` x `elements` elements. Writes trace.csv,
/// initial.vtk, iter_<k>.vtk every `snapshot_every` iterations, final.vtk and
/// summary.json into `dir` when `dir` is non-empty.
inline MoveMeshResult run_movemesh(const RunConfig& c, const std::string& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const ProblemDefinition prob = make_problem(c.problem);
  const NurbsGeometry g0 = make_geometry(prob.domain, c.degree, c.refinement, c.elements);
  IterationObserver obs;
  if (!dir.empty())
    obs = [&](const MoveMeshState& st) {
      const std::size_t it = st.trace.back().iter;
      if (it % static_cast<std::size_t>(c.snapshot_every) == 0 && st.stop != StopReason::Converged)
        export_vtk(st.geometry, movemesh_fields(st.geometry, st.u, prob.exact, c.monitor), c.vtk_samples,
                   dir + "/iter_" + std::to_string(it) + ".vtk");
    };
  MoveMeshResult res;
  res.state = mmigm_solve(prob.poisson(), g0, c.monitor, c.movemesh, c.solver, obs);
  const MoveMeshState& st = res.state;
  res.initial_max_abs = lattice_max_abs(st.initial_geometry, st.initial_u);
  res.final_max_abs = lattice_max_abs(st.geometry, st.u);
  if (!dir.empty()) {
    export_vtk(st.initial_geometry, movemesh_fields(st.initial_geometry, st.initial_u, prob.exact, c.monitor),
               c.vtk_samples, dir + "/initial.vtk");
    export_vtk(st.geometry, movemesh_fields(st.geometry, st.u, prob.exact, c.monitor), c.vtk_samples,
               dir + "/final.vtk");
    export_trace(st, dir + "/trace.csv");
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json({{"mode", "movemesh"},
                {"problem", prob.name},
                {"dofs", st.geometry.dofs()},
                {"initial", report_json(*st.initial_report, res.initial_max_abs)},
                {"final", report_json(*st.final_report, res.final_max_abs)},
                {"iterations", st.trace.size()},
                {"mesh_updates", st.mesh_updates},
                {"converged", st.stop == StopReason::Converged},
                {"min_jacobian", st.trace.back().min_jacobian},
                {"solve_seconds", st.solve_seconds},
                {"wall_seconds", wall}},
               dir + "/summary.json");
  }
  return res;
}

struct LinfComparison {
  double linf_a = 0.0;
  double linf_b = 0.0;
  double ratio = 0.0;  ///< linf_a / linf_b
};

/// Final lattice L-infinity errors of two movemesh summaries and their ratio.
inline LinfComparison compare_linf(const std::string& summary_a, const std::string& summary_b) {
  auto read = [](const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError(path + ": cannot open");
    try {
      const auto j = nlohmann::json::parse(is);
      return j.at("final").at("Linf").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path + ": not a movemesh summary (" + e.what() + ")");
    }
  };
  LinfComparison c;
  c.linf_a = read(summary_a);
  c.linf_b = read(summary_b);
  c.ratio = c.linf_a / c.linf_b;
  return c;
}

}  // namespace mmigm
