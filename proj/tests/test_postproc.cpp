#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "mmigm/postproc.hpp"
#include "mmigm/problems.hpp"

using namespace mmigm;
namespace fs = std::filesystem;

namespace {

NurbsGeometry square(const Rect& r, int p, int m) {
  const KnotVector kv = make_open_knot_vector(p, m, 1);
  return build_identity_geometry(r, kv, kv);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mmigm_postproc_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

// Minimal reader for the legacy VTK files written by export_vtk.
struct VtkFile {
  std::vector<Vec2> points;
  std::vector<std::vector<std::size_t>> cells;
  std::vector<int> types;
  std::map<std::string, std::vector<double>> fields;
};

VtkFile read_vtk(const fs::path& path) {
  std::ifstream is(path);
  VtkFile f;
  std::string line, word;
  for (int k = 0; k < 4; ++k) std::getline(is, line);
  EXPECT_EQ(line, "DATASET UNSTRUCTURED_GRID");
  std::size_t n = 0, m = 0;
  while (is >> word) {
    if (word == "POINTS") {
      is >> n >> word;
      f.points.resize(n);
      double z;
      for (auto& p : f.points) is >> p.x >> p.y >> z;
    } else if (word == "CELLS") {
      is >> n >> m;
      f.cells.resize(n);
      for (auto& c : f.cells) {
        std::size_t k;
        is >> k;
        c.resize(k);
        for (auto& v : c) is >> v;
      }
    } else if (word == "CELL_TYPES") {
      is >> n;
      f.types.resize(n);
      for (auto& t : f.types) is >> t;
    } else if (word == "POINT_DATA") {
      is >> n;
    } else if (word == "SCALARS") {
      std::string name;
      is >> name >> word >> word >> word >> word;  // type, components, LOOKUP_TABLE default
      auto& v = f.fields[name];
      v.resize(n);
      for (auto& x : v) is >> x;
    }
  }
  return f;
}

double fd_minus_laplacian(const ScalarFunction& u, const Vec2& x, double h) {
  return -(u({x.x + h, x.y}) + u({x.x - h, x.y}) + u({x.x, x.y + h}) + u({x.x, x.y - h}) - 4 * u(x)) / (h * h);
}

}  // namespace

TEST(ErrorNorms, ExactLinearFieldHasZeroError) {
  const NurbsGeometry g = square({0, 1, 0, 1}, 2, 4);
  auto lin = [](const Vec2& x) { return 1 + 2 * x.x - 3 * x.y; };
  const PhysicalMesh mesh = mesh_nodes(g);
  Grid<double> v(g.n1(), g.n2());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = lin(mesh.nodes[k]);
  const ErrorReport r = error_norms(g, interpolate_at_greville(g, v), {lin, [](const Vec2&) { return Vec2{2, -3}; }});
  EXPECT_LE(r.L2, 1e-10);
  EXPECT_LE(r.H1_semi, 1e-10);
  EXPECT_LE(r.L_inf, 1e-10);
}

TEST(ErrorNorms, ZeroFieldAgainstSine) {
  const ProblemDefinition pd = case1_sine();
  const NurbsGeometry g = square(pd.domain, 3, 8);
  const ErrorReport r = error_norms(g, FieldCoefficients(g.dofs()), pd.exact);
  const double s = std::sin(2.0) / 2;
  EXPECT_NEAR(r.L2, 1 - s, 1e-6);
  EXPECT_NEAR(r.H1_semi, std::sqrt(2 * (1 + s) * (1 - s)), 1e-6);
  EXPECT_NEAR(r.L_inf, std::sin(1.0) * std::sin(1.0), 1e-14);
  EXPECT_NEAR(r.h, std::sqrt(2.0) * 0.25, 1e-14);
  EXPECT_EQ(r.dofs, 121u);
  EXPECT_EQ(r.per_element_L2.size(), 64u);
}

TEST(ErrorNorms, PerElementSquaresSumToTotal) {
  const ProblemDefinition pd = case1_sine();
  const NurbsGeometry g = square(pd.domain, 2, 6);
  const ErrorReport r = error_norms(g, solve_poisson(g, pd.f, pd.bc), pd.exact);
  double s = 0.0;
  for (double e : r.per_element_L2) s += e * e;
  EXPECT_NEAR(std::sqrt(s), r.L2, 1e-12 * r.L2);
  EXPECT_LE(r.max_element_L2(), r.L2);
}

TEST(ErrorNorms, SineRow121WithinFactorThree) {
  const ProblemDefinition pd = case1_sine();
  const NurbsGeometry g = square(pd.domain, 3, 8);
  const ErrorReport r = error_norms(g, solve_poisson(g, pd.f, pd.bc), pd.exact);
  EXPECT_EQ(r.dofs, 121u);
  EXPECT_LE(r.L2, 3 * 2.41e-6);
  EXPECT_GE(r.L2, 2.41e-6 / 3);
  EXPECT_LE(r.H1_semi, 3 * 6.29e-5);
  EXPECT_GE(r.H1_semi, 6.29e-5 / 3);
}

TEST(Convergence, OrdersFromPairs) {
  const std::vector<double> e{6.38e-4, 3.78e-5}, h{2.0, 1.0};
  const auto o = convergence_orders(e, h);
  EXPECT_FALSE(o[0].has_value());
  ASSERT_TRUE(o[1].has_value());
  EXPECT_NEAR(*o[1], std::log2(6.38e-4 / 3.78e-5), 1e-12);
  EXPECT_NEAR(*o[1], 4.08, 0.01);
  const std::vector<double> e2{1e-2, 2.5e-3};
  EXPECT_NEAR(*convergence_orders(e2, h)[1], 2.0, 1e-12);
}

TEST(Convergence, ZeroErrorGivesNoOrder) {
  const std::vector<double> e{1e-3, 0.0, 1e-5}, h{1.0, 0.5, 0.25};
  const auto o = convergence_orders(e, h);
  EXPECT_FALSE(o[1].has_value());
  EXPECT_FALSE(o[2].has_value());
  EXPECT_THROW(convergence_orders(std::span<const double>(e), std::span<const double>(h).first(2)), std::invalid_argument);
}

TEST(Vtk, RoundTripCountsAndValues) {
  const ProblemDefinition pd = case1_sine();
  const NurbsGeometry g = square(pd.domain, 2, 3);
  const FieldCoefficients u = solve_poisson(g, pd.f, pd.bc);
  const fs::path path = scratch_dir("vtk") / "u.vtk";
  export_vtk(g, {field_of("u_h", g, u), {"one", [](double, double) { return 1.0; }}}, 4, path.string());
  const VtkFile f = read_vtk(path);
  const std::size_t side = 3 * 3 + 1;
  ASSERT_EQ(f.points.size(), side * side);
  ASSERT_EQ(f.cells.size(), (side - 1) * (side - 1));
  EXPECT_EQ(f.types, std::vector<int>(f.cells.size(), 9));
  for (const auto& c : f.cells) {
    ASSERT_EQ(c.size(), 4u);
    for (std::size_t v : c) EXPECT_LT(v, f.points.size());
  }
  EXPECT_EQ(f.points.front().x, -1.0);
  EXPECT_EQ(f.points.back().y, 1.0);
  ASSERT_EQ(f.fields.count("u_h"), 1u);
  const auto& vals = f.fields.at("u_h");
  // Identity geometry: parametric sample (s, t) sits at physical (2s-1, 2t-1).
  for (std::size_t k = 0; k < f.points.size(); k += 7) {
    const Vec2 x = f.points[k];
    EXPECT_NEAR(vals[k], eval_field(g, u, (x.x + 1) / 2, (x.y + 1) / 2, 0).value, 1e-14);
  }
  EXPECT_EQ(f.fields.at("one"), std::vector<double>(f.points.size(), 1.0));
  EXPECT_THROW(export_vtk(g, {}, 1, path.string()), std::invalid_argument);
}

TEST(Trace, HeaderAndFullPrecisionRows) {
  std::vector<TraceRow> rows(2);
  rows[0] = {1, 0.1 / 3, 0.5, 0.25, 1.0 / 7, 2.0 / 9, 0.3, 0.01};
  rows[1] = {2, 1e-5, 0.0, 0.25, std::nan(""), std::nan(""), std::nan(""), 0.02};
  const fs::path path = scratch_dir("trace") / "trace.csv";
  export_trace(rows, path.string());
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, kTraceHeader);
  std::getline(is, line);
  std::stringstream ss(line);
  std::vector<double> cols;
  for (std::string cell; std::getline(ss, cell, ',');) cols.push_back(std::stod(cell));
  ASSERT_EQ(cols.size(), 8u);
  EXPECT_EQ(cols[1], 0.1 / 3);
  EXPECT_EQ(cols[4], 1.0 / 7);
  std::getline(is, line);
  EXPECT_NE(line.find("nan"), std::string::npos);
  EXPECT_FALSE(std::getline(is, line));
  EXPECT_THROW(export_trace(std::span<const TraceRow>{}, path.string()), std::invalid_argument);
}

TEST(Problems, LayerSourceAtTheCircle) {
  const ProblemDefinition pd = case2_tanh();
  EXPECT_NEAR(pd.f({0.75, 0.5}), 400.0, 1e-9);
  EXPECT_LT(std::abs(pd.f({0.0, 0.0})), 1e-30);
  EXPECT_NEAR(pd.exact.u({0.5, 0.5}), 1.0, 1e-15);
}

TEST(Problems, SourcesMatchFiniteDifferenceLaplacian) {
  for (const ProblemDefinition& pd : {case1_sine(), case2_tanh()}) {
    for (Vec2 x : {Vec2{0.71, 0.52}, Vec2{0.5, 0.76}, Vec2{0.3, 0.35}, Vec2{0.62, 0.6}, Vec2{0.9, 0.1}}) {
      const double f = pd.f(x);
      EXPECT_NEAR(f, fd_minus_laplacian(pd.exact.u, x, 2e-5), 1e-3 * (1 + std::abs(f))) << pd.name << " at " << x.x;
    }
  }
}

TEST(Problems, GradientsMatchFiniteDifferences) {
  for (const ProblemDefinition& pd : {case1_sine(), case2_tanh()}) {
    for (Vec2 x : {Vec2{0.71, 0.52}, Vec2{0.5, 0.755}, Vec2{0.3, 0.35}}) {
      const double h = 1e-6;
      const Vec2 g = pd.exact.grad(x);
      const double gx = (pd.exact.u({x.x + h, x.y}) - pd.exact.u({x.x - h, x.y})) / (2 * h);
      const double gy = (pd.exact.u({x.x, x.y + h}) - pd.exact.u({x.x, x.y - h})) / (2 * h);
      EXPECT_NEAR(g.x, gx, 1e-5 * (1 + std::abs(gx)));
      EXPECT_NEAR(g.y, gy, 1e-5 * (1 + std::abs(gy)));
    }
  }
}

TEST(Expression, Arithmetic) {
  EXPECT_EQ(Expression("2+3*4")({0, 0}), 14.0);
  EXPECT_EQ(Expression("(1+2)*3")({0, 0}), 9.0);
  EXPECT_EQ(Expression("-x^2")({3, 0}), -9.0);
  EXPECT_EQ(Expression("2^3^2")({0, 0}), 512.0);
  EXPECT_EQ(Expression("x - y - 1")({5, 2}), 2.0);
  EXPECT_EQ(Expression("8/4/2")({0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(Expression("1.5e-3*x")({2, 0}), 3e-3);
}

TEST(Expression, FunctionsAndConstants) {
  EXPECT_DOUBLE_EQ(Expression("sin(pi/2)")({0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(Expression("log(e)")({0, 0}), 1.0);
  EXPECT_EQ(Expression("pow(2, 10)")({0, 0}), 1024.0);
  EXPECT_DOUBLE_EQ(Expression("atan2(1, 1)")({0, 0}), std::numbers::pi / 4);
  EXPECT_EQ(Expression("max(x, y) - min(x, y)")({1, 4}), 3.0);
  EXPECT_DOUBLE_EQ(Expression("sin(x)*sin(y)")({0.3, 0.7}), std::sin(0.3) * std::sin(0.7));
}

TEST(Expression, ErrorsNameThePosition) {
  for (const char* bad : {"", "x +", "foo(x)", "z", "sin(x, y)", "pow(x)", "(x", "x y", "3 $ 4"}) {
    try {
      Expression e(bad);
      FAIL() << "accepted \"" << bad << "\"";
    } catch (const ExpressionError& e) {
      EXPECT_NE(std::string(e.what()).find("position"), std::string::npos);
    }
  }
}

TEST(Problems, ManufacturedGradientFallsBackToDifferences) {
  const ProblemDefinition a = manufactured("x^2*y", "-2*y", {0, 1, 0, 1}, "2*x*y", "x^2");
  const ProblemDefinition b = manufactured("x^2*y", "-2*y", {0, 1, 0, 1});
  const Vec2 x{0.3, 0.8};
  EXPECT_NEAR(a.exact.grad(x).x, 0.48, 1e-15);
  EXPECT_NEAR(b.exact.grad(x).x, 0.48, 1e-8);
  EXPECT_NEAR(b.exact.grad(x).y, 0.09, 1e-8);
  EXPECT_EQ(a.bc(x), a.exact.u(x));
}
