// Command-line driver: run one JSON-configured experiment, or compare the
// final L-infinity errors of two moving-mesh runs.

#include <cstdio>
#include <filesystem>
#include <string>

#include "CLI11.hpp"
#include "mmigm/experiments.hpp"

namespace {

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kSolver = 3, kWrap = 4 };

int run(const std::string& config_path, const std::string& out_override, bool quiet) {
  const mmigm::RunConfig cfg = mmigm::load_config(config_path);
  const std::string dir = out_override.empty() ? cfg.output_directory : out_override;
  std::filesystem::create_directories(dir);
  if (cfg.mode == mmigm::RunMode::Convergence) {
    const auto res = mmigm::run_convergence(cfg, dir);
    if (!quiet) {
      std::printf("%8s %14s %8s %14s %8s\n", "dofs", "L2", "order", "H1", "order");
      for (std::size_t k = 0; k < res.levels.size(); ++k) {
        const auto& r = res.levels[k].report;
        const auto& o2 = res.orders.L2[k];
        const auto& o1 = res.orders.H1[k];
        std::printf("%8zu %14.6e %8s %14.6e %8s\n", r.dofs, r.L2, o2 ? std::to_string(*o2).substr(0, 6).c_str() : "-",
                    r.H1_semi, o1 ? std::to_string(*o1).substr(0, 6).c_str() : "-");
      }
    }
  } else {
    const auto res = mmigm::run_movemesh(cfg, dir);
    const auto& st = res.state;
    if (!quiet) {
      std::printf("dofs %zu, %zu iterations, %zu mesh updates, %s\n", st.geometry.dofs(), st.trace.size(),
                  st.mesh_updates, st.stop == mmigm::StopReason::Converged ? "converged" : "max_outer reached");
      std::printf("         %14s %14s %14s %14s\n", "L2", "Linf", "max elem L2", "max|u_h|");
      std::printf("initial  %14.6e %14.6e %14.6e %14.6f\n", st.initial_report->L2, st.initial_report->L_inf,
                  st.initial_report->max_element_L2(), res.initial_max_abs);
      std::printf("final    %14.6e %14.6e %14.6e %14.6f\n", st.final_report->L2, st.final_report->L_inf,
                  st.final_report->max_element_L2(), res.final_max_abs);
    }
  }
  if (!quiet) std::printf("outputs in %s\n", dir.c_str());
  return kOk;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const mmigm::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const mmigm::MeshWrapError& e) {
    std::fprintf(stderr, "mesh wrap failure: %s\n", e.what());
    return kWrap;
  } catch (const mmigm::SolverError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kSolver;
  } catch (const mmigm::AssemblyError& e) {
    std::fprintf(stderr, "assembly failure: %s\n", e.what());
    return kSolver;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving-mesh isogeometric Poisson solver"};
  app.require_subcommand(1);

  std::string config, out;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run_cmd->add_option("config", config, "Config file")->required();
  run_cmd->add_option("--out", out, "Output directory (overrides output.directory)");
  run_cmd->add_flag("--quiet", quiet, "Print nothing on success");

  std::string a, b;
  auto* cmp_cmd = app.add_subcommand("compare-linf", "Compare final L-infinity errors of two movemesh summaries");
  cmp_cmd->add_option("summary_a", a, "summary.json of run A")->required();
  cmp_cmd->add_option("summary_b", b, "summary.json of run B")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  if (*run_cmd) return guarded([&] { return run(config, out, quiet); });
  return guarded([&] {
    const auto c = mmigm::compare_linf(a, b);
    std::printf("Linf_A %.6e\nLinf_B %.6e\nratio  %.6f\n", c.linf_a, c.linf_b, c.ratio);
    return kOk;
  });
}
