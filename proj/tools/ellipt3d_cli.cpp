#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ellipt3d/errors.hpp"
#include "ellipt3d/harness.hpp"

using namespace ellipt3d;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNotConverged = 2;

std::vector<int> parse_ns(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("bad grid size '" + item + "'");
    }
    if (used != item.size()) throw ConfigError("bad grid size '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--ns needs at least one grid size");
  return out;
}

struct Common {
  std::string problem;
  double tol = 1e-8;
  int max_outer = 5000;
  int sweeps = 10;
  int kmax = 0;
  std::string out;
  std::string cache;
  int log_every = 0;
  bool timing = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--problem", c.problem, "problem name")->required();
  app->add_option("--tol", c.tol, "max-norm residual tolerance")->capture_default_str();
  app->add_option("--max-outer", c.max_outer, "outer iteration cap")->capture_default_str();
  app->add_option("--sweeps", c.sweeps, "Gauss-Seidel sweeps per argmax refresh")->capture_default_str();
  app->add_option("--kmax", c.kmax, "cap on the direction/frame level (default: stencil width)");
  app->add_option("--out", c.out, "CSV output path");
  app->add_option("--cache", c.cache, "frame cache path (default: $ELLIPT3D_CACHE or ./ellipt3d-frames.txt)");
  app->add_option("--log-every", c.log_every, "print iter=<k> residual=<r> c=<c> every k outer iterations");
  app->add_flag("--timing", c.timing, "record wall-clock seconds in the CSV");
}

SolverConfig solver_config(const Common& c) {
  SolverConfig s;
  s.tolerance = c.tol;
  s.max_outer = c.max_outer;
  s.inner_sweeps = c.sweeps;
  if (c.log_every > 0) {
    s.log = &std::cerr;
    s.log_every = c.log_every;
  }
  return s;
}

int run(const Common& c, const std::vector<int>& ns) {
  StudyConfig cfg;
  cfg.problem = c.problem;
  cfg.ns = ns;
  cfg.solver = solver_config(c);
  cfg.k_limit = c.kmax;
  cfg.timing = c.timing;
  if (c.kmax < 0) throw ConfigError("--kmax must not be negative");
  cfg.validate();

  const Problem problem = make_problem(c.problem);
  FrameHierarchy frames;
  if (problem.uses_frames) {
    int need = 1;
    for (int n : ns) need = std::max(need, stencil_width_for(problem, n, c.kmax));
    frames = load_or_build_frames(need, c.cache.empty() ? default_cache_path() : c.cache, &std::cerr);
  }

  bool all_converged = true;
  StudyResult result = run_study(cfg, problem.uses_frames ? &frames : nullptr, [&](const RunRecord& r) {
    all_converged = all_converged && r.converged;
    std::printf("n=%d h=%.6g nodes=%zu+%zu max_error=%.6e iters=%d residual=%.3e%s", r.n, r.h, r.interior,
                r.boundary, r.max_error, r.iterations, r.residual, r.converged ? "" : " NOT CONVERGED");
    if (r.c) std::printf(" c=%.10g", *r.c);
    std::printf("\n");
    std::fflush(stdout);
  });
  if (result.rate) std::printf("rate=%.4f\n", *result.rate);
  if (!c.out.empty()) emit_csv(result, c.out);
  return all_converged ? 0 : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotone generalized finite difference solvers for 3D elliptic problems"};
  app.require_subcommand(1);

  Common solve_opts;
  int n = 0;
  auto* solve = app.add_subcommand("solve", "solve one problem at one resolution");
  add_common(solve, solve_opts);
  solve->add_option("--n", n, "lattice cells per side")->required();

  Common study_opts;
  std::string ns = "8,12,16,20";
  auto* study = app.add_subcommand("study", "convergence study over several resolutions");
  add_common(study, study_opts);
  study->add_option("--ns", ns, "comma-separated grid sizes")->capture_default_str();

  int frames_kmax = 0;
  std::string frames_cache;
  auto* frames = app.add_subcommand("frames", "precompute the frame hierarchy cache");
  frames->add_option("--kmax", frames_kmax, "deepest level")->required();
  frames->add_option("--cache", frames_cache, "cache path (default: $ELLIPT3D_CACHE or ./ellipt3d-frames.txt)");

  auto* list = app.add_subcommand("problems", "list registered problems");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*solve) return run(solve_opts, {n});
    if (*study) return run(study_opts, parse_ns(ns));
    if (*frames) {
      const std::string path = frames_cache.empty() ? default_cache_path() : frames_cache;
      FrameHierarchy h = precompute_frames(frames_kmax, path);
      for (int k = 1; k <= h.k_max; ++k)
        std::printf("k=%d directions=%zu frames=%zu dtheta=%.6f\n", k, enumerate_directions(k).directions.size(),
                    h.level(k).frames.size(), h.level(k).dtheta);
      std::printf("wrote %s\n", path.c_str());
      return 0;
    }
    if (*list) {
      for (const auto& name : problem_names()) std::printf("%-20s %s\n", name.c_str(), make_problem(name).summary.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return 0;
}
