#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ellipt3d/frames.hpp"
#include "ellipt3d/operators.hpp"
#include "ellipt3d/solver.hpp"

namespace ellipt3d {

struct ProblemSetup {
  int n = 0;
  int k_star = 1;  ///< widest stencil, floor(epsilon / h)
};

/// A registered test problem: domain, scheme assembly and exact solution.
struct Problem {
  std::string name;
  std::string summary;
  SignedDistanceDomain domain = SignedDistanceDomain::ball(1.0);
  FieldFn exact;
  std::optional<double> exact_c;
  bool eigenvalue = false;   ///< solved with the extra unknown c and a pin
  bool uses_frames = false;  ///< eigen schemes, solved level by level
  std::function<void(DiscreteOperator&, const ProblemSetup&)> assemble;
};

const std::vector<std::string>& problem_names();
/// Throws ConfigError on an unknown name.
Problem make_problem(std::string_view name);

struct RunRecord {
  int n = 0;
  double h = 0.0;
  std::size_t interior = 0;
  std::size_t boundary = 0;
  double max_error = 0.0;
  std::optional<double> rate_running;
  int iterations = 0;
  std::optional<double> seconds;
  std::optional<double> c;
  bool converged = false;
  double residual = 0.0;
};

struct RunOutcome {
  RunRecord record;
  SolveState state;
  std::shared_ptr<const PointCloud> cloud;
};

/// Max error over every cloud node; eigenvalue problems compare after
/// shifting both solutions to vanish at the pin.
double max_error(const Problem& problem, const PointCloud& cloud, const SolveState& state);

/// One solve at resolution n, optionally warm-started from a coarser run.
/// Direction and frame sets go up to the stencil width, capped by k_limit
/// when positive; `frames` must reach that level when the problem uses frames.
RunOutcome run_problem(const Problem& problem, int n, const SolverConfig& config,
                       const FrameHierarchy* frames, const RunOutcome* warm = nullptr, int k_limit = 0);

struct StudyConfig {
  std::string problem;
  std::vector<int> ns{8, 12, 16, 20};
  SolverConfig solver;
  bool warm_start = true;
  int k_limit = 0;  ///< cap on the direction/frame level, 0 for none
  bool timing = false;  ///< wall-clock seconds make the CSV nondeterministic

  void validate() const;
};

struct StudyResult {
  std::string problem;
  std::vector<RunRecord> records;
  std::optional<double> rate;  ///< needs at least three records
};

/// Least-squares slope of log(error) against log(h); empty below `min_points`
/// or when an error is not positive.
std::optional<double> fit_rate(std::span<const RunRecord> records, std::size_t min_points = 3);

/// Direction/frame level used at resolution n.
int stencil_width_for(const Problem& problem, int n, int k_limit = 0);

using RunCallback = std::function<void(const RunRecord&)>;
StudyResult run_study(const StudyConfig& config, const FrameHierarchy* frames,
                      const RunCallback& on_run = {});

/// Header "n,h,interior,boundary,max_error,rate_running,iters,seconds,c";
/// reals with 17 significant digits, absent values left blank.
void emit_csv(const StudyResult& result, std::ostream& os);
/// Throws Error naming the path when it cannot be written.
void emit_csv(const StudyResult& result, const std::string& path);
StudyResult parse_csv(std::istream& is);

/// $ELLIPT3D_CACHE, else ellipt3d-frames.txt in the working directory.
std::string default_cache_path();

/// Builds the hierarchy and writes it to `path`.
FrameHierarchy precompute_frames(int k_max, const std::string& path);

/// Loads `path` if it holds at least k_max levels; otherwise rebuilds,
/// rewrites the cache and reports why on `warn`.
FrameHierarchy load_or_build_frames(int k_max, const std::string& path, std::ostream* warn);

}  // namespace ellipt3d
