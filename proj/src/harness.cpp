#include "ellipt3d/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "ellipt3d/errors.hpp"

namespace ellipt3d {

namespace {

double r2(const Vec3& p) { return dot(p, p); }

Problem linear_degenerate() {
  Problem p;
  p.name = "linear-degenerate";
  p.summary = "-u_nunu = 0 along an irrational direction, Dirichlet data";
  p.domain = SignedDistanceDomain::ball(1.0);
  p.exact = [](const Vec3& x) {
    return std::sin(2 * std::numbers::pi * (x.x - std::sqrt(2.0) * x.y - std::sqrt(3.0) * x.z));
  };
  p.assemble = [exact = p.exact](DiscreteOperator& op, const ProblemSetup&) {
    const Vec3 nu = normalized(Vec3{1, -1, (std::sqrt(3.0) + std::sqrt(6.0)) / 3});
    const DirectionalBranch br[] = {{nu, {}}};
    assemble_directional_max(op, br);
    assemble_dirichlet(op, exact);
  };
  return p;
}

double two_operator_f(const Vec3& x) {
  const double e = std::exp(0.5 * r2(x));
  return std::max(-0.5 * e * (2 + x.x * x.x + 2 * x.x * x.y + x.y * x.y),
                  -0.5 * e * (2 + x.x * x.x - 2 * x.x * x.z + x.z * x.z));
}

Problem two_operator() {
  Problem p;
  p.name = "two-operator";
  p.summary = "max(-u_{nu1 nu1}, -u_{nu2 nu2}) = f, Dirichlet data";
  p.domain = SignedDistanceDomain::ball(1.0);
  p.exact = [](const Vec3& x) { return std::exp(0.5 * r2(x)); };
  p.assemble = [exact = p.exact](DiscreteOperator& op, const ProblemSetup&) {
    auto src = [](const Vec3& x) { return -two_operator_f(x); };
    const DirectionalBranch br[] = {{normalized(Vec3{1, 1, 0}), src}, {normalized(Vec3{-1, 0, 1}), src}};
    assemble_directional_max(op, br);
    assemble_dirichlet(op, exact);
  };
  return p;
}

Problem convex_envelope() {
  Problem p;
  p.name = "convex-envelope";
  p.summary = "max(-lambda_1(D^2 u), u - g) = 0, g = min(2|x|, 0.2)";
  p.domain = SignedDistanceDomain::ball(0.5);
  p.exact = [](const Vec3& x) { return 0.4 * norm(x); };
  p.assemble = [](DiscreteOperator& op, const ProblemSetup& s) {
    std::vector<DirectionalBranch> br;
    for (const IVec3& d : enumerate_directions(s.k_star).directions) br.push_back({unit(d), {}});
    assemble_directional_max(op, br, [](const Vec3& x) { return std::min(2 * norm(x), 0.2); });
    assemble_dirichlet(op, [](const Vec3&) { return 0.2; });
  };
  return p;
}

Problem monge_ampere() {
  Problem p;
  p.name = "monge-ampere";
  p.summary = "det D^2 u = f with the convex extension, Dirichlet data";
  p.domain = SignedDistanceDomain::ball(0.5);
  p.exact = [](const Vec3& x) { return std::exp(0.5 * r2(x)); };
  p.uses_frames = true;
  p.assemble = [exact = p.exact](DiscreteOperator& op, const ProblemSetup&) {
    auto f = [](const Vec3& x) { return std::exp(1.5 * r2(x)) * (1 + r2(x)); };
    assemble_eigen(op, EigenFunctionSpec::monge_ampere(f), enumerate_frames(1, 1).frames);
    assemble_dirichlet(op, exact);
  };
  return p;
}

Problem poisson_neumann() {
  Problem p;
  p.name = "poisson-neumann-eig";
  p.summary = "-Laplacian u + c f = 0, du/dn = e^{1/2}";
  p.domain = SignedDistanceDomain::ball(1.0);
  p.exact = [](const Vec3& x) { return std::exp(0.5 * r2(x)); };
  p.exact_c = 1.0;
  p.eigenvalue = true;
  p.uses_frames = true;
  p.assemble = [](DiscreteOperator& op, const ProblemSetup&) {
    assemble_eigen(op, EigenFunctionSpec::laplacian({}), enumerate_frames(1, 1).frames);
    set_eigenvalue_shift(op, [](const Vec3& x) { return (3 + r2(x)) * std::exp(0.5 * r2(x)); });
    assemble_neumann(op, [](const Vec3&) { return std::exp(0.5); });
  };
  return p;
}

const Vec3 kShift{2, 1, -1};

Problem minimal_lagrangian() {
  Problem p;
  p.name = "minimal-lagrangian";
  p.summary = "-sum(arctan max(l,0) + min(l,0)) + c = 0, transport boundary onto a shifted ball";
  p.domain = SignedDistanceDomain::ball(1.0);
  p.exact = [](const Vec3& x) { return 0.5 * r2(x + kShift); };
  p.exact_c = 3 * std::numbers::pi / 4;
  p.eigenvalue = true;
  p.uses_frames = true;
  p.assemble = [](DiscreteOperator& op, const ProblemSetup& s) {
    assemble_eigen(op, EigenFunctionSpec::minimal_lagrangian({}), enumerate_frames(1, 1).frames);
    set_eigenvalue_shift(op, [](const Vec3&) { return 1.0; });
    assemble_ot_boundary(op, OTBoundarySpec::ball(kShift, 1.0), enumerate_directions(s.k_star));
  };
  return p;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string opt17(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); }

}  // namespace

const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"linear-degenerate", "two-operator",        "convex-envelope",
                                              "monge-ampere",      "poisson-neumann-eig", "minimal-lagrangian"};
  return names;
}

Problem make_problem(std::string_view name) {
  if (name == "linear-degenerate") return linear_degenerate();
  if (name == "two-operator") return two_operator();
  if (name == "convex-envelope") return convex_envelope();
  if (name == "monge-ampere") return monge_ampere();
  if (name == "poisson-neumann-eig") return poisson_neumann();
  if (name == "minimal-lagrangian") return minimal_lagrangian();
  std::string known;
  for (const auto& n : problem_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown problem '" + std::string(name) + "' (known: " + known + ")");
}

int stencil_width_for(const Problem& problem, int n, int k_limit) {
  const int w = GridParams::for_lattice(n, problem.domain.bounding_cube().side).stencil_width();
  return k_limit > 0 ? std::min(w, k_limit) : w;
}

double max_error(const Problem& problem, const PointCloud& cloud, const SolveState& state) {
  double shift = 0.0;
  if (problem.eigenvalue) {
    const NodeId pin = state.pin >= 0 ? state.pin : default_pin(cloud);
    shift = problem.exact(cloud.position(pin)) - state.u[static_cast<std::size_t>(pin)];
  }
  double m = 0.0;
  for (NodeId i = 0; i < static_cast<NodeId>(cloud.size()); ++i)
    m = std::max(m, std::abs(state.u[static_cast<std::size_t>(i)] + shift - problem.exact(cloud.position(i))));
  return m;
}

RunOutcome run_problem(const Problem& problem, int n, const SolverConfig& config, const FrameHierarchy* frames,
                       const RunOutcome* warm, int k_limit) {
  if (n < 6) throw ConfigError("n must be at least 6");
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  out.cloud = std::make_shared<const PointCloud>(assemble_point_cloud(problem.domain, n));
  const PointCloud& cloud = *out.cloud;
  ProblemSetup setup{n, stencil_width_for(problem, n, k_limit)};
  if (problem.uses_frames) {
    if (!frames) throw ConfigError("problem '" + problem.name + "' needs a frame hierarchy");
    if (frames->k_max < setup.k_star)
      throw ConfigError("frame hierarchy has kmax=" + std::to_string(frames->k_max) + " but n=" +
                        std::to_string(n) + " needs " + std::to_string(setup.k_star));
  }

  DiscreteOperator op(out.cloud);
  problem.assemble(op, setup);
  const NodeId pin = problem.eigenvalue ? default_pin(cloud) : -1;

  std::optional<SolveState> init;
  if (warm) {
    init = prolong(warm->state, *warm->cloud, cloud);
    init->pin = pin;
    if (problem.eigenvalue) {
      const double p = init->u[static_cast<std::size_t>(pin)];
      for (double& v : init->u) v -= p;
    } else {
      init->c.reset();
      // Dirichlet values are known exactly; start from them.
      for (NodeId i = 0; i < static_cast<NodeId>(cloud.size()); ++i)
        if (op.scheme(i).kind == SchemeKind::Dirichlet)
          init->u[static_cast<std::size_t>(i)] = op.local_inverse(i, init->u);
    }
  } else {
    init = initial_state(op, pin);
  }

  if (problem.uses_frames) {
    out.state = solve_multilevel(op, *frames, setup.k_star, config, std::move(init));
  } else {
    out.state = solve(op, config, std::move(init));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  RunRecord& r = out.record;
  r.n = n;
  r.h = cloud.params().h;
  r.interior = cloud.interior_count();
  r.boundary = cloud.boundary_count();
  r.max_error = max_error(problem, cloud, out.state);
  r.iterations = out.state.iterations;
  r.seconds = secs;
  r.c = out.state.c;
  r.converged = out.state.converged;
  r.residual = out.state.residual_history.empty() ? 0.0 : out.state.residual_history.back();
  return out;
}

void StudyConfig::validate() const {
  make_problem(problem);
  solver.validate();
  if (k_limit < 0) throw ConfigError("kmax must not be negative");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 6) throw ConfigError("grid sizes must be at least 6");
    if (i > 0 && ns[i] <= ns[i - 1]) throw ConfigError("grid sizes must be strictly increasing");
  }
}

std::optional<double> fit_rate(std::span<const RunRecord> records, std::size_t min_points) {
  if (records.size() < std::max<std::size_t>(min_points, 2)) return std::nullopt;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const RunRecord& r : records) {
    if (!(r.max_error > 0) || !(r.h > 0)) return std::nullopt;
    const double x = std::log(r.h), y = std::log(r.max_error);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double m = static_cast<double>(records.size());
  const double den = m * sxx - sx * sx;
  if (!(den > 0)) return std::nullopt;
  return (m * sxy - sx * sy) / den;
}

StudyResult run_study(const StudyConfig& config, const FrameHierarchy* frames, const RunCallback& on_run) {
  config.validate();
  const Problem problem = make_problem(config.problem);
  StudyResult result;
  result.problem = problem.name;
  std::optional<RunOutcome> prev;
  for (int n : config.ns) {
    RunOutcome out = run_problem(problem, n, config.solver, frames,
                                 config.warm_start && prev ? &*prev : nullptr, config.k_limit);
    if (!config.timing) out.record.seconds.reset();
    result.records.push_back(out.record);
    result.records.back().rate_running = fit_rate(result.records, 2);
    if (on_run) on_run(result.records.back());
    prev = std::move(out);
  }
  result.rate = fit_rate(result.records);
  return result;
}

void emit_csv(const StudyResult& result, std::ostream& os) {
  os << "n,h,interior,boundary,max_error,rate_running,iters,seconds,c\n";
  for (const RunRecord& r : result.records)
    os << r.n << ',' << fmt17(r.h) << ',' << r.interior << ',' << r.boundary << ',' << fmt17(r.max_error) << ','
       << opt17(r.rate_running) << ',' << r.iterations << ',' << opt17(r.seconds) << ',' << opt17(r.c) << '\n';
}

void emit_csv(const StudyResult& result, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  emit_csv(result, os);
  os.flush();
  if (!os) throw Error("write to '" + path + "' failed");
}

StudyResult parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "n,h,interior,boundary,max_error,rate_running,iters,seconds,c")
    throw Error("not a study CSV: bad header");
  StudyResult result;
  auto real = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw Error("bad number '" + s + "' in study CSV");
    return v;
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 9) throw Error("study CSV row has " + std::to_string(f.size()) + " fields");
    try {
      RunRecord r;
      r.n = std::stoi(f[0]);
      r.h = real(f[1]).value();
      r.interior = std::stoul(f[2]);
      r.boundary = std::stoul(f[3]);
      r.max_error = real(f[4]).value();
      r.rate_running = real(f[5]);
      r.iterations = std::stoi(f[6]);
      r.seconds = real(f[7]);
      r.c = real(f[8]);
      result.records.push_back(r);
    } catch (const std::logic_error&) {
      throw Error("malformed study CSV row: " + line);
    }
  }
  result.rate = fit_rate(result.records);
  return result;
}

std::string default_cache_path() {
  if (const char* env = std::getenv("ELLIPT3D_CACHE"); env && *env) return env;
  return "ellipt3d-frames.txt";
}

FrameHierarchy precompute_frames(int k_max, const std::string& path) {
  if (k_max < 1) throw ConfigError("kmax must be at least 1");
  FrameHierarchy h = build_hierarchy(k_max);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  save_hierarchy(h, os);
  os.flush();
  if (!os) throw Error("write to '" + path + "' failed");
  return h;
}

FrameHierarchy load_or_build_frames(int k_max, const std::string& path, std::ostream* warn) {
  if (k_max < 1) throw ConfigError("kmax must be at least 1");
  std::ifstream is(path, std::ios::binary);
  std::string why;
  if (is) {
    try {
      FrameHierarchy h = load_hierarchy(is);
      if (h.k_max >= k_max) return h;
      why = "holds kmax=" + std::to_string(h.k_max) + ", need " + std::to_string(k_max);
    } catch (const FrameCacheError& e) {
      why = e.what();
    }
    if (warn) *warn << "warning: frame cache '" << path << "' unusable (" << why << "); rebuilding\n";
  }
  try {
    return precompute_frames(k_max, path);
  } catch (const Error& e) {
    if (warn) *warn << "warning: " << e.what() << "; continuing without a cache\n";
    return build_hierarchy(k_max);
  }
}

}  // namespace ellipt3d
