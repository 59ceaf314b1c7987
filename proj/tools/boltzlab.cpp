// boltzlab: command-line driver
//
//   boltzlab <simulate|flow|covering|spectrum|decay|diagnose> MANIFEST [--workers N] [--output DIR]
//
// Exit codes: 0 success, 2 validation error, 3 numerical invariant failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <boltz/io.hpp>
#include <boltz/solver.hpp>

#include <iostream>

using namespace boltz;
using json = nlohmann::ordered_json;

namespace {

const std::set<std::string> kCommon = {"potential", "output", "workers"};
const std::set<std::string> kGrid = {"grid.x_counts", "grid.v_max", "grid.v_nodes"};
const std::set<std::string> kCollision = {"collision.gamma", "collision.q0", "collision.order", "collision.beta",
                                          "collision.asym_tol"};
const std::set<std::string> kSolver = {"solver.dt",          "solver.t_end",       "solver.mode",
                                       "solver.interpolation_order", "solver.spectral_x", "solver.collision_substeps",
                                       "solver.diagnostics_every",   "solver.seed",       "solver.flow_substeps",
                                       "solver.drift_tol",   "solver.entropy_slack", "solver.certificate_ceiling",
                                       "solver.fit_start"};
const std::set<std::string> kInitial = {"initial.kind", "initial.amplitude", "initial.snapshot", "snapshot.every"};
const std::set<std::string> kFlow = {"flow.x", "flow.v", "flow.T0", "flow.dt"};
const std::set<std::string> kCovering = {"covering.T0", "covering.N",         "covering.epsilon",
                                         "covering.M1", "covering.M2",        "covering.M3",
                                         "covering.dt", "covering.max_depth", "covering.audit_samples",
                                         "covering.audit_seed"};
const std::set<std::string> kSpectrum = {"spectrum.runs", "spectrum.seed", "spectrum.amplitude", "spectrum.kind",
                                         "spectrum.lanczos_iter"};
const std::set<std::string> kDecay = {"decay.series", "decay.M_hat", "decay.nu0", "decay.phi_sup", "decay.fit_start",
                                      "decay.tol"};
const std::set<std::string> kDiagnose = {"diagnose.snapshot", "diagnose.reference", "diagnose.deltas",
                                         "diagnose.negative_tol"};

std::set<std::string> merge(std::initializer_list<std::set<std::string>> parts) {
  std::set<std::string> out;
  for (const auto& p : parts) out.insert(p.begin(), p.end());
  return out;
}

// numerical invariant failure: outputs are kept, exit code 3
struct InvariantFailure {
  std::string what;
};

struct Context {
  Manifest m;
  std::string output;
  int workers = 1;
  std::optional<PotentialField> field;
  std::string potential_hash;

  json provenance() const {
    json p;
    p["manifest_hash"] = m.hash();
    if (field) p["potential_hash"] = potential_hash;
    return p;
  }
  std::string out(const std::string& name) const { return (fs::path(output) / name).string(); }
};

json header(const std::string& kind, const Context& c) {
  json j;
  j["schema"] = "boltzlab/" + kind + "/1";
  j["version"] = kVersion;
  j["provenance"] = c.provenance();
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json fit_json(const DecayFit& f) {
  return {{"lambda", f.lambda},   {"C", f.C},           {"r_squared", f.r_squared},
          {"t_start", f.t_start}, {"t_end", f.t_end},   {"degenerate", f.degenerate}};
}

CollisionSpec collision_spec(const Context& c) {
  CollisionSpec s;
  s.d = c.field->dim();
  s.gamma = c.m.num("collision.gamma", 1.0);
  s.q0 = c.m.str("collision.q0", "constant");
  s.order = static_cast<int>(c.m.integer("collision.order", 4));
  s.beta = c.m.num("collision.beta", -1.0);
  s.asym_tol = c.m.num("collision.asym_tol", 1e-3);
  s.vmax = c.m.num("grid.v_max", 6.0);
  s.n = static_cast<int>(c.m.integer("grid.v_nodes", s.d == 2 ? 17 : 12));
  s.workers = c.workers;
  s.validate();
  return s;
}

SpatialGrid spatial_grid(const Context& c) {
  const int d = c.field->dim();
  std::vector<int> counts = c.m.has("grid.x_counts") ? c.m.ints("grid.x_counts") : std::vector<int>(d, 8);
  require(static_cast<int>(counts.size()) == d, "grid.x_counts needs one count per axis");
  return SpatialGrid(c.field->torus(), counts);
}

SolverConfig solver_config(const Context& c) {
  SolverConfig s;
  s.dt = c.m.num("solver.dt", s.dt);
  s.t_end = c.m.num("solver.t_end", s.t_end);
  s.mode = parse_solver_mode(c.m.str("solver.mode", "nonlinear"));
  s.interpolation_order = static_cast<int>(c.m.integer("solver.interpolation_order", 1));
  s.spectral_x = c.m.flag("solver.spectral_x", false);
  s.collision_substeps = static_cast<int>(c.m.integer("solver.collision_substeps", 1));
  s.diagnostics_every = static_cast<int>(c.m.integer("solver.diagnostics_every", 1));
  s.seed = static_cast<std::uint64_t>(c.m.integer("solver.seed", 1));
  s.flow_substeps = static_cast<int>(c.m.integer("solver.flow_substeps", 4));
  s.workers = c.workers;
  s.validate();
  return s;
}

json stats_json(const KernelStats& s) {
  return {{"asymmetry", s.asymmetry}, {"null_raw", s.null_raw}, {"null_sym", s.null_sym}, {"self_share", s.self_share}};
}

// ---------------- subcommands ----------------

int cmd_simulate(Context& c) {
  c.m.allow_only(merge({kCommon, kGrid, kCollision, kSolver, kInitial}));
  auto spec = collision_spec(c);
  auto xg = spatial_grid(c);
  auto cfg = solver_config(c);
  const double drift_tol = c.m.num("solver.drift_tol", 1e-8);
  const double slack = c.m.num("solver.entropy_slack", 1e-9);
  const double ceiling = c.m.num("solver.certificate_ceiling", 1e3);
  const double fit_start = c.m.num("solver.fit_start", 0.0);
  const std::string kind = c.m.str("initial.kind", "generic");
  const long every = c.m.integer("snapshot.every", 0);
  require(every >= 0, "snapshot.every must be >= 0");
  const VelocityGrid vg(spec.d, spec.vmax, spec.n);
  auto sub = degenerate_subspace(*c.field, 256);
  DistributionField init;
  if (kind == "snapshot") {
    SnapshotMeta meta;
    init = parse_snapshot(read_file(c.m.path("initial.snapshot")), &meta);
    require(meta.potential_hash == c.potential_hash, "snapshot was written for a different potential");
    require(grid_hash(init.xg, init.vg) == grid_hash(xg, vg), "snapshot grid differs from the manifest grids");
  } else if (kind == "maxwellian") {
    init = DistributionField(xg, vg, Representation::PerturbationF);
  } else {
    init = random_perturbation(*c.field, xg, vg, sub, cfg.seed, c.m.num("initial.amplitude", 0.05),
                               parse_initial_kind(kind));
  }
  auto M = build_model(spec);
  auto F0 = init.rep == Representation::AbsoluteF ? init : to_absolute(*c.field, init);
  std::vector<std::pair<std::string, std::string>> snaps;
  int epoch = 0;
  auto on_epoch = [&](int n, double t, const Vec& f) {
    if (every > 0 && epoch++ % every == 0) {
      DistributionField fd(xg, vg, Representation::PerturbationF);
      fd.values = f;
      char name[64];
      std::snprintf(name, sizeof name, "snapshot_%06d.txt", n);
      snaps.emplace_back(name, snapshot_text(to_absolute(*c.field, fd), c.potential_hash, t));
    }
  };
  auto log = simulate(init, *c.field, M, cfg, sub, on_epoch);
  for (const auto& w : log.warnings) std::cerr << "warning: " << w << "\n";
  auto S = summarize(log, F0);
  auto cert = stability_certificate(log, log.entries.front().cons, ceiling);

  std::map<std::string, std::string> prov = {{"manifest_hash", c.m.hash()},
                                             {"potential_hash", c.potential_hash},
                                             {"kernel_hash", spec.hash()},
                                             {"grid_hash", grid_hash(xg, vg)}};
  std::vector<std::string> cols = {"t", "M", "E"};
  for (std::size_t b = 0; b < sub.basis.size(); ++b) cols.push_back("J_deg" + std::to_string(b));
  for (int k = 0; k < spec.d; ++k) cols.push_back("J" + std::to_string(k + 1));
  for (const char* n : {"entropy", "entropy_excess", "l2", "h_inf", "Lff", "nu_norm2", "min_F", "negative_nodes"})
    cols.push_back(n);
  for (double d : log.deltas) cols.push_back("deviation_lhs_" + fmt(d));
  cols.push_back("deviation_rhs_" + fmt(log.deltas.front()));
  CsvWriter csv("boltzlab/runlog/1", prov, cols);
  for (const auto& e : log.entries) {
    Vec r = {e.t, e.cons.M, e.cons.E};
    r.insert(r.end(), e.cons.J.begin(), e.cons.J.end());
    r.insert(r.end(), e.cons.J_full.begin(), e.cons.J_full.end());
    for (double v : {e.cons.entropy, e.cons.entropy_excess, e.l2, e.hinf, e.quad, e.nu_norm, e.cons.min_F,
                     double(e.cons.negative_nodes)})
      r.push_back(v);
    r.insert(r.end(), e.deviation_lhs.begin(), e.deviation_lhs.end());
    r.push_back(e.deviation_rhs.front());
    csv.row(r);
  }

  std::vector<std::string> failures;
  if (S.mass_drift > drift_tol) failures.push_back("mass drift " + fmt(S.mass_drift) + " > " + fmt(drift_tol));
  if (S.energy_drift > drift_tol) failures.push_back("energy drift " + fmt(S.energy_drift) + " > " + fmt(drift_tol));
  for (double j : S.momentum_drift)
    if (j > drift_tol) failures.push_back("degenerate momentum drift " + fmt(j) + " > " + fmt(drift_tol));
  if (cfg.mode == SolverMode::Nonlinear && S.max_entropy_increase > slack)
    failures.push_back("entropy increase " + fmt(S.max_entropy_increase) + " > slack " + fmt(slack));
  if (S.deviation_violations > 0)
    failures.push_back("deviation bound |F - mu_E| <= (4/delta)(H excess + |M0| + |E0|) violated " +
                       std::to_string(S.deviation_violations) + " times");

  json j = header("simulate", c);
  j["provenance"]["kernel_hash"] = spec.hash();
  j["provenance"]["grid_hash"] = grid_hash(xg, vg);
  j["config"] = {{"dt", cfg.dt},
                 {"t_end", cfg.t_end},
                 {"steps", cfg.steps()},
                 {"mode", to_string(cfg.mode)},
                 {"interpolation_order", cfg.interpolation_order},
                 {"spectral_x", cfg.spectral_x},
                 {"collision_substeps", cfg.collision_substeps},
                 {"diagnostics_every", cfg.diagnostics_every},
                 {"seed", cfg.seed},
                 {"initial", kind}};
  j["summary"] = {{"mass_drift", S.mass_drift},
                  {"energy_drift", S.energy_drift},
                  {"degenerate_momentum_drift", S.momentum_drift},
                  {"momentum_change", S.momentum_change},
                  {"max_entropy_increase", S.max_entropy_increase},
                  {"deviation_violations", S.deviation_violations},
                  {"min_F", S.min_F}};
  Vec t = log.times(), l2 = log.series([](const LogEntry& e) { return e.l2; }),
      hi = log.series([](const LogEntry& e) { return e.hinf; });
  bool positive = std::all_of(l2.begin(), l2.end(), [](double x) { return x > 0.0; });
  if (positive && t.size() >= 3) {
    j["decay"] = {{"l2", fit_json(fit_decay(t, l2, fit_start))}, {"h_inf", fit_json(fit_decay(t, hi, fit_start))}};
  } else {
    j["decay"] = nullptr;
  }
  j["certificate"] = {{"C_measured", cert.C_measured},
                      {"numerator", cert.numerator},
                      {"denominator", cert.denominator},
                      {"zero_over_zero", cert.zero_over_zero},
                      {"holds", cert.holds},
                      {"T0", cert.T0},
                      {"C_T0", cert.C_T0},
                      {"window_end_h", cert.window_end_h},
                      {"window_bound", cert.window_bound},
                      {"recursion_holds", cert.recursion_holds}};
  const auto& ps = log.pullback;
  j["transport"] = {{"clamped_nodes", ps.clamped_nodes},
                    {"clamped_mass", ps.clamped_mass},
                    {"max_band_excess", ps.max_band_excess},
                    {"band_limit", 2.0 * std::sqrt(c.field->sup_norm())},
                    {"balance_residual", ps.balance_residual},
                    {"balanced", ps.balanced}};
  j["kernel"] = stats_json(M.stats);
  j["warnings"] = log.warnings;
  j["status"] = failures.empty() ? "ok" : "invariant_failure";
  j["failures"] = failures;

  atomic_write(c.out("run.csv"), csv.str());
  for (const auto& [name, text] : snaps) atomic_write(c.out(name), text);
  atomic_write(c.out("final_snapshot.txt"),
               snapshot_text(to_absolute(*c.field, log.final_state), c.potential_hash, log.entries.back().t));
  atomic_write(c.out("summary.json"), dump(j));
  if (!failures.empty()) throw InvariantFailure{failures.front()};
  return 0;
}

int cmd_flow(Context& c) {
  c.m.allow_only(merge({kCommon, kFlow}));
  const int d = c.field->dim();
  PhasePoint p{c.m.nums("flow.x"), c.m.nums("flow.v")};
  require(static_cast<int>(p.x.size()) == d && static_cast<int>(p.v.size()) == d, "flow.x and flow.v need d entries");
  const double T0 = c.m.num("flow.T0", 4.0), dt = c.m.num("flow.dt", 1e-3);
  auto series = det_along(*c.field, p, T0, dt);
  auto run = integrate(*c.field, p, T0, 0.0, dt, false);
  CsvWriter csv("boltzlab/flow/1", {{"manifest_hash", c.m.hash()}, {"potential_hash", c.potential_hash}},
                {"s", "det", "H_drift"});
  for (std::size_t k = 0; k < series.s.size(); ++k) csv.row({series.s[k], series.det[k], series.H_drift[k]});
  json j = header("flow", c);
  j["T0"] = T0;
  j["dt"] = dt;
  j["energy_drift"] = run.energy_drift;
  j["speed_band"] = run.speed_band;
  j["speed_band_limit"] = 2.0 * std::sqrt(c.field->sup_norm());
  j["samples"] = series.s.size();
  atomic_write(c.out("flow.csv"), csv.str());
  atomic_write(c.out("flow.json"), dump(j));
  return 0;
}

int cmd_covering(Context& c) {
  c.m.allow_only(merge({kCommon, kCovering}));
  CoveringSpec spec;
  spec.M1 = static_cast<int>(c.m.integer("covering.M1", spec.M1));
  spec.M2 = static_cast<int>(c.m.integer("covering.M2", spec.M2));
  spec.M3 = static_cast<int>(c.m.integer("covering.M3", spec.M3));
  spec.dt = c.m.num("covering.dt", spec.dt);
  spec.max_depth = static_cast<int>(c.m.integer("covering.max_depth", spec.max_depth));
  spec.audit_samples = static_cast<int>(c.m.integer("covering.audit_samples", spec.audit_samples));
  spec.audit_seed = static_cast<std::uint64_t>(c.m.integer("covering.audit_seed", static_cast<long>(spec.audit_seed)));
  spec.workers = c.workers;
  const double T0 = c.m.num("covering.T0", 4.0), N = c.m.num("covering.N", 2.0);
  const double eps = c.m.num("covering.epsilon", 0.05);
  auto rep = build_covering(*c.field, T0, N, eps, spec);
  json j = header("covering", c);
  j["T0"] = rep.T0;
  j["N"] = rep.N;
  j["epsilon"] = rep.epsilon;
  j["pad"] = rep.pad;
  j["delta_star"] = rep.delta_star;
  j["M1"] = rep.M1;
  j["M2"] = rep.M2;
  j["M3"] = rep.M3;
  j["sample_points"] = rep.sample_points;
  j["unresolved_cells"] = rep.unresolved_cells;
  j["max_union_length"] = rep.max_union_length;
  j["audit"] = {{"samples", rep.audit.samples},
                {"below_delta", rep.audit.below_delta},
                {"inside", rep.audit.inside},
                {"violations", rep.audit.violations},
                {"min_abs_det_outside", rep.audit.min_abs_det_outside}};
  json cells = json::array();
  for (const auto& cell : rep.cells) {
    json iv = json::array();
    for (const auto& z : cell.intervals)
      iv.push_back({{"lo", z.lo}, {"hi", z.hi}, {"center", z.center}, {"time_cell", z.time_cell}});
    cells.push_back({{"lo", cell.lo},
                     {"hi", cell.hi},
                     {"depth", cell.depth},
                     {"zero_thresh", cell.zero_thresh},
                     {"min_outside", cell.min_outside},
                     {"resolved", cell.resolved},
                     {"intervals", iv}});
  }
  j["cells"] = cells;
  atomic_write(c.out("covering.json"), dump(j));
  return 0;
}

int cmd_spectrum(Context& c) {
  c.m.allow_only(merge({kCommon, kGrid, kCollision, kSolver, kSpectrum}));
  auto spec = collision_spec(c);
  auto xg = spatial_grid(c);
  auto cfg = solver_config(c);
  cfg.mode = SolverMode::Linearized;
  cfg.t_end = 1.0;
  const int runs = static_cast<int>(c.m.integer("spectrum.runs", 20));
  const auto seed = static_cast<std::uint64_t>(c.m.integer("spectrum.seed", 1));
  const double amp = c.m.num("spectrum.amplitude", 0.02);
  const auto kind = parse_initial_kind(c.m.str("spectrum.kind", "zero_invariant"));
  require(kind != InitialKind::Generic, "spectrum runs need zero-invariant or microscopic initial data");
  const int iters = static_cast<int>(c.m.integer("spectrum.lanczos_iter", 300));
  auto M = build_model(spec);
  auto sub = degenerate_subspace(*c.field, 256);
  auto sp = spectral_summary(M, iters);
  auto bat = run_battery(*c.field, M, xg, sub, cfg, runs, seed, amp, kind, 1e-8, c.workers);
  auto gram = null_solution_test(*c.field, xg, M.grid, sub);
  const double nu0 = nu_min(M);
  const double M_hat = bat.positivity.M_hat;
  json j = header("spectrum", c);
  j["provenance"]["kernel_hash"] = spec.hash();
  j["sigma_gap"] = sp.sigma_gap;
  j["min_eigenvalue"] = sp.min_eigenvalue;
  j["nu_max"] = sp.nu_max;
  j["nu0"] = nu0;
  j["M_hat"] = M_hat;
  j["rayleigh_ratios"] = bat.positivity.ratios;
  j["gram"] = {{"G11", gram.G11},
               {"G12", gram.G12},
               {"G22", gram.G22},
               {"determinant", gram.determinant},
               {"degenerate_coeff", gram.degenerate_coeff},
               {"pass", gram.pass}};
  j["lambda_admissible"] = M_hat > 0.0 ? json(lambda_admissible(nu0, M_hat, c.field->sup_norm())) : json(nullptr);
  j["kernel"] = stats_json(M.stats);
  atomic_write(c.out("spectrum.json"), dump(j));
  if (!(M_hat > 0.0)) throw InvariantFailure{"M_hat = " + fmt(M_hat) + " is not positive"};
  if (!gram.pass) throw InvariantFailure{"Gram determinant " + fmt(gram.determinant) + " is not positive"};
  return 0;
}

int cmd_decay(Context& c) {
  c.m.allow_only(merge({kCommon, kDecay}));
  auto [t, y] = read_series_csv(read_file(c.m.path("decay.series")));
  const double M_hat = c.m.num("decay.M_hat", 0.0), nu0 = c.m.num("decay.nu0", 0.0);
  double phi_sup = c.m.num("decay.phi_sup", c.field ? c.field->sup_norm() : 0.0);
  const double fit_start = c.m.num("decay.fit_start", -INFINITY);
  const double tol = c.m.num("decay.tol", 1e-10);
  json j = header("decay", c);
  try {
    auto r = decay_bootstrap(t, y, M_hat, nu0, phi_sup, fit_start, tol);
    j["fit"] = fit_json(r.fit);
    j["lambda_discrete"] = r.lambda_discrete;
    j["lambda_admissible"] = r.lambda_adm;
    j["holds_at_admissible"] = r.holds_at_adm;
    j["unit_norms"] = r.unit_norms;
    j["status"] = "ok";
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NonMonotone) throw;
    j["status"] = "non_monotone";
    j["error"] = e.what();
    atomic_write(c.out("decay.json"), dump(j));
    throw InvariantFailure{e.what()};
  }
  atomic_write(c.out("decay.json"), dump(j));
  return 0;
}

int cmd_diagnose(Context& c) {
  c.m.allow_only(merge({kCommon, kDiagnose}));
  SnapshotMeta meta;
  auto F = parse_snapshot(read_file(c.m.path("diagnose.snapshot")), &meta);
  require(meta.potential_hash == c.potential_hash, "snapshot was written for a different potential");
  if (F.rep == Representation::PerturbationF) F = to_absolute(*c.field, F);
  require(F.rep == Representation::AbsoluteF, "diagnose needs an absolute_F or perturbation_f snapshot");
  DistributionField F0 = F;
  if (c.m.has("diagnose.reference")) {
    SnapshotMeta m0;
    F0 = parse_snapshot(read_file(c.m.path("diagnose.reference")), &m0);
    require(m0.potential_hash == c.potential_hash, "reference snapshot was written for a different potential");
    if (F0.rep == Representation::PerturbationF) F0 = to_absolute(*c.field, F0);
    require(grid_hash(F0.xg, F0.vg) == meta.grid_hash, "reference snapshot grid differs");
  }
  Vec deltas = c.m.has("diagnose.deltas") ? c.m.nums("diagnose.deltas") : Vec{0.1, 0.5, 0.9};
  const double neg_tol = c.m.num("diagnose.negative_tol", 1e-8);
  auto sub = degenerate_subspace(*c.field, 256);
  auto r0 = conservation_report(*c.field, F0, sub, MomentumMode::MuE);
  auto r = conservation_report(*c.field, F, sub, MomentumMode::MuE);
  auto cons_json = [](const ConservationReport& x) {
    return json{{"M", x.M},
                {"E", x.E},
                {"J_degenerate", x.J},
                {"J", x.J_full},
                {"entropy", x.entropy},
                {"entropy_excess", x.entropy_excess},
                {"negative_nodes", x.negative_nodes},
                {"min_F", x.min_F}};
  };
  json j = header("diagnose", c);
  j["t"] = meta.t;
  j["conservation"] = cons_json(r);
  j["reference"] = cons_json(r0);
  std::vector<std::string> failures;
  json dev = json::array();
  for (double d : deltas) {
    auto b = deviation_check(r0, *c.field, F, d);
    dev.push_back({{"delta", d}, {"lhs", b.lhs}, {"rhs", b.rhs}, {"holds", b.holds}});
    if (!b.holds)
      failures.push_back("deviation bound sum |F - mu_E| 1{|F - mu_E| >= delta mu_E} <= (4/delta)(H(F0) - H(mu_E) + "
                         "|M0| + |E0|) fails at delta = " + fmt(d) + ": " + fmt(b.lhs) + " > " + fmt(b.rhs));
  }
  j["deviation"] = dev;
  if (r.min_F < -neg_tol) failures.push_back("negative density: min F = " + fmt(r.min_F));
  if (r.entropy_excess > r0.entropy_excess + 1e-9)
    failures.push_back("entropy excess " + fmt(r.entropy_excess) + " exceeds the reference " +
                       fmt(r0.entropy_excess));
  j["status"] = failures.empty() ? "ok" : "invariant_failure";
  j["failures"] = failures;
  atomic_write(c.out("diagnose.json"), dump(j));
  if (!failures.empty()) throw InvariantFailure{failures.front()};
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"boltzlab: kinetic simulation laboratory"};
  app.set_version_flag("--version", std::string("boltzlab ") + kVersion);
  std::string sub, manifest_path, output;
  int workers = 0;
  app.add_option("subcommand", sub, "simulate | flow | covering | spectrum | decay | diagnose")
      ->required()
      ->check(CLI::IsMember({"simulate", "flow", "covering", "spectrum", "decay", "diagnose"}));
  app.add_option("manifest", manifest_path, "key = value manifest")->required();
  app.add_option("--workers", workers, "worker threads (results do not depend on it)")->check(CLI::NonNegativeNumber);
  app.add_option("--output", output, "output directory (overrides the manifest)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    Context c;
    c.m = Manifest::load(manifest_path);
    c.workers = workers > 0 ? workers : static_cast<int>(c.m.integer("workers", 1));
    require(c.workers >= 1, "workers must be >= 1");
    c.output = !output.empty() ? output : (c.m.has("output") ? c.m.path("output") : std::string("boltzlab-out"));
    if (c.m.has("potential")) {
      const std::string p = c.m.path("potential");
      if (!fs::exists(p)) throw Error(ErrorKind::Io, "potential file not found: " + p);
      c.field = load_potential(p);
      c.potential_hash = spec_hash(*c.field);
    } else if (sub != "decay") {
      throw Error(ErrorKind::Parse, "manifest is missing 'potential'");
    }
    if (sub == "simulate") return cmd_simulate(c);
    if (sub == "flow") return cmd_flow(c);
    if (sub == "covering") return cmd_covering(c);
    if (sub == "spectrum") return cmd_spectrum(c);
    if (sub == "decay") return cmd_decay(c);
    return cmd_diagnose(c);
  } catch (const InvariantFailure& f) {
    std::cerr << "boltzlab: invariant failure: " << f.what << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "boltzlab: " << e.what() << "\n";
    return e.is_validation() ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "boltzlab: " << e.what() << "\n";
    return 3;
  }
}
