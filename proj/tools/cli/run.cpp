#include "run.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "config.hpp"
#include "kslab/diagnostics.hpp"
#include "kslab/errors.hpp"
#include "kslab/hybrid.hpp"
#include "kslab/io.hpp"
#include "kslab/pde.hpp"
#include "kslab/pointdyn.hpp"
#include "kslab/profiles.hpp"
#include "kslab/rescale.hpp"

namespace kslab::cli {

namespace fs = std::filesystem;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string numbered(const char* stem, std::size_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06zu%s", stem, k, ext);
  return buf;
}

json point_json(const Vec2& p) { return json::array({p.x, p.y}); }

json points_json(const std::vector<Vec2>& v) {
  json a = json::array();
  for (const auto& p : v) a.push_back(point_json(p));
  return a;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Every file a run writes goes through here so the manifest sees it.
class Output {
 public:
  explicit Output(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_);
    // A rerun into the same directory must not inherit a stale verdict.
    fs::remove(root_ / "failure.json");
    fs::remove(root_ / "manifest.json");
  }

  const fs::path& root() const { return root_; }

  fs::path path(const std::string& rel) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
    return p;
  }

  void text(const std::string& rel, const std::string& body) {
    std::ofstream os(path(rel), std::ios::binary);
    os << body;
    if (!os) throw DataError("write failed: " + rel);
  }

  void manifest(const json& meta) {
    std::sort(files_.begin(), files_.end());
    json files = json::array();
    for (const auto& rel : files_) {
      const std::string body = read_file(root_ / rel);
      files.push_back({{"path", rel}, {"bytes", body.size()}, {"fnv1a64", hex64(fnv1a64(body))}});
    }
    json m = meta;
    m["files"] = files;
    std::ofstream os(root_ / "manifest.json", std::ios::binary);
    os << dump(m);
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

std::string record_line(const DiagnosticsRecord& rec) { return rec.to_ndjson() + "\n"; }

void check_kind(const json& cfg, const std::string& command) {
  if (cfg.contains("kind")) {
    if (!cfg.at("kind").is_string()) throw ConfigError("'kind' must be a string");
    const auto kind = cfg.at("kind").get<std::string>();
    if (kind != command)
      throw ConfigError("config kind '" + kind + "' does not match subcommand '" + command + "'");
  }
}

// --- simulate -------------------------------------------------------------

json run_simulate(const json& cfg, const ConfigContext& ctx, Output& out) {
  const Grid2D grid = parse_grid(cfg);
  if (!cfg.contains("initial")) throw ConfigError("simulate needs 'initial'");
  const DensityField u0 = parse_initial(cfg.at("initial"), grid, ctx);
  const ForcingSpec forcing = parse_forcing(cfg);
  pde::SolverParams sp = parse_solver(cfg);
  sp.keep_snapshots = false;
  const ConcentrationThresholds th = parse_thresholds(cfg);

  std::ofstream diag(out.path("diagnostics.ndjson"), std::ios::binary);
  std::size_t frame = 0;
  const pde::Observer obs = [&](const DiagnosticsRecord& rec, const DensityField& u) {
    diag << record_line(rec);
    diag.flush();
    io::write_snapshot(out.path("snapshots/" + numbered("snap", frame++, ".ksf")), u, rec.t);
  };
  const auto tr = pde::evolve(u0, forcing, sp, th, obs);
  json summary = {{"stop", pde::stop_reason_name(tr.stop)},
                  {"steps", tr.steps},
                  {"t_final", tr.t_final},
                  {"records", tr.records.size()}};
  if (tr.detection) {
    summary["detection"] = {{"t", tr.detection->t},
                            {"local_mass_sup", tr.detection->local_mass_sup},
                            {"location", point_json(tr.detection->local_mass_location)},
                            {"ratio_to_8pi", tr.detection->local_mass_sup / (8.0 * kPi)}};
  }
  out.text("summary.json", dump(summary));
  return summary;
}

// --- pointdyn ---------------------------------------------------------------

json run_pointdyn(const json& cfg, const ConfigContext& ctx, Output& out) {
  const Frame frame = parse_frame(cfg.value("frame", std::string("q")));
  const auto config = parse_configuration(cfg, frame, ctx);
  const auto params = parse_flow(cfg);
  const double t0 = get_number(cfg, "t0", 0.0);
  const double t_end = require_number(cfg, "t_end");
  const auto tr = pointdyn::integrate(config, t0, t_end, params);

  pointdyn::write_trajectory_csv(out.path("trajectory.csv").string(), tr);
  io::write_points(out.path("final_points.csv"), PointConfiguration(tr.final_points(), frame));

  json rep = {{"frame", std::string(frame_tag(frame))},
              {"n", config.size()},
              {"accepted", tr.accepted},
              {"rejected", tr.rejected},
              {"t_final", tr.times.back()}};
  if (frame == Frame::RenormalizedP) rep["max_energy_increase"] = tr.max_energy_increase;
  if (tr.collision) {
    const auto& c = *tr.collision;
    rep["collision"] = {{"j", c.j}, {"k", c.k}, {"t", c.t}, {"separation", c.separation},
                        {"collapse_estimate", c.collapse_estimate}};
  }
  if (frame == Frame::PhysicalQ && config.size() > 1) {
    const double T = tr.collision ? tr.collision->collapse_estimate
                                  : get_number(cfg, "collapse_time", tr.times.back());
    const auto m = pointdyn::momentum_report(tr, T);
    rep["momentum"] = {{"first_momentum_drift", m.first_momentum_drift},
                       {"second_momentum_slope", m.second_momentum_slope},
                       {"derived_slope", m.derived_slope},
                       {"stated_slope", m.stated_slope},
                       {"stated_slope_matches", std::abs(m.second_momentum_slope -
                                                         m.stated_slope) <=
                                                    1e-6 * std::abs(m.stated_slope)},
                       {"max_slope_deviation", m.max_slope_deviation},
                       {"bound_ratio", m.bound_ratio},
                       {"derived_bound", m.derived_bound},
                       {"stated_bound", m.stated_bound},
                       {"separation_ratio", m.separation_ratio}};
  }
  out.text("report.json", dump(rep));
  return rep;
}

// --- critical ---------------------------------------------------------------

json run_critical(const json& cfg, const ConfigContext& ctx, Output& out) {
  const auto config = parse_configuration(cfg, Frame::RenormalizedP, ctx);
  const auto params = parse_flow(cfg);
  const double tol = get_number(cfg, "tolerance", 1e-13);
  const double max_flow = get_number(cfg, "max_flow_time", 400.0);
  const auto cp = pointdyn::find_critical_point(config, params, tol, max_flow);
  const auto& p = cp.config.points();

  json radii = json::array();
  for (const auto& x : p) radii.push_back(norm(x));
  const auto rhs = pointdyn::p_rhs(p);
  const auto gu = pointdyn::calW_unordered_gradient(p);
  const auto gl = pointdyn::calW_gradient(p);
  double static_gap = 0.0, grad_lit = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    static_gap = std::max(static_gap, norm(rhs[j] + gu[j]));
    grad_lit = std::max(grad_lit, norm(gl[j]));
  }
  Vec2 c;
  for (const auto& x : p) c += x;
  json rep = {{"n", p.size()},
              {"p", points_json(p)},
              {"radii", radii},
              {"centroid", point_json(c)},
              {"residual", cp.residual},
              {"calW", cp.energy},
              {"calW_unordered", pointdyn::calW_unordered(p)},
              {"literal_gradient_max", grad_lit},
              {"static_gradient_gap", static_gap},
              {"flow_time", cp.flow_time},
              {"newton_iterations", cp.newton_iterations}};
  io::write_points(out.path("critical_points.csv"), cp.config);
  out.text("critical.json", dump(rep));
  return rep;
}

// --- hybrid -----------------------------------------------------------------

json run_hybrid(const json& cfg, const ConfigContext& ctx, Output& out) {
  const Grid2D grid = parse_grid(cfg);
  HybridState s0{cfg.contains("atoms") ? parse_points(cfg.at("atoms"), "atoms")
                                       : std::vector<Vec2>{},
                 cfg.contains("rho") ? parse_initial(cfg.at("rho"), grid, ctx)
                                     : DensityField(grid),
                 get_number(cfg, "t0", 0.0)};
  try {
    s0.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  const ForcingSpec forcing = parse_forcing(cfg);
  const auto params = parse_hybrid(cfg);
  const auto th = parse_thresholds(cfg);

  std::ofstream diag(out.path("diagnostics.ndjson"), std::ios::binary);
  std::size_t frame = 0;
  const hybrid::HybridObserver obs = [&](const HybridState& s, const DiagnosticsRecord& rec) {
    std::string line = rec.to_ndjson();
    line.pop_back();
    line += ",\"atoms\":" + points_json(s.atoms).dump() +
            ",\"measure_mass\":" + io::format_double(rec.mass + 8.0 * kPi * s.atoms.size()) + "}";
    diag << line << "\n";
    diag.flush();
    const std::string k = numbered("state", frame++, "");
    if (!s.atoms.empty())
      io::write_points(out.path("states/" + k + "_atoms.csv"),
                       PointConfiguration(s.atoms, Frame::PhysicalQ));
    io::write_snapshot(out.path("states/" + k + "_rho.ksf"), s.rho, s.t);
  };
  const auto tr = hybrid::hybrid_evolve(s0, forcing, params, th, obs);
  json summary = {{"stop", hybrid::hybrid_stop_name(tr.stop)},
                  {"steps", tr.steps},
                  {"t_final", tr.states.back().t},
                  {"atoms_final", points_json(tr.states.back().atoms)}};
  if (tr.colliding_pair)
    summary["colliding_pair"] = {tr.colliding_pair->first, tr.colliding_pair->second};
  out.text("summary.json", dump(summary));
  return summary;
}

// --- rescale ----------------------------------------------------------------

std::vector<io::Snapshot> rescale_inputs(const json& cfg, const ConfigContext& ctx) {
  std::vector<io::Snapshot> v;
  if (cfg.contains("inputs")) {
    if (!cfg.at("inputs").is_array()) throw ConfigError("'inputs' must be an array of paths");
    for (const auto& p : cfg.at("inputs")) {
      if (!p.is_string()) throw ConfigError("'inputs' entries must be strings");
      v.push_back(io::read_snapshot(ctx.resolve(p.get<std::string>())));
    }
  } else if (cfg.contains("input")) {
    v.push_back(io::read_snapshot(ctx.resolve(cfg.at("input").get<std::string>())));
  } else if (cfg.contains("synthetic")) {
    // Bubbles of width `width` riding on q_j(t) = √(-t) p_j.
    const json& s = cfg.at("synthetic");
    const Grid2D grid = parse_grid(s);
    const auto p = parse_points(s.at("p"), "p");
    const double width = require_number(s, "width");
    if (!s.contains("times") || !s.at("times").is_array())
      throw ConfigError("synthetic needs a 'times' array");
    for (const auto& tj : s.at("times")) {
      const double t = tj.get<double>();
      if (!(t < 0.0)) throw ConfigError("synthetic times must be negative");
      const double r = std::sqrt(-t);
      auto f = [&](const Vec2& x) {
        double acc = 0.0;
        for (const auto& pj : p) acc += Bubble{width, r * pj}(x);
        return acc;
      };
      v.push_back({DensityField::sample(grid, f), t});
    }
  } else {
    throw ConfigError("rescale needs 'input', 'inputs' or 'synthetic'");
  }
  return v;
}

json run_rescale(const json& cfg, const ConfigContext& ctx, const RunOptions& opts,
                 Output& out) {
  const auto inputs = rescale_inputs(cfg, ctx);
  const double T = get_number(cfg, "collapse_time", 0.0);
  const std::optional<double> lambda =
      opts.lambda ? opts.lambda
                  : (cfg.contains("lambda") ? std::optional<double>(require_number(cfg, "lambda"))
                                            : std::nullopt);
  const Vec2 center = opts.center ? *opts.center
                                  : (cfg.contains("center") ? parse_point(cfg.at("center"), "center")
                                                            : Vec2{});
  const bool self_similar = opts.self_similar || cfg.value("self_similar", false);
  std::optional<std::vector<double>> lambdas = opts.blow_down;
  if (!lambdas && cfg.contains("blow_down")) {
    std::vector<double> l;
    for (const auto& x : cfg.at("blow_down")) l.push_back(x.get<double>());
    lambdas = l;
  }
  if (!lambda && !self_similar && !lambdas && !cfg.contains("blowup"))
    throw ConfigError("rescale needs --lambda, --self-similar, --blow-down or 'blowup'");

  json rep = json::object();
  if (lambda) {
    json slices = json::array();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      rescale::RescaleOptions ro;
      ro.allow_partial = cfg.value("allow_partial", false);
      auto r = rescale::parabolic_rescale(inputs[k].field, inputs[k].t, *lambda, center, ro);
      const std::string name = "rescaled/" + numbered("slice", k, ".ksf");
      io::write_snapshot(out.path(name), r.field, r.t);
      slices.push_back({{"file", name}, {"t", r.t}, {"mass", total_mass(r.field)},
                        {"source_mass", total_mass(inputs[k].field)}, {"partial", r.partial}});
    }
    rep["parabolic"] = {{"lambda", *lambda}, {"center", point_json(center)}, {"slices", slices}};
  }
  if (self_similar) {
    json slices = json::array();
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const auto z = rescale::to_self_similar(inputs[k].field, inputs[k].t - T);
      const std::string name = "self_similar/" + numbered("slice", k, ".ksf");
      io::write_snapshot(out.path(name), z.z, z.s);
      slices.push_back({{"file", name}, {"s", z.s}, {"mass", total_mass(z.z)}});
    }
    rep["self_similar"] = {{"collapse_time", T}, {"slices", slices}};
  }
  if (cfg.contains("blowup")) {
    const json& b = cfg.at("blowup");
    const auto w = rescale::blowup_rescale(inputs, parse_point(b.at("center"), "center"),
                                           require_number(b, "t"),
                                           get_number(b, "window", 8.0));
    json slices = json::array();
    for (std::size_t k = 0; k < w.slices.size(); ++k) {
      const std::string name = "blowup/" + numbered("slice", k, ".ksf");
      io::write_snapshot(out.path(name), w.slices[k].field, w.slices[k].t);
      slices.push_back({{"file", name}, {"tau", w.slices[k].t}, {"max", w.slices[k].field.max()}});
    }
    rep["blowup"] = {{"R", w.R}, {"center_value", w.center_value}, {"partial", w.partial},
                     {"slices", slices}};
  }
  if (lambdas) {
    std::vector<io::Snapshot> rel;
    for (const auto& s : inputs) rel.push_back({s.field, s.t - T});
    const auto n_atoms = static_cast<std::size_t>(get_number(cfg, "n_atoms", 1.0));
    const auto bd =
        rescale::blow_down(rel, *lambdas, n_atoms, parse_thresholds(cfg), center);
    json slices = json::array();
    for (std::size_t k = 0; k < bd.slices.size(); ++k) {
      const auto& s = bd.slices[k];
      const std::string name = "blow_down/" + numbered("slice", k, ".ksf");
      io::write_snapshot(out.path(name), s.field, s.t / (s.lambda * s.lambda));
      slices.push_back({{"lambda", s.lambda},
                        {"t", s.t + T},
                        {"file", name},
                        {"atoms", points_json(s.fit.atoms.points())},
                        {"q", points_json(s.q)},
                        {"residual_fraction", s.fit.residual_fraction},
                        {"genuine", s.fit.genuine}});
    }
    json fit = {{"p", points_json(bd.p)}, {"fit_error", bd.fit_error}, {"slices", slices}};
    out.text("fit.json", dump(fit));
    rep["blow_down"] = {{"p", points_json(bd.p)}, {"fit_error", bd.fit_error}};
  }
  out.text("rescale.json", dump(rep));
  return rep;
}

// --- diagnose ---------------------------------------------------------------

json run_diagnose(const json& cfg, const ConfigContext& ctx, Output& out, std::ostream& os) {
  io::Snapshot snap = [&] {
    if (cfg.contains("input")) return io::read_snapshot(ctx.resolve(cfg.at("input").get<std::string>()));
    if (!cfg.contains("initial")) throw ConfigError("diagnose needs 'input' or 'initial'");
    const Grid2D grid = parse_grid(cfg);
    return io::Snapshot{parse_initial(cfg.at("initial"), grid, ctx), get_number(cfg, "t", 0.0)};
  }();
  const auto th = parse_thresholds(cfg);
  const auto rec = make_record(snap.field, snap.t, th);
  os << record_line(rec);
  out.text("diagnostics.ndjson", record_line(rec));
  json rep = json::parse(rec.to_ndjson());
  if (cfg.contains("n_atoms")) {
    const auto fit = detect_atoms(snap.field, th,
                                  static_cast<std::size_t>(require_number(cfg, "n_atoms")));
    json a = {{"atoms", points_json(fit.atoms.points())},
              {"residual_mass", fit.residual_mass},
              {"residual_fraction", fit.residual_fraction},
              {"genuine", fit.genuine},
              {"iterations", fit.iterations}};
    out.text("atoms.json", dump(a));
    io::write_points(out.path("atoms.csv"), fit.atoms);
  }
  return rep;
}

// --- driver -----------------------------------------------------------------

int run_one(const json& cfg, const fs::path& base, const RunOptions& opts, const fs::path& dir,
            std::uint64_t seed, std::ostream& os, std::ostream& err) {
  const std::string cfg_text = cfg.dump();
  json meta = {{"kind", opts.command},
               {"config_fnv1a64", hex64(fnv1a64(cfg_text))},
               {"seed", seed}};
  Output out(dir);
  out.text("config.json", dump(cfg));
  auto fail = [&](int code, const std::string& type, const std::string& msg, json extra) {
    err << "kslab: " << msg << "\n";
    json f = {{"status", code == kExitConfig ? "config_error" : "numerical_failure"},
              {"error", type},
              {"message", msg}};
    f.update(extra);
    out.text("failure.json", dump(f));
    meta["status"] = "failed";
    meta["exit_code"] = code;
    out.manifest(meta);
    return code;
  };
  try {
    check_kind(cfg, opts.command);
    ConfigContext ctx{base, seed};
    if (opts.command == "simulate") run_simulate(cfg, ctx, out);
    else if (opts.command == "pointdyn") run_pointdyn(cfg, ctx, out);
    else if (opts.command == "critical") run_critical(cfg, ctx, out);
    else if (opts.command == "hybrid") run_hybrid(cfg, ctx, out);
    else if (opts.command == "rescale") run_rescale(cfg, ctx, opts, out);
    else if (opts.command == "diagnose") run_diagnose(cfg, ctx, out, os);
    else throw ConfigError("unknown subcommand '" + opts.command + "'");
  } catch (const ConfigError& e) {
    return fail(kExitConfig, "config", e.what(), json::object());
  } catch (const json::exception& e) {
    return fail(kExitConfig, "config", std::string("config: ") + e.what(), json::object());
  } catch (const ArgumentError& e) {
    return fail(kExitConfig, "argument", e.what(), json::object());
  } catch (const DataError& e) {
    return fail(kExitConfig, "data", e.what(), json::object());
  } catch (const NumericalFailure& e) {
    return fail(kExitNumerical, "numerical_failure", e.what(),
                {{"step", e.step()}, {"t", e.time()}});
  } catch (const BoundaryMassError& e) {
    return fail(kExitNumerical, "boundary_mass", e.what(),
                {{"fraction", e.fraction()}, {"t", e.time()}});
  } catch (const CollisionError& e) {
    return fail(kExitNumerical, "collision", e.what(),
                {{"pair", {e.first(), e.second()}}, {"t", e.time()},
                 {"collapse_estimate", e.collapse_time_estimate()}});
  } catch (const SearchFailure& e) {
    return fail(kExitNumerical, "search_failure", e.what(), {{"residual", e.residual()}});
  } catch (const DetectionFailure& e) {
    return fail(kExitNumerical, "detection_failure", e.what(), json::object());
  }
  meta["status"] = "ok";
  meta["exit_code"] = kExitOk;
  out.manifest(meta);
  return kExitOk;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

int run(const RunOptions& opts, std::ostream& os, std::ostream& err) {
  json cfg;
  try {
    cfg = load_config(opts.config);
  } catch (const ConfigError& e) {
    err << "kslab: " << e.what() << "\n";
    return kExitConfig;
  }
  const fs::path base = opts.config.has_parent_path() ? opts.config.parent_path() : fs::path(".");
  std::uint64_t seed = opts.seed.value_or(0);
  if (!opts.seed && cfg.contains("seed")) {
    if (!cfg.at("seed").is_number_unsigned()) {
      err << "kslab: 'seed' must be a non-negative integer\n";
      return kExitConfig;
    }
    seed = cfg.at("seed").get<std::uint64_t>();
  }

  if (!cfg.contains("sweep")) return run_one(cfg, base, opts, opts.out, seed, os, err);

  const json sweep = cfg.at("sweep");
  if (!sweep.is_array() || sweep.empty()) {
    err << "kslab: 'sweep' must be a non-empty array of override objects\n";
    return kExitConfig;
  }
  json base_cfg = cfg;
  base_cfg.erase("sweep");
  const std::size_t count = sweep.size();
  std::vector<int> codes(count, 0);
  std::vector<std::ostringstream> outs(count), errs(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      json c = base_cfg;
      c.merge_patch(sweep[i]);
      codes[i] = run_one(c, base, opts, opts.out / numbered("sweep", i, ""), seed + i, outs[i],
                         errs[i]);
    }
  };
  {
    std::vector<std::jthread> pool;
    const unsigned k = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(count)));
    for (unsigned w = 0; w < k; ++w) pool.emplace_back(worker);
  }
  // Emit captured output in entry order so logs do not depend on scheduling.
  int code = kExitOk;
  Output top(opts.out);
  json entries = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    os << outs[i].str();
    err << errs[i].str();
    code = std::max(code, codes[i]);
    const std::string rel = numbered("sweep", i, "") + "/manifest.json";
    top.path(rel);
    entries.push_back({{"dir", numbered("sweep", i, "")}, {"exit_code", codes[i]}});
  }
  top.manifest({{"kind", opts.command},
                {"config_fnv1a64", hex64(fnv1a64(cfg.dump()))},
                {"seed", seed},
                {"sweep", entries},
                {"status", code == kExitOk ? "ok" : "failed"},
                {"exit_code", code}});
  return code;
}

}  // namespace kslab::cli
