#include "config.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "kslab/errors.hpp"
#include "kslab/io.hpp"
#include "kslab/profiles.hpp"

namespace kslab::cli {

namespace {

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  const json& s = j.at(key);
  if (!s.is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
  return s;
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

bool get_bool(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) throw ConfigError(std::string("'") + key + "' must be a boolean");
  return j.at(key).get<bool>();
}

std::string get_string(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

double get_mass(const json& j) {
  const bool has_m = j.contains("mass"), has_pi = j.contains("mass_pi");
  if (has_m == has_pi) throw ConfigError("gaussian needs exactly one of 'mass' or 'mass_pi'");
  return has_m ? require_number(j, "mass") : require_number(j, "mass_pi") * kPi;
}

void add_initial(const json& j, const Grid2D& grid, const ConfigContext& ctx,
                 std::vector<double>& acc) {
  if (!j.is_object()) throw ConfigError("initial data entry must be an object");
  const std::string type = get_string(j, "type", "");
  auto add_profile = [&](const auto& f) {
    for (int jj = 0; jj < grid.n(); ++jj)
      for (int i = 0; i < grid.n(); ++i) acc[grid.index(i, jj)] += f(grid.center(i, jj));
  };
  if (type == "gaussian") {
    Gaussian g{get_mass(j), require_number(j, "width"),
               j.contains("center") ? parse_point(j.at("center"), "center") : Vec2{}};
    if (!(g.width > 0.0)) throw ConfigError("gaussian 'width' must be positive");
    if (!(g.mass >= 0.0)) throw ConfigError("gaussian mass must be non-negative");
    add_profile(g);
  } else if (type == "bubble") {
    Bubble b{get_number(j, "lambda", 1.0),
             j.contains("center") ? parse_point(j.at("center"), "center") : Vec2{}};
    if (!(b.lambda > 0.0)) throw ConfigError("bubble 'lambda' must be positive");
    add_profile(b);
  } else if (type == "sum" || type == "sum-of") {
    if (!j.contains("terms") || !j.at("terms").is_array())
      throw ConfigError("sum initial data needs a 'terms' array");
    for (const auto& t : j.at("terms")) add_initial(t, grid, ctx, acc);
  } else if (type == "snapshot") {
    const auto snap = io::read_snapshot(ctx.resolve(get_string(j, "path", "")));
    if (!(snap.field.grid() == grid))
      throw ConfigError("snapshot grid does not match the configured grid");
    const auto v = snap.field.values();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
  } else if (type == "zero") {
  } else {
    throw ConfigError("unknown initial data type '" + type + "'");
  }
}

}  // namespace

json parse_config_text(const std::string& text, const std::string& name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t k = 0; k < stop; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string msg = e.what();
    // nlohmann prefixes "[json.exception.parse_error.101] parse error at line L, column C: ".
    const auto pos = msg.find(": ", msg.find("parse error"));
    if (pos != std::string::npos) msg = msg.substr(pos + 2);
    std::ostringstream os;
    os << name << ":" << line << ":" << col << ": " << msg;
    throw ConfigError(os.str());
  }
}

json load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j = parse_config_text(ss.str(), path.string());
  if (!j.is_object()) throw ConfigError(path.string() + ": top level must be an object");
  return j;
}

std::filesystem::path ConfigContext::resolve(const std::string& p) const {
  if (p.empty()) throw ConfigError("empty file path in config");
  std::filesystem::path q(p);
  return q.is_absolute() ? q : base_dir / q;
}

double get_number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  return require_number(j, key);
}

double require_number(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("missing numeric field '") + key + "'");
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(std::string("'") + key + "' must be finite");
  return d;
}

Vec2 parse_point(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(std::string("'") + what + "' must be a [x, y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

std::vector<Vec2> parse_points(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string("'") + what + "' must be an array of pairs");
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back(parse_point(p, what));
  return out;
}

Grid2D parse_grid(const json& root) {
  const json& g = section(root, "grid");
  const double L = get_number(g, "L", 8.0);
  const auto n = get_count(g, "n", 128);
  try {
    return Grid2D(L, static_cast<int>(n));
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

DensityField parse_initial(const json& j, const Grid2D& grid, const ConfigContext& ctx) {
  std::vector<double> acc(grid.size(), 0.0);
  add_initial(j, grid, ctx, acc);
  try {
    return DensityField(grid, std::move(acc));
  } catch (const DataError& e) {
    throw ConfigError(std::string("initial data: ") + e.what());
  }
}

ForcingSpec parse_forcing(const json& root) {
  const json& f = section(root, "forcing");
  ForcingSpec spec;
  spec.self_attraction = get_bool(f, "self_attraction", true);
  if (f.contains("drift")) {
    const json& d = f.at("drift");
    const std::string type = get_string(d, "type", "");
    if (type == "uniform") {
      const Vec2 v = parse_point(d.at("velocity"), "velocity");
      spec.grad_f = [v](Vec2, double) { return v; };
    } else if (type == "confine") {
      const double k = require_number(d, "strength");
      const Vec2 c = d.contains("center") ? parse_point(d.at("center"), "center") : Vec2{};
      spec.grad_f = [k, c](Vec2 x, double) { return -k * (x - c); };
    } else if (type == "self_similar") {
      spec.grad_f = [](Vec2 y, double) { return 0.5 * y; };
    } else {
      throw ConfigError("unknown drift type '" + type + "'");
    }
  }
  if (f.contains("source")) {
    const json& s = f.at("source");
    const std::string type = get_string(s, "type", "");
    if (type != "gaussian") throw ConfigError("unknown source type '" + type + "'");
    const double rate = require_number(s, "rate");
    const double width = require_number(s, "width");
    if (!(width > 0.0)) throw ConfigError("source 'width' must be positive");
    const Vec2 c = s.contains("center") ? parse_point(s.at("center"), "center") : Vec2{};
    const double t_on = get_number(s, "t_on", -1e300), t_off = get_number(s, "t_off", 1e300);
    const Gaussian g{rate, width, c};
    spec.g = [g, t_on, t_off](Vec2 x, double t) {
      return (t >= t_on && t < t_off) ? g(x) : 0.0;
    };
  }
  return spec;
}

pde::SolverParams parse_solver(const json& root) {
  const json& s = section(root, "solver");
  pde::SolverParams p;
  p.dt_max = get_number(s, "dt_max", p.dt_max);
  p.cfl = get_number(s, "cfl", p.cfl);
  p.end_time = get_number(s, "end_time", p.end_time);
  p.snapshot_every = get_count(s, "snapshot_every", p.snapshot_every);
  p.detect_every = get_count(s, "detect_every", p.detect_every);
  p.boundary_mass_limit = get_number(s, "boundary_mass_limit", p.boundary_mass_limit);
  p.max_steps = get_count(s, "max_steps", p.max_steps);
  p.stop_on_concentration = get_bool(s, "stop_on_concentration", p.stop_on_concentration);
  const std::string diff = get_string(s, "diffusion", "explicit");
  if (diff == "explicit") {
    p.diffusion = pde::DiffusionMode::Explicit;
  } else if (diff == "semi_implicit" || diff == "semi-implicit") {
    p.diffusion = pde::DiffusionMode::SemiImplicit;
  } else {
    throw ConfigError("unknown diffusion mode '" + diff + "'");
  }
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

ConcentrationThresholds parse_thresholds(const json& root) {
  const json& t = section(root, "thresholds");
  ConcentrationThresholds th;
  th.eps_star = get_number(t, "eps_star", th.eps_star);
  th.theta_star = get_number(t, "theta_star", th.theta_star);
  if (t.contains("detect_radius")) th.detect_radius = require_number(t, "detect_radius");
  th.verdict_fraction = get_number(t, "verdict_fraction", th.verdict_fraction);
  th.max_density_slope = get_number(t, "max_density_slope", th.max_density_slope);
  th.residual_verdict_fraction =
      get_number(t, "residual_verdict_fraction", th.residual_verdict_fraction);
  try {
    th.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return th;
}

pointdyn::FlowParams parse_flow(const json& root) {
  const json& f = section(root, "flow");
  pointdyn::FlowParams p;
  p.dt_init = get_number(f, "dt_init", p.dt_init);
  p.rel_tol = get_number(f, "rel_tol", p.rel_tol);
  p.abs_tol = get_number(f, "abs_tol", p.abs_tol);
  p.min_separation_guard = get_number(f, "min_separation_guard", p.min_separation_guard);
  p.max_steps = get_count(f, "max_steps", p.max_steps);
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

hybrid::HybridParams parse_hybrid(const json& root) {
  hybrid::HybridParams p;
  p.solver = parse_solver(root);
  const json& h = section(root, "hybrid");
  p.mollify_cells = get_number(h, "mollify_cells", p.mollify_cells);
  p.min_separation_guard = get_number(h, "min_separation_guard", p.min_separation_guard);
  p.atom_step_fraction = get_number(h, "atom_step_fraction", p.atom_step_fraction);
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

PointConfiguration parse_configuration(const json& j, Frame frame, const ConfigContext& ctx) {
  std::vector<Vec2> pts;
  if (j.contains("points")) {
    pts = parse_points(j.at("points"), "points");
  } else if (j.contains("points_file")) {
    auto cfg = io::read_points(ctx.resolve(get_string(j, "points_file", "")));
    pts = cfg.points();
  } else if (j.contains("random")) {
    const json& r = j.at("random");
    const auto n = get_count(r, "n", 0);
    const double radius = get_number(r, "radius", 1.0);
    if (n == 0) throw ConfigError("random start needs 'n' >= 1");
    const auto u = uniform_stream(ctx.seed, 2 * n);
    for (std::size_t k = 0; k < n; ++k)
      pts.push_back({radius * (2.0 * u[2 * k] - 1.0), radius * (2.0 * u[2 * k + 1] - 1.0)});
  } else {
    throw ConfigError("configuration needs 'points', 'points_file' or 'random'");
  }
  try {
    return PointConfiguration(std::move(pts), frame);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

std::vector<double> uniform_stream(std::uint64_t seed, std::size_t count) {
  // mt19937_64 output is fully specified; the distribution classes are not.
  std::mt19937_64 gen(seed);
  std::vector<double> out(count);
  for (auto& v : out) v = static_cast<double>(gen() >> 11) * 0x1.0p-53;
  return out;
}

}  // namespace kslab::cli
