#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "nvdeer/constants.hpp"
#include "nvdeer/deer_ensemble.hpp"
#include "nvdeer/deer_single.hpp"
#include "nvdeer/error.hpp"
#include "nvdeer/parallel.hpp"
#include "nvdeer/sensing_volume.hpp"
#include "nvdeer/spectrum_fit.hpp"
#include "nvdeer/spin_hamiltonian.hpp"

namespace nvdeer::cli {

namespace {

using json = nlohmann::ordered_json;

constexpr double deg = constants::pi / 180.0;

// ---------------------------------------------------------------------------
// Config reading
// ---------------------------------------------------------------------------

class ConfigError : public std::runtime_error {
public:
  ConfigError(const std::string& path, const std::string& msg)
      : std::runtime_error((path.empty() ? std::string("(root)") : path) + ": " + msg) {}
};

class Infeasible : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Range { any, positive, non_negative };

double checked_number(const json& v, const std::string& path, Range range) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
  if (range == Range::positive && !(x > 0)) throw ConfigError(path, "must be > 0");
  if (range == Range::non_negative && !(x >= 0)) throw ConfigError(path, "must be >= 0");
  return x;
}

std::vector<double> linspace(double start, double stop, std::size_t count) {
  if (count == 1) return {start};
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = start + (stop - start) * double(i) / double(count - 1);
  return out;
}

// A JSON object being read. Every key must be consumed; the values actually
// used, defaults included, are collected into resolved().
class Fields {
public:
  Fields(const json& in, std::string path) : in_(in), path_(std::move(path)) {
    if (!in_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }
  bool has(const std::string& key) const { return in_.contains(key); }

  const json* get(const std::string& key) {
    used_.insert(key);
    const auto it = in_.find(key);
    return it == in_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = get(key);
    if (!v) throw ConfigError(at(key), "missing required key");
    return *v;
  }

  void reject(const std::string& key, const std::string& why) const {
    if (has(key)) throw ConfigError(at(key), why);
  }

  double number(const std::string& key, std::optional<double> fallback, Range range = Range::any) {
    const json* v = get(key);
    double x;
    if (v) {
      x = checked_number(*v, at(key), range);
    } else if (fallback) {
      x = *fallback;
    } else {
      throw ConfigError(at(key), "missing required key");
    }
    out_[key] = x;
    return x;
  }

  std::uint64_t integer(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) {
    const json* v = get(key);
    std::uint64_t x = fallback;
    if (v) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
        throw ConfigError(at(key), "expected a non-negative integer");
      }
      x = v->get<std::uint64_t>();
    }
    if (x < min) throw ConfigError(at(key), "must be >= " + std::to_string(min));
    out_[key] = x;
    return x;
  }

  std::string choice(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed) {
    const json* v = get(key);
    std::string s = fallback;
    if (v) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      s = v->get<std::string>();
    }
    if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError(at(key), "expected one of: " + list);
    }
    out_[key] = s;
    return s;
  }

  Eigen::Vector3d vec3(const std::string& key, std::optional<Eigen::Vector3d> fallback) {
    const json* v = get(key);
    Eigen::Vector3d x;
    if (v) {
      if (!v->is_array() || v->size() != 3) throw ConfigError(at(key), "expected an array of 3 numbers");
      for (int i = 0; i < 3; ++i) x(i) = checked_number((*v)[i], at(key) + "/" + std::to_string(i), Range::any);
    } else if (fallback) {
      x = *fallback;
    } else {
      throw ConfigError(at(key), "missing required key");
    }
    out_[key] = json::array({x(0), x(1), x(2)});
    return x;
  }

  // An ascending array of numbers or {start, stop, count}.
  std::vector<double> grid(const std::string& key) {
    const json& v = require(key);
    const std::string path = at(key);
    std::vector<double> g;
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) g.push_back(checked_number(v[i], path + "/" + std::to_string(i), Range::any));
      out_[key] = g;
    } else if (v.is_object()) {
      Fields spec(v, path);
      const double start = spec.number("start", std::nullopt);
      const double stop = spec.number("stop", std::nullopt);
      const std::size_t count = spec.integer("count", 0, 1);
      g = linspace(start, stop, count);
      out_[key] = spec.finish();
    } else {
      throw ConfigError(path, "expected an array of numbers or {start, stop, count}");
    }
    try {
      validate_grid(g, key.c_str());
    } catch (const DomainError& e) {
      throw ConfigError(path, e.what());
    }
    return g;
  }

  Fields child(const std::string& key) { return Fields(require(key), at(key)); }

  void put(const std::string& key, json value) { out_[key] = std::move(value); }

  json finish() const {
    for (const auto& item : in_.items()) {
      if (!used_.count(item.key())) throw ConfigError(at(item.key()), "unknown key");
    }
    return out_;
  }

private:
  const json& in_;
  std::string path_;
  std::set<std::string> used_;
  json out_ = json::object();
};

// Converts library validation failures into config diagnostics.
template <typename Fn>
auto guarded(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const DomainError& e) {
    throw ConfigError(path, e.what());
  }
}

SpinSystem read_system(Fields& parent, const std::string& key) {
  const json& v = parent.require(key);
  const std::string path = parent.at(key);
  SpinSystem sys;
  if (v.is_string()) {
    sys = guarded(path, [&] { return preset(v.get<std::string>()); });
  } else if (v.is_object()) {
    Fields f(v, path);
    if (f.has("preset")) {
      const json& p = f.require("preset");
      if (!p.is_string()) throw ConfigError(f.at("preset"), "expected a string");
      sys = guarded(f.at("preset"), [&] { return preset(p.get<std::string>()); });
    } else {
      sys.name = "custom";
    }
    if (const json* n = f.get("name")) {
      if (!n->is_string()) throw ConfigError(f.at("name"), "expected a string");
      sys.name = n->get<std::string>();
    }
    sys.S = f.number("S", sys.S, Range::non_negative);
    sys.I = f.number("I", sys.I, Range::non_negative);
    sys.g = f.vec3("g", sys.g);
    sys.A_MHz = f.vec3("A_MHz", sys.A_MHz);
    sys.g_n = f.number("g_n", sys.g_n);
    sys.P_z_MHz = f.number("P_z_MHz", sys.P_z_MHz);
    f.finish();
  } else {
    throw ConfigError(path, "expected a preset name or an object");
  }
  guarded(path, [&] {
    sys.validate();
    return 0;
  });
  parent.put(key, json{{"name", sys.name},
                       {"S", sys.S},
                       {"I", sys.I},
                       {"g", {sys.g(0), sys.g(1), sys.g(2)}},
                       {"A_MHz", {sys.A_MHz(0), sys.A_MHz(1), sys.A_MHz(2)}},
                       {"g_n", sys.g_n},
                       {"P_z_MHz", sys.P_z_MHz}});
  return sys;
}

FieldConfig read_field(Fields& parent, const std::string& key) {
  Fields f = parent.child(key);
  FieldConfig field;
  if (f.has("vector_G")) {
    f.reject("B_G", "give either vector_G or B_G/theta_deg/phi_deg");
    f.reject("theta_deg", "give either vector_G or B_G/theta_deg/phi_deg");
    f.reject("phi_deg", "give either vector_G or B_G/theta_deg/phi_deg");
    const Eigen::Vector3d b = f.vec3("vector_G", std::nullopt);
    field = guarded(f.at("vector_G"), [&] { return FieldConfig::from_cartesian(b); });
  } else {
    const double b = f.number("B_G", std::nullopt, Range::non_negative);
    const double theta = f.number("theta_deg", std::nullopt);
    const double phi = f.number("phi_deg", 0.0);
    field = FieldConfig(b, theta * deg, phi * deg);
  }
  parent.put(key, f.finish());
  return field;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct RunContext {
  std::string command;
  std::uint64_t seed{0};
  json config{};
};

std::string csv_header(const RunContext& ctx) {
  std::string s;
  s += "# nvdeer " + std::string(tool_version) + "\n";
  s += "# command: " + ctx.command + "\n";
  s += "# seed: " + std::to_string(ctx.seed) + "\n";
  s += "# config: " + ctx.config.dump() + "\n";
  return s;
}

json envelope(const RunContext& ctx) {
  return json{{"tool", "nvdeer"}, {"version", tool_version}, {"command", ctx.command}, {"seed", ctx.seed}, {"config", ctx.config}};
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("--out", "cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw ConfigError("--out", "write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Flags {
  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  unsigned threads{0};
  std::optional<std::string> mode;
};

unsigned thread_count(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t resolve_seed(Fields& f, const Flags& flags) {
  const std::uint64_t from_config = f.integer("seed", 0);
  const std::uint64_t seed = flags.seed.value_or(from_config);
  f.put("seed", seed);
  return seed;
}

std::string resolve_mode(Fields& f, const Flags& flags) {
  const std::string from_config = f.choice("mode", "single", {"single", "ensemble"});
  const std::string mode = flags.mode.value_or(from_config);
  f.put("mode", mode);
  return mode;
}

enum class SweepAxis { detuning, length };

int cmd_deer(SweepAxis axis, const json& input, const Flags& flags) {
  RunContext ctx{axis == SweepAxis::detuning ? "deer-spectrum" : "deer-rabi"};
  Fields f(input, "");
  const std::string mode = resolve_mode(f, flags);
  const bool single = mode == "single";

  double coupling = 0.0;
  if (single) {
    f.reject("n_c2", "n_c2 is used in ensemble mode; give c for single mode");
    coupling = f.number("c", std::nullopt);
  } else {
    f.reject("c", "c is used in single mode; give n_c2 for ensemble mode");
    coupling = f.number("n_c2", std::nullopt, Range::non_negative);
  }
  const double tau = f.number("tau_us", 6.0, Range::positive);
  const Eigen::Vector3d dir = f.vec3("field_direction", Eigen::Vector3d(0, 0, 1));
  const EchoConfig echo = guarded(f.at("field_direction"), [&] { return EchoConfig(tau, UnitVector3d(dir)); });
  const double rabi = f.number("rabi_MHz", std::nullopt, Range::non_negative);

  std::vector<double> xs;
  std::vector<double> detunings;
  std::vector<double> lengths;
  std::string x_column;
  if (axis == SweepAxis::detuning) {
    const double length = f.number("length_us", std::nullopt, Range::non_negative);
    if (f.has("detuning_MHz") == f.has("frequency_MHz")) {
      throw ConfigError("", "give exactly one of detuning_MHz or frequency_MHz (with resonance_MHz)");
    }
    if (f.has("detuning_MHz")) {
      f.reject("resonance_MHz", "resonance_MHz is used only with frequency_MHz");
      xs = f.grid("detuning_MHz");
      detunings = xs;
      x_column = "detuning_MHz";
    } else {
      xs = f.grid("frequency_MHz");
      const double resonance = f.number("resonance_MHz", std::nullopt, Range::positive);
      for (double x : xs) detunings.push_back(x - resonance);
      x_column = "frequency_MHz";
    }
    lengths.assign(xs.size(), length);
  } else {
    const double detuning = f.number("detuning_MHz", 0.0);
    xs = f.grid("length_us");
    if (xs.front() < 0) throw ConfigError(f.at("length_us"), "pulse lengths must be >= 0");
    lengths = xs;
    detunings.assign(xs.size(), detuning);
    x_column = "t_p_us";
  }

  const std::string estimator = single ? f.choice("estimator", "quadrature", {"quadrature", "montecarlo"})
                                       : f.choice("estimator", "closed_form", {"closed_form", "montecarlo"});
  const bool mc = estimator == "montecarlo";

  SweepOptions opts;
  opts.threads = thread_count(flags.threads);
  opts.estimator = mc ? Estimator::montecarlo : Estimator::quadrature;
  if (single && !mc) {
    if (f.has("quadrature")) {
      Fields q = f.child("quadrature");
      opts.quad.n_phi_rand = q.integer("n_phi_rand", 32, 4);
      opts.quad.n_cos_theta1 = q.integer("n_cos_theta1", 32, 4);
      opts.quad.n_phi1 = q.integer("n_phi1", 32, 4);
      opts.tolerance = q.number("tolerance", 1e-4, Range::positive);
      f.put("quadrature", q.finish());
    } else {
      f.put("quadrature", json{{"n_phi_rand", 32}, {"n_cos_theta1", 32}, {"n_phi1", 32}, {"tolerance", 1e-4}});
    }
  } else {
    f.reject("quadrature", "quadrature settings apply only to the single-spin quadrature estimator");
  }
  std::size_t n_spins = 0;
  if (mc) {
    opts.n_samples = f.integer("n_samples", 100000, 1000);
  } else {
    f.reject("n_samples", "n_samples applies only to the montecarlo estimator");
  }
  if (!single && mc) {
    n_spins = f.integer("n_spins", 100, 1);
  } else {
    f.reject("n_spins", "n_spins applies only to the ensemble montecarlo estimator");
  }
  opts.seed = resolve_seed(f, flags);
  ctx.seed = opts.seed;
  ctx.config = f.finish();

  std::vector<DeerSignal> signals(xs.size());
  if (single) {
    const auto sweep = axis == SweepAxis::detuning ? deer_spectrum(coupling, echo, rabi, lengths.front(), detunings, opts)
                                                   : deer_rabi(coupling, echo, rabi, detunings.front(), lengths, opts);
    for (std::size_t i = 0; i < xs.size(); ++i) signals[i] = sweep[i].second;
  } else if (!mc) {
    for (std::size_t i = 0; i < xs.size(); ++i) {
      signals[i] = ensemble_signal(EnsembleCoupling(coupling), DrivePulse(rabi, detunings[i], lengths[i]));
    }
  } else {
    const SpinBathSample bath = SpinBathSample::uniform(n_spins, coupling);
    parallel_for(xs.size(), opts.threads, [&](std::size_t i) {
      signals[i] = ensemble_signal_montecarlo(bath, echo, DrivePulse(rabi, detunings[i], lengths[i]), opts.n_samples,
                                              opts.seed, i);
    });
  }

  std::string text = csv_header(ctx);
  text += x_column + ",signal,est_error,converged\n";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    text += num(xs[i]) + "," + num(signals[i].value) + "," + num(signals[i].est_error) + "," +
            (signals[i].converged ? "1" : "0") + "\n";
  }
  write_file(flags.out_path, text);
  return exit_ok;
}

SpectrumOptions read_spectrum_options(Fields& f) {
  SpectrumOptions opts;
  opts.intensity_floor = f.number("intensity_floor", opts.intensity_floor, Range::non_negative);
  opts.merge_tol_MHz = f.number("merge_tol_MHz", opts.merge_tol_MHz, Range::non_negative);
  return opts;
}

int cmd_epr(const json& input, const Flags& flags) {
  RunContext ctx{"epr"};
  Fields f(input, "");
  const SpinSystem sys = read_system(f, "system");
  const FieldConfig field = read_field(f, "field");
  const SpectrumOptions spec_opts = read_spectrum_options(f);
  std::optional<std::pair<double, std::vector<double>>> broadening;
  if (f.has("broaden")) {
    Fields b = f.child("broaden");
    const double fwhm = b.number("fwhm_MHz", std::nullopt, Range::positive);
    broadening.emplace(fwhm, b.grid("frequency_MHz"));
    f.put("broaden", b.finish());
  }
  ctx.seed = resolve_seed(f, flags);
  ctx.config = f.finish();

  const SpectrumResult spectrum = transition_spectrum(sys, field, spec_opts);
  std::string text = csv_header(ctx) + "frequency_MHz,intensity\n";
  for (const auto& line : spectrum.lines) text += num(line.frequency_MHz) + "," + num(line.intensity) + "\n";
  write_file(flags.out_path, text);

  if (broadening) {
    const auto y = broaden(spectrum, broadening->second, broadening->first);
    std::string b = csv_header(ctx) + "frequency_MHz,intensity\n";
    for (std::size_t i = 0; i < y.size(); ++i) b += num(broadening->second[i]) + "," + num(y[i]) + "\n";
    write_file(flags.out_path + ".broadened.csv", b);
  }
  return exit_ok;
}

json interval_json(const AxisInterval& iv, double scale) {
  return json{{"lower", iv.lower / scale},
              {"upper", iv.upper / scale},
              {"open_lower", iv.open_lower},
              {"open_upper", iv.open_upper}};
}

int cmd_fit(const json& input, const Flags& flags) {
  RunContext ctx{"fit"};
  Fields f(input, "");
  const SpinSystem sys = read_system(f, "system");

  const json& peaks_json = f.require("peaks");
  if (!peaks_json.is_array() || peaks_json.empty()) throw ConfigError(f.at("peaks"), "expected a non-empty array");
  ObservedPeaks peaks;
  json peaks_echo = json::array();
  for (std::size_t i = 0; i < peaks_json.size(); ++i) {
    Fields p(peaks_json[i], f.at("peaks") + "/" + std::to_string(i));
    const double freq = p.number("frequency_MHz", std::nullopt, Range::positive);
    if (p.has("fwhm_MHz")) {
      p.reject("uncertainty_MHz", "give either uncertainty_MHz or fwhm_MHz");
      peaks.push_back(ObservedPeak::from_fwhm(freq, p.number("fwhm_MHz", std::nullopt, Range::positive)));
    } else {
      peaks.push_back({freq, p.number("uncertainty_MHz", std::nullopt, Range::positive)});
    }
    peaks_echo.push_back(p.finish());
  }
  f.put("peaks", peaks_echo);

  const std::vector<double> b_grid = f.grid("B_G");
  if (b_grid.front() < 0) throw ConfigError(f.at("B_G"), "field magnitudes must be >= 0");
  std::vector<double> theta_grid = f.grid("theta_deg");
  for (double& t : theta_grid) t *= deg;

  Chi2Options opts;
  opts.phi = f.number("phi_deg", 0.0) * deg;
  opts.pool = line_pool_from_string(f.choice("line_pool", "all", {"all", "strongest"}));
  opts.spectrum = read_spectrum_options(f);
  opts.threads = thread_count(flags.threads);

  std::string report_path = flags.out_path + ".minima.json";
  if (const json* r = f.get("report")) {
    if (!r->is_string() || r->get<std::string>().empty()) throw ConfigError(f.at("report"), "expected a file path");
    report_path = r->get<std::string>();
    f.put("report", report_path);
  }
  ctx.seed = resolve_seed(f, flags);
  ctx.config = f.finish();

  const FitGrid grid = chi2_surface(sys, peaks, b_grid, theta_grid, opts);

  std::ostringstream csv;
  write_fit_grid_csv(csv, grid);
  write_file(flags.out_path, csv_header(ctx) + csv.str());

  json report = envelope(ctx);
  json minima = json::array();
  for (const auto& m : grid.minima) {
    const auto iv = uncertainty_intervals(grid, m);
    minima.push_back(json{{"B_G", m.B_G},
                          {"theta_deg", m.theta / deg},
                          {"chi2", m.chi2},
                          {"interval", {{"B_G", interval_json(iv.B, 1.0)}, {"theta_deg", interval_json(iv.theta, deg)}}}});
  }
  report["minima"] = minima;
  report["feasible"] = !grid.minima.empty();
  write_file(report_path, report.dump(2) + "\n");

  if (grid.minima.empty()) throw Infeasible("no feasible fit: every grid cell has fewer candidate lines than peaks");
  return exit_ok;
}

int cmd_volume(const json& input, const Flags& flags) {
  RunContext ctx{"volume"};
  Fields f(input, "");
  const double tau = f.number("tau_us", 6.0, Range::positive);
  SampleGeometry geom;
  geom.nv_depth_nm = f.number("depth_nm", std::nullopt, Range::positive);
  if (const json* t = f.get("film_thickness_nm"); t && !t->is_null()) {
    geom.film_thickness_nm = checked_number(*t, f.at("film_thickness_nm"), Range::positive);
    f.put("film_thickness_nm", geom.film_thickness_nm);
  } else {
    f.put("film_thickness_nm", nullptr);
  }
  if (f.has("density_per_nm3") == f.has("density")) {
    throw ConfigError("", "give exactly one of density_per_nm3 or density {amount_mol, volume_mm3}");
  }
  if (f.has("density_per_nm3")) {
    geom.spin_density_per_nm3 = f.number("density_per_nm3", std::nullopt, Range::non_negative);
  } else {
    Fields d = f.child("density");
    const double amount = d.number("amount_mol", std::nullopt, Range::positive);
    const double volume = d.number("volume_mm3", std::nullopt, Range::positive);
    geom.spin_density_per_nm3 = density_estimate(amount, volume);
    f.put("density", d.finish());
  }

  SensingModel model;
  model.kappa_nm3 = kappa_constant(tau);
  model.threshold = f.number("threshold", 1.0, Range::positive);
  model.region = region_kind_from_string(
      f.choice("region", "half_space_above_surface", {"half_space_above_surface", "spherical_cap"}));
  if (model.region == RegionKind::spherical_cap) {
    model.cap_radius_nm = f.number("cap_radius_nm", std::nullopt, Range::positive);
  } else {
    f.reject("cap_radius_nm", "cap_radius_nm applies only to region spherical_cap");
  }
  model.r_min_nm = f.number("r_min_nm", model.r_min_nm, Range::positive);
  const double fraction = f.number("signal_fraction", 0.7, Range::positive);
  if (!(fraction < 1)) throw ConfigError(f.at("signal_fraction"), "must lie in (0, 1)");
  ctx.seed = resolve_seed(f, flags);
  ctx.config = f.finish();

  const double region_nc2 = accumulate_nc2(geom, model);
  const auto depth = threshold_depth(geom.spin_density_per_nm3, model, geom.film_thickness_nm);
  const RadiusResult radius = detectability_radius(geom, model, fraction);
  // DEER signal of a resonant pi pulse: exp(-(2/3) n c^2).
  const double signal = std::exp(-2.0 * region_nc2 / 3.0);

  json report = envelope(ctx);
  report["kappa_nm3"] = model.kappa_nm3;
  report["kappa_length_nm"] = std::cbrt(model.kappa_nm3);
  report["spin_density_per_nm3"] = geom.spin_density_per_nm3;
  report["n_c2_region"] = region_nc2;
  report["n_c2_film"] = radius.total_nc2;
  report["detectable"] = region_nc2 >= model.threshold;
  report["threshold_depth_nm"] = depth ? json(*depth) : json(nullptr);
  report["detectability_radius_nm"] = std::isnan(radius.radius_nm) ? json(nullptr) : json(radius.radius_nm);
  report["radius_open"] = radius.open;
  report["pi_pulse_signal"] = signal;
  report["dip_depth"] = 1.0 - signal;
  if (region_nc2 < model.threshold) report["message"] = "nothing detectable";
  write_file(flags.out_path, report.dump(2) + "\n");
  return exit_ok;
}

json load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("--config", "cannot read '" + path + "'");
  std::stringstream buf;
  buf << is.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path + ":" + std::to_string(line) + ":" + std::to_string(col), "invalid JSON");
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"NV-centre DEER and EPR simulation and fitting"};
  app.set_version_flag("--version", std::string("nvdeer ") + tool_version);
  app.require_subcommand(1);

  Flags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config_path, "JSON configuration file")->required();
    sub->add_option("--out", flags.out_path, "output file")->required();
    sub->add_option("--seed", flags.seed, "top-level random seed (default: config seed or 0)");
    sub->add_option("--threads", flags.threads, "worker threads (0 = all cores)");
  };
  auto add_mode = [&](CLI::App* sub) {
    sub->add_option("--mode", flags.mode, "single or ensemble")->check(CLI::IsMember({"single", "ensemble"}));
  };

  CLI::App* spectrum = app.add_subcommand("deer-spectrum", "DEER signal versus drive detuning");
  CLI::App* rabi = app.add_subcommand("deer-rabi", "DEER signal versus drive pulse length");
  CLI::App* epr = app.add_subcommand("epr", "EPR transition spectrum of a spin system");
  CLI::App* fit = app.add_subcommand("fit", "chi-square grid fit of field magnitude and angle");
  CLI::App* volume = app.add_subcommand("volume", "sensing-volume report");
  for (CLI::App* sub : {spectrum, rabi, epr, fit, volume}) add_common(sub);
  add_mode(spectrum);
  add_mode(rabi);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config_error;
  }

  try {
    const json config = load_config(flags.config_path);
    if (*spectrum) return cmd_deer(SweepAxis::detuning, config, flags);
    if (*rabi) return cmd_deer(SweepAxis::length, config, flags);
    if (*epr) return cmd_epr(config, flags);
    if (*fit) return cmd_fit(config, flags);
    return cmd_volume(config, flags);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << "\n";
    return exit_config_error;
  } catch (const Infeasible& e) {
    err << e.what() << "\n";
    return exit_infeasible;
  }
}

}  // namespace nvdeer::cli
