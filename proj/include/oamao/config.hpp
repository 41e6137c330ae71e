#pragma once
// Run configuration: a validated JSON document with dotted-key overrides.
// Geometry accepts exactly one of two styles:
//   physical:      { Cn2, wavelength, z, w0, R }   (SI units)
//   dimensionless: { R_over_w, w_over_r0, z_over_zR }
// Both reduce to the dimensionless triple used by the channel.

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "oamao/channel.hpp"
#include "oamao/turbulence.hpp"

namespace oamao {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  nlohmann::json j;
};

namespace detail {

inline void require_keys(const nlohmann::json& obj, const char* block,
                         const std::vector<std::string>& required,
                         const std::vector<std::string>& optional = {}) {
  for (const auto& k : required)
    if (!obj.contains(k))
      throw ConfigError(std::string("config: ") + block + " missing key '" + k + "'");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& k : required)
      if (it.key() == k) known = true;
    for (const auto& k : optional)
      if (it.key() == k) known = true;
    if (!known)
      throw ConfigError(std::string("config: ") + block + " has unknown key '" +
                        it.key() + "'");
  }
}

inline double positive_number(const nlohmann::json& obj, const char* block,
                              const std::string& key) {
  const auto& v = obj.at(key);
  if (!v.is_number())
    throw ConfigError(std::string("config: ") + block + "." + key + " must be a number");
  double x = v.get<double>();
  if (!(x > 0))
    throw ConfigError(std::string("config: ") + block + "." + key + " must be positive");
  return x;
}

}  // namespace detail

inline void validate_config(const RunConfig& cfg) {
  const auto& j = cfg.j;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string k = it.key();
    if (k != "geometry" && k != "correction" && k != "truncation" && k != "numerics" &&
        k != "output" && k != "probabilities" && k != "oracle")
      throw ConfigError("config: unknown top-level key '" + k + "'");
  }
  if (!j.contains("geometry")) throw ConfigError("config: missing 'geometry'");
  const auto& g = j.at("geometry");
  bool phys = g.contains("Cn2");
  bool dimless = g.contains("R_over_w");
  if (phys == dimless)
    throw ConfigError(
        "config: geometry must use exactly one style (physical: Cn2/wavelength/z/"
        "w0/R, or dimensionless: R_over_w/w_over_r0/z_over_zR)");
  if (phys) {
    detail::require_keys(g, "geometry", {"Cn2", "wavelength", "z", "w0", "R"});
    detail::positive_number(g, "geometry", "Cn2");
    detail::positive_number(g, "geometry", "wavelength");
    detail::positive_number(g, "geometry", "z");
    detail::positive_number(g, "geometry", "w0");
    detail::positive_number(g, "geometry", "R");
  } else {
    detail::require_keys(g, "geometry", {"R_over_w", "w_over_r0", "z_over_zR"});
    detail::positive_number(g, "geometry", "R_over_w");
    detail::positive_number(g, "geometry", "w_over_r0");
    detail::positive_number(g, "geometry", "z_over_zR");
  }
  if (!j.contains("correction")) throw ConfigError("config: missing 'correction'");
  const auto& c = j.at("correction");
  detail::require_keys(c, "correction", {}, {"J", "J_list"});
  if (c.contains("J") == c.contains("J_list"))
    throw ConfigError("config: correction needs exactly one of 'J' or 'J_list'");
  auto check_j = [](const nlohmann::json& v) {
    if (!v.is_number_integer() || v.get<int>() < 1)
      throw ConfigError("config: correction J must be an integer >= 1");
  };
  if (c.contains("J")) check_j(c.at("J"));
  if (c.contains("J_list")) {
    if (!c.at("J_list").is_array() || c.at("J_list").empty())
      throw ConfigError("config: correction.J_list must be a non-empty array");
    for (const auto& v : c.at("J_list")) check_j(v);
  }
  if (j.contains("truncation")) {
    const auto& t = j.at("truncation");
    detail::require_keys(t, "truncation",
                         {"l_in_max", "p_in_max", "l_out_max", "p_out_max"});
    for (const char* k : {"l_in_max", "p_in_max", "l_out_max", "p_out_max"})
      if (!t.at(k).is_number_integer() || t.at(k).get<int>() < 0)
        throw ConfigError(std::string("config: truncation.") + k +
                          " must be an integer >= 0");
    if (t.at("l_out_max").get<int>() < t.at("l_in_max").get<int>() ||
        t.at("p_out_max").get<int>() < t.at("p_in_max").get<int>())
      throw ConfigError("config: output truncation must cover the input truncation");
  }
  if (j.contains("numerics")) {
    const auto& n = j.at("numerics");
    detail::require_keys(n, "numerics", {},
                         {"n_max", "neg_tol", "optimizer_starts", "optimizer_seed",
                          "optimizer_tol", "optimizer_max_iters"});
    if (n.contains("n_max") &&
        (!n.at("n_max").is_number_integer() || n.at("n_max").get<int>() < 1))
      throw ConfigError("config: numerics.n_max must be an integer >= 1");
  }
  if (j.contains("probabilities")) {
    const auto& p = j.at("probabilities");
    detail::require_keys(p, "probabilities", {"scan"},
                         {"initial_l", "initial_p", "range_min", "range_max"});
    std::string scan = p.at("scan").get<std::string>();
    if (scan != "retention" && scan != "delta_l" && scan != "delta_p")
      throw ConfigError(
          "config: probabilities.scan must be retention, delta_l, or delta_p");
  }
  if (j.contains("oracle")) {
    const auto& o = j.at("oracle");
    detail::require_keys(o, "oracle", {"mode"}, {"n_samples", "seed"});
    std::string mode = o.at("mode").get<std::string>();
    if (mode != "quad" && mode != "mc")
      throw ConfigError("config: oracle.mode must be 'quad' or 'mc'");
  }
  if (j.contains("output")) {
    detail::require_keys(j.at("output"), "output", {}, {"directory"});
  }
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  try {
    cfg.j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: JSON parse failure: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

// Dotted-key override, e.g. "correction.J=15" or "geometry.R_over_w=3".
// The value is parsed as JSON when possible, else taken as a string.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override must look like key.path=value");
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  nlohmann::json v;
  try {
    v = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    v = value;  // bare string
  }
  nlohmann::json* node = &cfg.j;
  std::size_t pos = 0;
  for (;;) {
    auto dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw ConfigError("config: empty key segment in override");
    if (dot == std::string::npos) {
      (*node)[key] = v;
      break;
    }
    node = &(*node)[key];
    pos = dot + 1;
  }
}

// Geometry reduction; also exposes the pieces needed for diagnostics.
struct GeometrySummary {
  DimensionlessGeometry geom;
  double t_z = 0.0;
  double w0_over_r0 = 0.0;
  double fried_r0 = 0.0;  // physical style only, else 0
};

inline GeometrySummary geometry_summary(const RunConfig& cfg) {
  const auto& g = cfg.j.at("geometry");
  GeometrySummary s;
  if (g.contains("Cn2")) {
    double Cn2 = g.at("Cn2").get<double>();
    double lam = g.at("wavelength").get<double>();
    double z = g.at("z").get<double>();
    double w0 = g.at("w0").get<double>();
    double R = g.at("R").get<double>();
    BeamGeometry beam{w0, z, lam};
    beam.validate();
    s.fried_r0 = fried_parameter(Cn2, z, lam);
    s.t_z = beam.t_z();
    s.w0_over_r0 = w0 / s.fried_r0;
    s.geom.R_over_w = R / beam.w();
    s.geom.z_over_zR = s.t_z;
    s.geom.R_over_r0 = R / s.fried_r0;
  } else {
    double rw = g.at("R_over_w").get<double>();
    double wr = g.at("w_over_r0").get<double>();
    double tz = g.at("z_over_zR").get<double>();
    s.geom.R_over_w = rw;
    s.geom.z_over_zR = tz;
    s.geom.R_over_r0 = rw * wr;
    s.t_z = tz;
    s.w0_over_r0 = wr / std::sqrt(1.0 + tz * tz);
  }
  s.geom.validate();
  return s;
}

inline std::vector<int> correction_list(const RunConfig& cfg) {
  const auto& c = cfg.j.at("correction");
  std::vector<int> out;
  if (c.contains("J"))
    out.push_back(c.at("J").get<int>());
  else
    for (const auto& v : c.at("J_list")) out.push_back(v.get<int>());
  return out;
}

inline ChannelParams channel_params(const RunConfig& cfg, int J) {
  ChannelParams p;
  p.geom = geometry_summary(cfg).geom;
  p.J = J;
  if (cfg.j.contains("numerics") && cfg.j.at("numerics").contains("n_max"))
    p.n_max = cfg.j.at("numerics").at("n_max").get<int>();
  if (cfg.j.contains("truncation")) {
    const auto& t = cfg.j.at("truncation");
    p.in = Truncation{t.at("l_in_max").get<int>(), t.at("p_in_max").get<int>()};
    p.out = Truncation{t.at("l_out_max").get<int>(), t.at("p_out_max").get<int>()};
  }
  p.validate();
  return p;
}

inline MinFidelityOptions optimizer_options(const RunConfig& cfg) {
  MinFidelityOptions o;
  if (!cfg.j.contains("numerics")) return o;
  const auto& n = cfg.j.at("numerics");
  if (n.contains("optimizer_starts")) o.n_starts = n.at("optimizer_starts").get<int>();
  if (n.contains("optimizer_seed"))
    o.seed = n.at("optimizer_seed").get<std::uint64_t>();
  if (n.contains("optimizer_tol")) o.tol = n.at("optimizer_tol").get<double>();
  if (n.contains("optimizer_max_iters"))
    o.max_iters = n.at("optimizer_max_iters").get<int>();
  return o;
}

inline double kraus_neg_tol(const RunConfig& cfg) {
  if (cfg.j.contains("numerics") && cfg.j.at("numerics").contains("neg_tol"))
    return cfg.j.at("numerics").at("neg_tol").get<double>();
  return 1e-12;
}

}  // namespace oamao
