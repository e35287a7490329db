#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "waitmarket/error.hpp"
#include "waitmarket/fixtures.hpp"
#include "waitmarket/model.hpp"

namespace waitmarket {

using nlohmann::json;

struct SweepSpec {
  std::string path;  // JSON pointer into the environment object
  double from = 0.0;
  double to = 0.0;
  std::size_t steps = 0;

  std::vector<double> values() const {
    std::vector<double> out;
    if (steps == 1) return {from};
    for (std::size_t i = 0; i < steps; ++i)
      out.push_back(from + (to - from) * static_cast<double>(i) / static_cast<double>(steps - 1));
    return out;
  }
};

struct SimulateSpec {
  double exit_scale = 1.0;
  json pricing = "revealed";     // "revealed" | "pooled" | number
  json acceptance = "only-top";  // "only-top" | "all" | [signal indices]
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> grid_nodes;
  std::optional<double> tol;
  std::optional<std::size_t> runs;
  std::optional<std::string> out;
};

struct RunConfig {
  json environment_spec;
  Environment env;
  std::size_t grid_nodes = kDefaultGridNodes;
  double tol = 1e-9;
  std::uint64_t seed = 1;
  std::size_t runs = 100000;
  std::string out = ".";
  std::optional<SweepSpec> sweep;
  SimulateSpec simulate;
};

namespace detail {

// Reads keys of one JSON object and rejects the ones never asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::config, path_ + " must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) fail(ErrorKind::config, "missing key " + where(key));
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key) {
    const json& v = raw(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::config, "wrong type for " + where(key));
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) {
    if (!has(key)) {
      used_.insert(key);
      return fallback;
    }
    return get<T>(key);
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(ErrorKind::config, "unknown key " + where(it.key()));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline Affine read_affine(ObjectReader& r, const std::string& key) {
  const auto v = r.get<std::vector<double>>(key);
  if (v.size() != 2) fail(ErrorKind::config, r.where(key) + " must be [intercept, slope]");
  return {v[0], v[1]};
}

inline SignalModel read_signals(const json& j, std::size_t n_states) {
  ObjectReader r(j, "environment.signals");
  const auto family = r.get<std::string>("family");
  SignalModel out;
  if (family == "binary-table") {
    out = SignalModel::binary(r.get<std::vector<double>>("top"));
  } else if (family == "table") {
    out = SignalModel::table(r.get<std::vector<double>>("values"), r.get<std::vector<std::vector<double>>>("f"));
  } else if (family == "example1-OR") {
    out = SignalModel({0.0, 1.0}, signal_family::OrTest{read_affine(r, "psi_y"), read_affine(r, "psi_omega")});
  } else if (family == "example2-AND") {
    out = SignalModel({0.0, 1.0},
                      signal_family::AndTest{read_affine(r, "psi_y"), read_affine(r, "psi_omega"), r.get_or("rho", 1.0)});
  } else if (family == "logistic") {
    out = SignalModel({0.0, 1.0}, signal_family::Logistic{r.get<std::vector<double>>("slopes")});
  } else {
    fail(ErrorKind::config, "unknown signal family '" + family + "'");
  }
  r.finish();
  out.check_shape(n_states);
  return out;
}

struct TypeRead {
  TypeModel model;
  bool joint = false;
};

inline TypeRead read_types(const json& j, const std::vector<double>& states, std::size_t nodes) {
  ObjectReader r(j, "environment.types");
  const auto family = r.get<std::string>("family");
  const double lo = r.get_or("lo", family == "location" ? -8.0 : 0.0);
  const double hi = r.get_or("hi", family == "location" ? 9.0 : 1.0);
  const TypeGrid grid = TypeGrid::midpoint(lo, hi, nodes);
  TypeRead out;
  if (family == "uninformed") {
    out.model = TypeModel(grid, type_family::Uninformed{}, states);
  } else if (family == "likelihood-ratio") {
    const auto norm = r.get_or<std::string>("normalization", "joint");
    if (norm != "joint" && norm != "per-state")
      fail(ErrorKind::config, "environment.types.normalization must be 'joint' or 'per-state'");
    out.joint = norm == "joint";
    out.model = TypeModel(grid, type_family::LikelihoodRatio{read_affine(r, "ratio")}, states);
  } else if (family == "kumaraswamy-flipped") {
    out.model = TypeModel(grid, type_family::FlippedKumaraswamy{r.get<std::vector<double>>("a"), r.get<double>("b")},
                          states);
  } else if (family == "location") {
    const auto noise = r.get_or<std::string>("noise", "normal");
    if (noise != "normal" && noise != "gumbel-min")
      fail(ErrorKind::config, "environment.types.noise must be 'normal' or 'gumbel-min'");
    out.model = TypeModel(grid,
                          type_family::Location{noise == "normal" ? LocationNoise::normal : LocationNoise::gumbel_min,
                                                r.get<double>("scale")},
                          states);
  } else if (family == "tabulated") {
    out.model = TypeModel(grid, type_family::Tabulated{r.get<std::vector<std::vector<double>>>("density")}, states);
  } else {
    fail(ErrorKind::config, "unknown type family '" + family + "'");
  }
  r.finish();
  return out;
}

}  // namespace detail

// Builds an environment from its JSON description without running validate().
inline Environment environment_from_json(const json& j, std::size_t grid_nodes) {
  detail::ObjectReader r(j, "environment");
  const auto states = r.get<std::vector<double>>("states");
  auto prior = r.get<std::vector<double>>("prior");
  const auto vb = r.get<std::vector<double>>("v_buyer");
  const auto vs = r.get<std::vector<double>>("v_seller");
  const double lambda = r.get_or("arrival_rate", 1.0);
  if (!(lambda > 0.0)) fail(ErrorKind::config, "arrival_rate must be > 0");
  if (prior.size() != states.size() || vb.size() != states.size() || vs.size() != states.size())
    fail(ErrorKind::config, "prior, v_buyer and v_seller need one entry per state");
  auto signals = detail::read_signals(r.raw("signals"), states.size());
  auto types = detail::read_types(r.raw("types"), states, grid_nodes);
  r.finish();
  if (types.joint) prior = joint_prior(prior, types.model);
  return Environment(states, prior, vb, vs, std::move(signals), std::move(types.model), lambda);
}

inline json parse_json_text(const std::string& text, const std::string& name) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    fail(ErrorKind::config, name + ": parse error at line " + std::to_string(line) + ", column " +
                                std::to_string(column));
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::config, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path.string());
}

inline RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir, const Overrides& o = {},
                                  bool validate_env = true) {
  detail::ObjectReader r(j, "");
  RunConfig c;
  c.grid_nodes = o.grid_nodes.value_or(r.get_or<std::size_t>("grid_nodes", kDefaultGridNodes));
  c.tol = o.tol.value_or(r.get_or("tol", 1e-9));
  c.seed = o.seed.value_or(r.get_or<std::uint64_t>("seed", 1));
  c.runs = o.runs.value_or(r.get_or<std::size_t>("runs", 100000));
  c.out = o.out.value_or(r.get_or<std::string>("out", "."));
  if (c.grid_nodes < 2) fail(ErrorKind::config, "grid_nodes must be >= 2");
  if (!(c.tol > 0.0)) fail(ErrorKind::config, "tol must be > 0");
  if (c.runs < 1) fail(ErrorKind::config, "runs must be >= 1");

  const json& env = r.raw("environment");
  if (env.is_string()) {
    const json file = read_json_file(base_dir / env.get<std::string>());
    c.environment_spec = file.is_object() && file.contains("environment") ? file.at("environment") : file;
  } else {
    c.environment_spec = env;
  }

  if (r.has("sweep")) {
    detail::ObjectReader s(r.raw("sweep"), "sweep");
    SweepSpec sw;
    sw.path = s.get<std::string>("path");
    sw.from = s.get<double>("from");
    sw.to = s.get<double>("to");
    sw.steps = s.get<std::size_t>("steps");
    s.finish();
    c.sweep = sw;
  }
  if (r.has("simulate")) {
    detail::ObjectReader s(r.raw("simulate"), "simulate");
    c.simulate.exit_scale = s.get_or("exit_scale", 1.0);
    if (!(c.simulate.exit_scale >= 0.0)) fail(ErrorKind::config, "simulate.exit_scale must be >= 0");
    if (s.has("pricing")) c.simulate.pricing = s.raw("pricing");
    if (s.has("acceptance")) c.simulate.acceptance = s.raw("acceptance");
    s.finish();
  }
  r.finish();

  c.env = environment_from_json(c.environment_spec, c.grid_nodes);
  if (validate_env) {
    const auto report = validate(c.env);
    if (!report.ok()) fail(ErrorKind::invalid_environment, "environment fails validation\n" + report.to_string());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path, const Overrides& o = {}, bool validate_env = true) {
  return config_from_json(read_json_file(path), path.parent_path(), o, validate_env);
}

}  // namespace waitmarket
