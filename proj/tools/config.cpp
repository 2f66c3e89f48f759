// Copyright 2026 The skewdiff Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace skewdiff::cli {

const std::vector<std::string> &verify_test_names() {
  static const std::vector<std::string> names = {
      "local_time", "skew_split", "ks_marginal", "ck",
      "markov",     "martingale", "restart",    "tangential_drift"};
  return names;
}

const std::map<std::string, double> &default_thresholds() {
  static const std::map<std::string, double> t = {
      {"local_time", 0.025}, {"skew_split", 0.01}, {"ks_marginal", 0.01},
      {"ck", 0.01},          {"markov", 4.0},      {"martingale", 4.0},
      {"restart", 0.0},      {"tangential_drift", 4.0}};
  return t;
}

namespace {

const std::set<std::string> kFamilies = {"zero", "constant", "clamped_linear",
                                         "radial_bump"};

class Reader {
public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const YAML::Node &node, const std::string &key,
                         const std::string &msg) const {
    const int line = node.IsDefined() ? node.Mark().line : -1;
    fail_line(line, key, msg);
  }

  [[noreturn]] void fail_line(int line, const std::string &key,
                              const std::string &msg) const {
    std::string where = source_;
    if (line >= 0) {
      where += ":" + std::to_string(line + 1);
    }
    throw ConfigError(where + ": key '" + key + "': " + msg);
  }

  /// Rejects keys outside `allowed`; remembers the line of every key.
  void check_keys(const YAML::Node &map, const std::string &prefix,
                  const std::set<std::string> &allowed) {
    if (!map.IsMap()) {
      fail(map, prefix, "expected a section of key: value pairs");
    }
    for (const auto &kv : map) {
      const std::string key = kv.first.as<std::string>();
      const std::string full = prefix.empty() ? key : prefix + "." + key;
      if (allowed.count(key) == 0) {
        fail(kv.first, full, "unknown key");
      }
      lines_[full] = kv.first.Mark().line;
    }
  }

  int line_of(const std::string &key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? -1 : it->second;
  }

  double real(const YAML::Node &node, const std::string &key) const {
    if (!node.IsScalar()) {
      fail(node, key, "expected a number");
    }
    double value = 0.0;
    try {
      value = node.as<double>();
    } catch (const YAML::Exception &) {
      fail(node, key, "expected a number, got '" + node.Scalar() + "'");
    }
    if (!std::isfinite(value)) {
      fail(node, key, "must be finite");
    }
    return value;
  }

  std::uint64_t unsigned_integer(const YAML::Node &node,
                                 const std::string &key) const {
    if (!node.IsScalar()) {
      fail(node, key, "expected a non-negative integer");
    }
    const std::string &s = node.Scalar();
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
      fail(node, key, "expected a non-negative integer, got '" + s + "'");
    }
    return value;
  }

  std::uint64_t positive_integer(const YAML::Node &node,
                                 const std::string &key) const {
    const std::uint64_t value = unsigned_integer(node, key);
    if (value == 0) {
      fail(node, key, "must be positive");
    }
    return value;
  }

  std::string text(const YAML::Node &node, const std::string &key) const {
    if (!node.IsScalar()) {
      fail(node, key, "expected a string");
    }
    return node.Scalar();
  }

  std::vector<double> reals(const YAML::Node &node, const std::string &key) const {
    if (!node.IsSequence()) {
      fail(node, key, "expected a list of numbers");
    }
    std::vector<double> out;
    for (const auto &item : node) {
      out.push_back(real(item, key));
    }
    return out;
  }

  VectorXd vector(const YAML::Node &node, const std::string &key,
                  int expected) const {
    const std::vector<double> v = reals(node, key);
    if (static_cast<int>(v.size()) != expected) {
      fail(node, key, "expected " + std::to_string(expected) + " entries, got " +
                          std::to_string(v.size()));
    }
    return Eigen::Map<const VectorXd>(v.data(), expected);
  }

  /// A scalar s means s * I; otherwise a list of n rows of n numbers.
  MatrixXd matrix(const YAML::Node &node, const std::string &key, int n) const {
    if (node.IsScalar()) {
      return real(node, key) * MatrixXd::Identity(n, n);
    }
    if (!node.IsSequence() || static_cast<int>(node.size()) != n) {
      fail(node, key,
           "expected a number or " + std::to_string(n) + " rows of " +
               std::to_string(n) + " numbers");
    }
    MatrixXd m(n, n);
    for (int i = 0; i < n; ++i) {
      m.row(i) = vector(node[i], key, n).transpose();
    }
    return m;
  }

  std::vector<std::string> strings(const YAML::Node &node,
                                   const std::string &key) const {
    if (!node.IsSequence()) {
      fail(node, key, "expected a list of names");
    }
    std::vector<std::string> out;
    for (const auto &item : node) {
      out.push_back(text(item, key));
    }
    return out;
  }

  const std::string &source() const { return source_; }

private:
  std::string source_;
  std::map<std::string, int> lines_;
};

Json to_json(const VectorXd &v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    a.push_back(v(i));
  }
  return a;
}

Json to_json(const MatrixXd &m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    a.push_back(to_json(VectorXd(m.row(i).transpose())));
  }
  return a;
}

VectorXd or_zero(const VectorXd &v, int n) {
  return v.size() == 0 ? VectorXd::Zero(n) : v;
}

MatrixXd or_zero(const MatrixXd &m, int n) {
  return m.size() == 0 ? MatrixXd::Zero(n, n) : m;
}

} // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

HyperplaneFrame ExperimentConfig::frame() const {
  return normal.size() == 0 ? HyperplaneFrame::axis(dimension)
                            : HyperplaneFrame(normal);
}

CoefficientField ExperimentConfig::field() const {
  const int m = dimension - 1;
  const CoefficientParams &c = coefficients;
  if (c.family == "zero") {
    return CoefficientField::zero(m);
  }
  if (c.family == "constant") {
    return CoefficientField(ConstantFamily{or_zero(c.alpha, m), or_zero(c.beta, m)},
                            c.bound_K, c.lipschitz_L);
  }
  if (c.family == "clamped_linear") {
    return CoefficientField(
        ClampedLinearFamily{or_zero(c.slope, m), or_zero(c.offset, m),
                            c.alpha_radius, or_zero(c.beta, m)},
        c.bound_K, c.lipschitz_L);
  }
  return CoefficientField(RadialBumpFamily{or_zero(c.center, m), c.radius, c.power,
                                           or_zero(c.alpha, m), or_zero(c.beta, m)},
                          c.bound_K, c.lipschitz_L);
}

ProcessConfig ExperimentConfig::process() const {
  return ProcessConfig::from_point(frame(), field(), q, or_zero(x0, dimension), T,
                                   n_steps);
}

Json ExperimentConfig::to_json(bool with_run_knobs) const {
  using cli::to_json;
  const HyperplaneFrame f = frame();
  const CoefficientField cf = field();
  const int m = dimension - 1;

  Json doc;
  doc["seed"] = seed;
  if (with_run_knobs) {
    doc["workers"] = workers;
    doc["output"] = output;
  }

  Json p;
  p["dimension"] = dimension;
  // As given: normalizing again would not round-trip bit-exactly.
  p["normal"] = to_json(normal.size() == 0 ? f.normal() : normal);
  p["q"] = q;
  p["x0"] = to_json(or_zero(x0, dimension));
  p["T"] = T;
  p["n_steps"] = n_steps;
  doc["process"] = p;

  Json c;
  const CoefficientParams &s = coefficients;
  c["family"] = s.family;
  if (s.family == "constant") {
    c["alpha"] = to_json(or_zero(s.alpha, m));
    c["beta"] = to_json(or_zero(s.beta, m));
  } else if (s.family == "clamped_linear") {
    c["slope"] = to_json(or_zero(s.slope, m));
    c["offset"] = to_json(or_zero(s.offset, m));
    c["alpha_radius"] = s.alpha_radius;
    c["beta"] = to_json(or_zero(s.beta, m));
  } else if (s.family == "radial_bump") {
    c["center"] = to_json(or_zero(s.center, m));
    c["radius"] = s.radius;
    c["power"] = s.power;
    c["alpha"] = to_json(or_zero(s.alpha, m));
    c["beta"] = to_json(or_zero(s.beta, m));
  }
  if (s.family != "zero") {
    c["bound_K"] = cf.bound_K();
    c["lipschitz_L"] = cf.lipschitz_L();
  }
  doc["coefficients"] = c;

  Json sim;
  sim["n_paths"] = simulate_paths;
  sim["observe"] = observe.empty() ? Json::array({T}) : Json(observe);
  sim["dump_paths"] = dump_paths;
  doc["simulate"] = sim;

  Json v;
  v["n_paths"] = verify_paths;
  v["tests"] = tests.empty() ? Json(verify_test_names()) : Json(tests);
  Json th;
  for (const auto &name : verify_test_names()) {
    double value = default_thresholds().at(name);
    if (const auto it = thresholds.find(name); it != thresholds.end()) {
      value = it->second;
    }
    th[name] = threshold_override ? *threshold_override : value;
  }
  v["thresholds"] = th;
  v["restart_paths"] = restart_paths;
  v["markov_functionals"] = markov_functionals;
  v["ck_probes"] = ck_probes;
  doc["verify"] = v;

  Json l;
  l["theta"] = to_json(theta.size() == 0 ? f.normal() : theta);
  Json bump;
  bump["center"] = to_json(or_zero(bump_center, dimension));
  bump["radius"] = bump_radius;
  bump["power"] = bump_power;
  l["bump"] = bump;
  l["t_list"] = limits.t_list;
  l["n_steps"] = limits.n_steps;
  l["tangent_spacing"] = limits.tangent_spacing;
  l["paths_per_t"] = limits.paths_per_t;
  l["tolerance"] = limits.tolerance;
  doc["limits"] = l;
  return doc;
}

// ---------------------------------------------------------------------------
// Parsing

ExperimentConfig parse_config(const std::string &text, const std::string &source) {
  Reader r(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException &e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) +
                      ": syntax error: " + e.msg);
  }

  ExperimentConfig c;
  c.source = source;
  if (root.IsNull()) {
    return c;
  }
  r.check_keys(root, "",
               {"seed", "workers", "output", "process", "coefficients",
                "simulate", "verify", "limits"});

  if (root["seed"]) {
    c.seed = r.unsigned_integer(root["seed"], "seed");
  }
  if (root["workers"]) {
    const auto w = r.positive_integer(root["workers"], "workers");
    if (w > 1024) {
      r.fail(root["workers"], "workers", "at most 1024 workers");
    }
    c.workers = static_cast<unsigned>(w);
  }
  if (root["output"]) {
    c.output = r.text(root["output"], "output");
  }

  // process
  YAML::Node normal_node;
  if (const YAML::Node p = root["process"]) {
    r.check_keys(p, "process", {"dimension", "normal", "q", "x0", "T", "n_steps"});
    if (p["dimension"]) {
      const auto d = r.unsigned_integer(p["dimension"], "process.dimension");
      if (d < 2 || d > 64) {
        r.fail(p["dimension"], "process.dimension", "must be between 2 and 64");
      }
      c.dimension = static_cast<int>(d);
    }
    if (p["normal"]) {
      normal_node = p["normal"];
      if (!(normal_node.IsScalar() && normal_node.Scalar() == "axis")) {
        c.normal = r.vector(normal_node, "process.normal", c.dimension);
        if (!(c.normal.norm() > 0.0)) {
          r.fail(normal_node, "process.normal", "must be nonzero");
        }
      }
    }
    if (p["q"]) {
      c.q = r.real(p["q"], "process.q");
      if (std::abs(c.q) > 1.0) {
        r.fail(p["q"], "process.q", "must satisfy |q| <= 1, got " + p["q"].Scalar());
      }
    }
    if (p["x0"]) {
      c.x0 = r.vector(p["x0"], "process.x0", c.dimension);
    }
    if (p["T"]) {
      c.T = r.real(p["T"], "process.T");
      if (!(c.T > 0.0)) {
        r.fail(p["T"], "process.T", "must be positive");
      }
    }
    if (p["n_steps"]) {
      const auto n = r.positive_integer(p["n_steps"], "process.n_steps");
      if (n > (std::uint64_t{1} << 40)) {
        r.fail(p["n_steps"], "process.n_steps", "too large");
      }
      c.n_steps = static_cast<std::int64_t>(n);
    }
  }
  const int m = c.dimension - 1;

  // coefficients
  if (const YAML::Node k = root["coefficients"]) {
    r.check_keys(k, "coefficients",
                 {"family", "alpha", "beta", "slope", "offset", "alpha_radius",
                  "center", "radius", "power", "bound_K", "lipschitz_L"});
    CoefficientParams &s = c.coefficients;
    if (k["family"]) {
      s.family = r.text(k["family"], "coefficients.family");
      if (kFamilies.count(s.family) == 0) {
        r.fail(k["family"], "coefficients.family",
               "unknown family '" + s.family +
                   "' (zero, constant, clamped_linear, radial_bump)");
      }
    }
    const std::map<std::string, std::set<std::string>> params = {
        {"zero", {}},
        {"constant", {"alpha", "beta", "bound_K", "lipschitz_L"}},
        {"clamped_linear",
         {"slope", "offset", "alpha_radius", "beta", "bound_K", "lipschitz_L"}},
        {"radial_bump",
         {"center", "radius", "power", "alpha", "beta", "bound_K", "lipschitz_L"}}};
    for (const auto &kv : k) {
      const std::string key = kv.first.as<std::string>();
      if (key != "family" && params.at(s.family).count(key) == 0) {
        r.fail(kv.first, "coefficients." + key,
               "not a parameter of family '" + s.family + "'");
      }
    }
    if (k["alpha"]) {
      s.alpha = r.vector(k["alpha"], "coefficients.alpha", m);
    }
    if (k["beta"]) {
      s.beta = r.matrix(k["beta"], "coefficients.beta", m);
    }
    if (k["slope"]) {
      s.slope = r.matrix(k["slope"], "coefficients.slope", m);
    }
    if (k["offset"]) {
      s.offset = r.vector(k["offset"], "coefficients.offset", m);
    }
    if (k["alpha_radius"]) {
      s.alpha_radius = r.real(k["alpha_radius"], "coefficients.alpha_radius");
    }
    if (k["center"]) {
      s.center = r.vector(k["center"], "coefficients.center", m);
    }
    if (k["radius"]) {
      s.radius = r.real(k["radius"], "coefficients.radius");
    }
    if (k["power"]) {
      s.power = static_cast<int>(
          std::min<std::uint64_t>(r.positive_integer(k["power"], "coefficients.power"), 64));
    }
    if (k["bound_K"]) {
      s.bound_K = r.real(k["bound_K"], "coefficients.bound_K");
    }
    if (k["lipschitz_L"]) {
      s.lipschitz_L = r.real(k["lipschitz_L"], "coefficients.lipschitz_L");
    }
  }

  // simulate
  if (const YAML::Node s = root["simulate"]) {
    r.check_keys(s, "simulate", {"n_paths", "observe", "dump_paths"});
    if (s["n_paths"]) {
      c.simulate_paths = r.positive_integer(s["n_paths"], "simulate.n_paths");
    }
    if (s["observe"]) {
      c.observe = r.reals(s["observe"], "simulate.observe");
      for (double t : c.observe) {
        if (!(t >= 0.0 && t <= c.T)) {
          r.fail(s["observe"], "simulate.observe", "times must lie in [0, T]");
        }
      }
    }
    if (s["dump_paths"]) {
      c.dump_paths = r.unsigned_integer(s["dump_paths"], "simulate.dump_paths");
      if (c.dump_paths > c.simulate_paths) {
        r.fail(s["dump_paths"], "simulate.dump_paths", "exceeds simulate.n_paths");
      }
    }
  }

  // verify
  if (const YAML::Node v = root["verify"]) {
    r.check_keys(v, "verify",
                 {"n_paths", "tests", "threshold", "thresholds", "restart_paths",
                  "markov_functionals", "ck_probes"});
    const auto &names = verify_test_names();
    const auto known = [&](const std::string &n) {
      return std::find(names.begin(), names.end(), n) != names.end();
    };
    if (v["n_paths"]) {
      c.verify_paths = r.positive_integer(v["n_paths"], "verify.n_paths");
    }
    if (v["tests"]) {
      c.tests = r.strings(v["tests"], "verify.tests");
      for (const auto &t : c.tests) {
        if (!known(t)) {
          r.fail(v["tests"], "verify.tests", "unknown test '" + t + "'");
        }
      }
    }
    if (v["threshold"]) {
      c.threshold_override = r.real(v["threshold"], "verify.threshold");
      if (*c.threshold_override < 0.0) {
        r.fail(v["threshold"], "verify.threshold", "must be non-negative");
      }
    }
    if (const YAML::Node th = v["thresholds"]) {
      if (!th.IsMap()) {
        r.fail(th, "verify.thresholds", "expected test: threshold pairs");
      }
      for (const auto &kv : th) {
        const std::string name = kv.first.as<std::string>();
        const std::string key = "verify.thresholds." + name;
        if (!known(name)) {
          r.fail(kv.first, key, "unknown test");
        }
        const double value = r.real(kv.second, key);
        if (value < 0.0) {
          r.fail(kv.second, key, "must be non-negative");
        }
        c.thresholds[name] = value;
      }
    }
    if (v["restart_paths"]) {
      c.restart_paths = r.positive_integer(v["restart_paths"], "verify.restart_paths");
    }
    if (v["markov_functionals"]) {
      c.markov_functionals =
          r.strings(v["markov_functionals"], "verify.markov_functionals");
      for (const auto &f : c.markov_functionals) {
        try {
          (void)functional_from_string(f);
        } catch (const std::invalid_argument &) {
          r.fail(v["markov_functionals"], "verify.markov_functionals",
                 "unknown functional '" + f + "' (positive, normal, tangential)");
        }
      }
    }
    if (v["ck_probes"]) {
      c.ck_probes = r.reals(v["ck_probes"], "verify.ck_probes");
      if (c.ck_probes.empty()) {
        r.fail(v["ck_probes"], "verify.ck_probes", "needs at least one probe");
      }
    }
  }

  // limits
  if (const YAML::Node l = root["limits"]) {
    r.check_keys(l, "limits",
                 {"theta", "bump", "t_list", "n_steps", "tangent_spacing",
                  "paths_per_t", "tolerance"});
    if (l["theta"]) {
      if (!(l["theta"].IsScalar() && l["theta"].Scalar() == "normal")) {
        c.theta = r.vector(l["theta"], "limits.theta", c.dimension);
      }
    }
    if (const YAML::Node b = l["bump"]) {
      r.check_keys(b, "limits.bump", {"center", "radius", "power"});
      if (b["center"]) {
        c.bump_center = r.vector(b["center"], "limits.bump.center", c.dimension);
      }
      if (b["radius"]) {
        c.bump_radius = r.real(b["radius"], "limits.bump.radius");
        if (!(c.bump_radius > 0.0)) {
          r.fail(b["radius"], "limits.bump.radius", "must be positive");
        }
      }
      if (b["power"]) {
        const auto p = r.positive_integer(b["power"], "limits.bump.power");
        if (p > 16) {
          r.fail(b["power"], "limits.bump.power", "must be between 1 and 16");
        }
        c.bump_power = static_cast<int>(p);
      }
    }
    if (l["t_list"]) {
      c.limits.t_list = r.reals(l["t_list"], "limits.t_list");
      const auto &t = c.limits.t_list;
      bool ok = t.size() >= 3 && t.back() > 0.0;
      for (std::size_t i = 1; ok && i < t.size(); ++i) {
        ok = t[i] < t[i - 1];
      }
      if (!ok) {
        r.fail(l["t_list"], "limits.t_list",
               "needs at least 3 strictly decreasing positive times");
      }
    }
    if (l["n_steps"]) {
      const auto n = r.positive_integer(l["n_steps"], "limits.n_steps");
      if (n > (std::uint64_t{1} << 20)) {
        r.fail(l["n_steps"], "limits.n_steps", "too large");
      }
      c.limits.n_steps = static_cast<std::int64_t>(n);
    }
    if (l["tangent_spacing"]) {
      c.limits.tangent_spacing = r.real(l["tangent_spacing"], "limits.tangent_spacing");
      if (!(c.limits.tangent_spacing > 0.0)) {
        r.fail(l["tangent_spacing"], "limits.tangent_spacing", "must be positive");
      }
    }
    if (l["paths_per_t"]) {
      c.limits.paths_per_t = r.positive_integer(l["paths_per_t"], "limits.paths_per_t");
    }
    if (l["tolerance"]) {
      c.limits.tolerance = r.real(l["tolerance"], "limits.tolerance");
      if (!(c.limits.tolerance > 0.0)) {
        r.fail(l["tolerance"], "limits.tolerance", "must be positive");
      }
    }
  }

  // Whole-model checks: the frame, the coefficient field with its declared
  // constants and the starting point.
  try {
    (void)c.frame();
  } catch (const std::invalid_argument &e) {
    r.fail_line(r.line_of("process.normal"), "process.normal", e.what());
  }
  if (c.theta.size() != 0 && !(c.theta.norm() > 0.0)) {
    r.fail_line(r.line_of("limits.theta"), "limits.theta", "must be nonzero");
  }
  try {
    c.process().validate();
  } catch (const std::invalid_argument &e) {
    r.fail_line(r.line_of("coefficients"), "coefficients", e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path + ": cannot open configuration file");
  }
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

// ---------------------------------------------------------------------------
// YAML rendering

namespace {

void emit(YAML::Emitter &out, const Json &j) {
  switch (j.type()) {
  case Json::value_t::object:
    out << YAML::BeginMap;
    for (const auto &[key, value] : j.items()) {
      out << YAML::Key << key << YAML::Value;
      emit(out, value);
    }
    out << YAML::EndMap;
    break;
  case Json::value_t::array: {
    const bool flat = std::all_of(j.begin(), j.end(), [](const Json &e) {
      return e.is_primitive();
    });
    out << (flat ? YAML::Flow : YAML::Block) << YAML::BeginSeq;
    for (const auto &e : j) {
      if (e.is_array()) {
        out << YAML::Flow;
      }
      emit(out, e);
    }
    out << YAML::EndSeq;
    break;
  }
  case Json::value_t::number_float:
    out << j.dump();
    break;
  case Json::value_t::string:
    out << j.get<std::string>();
    break;
  default:
    out << j.dump();
    break;
  }
}

} // namespace

std::string to_yaml(const Json &doc) {
  YAML::Emitter out;
  emit(out, doc);
  return std::string(out.c_str()) + "\n";
}

} // namespace skewdiff::cli
