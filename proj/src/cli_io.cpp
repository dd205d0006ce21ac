#include "formica/cli_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "formica/errors.hpp"

namespace formica {
namespace {

constexpr const char* kCodeVersion = "0.1.0";

// ---------------------------------------------------------------- scalars

enum class Type { string, number, integer, boolean };

struct Scalar {
  Type type = Type::string;
  std::string text;  // raw token, unquoted for strings
  double number = 0;
  bool flag = false;
};

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + '"';
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  return std::all_of(k.begin(), k.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.';
  });
}

// ---------------------------------------------------------------- key registry

struct Key {
  std::string name;
  Type type;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const Scalar&)> set;
};

using DoubleRef = std::function<double&(RunConfig&)>;
using IntRef = std::function<int&(RunConfig&)>;
using BoolRef = std::function<bool&(RunConfig&)>;
using StringRef = std::function<std::string&(RunConfig&)>;

Key num(std::string name, DoubleRef ref) {
  return {std::move(name), Type::number,
          [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const Scalar& s) { ref(c) = s.number; }};
}

Key integer(std::string name, IntRef ref) {
  return {std::move(name), Type::integer,
          [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const Scalar& s) { ref(c) = int(s.number); }};
}

Key boolean(std::string name, BoolRef ref) {
  return {std::move(name), Type::boolean,
          [ref](const RunConfig& c) { return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [ref](RunConfig& c, const Scalar& s) { ref(c) = s.flag; }};
}

Key string(std::string name, StringRef ref) {
  return {std::move(name), Type::string,
          [ref](const RunConfig& c) { return quote(ref(const_cast<RunConfig&>(c))); },
          [ref](RunConfig& c, const Scalar& s) { ref(c) = s.text; }};
}

Key enumeration(std::string name, std::function<std::string(const RunConfig&)> get,
                std::function<void(RunConfig&, const std::string&)> set) {
  return {std::move(name), Type::string,
          [get](const RunConfig& c) { return quote(get(c)); },
          [set](RunConfig& c, const Scalar& s) { set(c, s.text); }};
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    double v = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size())
      throw std::invalid_argument("expected a comma-separated list of numbers");
    out.push_back(v);
  }
  return out;
}

#define REF(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = [] {
    std::vector<Key> k;
    k.push_back(enumeration("mode", [](const RunConfig& c) { return to_string(c.mode); },
                            [](RunConfig& c, const std::string& s) { c.mode = mode_from_string(s); }));
    k.push_back(string("preset", REF(preset)));
    k.push_back({"seed", Type::integer, [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const Scalar& s) {
                   std::uint64_t v = 0;
                   const auto res = std::from_chars(s.text.data(), s.text.data() + s.text.size(), v);
                   if (res.ec != std::errc() || res.ptr != s.text.data() + s.text.size())
                     throw std::invalid_argument("seed must be a nonnegative 64-bit integer");
                   c.seed = v;
                 }});
    k.push_back(string("out", REF(out)));
    k.push_back(integer("threads", REF(threads)));

    k.push_back(num("params.lambda", REF(params.lambda)));
    k.push_back(num("params.chi", REF(params.chi)));
    k.push_back(num("params.tau", REF(params.tau)));
    k.push_back(num("params.sigma_x", REF(params.sigma_x)));
    k.push_back(num("params.sigma_theta", REF(params.sigma_theta)));
    k.push_back(num("params.sigma_c", REF(params.sigma_c)));
    k.push_back(num("params.gamma", REF(params.gamma)));
    k.push_back(num("params.mu", REF(params.mu)));

    k.push_back(integer("particles.n", REF(particles.num.n)));
    k.push_back(integer("particles.n_f", REF(particles.num.n_f)));
    k.push_back(num("particles.dt", REF(particles.num.dt)));
    k.push_back(num("particles.eps", REF(particles.num.eps)));
    k.push_back(enumeration(
        "particles.rate_convention",
        [](const RunConfig& c) { return std::string(to_string(c.particles.num.conv)); },
        [](RunConfig& c, const std::string& s) { c.particles.num.conv = rate_convention_from_string(s); }));
    k.push_back(integer("particles.resync_every", REF(particles.num.resync_every)));
    k.push_back({"particles.steps", Type::integer,
                 [](const RunConfig& c) { return std::to_string(c.particles.steps); },
                 [](RunConfig& c, const Scalar& s) { c.particles.steps = std::int64_t(s.number); }});
    k.push_back(integer("particles.density_bins", REF(particles.density_bins)));

    k.push_back(enumeration(
        "init.law", [](const RunConfig& c) { return InitialLaw::to_string(c.particles.law.kind); },
        [](RunConfig& c, const std::string& s) { c.particles.law.kind = InitialLaw::kind_from_string(s); }));
    k.push_back({"init.center_x1", Type::number,
                 [](const RunConfig& c) { return format_double(c.particles.law.center.x1()); },
                 [](RunConfig& c, const Scalar& s) {
                   c.particles.law.center = TorusPoint(s.number, c.particles.law.center.x2());
                 }});
    k.push_back({"init.center_x2", Type::number,
                 [](const RunConfig& c) { return format_double(c.particles.law.center.x2()); },
                 [](RunConfig& c, const Scalar& s) {
                   c.particles.law.center = TorusPoint(c.particles.law.center.x1(), s.number);
                 }});
    k.push_back(num("init.theta", REF(particles.law.theta)));
    k.push_back(num("init.spread", REF(particles.law.spread)));
    k.push_back(num("init.trail_angle", REF(particles.law.trail_angle)));
    k.push_back(enumeration(
        "init.field", [](const RunConfig& c) { return InitialField::to_string(c.particles.c0.kind); },
        [](RunConfig& c, const std::string& s) { c.particles.c0.kind = InitialField::kind_from_string(s); }));
    k.push_back(num("init.field_amplitude", REF(particles.c0.amplitude)));
    k.push_back({"init.field_center_x1", Type::number,
                 [](const RunConfig& c) { return format_double(c.particles.c0.center.x1()); },
                 [](RunConfig& c, const Scalar& s) {
                   c.particles.c0.center = TorusPoint(s.number, c.particles.c0.center.x2());
                 }});
    k.push_back({"init.field_center_x2", Type::number,
                 [](const RunConfig& c) { return format_double(c.particles.c0.center.x2()); },
                 [](RunConfig& c, const Scalar& s) {
                   c.particles.c0.center = TorusPoint(c.particles.c0.center.x1(), s.number);
                 }});
    k.push_back(num("init.field_angle", REF(particles.c0.angle)));

    k.push_back(enumeration(
        "snapshots.kind",
        [](const RunConfig& c) { return SnapshotSchedule::to_string(c.particles.snapshots.kind); },
        [](RunConfig& c, const std::string& s) {
          c.particles.snapshots.kind = SnapshotSchedule::kind_from_string(s);
        }));
    k.push_back(integer("snapshots.stride", REF(particles.snapshots.stride)));
    k.push_back(integer("snapshots.count", REF(particles.snapshots.count)));

    k.push_back(integer("fd.n_x", REF(fd.n_x)));
    k.push_back(integer("fd.n_theta", REF(fd.n_theta)));
    k.push_back(num("fd.dt", REF(fd.dt)));
    k.push_back(num("fd.t_max", REF(fd.t_max)));
    k.push_back(num("fd.tol", REF(fd.tol)));
    k.push_back(integer("fd.snapshot_every", REF(fd.snapshot_every)));
    k.push_back(boolean("fd.verbatim", REF(fd.opts.verbatim)));
    k.push_back(boolean("fd.upwind", REF(fd.opts.upwind)));
    k.push_back(boolean("fd.clip", REF(fd.opts.clip)));
    k.push_back(num("fd.solver_tol", REF(fd.opts.solver_tol)));
    k.push_back(integer("fd.max_iter", REF(fd.opts.max_iter)));
    k.push_back(num("fd.c0_offset", REF(fd.c0.offset)));
    k.push_back(num("fd.c0_amplitude", REF(fd.c0.amplitude)));
    k.push_back(num("fd.c0_center", REF(fd.c0.center)));
    k.push_back(num("fd.rho_bump", REF(fd.rho_bump)));
    k.push_back(num("fd.rho_center", REF(fd.rho_center)));

    k.push_back(num("two_state.alpha_offset", REF(two_state.alpha_rate.offset)));
    k.push_back(num("two_state.alpha_amplitude", REF(two_state.alpha_rate.amplitude)));
    k.push_back(num("two_state.alpha_center", REF(two_state.alpha_rate.center)));
    k.push_back(num("two_state.beta_offset", REF(two_state.beta_rate.offset)));
    k.push_back(num("two_state.beta_amplitude", REF(two_state.beta_rate.amplitude)));
    k.push_back(num("two_state.beta_center", REF(two_state.beta_rate.center)));
    k.push_back(string("two_state.j", REF(two_state.j)));
    k.push_back(num("two_state.j_width", REF(two_state.j_width)));
    k.push_back(num("two_state.prod_alpha_from_alpha", REF(two_state.prod_alpha.from_alpha)));
    k.push_back(num("two_state.prod_alpha_from_beta", REF(two_state.prod_alpha.from_beta)));
    k.push_back(num("two_state.prod_beta_from_alpha", REF(two_state.prod_beta.from_alpha)));
    k.push_back(num("two_state.prod_beta_from_beta", REF(two_state.prod_beta.from_beta)));
    k.push_back(num("two_state.smell_gamma", REF(two_state.smell_gamma)));
    k.push_back(num("two_state.smell_sigma", REF(two_state.smell_sigma)));
    k.push_back(num("two_state.smell_chi", REF(two_state.smell_chi)));

    k.push_back({"azimuthal.p1", Type::number,
                 [](const RunConfig& c) { return format_double(c.azimuthal.p.x()); },
                 [](RunConfig& c, const Scalar& s) { c.azimuthal.p.x() = s.number; }});
    k.push_back({"azimuthal.p2", Type::number,
                 [](const RunConfig& c) { return format_double(c.azimuthal.p.y()); },
                 [](RunConfig& c, const Scalar& s) { c.azimuthal.p.y() = s.number; }});
    k.push_back(num("azimuthal.a11", REF(azimuthal.a.a11)));
    k.push_back(num("azimuthal.a12", REF(azimuthal.a.a12)));
    k.push_back(num("azimuthal.a22", REF(azimuthal.a.a22)));
    k.push_back(num("azimuthal.chi", REF(azimuthal.chi)));
    k.push_back(num("azimuthal.tau", REF(azimuthal.tau)));
    k.push_back(integer("azimuthal.n_grid", REF(azimuthal.n_grid)));
    k.push_back(boolean("azimuthal.simulate", REF(azimuthal.simulate)));
    k.push_back(num("azimuthal.dt", REF(azimuthal.sim.dt)));
    k.push_back({"azimuthal.steps", Type::integer,
                 [](const RunConfig& c) { return std::to_string(c.azimuthal.sim.n_steps); },
                 [](RunConfig& c, const Scalar& s) { c.azimuthal.sim.n_steps = std::int64_t(s.number); }});
    k.push_back(integer("azimuthal.samples", REF(azimuthal.sim.n_samples)));
    k.push_back(integer("azimuthal.bins", REF(azimuthal.sim.bins)));

    k.push_back(num("kernels.t_min", REF(kernels.t_min)));
    k.push_back(num("kernels.t_max", REF(kernels.t_max)));
    k.push_back(integer("kernels.n_t", REF(kernels.n_t)));
    k.push_back({"kernels.p_values", Type::string,
                 [](const RunConfig& c) { return quote(join_doubles(c.kernels.ps)); },
                 [](RunConfig& c, const Scalar& s) { c.kernels.ps = split_doubles(s.text); }});
    k.push_back(enumeration(
        "kernels.domain", [](const RunConfig& c) { return to_string(c.kernels.domain); },
        [](RunConfig& c, const std::string& s) { c.kernels.domain = kernel_domain_from_string(s); }));
    k.push_back(integer("kernels.points", REF(kernels.points)));
    return k;
  }();
  return keys;
}

#undef REF

const Key* find_key(const std::string& name) {
  for (const auto& k : registry())
    if (k.name == name) return &k;
  return nullptr;
}

// ---------------------------------------------------------------- lexer

struct Entry {
  Scalar value;
  int line = 0;  // 0: command line
};

std::optional<Scalar> lex_value(const std::string& raw, std::string& error) {
  const std::string v = trim(raw);
  Scalar s;
  if (v.empty()) {
    error = "missing value";
    return std::nullopt;
  }
  if (v.front() == '"') {
    std::size_t i = 1;
    for (; i < v.size() && v[i] != '"'; ++i) {
      if (v[i] == '\\' && i + 1 < v.size()) ++i;
      s.text += v[i];
    }
    if (i >= v.size()) {
      error = "unterminated string";
      return std::nullopt;
    }
    const std::string rest = trim(v.substr(i + 1));
    if (!rest.empty() && rest.front() != '#') {
      error = "unexpected text after string";
      return std::nullopt;
    }
    s.type = Type::string;
    return s;
  }
  const std::string tok = trim(v.substr(0, v.find('#')));
  s.text = tok;
  if (tok == "true" || tok == "false") {
    s.type = Type::boolean;
    s.flag = tok == "true";
    return s;
  }
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), s.number);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    error = "cannot parse value '" + tok + "' (strings must be quoted)";
    return std::nullopt;
  }
  s.type = Type::number;
  return s;
}

std::map<std::string, Entry> lex(const std::string& text, std::vector<std::string>& errors) {
  std::map<std::string, Entry> entries;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (t.front() == '[') {
      const auto close = t.find(']');
      const std::string name = close == std::string::npos ? "" : trim(t.substr(1, close - 1));
      const std::string rest = close == std::string::npos ? "" : trim(t.substr(close + 1));
      if (close == std::string::npos || (!name.empty() && !valid_key(name)) ||
          (!rest.empty() && rest.front() != '#')) {
        errors.push_back(where + "malformed section header");
        continue;
      }
      section = name;
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    std::string key = trim(t.substr(0, eq));
    if (!valid_key(key)) {
      errors.push_back(where + "invalid key '" + key + "'");
      continue;
    }
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    std::string err;
    auto value = lex_value(t.substr(eq + 1), err);
    if (!value) {
      errors.push_back(where + key + ": " + err);
      continue;
    }
    auto [it, inserted] = entries.emplace(key, Entry{*value, lineno});
    if (!inserted)
      errors.push_back("duplicate key '" + key + "' on lines " + std::to_string(it->second.line) +
                       " and " + std::to_string(lineno));
  }
  return entries;
}

bool type_matches(Type want, const Scalar& s) {
  switch (want) {
    case Type::string: return s.type == Type::string;
    case Type::boolean: return s.type == Type::boolean;
    case Type::number: return s.type == Type::number;
    case Type::integer:
      return s.type == Type::number && std::isfinite(s.number) && s.number == std::floor(s.number) &&
             std::abs(s.number) < 9.2e18;
  }
  return false;
}

const char* type_name(Type t) {
  switch (t) {
    case Type::string: return "a quoted string";
    case Type::number: return "a number";
    case Type::integer: return "an integer";
    case Type::boolean: return "true or false";
  }
  return "?";
}

Scalar string_scalar(const std::string& s) { return {Type::string, s, 0, false}; }

// ---------------------------------------------------------------- presets

struct Preset {
  std::string name;
  std::string description;
  std::string text;
};

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = {
      {"trail_seed", "particles released along a straight closed trail on a ridge field",
       R"(mode = "particles"
out = "runs/trail_seed"
[params]
lambda = 1
chi = 2
tau = 0.5
sigma_x = 0.01
sigma_theta = 0.5
sigma_c = 0.01
gamma = 1
mu = 1
[particles]
n = 1000
n_f = 8
dt = 0.01
steps = 1000
[init]
law = "near_trail"
center_x1 = 0.5
center_x2 = 0.5
spread = 0.02
trail_angle = 0
field = "ridge"
field_amplitude = 0.5
field_center_x1 = 0.5
field_center_x2 = 0.5
field_angle = 0
[snapshots]
kind = "geometric"
count = 8
)"},
      {"dirac_burst", "all particles start at one point with one heading spreading",
       R"(mode = "particles"
out = "runs/dirac_burst"
[params]
lambda = 1
chi = 2
tau = 0.5
sigma_x = 0.01
sigma_theta = 0.5
sigma_c = 0.01
gamma = 1
[particles]
n = 1000
n_f = 8
dt = 0.01
steps = 1000
[init]
law = "dirac"
center_x1 = 0.5
center_x2 = 0.5
theta = 0
field = "zero"
[snapshots]
kind = "geometric"
count = 8
)"},
      {"uniform_start", "uniform positions and headings with no initial field (spontaneous trail formation)",
       R"(mode = "particles"
out = "runs/uniform_start"
[params]
lambda = 1
chi = 4
tau = 0.5
sigma_x = 0.01
sigma_theta = 0.5
sigma_c = 0.01
gamma = 1
[particles]
n = 1000
n_f = 8
dt = 0.01
steps = 1000
[init]
law = "uniform"
field = "zero"
[snapshots]
kind = "geometric"
count = 8
)"},
      {"low_viscosity", "uniform start with weak noise in position and heading",
       R"(mode = "particles"
out = "runs/low_viscosity"
[params]
lambda = 1
chi = 4
tau = 0.5
sigma_x = 0.001
sigma_theta = 0.1
sigma_c = 0.005
gamma = 1
[particles]
n = 1000
n_f = 8
dt = 0.01
steps = 1000
[init]
law = "uniform"
field = "zero"
[snapshots]
kind = "geometric"
count = 8
)"},
      {"fd_trail", "reduced system from a small cosine perturbation of the uniform state",
       R"(mode = "fd"
out = "runs/fd_trail"
[params]
lambda = 1
chi = 3
tau = 1
sigma_x = 0.05
sigma_theta = 1
sigma_c = 0.05
gamma = 1
[fd]
n_x = 128
n_theta = 64
dt = 0.01
t_max = 50
tol = 1e-8
snapshot_every = 100
upwind = true
c0_offset = 0
c0_amplitude = 0.05
c0_center = 0
)"},
      {"fd_trail_perturbed", "trail regime started from an off-centre perturbation of both c and rho",
       R"(mode = "fd"
out = "runs/fd_trail_perturbed"
[params]
lambda = 1
chi = 3
tau = 1
sigma_x = 0.05
sigma_theta = 1
sigma_c = 0.05
gamma = 1
[fd]
n_x = 128
n_theta = 64
dt = 0.01
t_max = 50
tol = 1e-8
snapshot_every = 100
upwind = true
c0_amplitude = 0.08
c0_center = 0.3
rho_bump = 0.1
rho_center = 0.3
)"},
      {"fd_low_viscosity", "trail regime with weak spatial diffusion (sharper trail)",
       R"(mode = "fd"
out = "runs/fd_low_viscosity"
[params]
lambda = 1
chi = 3
tau = 1
sigma_x = 0.02
sigma_theta = 1
sigma_c = 0.05
gamma = 1
[fd]
n_x = 128
n_theta = 64
dt = 0.01
t_max = 50
tol = 1e-8
snapshot_every = 100
upwind = true
c0_amplitude = 0.05
)"},
      {"fd_high_viscosity", "strong diffusion: the perturbation decays back to the uniform state",
       R"(mode = "fd"
out = "runs/fd_high_viscosity"
[params]
lambda = 1
chi = 1
tau = 1
sigma_x = 0.5
sigma_theta = 1
sigma_c = 0.5
gamma = 1
[fd]
n_x = 128
n_theta = 64
dt = 0.01
t_max = 50
tol = 1e-8
snapshot_every = 100
upwind = true
c0_amplitude = 0.05
)"},
      {"fd_two_state", "foraging/returning populations exchanging by u-turns",
       R"(mode = "fd2state"
out = "runs/fd_two_state"
[params]
lambda = 1
chi = 3
tau = 1
sigma_x = 0.05
sigma_theta = 1
sigma_c = 0.05
gamma = 1
[fd]
n_x = 128
n_theta = 64
dt = 0.01
t_max = 50
snapshot_every = 100
upwind = true
c0_amplitude = 0.05
[two_state]
alpha_offset = 0.5
alpha_amplitude = 0.4
alpha_center = 0.25
beta_offset = 0.5
beta_amplitude = 0.4
beta_center = 0.75
j = "u_turn"
smell_gamma = 1
smell_sigma = 0.05
smell_chi = 0.5
)"},
      {"azimuthal_flat", "flat terrain: uniform heading law",
       R"(mode = "azimuthal"
out = "runs/azimuthal_flat"
[azimuthal]
chi = 2
tau = 1
)"},
      {"azimuthal_gradient", "pure gradient p = (1, 0): unimodal heading law",
       R"(mode = "azimuthal"
out = "runs/azimuthal_gradient"
[azimuthal]
p1 = 1
chi = 2
tau = 1
)"},
      {"azimuthal_saddle", "saddle Hessian diag(1, -1): bimodal heading law",
       R"(mode = "azimuthal"
out = "runs/azimuthal_saddle"
[azimuthal]
a11 = 1
a22 = -1
chi = 2
tau = 1
)"},
      {"kernels", "heat-kernel representations and mixed-norm exponent fits",
       R"(mode = "kernels"
out = "runs/kernels"
)"},
  };
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  std::string known;
  for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError({"unknown preset '" + name + "' (known: " + known + ")"});
}

}  // namespace

// ---------------------------------------------------------------- enums and profiles

std::string to_string(Mode m) {
  switch (m) {
    case Mode::particles: return "particles";
    case Mode::fd: return "fd";
    case Mode::fd2state: return "fd2state";
    case Mode::azimuthal: return "azimuthal";
    case Mode::kernels: return "kernels";
  }
  return "particles";
}

Mode mode_from_string(const std::string& s) {
  for (Mode m : {Mode::particles, Mode::fd, Mode::fd2state, Mode::azimuthal, Mode::kernels})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown mode '" + s +
                              "' (expected particles, fd, fd2state, azimuthal or kernels)");
}

Eigen::VectorXd CosineProfile::sample(int n) const {
  Eigen::VectorXd v(n);
  for (int j = 0; j < n; ++j) v[j] = offset + amplitude * std::cos(kTwoPi * (double(j) / n - center));
  return v;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> out;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) out.push_back(what);
  };
  for (const auto& v : params.violations()) out.push_back("params: " + v);
  require(threads >= 1, "threads must be >= 1");
  require(!this->out.empty(), "out must not be empty");

  const auto& pn = particles.num;
  require(pn.n >= 2, "particles.n must be >= 2");
  require(pn.n_f >= 1 && pn.n_f <= 64, "particles.n_f must lie in [1, 64]");
  require(pn.dt > 0 && std::isfinite(pn.dt), "particles.dt must be > 0");
  require(pn.eps < 0 || pn.eps > 0, "particles.eps must be > 0 (or negative for eps = dt)");
  require(pn.resync_every >= 0, "particles.resync_every must be >= 0");
  require(particles.steps >= 0, "particles.steps must be >= 0");
  require(particles.density_bins >= 1 && particles.density_bins <= 1024,
          "particles.density_bins must lie in [1, 1024]");
  require(particles.law.spread > 0, "init.spread must be > 0");
  if (particles.c0.kind == InitialField::Kind::ridge) {
    const double q = particles.c0.angle / (0.5 * kPi);
    require(std::abs(q - std::round(q)) < 1e-9, "init.field_angle must be a multiple of pi/2");
  }
  require(particles.snapshots.stride >= 1, "snapshots.stride must be >= 1");
  require(particles.snapshots.count >= 2, "snapshots.count must be >= 2");

  require(fd.n_x >= 4 && fd.n_x <= 4096, "fd.n_x must lie in [4, 4096]");
  require(fd.n_theta >= 4 && fd.n_theta <= 4096, "fd.n_theta must lie in [4, 4096]");
  require(fd.dt > 0 && fd.dt <= 0.1, "fd.dt must lie in (0, 0.1]");
  require(fd.t_max >= 0 && std::isfinite(fd.t_max), "fd.t_max must be >= 0");
  require(fd.tol > 0, "fd.tol must be > 0");
  require(fd.snapshot_every >= 1, "fd.snapshot_every must be >= 1");
  require(fd.opts.solver_tol > 0 && fd.opts.solver_tol < 1, "fd.solver_tol must lie in (0, 1)");
  require(fd.opts.max_iter >= 1, "fd.max_iter must be >= 1");
  require(std::abs(fd.rho_bump) < 1, "fd.rho_bump must lie in (-1, 1)");

  const auto& ts = two_state;
  require(ts.alpha_rate.offset - std::abs(ts.alpha_rate.amplitude) >= 0,
          "two_state alpha rate must be >= 0 everywhere");
  require(ts.beta_rate.offset - std::abs(ts.beta_rate.amplitude) >= 0,
          "two_state beta rate must be >= 0 everywhere");
  require(ts.j == "identity" || ts.j == "u_turn" || ts.j == "gaussian",
          "two_state.j must be identity, u_turn or gaussian");
  if (mode == Mode::fd2state && ts.j == "u_turn")
    require(fd.n_theta % 2 == 0, "u_turn needs an even fd.n_theta");
  require(ts.j_width > 0, "two_state.j_width must be > 0");
  require(ts.prod_alpha.from_alpha >= 0 && ts.prod_alpha.from_beta >= 0 &&
              ts.prod_beta.from_alpha >= 0 && ts.prod_beta.from_beta >= 0,
          "two_state production coefficients must be >= 0");
  require(ts.smell_gamma > 0, "two_state.smell_gamma must be > 0");
  require(ts.smell_sigma >= 0, "two_state.smell_sigma must be >= 0");

  const auto& az = azimuthal;
  require(az.p.allFinite() && std::isfinite(az.a.a11) && std::isfinite(az.a.a12) &&
              std::isfinite(az.a.a22),
          "azimuthal profile must be finite");
  require(az.chi >= 0, "azimuthal.chi must be >= 0");
  require(az.tau >= 0, "azimuthal.tau must be >= 0");
  require(az.n_grid >= 256, "azimuthal.n_grid must be >= 256");
  require(az.sim.dt > 0, "azimuthal.dt must be > 0");
  require(az.sim.n_steps >= 2, "azimuthal.steps must be >= 2");
  require(az.sim.n_samples >= 1, "azimuthal.samples must be >= 1");
  require(az.sim.bins >= 1, "azimuthal.bins must be >= 1");

  const auto& k = kernels;
  require(k.t_min > 0 && k.t_max > k.t_min, "kernels needs 0 < t_min < t_max");
  require(k.n_t >= 4, "kernels.n_t must be >= 4");
  require(!k.ps.empty(), "kernels.p_values must not be empty");
  for (double p : k.ps) require(p >= 1 && std::isfinite(p), "kernels.p_values must be >= 1");
  require(k.points >= 64 && k.points <= 256 && k.points % 64 == 0,
          "kernels.points must be 64, 128, 192 or 256");
  return out;
}

// ---------------------------------------------------------------- parse / serialize

RunConfig parse_config(const std::string& text, const ConfigOverrides& overrides) {
  std::vector<std::string> errors;
  std::map<std::string, Entry> entries = lex(text, errors);

  if (overrides.mode) entries["mode"] = {string_scalar(*overrides.mode), 0};
  if (overrides.out) entries["out"] = {string_scalar(*overrides.out), 0};
  if (overrides.preset) entries["preset"] = {string_scalar(*overrides.preset), 0};
  if (overrides.seed) entries["seed"] = {{Type::number, std::to_string(*overrides.seed), double(*overrides.seed), false}, 0};
  if (overrides.threads) entries["threads"] = {{Type::number, std::to_string(*overrides.threads), double(*overrides.threads), false}, 0};

  RunConfig cfg;
  bool have_mode = entries.count("mode") > 0;
  auto preset_it = entries.find("preset");
  if (preset_it != entries.end() && preset_it->second.value.type == Type::string &&
      !preset_it->second.value.text.empty()) {
    try {
      cfg = parse_config(find_preset(preset_it->second.value.text).text);
      have_mode = true;
    } catch (const ConfigError& e) {
      const int line = preset_it->second.line;
      const std::string where = line > 0 ? "line " + std::to_string(line) + ": " : "command line: ";
      for (const auto& p : e.problems()) errors.push_back(where + p);
    }
  }
  if (!have_mode) errors.insert(errors.begin(), "mode missing");

  for (const auto& [name, entry] : entries) {
    const std::string where =
        entry.line > 0 ? "line " + std::to_string(entry.line) + ": " : "command line: ";
    const Key* key = find_key(name);
    if (!key) {
      errors.push_back(where + "unknown key '" + name + "'");
      continue;
    }
    if (!type_matches(key->type, entry.value)) {
      errors.push_back(where + name + " must be " + type_name(key->type));
      continue;
    }
    try {
      key->set(cfg, entry.value);
    } catch (const std::exception& e) {
      errors.push_back(where + name + ": " + e.what());
    }
  }
  for (const auto& v : cfg.violations()) errors.push_back(v);
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : registry()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : presets()) out.push_back(p.name);
  return out;
}

const std::string& preset_text(const std::string& name) { return find_preset(name).text; }

std::string preset_description(const std::string& name) { return find_preset(name).description; }

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- execution

namespace {

class RunWriter {
 public:
  RunWriter(std::filesystem::path dir, const RunConfig& cfg) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory", dir_.string());
    const std::string text = serialize_config(cfg);
    manifest_["status"] = "running";
    manifest_["mode"] = to_string(cfg.mode);
    manifest_["preset"] = cfg.preset;
    manifest_["seed"] = std::to_string(cfg.seed);
    manifest_["config_hash"] = fnv1a_hex(text);
    manifest_["code_version"] = kCodeVersion;
    manifest_["rate_convention"] = std::string(to_string(cfg.particles.num.conv));
    write_manifest();
    auto& os = open("config.txt");
    os << text;
    close("config.txt");
  }

  std::ofstream& open(const std::string& name) {
    auto& s = streams_[name];
    s.open(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!s) throw IoError("cannot open output file", (dir_ / name).string());
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    return s;
  }

  std::ofstream& stream(const std::string& name) { return streams_.at(name); }

  void flush(const std::string& name) {
    auto& s = streams_.at(name);
    s.flush();
    if (!s) throw IoError("write failed", (dir_ / name).string());
  }

  void close(const std::string& name) {
    auto& s = streams_.at(name);
    s.close();
    if (!s) throw IoError("write failed", (dir_ / name).string());
    streams_.erase(name);
  }

  void set(const std::string& key, const std::string& value) { manifest_[key] = value; }
  void set(const std::string& key, double value) { manifest_[key] = format_double(value); }

  void finish(bool ok, const std::string& reason) {
    for (auto& [name, s] : streams_) s.close();
    streams_.clear();
    manifest_["status"] = ok ? "ok" : "failed";
    if (!ok) manifest_["failure_reason"] = reason;
    std::string list;
    for (const auto& f : files_) list += (list.empty() ? "" : ",") + f;
    manifest_["files"] = list;
    write_manifest();
  }

  const std::map<std::string, std::string>& manifest() const { return manifest_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  void write_manifest() {
    const auto tmp = dir_ / "manifest.txt.tmp";
    {
      std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
      if (!os) throw IoError("cannot write manifest", tmp.string());
      for (const auto& [k, v] : manifest_) {
        std::string flat = v;
        std::replace(flat.begin(), flat.end(), '\n', ' ');
        os << k << '=' << flat << '\n';
      }
      if (!os) throw IoError("cannot write manifest", tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dir_ / "manifest.txt", ec);
    if (ec) throw IoError("cannot write manifest", (dir_ / "manifest.txt").string());
  }

  std::filesystem::path dir_;
  std::map<std::string, std::string> manifest_;
  std::map<std::string, std::ofstream> streams_;
  std::vector<std::string> files_;
};

struct NormSeries {
  std::vector<double> p2, p4, pinf;
  void add(const Eigen::VectorXd& m, double cell) {
    p2.push_back(std::sqrt(m.array().square().sum() * cell));
    p4.push_back(std::pow(m.array().pow(4).sum() * cell, 0.25));
    pinf.push_back(m.cwiseAbs().maxCoeff());
  }
  void record(RunWriter& w) const {
    w.set("averaging_max_over_initial_p2", averaging_report(p2).max_over_initial);
    w.set("averaging_max_over_initial_p4", averaging_report(p4).max_over_initial);
    w.set("averaging_max_over_initial_pinf", averaging_report(pinf).max_over_initial);
  }
};

/// Position histogram normalized to a probability density on T²₁.
Eigen::VectorXd position_histogram(const ParticleState& s, int bins) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(Eigen::Index(bins) * bins);
  for (const auto& x : s.xs) {
    const int a = std::min(bins - 1, int(x.x1() * bins));
    const int b = std::min(bins - 1, int(x.x2() * bins));
    h[Eigen::Index(a) * bins + b] += 1.0;
  }
  return h * (double(bins) * bins / s.n());
}

void run_particles_mode(const RunConfig& cfg, RunWriter& w) {
  ParticleNumerics num = cfg.particles.num;
  num.threads = cfg.threads;
  const int bins = cfg.particles.density_bins;
  const double cell = 1.0 / (double(bins) * bins);

  auto& parts = w.open("particles.csv");
  parts << "step,t,i,x1,x2,theta\n" << std::setprecision(17);
  NormSeries norms;
  std::vector<std::pair<std::int64_t, double>> snap_t;

  auto sink = [&](const ParticleState& s, const SimClock& clock) {
    const std::int64_t step = clock.step_index;
    for (int i = 0; i < s.n(); ++i)
      parts << step << ',' << clock.t() << ',' << i << ',' << s.xs[i].x1() << ',' << s.xs[i].x2()
            << ',' << s.thetas[i].value() << '\n';
    w.flush("particles.csv");
    const std::string name = "field_" + std::to_string(step) + ".csv";
    auto& f = w.open(name);
    write_field_snapshot(f, s.total_field, num.conv);
    w.close(name);
    norms.add(position_histogram(s, bins), cell);
    snap_t.emplace_back(step, clock.t());
  };

  const ParticleRunOutput out = run_particles(cfg.params, num, cfg.particles.law, cfg.particles.c0,
                                              cfg.seed, cfg.particles.steps, cfg.particles.snapshots,
                                              sink);
  w.close("particles.csv");

  auto& timing = w.open("timing.csv");
  timing << "step,seconds\n" << std::setprecision(6);
  for (std::size_t k = 0; k < out.step_seconds.size(); ++k)
    timing << k + 1 << ',' << out.step_seconds[k] << '\n';
  w.close("timing.csv");

  auto& diag = w.open("diagnostics.csv");
  diag << "step,t,norm2,norm4,norminf\n" << std::setprecision(17);
  for (std::size_t k = 0; k < snap_t.size(); ++k)
    diag << snap_t[k].first << ',' << snap_t[k].second << ',' << norms.p2[k] << ',' << norms.p4[k]
         << ',' << norms.pinf[k] << '\n';
  w.close("diagnostics.csv");

  double total = 0;
  for (double s : out.step_seconds) total += s;
  w.set("steps", std::to_string(out.steps));
  w.set("max_consistency_drift", out.max_consistency_drift);
  w.set("max_zero_mode_error", out.max_zero_mode_error);
  w.set("mean_step_seconds", out.step_seconds.empty() ? 0.0 : total / double(out.step_seconds.size()));
  norms.record(w);
}

DensityGrid fd_initial_grid(const FdSettings& fd) {
  DensityGrid g = DensityGrid::uniform(fd.n_x, fd.n_theta, 1.0);
  for (int j = 0; j < fd.n_x; ++j) {
    const double bump = 1.0 + fd.rho_bump * std::cos(kTwoPi * (g.x(j) - fd.rho_center));
    g.rho.row(j) *= bump;
  }
  g.c = fd.c0.sample(fd.n_x);
  return g;
}

/// Strict local maxima of ρ(x_j, ·) on the periodic θ-grid.
std::vector<int> theta_maxima(const DensityGrid& g, int j) {
  std::vector<int> out;
  const int n = g.n_theta;
  for (int k = 0; k < n; ++k) {
    const double v = g.rho(j, k);
    if (v > g.rho(j, (k + n - 1) % n) && v > g.rho(j, (k + 1) % n)) out.push_back(k);
  }
  return out;
}

void record_fd_scheme(const FdSettings& fd, RunWriter& w) {
  w.set("scheme_theta", fd.opts.upwind ? "upwind" : "centred");
  w.set("verbatim", fd.opts.verbatim ? "true" : "false");
  w.set("clip", fd.opts.clip ? "true" : "false");
  w.set("solver_tol", fd.opts.solver_tol);
  w.set("grid", std::to_string(fd.n_x) + "x" + std::to_string(fd.n_theta));
  w.set("dt", fd.dt);
}

void run_fd_mode(const RunConfig& cfg, RunWriter& w) {
  const FdSettings& fd = cfg.fd;
  record_fd_scheme(fd, w);
  auto& dens = w.open("density.csv");
  auto& field = w.open("field.csv");
  bool header = true;
  std::int64_t last_written = -1;
  NormSeries norms;
  std::vector<double> times, masses, mins;

  auto write_snapshot = [&](const DensityGrid& g, double t, std::int64_t step) {
    write_density_rows(dens, g, t, header);
    write_field_rows(field, g, t, header);
    header = false;
    w.flush("density.csv");
    w.flush("field.csv");
    last_written = step;
  };
  auto observer = [&](const DensityGrid& g, double t, std::int64_t step) {
    norms.add(g.position_density(), g.dx());
    times.push_back(t);
    masses.push_back(g.mass());
    mins.push_back(g.rho.minCoeff());
    if (step % fd.snapshot_every == 0) write_snapshot(g, t, step);
  };
  const SteadyResult res = run_to_steady(fd_initial_grid(fd), cfg.params, fd.opts, fd.dt, fd.t_max,
                                         fd.tol, observer);
  if (last_written != res.steps) write_snapshot(res.grid, res.t_stop, res.steps);
  w.close("density.csv");
  w.close("field.csv");

  auto& diag = w.open("diagnostics.csv");
  diag << "step,t,mass,min_rho,norm2,norm4,norminf\n" << std::setprecision(17);
  for (std::size_t k = 0; k < times.size(); ++k)
    diag << k << ',' << times[k] << ',' << masses[k] << ',' << mins[k] << ',' << norms.p2[k] << ','
         << norms.p4[k] << ',' << norms.pinf[k] << '\n';
  w.close("diagnostics.csv");

  const Eigen::VectorXd m = res.grid.position_density();
  Eigen::Index ridge = 0;
  m.maxCoeff(&ridge);
  const auto maxima = theta_maxima(res.grid, int(ridge));
  std::string ks;
  for (int k : maxima) ks += (ks.empty() ? "" : ";") + std::to_string(k);
  w.set("converged", res.converged ? "true" : "false");
  w.set("t_stop", res.t_stop);
  w.set("steps", std::to_string(res.steps));
  w.set("last_rate", res.last_rate);
  w.set("max_mass_drift", res.max_mass_drift);
  w.set("density_ratio", m.maxCoeff() / m.minCoeff());
  w.set("ridge_x", res.grid.x(int(ridge)));
  w.set("ridge_theta_maxima", ks);
  norms.record(w);
}

TransitionOp make_transition(const TwoStateSettings& ts, int n_theta) {
  if (ts.j == "identity") return TransitionOp::identity();
  if (ts.j == "u_turn") return TransitionOp::u_turn();
  return TransitionOp::wrapped_gaussian(n_theta, ts.j_width);
}

void run_fd2state_mode(const RunConfig& cfg, RunWriter& w) {
  const FdSettings& fd = cfg.fd;
  const TwoStateSettings& ts = cfg.two_state;
  record_fd_scheme(fd, w);
  w.set("transition", ts.j);

  const DensityGrid g0 = fd_initial_grid(fd);
  TwoStateGrid g;
  g.n_x = fd.n_x;
  g.n_theta = fd.n_theta;
  g.rho_alpha = 0.5 * g0.rho;
  g.rho_beta = 0.5 * g0.rho;
  g.c_alpha = g0.c;
  g.c_beta = g0.c;
  g.alpha_rate = ts.alpha_rate.sample(fd.n_x);
  g.beta_rate = ts.beta_rate.sample(fd.n_x);
  g.d_alpha = smell_field(g.alpha_rate, ts.smell_gamma, ts.smell_sigma, ts.smell_chi);
  g.d_beta = smell_field(g.beta_rate, ts.smell_gamma, ts.smell_sigma, ts.smell_chi);
  const TransitionOp j = make_transition(ts, fd.n_theta);

  auto& da = w.open("density_alpha.csv");
  auto& db = w.open("density_beta.csv");
  auto& fa = w.open("field_alpha.csv");
  auto& fb = w.open("field_beta.csv");
  auto snapshot = [&](double t, bool header) {
    const DensityGrid a = g.alpha_view(), b = g.beta_view();
    write_density_rows(da, a, t, header);
    write_density_rows(db, b, t, header);
    write_field_rows(fa, a, t, header);
    write_field_rows(fb, b, t, header);
    for (const char* n : {"density_alpha.csv", "density_beta.csv", "field_alpha.csv", "field_beta.csv"})
      w.flush(n);
  };

  const std::int64_t n_steps = fd.t_max > 0 ? std::int64_t(std::ceil(fd.t_max / fd.dt - 1e-9)) : 0;
  NormSeries norms;
  std::vector<double> ma, mb;
  auto observe = [&] {
    norms.add((g.rho_alpha + g.rho_beta).rowwise().sum() * g.dtheta(), g.dx());
    ma.push_back(g.mass_alpha());
    mb.push_back(g.mass_beta());
  };
  observe();
  snapshot(0.0, true);
  double worst = 0;
  for (std::int64_t s = 1; s <= n_steps; ++s) {
    StepDiagnostics d;
    g = step_two_state(g, cfg.params, j, ts.prod_alpha, ts.prod_beta, fd.opts, fd.dt, &d);
    worst = std::max(worst, std::abs(d.mass_after - d.mass_before) / d.mass_before);
    observe();
    if (s % fd.snapshot_every == 0 || s == n_steps) snapshot(double(s) * fd.dt, false);
  }
  for (const char* n : {"density_alpha.csv", "density_beta.csv", "field_alpha.csv", "field_beta.csv"})
    w.close(n);

  auto& diag = w.open("diagnostics.csv");
  diag << "step,t,mass_alpha,mass_beta,total_mass,norm2,norm4,norminf\n" << std::setprecision(17);
  for (std::size_t k = 0; k < ma.size(); ++k)
    diag << k << ',' << double(k) * fd.dt << ',' << ma[k] << ',' << mb[k] << ',' << ma[k] + mb[k]
         << ',' << norms.p2[k] << ',' << norms.p4[k] << ',' << norms.pinf[k] << '\n';
  w.close("diagnostics.csv");
  w.set("steps", std::to_string(n_steps));
  w.set("max_total_mass_drift", worst);
  norms.record(w);
}

void run_azimuthal_mode(const RunConfig& cfg, RunWriter& w) {
  const auto& az = cfg.azimuthal;
  const TerrainProfile profile{az.p, az.a, az.chi, az.tau};
  const Regime regime = classify(profile, az.n_grid);
  w.set("classification", to_string(regime));
  auto& d = w.open("density.csv");
  write_density_csv(d, stationary_density(profile, az.n_grid));
  w.close("density.csv");
  if (az.simulate) {
    AutonomousSim sim = az.sim;
    sim.threads = cfg.threads;
    const AngularDensity hist = simulate_autonomous(profile, sim, cfg.seed);
    auto& h = w.open("histogram.csv");
    write_density_csv(h, hist);
    w.close("histogram.csv");
    w.set("l1_distance", hist.l1_distance(stationary_density(profile, sim.bins)));
  }
  auto& diag = w.open("diagnostics.csv");
  diag << "quantity,value\nclassification," << to_string(regime) << '\n';
  w.close("diagnostics.csv");
}

void run_kernels_mode(const RunConfig& cfg, RunWriter& w) {
  KernelReportConfig kc = cfg.kernels;
  kc.threads = cfg.threads;
  const KernelReport r = kernel_report(kc);
  auto& csv = w.open("report.csv");
  write_kernel_csv(csv, r);
  w.close("report.csv");
  auto& sum = w.open("summary.txt");
  write_kernel_summary(sum, r);
  w.close("summary.txt");
  auto& diag = w.open("diagnostics.csv");
  diag << "quantity,p,fitted,target\n" << std::setprecision(17);
  bool ok = true;
  for (const auto& f : r.fits) {
    diag << f.quantity << ',' << f.p << ',' << f.fitted << ',' << f.target << '\n';
    ok = ok && f.within(0.05);
  }
  w.close("diagnostics.csv");
  w.set("exponents_within_5pct", ok ? "true" : "false");
  w.set("quadrature_converged", r.all_converged ? "true" : "false");
  w.set("max_fourier_gap", r.max_fourier_gap);
  w.set("max_l1_defect", r.max_l1_defect);
  w.set("semigroup_error", r.semigroup_error);
  w.set("dx_l1_exponent", r.dx_l1_exponent);
}

}  // namespace

std::filesystem::path resolve_output_dir(const RunConfig& cfg) {
  std::filesystem::path out(cfg.out);
  if (out.is_absolute()) return out;
  if (const char* root = std::getenv("FORMICA_OUT"); root && *root)
    return std::filesystem::path(root) / out;
  return out;
}

RunOutput execute(const RunConfig& cfg) {
  RunOutput result;
  result.dir = resolve_output_dir(cfg);
  std::optional<RunWriter> writer;
  try {
    writer.emplace(result.dir, cfg);
  } catch (const IoError& e) {
    result.exit_code = 4;
    result.failure = e.what();
    return result;
  }
  RunWriter& w = *writer;

  int code = 0;
  std::string reason;
  try {
    const auto problems = cfg.violations();
    if (!problems.empty()) throw ConfigError(problems);
    switch (cfg.mode) {
      case Mode::particles: run_particles_mode(cfg, w); break;
      case Mode::fd: run_fd_mode(cfg, w); break;
      case Mode::fd2state: run_fd2state_mode(cfg, w); break;
      case Mode::azimuthal: run_azimuthal_mode(cfg, w); break;
      case Mode::kernels: run_kernels_mode(cfg, w); break;
    }
  } catch (const ConfigError& e) {
    code = 2;
    reason = std::string("config: ") + e.what();
  } catch (const std::invalid_argument& e) {
    code = 2;
    reason = std::string(to_string(cfg.mode)) + ": invalid argument: " + e.what();
  } catch (const InvariantError& e) {
    code = 3;
    reason = std::string(to_string(cfg.mode)) + ": " + e.what();
  } catch (const IoError& e) {
    code = 4;
    reason = e.what();
  } catch (const std::exception& e) {
    code = 3;
    reason = std::string(to_string(cfg.mode)) + ": " + e.what();
  }

  try {
    w.finish(code == 0, reason);
  } catch (const IoError& e) {
    if (code == 0) {
      code = 4;
      reason = e.what();
    }
  }
  result.ok = code == 0;
  result.exit_code = code;
  result.failure = reason;
  result.manifest = w.manifest();
  result.files = w.files();
  return result;
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest", path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace formica
