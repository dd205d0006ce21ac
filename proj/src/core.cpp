#include "formica/core.hpp"

#include <cmath>
#include <sstream>

#include "formica/errors.hpp"

namespace formica {

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::ostringstream os;
        for (std::size_t i = 0; i < problems.size(); ++i) os << (i ? "; " : "") << problems[i];
        return os.str();
      }()),
      problems_(std::move(problems)) {}

std::vector<std::string> ModelParams::violations() const {
  std::vector<std::string> out;
  auto require = [&](bool ok, const char* what) {
    if (!ok) out.emplace_back(what);
  };
  const double all[] = {lambda, chi, tau, sigma_x, sigma_theta, sigma_c, gamma, mu};
  for (double v : all) {
    if (!std::isfinite(v)) {
      out.emplace_back("parameters must be finite");
      return out;
    }
  }
  require(lambda >= 0, "lambda must be >= 0");
  require(chi >= 0, "chi must be >= 0");
  require(tau >= 0, "tau must be >= 0");
  require(sigma_x > 0, "sigma_x must be > 0");
  require(sigma_theta > 0, "sigma_theta must be > 0");
  require(sigma_c > 0, "sigma_c must be > 0");
  require(gamma >= 0, "gamma must be >= 0");
  require(mu > 0, "mu must be > 0");
  return out;
}

void ModelParams::validate() const {
  auto v = violations();
  if (!v.empty()) throw std::invalid_argument("invalid model parameters: " + v.front());
}

NormalizedParams normalize_params(const ModelParams& raw) {
  raw.validate();
  const double sx = raw.sigma_x;
  const double st = raw.sigma_theta;
  const double ratio = std::sqrt(st / sx);

  NormalizedParams out;
  out.params.sigma_x = 1.0;
  out.params.sigma_theta = 1.0;
  out.params.mu = 1.0;
  out.params.sigma_c = raw.sigma_c / sx;
  out.params.chi = raw.chi * raw.mu / std::sqrt(st * sx);
  out.params.gamma = raw.gamma / st;
  out.params.lambda = raw.lambda / std::sqrt(st * sx);
  out.params.tau = raw.tau * ratio;

  out.time_scale = st;
  out.space_scale = std::sqrt(sx / st);
  out.field_scale = raw.mu;
  return out;
}

}  // namespace formica
