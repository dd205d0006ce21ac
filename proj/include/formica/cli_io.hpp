#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "formica/azimuthal.hpp"
#include "formica/core.hpp"
#include "formica/fd_solver.hpp"
#include "formica/kernel_verify.hpp"
#include "formica/particle_sim.hpp"

namespace formica {

enum class Mode { particles, fd, fd2state, azimuthal, kernels };
std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// Periodic 1D profile offset + amplitude·cos(2π(x − center)).
struct CosineProfile {
  double offset = 0;
  double amplitude = 0;
  double center = 0;
  Eigen::VectorXd sample(int n) const;
};

struct FdSettings {
  int n_x = 128;
  int n_theta = 64;
  double dt = 1e-3;
  double t_max = 10;
  double tol = 1e-8;
  int snapshot_every = 100;
  FdOptions opts;
  CosineProfile c0{0, 0.05, 0};
  /// ρ₀(x, θ) = (1 + rho_bump·cos(2π(x − rho_center)))/2π (times the mass).
  double rho_bump = 0;
  double rho_center = 0;
};

struct TwoStateSettings {
  CosineProfile alpha_rate{0.5, 0, 0};
  CosineProfile beta_rate{0.5, 0, 0};
  std::string j = "u_turn";  // identity, u_turn, gaussian
  double j_width = 0.3;
  ProductionSpec prod_alpha{1, 0};
  ProductionSpec prod_beta{0, 1};
  double smell_gamma = 1;
  double smell_sigma = 0.05;
  double smell_chi = 0;
};

struct AzimuthalSettings {
  Vec2d p = Vec2d::Zero();
  HessianSymd a{};
  double chi = 2;
  double tau = 1;
  int n_grid = 1024;
  bool simulate = true;
  AutonomousSim sim;
};

struct ParticleSettings {
  ParticleNumerics num;
  std::int64_t steps = 1000;
  InitialLaw law;
  InitialField c0;
  SnapshotSchedule snapshots;
  int density_bins = 32;  // position histogram for the averaging diagnostic
};

/// Fully expanded run description. Every field has a key in the flat config grammar.
struct RunConfig {
  Mode mode = Mode::particles;
  std::string preset;
  std::uint64_t seed = 1;
  std::string out = "runs/formica";
  int threads = 1;
  ModelParams params;
  ParticleSettings particles;
  FdSettings fd;
  TwoStateSettings two_state;
  AzimuthalSettings azimuthal;
  KernelReportConfig kernels;

  /// Range violations, all of them.
  std::vector<std::string> violations() const;
};

/// Values that replace config-file entries (command-line flags).
struct ConfigOverrides {
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> preset;
  std::optional<int> threads;
};

/// Parses the flat `key = value` grammar:
///   line     := blank | comment | header | entry
///   comment  := '#' ...
///   header   := '[' section ']'          (prefixes following keys with "section.")
///   entry    := key '=' scalar [comment]
///   scalar   := "string" | number | true | false
/// A `preset` entry loads the stored preset first; the other entries override it.
/// Throws ConfigError listing every violation.
RunConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {});

/// Emits every key, one per line, in registry order.
std::string serialize_config(const RunConfig& cfg);

std::vector<std::string> preset_names();
/// Stored config text of a preset; throws ConfigError for an unknown name.
const std::string& preset_text(const std::string& name);
/// One-line description of what regime a preset targets.
std::string preset_description(const std::string& name);

/// FNV-1a 64-bit hash, hex encoded.
std::string fnv1a_hex(const std::string& data);

struct RunOutput {
  std::filesystem::path dir;
  std::map<std::string, std::string> manifest;
  std::vector<std::string> files;  // relative to dir
  bool ok = false;
  int exit_code = 0;
  std::string failure;
};

/// Output directory for a config: `out` resolved against $FORMICA_OUT if set.
std::filesystem::path resolve_output_dir(const RunConfig& cfg);

/// Runs the configured mode. Writes manifest.txt (status=running) first, snapshots
/// as they are produced, diagnostics.csv last, then the final manifest. Module
/// errors are caught, recorded as status=failed and mapped to exit codes
/// (2 config, 3 invariant, 4 I/O).
RunOutput execute(const RunConfig& cfg);

/// Reads key=value lines of a manifest.
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);

}  // namespace formica
