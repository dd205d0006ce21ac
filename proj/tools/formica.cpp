#include <atomic>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "formica/cli_io.hpp"
#include "formica/errors.hpp"

namespace {

struct Job {
  std::string text;
  std::string label;
};

int run_job(const Job& job, const formica::ConfigOverrides& ov, std::mutex& log) {
  formica::RunConfig cfg;
  try {
    cfg = formica::parse_config(job.text, ov);
  } catch (const formica::ConfigError& e) {
    std::lock_guard<std::mutex> lock(log);
    std::cerr << job.label << ": config error\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << '\n';
    return 2;
  }
  const formica::RunOutput out = formica::execute(cfg);
  std::lock_guard<std::mutex> lock(log);
  if (out.ok)
    std::cout << job.label << ": ok -> " << out.dir.string() << '\n';
  else
    std::cerr << job.label << ": failed (exit " << out.exit_code << "): " << out.failure << '\n';
  return out.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"formica: ant trail chemotaxis simulation engine"};
  std::string mode;
  std::vector<std::string> configs;
  std::uint64_t seed = 0;
  std::string out, preset;
  int jobs = 1;
  int threads = 0;
  bool list = false;

  app.add_option("mode", mode, "particles, fd, fd2state, azimuthal or kernels");
  app.add_option("--config", configs, "config file(s); several are run as a sweep");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  auto* out_opt = app.add_option("--out", out, "override the output directory");
  auto* preset_opt = app.add_option("--preset", preset, "start from a stored preset");
  app.add_option("--jobs", jobs, "concurrent runs for a sweep")->check(CLI::PositiveNumber);
  auto* threads_opt = app.add_option("--threads", threads, "threads per run")->check(CLI::PositiveNumber);
  app.add_flag("--list-presets", list, "print the preset catalog");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (list) {
    for (const auto& name : formica::preset_names())
      std::cout << name << "  " << formica::preset_description(name) << '\n';
    return 0;
  }

  formica::ConfigOverrides ov;
  if (!mode.empty()) ov.mode = mode;
  if (*seed_opt) ov.seed = seed;
  if (*out_opt) ov.out = out;
  if (*preset_opt) ov.preset = preset;
  if (*threads_opt) ov.threads = threads;

  std::vector<Job> queue;
  for (const auto& path : configs) {
    std::ifstream in(path);
    if (!in) {
      std::cerr << "cannot read config: " << path << '\n';
      return 4;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    queue.push_back({ss.str(), path});
  }
  if (queue.empty()) queue.push_back({"", preset.empty() ? "(command line)" : preset});
  if (queue.size() > 1 && ov.out) {
    std::cerr << "--out cannot be shared by several configs\n";
    return 2;
  }

  std::mutex log;
  std::vector<int> codes(queue.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < queue.size(); i = next++) codes[i] = run_job(queue[i], ov, log);
  };
  std::vector<std::thread> pool;
  const int n = std::max(1, std::min<int>(jobs, int(queue.size())));
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  int code = 0;
  for (int c : codes) code = std::max(code, c);
  return code;
}
