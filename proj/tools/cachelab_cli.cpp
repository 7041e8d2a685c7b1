#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cachelab/config.hpp"
#include "cachelab/experiments.hpp"
#include "cachelab/report.hpp"

namespace {

constexpr std::uint64_t kDefaultSeed = 12345;

std::uint64_t env_seed_or_default() {
  const char* text = std::getenv("CACHELAB_SEED");
  if (text == nullptr) return kDefaultSeed;
  std::uint64_t v = 0;
  const std::string s(text);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw cachelab::ConfigError("CACHELAB_SEED: '" + s + "' is not an unsigned integer");
  return v;
}

// Precedence: --seed, then the config's `seed`, then CACHELAB_SEED, then the
// built-in default. Trials fall through to each experiment's own default.
std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t cli_value,
                           const cachelab::Config& cfg) {
  if (opt->count() > 0) return cli_value;
  if (cfg.has("seed")) return cfg.u64("seed", kDefaultSeed);
  return env_seed_or_default();
}

std::uint64_t resolve_trials(const CLI::Option* opt, std::uint64_t cli_value,
                             const cachelab::Config& cfg) {
  if (opt->count() > 0) return cli_value;
  return cfg.u64("trials", 0);
}

int write_report(const cachelab::Report& rep, const std::string& format,
                 const std::string& out_path) {
  const std::string text = cachelab::serialize_report(rep, format);
  if (out_path.empty()) {
    std::cout << text;
    return 0;
  }
  std::ofstream f(out_path, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot open output file '" << out_path << "'\n";
    return 2;
  }
  f << text;
  f.flush();
  return f ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cache model laboratory"};
  app.require_subcommand(1);

  std::string config_path, trace_path, experiment, out_path;
  std::string format = "csv";
  std::uint64_t seed = 0, trials = 0;

  CLI::App* sim = app.add_subcommand("simulate-trace",
                                     "replay a memory trace through a configured hierarchy");
  sim->add_option("--config", config_path, "config file with [level] sections")->required();
  sim->add_option("--trace", trace_path, "trace file, `R <addr>` / `W <addr>` per line")
      ->required();
  CLI::Option* sim_seed = sim->add_option("--seed", seed, "seed echoed into the report");
  sim->add_option("--format", format, "report format")
      ->check(CLI::IsMember({"csv", "json"}));
  sim->add_option("--out", out_path, "write the report here instead of stdout");

  std::string names;
  for (const auto& n : cachelab::experiment_names()) {
    if (!names.empty()) names += ", ";
    names += n;
  }
  CLI::App* run = app.add_subcommand("run-experiment", "run one experiment: " + names);
  run->add_option("name", experiment, "experiment name")->required();
  run->add_option("--config", config_path, "optional config overriding the defaults");
  CLI::Option* run_seed = run->add_option("--seed", seed, "base seed for all trials");
  CLI::Option* run_trials = run->add_option("--trials", trials, "trial count override");
  run->add_option("--format", format, "report format")
      ->check(CLI::IsMember({"csv", "json"}));
  run->add_option("--out", out_path, "write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    int rc = 0;
    bool checks_ok = true;
    if (sim->parsed()) {
      const cachelab::Config cfg = cachelab::Config::load(config_path);
      std::ifstream tr(trace_path);
      if (!tr) {
        std::cerr << "error: cannot open trace file '" << trace_path << "'\n";
        return 2;
      }
      const cachelab::Report rep =
          cachelab::simulate_trace_report(cfg, tr, resolve_seed(sim_seed, seed, cfg));
      rc = write_report(rep, format, out_path);
    } else {
      const cachelab::Config cfg =
          config_path.empty() ? cachelab::Config{} : cachelab::Config::load(config_path);
      const cachelab::ExperimentResult res = cachelab::run_experiment(
          experiment, cfg, resolve_seed(run_seed, seed, cfg),
          resolve_trials(run_trials, trials, cfg));
      checks_ok = res.ok;
      rc = write_report(res.report, format, out_path);
    }
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - t0);
    std::cerr << "elapsed_ms " << elapsed.count() << "\n";
    if (rc != 0) return rc;
    if (!checks_ok) {
      std::cerr << "experiment checks failed\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
