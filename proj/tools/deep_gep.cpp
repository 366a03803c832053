#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "runner.hpp"

using deepgep::cli::ExperimentConfig;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_logger_mt("deep-gep");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("DEEP_GEP_LOG");
  const std::string level = env ? env : "error";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else throw deepgep::cli::ConfigError("DEEP_GEP_LOG must be error, info or debug");
}

int parse_threads(const std::string& s) {
  if (s == "auto") return 0;
  try {
    std::size_t pos = 0;
    const int t = std::stoi(s, &pos);
    if (pos == s.size() && t >= 1) return t;
  } catch (const std::exception&) {
  }
  throw deepgep::cli::ConfigError("--threads must be a positive integer or auto");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep-gep: deep Gaussian equivalence experiments"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string threads = "1";
  std::uint64_t seed = 0;

  for (const auto& op : deepgep::cli::known_ops()) {
    CLI::App* sub = app.add_subcommand(op);
    sub->add_option("--spec", cfg.spec_path, "network spec JSON");
    sub->add_option("--seed", seed, "master seed (64-bit unsigned)");
    sub->add_option("--out", cfg.out_path, "output path");
    sub->add_option("--threads", threads, "worker threads or auto");
    sub->add_flag("--strict", cfg.strict, "exit 4 when a convergence flag is raised");
    if (op == "coeffs") sub->add_option("--order", cfg.order, "fixed Gauss-Hermite order");
    if (op == "reduce") sub->add_option("--trail", cfg.trail_path, "reduction trail JSON");
    if (op == "mcmc" || op == "free-entropy" || op == "mi" || op == "gen-error" || op == "nishimori" ||
        op == "interp-path" || op == "gen-data" || op == "lab") {
      sub->add_option("--config", cfg.config_path, "operation config JSON");
      sub->add_option("--n", cfg.n, "sample count");
    }
    if (op == "mcmc" || op == "free-entropy") sub->add_option("--data", cfg.data_dir, "dataset directory");
    if (op == "lab") {
      sub->add_option("suite", cfg.suite, "suite name")->required()->check(CLI::IsMember(deepgep::cli::lab_suites()));
      sub->add_option("--sizes", cfg.sizes, "comma-separated ladder")->required();
    }
    if (op == "plotdata") {
      sub->add_option("--in", cfg.in_path, "results file")->required();
      sub->add_option("--kind", cfg.kind, "scaling, path or histogram")->required();
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return deepgep::cli::kConfigError;
  }

  try {
    setup_logging();
    CLI::App* sub = app.get_subcommands().front();
    cfg.op = sub->get_name();
    if (sub->count("--seed")) cfg.seed = seed;
    cfg.threads = parse_threads(threads);
    const auto record = deepgep::cli::run(cfg, std::cout);
    spdlog::info("{} finished in {:.3f}s", cfg.op, record.wall_seconds);
    if (record.convergence_flag) {
      spdlog::warn("{}: convergence flag raised", cfg.op);
      if (cfg.strict) return deepgep::cli::kConvergence;
    }
    return deepgep::cli::kOk;
  } catch (...) {
    return deepgep::cli::report_exception(std::cerr);
  }
}
