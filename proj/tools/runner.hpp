#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace deepgep::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kSpecError = 2, kNumericError = 3, kConvergence = 4 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Results file that does not match the requested plot kind.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string op;
  std::string suite;  // lab only
  std::string spec_path;
  std::string out_path;
  std::string data_dir;
  std::string config_path;
  std::string trail_path;  // reduce
  std::string in_path;     // plotdata
  std::string kind;        // plotdata
  std::string sizes;       // lab, "64,128,256"
  std::optional<std::uint64_t> seed;
  std::optional<int> order;
  std::optional<int> n;
  int threads = 1;  // 0 = hardware concurrency
  bool strict = false;
};

struct RunRecord {
  nlohmann::json config;
  std::string version;
  double wall_seconds = 0.0;
  std::vector<std::string> streams;
  bool convergence_flag = false;
};

inline const std::vector<std::string>& known_ops() {
  static const std::vector<std::string> ops{"coeffs", "reduce", "gen-data", "mcmc", "free-entropy", "mi",
                                            "gen-error", "nishimori", "interp-path", "lab", "plotdata"};
  return ops;
}
inline const std::vector<std::string>& lab_suites() {
  static const std::vector<std::string> suites{"orthogonality",         "postactivation", "channel-ks",
                                               "free-entropy-variance", "psi-gap",        "gen-error-equivalence"};
  return suites;
}

/// Dispatches one operation. Results go to out_path (written atomically) or to
/// `out` when no path is given; the run record goes next to out_path as
/// "<out_path>.run.json". Throws ConfigError, SchemaError, SpecError or
/// NumericError.
RunRecord run(const ExperimentConfig& config, std::ostream& out);

/// Maps the in-flight exception to an exit code and prints it to `err`.
int report_exception(std::ostream& err);

/// Writes to a temporary sibling and renames over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::vector<int> parse_sizes(const std::string& text);

}  // namespace deepgep::cli
