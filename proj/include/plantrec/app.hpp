#pragma once

// Command-line front end and the end-to-end smoke run.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace plantrec {

inline constexpr std::string_view kVersion = "1.0.0";

/// Parses arguments and runs one subcommand. Returns the process exit code:
/// 0 on success, 1 on a runtime failure (one "error: ..." line on stderr), 2 on
/// a usage error.
int run_cli(int argc, const char* const* argv);

struct SmokeOptions {
  std::filesystem::path dir;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::size_t structures = 4;
  std::size_t per_structure = 10;
  std::size_t test_clouds = 5;
  int rvnn_epochs = 30;
  int pcenc_epochs = 30;
};

struct SmokeReport {
  bool passed = false;
  std::string failed_stage;  ///< empty when passed
  std::vector<std::string> failures;
  std::string metrics_csv;
  double seconds = 0.0;
};

/// Generates a micro dataset, trains both networks briefly, infers on a few
/// test clouds, runs every task and metric and checks the pipeline invariants.
/// All files go under `options.dir`.
SmokeReport run_e2e_smoke(const SmokeOptions& options);

}  // namespace plantrec
