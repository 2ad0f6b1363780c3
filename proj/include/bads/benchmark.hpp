#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bads/optimizer.hpp"
#include "bads/test_functions.hpp"

namespace bads {

/// One benchmark invocation: a problem crossed with a list of seeds. String
/// fields mirror the CLI flags one-to-one so a config file and the command
/// line share a representation.
struct BenchConfig {
    std::string problem = "rosenbrock";
    int dim = 2;
    std::string seeds = "10";  // "N" = seeds 0..N-1, or explicit "3,17,42"
    int max_evals = 0;         // 0 = optimizer default (100 D)
    std::optional<double> noise_sd;
    std::string ablation = "none";  // "none" | "poll-only"
    std::string out_dir = "bench_out";
    double kappa = 2.0;
};

/// Exit codes shared by run_benchmark and the CLI.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitIoError = 3;

/// Parses a seed specification: a bare count N (seeds 0..N-1) or a
/// comma-separated explicit list. Throws Error on malformed input.
std::vector<std::uint64_t> parse_seed_list(const std::string& spec);

/// Runs every (problem, seed) cell sequentially: one trace CSV per cell plus
/// one summary JSONL row, all written atomically (temp file + rename) under
/// out_dir. Timing is reported on stdout only, keeping the output files
/// byte-reproducible. Returns an exit code; diagnostics go to stderr.
int run_benchmark(const BenchConfig& config);

/// Shortest round-trip decimal formatting used for all numeric file output.
std::string format_double(double v);

}  // namespace bads
