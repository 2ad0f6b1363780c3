#include "bads/benchmark.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "bads/problem.hpp"

namespace bads {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& spec) {
    const auto parse_one = [](const std::string& tok) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(tok, &pos);
        } catch (const std::exception&) {
            throw Error("invalid seed value: '" + tok + "'");
        }
        if (pos != tok.size()) {
            throw Error("invalid seed value: '" + tok + "'");
        }
        return static_cast<std::uint64_t>(v);
    };

    if (spec.find(',') == std::string::npos) {
        const std::uint64_t count = parse_one(spec);
        if (count == 0 || count > 100000) {
            throw Error("seed count must be in [1, 100000]");
        }
        std::vector<std::uint64_t> seeds(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            seeds[i] = i;
        }
        return seeds;
    }
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) {
            throw Error("empty seed entry in '" + spec + "'");
        }
        seeds.push_back(parse_one(tok));
    }
    if (seeds.empty()) {
        throw Error("no seeds given");
    }
    return seeds;
}

namespace {

// Decorrelates the observation-noise stream from the optimizer's seed.
std::uint64_t noise_seed_for(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

void write_atomic(const fs::path& path, const std::string& contents) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error("cannot open " + tmp.string());
        }
        out << contents;
        if (!out) {
            throw Error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error("rename failed for " + path.string() + ": " + ec.message());
    }
}

std::string trace_csv(const OptimizationResult& result, int dim) {
    std::string out = "iteration,evals,stage,poll_size,f_best";
    for (int d = 1; d <= dim; ++d) {
        out += ",x_" + std::to_string(d);
    }
    out += "\n";
    for (const TraceRow& row : result.trace) {
        out += std::to_string(row.iteration);
        out += ',';
        out += std::to_string(row.evaluations);
        out += ',';
        out += stage_name(row.stage);
        out += ',';
        out += format_double(row.poll_size);
        out += ',';
        out += format_double(row.f_best);
        for (int d = 0; d < dim; ++d) {
            out += ',';
            out += format_double(row.x_best[d]);
        }
        out += '\n';
    }
    return out;
}

nlohmann::ordered_json summary_row(const BenchConfig& config, std::uint64_t seed,
                                   const OptimizationResult& result) {
    nlohmann::ordered_json row;
    row["problem"] = config.problem;
    row["dim"] = config.dim;
    row["seed"] = seed;
    row["f_best"] = result.f_best;
    row["f_sd"] = result.f_sd;
    row["evals"] = result.total_evaluations;
    row["iters"] = result.total_iterations;
    row["reason"] = termination_reason_name(result.reason);
    auto x = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < result.x_best.size(); ++i) {
        x.push_back(result.x_best[i]);
    }
    row["x_best"] = std::move(x);
    return row;
}

}  // namespace

int run_benchmark(const BenchConfig& config) {
    std::vector<std::uint64_t> seeds;
    bool poll_only = false;
    try {
        seeds = parse_seed_list(config.seeds);
        if (config.ablation == "poll-only") {
            poll_only = true;
        } else if (config.ablation != "none") {
            throw Error("ablation must be 'none' or 'poll-only'");
        }
        if (config.max_evals < 0) {
            throw Error("max-evals must be nonnegative");
        }
        if (config.noise_sd && (!std::isfinite(*config.noise_sd) || *config.noise_sd < 0.0)) {
            throw Error("noise-sd must be finite and nonnegative");
        }
        // Validate the problem name and dimension before touching the disk.
        make_test_problem(config.problem, config.dim, config.noise_sd, 0);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    }

    try {
        std::error_code ec;
        fs::create_directories(config.out_dir, ec);
        if (ec) {
            throw Error("cannot create output directory " + config.out_dir + ": " + ec.message());
        }

        std::string summary;
        const auto suite_start = std::chrono::steady_clock::now();
        for (const std::uint64_t seed : seeds) {
            TestProblem tp = make_test_problem(config.problem, config.dim, config.noise_sd,
                                               noise_seed_for(seed));
            ProblemSpec spec;
            spec.objective = tp.objective;
            spec.dim = tp.dim;
            spec.lower_bounds = tp.lower;
            spec.upper_bounds = tp.upper;
            spec.x0 = tp.x0;
            spec.noisy = tp.noise_sd.has_value();
            spec.noise_scale_hint = tp.noise_sd;

            Options options;
            options.seed = seed;
            options.max_evaluations = config.max_evals;
            options.kappa = config.kappa;
            options.enable_search = !poll_only;

            const auto cell_start = std::chrono::steady_clock::now();
            const OptimizationResult result = optimize(validate_spec(std::move(spec)), options);
            const double wall_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          cell_start)
                    .count();

            std::string stem = "trace_" + config.problem + "_d" + std::to_string(config.dim) +
                               "_s" + std::to_string(seed);
            if (poll_only) {
                stem += "_pollonly";
            }
            write_atomic(fs::path(config.out_dir) / (stem + ".csv"), trace_csv(result, tp.dim));
            summary += summary_row(config, seed, result).dump();
            summary += '\n';

            std::cout << config.problem << " d=" << config.dim << " seed=" << seed
                      << " f_best=" << format_double(result.f_best)
                      << " evals=" << result.total_evaluations
                      << " reason=" << termination_reason_name(result.reason)
                      << " wall_ms=" << format_double(wall_ms) << "\n";
        }
        const fs::path summary_path =
            fs::path(config.out_dir) / (poll_only ? "summary_pollonly.jsonl" : "summary.jsonl");
        write_atomic(summary_path, summary);
        const double total_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                      suite_start)
                .count();
        std::cout << "completed " << seeds.size() << " run(s) in " << format_double(total_ms)
                  << " ms; results in " << config.out_dir << "\n";
    } catch (const std::exception& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIoError;
    }
    return kExitOk;
}

}  // namespace bads
