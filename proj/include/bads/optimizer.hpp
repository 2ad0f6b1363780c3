#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "bads/gp.hpp"
#include "bads/mesh.hpp"
#include "bads/problem.hpp"
#include "bads/rng.hpp"
#include "bads/search.hpp"
#include "bads/types.hpp"

namespace bads {

/// Run options. Zero-valued count fields are resolved from the problem
/// dimension at the start of a run: max_evaluations = 100 D, max_iterations =
/// 200 D, reassess_interval = 2 D, stall_window = 4 D.
struct Options {
    int max_evaluations = 0;
    int max_iterations = 0;
    double poll_size_init = 0.25;
    double poll_size_min = 1e-6;  // mesh-tolerance termination threshold
    double poll_size_max = 1.0;
    double kappa = 2.0;
    int search_fail_switch = 2;
    double sufficient_decrease_factor = 0.1;  // noisy mode improvement margin
    std::uint64_t seed = 0;
    int reassess_interval = 0;          // noisy mode, iterations between re-measures
    double relocation_threshold = 3.0;  // combined-sd margin for incumbent moves
    int stall_window = 0;
    double stall_tolerance = 1e-9;
    bool enable_search = true;  // false = poll-only ablation
    int search_candidates = 512;
    double search_radius_scale = 1.0;
    SubsetParams subset;

    /// Copy with dimension-dependent defaults filled in. Throws InvalidOptions.
    Options resolved(int dim) const;
};

/// Current best point. In noisy mode the estimated value and sd come from the
/// surrogate posterior; in deterministic mode they equal the observation.
struct Incumbent {
    int record_index = -1;
    Vector unit_point;
    double observed_value = 0.0;
    double estimated_value = 0.0;
    double estimated_sd = 0.0;
};

enum class TerminationReason { mesh_tolerance, max_evaluations, max_iterations, stalled, objective_raised };

const char* termination_reason_name(TerminationReason r);

/// One row per iteration; coordinates are in original units.
struct TraceRow {
    int iteration = 0;
    int evaluations = 0;
    Stage stage = Stage::initial;  // stage that produced the current incumbent
    double poll_size = 0.0;
    double f_best = 0.0;
    Vector x_best;
};

struct OptimizationResult {
    Vector x_best;
    double f_best = 0.0;
    double f_sd = 0.0;  // 0 for deterministic objectives
    int total_evaluations = 0;
    int total_iterations = 0;
    TerminationReason reason = TerminationReason::max_evaluations;
    std::vector<TraceRow> trace;
    std::vector<EvaluationRecord> history;
    std::uint64_t seed = 0;
};

/// User objective threw; carries whatever progress had been made.
struct ObjectiveError : Error {
    ObjectiveError(const std::string& message, std::shared_ptr<const OptimizationResult> partial_result)
        : Error(message), partial(std::move(partial_result)) {}
    std::shared_ptr<const OptimizationResult> partial;
};

struct PollOutcome {
    bool improved = false;
    int evals_used = 0;
};

struct SearchOutcome {
    bool improved = false;
    int evals_used = 0;  // 0 means the stage was skipped
};

/// One optimization run: alternates surrogate search steps with poll passes,
/// manages the incumbent and the evaluation history, and decides termination.
/// Owns all mutable state; the user objective is never called concurrently.
class Optimizer {
public:
    Optimizer(ValidatedProblem problem, Options options);

    OptimizationResult run();

    // Stepwise interface, exposed for tests and custom loops. run() is built
    // on exactly these calls.
    const EvaluationRecord& evaluate_point(const Vector& unit_point, Stage stage);
    SearchOutcome search_step();
    PollOutcome poll_pass();
    void refit_surrogate(bool fresh_start);
    void reassess_incumbent();
    std::optional<TerminationReason> check_termination() const;

    const ValidatedProblem& problem() const { return problem_; }
    const Options& options() const { return options_; }
    const std::vector<EvaluationRecord>& history() const { return history_; }
    const Incumbent& incumbent() const { return incumbent_; }
    const MeshState& mesh() const { return mesh_; }
    const SearchState& search_state() const { return search_; }
    const std::optional<GpModel>& surrogate() const { return gp_; }
    int iteration() const { return iteration_; }

private:
    bool improves_incumbent(const EvaluationRecord& rec) const;
    void accept_incumbent(const EvaluationRecord& rec);
    void rebuild_surrogate();  // recondition on the current subset, same hyperparameters
    OptimizationResult make_result(TerminationReason reason) const;
    void finalize_noisy();
    std::vector<int> current_subset() const;

    ValidatedProblem problem_;
    Options options_;
    Rng rng_;
    std::vector<EvaluationRecord> history_;
    Incumbent incumbent_;
    MeshState mesh_;
    SearchState search_;
    std::optional<GpModel> gp_;
    std::optional<GpHyperparams> last_hp_;
    std::vector<int> gp_subset_;  // record indices behind the current surrogate
    std::vector<TraceRow> trace_;
    int iteration_ = 0;
    int stall_count_ = 0;
    int last_reassess_iteration_ = 0;
};

/// Validates nothing beyond what Optimizer does; convenience entry point.
OptimizationResult optimize(const ValidatedProblem& problem, const Options& options = {});

}  // namespace bads
