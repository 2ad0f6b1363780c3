#include "bads/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace bads {

namespace {

void require(bool ok, const char* message) {
    if (!ok) {
        throw InvalidOptions(message);
    }
}

}  // namespace

const char* termination_reason_name(TerminationReason r) {
    switch (r) {
        case TerminationReason::mesh_tolerance: return "MeshTolerance";
        case TerminationReason::max_evaluations: return "MaxEvaluations";
        case TerminationReason::max_iterations: return "MaxIterations";
        case TerminationReason::stalled: return "Stalled";
        case TerminationReason::objective_raised: return "ObjectiveRaised";
    }
    return "unknown";
}

Options Options::resolved(int dim) const {
    require(dim >= 1, "dim must be >= 1");
    Options r = *this;
    if (r.max_evaluations == 0) {
        r.max_evaluations = 100 * dim;
    }
    if (r.max_iterations == 0) {
        r.max_iterations = 200 * dim;
    }
    if (r.reassess_interval == 0) {
        r.reassess_interval = 2 * dim;
    }
    if (r.stall_window == 0) {
        r.stall_window = 4 * dim;
    }
    require(r.max_evaluations > 0, "max_evaluations must be positive");
    require(r.max_iterations > 0, "max_iterations must be positive");
    require(std::isfinite(r.poll_size_min) && r.poll_size_min > 0.0,
            "poll_size_min must be positive");
    require(std::isfinite(r.poll_size_max) && r.poll_size_max >= r.poll_size_min,
            "poll_size_max must be >= poll_size_min");
    require(std::isfinite(r.poll_size_init) && r.poll_size_init >= r.poll_size_min &&
                r.poll_size_init <= r.poll_size_max,
            "poll_size_init must lie in [poll_size_min, poll_size_max]");
    require(std::isfinite(r.kappa) && r.kappa > 0.0, "kappa must be positive");
    require(r.search_fail_switch >= 1, "search_fail_switch must be >= 1");
    require(std::isfinite(r.sufficient_decrease_factor) && r.sufficient_decrease_factor >= 0.0,
            "sufficient_decrease_factor must be nonnegative");
    require(r.reassess_interval >= 1, "reassess_interval must be positive");
    require(std::isfinite(r.relocation_threshold) && r.relocation_threshold >= 0.0,
            "relocation_threshold must be nonnegative");
    require(r.stall_window >= 1, "stall_window must be positive");
    require(std::isfinite(r.stall_tolerance) && r.stall_tolerance >= 0.0,
            "stall_tolerance must be nonnegative");
    require(r.search_candidates >= 1, "search_candidates must be positive");
    require(std::isfinite(r.search_radius_scale) && r.search_radius_scale > 0.0,
            "search_radius_scale must be positive");
    require(r.subset.radius_multiplier > 0.0, "subset radius multiplier must be positive");
    require(r.subset.cap_base >= 1 && r.subset.cap_per_dim >= 0 && r.subset.min_count >= 1,
            "subset counts must be positive");
    return r;
}

Optimizer::Optimizer(ValidatedProblem problem, Options options)
    : problem_(std::move(problem)),
      options_(options.resolved(problem_.dim())),
      rng_(options_.seed) {
    mesh_ = MeshState::initial(options_.poll_size_init, options_.poll_size_min,
                               options_.poll_size_max);
    search_.radius_scale = options_.search_radius_scale;
    search_.candidates_per_proposal = options_.search_candidates;
}

const EvaluationRecord& Optimizer::evaluate_point(const Vector& unit_point, Stage stage) {
    if (static_cast<int>(history_.size()) >= options_.max_evaluations) {
        throw BudgetExhausted();
    }
    EvaluationRecord rec;
    rec.index = static_cast<int>(history_.size());
    rec.unit_point = problem_.clamp_unit(unit_point);
    rec.original_point = problem_.from_unit(rec.unit_point);
    rec.stage = stage;
    rec.iteration = iteration_;

    ObjectiveOutput out;
    try {
        out = problem_.objective()(rec.original_point);
    } catch (const std::exception& e) {
        throw ObjectiveError(
            std::string("objective raised: ") + e.what(),
            std::make_shared<OptimizationResult>(make_result(TerminationReason::objective_raised)));
    }
    rec.value = out.value;
    rec.noise_sd = out.noise_sd;
    rec.failed = !std::isfinite(out.value);
    if (out.noise_sd && (!std::isfinite(*out.noise_sd) || *out.noise_sd < 0.0)) {
        rec.failed = true;
        rec.noise_sd.reset();
    }
    history_.push_back(std::move(rec));
    if (incumbent_.record_index < 0) {
        accept_incumbent(history_.back());  // the first record is the incumbent by definition
    }
    return history_.back();
}

bool Optimizer::improves_incumbent(const EvaluationRecord& rec) const {
    const double f_new = rec.comparison_value();
    if (!std::isfinite(f_new)) {
        return false;
    }
    if (incumbent_.record_index < 0) {
        return true;
    }
    if (!problem_.noisy()) {
        return f_new < incumbent_.observed_value;
    }
    const double new_sd =
        rec.noise_sd ? *rec.noise_sd
                     : (gp_ ? gp_->hyperparams().noise_sd()
                            : problem_.noise_scale_hint().value_or(0.0));
    const double sigma =
        std::sqrt(new_sd * new_sd + incumbent_.estimated_sd * incumbent_.estimated_sd);
    return f_new < incumbent_.estimated_value - options_.sufficient_decrease_factor * sigma;
}

void Optimizer::accept_incumbent(const EvaluationRecord& rec) {
    incumbent_.record_index = rec.index;
    incumbent_.unit_point = rec.unit_point;
    incumbent_.observed_value = rec.comparison_value();
    incumbent_.estimated_value = incumbent_.observed_value;
    incumbent_.estimated_sd = problem_.noisy() ? rec.noise_sd.value_or(0.0) : 0.0;
}

std::vector<int> Optimizer::current_subset() const {
    if (incumbent_.record_index < 0) {
        return {};
    }
    return select_training_subset(history_, incumbent_.unit_point, mesh_.poll_size,
                                  options_.subset);
}

namespace {

GpDataset dataset_from(const std::vector<EvaluationRecord>& history,
                       const std::vector<int>& subset, int dim) {
    GpDataset data;
    const int n = static_cast<int>(subset.size());
    data.inputs.resize(n, dim);
    data.values.resize(n);
    data.noise_sd.resize(n);
    for (int i = 0; i < n; ++i) {
        const auto& rec = history[static_cast<std::size_t>(subset[static_cast<std::size_t>(i)])];
        data.inputs.row(i) = rec.unit_point;
        data.values[i] = rec.value;
        data.noise_sd[i] = rec.noise_sd.value_or(0.0);
    }
    return data;
}

}  // namespace

void Optimizer::rebuild_surrogate() {
    if (!last_hp_) {
        return;
    }
    const auto subset = current_subset();
    if (static_cast<int>(subset.size()) < 2) {
        return;
    }
    try {
        gp_ = GpModel::from_hyperparams(*last_hp_,
                                        dataset_from(history_, subset, problem_.dim()));
        gp_subset_ = subset;
    } catch (const NonPositiveDefinite&) {
        // keep the previous conditioning
    }
}

void Optimizer::refit_surrogate(bool fresh_start) {
    const auto subset = current_subset();
    if (static_cast<int>(subset.size()) < 2) {
        return;
    }
    if (!fresh_start && gp_ && subset == gp_subset_) {
        return;  // training subset unchanged since the last fit
    }
    GpFitConfig cfg;
    cfg.noise.noisy = problem_.noisy();
    cfg.noise.user_hint = problem_.noise_scale_hint();
    try {
        GpModel model = fit_gp(dataset_from(history_, subset, problem_.dim()),
                               fresh_start ? std::nullopt : last_hp_, rng_, cfg);
        last_hp_ = model.hyperparams();
        gp_ = std::move(model);
        gp_subset_ = subset;
    } catch (const FitFailed&) {
        rebuild_surrogate();
    } catch (const NonPositiveDefinite&) {
        rebuild_surrogate();
    }
}

SearchOutcome Optimizer::search_step() {
    if (!options_.enable_search || !gp_ || incumbent_.record_index < 0) {
        return {false, 0};
    }
    const auto candidates =
        propose_candidates(incumbent_.unit_point, mesh_, search_, problem_, history_, rng_);
    if (candidates.empty()) {
        return {false, 0};
    }
    const auto order = rank_by_lcb(*gp_, candidates, options_.kappa);
    const auto& rec =
        evaluate_point(candidates[static_cast<std::size_t>(order.front())], Stage::search);
    SearchOutcome out;
    out.evals_used = 1;
    out.improved = improves_incumbent(rec);
    if (out.improved) {
        accept_incumbent(rec);
        search_.consecutive_failures = 0;
        mesh_ = update_poll_size(mesh_, StepOutcome::success);
    } else {
        ++search_.consecutive_failures;
    }
    rebuild_surrogate();
    return out;
}

PollOutcome Optimizer::poll_pass() {
    if (incumbent_.record_index < 0) {
        throw Error("poll_pass requires an evaluated start point");
    }
    const DirectionSet dirs = generate_directions(problem_.dim(), rng_);
    const auto candidates =
        poll_candidates(incumbent_.unit_point, mesh_, dirs, problem_, history_);
    std::vector<int> order;
    if (gp_) {
        order = rank_by_lcb(*gp_, candidates, options_.kappa);
    } else {
        order.resize(candidates.size());
        std::iota(order.begin(), order.end(), 0);
    }
    PollOutcome out;
    for (const int idx : order) {
        const auto& rec =
            evaluate_point(candidates[static_cast<std::size_t>(idx)], Stage::poll);
        ++out.evals_used;
        if (improves_incumbent(rec)) {
            accept_incumbent(rec);
            out.improved = true;
            break;  // opportunistic: stop at the first improvement
        }
    }
    mesh_ = update_poll_size(mesh_, out.improved ? StepOutcome::success : StepOutcome::failure);
    return out;
}

void Optimizer::reassess_incumbent() {
    if (!problem_.noisy() || !gp_ || incumbent_.record_index < 0) {
        return;
    }
    auto at_incumbent = gp_->predict(incumbent_.unit_point);
    incumbent_.estimated_value = at_incumbent.mean;
    incumbent_.estimated_sd = at_incumbent.sd;

    if (iteration_ - last_reassess_iteration_ >= options_.reassess_interval &&
        static_cast<int>(history_.size()) < options_.max_evaluations) {
        evaluate_point(incumbent_.unit_point, Stage::reassess);
        last_reassess_iteration_ = iteration_;
        refit_surrogate(false);
        at_incumbent = gp_->predict(incumbent_.unit_point);
        incumbent_.estimated_value = at_incumbent.mean;
        incumbent_.estimated_sd = at_incumbent.sd;
    }

    // Relocate when some already-evaluated point looks better than the
    // incumbent by a clear margin. Only the surrogate's own training points
    // are scanned; elsewhere the posterior is uninformed extrapolation.
    const auto& data = gp_->data();
    std::vector<Vector> pts;
    pts.reserve(static_cast<std::size_t>(data.size()));
    for (int i = 0; i < data.size(); ++i) {
        pts.push_back(data.inputs.row(i));
    }
    const auto preds = gp_->predict(pts);
    int best = -1;
    double best_mean = incumbent_.estimated_value;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double combined = std::sqrt(preds[i].sd * preds[i].sd +
                                          incumbent_.estimated_sd * incumbent_.estimated_sd);
        if (preds[i].mean < incumbent_.estimated_value -
                                options_.relocation_threshold * combined &&
            preds[i].mean < best_mean) {
            best = static_cast<int>(i);
            best_mean = preds[i].mean;
        }
    }
    if (best >= 0) {
        const auto& rec =
            history_[static_cast<std::size_t>(gp_subset_[static_cast<std::size_t>(best)])];
        incumbent_.record_index = rec.index;
        incumbent_.unit_point = rec.unit_point;
        incumbent_.observed_value = rec.comparison_value();
        incumbent_.estimated_value = preds[static_cast<std::size_t>(best)].mean;
        incumbent_.estimated_sd = preds[static_cast<std::size_t>(best)].sd;
    }
}

std::optional<TerminationReason> Optimizer::check_termination() const {
    if (static_cast<int>(history_.size()) >= options_.max_evaluations) {
        return TerminationReason::max_evaluations;
    }
    if (iteration_ >= options_.max_iterations) {
        return TerminationReason::max_iterations;
    }
    if (mesh_.poll_size < options_.poll_size_min) {
        return TerminationReason::mesh_tolerance;
    }
    if (stall_count_ >= options_.stall_window) {
        return TerminationReason::stalled;
    }
    return std::nullopt;
}

void Optimizer::finalize_noisy() {
    if (!gp_ || incumbent_.record_index < 0) {
        return;
    }
    // Re-measure a stale incumbent once before reporting, budget permitting.
    if (iteration_ - last_reassess_iteration_ >= options_.reassess_interval &&
        static_cast<int>(history_.size()) < options_.max_evaluations) {
        try {
            evaluate_point(incumbent_.unit_point, Stage::reassess);
            rebuild_surrogate();
        } catch (const BudgetExhausted&) {
        }
    }
    // The reported optimum is the posterior argmin over everything evaluated.
    std::vector<Vector> pts;
    std::vector<int> idx;
    pts.reserve(history_.size());
    for (const auto& rec : history_) {
        if (!rec.failed) {
            pts.push_back(rec.unit_point);
            idx.push_back(rec.index);
        }
    }
    if (pts.empty()) {
        return;
    }
    const auto preds = gp_->predict(pts);
    std::size_t best = 0;
    for (std::size_t i = 1; i < preds.size(); ++i) {
        if (preds[i].mean < preds[best].mean) {
            best = i;
        }
    }
    const auto& rec = history_[static_cast<std::size_t>(idx[best])];
    incumbent_.record_index = rec.index;
    incumbent_.unit_point = rec.unit_point;
    incumbent_.observed_value = rec.comparison_value();
    incumbent_.estimated_value = preds[best].mean;
    incumbent_.estimated_sd = preds[best].sd;
}

OptimizationResult Optimizer::make_result(TerminationReason reason) const {
    OptimizationResult result;
    result.seed = options_.seed;
    result.reason = reason;
    result.total_evaluations = static_cast<int>(history_.size());
    result.total_iterations = iteration_;
    result.trace = trace_;
    result.history = history_;
    if (incumbent_.record_index >= 0) {
        result.x_best = history_[static_cast<std::size_t>(incumbent_.record_index)].original_point;
        result.f_best = incumbent_.estimated_value;
        result.f_sd = incumbent_.estimated_sd;
    } else {
        result.x_best = problem_.x0();
        result.f_best = std::numeric_limits<double>::quiet_NaN();
        result.f_sd = 0.0;
    }
    return result;
}

OptimizationResult Optimizer::run() {
    if (!problem_.objective()) {
        throw InvalidOptions("objective not set");
    }
    if (history_.empty()) {
        try {
            evaluate_point(problem_.to_unit(problem_.x0()), Stage::initial);
        } catch (const BudgetExhausted&) {
            return make_result(TerminationReason::max_evaluations);
        }
    }

    std::optional<TerminationReason> reason;
    while (!reason) {
        ++iteration_;
        const double f_start = incumbent_.estimated_value;
        const double poll_size_start = mesh_.poll_size;
        try {
            if (options_.enable_search) {
                while (gp_ && search_.consecutive_failures < options_.search_fail_switch) {
                    const SearchOutcome so = search_step();
                    if (so.evals_used == 0) {
                        break;
                    }
                }
            }
            poll_pass();
            search_.consecutive_failures = 0;
            // Poll-only ablation runs as plain direct search with no surrogate
            // at all; noisy runs keep the model for incumbent estimation.
            if (options_.enable_search || problem_.noisy()) {
                refit_surrogate(iteration_ % (2 * problem_.dim()) == 0);
            }
            if (problem_.noisy()) {
                reassess_incumbent();
            }
        } catch (const BudgetExhausted&) {
            // Partial iteration: logged below, termination check fires next.
        }

        TraceRow row;
        row.iteration = iteration_;
        row.evaluations = static_cast<int>(history_.size());
        row.stage = incumbent_.record_index >= 0
                        ? history_[static_cast<std::size_t>(incumbent_.record_index)].stage
                        : Stage::initial;
        row.poll_size = mesh_.poll_size;
        row.f_best = incumbent_.estimated_value;
        row.x_best = incumbent_.record_index >= 0
                         ? history_[static_cast<std::size_t>(incumbent_.record_index)].original_point
                         : problem_.x0();
        trace_.push_back(std::move(row));

        // An iteration counts as progress when the incumbent improved
        // measurably or the mesh refined; a run that does neither for
        // stall_window consecutive iterations is stalled.
        const bool improved =
            (f_start - incumbent_.estimated_value) >
            options_.stall_tolerance * std::max(1.0, std::abs(f_start));
        const bool refined = mesh_.poll_size < poll_size_start;
        stall_count_ = (improved || refined) ? 0 : stall_count_ + 1;

        reason = check_termination();
    }

    if (problem_.noisy()) {
        finalize_noisy();
    }
    return make_result(*reason);
}

OptimizationResult optimize(const ValidatedProblem& problem, const Options& options) {
    Optimizer optimizer(problem, options);
    return optimizer.run();
}

}  // namespace bads
