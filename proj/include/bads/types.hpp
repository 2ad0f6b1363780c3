#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace bads {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One objective evaluation as returned by user code. Noisy objectives may
/// report a per-evaluation standard deviation next to the value.
struct ObjectiveOutput {
    double value = 0.0;
    std::optional<double> noise_sd;
};

/// User objective, always called in original coordinates.
using Objective = std::function<ObjectiveOutput(const Vector&)>;

/// Wraps a plain scalar function as an Objective with no noise estimate.
inline Objective plain_objective(std::function<double(const Vector&)> fn) {
    return [fn = std::move(fn)](const Vector& x) { return ObjectiveOutput{fn(x), std::nullopt}; };
}

enum class Stage { initial, poll, search, reassess };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::initial: return "initial";
        case Stage::poll: return "poll";
        case Stage::search: return "search";
        case Stage::reassess: return "reassess";
    }
    return "unknown";
}

/// One true-objective call. Exactly one record per call, gapless indices.
struct EvaluationRecord {
    int index = 0;
    Vector unit_point;
    Vector original_point;
    double value = 0.0;
    std::optional<double> noise_sd;
    Stage stage = Stage::initial;
    int iteration = 0;
    bool failed = false;  // non-finite value (or invalid noise sd)

    /// Value used in incumbent comparisons; failed evaluations never win.
    double comparison_value() const {
        return failed ? std::numeric_limits<double>::infinity() : value;
    }
};

/// True when `u` lies within `tol` (Euclidean, unit space) of a recorded point.
inline bool already_evaluated(const std::vector<EvaluationRecord>& history, const Vector& u,
                              double tol) {
    const double tol2 = tol * tol;
    for (const auto& rec : history) {
        if ((rec.unit_point - u).squaredNorm() <= tol2) {
            return true;
        }
    }
    return false;
}

}  // namespace bads
