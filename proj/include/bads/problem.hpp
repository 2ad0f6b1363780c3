#pragma once

#include <optional>

#include "bads/errors.hpp"
#include "bads/types.hpp"

namespace bads {

/// Problem definition as supplied by the caller. Hard bound entries may be
/// +-infinity; a dimension counts as bounded only when both sides are finite.
/// Plausible bounds, when given, must be finite and nested inside the hard
/// bounds; they default to the hard bounds and are mandatory for dimensions
/// with no finite hard bounds.
struct ProblemSpec {
    Objective objective;
    int dim = 0;
    Vector lower_bounds;
    Vector upper_bounds;
    Vector plausible_lower;  // size 0 = absent
    Vector plausible_upper;  // size 0 = absent
    Vector x0;
    bool noisy = false;
    std::optional<double> noise_scale_hint;
};

/// Immutable, validated problem. All optimizer state lives in the unit box
/// this class maps to; the objective is always invoked in original units.
/// Safe to share across threads once constructed.
class ValidatedProblem {
public:
    int dim() const { return dim_; }
    bool bounded(int d) const { return bounded_[static_cast<std::size_t>(d)]; }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }
    const Vector& plausible_lower() const { return plausible_lower_; }
    const Vector& plausible_upper() const { return plausible_upper_; }
    const Vector& x0() const { return x0_; }
    bool noisy() const { return noisy_; }
    const std::optional<double>& noise_scale_hint() const { return noise_scale_hint_; }
    const Objective& objective() const { return objective_; }

    /// Affine map into the unit box: bounded dimensions send [lower, upper]
    /// to [0, 1], unbounded ones send the plausible interval to [0, 1] with
    /// unrestricted range. Throws OutOfBounds for points outside hard bounds.
    Vector to_unit(const Vector& x) const;

    /// Inverse of to_unit. Unit coordinates on bounded dimensions are clamped
    /// to [0, 1] first, so the result always satisfies the hard bounds.
    Vector from_unit(const Vector& u) const;

    /// Clamps unit coordinates to [0, 1] on bounded dimensions only.
    Vector clamp_unit(Vector u) const;

private:
    friend ValidatedProblem validate_spec(ProblemSpec spec);
    ValidatedProblem() = default;

    Objective objective_;
    int dim_ = 0;
    Vector lower_, upper_;
    Vector plausible_lower_, plausible_upper_;
    Vector x0_;
    std::vector<bool> bounded_;
    Vector unit_offset_, unit_scale_;  // x = offset + u * scale per dimension
    bool noisy_ = false;
    std::optional<double> noise_scale_hint_;
};

/// Validates a ProblemSpec. Throws DimensionMismatch, InvalidBounds or
/// StartOutOfBounds; never returns a partially-validated problem.
ValidatedProblem validate_spec(ProblemSpec spec);

}  // namespace bads
