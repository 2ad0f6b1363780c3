#pragma once

#include <vector>

#include "bads/problem.hpp"
#include "bads/rng.hpp"
#include "bads/types.hpp"

namespace bads {

enum class StepOutcome { success, failure };

/// Poll- and mesh-size state of the direct-search loop. The mesh spacing is
/// slaved to the poll size through mesh_size = min(poll_size, poll_size^2),
/// so the lattice refines quadratically once the poll size drops below one.
struct MeshState {
    double poll_size = 0.25;
    double mesh_size = 0.0625;
    double poll_size_min = 1e-6;
    double poll_size_max = 1.0;
    int consecutive_successes = 0;
    int consecutive_failures = 0;

    static MeshState initial(double poll_size_init, double poll_size_min, double poll_size_max);
};

/// Doubles the poll size on success (capped at poll_size_max) and halves it
/// on failure. Halving is not floored: the controller terminates the run as
/// soon as poll_size drops below poll_size_min, so that threshold acts as the
/// mesh-tolerance stop rather than a clamp.
MeshState update_poll_size(const MeshState& state, StepOutcome outcome);

/// 2*D unit-norm poll directions: a random orthonormal basis and its
/// negation. Positively spans R^D for any draw.
struct DirectionSet {
    std::vector<Vector> directions;
};

DirectionSet generate_directions(int dim, Rng& rng);

/// Rounds `point` to the lattice of spacing `mesh_size` anchored at `anchor`.
Vector snap_to_mesh(const Vector& point, const Vector& anchor, double mesh_size);

/// Mesh points one poll step from the incumbent, snapped to the lattice,
/// clamped to the unit box and stripped of points already evaluated (within
/// 1e-10 in unit space). Order follows the direction set; callers re-rank by
/// surrogate score when one is available.
std::vector<Vector> poll_candidates(const Vector& incumbent, const MeshState& state,
                                    const DirectionSet& dirs, const ValidatedProblem& problem,
                                    const std::vector<EvaluationRecord>& history);

}  // namespace bads
