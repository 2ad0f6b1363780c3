#pragma once

#include <vector>

#include "bads/gp.hpp"
#include "bads/mesh.hpp"
#include "bads/problem.hpp"
#include "bads/rng.hpp"
#include "bads/types.hpp"

namespace bads {

/// Search-stage bookkeeping. The failure counter resets on any search success
/// and hands control back to the poll stage once it reaches the configured
/// switch threshold.
struct SearchState {
    int consecutive_failures = 0;
    double radius_scale = 1.0;
    int candidates_per_proposal = 512;
};

/// Lower confidence bound: mean - kappa * sd.
inline double lcb(double mean, double sd, double kappa) { return mean - kappa * sd; }

/// Gaussian cloud of candidate points around the incumbent with isotropic
/// sd = radius_scale * poll_size, snapped to the mesh lattice, clamped to the
/// unit box and deduplicated against history and within the batch.
/// Deterministic given the rng state.
std::vector<Vector> propose_candidates(const Vector& incumbent, const MeshState& mesh,
                                       const SearchState& state, const ValidatedProblem& problem,
                                       const std::vector<EvaluationRecord>& history, Rng& rng);

/// Candidate indices ordered by ascending LCB under the model (ties broken by
/// the lower index). The first entry is the acquisition argmin.
std::vector<int> rank_by_lcb(const GpModel& model, const std::vector<Vector>& candidates,
                             double kappa);

}  // namespace bads
