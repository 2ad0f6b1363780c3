#include "bads/mesh.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "bads/errors.hpp"

namespace bads {

namespace {

constexpr double kDuplicateTol = 1e-10;

double coupled_mesh_size(double poll_size) { return std::min(poll_size, poll_size * poll_size); }

}  // namespace

MeshState MeshState::initial(double poll_size_init, double poll_size_min, double poll_size_max) {
    MeshState s;
    s.poll_size = poll_size_init;
    s.mesh_size = coupled_mesh_size(poll_size_init);
    s.poll_size_min = poll_size_min;
    s.poll_size_max = poll_size_max;
    s.consecutive_successes = 0;
    s.consecutive_failures = 0;
    return s;
}

MeshState update_poll_size(const MeshState& state, StepOutcome outcome) {
    MeshState next = state;
    if (outcome == StepOutcome::success) {
        next.poll_size = std::min(2.0 * state.poll_size, state.poll_size_max);
        next.consecutive_successes = state.consecutive_successes + 1;
        next.consecutive_failures = 0;
    } else {
        next.poll_size = 0.5 * state.poll_size;
        next.consecutive_failures = state.consecutive_failures + 1;
        next.consecutive_successes = 0;
    }
    next.mesh_size = coupled_mesh_size(next.poll_size);
    return next;
}

DirectionSet generate_directions(int dim, Rng& rng) {
    if (dim < 1) {
        throw Error("generate_directions: dim must be >= 1");
    }
    // Orthonormalize a standard Gaussian draw; fixing the sign of the R
    // diagonal makes the rotation a deterministic function of the draw.
    Matrix q;
    for (int attempt = 0;; ++attempt) {
        const Matrix g = rng.normal_matrix(dim, dim);
        Eigen::HouseholderQR<Matrix> qr(g);
        const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
        bool degenerate = false;
        for (int j = 0; j < dim; ++j) {
            if (std::abs(r(j, j)) < 1e-10) {
                degenerate = true;
                break;
            }
        }
        if (!degenerate) {
            q = qr.householderQ() * Matrix::Identity(dim, dim);
            for (int j = 0; j < dim; ++j) {
                if (r(j, j) < 0.0) {
                    q.col(j) = -q.col(j);
                }
            }
            break;
        }
        if (attempt > 64) {
            throw Error("generate_directions: degenerate random draw");
        }
    }

    DirectionSet set;
    set.directions.reserve(static_cast<std::size_t>(2 * dim));
    for (int j = 0; j < dim; ++j) {
        set.directions.push_back(q.col(j));
    }
    for (int j = 0; j < dim; ++j) {
        set.directions.push_back(-q.col(j));
    }
    return set;
}

Vector snap_to_mesh(const Vector& point, const Vector& anchor, double mesh_size) {
    if (!(mesh_size > 0.0) || !std::isfinite(mesh_size)) {
        return point;
    }
    Vector snapped(point.size());
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        const double steps = std::round((point[i] - anchor[i]) / mesh_size);
        snapped[i] = std::isfinite(steps) ? anchor[i] + steps * mesh_size : point[i];
    }
    return snapped;
}

std::vector<Vector> poll_candidates(const Vector& incumbent, const MeshState& state,
                                    const DirectionSet& dirs, const ValidatedProblem& problem,
                                    const std::vector<EvaluationRecord>& history) {
    std::vector<Vector> out;
    out.reserve(dirs.directions.size());
    for (const Vector& d : dirs.directions) {
        Vector cand = incumbent + state.poll_size * d;
        cand = snap_to_mesh(cand, incumbent, state.mesh_size);
        cand = problem.clamp_unit(std::move(cand));
        if (already_evaluated(history, cand, kDuplicateTol)) {
            continue;
        }
        bool dup = false;
        for (const Vector& prev : out) {
            if ((prev - cand).squaredNorm() <= kDuplicateTol * kDuplicateTol) {
                dup = true;
                break;
            }
        }
        if (!dup) {
            out.push_back(std::move(cand));
        }
    }
    return out;
}

}  // namespace bads
