#include "bads/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace bads {

namespace {

constexpr double kDuplicateTol = 1e-10;

struct LexLess {
    bool operator()(const Vector& a, const Vector& b) const {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                            b.data() + b.size());
    }
};

}  // namespace

std::vector<Vector> propose_candidates(const Vector& incumbent, const MeshState& mesh,
                                       const SearchState& state, const ValidatedProblem& problem,
                                       const std::vector<EvaluationRecord>& history, Rng& rng) {
    const double sd = state.radius_scale * mesh.poll_size;
    const Eigen::Index dim = incumbent.size();

    // Snapped draws that coincide land on bit-identical coordinates, so
    // within-batch deduplication is an exact-match set.
    const Matrix draws = rng.normal_matrix(dim, state.candidates_per_proposal);
    std::vector<Vector> raw;
    raw.reserve(static_cast<std::size_t>(state.candidates_per_proposal));
    std::set<Vector, LexLess> seen;
    double max_dist2 = 0.0;
    for (int i = 0; i < state.candidates_per_proposal; ++i) {
        Vector cand = incumbent + sd * draws.col(i);
        cand = snap_to_mesh(cand, incumbent, mesh.mesh_size);
        cand = problem.clamp_unit(std::move(cand));
        if (!seen.insert(cand).second) {
            continue;
        }
        max_dist2 = std::max(max_dist2, (cand - incumbent).squaredNorm());
        raw.push_back(std::move(cand));
    }

    // Only history points within the cloud's actual reach can collide with a
    // candidate; prefilter once instead of scanning the full history per draw.
    const double reach = std::sqrt(max_dist2) + kDuplicateTol;
    std::vector<const Vector*> nearby;
    for (const auto& rec : history) {
        if ((rec.unit_point - incumbent).norm() <= reach) {
            nearby.push_back(&rec.unit_point);
        }
    }

    std::vector<Vector> out;
    out.reserve(raw.size());
    const double tol2 = kDuplicateTol * kDuplicateTol;
    for (Vector& cand : raw) {
        bool dup = false;
        for (const Vector* prev : nearby) {
            if ((*prev - cand).squaredNorm() <= tol2) {
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

std::vector<int> rank_by_lcb(const GpModel& model, const std::vector<Vector>& candidates,
                             double kappa) {
    const auto predictions = model.predict(candidates);
    std::vector<int> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        score[i] = lcb(predictions[i].mean, predictions[i].sd, kappa);
    }
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double sa = score[static_cast<std::size_t>(a)];
        const double sb = score[static_cast<std::size_t>(b)];
        return sa != sb ? sa < sb : a < b;
    });
    return order;
}

}  // namespace bads
