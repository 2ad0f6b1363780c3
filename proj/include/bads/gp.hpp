#pragma once

#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "bads/errors.hpp"
#include "bads/rng.hpp"
#include "bads/types.hpp"

namespace bads {

/// Kernel and mean hyperparameters, log-parameterized where positive.
struct GpHyperparams {
    Vector log_length_scales;  // unit-space, one per dimension
    double log_signal_sd = 0.0;
    double log_noise_sd = -13.815510557964274;  // log(1e-6)
    double constant_mean = 0.0;

    int dim() const { return static_cast<int>(log_length_scales.size()); }

    static GpHyperparams defaults(int dim);

    /// Packs as [log_length_scales..., log_signal_sd, log_noise_sd, mean].
    Vector pack() const;
    static GpHyperparams unpack(const Vector& theta, int dim);

    double signal_sd() const { return std::exp(log_signal_sd); }
    double noise_sd() const { return std::exp(log_noise_sd); }
};

/// Training data in unit space with per-point observation noise.
struct GpDataset {
    Matrix inputs;    // n x D
    Vector values;    // n
    Vector noise_sd;  // n, entries >= 0 (0 when the objective reported none)

    int size() const { return static_cast<int>(inputs.rows()); }
    int dim() const { return static_cast<int>(inputs.cols()); }
};

/// ARD squared-exponential covariance
///   k(x, y) = sf^2 * exp(-1/2 * sum_d ((x_d - y_d) / l_d)^2).
double kernel(const Vector& x, const Vector& y, const GpHyperparams& hp);

struct LmlResult {
    double value = 0.0;
    Vector gradient;    // w.r.t. the packed hyperparameter vector
    double jitter = 0;  // diagonal jitter actually used, as a fraction of sf^2
};

/// Log marginal likelihood of the centered targets and its exact gradient.
/// The kernel-plus-noise matrix receives diagonal jitter (1e-10 of the signal
/// variance, escalated through 1e-8 and 1e-6 if the factorization fails);
/// throws NonPositiveDefinite when escalation runs out.
LmlResult log_marginal_likelihood(const GpDataset& data, const GpHyperparams& hp);

/// Immutable posterior over the training data: caches the Cholesky factor of
/// the kernel-plus-noise matrix and its solve against the centered targets.
/// Predictions are read-only and safe to run concurrently.
class GpModel {
public:
    /// Conditions on the data with the given hyperparameters (no fitting).
    static GpModel from_hyperparams(GpHyperparams hp, GpDataset data);

    const GpHyperparams& hyperparams() const { return hp_; }
    const GpDataset& data() const { return data_; }
    int size() const { return data_.size(); }
    double jitter() const { return jitter_; }

    struct Prediction {
        double mean = 0.0;
        double sd = 0.0;  // latent predictive sd, observation noise excluded
    };

    Prediction predict(const Vector& x) const;
    std::vector<Prediction> predict(const std::vector<Vector>& xs) const;

private:
    GpModel() = default;

    GpHyperparams hp_;
    GpDataset data_;
    Eigen::LLT<Matrix> llt_;
    Vector alpha_;  // (K + noise)^-1 (y - mean)
    double jitter_ = 0.0;
};

struct GpNoiseConfig {
    bool noisy = false;
    std::optional<double> user_hint;  // lower bound on the fitted noise sd
};

struct GpFitConfig {
    GpNoiseConfig noise;
    int max_iterations = 40;     // quasi-Newton iterations per start
    double tolerance = 1e-6;     // relative objective-change stop
};

/// Maximizes the log marginal likelihood over bounded hyperparameters with a
/// projected quasi-Newton ascent from two starts: the previous hyperparameters
/// (when given) and a data-driven heuristic start. The rng is touched only
/// when both starts produce non-finite objectives and random rescue starts are
/// needed. Throws FitFailed when every start diverges.
GpModel fit_gp(const GpDataset& data, const std::optional<GpHyperparams>& previous, Rng& rng,
               const GpFitConfig& config = {});

struct SubsetParams {
    double radius_multiplier = 5.0;
    int cap_base = 50;
    int cap_per_dim = 10;
    int min_count = 20;
};

/// Indices of the training records for a local fit: every non-failed record
/// within radius_multiplier * poll_size * sqrt(D) of the incumbent, topped up
/// with nearest records to at least min(min_count, usable) and truncated to
/// the nearest cap_base + cap_per_dim * D. Ordered by distance (ties by
/// record index), so the incumbent record always comes first.
std::vector<int> select_training_subset(const std::vector<EvaluationRecord>& history,
                                        const Vector& incumbent, double poll_size,
                                        const SubsetParams& params = {});

}  // namespace bads
