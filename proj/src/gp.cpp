#include "bads/gp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace bads {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr std::array<double, 3> kJitterLadder = {1e-10, 1e-8, 1e-6};
constexpr double kLengthScaleLo = 1e-3;
constexpr double kLengthScaleHi = 1e3;

double quantile(std::vector<double> v, double q) {
    if (v.empty()) {
        return 0.0;
    }
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= v.size()) {
        return v.back();
    }
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

// Pairwise squared distances via the norm expansion, clamped at zero against
// cancellation round-off.
Matrix cross_sqdist(const Matrix& a, const Matrix& b) {
    const Vector an = a.rowwise().squaredNorm();
    const Vector bn = b.rowwise().squaredNorm();
    Matrix d2 = -2.0 * (a * b.transpose());
    d2.colwise() += an;
    d2.rowwise() += bn.transpose();
    return d2.cwiseMax(0.0);
}

Matrix kernel_matrix(const GpDataset& data, const GpHyperparams& hp) {
    const double sf2 = hp.signal_sd() * hp.signal_sd();
    const Vector inv_ls = (-hp.log_length_scales).array().exp();
    const Matrix scaled = data.inputs * inv_ls.asDiagonal();
    Matrix k = (cross_sqdist(scaled, scaled) * -0.5).array().exp() * sf2;
    k.diagonal().setConstant(sf2);
    return k;
}

struct Factorization {
    Eigen::LLT<Matrix> llt;
    Matrix kf;  // noise-free kernel block
    double jitter = 0.0;
};

Factorization factorize(const GpDataset& data, const GpHyperparams& hp) {
    Factorization f;
    f.kf = kernel_matrix(data, hp);
    const double sf2 = hp.signal_sd() * hp.signal_sd();
    const double sn2 = hp.noise_sd() * hp.noise_sd();
    const Vector obs_var = data.noise_sd.array().square();
    for (const double jitter : kJitterLadder) {
        Matrix k = f.kf;
        k.diagonal().array() += sn2 + jitter * sf2;
        k.diagonal() += obs_var;
        f.llt.compute(k);
        if (f.llt.info() == Eigen::Success) {
            f.jitter = jitter;
            return f;
        }
    }
    throw NonPositiveDefinite("kernel matrix not positive definite after jitter escalation");
}

}  // namespace

GpHyperparams GpHyperparams::defaults(int dim) {
    GpHyperparams hp;
    hp.log_length_scales = Vector::Constant(dim, std::log(0.25));
    hp.log_signal_sd = 0.0;
    hp.log_noise_sd = std::log(1e-6);
    hp.constant_mean = 0.0;
    return hp;
}

Vector GpHyperparams::pack() const {
    Vector theta(dim() + 3);
    theta.head(dim()) = log_length_scales;
    theta[dim()] = log_signal_sd;
    theta[dim() + 1] = log_noise_sd;
    theta[dim() + 2] = constant_mean;
    return theta;
}

GpHyperparams GpHyperparams::unpack(const Vector& theta, int dim) {
    GpHyperparams hp;
    hp.log_length_scales = theta.head(dim);
    hp.log_signal_sd = theta[dim];
    hp.log_noise_sd = theta[dim + 1];
    hp.constant_mean = theta[dim + 2];
    return hp;
}

double kernel(const Vector& x, const Vector& y, const GpHyperparams& hp) {
    if (x.size() != y.size() || x.size() != hp.log_length_scales.size()) {
        throw DimensionMismatch("kernel: dimension mismatch");
    }
    const double sf2 = hp.signal_sd() * hp.signal_sd();
    const Vector inv_ls = (-hp.log_length_scales).array().exp();
    const double d2 = ((x - y).array() * inv_ls.array()).square().sum();
    return sf2 * std::exp(-0.5 * d2);
}

namespace {

// Value-only evaluation keeping the factorization around so the gradient can
// be derived later without refactorizing; line searches stay at one Cholesky
// per trial point.
struct LmlEval {
    double value = 0.0;
    Factorization fac;
    Vector alpha;

    Vector gradient(const GpDataset& data, const GpHyperparams& hp) const {
        const int n = data.size();
        const int d = data.dim();
        // d LML / d theta = 1/2 tr((alpha alpha^T - K^-1) dK/dtheta); the
        // constant mean contributes 1^T alpha.
        const Matrix kinv = fac.llt.solve(Matrix::Identity(n, n));
        const Matrix w = alpha * alpha.transpose() - kinv;
        const Matrix m = w.cwiseProduct(fac.kf);
        const Vector m_rowsum = m.rowwise().sum();

        Vector grad(d + 3);
        for (int k = 0; k < d; ++k) {
            const double inv_l = std::exp(-hp.log_length_scales[k]);
            const Vector c = data.inputs.col(k) * inv_l;
            // 1/2 sum_ij M_ij (c_i - c_j)^2 with symmetric M.
            grad[k] = c.array().square().matrix().dot(m_rowsum) - c.dot(m * c);
        }
        const double sf2 = hp.signal_sd() * hp.signal_sd();
        const double sn2 = hp.noise_sd() * hp.noise_sd();
        grad[d] = m.sum() + fac.jitter * sf2 * w.trace();
        grad[d + 1] = sn2 * w.trace();
        grad[d + 2] = alpha.sum();
        return grad;
    }
};

LmlEval evaluate_lml(const GpDataset& data, const GpHyperparams& hp) {
    const int n = data.size();
    if (n < 1) {
        throw Error("log_marginal_likelihood: empty dataset");
    }
    LmlEval out;
    out.fac = factorize(data, hp);
    const Vector residual = data.values.array() - hp.constant_mean;
    out.alpha = out.fac.llt.solve(residual);
    const double log_det_half = Matrix(out.fac.llt.matrixL()).diagonal().array().log().sum();
    out.value = -0.5 * residual.dot(out.alpha) - log_det_half - 0.5 * n * kLogTwoPi;
    return out;
}

}  // namespace

LmlResult log_marginal_likelihood(const GpDataset& data, const GpHyperparams& hp) {
    const LmlEval eval = evaluate_lml(data, hp);
    LmlResult out;
    out.value = eval.value;
    out.jitter = eval.fac.jitter;
    out.gradient = eval.gradient(data, hp);
    return out;
}

GpModel GpModel::from_hyperparams(GpHyperparams hp, GpDataset data) {
    GpModel model;
    model.hp_ = std::move(hp);
    model.data_ = std::move(data);
    if (model.data_.size() > 0) {
        Factorization fac = factorize(model.data_, model.hp_);
        model.alpha_ = fac.llt.solve(Vector(model.data_.values.array() - model.hp_.constant_mean));
        model.llt_ = std::move(fac.llt);
        model.jitter_ = fac.jitter;
    }
    return model;
}

GpModel::Prediction GpModel::predict(const Vector& x) const {
    return predict(std::vector<Vector>{x}).front();
}

std::vector<GpModel::Prediction> GpModel::predict(const std::vector<Vector>& xs) const {
    const int n = data_.size();
    const double sf = hp_.signal_sd();
    std::vector<Prediction> out(xs.size());
    if (n == 0) {
        for (auto& p : out) {
            p.mean = hp_.constant_mean;
            p.sd = sf;
        }
        return out;
    }
    const int m = static_cast<int>(xs.size());
    const Vector inv_ls = (-hp_.log_length_scales).array().exp();
    Matrix queries(m, data_.dim());
    for (int j = 0; j < m; ++j) {
        queries.row(j) = xs[static_cast<std::size_t>(j)];
    }
    queries = queries * inv_ls.asDiagonal();
    const Matrix scaled_train = data_.inputs * inv_ls.asDiagonal();
    const Matrix kstar =
        (cross_sqdist(scaled_train, queries) * -0.5).array().exp() * (sf * sf);

    const Matrix v = llt_.matrixL().solve(kstar);
    for (int j = 0; j < m; ++j) {
        auto& p = out[static_cast<std::size_t>(j)];
        p.mean = hp_.constant_mean + kstar.col(j).dot(alpha_);
        const double var = sf * sf - v.col(j).squaredNorm();
        p.sd = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return out;
}

namespace {

struct FitBounds {
    Vector lo;
    Vector hi;
};

Vector project(const Vector& theta, const FitBounds& b) {
    return theta.cwiseMax(b.lo).cwiseMin(b.hi);
}

struct FitProblem {
    const GpDataset* data = nullptr;
    FitBounds bounds;

    // Negative LML, value only; +inf on factorization failure. The cache can
    // produce the gradient at the same point without refactorizing.
    double value(const Vector& theta, std::optional<LmlEval>& cache) const {
        try {
            cache = evaluate_lml(*data, GpHyperparams::unpack(theta, data->dim()));
            if (!std::isfinite(cache->value)) {
                cache.reset();
                return std::numeric_limits<double>::infinity();
            }
            return -cache->value;
        } catch (const NonPositiveDefinite&) {
            cache.reset();
            return std::numeric_limits<double>::infinity();
        }
    }

    Vector gradient(const Vector& theta, const LmlEval& cache) const {
        Vector g = -cache.gradient(*data, GpHyperparams::unpack(theta, data->dim()));
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            if (bounds.lo[i] == bounds.hi[i]) {
                g[i] = 0.0;  // pinned parameter
            }
        }
        return g;
    }
};

/// Box-projected L-BFGS descent with Armijo backtracking. Returns the best
/// point seen; `value` is +inf when no finite objective was ever found.
struct AscentResult {
    Vector theta;
    double value = std::numeric_limits<double>::infinity();
};

AscentResult minimize_projected(const FitProblem& prob, Vector theta, int max_iterations,
                                double tolerance) {
    constexpr int kMemory = 8;
    constexpr double kArmijo = 1e-4;

    theta = project(theta, prob.bounds);
    std::optional<LmlEval> cache;
    double f = prob.value(theta, cache);
    AscentResult best;
    best.theta = theta;
    best.value = f;
    if (!std::isfinite(f)) {
        return best;
    }
    Vector grad = prob.gradient(theta, *cache);

    std::vector<Vector> s_hist, y_hist;
    for (int iter = 0; iter < max_iterations; ++iter) {
        // Projected gradient used for the stopping test: components pushing
        // out of the box at an active bound do not count.
        double pg_norm = 0.0;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            const bool blocked = (theta[i] <= prob.bounds.lo[i] && grad[i] > 0.0) ||
                                 (theta[i] >= prob.bounds.hi[i] && grad[i] < 0.0);
            if (!blocked) {
                pg_norm = std::max(pg_norm, std::abs(grad[i]));
            }
        }
        if (pg_norm < 1e-6 * std::max(1.0, std::abs(f))) {
            break;
        }

        // Two-loop recursion.
        Vector q = -grad;
        const int hist = static_cast<int>(s_hist.size());
        std::vector<double> a(static_cast<std::size_t>(hist));
        for (int i = hist - 1; i >= 0; --i) {
            const double rho = 1.0 / y_hist[static_cast<std::size_t>(i)].dot(s_hist[static_cast<std::size_t>(i)]);
            a[static_cast<std::size_t>(i)] = rho * s_hist[static_cast<std::size_t>(i)].dot(q);
            q -= a[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
        }
        if (hist > 0) {
            const double scale = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            q *= scale;
        }
        for (int i = 0; i < hist; ++i) {
            const double rho = 1.0 / y_hist[static_cast<std::size_t>(i)].dot(s_hist[static_cast<std::size_t>(i)]);
            const double beta = rho * y_hist[static_cast<std::size_t>(i)].dot(q);
            q += (a[static_cast<std::size_t>(i)] - beta) * s_hist[static_cast<std::size_t>(i)];
        }
        if (!q.allFinite() || q.dot(-grad) <= 0.0) {
            q = -grad;  // fall back to steepest descent
        }

        // Projected backtracking line search; gradients are only computed at
        // the accepted point.
        double step = 1.0;
        bool accepted = false;
        Vector theta_new;
        std::optional<LmlEval> cache_new;
        double f_new = f;
        for (int bt = 0; bt < 30; ++bt) {
            Vector cand = project(theta + step * q, prob.bounds);
            const Vector delta = cand - theta;
            if (delta.lpNorm<Eigen::Infinity>() < 1e-15) {
                break;
            }
            const double f_cand = prob.value(cand, cache_new);
            if (std::isfinite(f_cand) && f_cand <= f + kArmijo * grad.dot(delta)) {
                theta_new = std::move(cand);
                f_new = f_cand;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }
        Vector grad_new = prob.gradient(theta_new, *cache_new);

        const Vector s = theta_new - theta;
        const Vector y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            if (static_cast<int>(s_hist.size()) > kMemory) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
            }
        }

        const double improvement = f - f_new;
        theta = std::move(theta_new);
        grad = std::move(grad_new);
        f = f_new;
        if (f < best.value) {
            best.value = f;
            best.theta = theta;
        }
        if (improvement < tolerance * std::max(1.0, std::abs(f))) {
            break;
        }
    }
    return best;
}

}  // namespace

GpModel fit_gp(const GpDataset& data, const std::optional<GpHyperparams>& previous, Rng& rng,
               const GpFitConfig& config) {
    const int n = data.size();
    const int d = data.dim();
    if (n != data.values.size() || n != data.noise_sd.size()) {
        throw DimensionMismatch("fit_gp: inconsistent dataset sizes");
    }
    if (!data.values.allFinite()) {
        throw FitFailed("fit_gp: non-finite training values");
    }

    std::vector<double> yvec(data.values.data(), data.values.data() + n);
    const double median_y = quantile(yvec, 0.5);
    const double mean_y = n > 0 ? data.values.mean() : 0.0;
    double sd_y = 0.0;
    if (n > 1) {
        sd_y = std::sqrt((data.values.array() - mean_y).square().sum() / (n - 1));
    }

    // Prior fallback below two points: condition on whatever data exists with
    // unfitted hyperparameters.
    if (n < 2) {
        GpHyperparams hp = previous ? *previous : GpHyperparams::defaults(d);
        if (!previous) {
            hp.log_signal_sd = std::log(std::max(1.0, std::abs(median_y)));
            double floor = std::max(1e-6 * std::max(sd_y, 1.0), 1e-12);
            if (config.noise.noisy) {
                floor = std::max(floor, config.noise.user_hint.value_or(0.0));
            }
            hp.log_noise_sd = std::log(floor);
        }
        return GpModel::from_hyperparams(std::move(hp), data);
    }

    const double vs = sd_y > 1e-12 ? sd_y : 1e-6 * std::max(1.0, std::abs(median_y));

    double noise_floor = std::max(1e-6 * sd_y, 1e-12);
    double noise_hi = noise_floor;
    if (config.noise.noisy) {
        noise_floor = std::max({noise_floor, config.noise.user_hint.value_or(0.0), 1e-8});
        noise_hi = std::max(10.0 * vs, 10.0 * noise_floor);
    }

    FitProblem prob;
    prob.data = &data;
    prob.bounds.lo.resize(d + 3);
    prob.bounds.hi.resize(d + 3);
    prob.bounds.lo.head(d).setConstant(std::log(kLengthScaleLo));
    prob.bounds.hi.head(d).setConstant(std::log(kLengthScaleHi));
    prob.bounds.lo[d] = std::log(1e-3 * vs);
    prob.bounds.hi[d] = std::log(1e3 * vs);
    prob.bounds.lo[d + 1] = std::log(noise_floor);
    prob.bounds.hi[d + 1] = std::log(noise_hi);
    const double y_min = data.values.minCoeff();
    const double y_max = data.values.maxCoeff();
    const double span = std::max({y_max - y_min, vs, 1e-3});
    prob.bounds.lo[d + 2] = y_min - 10.0 * span;
    prob.bounds.hi[d + 2] = y_max + 10.0 * span;

    // Heuristic start:  per-dimension input interquartile range for the
    // length scales, value spread for the signal, median for the mean.
    GpHyperparams heur;
    heur.log_length_scales.resize(d);
    for (int k = 0; k < d; ++k) {
        std::vector<double> col(data.inputs.col(k).data(), data.inputs.col(k).data() + n);
        double iqr = quantile(col, 0.75) - quantile(col, 0.25);
        if (iqr < 1e-6) {
            iqr = data.inputs.col(k).maxCoeff() - data.inputs.col(k).minCoeff();
        }
        if (iqr < 1e-6) {
            iqr = 0.25;
        }
        heur.log_length_scales[k] = std::log(std::clamp(iqr, kLengthScaleLo, kLengthScaleHi));
    }
    heur.log_signal_sd = std::log(vs);
    heur.log_noise_sd =
        std::log(config.noise.noisy ? std::clamp(0.1 * vs, noise_floor, noise_hi) : noise_floor);
    heur.constant_mean = median_y;

    std::vector<Vector> starts;
    if (previous) {
        starts.push_back(previous->pack());
    }
    starts.push_back(heur.pack());

    AscentResult best;
    for (const Vector& start : starts) {
        AscentResult r = minimize_projected(prob, start, config.max_iterations, config.tolerance);
        if (r.value < best.value) {
            best = std::move(r);
        }
    }
    if (!std::isfinite(best.value)) {
        // Rescue: random draws inside the box.
        for (int attempt = 0; attempt < 2 && !std::isfinite(best.value); ++attempt) {
            Vector start(d + 3);
            for (int i = 0; i < d + 3; ++i) {
                start[i] =
                    prob.bounds.lo[i] + rng.uniform01() * (prob.bounds.hi[i] - prob.bounds.lo[i]);
            }
            AscentResult r =
                minimize_projected(prob, start, config.max_iterations, config.tolerance);
            if (r.value < best.value) {
                best = std::move(r);
            }
        }
    }
    if (!std::isfinite(best.value)) {
        throw FitFailed("fit_gp: no start produced a finite marginal likelihood");
    }
    return GpModel::from_hyperparams(GpHyperparams::unpack(best.theta, d), data);
}

std::vector<int> select_training_subset(const std::vector<EvaluationRecord>& history,
                                        const Vector& incumbent, double poll_size,
                                        const SubsetParams& params) {
    struct Entry {
        double dist2;
        int index;
    };
    std::vector<Entry> entries;
    entries.reserve(history.size());
    for (const auto& rec : history) {
        if (rec.failed) {
            continue;
        }
        entries.push_back({(rec.unit_point - incumbent).squaredNorm(), rec.index});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
    });

    const int usable = static_cast<int>(entries.size());
    const double dim = incumbent.size() > 0 ? static_cast<double>(incumbent.size()) : 1.0;
    const double radius = params.radius_multiplier * poll_size * std::sqrt(dim);
    const double r2 = radius * radius;
    int within = 0;
    while (within < usable && entries[static_cast<std::size_t>(within)].dist2 <= r2) {
        ++within;
    }
    const int min_count = std::min(params.min_count, usable);
    const int cap = params.cap_base + params.cap_per_dim * static_cast<int>(incumbent.size());
    const int take = std::clamp(within, min_count, std::min(cap, usable));

    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(take));
    for (int i = 0; i < take; ++i) {
        out.push_back(entries[static_cast<std::size_t>(i)].index);
    }
    return out;
}

}  // namespace bads
