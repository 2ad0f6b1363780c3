#include "bads/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bads {

namespace {

bool is_unbounded_marker(double v) { return std::isinf(v); }

std::string dim_msg(const char* what, int d) { return std::string(what) + " at dimension " + std::to_string(d); }

}  // namespace

ValidatedProblem validate_spec(ProblemSpec spec) {
    if (spec.dim < 1) {
        throw InvalidBounds("dim must be >= 1");
    }
    const int d = spec.dim;
    const auto check_size = [&](const Vector& v, const char* name) {
        if (v.size() != d) {
            throw DimensionMismatch(std::string(name) + " has length " + std::to_string(v.size()) +
                                    ", expected " + std::to_string(d));
        }
    };
    check_size(spec.lower_bounds, "lower_bounds");
    check_size(spec.upper_bounds, "upper_bounds");
    check_size(spec.x0, "x0");

    const bool has_plausible = spec.plausible_lower.size() > 0 || spec.plausible_upper.size() > 0;
    if (has_plausible) {
        check_size(spec.plausible_lower, "plausible_lower");
        check_size(spec.plausible_upper, "plausible_upper");
    }

    ValidatedProblem out;
    out.dim_ = d;
    out.lower_ = spec.lower_bounds;
    out.upper_ = spec.upper_bounds;
    out.bounded_.resize(static_cast<std::size_t>(d));
    out.plausible_lower_.resize(d);
    out.plausible_upper_.resize(d);

    for (int i = 0; i < d; ++i) {
        const double lb = out.lower_[i];
        const double ub = out.upper_[i];
        if (std::isnan(lb) || std::isnan(ub)) {
            throw InvalidBounds(dim_msg("NaN bound", i));
        }
        const bool lb_finite = !is_unbounded_marker(lb);
        const bool ub_finite = !is_unbounded_marker(ub);
        if (lb_finite && ub_finite && !(lb < ub)) {
            throw InvalidBounds(dim_msg("lower must be strictly below upper", i));
        }
        out.bounded_[static_cast<std::size_t>(i)] = lb_finite && ub_finite;

        double pl, pu;
        if (has_plausible) {
            pl = spec.plausible_lower[i];
            pu = spec.plausible_upper[i];
            if (!std::isfinite(pl) || !std::isfinite(pu)) {
                throw InvalidBounds(dim_msg("plausible bounds must be finite", i));
            }
            if (!(pl < pu)) {
                throw InvalidBounds(dim_msg("plausible lower must be strictly below upper", i));
            }
            if ((lb_finite && pl < lb) || (ub_finite && pu > ub)) {
                throw InvalidBounds(dim_msg("plausible bounds outside hard bounds", i));
            }
        } else {
            if (!lb_finite || !ub_finite) {
                throw InvalidBounds(
                    dim_msg("plausible bounds required for unbounded dimension", i));
            }
            pl = lb;
            pu = ub;
        }
        out.plausible_lower_[i] = pl;
        out.plausible_upper_[i] = pu;
    }

    // Unit map: bounded dims use the hard interval, others the plausible one.
    out.unit_offset_.resize(d);
    out.unit_scale_.resize(d);
    for (int i = 0; i < d; ++i) {
        if (out.bounded_[static_cast<std::size_t>(i)]) {
            out.unit_offset_[i] = out.lower_[i];
            out.unit_scale_[i] = out.upper_[i] - out.lower_[i];
        } else {
            out.unit_offset_[i] = out.plausible_lower_[i];
            out.unit_scale_[i] = out.plausible_upper_[i] - out.plausible_lower_[i];
        }
    }

    out.x0_ = spec.x0;
    for (int i = 0; i < d; ++i) {
        double& xi = out.x0_[i];
        if (std::isnan(xi) || std::isinf(xi)) {
            throw StartOutOfBounds(dim_msg("x0 must be finite", i));
        }
        const double lb = out.lower_[i];
        const double ub = out.upper_[i];
        if (std::isfinite(lb) && xi < lb) {
            if (lb - xi <= 1e-12 * std::max(1.0, std::abs(lb))) {
                xi = lb;
            } else {
                throw StartOutOfBounds(dim_msg("x0 below lower bound", i));
            }
        }
        if (std::isfinite(ub) && xi > ub) {
            if (xi - ub <= 1e-12 * std::max(1.0, std::abs(ub))) {
                xi = ub;
            } else {
                throw StartOutOfBounds(dim_msg("x0 above upper bound", i));
            }
        }
    }

    out.objective_ = std::move(spec.objective);
    out.noisy_ = spec.noisy;
    if (spec.noise_scale_hint) {
        if (!(*spec.noise_scale_hint >= 0.0) || !std::isfinite(*spec.noise_scale_hint)) {
            throw InvalidBounds("noise_scale_hint must be finite and nonnegative");
        }
        out.noise_scale_hint_ = spec.noise_scale_hint;
    }
    return out;
}

Vector ValidatedProblem::to_unit(const Vector& x) const {
    if (x.size() != dim_) {
        throw DimensionMismatch("point has length " + std::to_string(x.size()) + ", expected " +
                                std::to_string(dim_));
    }
    Vector u(dim_);
    for (int i = 0; i < dim_; ++i) {
        const double lb = lower_[i];
        const double ub = upper_[i];
        if ((std::isfinite(lb) && x[i] < lb - 1e-12 * std::max(1.0, std::abs(lb))) ||
            (std::isfinite(ub) && x[i] > ub + 1e-12 * std::max(1.0, std::abs(ub)))) {
            throw OutOfBounds(dim_msg("point outside hard bounds", i));
        }
        u[i] = (x[i] - unit_offset_[i]) / unit_scale_[i];
        if (bounded_[static_cast<std::size_t>(i)]) {
            u[i] = std::clamp(u[i], 0.0, 1.0);
        }
    }
    return u;
}

Vector ValidatedProblem::from_unit(const Vector& u) const {
    if (u.size() != dim_) {
        throw DimensionMismatch("point has length " + std::to_string(u.size()) + ", expected " +
                                std::to_string(dim_));
    }
    Vector x(dim_);
    for (int i = 0; i < dim_; ++i) {
        double ui = u[i];
        if (bounded_[static_cast<std::size_t>(i)]) {
            ui = std::clamp(ui, 0.0, 1.0);
        }
        double xi = unit_offset_[i] + ui * unit_scale_[i];
        // Half-bounded dimensions map through the plausible interval; keep the
        // result inside whichever hard bound is finite.
        if (std::isfinite(lower_[i]) && xi < lower_[i]) {
            xi = lower_[i];
        }
        if (std::isfinite(upper_[i]) && xi > upper_[i]) {
            xi = upper_[i];
        }
        x[i] = xi;
    }
    return x;
}

Vector ValidatedProblem::clamp_unit(Vector u) const {
    for (int i = 0; i < dim_; ++i) {
        if (bounded_[static_cast<std::size_t>(i)]) {
            u[i] = std::clamp(u[i], 0.0, 1.0);
        }
    }
    return u;
}

}  // namespace bads
