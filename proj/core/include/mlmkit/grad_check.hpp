#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mlmkit/tensor.hpp"

namespace mlmkit::num {

enum class Stencil {
    two_point,   // (f(x + h) - f(x - h)) / 2h
    five_point,  // (f(x - 2h) - 8 f(x - h) + 8 f(x + h) - f(x + 2h)) / 12h
};

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-6;
    std::size_t samples = 20;  // coordinates per tensor; all when >= numel
    std::uint64_t seed = 0;
    double floor = 0.0;  // lower bound on the relative-error denominator
    Stencil stencil = Stencil::two_point;
};

struct CoordinateCheck {
    std::size_t index;
    double analytic;
    double numeric;
    double two_point;  // the two-point estimate, whichever stencil is selected
    double relative_error;
    bool passed;
};

struct GradCheckReport {
    std::vector<CoordinateCheck> coordinates;
    double max_relative_error = 0.0;
    bool passed = true;

    std::vector<std::size_t> failed_indices() const;
};

/// |a - n| / max(|a|, |n|, floor), and 0 when the denominator is 0.
double relative_error(double analytic, double numeric, double floor = 0.0);

/// Gradient magnitude below which round-off in a double-precision f of size
/// |f_value| keeps a central difference with this step from resolving
/// `tolerance` relative error: 10 * eps * |f| / (step * tolerance).
double roundoff_floor(double f_value, double step, double tolerance);

/// Central differences on sampled coordinates of `x`, compared against `analytic` (same length as x).
/// f must be deterministic: it is evaluated twice at the unperturbed point
/// and an Error is thrown when the two values differ.
GradCheckReport finite_diff_check(const std::function<double()>& f, Tensor<double>& x,
                                  std::span<const double> analytic, const GradCheckOptions& options = {});

/// Same, taking the analytic gradient from x.grad().
GradCheckReport finite_diff_check(const std::function<double()>& f, Tensor<double>& x,
                                  const GradCheckOptions& options = {});

/// Sampled coordinate indices used by finite_diff_check (without replacement).
std::vector<std::size_t> sample_coordinates(std::size_t numel, std::size_t samples, std::uint64_t seed);

}  // namespace mlmkit::num
