#include "mlmkit/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mlmkit/error.hpp"
#include "mlmkit/random.hpp"

namespace mlmkit::num {

std::vector<std::size_t> GradCheckReport::failed_indices() const {
    std::vector<std::size_t> out;
    for (const auto& c : coordinates) {
        if (!c.passed) {
            out.push_back(c.index);
        }
    }
    return out;
}

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    if (denom == 0.0) {
        return 0.0;
    }
    return std::abs(analytic - numeric) / denom;
}

double roundoff_floor(double f_value, double step, double tolerance) {
    return 10.0 * std::numeric_limits<double>::epsilon() * std::abs(f_value) / (step * tolerance);
}

std::vector<std::size_t> sample_coordinates(std::size_t numel, std::size_t samples, std::uint64_t seed) {
    std::vector<std::size_t> all(numel);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (samples >= numel) {
        return all;
    }
    Rng rng(seed);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < samples; ++i) {
        std::swap(all[i], all[i + rng.below(numel - i)]);
    }
    all.resize(samples);
    std::sort(all.begin(), all.end());
    return all;
}

GradCheckReport finite_diff_check(const std::function<double()>& f, Tensor<double>& x,
                                  std::span<const double> analytic, const GradCheckOptions& options) {
    if (analytic.size() != x.numel()) {
        throw ShapeError("finite_diff_check: analytic gradient length differs from tensor size");
    }
    const double base = f();
    if (const double again = f(); again != base) {
        throw Error("finite_diff_check: function is not deterministic (" + std::to_string(base) + " vs " +
                    std::to_string(again) + ")");
    }
    GradCheckReport report;
    auto data = x.data();
    for (std::size_t i : sample_coordinates(x.numel(), options.samples, options.seed)) {
        const double original = data[i];
        data[i] = original + options.step;
        const double plus = f();
        data[i] = original - options.step;
        const double minus = f();
        data[i] = original;
        const double two_point = (plus - minus) / (2.0 * options.step);
        double numeric = two_point;
        if (options.stencil == Stencil::five_point) {
            data[i] = original + 2.0 * options.step;
            const double plus2 = f();
            data[i] = original - 2.0 * options.step;
            const double minus2 = f();
            data[i] = original;
            numeric = (minus2 - 8.0 * minus + 8.0 * plus - plus2) / (12.0 * options.step);
        }
        const double rel = relative_error(analytic[i], numeric, options.floor);
        const bool ok = rel < options.tolerance;
        report.coordinates.push_back({i, analytic[i], numeric, two_point, rel, ok});
        report.max_relative_error = std::max(report.max_relative_error, rel);
        report.passed = report.passed && ok;
    }
    return report;
}

GradCheckReport finite_diff_check(const std::function<double()>& f, Tensor<double>& x,
                                  const GradCheckOptions& options) {
    const std::vector<double> g(x.grad().begin(), x.grad().end());
    return finite_diff_check(f, x, g, options);
}

}  // namespace mlmkit::num
