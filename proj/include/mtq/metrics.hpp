#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace mtq {

// Per-task evaluation result. pcc is empty when the correlation is
// undefined (zero variance or n < 2); it is never coerced to 0.
struct MetricPair {
    std::optional<double> pcc;
    double rmse = 0.0;
    std::size_t n = 0;
};

// Sample Pearson correlation, two-pass mean-centered with compensated
// summation. Empty result when either series has zero variance.
// Throws std::invalid_argument on length mismatch or n < 2.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// sqrt(mean squared difference). Throws on length mismatch or empty input.
double rmse(std::span<const double> x, std::span<const double> y);

MetricPair metric_pair(std::span<const double> x, std::span<const double> y);

}  // namespace mtq
