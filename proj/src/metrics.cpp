#include "mtq/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mtq/numeric.hpp"

namespace mtq {

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 pairs");
    const std::size_t n = x.size();

    CompensatedSum sx, sy;
    for (std::size_t i = 0; i < n; ++i) {
        sx.add(x[i]);
        sy.add(y[i]);
    }
    const double mx = sx.value() / static_cast<double>(n);
    const double my = sy.value() / static_cast<double>(n);

    CompensatedSum sxy, sxx, syy;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    const double vxx = sxx.value();
    const double vyy = syy.value();
    if (vxx == 0.0 || vyy == 0.0) return std::nullopt;
    return sxy.value() / std::sqrt(vxx * vyy);
}

double rmse(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("rmse: length mismatch");
    if (x.empty()) throw std::invalid_argument("rmse: empty input");
    CompensatedSum s;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s.add(d * d);
    }
    return std::sqrt(s.value() / static_cast<double>(x.size()));
}

MetricPair metric_pair(std::span<const double> x, std::span<const double> y) {
    MetricPair m;
    m.n = x.size();
    if (m.n == 0) {
        m.rmse = std::numeric_limits<double>::quiet_NaN();
        return m;
    }
    m.rmse = rmse(x, y);
    if (m.n >= 2) m.pcc = pearson(x, y);
    return m;
}

}  // namespace mtq
