#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

namespace mtq {

// Neumaier compensated summation. Used for every metric reduction so that
// results are reproducible to 1e-12 independent of chunking.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }

    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_total(std::span<const double> xs) {
    CompensatedSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

// Shortest decimal representation that round-trips through from_chars.
std::string format_double(double v);

// Strict full-string parse. Returns false on trailing garbage or overflow.
bool parse_double(std::string_view s, double& out);
bool parse_long(std::string_view s, long long& out);

// Fixed-point renderings used by report tables.
std::string format_percent(double fraction, int decimals = 2);  // 0.7657 -> "76.57%"
std::string format_fixed(double v, int decimals);

}  // namespace mtq
