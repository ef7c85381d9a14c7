#include "feduaa/special.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "feduaa/errors.hpp"

namespace feduaa {

namespace {

constexpr double kShiftThreshold = 10.0;

void check_positive(double x, const char* fn) {
    if (!(x > 0.0)) {
        throw DomainError(std::string(fn) + ": argument must be positive, got " + std::to_string(x));
    }
}

}  // namespace

double log_gamma(double x) {
    check_positive(x, "log_gamma");
    double shift = 0.0;
    while (x < kShiftThreshold) {
        shift -= std::log(x);
        x += 1.0;
    }
    // Stirling series, Bernoulli terms through x^-9
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 / 12.0 +
               inv2 * (-1.0 / 360.0 +
                       inv2 * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0 + inv2 * (1.0 / 1188.0)))));
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    return shift + (x - 0.5) * std::log(x) - x + half_log_2pi + series;
}

double digamma(double x) {
    check_positive(x, "digamma");
    double shift = 0.0;
    while (x < kShiftThreshold) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv2 * (1.0 / 12.0 +
                inv2 * (-1.0 / 120.0 +
                        inv2 * (1.0 / 252.0 + inv2 * (-1.0 / 240.0 + inv2 * (1.0 / 132.0)))));
    return shift + std::log(x) - 0.5 * inv - series;
}

double trigamma(double x) {
    check_positive(x, "trigamma");
    double shift = 0.0;
    while (x < kShiftThreshold) {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 +
               inv * (0.5 +
                      inv * (1.0 / 6.0 +
                             inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0))))));
    return shift + series;
}

}  // namespace feduaa
