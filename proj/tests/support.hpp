#pragma once

#include <convexlab/model_core.hpp>

#include <cmath>
#include <numbers>

namespace testsupport {

inline constexpr double kT = 0.05;
inline constexpr double kSigma0 = 0.2;
inline constexpr double kSigmaUp = 0.25;
inline constexpr double kSigmaDown = 0.02;

// Two-path model switching half way through the window.
inline convexlab::MixtureModel mid_window_model()
{
    return convexlab::coin_toss_model(kSigma0, kSigmaUp, kSigmaDown, kT + convexlab::kVixWindow / 2.0);
}

// Composite Simpson on the standard normal density, independent of erfc.
inline double simpson_normal_cdf(double x)
{
    const double lo = -12.0;
    if (x <= lo) return 0.0;
    const int n = 20000;
    const double h = (x - lo) / n;
    auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); };
    double acc = phi(lo) + phi(x);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * phi(lo + i * h);
    return acc * h / 3.0;
}

}  // namespace testsupport
