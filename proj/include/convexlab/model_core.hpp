#pragma once

// Piecewise-constant volatility paths, finite mixtures of such paths and the
// closed-form quantities they admit (cumulative variances, lognormal
// marginals, Black-Scholes calls, dominant sets).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace convexlab {

/// Which one-sided value to use at a discontinuity of a càdlàg function.
enum class Side { right, left };

/// Default VIX window: 30 calendar days.
inline constexpr double kVixWindow = 30.0 / 365.0;

/// Deterministic volatility trajectory, constant on right-open segments
/// [breaks[i], breaks[i+1]); the last segment extends to +inf.
class VolPath {
public:
    VolPath(std::vector<double> breaks, std::vector<double> levels);

    static VolPath constant(double level);
    /// level0 on [0, switch_time), level1 afterwards.
    static VolPath with_switch(double level0, double switch_time, double level1);

    double level_at(double t) const;
    /// g(t-), equal to level_at(t) away from the breaks.
    double level_before(double t) const;
    double level(double t, Side side) const { return side == Side::right ? level_at(t) : level_before(t); }

    /// Integral of g^2 over [0, t].
    double cumulative_variance(double t) const;
    /// Integral of g^2 over [a, b], a <= b.
    double integrated_variance(double a, double b) const;

    std::span<const double> breaks() const { return breaks_; }
    std::span<const double> levels() const { return levels_; }
    double min_level() const;
    double max_level() const;

    bool operator==(const VolPath&) const = default;

private:
    std::size_t segment_index(double t) const;

    std::vector<double> breaks_;
    std::vector<double> levels_;
};

/// Discrete path measure sum_n u_n delta_{g_n} sharing the sigma0 prefix on
/// [0, t1). Plain aggregate; `validate_model` checks the invariants.
struct MixtureModel {
    std::vector<VolPath> paths;
    std::vector<double> weights;
    double sigma0 = 0.0;
    double t1 = 0.0;
    double tau = kVixWindow;
    double s0 = 1.0;

    double t2() const { return t1 + tau; }
    std::size_t size() const { return paths.size(); }
    /// Smallest / largest level over all paths.
    double v_lo() const;
    double v_hi() const;
    /// Sorted union of path breaks and t1 inside (0, horizon).
    std::vector<double> breakpoints(double horizon) const;

    bool operator==(const MixtureModel&) const = default;
};

/// Coin-toss model: sigma0 until t1, then sigma_up or sigma_down with equal
/// probability.
MixtureModel coin_toss_model(double sigma0, double sigma_up, double sigma_down, double t1,
                             double tau = kVixWindow, double s0 = 1.0);

struct DominantSet {
    double t = 0.0;
    std::vector<std::size_t> indices;  // 0-based path indices
    double mass = 0.0;
    double sigma_bar_sq = 0.0;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

double normal_cdf(double x);

double cumulative_variance(const VolPath& path, double t);

double log_lognormal_density(double s0, double total_var, double x);
/// Density of s0 * exp(-V/2 + sqrt(V) Z) at x.
double lognormal_density(double s0, double total_var, double x);

/// Undiscounted Black-Scholes call with total variance `total_var`.
double bs_call(double s0, double strike, double total_var);

/// Lambda-average of lognormal calls.
double mixture_call(const MixtureModel& model, double t, double strike);

/// Paths whose cumulative variance at t attains the maximum (up to `tol`).
/// A negative tol selects the default 1e-12 * max_n Sigma_n(t).
DominantSet dominant_set(const MixtureModel& model, double t, double tol = -1.0);

/// Breakpoints in (a, b) plus every time in (a, b) where two cumulative
/// variance curves cross; the dominant set is constant between them.
std::vector<double> dominance_change_times(const MixtureModel& model, double a, double b);

ValidationReport validate_model(const MixtureModel& model);

}  // namespace convexlab
