#include "convexlab/model_core.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace convexlab {

VolPath::VolPath(std::vector<double> breaks, std::vector<double> levels)
    : breaks_(std::move(breaks)), levels_(std::move(levels))
{
    if (breaks_.empty() || breaks_.size() != levels_.size())
        throw std::invalid_argument("VolPath: breaks and levels must be nonempty and of equal length");
    if (breaks_.front() != 0.0)
        throw std::invalid_argument("VolPath: first break must be 0");
    for (std::size_t i = 1; i < breaks_.size(); ++i) {
        if (!(breaks_[i] > breaks_[i - 1]) || !std::isfinite(breaks_[i]))
            throw std::invalid_argument("VolPath: breaks must be finite and strictly increasing");
    }
    for (double v : levels_) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument("VolPath: levels must be positive and finite");
    }
}

VolPath VolPath::constant(double level) { return VolPath({0.0}, {level}); }

VolPath VolPath::with_switch(double level0, double switch_time, double level1)
{
    return VolPath({0.0, switch_time}, {level0, level1});
}

std::size_t VolPath::segment_index(double t) const
{
    // last i with breaks[i] <= t
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    return it == breaks_.begin() ? 0 : static_cast<std::size_t>(it - breaks_.begin()) - 1;
}

double VolPath::level_at(double t) const { return levels_[segment_index(t)]; }

double VolPath::level_before(double t) const
{
    // last i with breaks[i] < t
    auto it = std::lower_bound(breaks_.begin(), breaks_.end(), t);
    return it == breaks_.begin() ? levels_.front() : levels_[static_cast<std::size_t>(it - breaks_.begin()) - 1];
}

double VolPath::cumulative_variance(double t) const
{
    if (t < 0.0) throw std::invalid_argument("cumulative_variance: negative time");
    double acc = 0.0;
    for (std::size_t i = 0; i < breaks_.size() && breaks_[i] < t; ++i) {
        const double end = i + 1 < breaks_.size() ? std::min(breaks_[i + 1], t) : t;
        acc += levels_[i] * levels_[i] * (end - breaks_[i]);
    }
    return acc;
}

double VolPath::integrated_variance(double a, double b) const
{
    if (a < 0.0 || b < a) throw std::invalid_argument("integrated_variance: need 0 <= a <= b");
    double acc = 0.0;
    for (std::size_t i = 0; i < breaks_.size(); ++i) {
        const double lo = std::max(a, breaks_[i]);
        const double hi = i + 1 < breaks_.size() ? std::min(b, breaks_[i + 1]) : b;
        if (hi > lo) acc += levels_[i] * levels_[i] * (hi - lo);
    }
    return acc;
}

double VolPath::min_level() const { return *std::min_element(levels_.begin(), levels_.end()); }
double VolPath::max_level() const { return *std::max_element(levels_.begin(), levels_.end()); }

double MixtureModel::v_lo() const
{
    double v = std::numeric_limits<double>::infinity();
    for (const auto& p : paths) v = std::min(v, p.min_level());
    return v;
}

double MixtureModel::v_hi() const
{
    double v = 0.0;
    for (const auto& p : paths) v = std::max(v, p.max_level());
    return v;
}

std::vector<double> MixtureModel::breakpoints(double horizon) const
{
    std::vector<double> out;
    if (t1 > 0.0 && t1 < horizon) out.push_back(t1);
    for (const auto& p : paths)
        for (double b : p.breaks())
            if (b > 0.0 && b < horizon) out.push_back(b);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

MixtureModel coin_toss_model(double sigma0, double sigma_up, double sigma_down, double t1, double tau, double s0)
{
    MixtureModel m;
    m.paths = {VolPath::with_switch(sigma0, t1, sigma_up), VolPath::with_switch(sigma0, t1, sigma_down)};
    m.weights = {0.5, 0.5};
    m.sigma0 = sigma0;
    m.t1 = t1;
    m.tau = tau;
    m.s0 = s0;
    return m;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double cumulative_variance(const VolPath& path, double t) { return path.cumulative_variance(t); }

double log_lognormal_density(double s0, double total_var, double x)
{
    if (!(total_var > 0.0)) throw std::domain_error("lognormal_density: total variance must be positive");
    if (!(x > 0.0)) throw std::domain_error("lognormal_density: x must be positive");
    const double sd = std::sqrt(total_var);
    const double z = std::log(x / s0) / sd + 0.5 * sd;
    return -std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi * total_var) - 0.5 * z * z;
}

double lognormal_density(double s0, double total_var, double x)
{
    return std::exp(log_lognormal_density(s0, total_var, x));
}

double bs_call(double s0, double strike, double total_var)
{
    if (!(s0 > 0.0) || strike < 0.0 || total_var < 0.0)
        throw std::domain_error("bs_call: need s0 > 0, strike >= 0, total_var >= 0");
    if (strike == 0.0) return s0;
    if (total_var == 0.0) return std::max(s0 - strike, 0.0);
    const double sd = std::sqrt(total_var);
    const double d1 = std::log(s0 / strike) / sd + 0.5 * sd;
    return s0 * normal_cdf(d1) - strike * normal_cdf(d1 - sd);
}

double mixture_call(const MixtureModel& model, double t, double strike)
{
    if (strike == 0.0) return model.s0;
    double acc = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n)
        acc += model.weights[n] * bs_call(model.s0, strike, model.paths[n].cumulative_variance(t));
    return acc;
}

DominantSet dominant_set(const MixtureModel& model, double t, double tol)
{
    DominantSet out;
    out.t = t;
    std::vector<double> sig(model.size());
    double top = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n) {
        sig[n] = model.paths[n].cumulative_variance(t);
        top = std::max(top, sig[n]);
    }
    if (tol < 0.0) tol = 1e-12 * top;
    double num = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n) {
        if (sig[n] >= top - tol) {
            out.indices.push_back(n);
            const double g = model.paths[n].level_at(t);
            out.mass += model.weights[n];
            num += model.weights[n] * g * g;
        }
    }
    out.sigma_bar_sq = num / out.mass;
    return out;
}

std::vector<double> dominance_change_times(const MixtureModel& model, double a, double b)
{
    std::vector<double> knots{a};
    for (double t : model.breakpoints(b))
        if (t > a) knots.push_back(t);
    knots.push_back(b);

    std::vector<double> out(knots.begin() + 1, knots.end() - 1);
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double lo = knots[k], hi = knots[k + 1];
        // every Sigma_n is affine on [lo, hi]
        for (std::size_t m = 0; m < model.size(); ++m) {
            for (std::size_t n = m + 1; n < model.size(); ++n) {
                const double gm = model.paths[m].level_at(lo), gn = model.paths[n].level_at(lo);
                const double slope = gm * gm - gn * gn;
                if (slope == 0.0) continue;
                const double diff = model.paths[m].cumulative_variance(lo) - model.paths[n].cumulative_variance(lo);
                const double tc = lo - diff / slope;
                if (tc > lo && tc < hi) out.push_back(tc);
            }
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ValidationReport validate_model(const MixtureModel& model)
{
    ValidationReport r;
    auto fail = [&r](std::string msg) { r.violations.push_back(std::move(msg)); };

    if (model.paths.size() < 2) fail(fmt::format("need at least 2 paths, got {}", model.paths.size()));
    if (model.weights.size() != model.paths.size())
        fail(fmt::format("weights has {} entries for {} paths", model.weights.size(), model.paths.size()));
    if (!(model.sigma0 > 0.0)) fail("sigma0 must be positive");
    if (!(model.t1 > 0.0)) fail("t1 must be positive");
    if (!(model.tau > 0.0)) fail("tau must be positive");
    if (!(model.s0 > 0.0)) fail("s0 must be positive");

    double sum = 0.0;
    for (std::size_t n = 0; n < model.weights.size(); ++n) {
        if (!(model.weights[n] > 0.0)) fail(fmt::format("weight of path {} is not positive ({})", n + 1, model.weights[n]));
        sum += model.weights[n];
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        std::string idx;
        for (std::size_t n = 0; n < model.weights.size(); ++n) idx += fmt::format("{}{}", n ? "," : "", n + 1);
        fail(fmt::format("weights of paths {} sum to {:.17g}, not 1", idx, sum));
    }

    for (std::size_t n = 0; n < model.paths.size(); ++n) {
        const auto br = model.paths[n].breaks();
        const auto lv = model.paths[n].levels();
        for (std::size_t i = 0; i < br.size() && br[i] < model.t1; ++i) {
            if (lv[i] != model.sigma0) {
                fail(fmt::format("path {} differs from sigma0 on [0, t1) (level {} at t={})", n + 1, lv[i], br[i]));
                break;
            }
        }
    }

    if (model.paths.size() >= 2 && model.t1 > 0.0) {
        // piecewise constant and right-continuous: g(t1) is the value on [t1, t1 + eps]
        bool distinct = false;
        const double g0 = model.paths.front().level_at(model.t1);
        for (const auto& p : model.paths) distinct = distinct || p.level_at(model.t1) != g0;
        if (!distinct) fail("non-degeneracy: all paths coincide on a right neighbourhood of t1");
    }
    return r;
}

}  // namespace convexlab
