#include "convexlab/vix_metrics.hpp"

#include "convexlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace convexlab {

namespace {

// (1/tau) int_T^{T+tau} g^2, exact when one segment covers the window.
double window_average_variance(const VolPath& path, double T, double tau)
{
    const auto br = path.breaks();
    const auto lv = path.levels();
    double acc = 0.0;
    const double end = T + tau;
    for (std::size_t i = 0; i < br.size(); ++i) {
        const double lo = std::max(T, br[i]);
        const double hi = i + 1 < br.size() ? std::min(end, br[i + 1]) : end;
        if (lo <= T && hi >= end) return lv[i] * lv[i];
        if (hi > lo) acc += lv[i] * lv[i] * (hi - lo);
    }
    return acc / tau;
}

void check_window(const MixtureModel& model, double T)
{
    if (T < 0.0) throw std::domain_error("VIX maturity must be nonnegative");
    if (T + model.tau > model.t2() * (1.0 + 1e-15))
        throw std::domain_error("VIX window [T, T + tau] exceeds the model horizon t2");
}

double scale_of(const Vix2Distribution& a, const Vix2Distribution& b)
{
    double s = 0.0;
    for (const auto& at : a.atoms) s = std::max(s, std::abs(at.value));
    for (const auto& at : b.atoms) s = std::max(s, std::abs(at.value));
    return s;
}

}  // namespace

double vix2_stoch_constant(const MixtureModel& model, double T)
{
    check_window(model, T);
    if (!(T < model.t1)) throw std::domain_error("vix2_stoch_constant: needs T < t1 (independence of the window)");
    std::vector<double> vals(model.size());
    for (std::size_t n = 0; n < model.size(); ++n) vals[n] = window_average_variance(model.paths[n], T, model.tau);
    return weighted_average(vals, model.weights);
}

double ell_bound(const MixtureModel& model, double T)
{
    check_window(model, T);
    const double end = T + model.tau;
    std::vector<double> knots{T};
    for (double c : dominance_change_times(model, T, end)) knots.push_back(c);
    knots.push_back(end);
    const double ref = dominant_set(model, 0.5 * (knots[0] + knots[1])).sigma_bar_sq;
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double mid = 0.5 * (knots[k] + knots[k + 1]);
        acc += (dominant_set(model, mid).sigma_bar_sq - ref) * (knots[k + 1] - knots[k]);
    }
    return ref + acc / model.tau;
}

MeanEstimate psi_at(const LocalVarSource& source, double T, double tau, double x, std::size_t inner_paths,
                    std::size_t n_steps, RngSpec rng)
{
    if (!(x > 0.0)) throw std::domain_error("psi_at: x must be positive");
    const PathEnsemble ens = simulate_locvol(source, T, x, T + tau, n_steps, inner_paths, rng);
    return sample_mean(ens.avg_variance);
}

const char* to_string(Provenance p)
{
    switch (p) {
    case Provenance::stoch_constant: return "stoch-constant";
    case Provenance::loc_quadrature: return "loc-quadrature";
    case Provenance::slv_two_point: return "slv-two-point";
    case Provenance::slv_mixture: return "slv-mixture";
    case Provenance::point_mass: return "point-mass";
    }
    return "unknown";
}

Vix2Distribution Vix2Distribution::point_mass(double value, Provenance p)
{
    return Vix2Distribution{{{value, 1.0, 0.0}}, p};
}

MeanEstimate Vix2Distribution::mean() const
{
    std::vector<double> v(atoms.size()), w(atoms.size()), e(atoms.size());
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        v[i] = atoms[i].value;
        w[i] = atoms[i].weight;
        e[i] = atoms[i].weight * atoms[i].weight * atoms[i].se * atoms[i].se;
    }
    return {weighted_average(v, w), std::sqrt(ordered_sum(e))};
}

double Vix2Distribution::min_value() const
{
    double m = std::numeric_limits<double>::infinity();
    for (const auto& a : atoms) m = std::min(m, a.value);
    return m;
}

double Vix2Distribution::max_value() const
{
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& a : atoms) m = std::max(m, a.value);
    return m;
}

void check_distribution(const Vix2Distribution& d)
{
    if (d.atoms.empty()) throw std::invalid_argument("VIX^2 distribution has no atoms");
    double total = 0.0;
    for (const auto& a : d.atoms) {
        if (!(a.value >= 0.0)) throw std::invalid_argument("VIX^2 distribution has a negative atom");
        if (!(a.weight > 0.0)) throw std::invalid_argument("VIX^2 distribution has a nonpositive weight");
        total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("VIX^2 distribution weights do not sum to 1");
}

LocVixResult vix2_loc_distribution(const LocalVarSource& source, const MixtureModel& model, double T,
                                   std::size_t n_quad_nodes, std::size_t inner_paths, std::size_t n_steps,
                                   RngSpec rng)
{
    check_window(model, T);
    if (!(T > 0.0) || !(T < model.t1))
        throw std::domain_error("vix2_loc_distribution: needs 0 < T < t1 so that S_T is lognormal");
    const auto nodes = lognormal_quadrature(model.s0, model.sigma0 * model.sigma0 * T, n_quad_nodes);

    LocVixResult out;
    out.distribution.provenance = Provenance::loc_quadrature;
    out.psi.maturity = T;
    out.psi.tau = model.tau;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        const MeanEstimate est = psi_at(source, T, model.tau, nodes[j].x, inner_paths, n_steps, derive(rng, j));
        out.psi.x.push_back(nodes[j].x);
        out.psi.psi.push_back(est.mean);
        out.psi.se.push_back(est.se);
        out.psi.inner_paths.push_back(inner_paths);
        out.distribution.atoms.push_back({est.mean, nodes[j].weight, est.se});
    }
    return out;
}

FuturesComparison vix_futures(const Vix2Distribution& a, const Vix2Distribution& b)
{
    check_distribution(a);
    check_distribution(b);
    auto sqrt_mean = [](const Vix2Distribution& d, double& var) {
        std::vector<double> v(d.atoms.size()), w(d.atoms.size()), e(d.atoms.size());
        for (std::size_t i = 0; i < d.atoms.size(); ++i) {
            const auto& at = d.atoms[i];
            v[i] = std::sqrt(at.value);
            w[i] = at.weight;
            const double deriv = at.se > 0.0 ? at.se / (2.0 * std::sqrt(at.value)) : 0.0;
            e[i] = at.weight * at.weight * deriv * deriv;
        }
        var += ordered_sum(e);
        return weighted_average(v, w);
    };
    FuturesComparison out;
    double var = 0.0;
    out.mean_sqrt_a = sqrt_mean(a, var);
    out.mean_sqrt_b = sqrt_mean(b, var);
    out.gap = out.mean_sqrt_a - out.mean_sqrt_b;
    out.se = std::sqrt(var);
    out.ci_lo = out.gap - kZ99 * out.se;
    out.ci_hi = out.gap + kZ99 * out.se;
    return out;
}

const char* to_string(Verdict v)
{
    switch (v) {
    case Verdict::inverted: return "inverted";
    case Verdict::preserved: return "preserved";
    case Verdict::non_rankable: return "non-rankable";
    case Verdict::inconclusive: return "inconclusive";
    case Verdict::equal: return "equal";
    }
    return "unknown";
}

StrikeGap call_gap(const Vix2Distribution& a, const Vix2Distribution& b, double strike)
{
    auto expected_call = [strike](const Vix2Distribution& d, double& var) {
        std::vector<double> terms(d.atoms.size()), e(d.atoms.size());
        for (std::size_t i = 0; i < d.atoms.size(); ++i) {
            const auto& at = d.atoms[i];
            terms[i] = at.weight * std::max(at.value - strike, 0.0);
            e[i] = at.value > strike ? at.weight * at.weight * at.se * at.se : 0.0;
        }
        var += ordered_sum(e);
        return ordered_sum(terms);
    };
    StrikeGap g;
    g.strike = strike;
    double var = 0.0;
    const double cb = expected_call(b, var);
    const double ca = expected_call(a, var);
    g.gap = cb - ca;
    g.se = std::sqrt(var);
    g.ci_lo = g.gap - kZ99 * g.se;
    g.ci_hi = g.gap + kZ99 * g.se;
    return g;
}

double pooled_quantile(const Vix2Distribution& a, const Vix2Distribution& b, double p)
{
    std::vector<std::pair<double, double>> pool;
    for (const auto& at : a.atoms) pool.emplace_back(at.value, 0.5 * at.weight);
    for (const auto& at : b.atoms) pool.emplace_back(at.value, 0.5 * at.weight);
    std::sort(pool.begin(), pool.end());
    double cum = 0.0;
    for (const auto& [v, w] : pool) {
        cum += w;
        if (cum >= p - 1e-12) return v;
    }
    return pool.back().first;
}

ConvexOrderReport convex_order_report(const Vix2Distribution& a, const Vix2Distribution& b, std::size_t n_strikes,
                                      LocalVolRole role)
{
    check_distribution(a);
    check_distribution(b);
    if (n_strikes == 0) throw std::invalid_argument("convex_order_report: need at least one strike");

    ConvexOrderReport rep;
    const double eps = 1e-13 * std::max(scale_of(a, b), std::numeric_limits<double>::min());
    const double lo = pooled_quantile(a, b, 0.01), hi = pooled_quantile(a, b, 0.99);
    bool all_zero = true;
    for (double k : uniform_grid(lo, hi, n_strikes)) {
        const StrikeGap g = call_gap(a, b, k);
        if (g.gap - kZ99 * g.se > eps) ++rep.n_significant_positive;
        if (g.gap + kZ99 * g.se < -eps) ++rep.n_significant_negative;
        all_zero = all_zero && std::abs(g.gap) <= eps && g.se == 0.0;
        rep.gaps.push_back(g);
    }

    const MeanEstimate ma = a.mean(), mb = b.mean();
    rep.mean_gap = mb.mean - ma.mean;
    rep.mean_se = std::hypot(ma.se, mb.se);
    rep.mean_ci_lo = rep.mean_gap - kZ99 * rep.mean_se;
    rep.mean_ci_hi = rep.mean_gap + kZ99 * rep.mean_se;
    rep.mean_mismatch = std::abs(rep.mean_gap) > 3.0 * rep.mean_se + eps;
    all_zero = all_zero && std::abs(rep.mean_gap) <= eps && rep.mean_se == 0.0;

    const FuturesComparison fut = vix_futures(b, a);
    rep.futures_gap = fut.gap;
    rep.futures_se = fut.se;
    rep.futures_ci_lo = fut.ci_lo;
    rep.futures_ci_hi = fut.ci_hi;

    const bool pos = rep.n_significant_positive > 0, neg = rep.n_significant_negative > 0;
    if (pos && neg) {
        rep.verdict = Verdict::non_rankable;
    } else if (pos) {
        rep.verdict = role == LocalVolRole::b_is_local ? Verdict::inverted : Verdict::preserved;
    } else if (neg) {
        rep.verdict = role == LocalVolRole::b_is_local ? Verdict::preserved : Verdict::inverted;
    } else {
        rep.verdict = all_zero ? Verdict::equal : Verdict::inconclusive;
    }
    if (rep.mean_mismatch) rep.note = "not comparable - mean mismatch";
    return rep;
}

}  // namespace convexlab
