#include "convexlab/slv_calibrator.hpp"

#include "convexlab/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace convexlab {

namespace {

constexpr std::uint64_t kLabelStream = 0;
constexpr std::uint64_t kStepStream = 1;

double cloud_std(std::span<const double> xs, double& mean)
{
    const double n = static_cast<double>(xs.size());
    mean = ordered_sum(xs) / n;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
    return xs.size() > 1 ? std::sqrt(ordered_sum(sq) / (n - 1.0)) : 0.0;
}

std::vector<double> time_grid(double t2, double tau, double horizon, double dt)
{
    const auto steps = [dt](double len) { return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / dt - 1e-9))); };
    std::vector<double> out{t2};
    const std::size_t n1 = steps(tau);
    for (std::size_t k = 1; k <= n1; ++k) out.push_back(k == n1 ? t2 + tau : t2 + tau * static_cast<double>(k) / static_cast<double>(n1));
    const double rest = horizon - (t2 + tau);
    const std::size_t n2 = steps(rest);
    for (std::size_t k = 1; k <= n2; ++k)
        out.push_back(k == n2 ? horizon : t2 + tau + rest * static_cast<double>(k) / static_cast<double>(n2));
    return out;
}

}  // namespace

void check_spec(const BernoulliSpec& spec, double ratio_cap)
{
    if (!(spec.y_minus > 0.0) || !(spec.y_plus > 0.0)) throw std::invalid_argument("Bernoulli levels must be positive");
    if (spec.y_minus > spec.y_plus) throw std::invalid_argument("need y_minus <= y_plus");
    if (spec.y_plus / spec.y_minus > ratio_cap)
        throw std::invalid_argument(fmt::format("y_plus / y_minus = {} exceeds the cap {}", spec.y_plus / spec.y_minus, ratio_cap));
    if (!(spec.q_minus > 0.0 && spec.q_minus < 1.0)) throw std::invalid_argument("q_minus must lie in (0, 1)");
}

double ParticleSystem::minus_fraction() const
{
    if (label_plus.empty()) return 0.0;
    std::size_t minus = 0;
    for (auto l : label_plus) minus += l ? 0 : 1;
    return static_cast<double>(minus) / static_cast<double>(label_plus.size());
}

ParticleSystem init_particles(std::span<const double> spots, const BernoulliSpec& spec, double t, RngSpec rng)
{
    check_spec(spec);
    if (spots.size() < kMinParticles)
        throw std::invalid_argument(fmt::format("need at least {} particles for kernel estimation", kMinParticles));
    ParticleSystem ps;
    ps.t = t;
    ps.log_spot.resize(spots.size());
    ps.label_plus.resize(spots.size());
    const RngSpec labels = derive(rng, kLabelStream);
    for (std::size_t i = 0; i < spots.size(); ++i) {
        if (!(spots[i] > 0.0) || !std::isfinite(spots[i])) throw std::invalid_argument("particle spots must be positive");
        ps.log_spot[i] = std::log(spots[i]);
        CounterRng g(derive(labels, i));
        ps.label_plus[i] = g.uniform() < spec.q_minus ? 0 : 1;
    }
    return ps;
}

ParticleSystem init_particles(std::size_t n, double s_start, const BernoulliSpec& spec, double t, RngSpec rng)
{
    const std::vector<double> spots(n, s_start);
    return init_particles(spots, spec, t, rng);
}

double LeverageRow::value(double log_spot) const
{
    if (values.size() == 1 || step == 0.0) return values.front();
    const double p = (log_spot - lo) / step;
    if (!(p > 0.0)) return values.front();
    const double last = static_cast<double>(values.size() - 1);
    if (p >= last) return values.back();
    const auto j = static_cast<std::size_t>(p);
    const double w = p - static_cast<double>(j);
    return values[j] + w * (values[j + 1] - values[j]);
}

LeverageRow estimate_leverage(const ParticleSystem& particles, const BernoulliSpec& spec, const BandwidthRule& rule)
{
    const std::size_t n = particles.size();
    if (n == 0) throw std::invalid_argument("estimate_leverage: empty particle system");
    const double a = spec.y_minus * spec.y_minus;
    const double d = spec.y_plus * spec.y_plus - a;
    const auto mix = [&](double r) { return std::min(a + d * r, spec.y_plus * spec.y_plus); };

    LeverageRow row;
    row.t = particles.t;
    const auto [mn, mx] = std::minmax_element(particles.log_spot.begin(), particles.log_spot.end());
    row.lo = *mn;
    if (*mn == *mx) {
        row.values = {mix(1.0 - particles.minus_fraction())};
        return row;
    }

    double mean = 0.0;
    const double sd = cloud_std(particles.log_spot, mean);
    const double h = std::max(rule.silverman_factor * sd * std::pow(static_cast<double>(n), -0.2), rule.floor);
    if (!(h > 0.0)) throw std::domain_error("estimate_leverage: zero bandwidth with dispersed spots");
    row.bandwidth = h;

    // linear binning of total and y+ mass
    const double range = *mx - *mn;
    double delta = h / static_cast<double>(rule.bins_per_bandwidth);
    if (range / delta > 1e6) delta = range / 1e6;
    const std::size_t nb = static_cast<std::size_t>(range / delta) + 2;
    std::vector<double> w_all(nb, 0.0), w_plus(nb, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double p = (particles.log_spot[i] - *mn) / delta;
        const std::size_t j = std::min(static_cast<std::size_t>(p), nb - 2);
        const double f = p - static_cast<double>(j);
        w_all[j] += 1.0 - f;
        w_all[j + 1] += f;
        if (particles.label_plus[i]) {
            w_plus[j] += 1.0 - f;
            w_plus[j + 1] += f;
        }
    }

    const std::size_t g = std::max<std::size_t>(rule.grid_points, 2);
    row.step = range / static_cast<double>(g - 1);
    row.values.resize(g);
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(rule.kernel_cutoff * h / delta));
    std::vector<double> ka, kp;
    for (std::size_t k = 0; k < g; ++k) {
        const double x = *mn + row.step * static_cast<double>(k);
        const auto c = static_cast<std::ptrdiff_t>(std::llround((x - *mn) / delta));
        const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, c - reach));
        const std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(nb) - 1, c + reach));
        ka.clear();
        kp.clear();
        for (std::size_t j = lo; j <= hi; ++j) {
            if (w_all[j] == 0.0) continue;
            const double z = (x - (*mn + delta * static_cast<double>(j))) / h;
            const double kern = std::exp(-0.5 * z * z);
            ka.push_back(kern * w_all[j]);
            kp.push_back(kern * w_plus[j]);
        }
        const double sa = ordered_sum(ka);
        if (sa > 0.0) {
            row.values[k] = mix(std::clamp(ordered_sum(kp) / sa, 0.0, 1.0));
            continue;
        }
        // kernel mass underflowed: nearest occupied bin
        std::size_t best = 0;
        double best_dist = INFINITY;
        for (std::size_t j = 0; j < nb; ++j) {
            if (w_all[j] == 0.0) continue;
            const double dist = std::abs(static_cast<double>(j) * delta - (x - *mn));
            if (dist < best_dist) {
                best_dist = dist;
                best = j;
            }
        }
        row.values[k] = mix(w_plus[best] / w_all[best]);
    }
    return row;
}

void step_particles(ParticleSystem& particles, double dt, double sigma0, const BernoulliSpec& spec,
                    const LeverageRow& leverage, std::uint64_t step_index, RngSpec rng)
{
    if (!(dt > 0.0)) throw std::invalid_argument("step_particles: dt must be positive");
    const RngSpec steps = derive(rng, kStepStream);
    const double s2 = sigma0 * sigma0;
    parallel_for(particles.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const double y = particles.label_value(i, spec);
            const double v = s2 * ((y * y) / leverage.value(particles.log_spot[i]));
            CounterRng g(derive(steps, i), step_index);
            particles.log_spot[i] += -0.5 * v * dt + std::sqrt(v * dt) * g.normal();
        }
    });
    particles.t += dt;
}

const LeverageRow& LeverageSurface::row_at(double t) const
{
    if (rows.empty()) throw std::logic_error("empty leverage surface");
    const double eps = 1e-12 * std::max(1.0, std::abs(t));
    const auto it = std::upper_bound(rows.begin(), rows.end(), t + eps,
                                     [](double v, const LeverageRow& r) { return v < r.t; });
    return it == rows.begin() ? rows.front() : *(it - 1);
}

std::vector<FlatnessBin> flatness_bins(const ParticleSystem& particles, const BernoulliSpec& spec,
                                       const LeverageRow& leverage, std::size_t n_bins)
{
    const std::size_t n = particles.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        const double a = particles.log_spot[i], b = particles.log_spot[j];
        return a < b || (a == b && i < j);
    });
    const auto first = static_cast<std::size_t>(std::floor(0.05 * static_cast<double>(n)));
    const auto last = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    std::vector<FlatnessBin> out;
    if (n_bins == 0 || last <= first + n_bins) return out;
    if (particles.log_spot[order[first]] == particles.log_spot[order[last - 1]]) return out;
    const std::size_t m = last - first;
    std::vector<double> ratios;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t lo = first + m * b / n_bins, hi = first + m * (b + 1) / n_bins;
        ratios.clear();
        for (std::size_t k = lo; k < hi; ++k) {
            const std::size_t i = order[k];
            const double y = particles.label_value(i, spec);
            ratios.push_back((y * y) / leverage.value(particles.log_spot[i]));
        }
        FlatnessBin bin;
        bin.lo = particles.log_spot[order[lo]];
        bin.hi = particles.log_spot[order[hi - 1]];
        bin.count = hi - lo;
        bin.ratio = sample_mean(ratios).mean;
        out.push_back(bin);
    }
    return out;
}

CalibrationResult run_calibration(const CalibrationConfig& cfg, const BernoulliSpec& spec, double s_start,
                                  std::span<const double> start_spots, RngSpec rng)
{
    check_spec(spec);
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("run_calibration: dt must be positive");
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("run_calibration: tau must be positive");
    if (!(cfg.horizon > cfg.t2 + cfg.tau)) throw std::invalid_argument("run_calibration: need horizon > t2 + tau");

    CalibrationResult res;
    ParticleSystem ps = start_spots.empty() ? init_particles(cfg.n_particles, s_start, spec, cfg.t2, rng)
                                            : init_particles(start_spots, spec, cfg.t2, rng);
    ParticleSystem initial = ps;
    const std::vector<double> initial_spots = [&] {
        std::vector<double> s(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) s[i] = std::exp(ps.log_spot[i]);
        return s;
    }();

    res.surface.spec = spec;
    res.surface.q_minus_hat = ps.minus_fraction();
    const std::vector<double> times = time_grid(cfg.t2, cfg.tau, cfg.horizon, cfg.dt);
    const double window_end = cfg.t2 + cfg.tau;

    std::vector<double> psi_acc(ps.size(), 0.0);
    res.f_min = INFINITY;
    res.f_max = -INFINITY;
    res.min_inst_var = INFINITY;
    res.max_inst_var = -INFINITY;
    const double s2 = cfg.sigma0 * cfg.sigma0;

    for (std::size_t k = 0; k < times.size(); ++k) {
        ps.t = times[k];
        LeverageRow row = estimate_leverage(ps, spec, cfg.rule);
        for (double v : row.values) {
            res.f_min = std::min(res.f_min, v);
            res.f_max = std::max(res.f_max, v);
        }
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double y = ps.label_value(i, spec);
            const double v = s2 * ((y * y) / row.value(ps.log_spot[i]));
            res.min_inst_var = std::min(res.min_inst_var, v);
            res.max_inst_var = std::max(res.max_inst_var, v);
        }
        auto bins = flatness_bins(ps, spec, row, cfg.n_flatness_bins);
        if (!bins.empty()) {
            ++res.flatness.steps_checked;
            for (const auto& b : bins) {
                const double dev = std::abs(b.ratio - 1.0);
                if (dev > res.flatness.max_rel_dev) {
                    res.flatness.max_rel_dev = dev;
                    res.flatness.worst_t = times[k];
                }
            }
            res.flatness.final_bins = std::move(bins);
        }

        if (times[k] == window_end) {
            for (double K : {0.9, 0.95, 1.0, 1.05, 1.1}) {
                CallCheck c;
                c.strike = K * s_start;
                std::vector<double> diff(ps.size()), pay(ps.size()), oracle(ps.size());
                for (std::size_t i = 0; i < ps.size(); ++i) {
                    pay[i] = std::max(std::exp(ps.log_spot[i]) - c.strike, 0.0);
                    oracle[i] = bs_call(initial_spots[i], c.strike, s2 * cfg.tau);
                    diff[i] = pay[i] - oracle[i];
                }
                c.particle_price = sample_mean(pay).mean;
                c.bs_price = sample_mean(oracle).mean;
                c.se = sample_mean(diff).se;
                const double gap = c.particle_price - c.bs_price;
                c.z = c.se > 0.0 ? gap / c.se : (gap == 0.0 ? 0.0 : std::copysign(INFINITY, gap));
                res.calls.push_back(c);
            }
        }

        if (k + 1 < times.size()) {
            const double dt = times[k + 1] - times[k];
            if (times[k] < window_end) {
                for (std::size_t i = 0; i < ps.size(); ++i) psi_acc[i] += dt / row.value(ps.log_spot[i]);
            }
            step_particles(ps, dt, cfg.sigma0, spec, row, k, rng);
        }
        res.surface.rows.push_back(std::move(row));
    }
    ps.t = times.back();

    std::vector<double> pm, pp;
    for (std::size_t i = 0; i < ps.size(); ++i) (ps.label_plus[i] ? pp : pm).push_back(psi_acc[i] / cfg.tau);
    res.particle_psi_minus = pm.empty() ? 0.0 : sample_mean(pm).mean;
    res.particle_psi_plus = pp.empty() ? 0.0 : sample_mean(pp).mean;
    res.final_particles = std::move(ps);
    res.initial_particles = std::move(initial);
    return res;
}

void write_leverage_csv(std::ostream& os, const LeverageSurface& surface)
{
    os << "t,x,F_hat\n";
    for (const auto& row : surface.rows) {
        for (std::size_t j = 0; j < row.values.size(); ++j) {
            const double x = std::exp(row.lo + row.step * static_cast<double>(j));
            os << fmt::format("{:.17g},{:.17g},{:.17g}\n", row.t, x, row.values[j]);
        }
    }
}

namespace {

struct WindowRows {
    std::size_t first = 0;
    std::size_t last = 0;
};

// the inner paths step on the calibration grid, the scheme F_hat is a fixed point of
WindowRows window_rows(const LeverageSurface& surface, double T, double tau, const char* who)
{
    if (surface.rows.empty()) throw std::invalid_argument(std::string(who) + ": empty leverage surface");
    const double eps = 1e-12 * std::max(1.0, T + tau);
    std::size_t first = surface.rows.size(), last = surface.rows.size();
    for (std::size_t k = 0; k < surface.rows.size(); ++k) {
        if (std::abs(surface.rows[k].t - T) <= eps) first = k;
        if (std::abs(surface.rows[k].t - (T + tau)) <= eps) last = k;
    }
    if (first == surface.rows.size() || last == surface.rows.size() || last <= first)
        throw std::out_of_range(std::string(who) + ": T and T + tau must be calibration times of the leverage surface");
    return {first, last};
}

// Path i starts at starts[i * starts.size() / inner_paths], an even sweep over
// the (sorted) starts whatever their count.
void label_psi(LabelPsi& lp, const LeverageSurface& surface, WindowRows w, std::span<const double> starts,
               double sigma0, std::size_t inner_paths, RngSpec stream)
{
    const double s2 = sigma0 * sigma0;
    const double y2 = lp.y * lp.y;
    const double span = surface.rows[w.last].t - surface.rows[w.first].t;
    std::vector<double> psi(inner_paths);
    parallel_for(inner_paths, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            CounterRng g(derive(stream, i));
            double x = starts[i * starts.size() / inner_paths];
            const double ref = 1.0 / surface.rows[w.first].value(x);
            double acc = 0.0;
            for (std::size_t k = w.first; k < w.last; ++k) {
                const double dt = surface.rows[k + 1].t - surface.rows[k].t;
                const double f = surface.rows[k].value(x);
                acc += (1.0 / f - ref) * dt;
                const double v = s2 * (y2 / f);
                x += -0.5 * v * dt + std::sqrt(v * dt) * g.normal();
            }
            psi[i] = ref + acc / span;
        }
    });
    const MeanEstimate est = sample_mean(psi);
    lp.psi = est.mean;
    lp.psi_se = est.se;
    lp.vix2 = s2 * y2 * est.mean;
    lp.vix2_se = s2 * y2 * est.se;
}

void degenerate_psi(LabelPsi& lp, double sigma0)
{
    lp.psi = 1.0 / (lp.y * lp.y);
    lp.vix2 = sigma0 * sigma0;
}

}  // namespace

SlvVixResult slv_vix2(const LeverageSurface& surface, double s, double sigma0, double T, double tau,
                      std::size_t inner_paths, RngSpec rng)
{
    const BernoulliSpec& spec = surface.spec;
    if (!(s > 0.0)) throw std::invalid_argument("slv_vix2: spot must be positive");
    if (inner_paths == 0) throw std::invalid_argument("slv_vix2: need inner paths");
    const WindowRows w = window_rows(surface, T, tau, "slv_vix2");

    SlvVixResult out;
    out.spot = s;
    const double q = surface.q_minus_hat;
    out.minus.y = spec.y_minus;
    out.plus.y = spec.y_plus;
    out.minus.weight = q;
    out.plus.weight = 1.0 - q;

    if (spec.degenerate()) {
        degenerate_psi(out.minus, sigma0);
        degenerate_psi(out.plus, sigma0);
        out.mean_ratio = 1.0;
    } else {
        const double x0[] = {std::log(s)};
        label_psi(out.minus, surface, w, x0, sigma0, inner_paths, derive(rng, 0));
        label_psi(out.plus, surface, w, x0, sigma0, inner_paths, derive(rng, 1));
        const double a = spec.y_minus * spec.y_minus, b = spec.y_plus * spec.y_plus;
        out.mean_ratio = q * a * out.minus.psi + (1.0 - q) * b * out.plus.psi;
        out.mean_ratio_se = std::hypot(q * a * out.minus.psi_se, (1.0 - q) * b * out.plus.psi_se);
    }

    out.distribution.provenance = Provenance::slv_two_point;
    for (const LabelPsi* lp : {&out.minus, &out.plus})
        if (lp->weight > 0.0) out.distribution.atoms.push_back({lp->vix2, lp->weight, lp->vix2_se});
    return out;
}

SlvVixStrata slv_vix2_strata(const LeverageSurface& surface, const ParticleSystem& start, std::size_t n_strata,
                             double sigma0, double T, double tau, std::size_t inner_paths, RngSpec rng)
{
    const BernoulliSpec& spec = surface.spec;
    if (start.size() == 0) throw std::invalid_argument("slv_vix2_strata: empty start cloud");
    if (n_strata == 0) throw std::invalid_argument("slv_vix2_strata: need at least one stratum");
    if (inner_paths == 0) throw std::invalid_argument("slv_vix2_strata: need inner paths");
    const WindowRows w = window_rows(surface, T, tau, "slv_vix2_strata");

    const std::size_t n = start.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return start.log_spot[i] < start.log_spot[j]; });
    n_strata = std::min(n_strata, n);

    SlvVixStrata out;
    out.distribution.provenance = Provenance::slv_mixture;
    const double a = spec.y_minus * spec.y_minus, b = spec.y_plus * spec.y_plus;
    std::vector<double> ratio_terms, se_terms;
    for (std::size_t m = 0; m < n_strata; ++m) {
        const std::size_t lo = n * m / n_strata, hi = n * (m + 1) / n_strata;
        std::vector<double> minus_x, plus_x;
        for (std::size_t r = lo; r < hi; ++r) {
            const std::size_t i = order[r];
            (start.label_plus[i] ? plus_x : minus_x).push_back(start.log_spot[i]);
        }
        SlvVixResult v;
        v.spot = std::exp(start.log_spot[order[(lo + hi) / 2]]);
        v.minus.y = spec.y_minus;
        v.plus.y = spec.y_plus;
        v.minus.weight = static_cast<double>(minus_x.size()) / static_cast<double>(n);
        v.plus.weight = static_cast<double>(plus_x.size()) / static_cast<double>(n);
        const RngSpec stream = derive(rng, m);
        if (spec.degenerate()) {
            degenerate_psi(v.minus, sigma0);
            degenerate_psi(v.plus, sigma0);
        } else {
            if (!minus_x.empty()) label_psi(v.minus, surface, w, minus_x, sigma0, inner_paths, derive(stream, 0));
            if (!plus_x.empty()) label_psi(v.plus, surface, w, plus_x, sigma0, inner_paths, derive(stream, 1));
        }
        // conditional on the stratum
        const double share = v.minus.weight + v.plus.weight;
        const double wm = v.minus.weight / share, wp = v.plus.weight / share;
        v.mean_ratio = spec.degenerate() ? 1.0 : wm * a * v.minus.psi + wp * b * v.plus.psi;
        v.mean_ratio_se = std::hypot(wm * a * v.minus.psi_se, wp * b * v.plus.psi_se);
        v.distribution.provenance = Provenance::slv_two_point;
        for (const LabelPsi* lp : {&v.minus, &v.plus}) {
            if (lp->weight <= 0.0) continue;
            v.distribution.atoms.push_back({lp->vix2, lp->weight / share, lp->vix2_se});
            out.distribution.atoms.push_back({lp->vix2, lp->weight, lp->vix2_se});
        }
        ratio_terms.push_back(share * v.mean_ratio);
        se_terms.push_back(share * share * v.mean_ratio_se * v.mean_ratio_se);
        out.strata.push_back(std::move(v));
    }
    out.mean_ratio = ordered_sum(ratio_terms);
    out.mean_ratio_se = std::sqrt(ordered_sum(se_terms));
    return out;
}

ConvexOrderReport preserved_order_report(const Vix2Distribution& vix2_slv, double sigma0, std::size_t n_strikes)
{
    return convex_order_report(Vix2Distribution::point_mass(sigma0 * sigma0), vix2_slv, n_strikes,
                               LocalVolRole::a_is_local);
}

}  // namespace convexlab
