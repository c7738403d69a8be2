#include "convexlab/sim_engine.hpp"

#include "convexlab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace convexlab {

std::vector<double> sample_stoch_terminal(const MixtureModel& model, double t, std::size_t n, RngSpec rng)
{
    if (!(t > 0.0) || t > model.t2()) throw std::domain_error("sample_stoch_terminal: t must lie in (0, t2]");
    std::vector<double> cum(model.size()), sd(model.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < model.size(); ++k) {
        acc += model.weights[k];
        cum[k] = acc;
        sd[k] = std::sqrt(model.paths[k].cumulative_variance(t));
    }
    std::vector<double> out(n);
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            CounterRng g(derive(rng, i));
            const double u = g.uniform() * acc;
            const std::size_t k = std::min<std::size_t>(
                static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin()), model.size() - 1);
            out[i] = model.s0 * std::exp(-0.5 * sd[k] * sd[k] + sd[k] * g.normal());
        }
    });
    return out;
}

std::vector<double> simulation_times(const LocalVarSource& source, double t_from, double t_to, std::size_t n_steps)
{
    if (n_steps == 0) throw std::invalid_argument("simulate: need at least one step");
    if (!(t_to > t_from)) throw std::invalid_argument("simulate: need t_from < t_to");
    if (t_from < source.t_min() || t_to > source.t_max())
        throw std::out_of_range("simulate: local variance source does not cover [t_from, t_to]");
    std::vector<double> times = uniform_grid(t_from, t_to, n_steps + 1);
    const double h = (t_to - t_from) / static_cast<double>(n_steps);
    for (double b : source.jump_times()) {
        if (b < t_from || b >= t_to) continue;
        if (b > t_from) times.push_back(b);
        // the local variance has a transient right after a jump whose time
        // scale shrinks with |ln x|; halve the step kRefineLevels times
        double r = h;
        for (int k = 0; k < kRefineLevels; ++k) {
            r *= 0.5;
            if (b + r < t_to) times.push_back(b + r);
        }
    }
    std::sort(times.begin(), times.end());
    // drop steps shorter than a rounding error next to a jump time
    std::vector<double> out{times.front()};
    const double eps = 1e-12 * (t_to - t_from);
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (times[i] - out.back() > eps)
            out.push_back(times[i]);
        else if (i + 1 == times.size())
            out.back() = times[i];
    }
    return out;
}

PathEnsemble simulate_locvol(const LocalVarSource& source, double t_from, double x_from, double t_to,
                             std::size_t n_steps, std::size_t n_paths, RngSpec rng)
{
    if (!(x_from > 0.0)) throw std::invalid_argument("simulate_locvol: start spot must be positive");
    const std::vector<double> times = simulation_times(source, t_from, t_to, n_steps);
    const std::vector<double> jumps = source.jump_times();
    std::vector<char> is_jump(times.size(), 0);
    for (std::size_t k = 0; k < times.size(); ++k)
        is_jump[k] = std::find(jumps.begin(), jumps.end(), times[k]) != jumps.end();

    PathEnsemble ens;
    ens.n_paths = n_paths;
    ens.terminal_log.resize(n_paths);
    ens.avg_variance.resize(n_paths);
    ens.step = (t_to - t_from) / static_cast<double>(n_steps);
    ens.t_from = t_from;
    ens.t_to = t_to;

    const double log_s0 = std::log(source.s0());
    const double y0 = std::log(x_from) - log_s0;
    const double span = t_to - t_from;
    const std::size_t last = times.size() - 1;

    // a gridded surface is sliced once per grid time; all paths share the grid
    const auto* grid = dynamic_cast<const LocalVolSurface*>(&source);
    std::vector<std::vector<double>> right_rows, left_rows;
    if (grid) {
        right_rows.resize(times.size());
        left_rows.resize(times.size());
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (k == 0 || (is_jump[k] && k < last)) right_rows[k] = grid->time_row(times[k], Side::right);
            if (k > 0) left_rows[k] = grid->time_row(times[k], Side::left);
        }
    }
    const auto right = [&](std::size_t k, double y) {
        return grid ? grid->interp_row(right_rows[k].data(), y) : source.value(times[k], y, Side::right);
    };
    const auto left = [&](std::size_t k, double y) {
        return grid ? grid->interp_row(left_rows[k].data(), y) : source.value(times[k], y, Side::left);
    };

    parallel_for(n_paths, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            CounterRng g(derive(rng, i));
            double y = y0;
            double v = right(0, y);
            // accumulate relative to the starting level so a flat surface averages exactly
            const double v_ref = v;
            double acc = 0.0;
            for (std::size_t k = 0; k < last; ++k) {
                const double dt = times[k + 1] - times[k];
                y += -0.5 * v * dt + std::sqrt(v * dt) * g.normal();
                const double v_end = left(k + 1, y);
                acc += 0.5 * ((v - v_ref) + (v_end - v_ref)) * dt;
                v = (is_jump[k + 1] && k + 1 < last) ? right(k + 1, y) : v_end;
            }
            ens.terminal_log[i] = y + log_s0;
            ens.avg_variance[i] = v_ref + acc / span;
        }
    });
    return ens;
}

MeanEstimate sample_mean(std::span<const double> xs)
{
    MeanEstimate out;
    if (xs.empty()) return out;
    const double n = static_cast<double>(xs.size());
    if (std::all_of(xs.begin(), xs.end(), [&](double x) { return x == xs[0]; })) {
        out.mean = xs[0];
        return out;
    }
    out.mean = ordered_sum(xs) / n;
    if (xs.size() < 2) return out;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - out.mean) * (xs[i] - out.mean);
    out.se = std::sqrt(ordered_sum(sq) / (n - 1.0) / n);
    return out;
}

std::vector<QuadratureNode> gauss_hermite(std::size_t n)
{
    if (n == 0) throw std::invalid_argument("gauss_hermite: need at least one node");
    std::vector<double> x(n), w(n);
    const std::size_t m = (n + 1) / 2;
    const double nd = static_cast<double>(n);
    const double pim4 = std::pow(std::numbers::pi, -0.25);
    double z = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * nd + 1.0) - 1.85575 * std::pow(2.0 * nd + 1.0, -1.0 / 6.0);
        else if (i == 1)
            z -= 1.14 * std::pow(nd, 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[i - 2];
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pim4, p2 = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                const double p3 = p2;
                p2 = p1;
                const double jd = static_cast<double>(j);
                p1 = z * std::sqrt(2.0 / jd) * p2 - std::sqrt((jd - 1.0) / jd) * p3;
            }
            pp = std::sqrt(2.0 * nd) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    std::vector<QuadratureNode> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = {x[n - 1 - i], w[n - 1 - i]};
    return out;
}

std::vector<QuadratureNode> lognormal_quadrature(double s0, double total_var, std::size_t n_nodes)
{
    if (!(total_var > 0.0)) throw std::invalid_argument("lognormal_quadrature: total variance must be positive");
    auto nodes = gauss_hermite(n_nodes);
    std::vector<double> ws(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) ws[i] = nodes[i].weight;
    const double total = ordered_sum(ws);
    const double sd = std::sqrt(total_var);
    for (auto& nd : nodes) {
        nd.x = s0 * std::exp(-0.5 * total_var + sd * std::numbers::sqrt2 * nd.x);
        nd.weight /= total;
    }
    return nodes;
}

GyongyReport gyongy_report(const MixtureModel& model, const LocalVarSource& source, double t,
                           std::span<const double> strikes, std::size_t n_paths, std::size_t n_steps, RngSpec rng)
{
    if (!(t > 0.0) || !(t < model.t2())) throw std::domain_error("gyongy_report: t must lie in (0, t2)");
    const PathEnsemble ens = simulate_locvol(source, 0.0, model.s0, t, n_steps, n_paths, rng);
    GyongyReport rep{t, n_paths, n_steps, {}};
    std::vector<double> payoff(n_paths);
    for (double k : strikes) {
        GyongyRow row;
        row.strike = k;
        row.closed_form = mixture_call(model, t, k);
        if (k <= 0.0) {
            row.mc_price = model.s0;
        } else {
            for (std::size_t i = 0; i < n_paths; ++i) payoff[i] = std::max(std::exp(ens.terminal_log[i]) - k, 0.0);
            const MeanEstimate est = sample_mean(payoff);
            row.mc_price = est.mean;
            row.se = est.se;
        }
        const double diff = row.mc_price - row.closed_form;
        row.z = row.se > 0.0 ? diff / row.se : (diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff));
        row.rel_err = row.closed_form > 0.0 ? std::abs(diff) / row.closed_form : std::abs(diff);
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace convexlab
