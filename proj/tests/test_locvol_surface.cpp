#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <convexlab/locvol_surface.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

using namespace convexlab;
using namespace testsupport;

namespace {

MixtureModel random_model(std::mt19937_64& gen)
{
    std::uniform_real_distribution<double> lvl(0.05, 0.6), w(0.1, 1.0);
    std::uniform_int_distribution<int> npaths(2, 5);
    MixtureModel m;
    m.sigma0 = 0.2;
    m.t1 = 0.06;
    const int n = npaths(gen);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        m.paths.push_back(VolPath({0.0, m.t1, m.t1 + 0.03}, {m.sigma0, lvl(gen), lvl(gen)}));
        m.weights.push_back(w(gen));
        sum += m.weights.back();
    }
    for (double& u : m.weights) u /= sum;
    return m;
}

double max_cum_var(const MixtureModel& m, double t)
{
    double v = 0.0;
    for (const auto& p : m.paths) v = std::max(v, p.cumulative_variance(t));
    return v;
}

}  // namespace

TEST_CASE("weights are one before the switch and sum to one after")
{
    const auto m = mid_window_model();
    for (double x : {0.5, 1.0, 1.7}) {
        CHECK(weight_q(m, 0, 0.5 * m.t1, x) == 1.0);
        CHECK(weight_q(m, 1, 0.5 * m.t1, x) == 1.0);
    }
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> tt(0.061, 0.14), lx(-3.0, 3.0);
    for (int rep = 0; rep < 200; ++rep) {
        const auto mm = random_model(gen);
        const double t = tt(gen);
        const auto q = weights_q(mm, t, std::exp(lx(gen)));
        double s = 0.0;
        for (std::size_t n = 0; n < q.size(); ++n) s += mm.weights[n] * q[n];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK_THROWS(weight_q(m, 0, 0.0, 1.0));
}

TEST_CASE("weights in the far right tail concentrate on the dominant set")
{
    const auto m = mid_window_model();
    const double t = m.t1 + 0.02;
    const double L = 10.0 * std::sqrt(max_cum_var(m, t));
    CHECK(weight_q(m, 0, t, std::exp(L)) == doctest::Approx(1.0 / 0.5).epsilon(1e-6));
    CHECK(weight_q(m, 1, t, std::exp(L)) < 1e-6);
    CHECK(weight_q(m, 1, t, std::exp(2.0 * L)) < 1e-20);
    // no overflow far out
    CHECK(std::isfinite(weight_q(m, 0, t, std::exp(700.0))));
    CHECK(weight_q(m, 1, t, std::exp(700.0)) == 0.0);
    CHECK(std::isfinite(weight_q(m, 1, t, std::exp(-700.0))));
}

TEST_CASE("local variance before the switch is sigma0 squared")
{
    const auto m = mid_window_model();
    for (double x : {0.2, 1.0, 5.0}) CHECK(local_var(m, 0.03, x) == kSigma0 * kSigma0);
}

TEST_CASE("local variance at the equal-density point")
{
    const auto m = mid_window_model();
    const double t = m.t1 + 0.02;
    const double Vp = m.paths[0].cumulative_variance(t), Vm = m.paths[1].cumulative_variance(t);
    // -ln(2 pi V)/2 - (u + V/2)^2 / (2V) equal for both V, solved for u = ln x
    const double a = 1.0 / (2.0 * Vm) - 1.0 / (2.0 * Vp);
    const double c = 0.5 * std::log(Vp / Vm) + (Vp - Vm) / 8.0;
    const double u = std::sqrt(c / a);  // linear terms cancel
    CHECK(lognormal_density(1.0, Vp, std::exp(u)) == doctest::Approx(lognormal_density(1.0, Vm, std::exp(u))).epsilon(1e-12));
    CHECK(local_var(m, t, std::exp(u)) == doctest::Approx(0.03145).epsilon(1e-12));
}

TEST_CASE("two-path local variance matches the direct density ratio")
{
    const auto m = mid_window_model();
    for (double t : {m.t1 + 1e-3, m.t1 + 0.02, m.t2() - 1e-3}) {
        const double Vp = m.paths[0].cumulative_variance(t), Vm = m.paths[1].cumulative_variance(t);
        for (double lx = -0.3; lx <= 0.3; lx += 0.01) {
            const double x = std::exp(lx);
            const double pp = lognormal_density(1.0, Vp, x), pm = lognormal_density(1.0, Vm, x);
            const double direct = (0.0625 * pp + 0.0004 * pm) / (pp + pm);
            CHECK(std::abs(local_var(m, t, x) - direct) < 1e-14);
        }
    }
}

TEST_CASE("local variance tends to the dominant limit")
{
    const auto m = mid_window_model();
    for (double t : {m.t1 + 0.01, m.t1 + 0.02, m.t2() - 1e-3}) {
        const double L = 10.0 * std::sqrt(max_cum_var(m, t));
        CHECK(std::abs(local_var(m, t, std::exp(L)) - 0.0625) < 1e-4);
    }

    // Right after the switch the cumulative variances have barely separated
    // and the limit is reached much further out.
    const double t_near = m.t1 + 1e-3;
    const double L_near = 10.0 * std::sqrt(max_cum_var(m, t_near));
    CHECK(std::abs(local_var(m, t_near, std::exp(L_near)) - 0.0625) > 1e-2);
    CHECK(std::abs(local_var(m, t_near, std::exp(4.0 * L_near)) - 0.0625) < 1e-4);

    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> tt(0.061, 0.14);
    for (int rep = 0; rep < 20; ++rep) {
        const auto mm = random_model(gen);
        const double t = tt(gen);
        const double L = 10.0 * std::sqrt(max_cum_var(mm, t));
        const double target = dominant_set(mm, t).sigma_bar_sq;
        double prev = std::abs(local_var(mm, t, std::exp(L)) - target);
        for (double k = 1.5; k <= 20.0; k += 0.5) {
            const double d = std::abs(local_var(mm, t, std::exp(k * L)) - target);
            CHECK(d <= prev + 1e-16);
            prev = d;
        }
        CHECK(prev < 1e-4);
    }
}

TEST_CASE("local variance stays in the hull of path variances")
{
    std::mt19937_64 gen(9);
    std::uniform_real_distribution<double> tt(0.001, 0.14), lx(-5.0, 5.0);
    for (int rep = 0; rep < 500; ++rep) {
        const auto m = random_model(gen);
        const double t = tt(gen);
        double lo = INFINITY, hi = 0.0;
        for (const auto& p : m.paths) {
            const double g = p.level_at(t);
            lo = std::min(lo, g * g);
            hi = std::max(hi, g * g);
        }
        const double v = local_var(m, t, std::exp(lx(gen)));
        CHECK(v >= lo * (1 - 1e-14));
        CHECK(v <= hi * (1 + 1e-14));
    }
}

TEST_CASE("single-node surface reproduces local variance")
{
    const auto m = mid_window_model();
    const double t = m.t1 + 0.01, lx = 0.2;
    const std::vector<double> tg{t}, xg{lx};
    const auto s = surface_grid(m, tg, xg);
    CHECK(s.value(t, lx, Side::right) == local_var_logm(m, t, lx));
    CHECK(s.value(t, -1.0, Side::right) == local_var_logm(m, t, lx));
    CHECK_THROWS(surface_grid(m, std::vector<double>{}, xg));
}

TEST_CASE("plot surface is a smile symmetric in log-moneyness after the switch")
{
    const auto m = mid_window_model();
    const auto tg = uniform_grid(kT, 0.132, 41);
    const auto xg = uniform_grid(-1.0, 1.0, 81);
    const auto s = surface_grid(m, tg, xg);
    for (double t : tg) {
        if (t < m.t1) {
            for (double x : xg) CHECK(s.value(t, x, Side::right) == kSigma0 * kSigma0);
            continue;
        }
        // the u^2 terms are the only x dependence of the density ratio
        for (std::size_t j = 0; j < xg.size(); ++j)
            CHECK(s.value(t, xg[j], Side::right) == doctest::Approx(s.value(t, -xg[j], Side::right)).epsilon(1e-12));
        for (std::size_t j = 41; j < xg.size(); ++j)
            CHECK(s.value(t, xg[j], Side::right) >= s.value(t, xg[j - 1], Side::right));
        CHECK(s.value(t, 1.0, Side::right) <= 0.0625);
        CHECK(s.value(t, 0.0, Side::right) > 0.0004);
    }
}

TEST_CASE("doubling the simulation surface moves interpolated values by less than 1e-5")
{
    const auto m = mid_window_model();
    const auto coarse = simulation_surface(m, m.t2(), 512, uniform_grid(-1.5, 1.5, 601));
    const auto fine = simulation_surface(m, m.t2(), 1024, uniform_grid(-1.5, 1.5, 1201));
    std::mt19937_64 gen(2024);
    std::uniform_real_distribution<double> tt(0.0, m.t2()), lx(-1.5, 1.5);
    double worst_step = 0.0, worst_exact = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double t = tt(gen), x = lx(gen);
        const double c = coarse.value(t, x, Side::right), f = fine.value(t, x, Side::right);
        worst_step = std::max(worst_step, std::abs(c - f));
        if (t > 0.0) worst_exact = std::max(worst_exact, std::abs(f - local_var_logm(m, t, x)));
    }
    CHECK(worst_step < 1e-5);
    CHECK(worst_exact < 1e-5);
}

TEST_CASE("surface values before the switch are exact and all values bounded")
{
    const auto m = mid_window_model();
    const auto s = simulation_surface(m, m.t2(), 16, uniform_grid(-1.5, 1.5, 61));
    for (const auto& seg : s.segments()) {
        for (std::size_t r = 0; r < seg.t_nodes.size(); ++r) {
            for (std::size_t j = 0; j < s.logx_grid().size(); ++j) {
                const double v = seg.values[r * s.logx_grid().size() + j];
                if (seg.t_hi <= m.t1) CHECK(v == kSigma0 * kSigma0);
                CHECK(v >= 0.0004 * (1 - 1e-14));
                CHECK(v <= 0.0625 * (1 + 1e-14));
            }
        }
    }
    // flat beyond the grid
    CHECK(s.value(0.12, 3.0, Side::right) == s.value(0.12, 1.5, Side::right));
    CHECK(s.value(0.12, -3.0, Side::right) == s.value(0.12, -1.5, Side::right));
    CHECK_THROWS(s.value(m.t2() + 0.01, 0.0, Side::right));
}

TEST_CASE("surface CSV layout")
{
    const auto m = mid_window_model();
    const auto s = surface_grid(m, std::vector<double>{0.07, 0.1}, std::vector<double>{-0.1, 0.0, 0.1});
    std::ostringstream os;
    write_surface_csv(os, s);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,x,sigma_loc_sq");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 6);
    CHECK(os.str().find('\r') == std::string::npos);
}
