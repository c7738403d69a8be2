#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include <convexlab/parallel.hpp>
#include <convexlab/slv_calibrator.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace convexlab;
using namespace testsupport;

namespace {

const BernoulliSpec kSpec{0.8, 1.2, 0.5};

CalibrationConfig small_config(std::size_t n)
{
    CalibrationConfig cc;
    cc.t2 = 0.2;
    cc.tau = kVixWindow;
    cc.dt = kVixWindow / 60.0;
    cc.horizon = cc.t2 + 1.5 * kVixWindow;
    cc.n_particles = n;
    cc.sigma0 = kSigma0;
    return cc;
}

double ks_statistic(std::vector<double> log_x, double center, double total_var)
{
    std::sort(log_x.begin(), log_x.end());
    const double n = static_cast<double>(log_x.size());
    const double sd = std::sqrt(total_var);
    double d = 0.0;
    for (std::size_t i = 0; i < log_x.size(); ++i) {
        const double F = normal_cdf((log_x[i] - center + 0.5 * total_var) / sd);
        d = std::max({d, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
    }
    return d;
}

}  // namespace

TEST_CASE("Bernoulli spec checks")
{
    CHECK_NOTHROW(check_spec(kSpec));
    CHECK_NOTHROW(check_spec({1.0, 1.0, 0.3}));
    CHECK_THROWS(check_spec({1.2, 0.8, 0.5}));
    CHECK_THROWS(check_spec({0.3, 1.2, 0.5}));
    CHECK_NOTHROW(check_spec({0.3, 1.2, 0.5}, 5.0));
    CHECK_THROWS(check_spec({0.8, 1.2, 0.0}));
    CHECK_THROWS(check_spec({0.8, 1.2, 1.0}));
    CHECK_THROWS(check_spec({0.0, 1.2, 0.5}));
}

TEST_CASE("particle initialisation")
{
    const auto ps = init_particles(100000, 1.0, kSpec, 0.2, {1, 0});
    CHECK(ps.size() == 100000);
    CHECK(std::abs(ps.minus_fraction() - 0.5) < 0.0063);
    CHECK(std::all_of(ps.log_spot.begin(), ps.log_spot.end(), [](double x) { return x == 0.0; }));
    CHECK(ps.t == 0.2);
    CHECK_THROWS(init_particles(999, 1.0, kSpec, 0.2, {1, 0}));

    const std::vector<double> spots(2000, 1.3);
    const auto from = init_particles(spots, kSpec, 0.2, {1, 0});
    CHECK(from.log_spot.front() == std::log(1.3));
    // same label streams either way
    const auto ref = init_particles(2000, 1.3, kSpec, 0.2, {1, 0});
    CHECK(from.label_plus == ref.label_plus);
}

TEST_CASE("leverage of a cloud without dispersion is the empirical second moment")
{
    const auto ps = init_particles(5000, 1.0, kSpec, 0.2, {2, 0});
    const auto row = estimate_leverage(ps, kSpec);
    const double q = ps.minus_fraction();
    const double oracle = q * 0.64 + (1.0 - q) * 1.44;
    for (double v : row.values) CHECK(v == doctest::Approx(oracle).epsilon(1e-14));
    CHECK(row.value(-3.0) == doctest::Approx(oracle).epsilon(1e-14));

    const BernoulliSpec one{1.0, 1.0, 0.5};
    auto ps1 = init_particles(5000, 1.0, one, 0.2, {2, 0});
    for (std::size_t i = 0; i < ps1.size(); ++i) ps1.log_spot[i] = 0.01 * std::sin(static_cast<double>(i));
    for (double v : estimate_leverage(ps1, one).values) CHECK(v == 1.0);
}

TEST_CASE("binned regression agrees with the direct kernel sum")
{
    auto ps = init_particles(5000, 1.0, kSpec, 0.2, {3, 0});
    CounterRng g({3, 1});
    for (std::size_t i = 0; i < ps.size(); ++i)
        ps.log_spot[i] = 0.05 * g.normal() + (ps.label_plus[i] ? 0.02 : -0.02);
    const auto row = estimate_leverage(ps, kSpec);
    REQUIRE(row.values.size() == 201);
    for (double v : row.values) {
        CHECK(v >= 0.64 * (1 - 1e-14));
        CHECK(v <= 1.44 * (1 + 1e-14));
    }
    const double h = row.bandwidth;
    double mean = 0.0;
    for (double x : ps.log_spot) mean += x;
    mean /= static_cast<double>(ps.size());
    double var = 0.0;
    for (double x : ps.log_spot) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(ps.size() - 1));
    CHECK(h == doctest::Approx(1.06 * sd * std::pow(5000.0, -0.2)).epsilon(1e-12));

    for (std::size_t j = 20; j < row.values.size() - 20; j += 10) {
        const double x = row.lo + row.step * static_cast<double>(j);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double u = (ps.log_spot[i] - x) / h;
            const double w = std::exp(-0.5 * u * u);
            const double y = ps.label_value(i, kSpec);
            num += w * y * y;
            den += w;
        }
        CHECK(row.values[j] == doctest::Approx(num / den).epsilon(2e-3));
    }
}

TEST_CASE("particle steps")
{
    const BernoulliSpec flat{1.0, 1.0, 0.5};
    auto ps = init_particles(20000, 1.0, flat, 0.2, {4, 0});
    const auto start = ps.log_spot;
    const auto row = estimate_leverage(ps, flat);
    const double dt = 0.01;
    step_particles(ps, dt, kSigma0, flat, row, 3, {4, 0});
    for (std::size_t i = 0; i < 50; ++i) {
        CounterRng z(derive(derive({4, 0}, 1), i), 3);
        const double expect = start[i] - 0.5 * 0.04 * dt + std::sqrt(0.04 * dt) * z.normal();
        CHECK(ps.log_spot[i] == doctest::Approx(expect).epsilon(1e-14));
    }

    auto mix = init_particles(100000, 1.0, kSpec, 0.2, {5, 0});
    const auto row2 = estimate_leverage(mix, kSpec);
    step_particles(mix, 0.01, kSigma0, kSpec, row2, 0, {5, 0});
    std::vector<double> s(mix.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::exp(mix.log_spot[i]);
    const auto ms = sample_mean(s);
    CHECK(std::abs(ms.mean - 1.0) < 4.0 * ms.se);
}

TEST_CASE("degenerate label: flat leverage and exact GBM marginals")
{
    const BernoulliSpec one{1.0, 1.0, 0.5};
    const auto cc = small_config(20000);
    const auto res = run_calibration(cc, one, 1.0, {}, {6, 0});
    for (const auto& r : res.surface.rows)
        for (double v : r.values) CHECK(v == 1.0);
    CHECK(res.f_min == 1.0);
    CHECK(res.f_max == 1.0);
    const double T = res.final_particles.t - cc.t2;
    CHECK(ks_statistic(res.final_particles.log_spot, 0.0, 0.04 * T) < 1.63 / std::sqrt(20000.0));
    CHECK(res.particle_psi_minus == doctest::Approx(1.0).epsilon(1e-12));

    const auto vix = slv_vix2(res.surface, 1.0, kSigma0, cc.t2, cc.tau, 100, {6, 1});
    CHECK(vix.minus.vix2 == kSigma0 * kSigma0);
    CHECK(vix.plus.vix2 == kSigma0 * kSigma0);
    CHECK(vix.mean_ratio == 1.0);
    CHECK(preserved_order_report(vix.distribution, kSigma0).verdict == Verdict::equal);
}

TEST_CASE("flat leverage gives Psi = 1 / E[Y^2] exactly")
{
    LeverageSurface surf;
    surf.spec = kSpec;
    surf.q_minus_hat = 0.5;
    const double c = 0.5 * 0.64 + 0.5 * 1.44;
    for (int k = 0; k <= 60; ++k) {
        LeverageRow r;
        r.t = 0.2 + kVixWindow * k / 60.0;
        r.values = {c};
        surf.rows.push_back(r);
    }
    const auto v = slv_vix2(surf, 1.0, kSigma0, 0.2, kVixWindow, 500, {7, 0});
    CHECK(v.minus.psi == doctest::Approx(1.0 / c).epsilon(1e-12));
    CHECK(v.plus.psi == doctest::Approx(1.0 / c).epsilon(1e-12));
    CHECK(v.mean_ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS(slv_vix2(surf, 1.0, kSigma0, 0.21, kVixWindow, 500, {7, 0}));
}

TEST_CASE("calibrated reference spec at small size")
{
    const auto cc = small_config(50000);
    const auto res = run_calibration(cc, kSpec, 1.0, {}, {8, 0});
    CHECK(res.f_min >= 0.64 * (1 - 1e-14));
    CHECK(res.f_max <= 1.44 * (1 + 1e-14));
    CHECK(res.min_inst_var >= 0.04 * 0.64 / 1.44 * (1 - 1e-12));
    CHECK(res.max_inst_var <= 0.04 * 1.44 / 0.64 * (1 + 1e-12));
    CHECK(res.flatness.steps_checked > 0);
    for (const auto& c : res.calls) CHECK(std::abs(c.z) < 3.0);
    REQUIRE(res.calls.size() == 5);

    const auto vix = slv_vix2(res.surface, 1.0, kSigma0, cc.t2, cc.tau, 20000, {8, 1});
    for (const auto* lp : {&vix.minus, &vix.plus}) {
        CHECK(lp->psi > 1.0 / 1.44);
        CHECK(lp->psi < 1.0 / 0.64);
    }
    CHECK(std::abs(vix.mean_ratio - 1.0) < 3.0 * vix.mean_ratio_se);
    CHECK(vix.plus.vix2 - vix.minus.vix2 > 6.0 * std::hypot(vix.plus.vix2_se, vix.minus.vix2_se));
    CHECK(preserved_order_report(vix.distribution, kSigma0).verdict == Verdict::preserved);

    std::ostringstream os;
    write_leverage_csv(os, res.surface);
    CHECK(os.str().rfind("t,x,F_hat\n", 0) == 0);
}

TEST_CASE("stratified VIX^2 for a random start keeps the mean")
{
    auto cc = small_config(20000);
    const auto m = coin_toss_model(kSigma0, 0.25, 0.02, 0.1);
    cc.t2 = m.t2();
    cc.horizon = cc.t2 + 1.5 * kVixWindow;
    const auto spots = sample_stoch_terminal(m, m.t2(), cc.n_particles, {9, 0});
    const auto res = run_calibration(cc, kSpec, 1.0, spots, {9, 1});
    CHECK(res.initial_particles.size() == spots.size());
    const auto st = slv_vix2_strata(res.surface, res.initial_particles, 4, kSigma0, cc.t2, cc.tau, 20000, {9, 2});
    REQUIRE(st.strata.size() == 4);
    double w = 0.0;
    for (const auto& a : st.distribution.atoms) w += a.weight;
    CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    check_distribution(st.distribution);
    // kernel-regression bias of the particle scheme dominates at this N
    // (about 3e-4, falling to 1.4e-4 at N = 2e5); the particle cloud's own
    // ratio carries the same bias
    CHECK(std::abs(st.mean_ratio - 1.0) < 1e-3);
    const double q = res.surface.q_minus_hat;
    const double particle_ratio = q * 0.64 * res.particle_psi_minus + (1.0 - q) * 1.44 * res.particle_psi_plus;
    CHECK(std::abs(particle_ratio - 1.0) < 1e-3);
    for (std::size_t k = 1; k < st.strata.size(); ++k) CHECK(st.strata[k].spot > st.strata[k - 1].spot);
}

TEST_CASE("two atoms around sigma0^2 beat the point mass at sigma0^2")
{
    Vix2Distribution d;
    d.atoms = {{0.03, 0.5, 0.0}, {0.05, 0.5, 0.0}};
    d.provenance = Provenance::slv_two_point;
    const auto rep = preserved_order_report(d, kSigma0);
    CHECK(call_gap(Vix2Distribution::point_mass(0.04), d, 0.04).gap > 0.0);
    CHECK(rep.verdict == Verdict::preserved);
}

TEST_CASE("calibration does not depend on the worker count")
{
    const auto cc = small_config(4000);
    std::vector<CalibrationResult> runs;
    for (unsigned th : {1u, 4u, 8u}) {
        set_thread_count(th);
        runs.push_back(run_calibration(cc, kSpec, 1.0, {}, {10, 0}));
    }
    set_thread_count(0);
    for (std::size_t r = 1; r < runs.size(); ++r) {
        CHECK(runs[r].final_particles.log_spot == runs[0].final_particles.log_spot);
        CHECK(runs[r].surface.rows.back().values == runs[0].surface.rows.back().values);
    }
}
