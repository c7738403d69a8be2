// Acceptance run: one PASS/FAIL line per criterion. Sizes and seeds are
// fixed; the process exits non-zero only if a criterion could not be run.

#include <convexlab/locvol_surface.hpp>
#include <convexlab/parallel.hpp>
#include <convexlab/scenario.hpp>
#include <convexlab/sim_engine.hpp>
#include <convexlab/slv_calibrator.hpp>
#include <convexlab/vix_metrics.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace convexlab;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240611;
constexpr double kSigma0 = 0.2;
constexpr double kT = 0.05;
// "exact" closed-form comparisons allow a few ulps of rounding
constexpr double kExactRel = 1e-14;

bool close_rel(double a, double b, double rel = kExactRel) { return std::abs(a - b) <= rel * std::abs(b); }

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what)
    {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += (ok ? "" : "!") + what;
    }
};

int g_failed = 0;
int g_errors = 0;

void criterion(int id, const char* title, const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    try {
        const Outcome o = body();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!o.pass) ++g_failed;
        fmt::print("{} C{} {} [{:.0f}s]: {}\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail);
    } catch (const std::exception& e) {
        ++g_failed;
        ++g_errors;
        fmt::print("FAIL C{} {}: error: {}\n", id, title, e.what());
    }
    std::fflush(stdout);
}

ScenarioConfig simple_config(std::size_t inner_paths)
{
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::simple;
    cfg.seed = kSeed;
    cfg.maturities = {kT};
    cfg.model.sigma0 = kSigma0;
    cfg.model.sigma_up = 0.25;
    cfg.model.sigma_down = 0.02;
    cfg.numerics.n_quad_nodes = 64;
    cfg.numerics.inner_paths = inner_paths;
    cfg.numerics.n_steps = 200;
    return cfg;
}

ScenarioConfig slv_config(double y_minus, double y_plus, std::size_t n_particles)
{
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::slv;
    cfg.seed = kSeed;
    cfg.model.sigma0 = kSigma0;
    cfg.slv.y_minus = y_minus;
    cfg.slv.y_plus = y_plus;
    cfg.slv.q_minus = 0.5;
    cfg.slv.n_particles = n_particles;
    cfg.slv.t2 = kT + 1.5 * kVixWindow;
    return cfg;
}

// switch before the VIX window length, so every T in (0, t1) sees it
ScenarioConfig three_path_config()
{
    ScenarioConfig cfg;
    cfg.kind = ScenarioKind::general;
    cfg.seed = kSeed;
    cfg.model.sigma0 = kSigma0;
    cfg.model.t1 = 0.06;
    cfg.model.weights = {0.3, 0.3, 0.4};
    cfg.model.paths = {{{0.0, kSigma0}, {0.06, 0.3}}, {{0.0, kSigma0}, {0.06, 0.15}}, {{0.0, kSigma0}, {0.06, 0.05}}};
    return cfg;
}

double max_cum_var(const MixtureModel& m, double t)
{
    double v = 0.0;
    for (const auto& p : m.paths) v = std::max(v, p.cumulative_variance(t));
    return v;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

int main()
{
    set_thread_count(0);
    fmt::print("acceptance: seed {}, {} worker threads\n", kSeed, thread_count());

    // Criteria 1 and 3 share the run at the sizes of criterion 1.
    std::optional<ReportBundle> base;

    criterion(1, "closed-form anchor", [&] {
        base = run_scenario(simple_config(20000));
        const MaturityReport& r = base->maturities.at(0);
        Outcome o;
        o.check(close_rel(r.vix2_stoch, 0.035725), fmt::format("VIX^2 = {:.17g}", r.vix2_stoch));
        o.check(close_rel(r.ell, 0.05125), fmt::format("ell = {:.17g}", r.ell));
        const auto mean = r.loc.distribution.mean();
        const double tol = std::max(3.0 * mean.se, 5e-4);
        o.check(std::abs(mean.mean - 0.035725) < tol,
                fmt::format("loc mean = {:.6g} (se {:.2g}, tol {:.2g})", mean.mean, mean.se, tol));
        return o;
    });

    criterion(2, "inversion", [&] {
        // the futures gap is of order 1e-5 and needs 3e5 inner paths per node
        const ReportBundle b = run_scenario(simple_config(300000));
        const MaturityReport& r = b.maturities.at(0);
        Outcome o;
        o.check(r.futures.gap > 0.0 && r.futures.ci_lo > 0.0,
                fmt::format("futures gap = {:.4g}, 99% CI [{:.4g}, {:.4g}]", r.futures.gap, r.futures.ci_lo, r.futures.ci_hi));
        o.check(r.report.verdict == Verdict::inverted, fmt::format("verdict {}", to_string(r.report.verdict)));
        double worst_z = INFINITY;
        for (const auto& g : r.report.gaps) worst_z = std::min(worst_z, g.se > 0.0 ? g.gap / g.se : (g.gap >= 0.0 ? INFINITY : -INFINITY));
        o.check(worst_z >= -3.0, fmt::format("min gap/se = {:.3g}", worst_z));
        o.check(r.report.n_significant_positive >= 5,
                fmt::format("{} of {} strikes significantly positive", r.report.n_significant_positive, r.report.gaps.size()));
        return o;
    });

    criterion(3, "limit checks", [&] {
        if (!base) throw std::runtime_error("needs the criterion 1 run");
        const MixtureModel& m = *base->model;
        Outcome o;
        std::mt19937_64 gen(kSeed);
        std::uniform_real_distribution<double> tt(m.t1, m.t2());
        double worst = 0.0, worst_t = 0.0;
        int bad = 0;
        for (int i = 0; i < 20; ++i) {
            const double t = tt(gen);
            const double L = 10.0 * std::sqrt(max_cum_var(m, t));
            const double err = std::abs(local_var(m, t, std::exp(L)) - dominant_set(m, t).sigma_bar_sq);
            if (err >= 1e-4) ++bad;
            if (err > worst) {
                worst = err;
                worst_t = t;
            }
        }
        o.check(bad == 0, fmt::format("sigma_loc limit: {} of 20 probes off by >= 1e-4, worst {:.3g} at t - t1 = {:.3g}", bad,
                                      worst, worst_t - m.t1));

        const MaturityReport& r = base->maturities.at(0);
        const auto& psi = r.loc.psi;
        const std::size_t top = std::max_element(psi.x.begin(), psi.x.end()) - psi.x.begin();
        const double tol = std::max(3.0 * psi.se[top], 2e-4);
        o.check(std::abs(psi.psi[top] - r.ell) < tol, fmt::format("psi(x_max = {:.4g}) = {:.6g} vs ell {:.6g} (tol {:.2g})",
                                                                  psi.x[top], psi.psi[top], r.ell, tol));
        const double hi = *std::max_element(psi.psi.begin(), psi.psi.end());
        o.check(hi < r.ell, fmt::format("max psi = {:.6g} < ell", hi));
        return o;
    });

    criterion(4, "local-vol calls match mixture calls", [&] {
        const MixtureModel m = build_model(simple_config(20000));
        const auto src = simulation_surface(m, m.t2(), 512, uniform_grid(-1.5, 1.5, 601));
        // in- to at-the-money: out of the money the relative standard error
        // alone exceeds 0.5% at this size
        const std::vector<double> strikes{0.8, 0.85, 0.9, 0.95, 1.0};
        const auto rep = gyongy_report(m, src, kT + kVixWindow, strikes, 200000, 200, derive({kSeed, 0}, 4));
        Outcome o;
        for (const auto& row : rep.rows)
            o.check(std::abs(row.z) < 3.0 && std::abs(row.rel_err) < 0.005,
                    fmt::format("K {:.2f} z {:+.2f} rel {:+.3f}%", row.strike, row.z, 100.0 * row.rel_err));
        return o;
    });

    criterion(5, "three-path model inverts at every short maturity", [&] {
        ScenarioConfig cfg = three_path_config();
        cfg.maturities = {0.01, 0.02, 0.03, 0.04, 0.05};
        cfg.numerics.inner_paths = 20000;
        Outcome o;
        const auto v = validate_model(build_model(cfg));
        o.check(v.ok(), "model valid");
        const ReportBundle b = run_scenario(cfg);
        for (const auto& r : b.maturities)
            o.check(r.report.verdict == Verdict::inverted,
                    fmt::format("T {:.2f}: {} ({}+)", r.T, to_string(r.report.verdict), r.report.n_significant_positive));
        return o;
    });

    criterion(6, "no inversion for the calibrated SLV model", [&] {
        const ReportBundle b = run_scenario(slv_config(0.8, 1.2, 200000));
        const SlvReport& s = *b.slv;
        const CalibrationResult& c = s.calibration;
        Outcome o;
        o.check(c.f_min >= 0.64 && c.f_max <= 1.44, fmt::format("F range [{:.4g}, {:.4g}]", c.f_min, c.f_max));
        o.check(c.flatness.max_rel_dev < 0.02, fmt::format("flatness {:.3f}%", 100.0 * c.flatness.max_rel_dev));
        for (const auto& v : s.vix) {
            for (const LabelPsi* l : {&v.minus, &v.plus})
                o.check(l->psi > 1.0 / 1.44 && l->psi < 1.0 / 0.64, fmt::format("Psi(y {:.1f}) = {:.5g}", l->y, l->psi));
        }
        o.check(std::abs(s.mean_ratio - 1.0) < 3.0 * s.mean_ratio_se,
                fmt::format("mean ratio {:.6g} (se {:.2g})", s.mean_ratio, s.mean_ratio_se));
        o.check(s.atom_separation > 6.0 * s.atom_separation_se,
                fmt::format("atom separation {:.4g} ({:.1f} se)", s.atom_separation, s.atom_separation / s.atom_separation_se));
        o.check(s.report.verdict == Verdict::preserved, fmt::format("verdict {}", to_string(s.report.verdict)));
        return o;
    });

    criterion(7, "outputs identical at 1, 4 and 8 threads", [&] {
        std::vector<std::pair<std::string, ScenarioConfig>> cases;
        {
            auto c = simple_config(2000);
            c.numerics.n_quad_nodes = 16;
            cases.emplace_back("simple", c);
        }
        {
            ScenarioConfig c = three_path_config();
            c.maturities = {0.02, 0.05};
            c.numerics.n_quad_nodes = 16;
            c.numerics.inner_paths = 2000;
            cases.emplace_back("general", c);
        }
        cases.emplace_back("slv", slv_config(0.8, 1.2, 20000));
        {
            ScenarioConfig c = simple_config(2000);
            c.kind = ScenarioKind::term_structure;
            c.numerics.n_quad_nodes = 16;
            c.slv.n_particles = 20000;
            c.slv.inner_paths = 2000;
            cases.emplace_back("term_structure", c);
        }
        const fs::path root = fs::temp_directory_path() / "convexlab_acceptance";
        Outcome o;
        for (auto& [name, cfg] : cases) {
            std::map<std::string, std::string> first;
            bool same = true;
            std::size_t n_files = 0;
            for (unsigned th : {1u, 4u, 8u}) {
                cfg.threads = th;
                set_thread_count(th);
                const fs::path dir = root / fmt::format("{}_{}", name, th);
                fs::remove_all(dir);
                std::map<std::string, std::string> files;
                for (const auto& f : emit_outputs(run_scenario(cfg), dir)) files[f] = slurp(dir / f);
                n_files = files.size();
                if (th == 1) first = std::move(files);
                else same = same && files == first;
            }
            o.check(same, fmt::format("{} ({} files)", name, n_files));
        }
        set_thread_count(0);
        return o;
    });

    criterion(8, "degenerate configurations reduce to GBM", [&] {
        Outcome o;
        const double v0 = kSigma0 * kSigma0;

        // y- = y+: the leverage is flat and the VIX^2 law is a point mass
        const ReportBundle b = run_scenario(slv_config(1.0, 1.0, 20000));
        const SlvReport& s = *b.slv;
        bool atoms_exact = true;
        for (const auto& a : s.distribution.atoms) atoms_exact = atoms_exact && a.value == v0;
        o.check(atoms_exact, "SLV VIX^2 atoms == sigma0^2");
        o.check(s.calibration.f_min == 1.0 && s.calibration.f_max == 1.0, "F == 1");
        o.check(s.mean_ratio == 1.0, "mean ratio == 1");
        double worst_z = 0.0;
        for (const auto& cc : s.calibration.calls) worst_z = std::max(worst_z, std::abs(cc.z));
        o.check(worst_z < 3.0, fmt::format("SLV particle calls vs BS max |z| {:.2f}", worst_z));

        // identical paths: the mixture is GBM(sigma0)
        const MixtureModel m = coin_toss_model(kSigma0, kSigma0, kSigma0, 0.1);
        const double T = 0.04;
        bool closed = close_rel(vix2_stoch_constant(m, T), v0) && close_rel(ell_bound(m, T), v0);
        for (double t : {0.02, 0.11, 0.15})
            for (double x : {0.7, 1.0, 1.4}) closed = closed && close_rel(local_var(m, t, x), v0);
        for (double K : {0.9, 1.0, 1.1})
            closed = closed && close_rel(mixture_call(m, T + kVixWindow, K), bs_call(1.0, K, v0 * (T + kVixWindow)));
        o.check(closed, "VIX^2, ell, sigma_loc^2 and calls closed-form");

        const ExactLocalVol src(m);
        const auto loc = vix2_loc_distribution(src, m, T, 16, 2000, 50, derive({kSeed, 0}, 8));
        bool psi_exact = true;
        for (const auto& a : loc.distribution.atoms) psi_exact = psi_exact && close_rel(a.value, v0);
        o.check(psi_exact, "local-vol VIX^2 atoms == sigma0^2");

        const auto rep = gyongy_report(m, src, T + kVixWindow, std::vector<double>{0.9, 1.0, 1.1}, 100000, 100, derive({kSeed, 0}, 9));
        double gz = 0.0;
        for (const auto& row : rep.rows) gz = std::max(gz, std::abs(row.z));
        o.check(gz < 3.0, fmt::format("local-vol calls vs BS max |z| {:.2f}", gz));
        return o;
    });

    fmt::print("acceptance: {} of 8 criteria failed\n", g_failed);
    return g_errors ? 1 : 0;
}
