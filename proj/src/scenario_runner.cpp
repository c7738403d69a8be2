#include "convexlab/scenario.hpp"

#include "convexlab/locvol_surface.hpp"
#include "convexlab/parallel.hpp"

#include <cmath>
#include <memory>

namespace convexlab {

namespace {

constexpr std::uint64_t kCalibrationStream = 1000;
constexpr std::uint64_t kSlvVixStream = 1001;
constexpr std::uint64_t kStartSpotStream = 1002;

LocalVolSurface plot_surface(const MixtureModel& model, double t_first, const NumericsSpec& nm)
{
    std::vector<double> t_grid = uniform_grid(t_first, model.t2(), nm.plot_t_points + 1);
    t_grid.pop_back();
    const std::vector<double> x_grid = uniform_grid(nm.plot_logx_lo, nm.plot_logx_hi, nm.plot_x_points);
    return surface_grid(model, t_grid, x_grid);
}

std::unique_ptr<LocalVarSource> simulation_source(const MixtureModel& model, const ScenarioConfig& cfg)
{
    if (cfg.exact_locvol) return std::make_unique<ExactLocalVol>(model);
    const auto& nm = cfg.numerics;
    const std::vector<double> x_grid = uniform_grid(nm.surface_logx_lo, nm.surface_logx_hi, nm.surface_x_points);
    return std::make_unique<LocalVolSurface>(simulation_surface(model, model.t2(), nm.surface_nodes_per_segment, x_grid));
}

CalibrationConfig calibration_config(const ScenarioConfig& cfg, double t2)
{
    CalibrationConfig cc;
    cc.t2 = t2;
    cc.tau = cfg.model.tau;
    cc.dt = cfg.slv.dt.value_or(cfg.model.tau / 60.0);
    cc.horizon = cfg.slv.horizon.value_or(t2 + 2.0 * cfg.model.tau);
    cc.n_particles = cfg.slv.n_particles;
    cc.sigma0 = cfg.model.sigma0;
    cc.rule.grid_points = cfg.slv.grid_points;
    return cc;
}

SlvReport run_slv(const ScenarioConfig& cfg, double t2, std::span<const double> start_spots, RngSpec root)
{
    const BernoulliSpec spec{cfg.slv.y_minus, cfg.slv.y_plus, cfg.slv.q_minus};
    const double sigma0 = cfg.model.sigma0;
    const double s_start = cfg.slv.s_start.value_or(cfg.model.s0);
    SlvReport rep;
    rep.t2 = t2;
    rep.calibration = run_calibration(calibration_config(cfg, t2), spec, s_start, start_spots, derive(root, kCalibrationStream));

    const RngSpec vix_root = derive(root, kSlvVixStream);
    if (start_spots.empty()) {
        rep.vix.push_back(slv_vix2(rep.calibration.surface, s_start, sigma0, t2, cfg.model.tau, cfg.slv.inner_paths, vix_root));
        rep.distribution = rep.vix.front().distribution;
        rep.mean_ratio = rep.vix.front().mean_ratio;
        rep.mean_ratio_se = rep.vix.front().mean_ratio_se;
    } else {
        SlvVixStrata st = slv_vix2_strata(rep.calibration.surface, rep.calibration.initial_particles, cfg.slv.n_spots,
                                          sigma0, t2, cfg.model.tau, cfg.slv.inner_paths, vix_root);
        rep.vix = std::move(st.strata);
        rep.distribution = std::move(st.distribution);
        rep.mean_ratio = st.mean_ratio;
        rep.mean_ratio_se = st.mean_ratio_se;
    }
    const SlvVixResult& mid = rep.vix[rep.vix.size() / 2];
    rep.atom_separation = std::abs(mid.plus.vix2 - mid.minus.vix2);
    rep.atom_separation_se = std::hypot(mid.plus.vix2_se, mid.minus.vix2_se);
    rep.report = preserved_order_report(rep.distribution, sigma0, cfg.numerics.n_strikes);
    return rep;
}

}  // namespace

ReportBundle run_scenario(const ScenarioConfig& cfg)
{
    if (auto issues = validate_config(cfg); !issues.empty()) throw ConfigError(std::move(issues));
    if (cfg.threads) set_thread_count(cfg.threads);

    ReportBundle bundle;
    bundle.config = cfg;
    const RngSpec root{*cfg.seed, 0};

    if (cfg.kind == ScenarioKind::slv) {
        bundle.slv = run_slv(cfg, *cfg.slv.t2, {}, root);
        return bundle;
    }

    const MixtureModel model = build_model(cfg);
    bundle.model = model;
    bundle.plot_surface = plot_surface(model, cfg.maturities.front(), cfg.numerics);
    const auto source = simulation_source(model, cfg);
    const auto& nm = cfg.numerics;

    for (std::size_t k = 0; k < cfg.maturities.size(); ++k) {
        MaturityReport mr;
        mr.T = cfg.maturities[k];
        mr.vix2_stoch = vix2_stoch_constant(model, mr.T);
        mr.ell = ell_bound(model, mr.T);
        mr.loc = vix2_loc_distribution(*source, model, mr.T, nm.n_quad_nodes, nm.inner_paths, nm.n_steps, derive(root, k));
        const Vix2Distribution stoch = Vix2Distribution::point_mass(mr.vix2_stoch, Provenance::stoch_constant);
        mr.futures = vix_futures(stoch, mr.loc.distribution);
        mr.report = convex_order_report(stoch, mr.loc.distribution, nm.n_strikes, LocalVolRole::b_is_local);
        bundle.maturities.push_back(std::move(mr));
    }

    if (cfg.kind == ScenarioKind::term_structure) {
        const std::vector<double> spots =
            sample_stoch_terminal(model, model.t2(), cfg.slv.n_particles, derive(root, kStartSpotStream));
        bundle.slv = run_slv(cfg, model.t2(), spots, root);
    }
    return bundle;
}

}  // namespace convexlab
