#pragma once

// Particle calibration of dS/S = sigma0 Y / sqrt(E[Y^2 | S_t]) dW started
// at t2, with Y a two-point label drawn once at t2.

#include <convexlab/rng.hpp>
#include <convexlab/sim_engine.hpp>
#include <convexlab/vix_metrics.hpp>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace convexlab {

struct BernoulliSpec {
    double y_minus = 0.8;
    double y_plus = 1.2;
    double q_minus = 0.5;

    bool degenerate() const { return y_minus == y_plus; }
};

/// Checks 0 < y- <= y+, y+/y- <= ratio_cap and 0 < q- < 1. y- == y+ is
/// accepted as the degenerate (GBM) case.
void check_spec(const BernoulliSpec& spec, double ratio_cap = 3.0);

struct ParticleSystem {
    std::vector<double> log_spot;
    std::vector<unsigned char> label_plus;  // 1 for y+, 0 for y-
    double t = 0.0;

    std::size_t size() const { return log_spot.size(); }
    double label_value(std::size_t i, const BernoulliSpec& spec) const
    {
        return label_plus[i] ? spec.y_plus : spec.y_minus;
    }
    double minus_fraction() const;
};

inline constexpr std::size_t kMinParticles = 1000;

/// Particle i draws its label from stream derive(derive(rng, 0), i).
ParticleSystem init_particles(std::size_t n, double s_start, const BernoulliSpec& spec, double t, RngSpec rng);

/// Same, with start spots supplied (one per particle).
ParticleSystem init_particles(std::span<const double> spots, const BernoulliSpec& spec, double t, RngSpec rng);

/// One time slice of F_hat(t, ln s) = E[Y^2 | ln S_t = ln s] on a uniform
/// log-spot grid, flat outside it.
struct LeverageRow {
    double t = 0.0;
    double lo = 0.0;
    double step = 0.0;  // 0 for a single-node (constant) row
    double bandwidth = 0.0;
    std::vector<double> values;

    double value(double log_spot) const;
};

struct BandwidthRule {
    double silverman_factor = 1.06;
    double floor = 1e-4;
    std::size_t grid_points = 201;
    std::size_t bins_per_bandwidth = 20;
    double kernel_cutoff = 8.0;  // in bandwidths
};

/// Nadaraya-Watson regression of Y^2 on ln S with a Gaussian kernel and
/// Silverman bandwidth, computed on a linearly binned cloud. Every value is
/// a convex combination of y-^2 and y+^2. A cloud without dispersion gives
/// the constant empirical E[Y^2].
LeverageRow estimate_leverage(const ParticleSystem& particles, const BernoulliSpec& spec,
                              const BandwidthRule& rule = {});

/// Log-Euler step with variance sigma0^2 y_i^2 / F_hat(ln s_i). The normal
/// for step `step_index` of particle i is block `step_index` of stream
/// derive(derive(rng, 1), i).
void step_particles(ParticleSystem& particles, double dt, double sigma0, const BernoulliSpec& spec,
                    const LeverageRow& leverage, std::uint64_t step_index, RngSpec rng);

struct LeverageSurface {
    BernoulliSpec spec;
    double q_minus_hat = 0.5;  // empirical label frequency of the calibrating cloud
    std::vector<LeverageRow> rows;

    double t_start() const { return rows.front().t; }
    double t_end() const { return rows.back().t; }
    /// Row in force at t (piecewise constant in time, as used by the steps).
    const LeverageRow& row_at(double t) const;
    double value(double t, double log_spot) const { return row_at(t).value(log_spot); }
};

struct FlatnessBin {
    double lo = 0.0;  // log-spot bounds
    double hi = 0.0;
    std::size_t count = 0;
    double ratio = 1.0;  // mean of Y^2 / F_hat over the bin
};

struct FlatnessReport {
    double max_rel_dev = 0.0;   // max over steps and interior bins of |ratio - 1|
    double worst_t = 0.0;
    std::size_t steps_checked = 0;
    std::vector<FlatnessBin> final_bins;
};

/// Interior bins between the 5% and 95% log-spot quantiles, equal counts.
std::vector<FlatnessBin> flatness_bins(const ParticleSystem& particles, const BernoulliSpec& spec,
                                       const LeverageRow& leverage, std::size_t n_bins = 20);

struct CallCheck {
    double strike = 0.0;
    double particle_price = 0.0;
    double bs_price = 0.0;
    double se = 0.0;
    double z = 0.0;
};

struct CalibrationConfig {
    double t2 = 0.0;
    double horizon = 0.0;
    double dt = 0.0;
    double tau = kVixWindow;
    std::size_t n_particles = 200000;
    std::size_t n_flatness_bins = 20;
    double sigma0 = 0.2;
    BandwidthRule rule;
};

struct CalibrationResult {
    LeverageSurface surface;
    ParticleSystem initial_particles;  // the cloud at t2, labels drawn
    ParticleSystem final_particles;
    FlatnessReport flatness;
    double f_min = 0.0;
    double f_max = 0.0;
    double max_inst_var = 0.0;
    double min_inst_var = 0.0;
    /// (1/tau) int_{t2}^{t2+tau} 1/F_hat(t, S_t) dt averaged over each
    /// label's particles (left-point rule on the calibration grid).
    double particle_psi_minus = 0.0;
    double particle_psi_plus = 0.0;
    std::vector<CallCheck> calls;  // particle calls at t2 + tau against BS(sigma0)
};

/// Alternating estimate/step loop from t2 to the horizon; the grid hits
/// t2 + tau exactly. Particles start at `start_spots` (one per particle) or
/// at s_start if empty.
CalibrationResult run_calibration(const CalibrationConfig& cfg, const BernoulliSpec& spec, double s_start,
                                  std::span<const double> start_spots, RngSpec rng);

void write_leverage_csv(std::ostream& os, const LeverageSurface& surface);

struct LabelPsi {
    double y = 0.0;
    double weight = 0.0;
    double psi = 0.0;
    double psi_se = 0.0;
    double vix2 = 0.0;
    double vix2_se = 0.0;
};

struct SlvVixResult {
    double spot = 0.0;
    LabelPsi minus;
    LabelPsi plus;
    double mean_ratio = 0.0;  // q- y-^2 Psi- + q+ y+^2 Psi+
    double mean_ratio_se = 0.0;
    Vix2Distribution distribution;
};

/// VIX^2 at T = t2 given S_T = s: inner simulation per label with the frozen
/// surface on its own calibration grid, accumulating (1/tau) int 1/F_hat
/// (left-point). Label weights are the calibrating cloud's empirical
/// frequencies. The degenerate spec returns sigma0^2 exactly. Label y- uses
/// stream derive(rng, 0), y+ derive(rng, 1).
SlvVixResult slv_vix2(const LeverageSurface& surface, double s, double sigma0, double T, double tau,
                      std::size_t inner_paths, RngSpec rng);

struct SlvVixStrata {
    std::vector<SlvVixResult> strata;  // spot = stratum median, weights absolute
    Vix2Distribution distribution;
    double mean_ratio = 0.0;  // sum of label weight * y^2 * Psi over all strata
    double mean_ratio_se = 0.0;
};

/// VIX^2 at T = t2 for a random S_T: the start cloud is cut into n_strata
/// equal-count log-spot strata, and each (stratum, label) atom is the inner
/// estimate with paths cycling through that cell's own particles, weighted
/// by the cell's share of the cloud. Stratum m uses stream derive(rng, m),
/// split by label as in slv_vix2.
SlvVixStrata slv_vix2_strata(const LeverageSurface& surface, const ParticleSystem& start, std::size_t n_strata,
                             double sigma0, double T, double tau, std::size_t inner_paths, RngSpec rng);

/// A = point mass sigma0^2 (the flat local-vol law), B = the SLV law.
ConvexOrderReport preserved_order_report(const Vix2Distribution& vix2_slv, double sigma0, std::size_t n_strikes = 21);

}  // namespace convexlab
