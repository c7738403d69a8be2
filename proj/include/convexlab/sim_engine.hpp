#pragma once

#include <convexlab/locvol_surface.hpp>
#include <convexlab/model_core.hpp>
#include <convexlab/rng.hpp>

#include <cstddef>
#include <span>
#include <vector>

namespace convexlab {

/// Exact draws of S_t under the mixture: path n with probability u_n, then
/// a lognormal with total variance Sigma_n(t). Sample i uses stream
/// derive(rng, i). Accepts t in (0, t2] since Sigma_n is continuous.
std::vector<double> sample_stoch_terminal(const MixtureModel& model, double t, std::size_t n, RngSpec rng);

struct PathEnsemble {
    std::size_t n_paths = 0;
    std::vector<double> terminal_log;  // ln S at t_to
    std::vector<double> avg_variance;  // trapezoidal (1 / (t_to - t_from)) * int sigma_loc^2 dt
    double step = 0.0;                 // nominal step (t_to - t_from) / n_steps
    double t_from = 0.0;
    double t_to = 0.0;
};

inline constexpr int kRefineLevels = 10;

/// Time grid: n_steps uniform steps on [t_from, t_to] merged with the
/// source's jump times, so no step straddles a discontinuity, plus points
/// b + h / 2^k (k = 1..kRefineLevels, h the nominal step) after each jump
/// time b in [t_from, t_to).
std::vector<double> simulation_times(const LocalVarSource& source, double t_from, double t_to, std::size_t n_steps);

/// Log-Euler on L = ln S with drift -sigma_loc^2 / 2. Path i draws its
/// normals from derive(rng, i).
PathEnsemble simulate_locvol(const LocalVarSource& source, double t_from, double x_from, double t_to,
                             std::size_t n_steps, std::size_t n_paths, RngSpec rng);

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
};

/// Sample mean and standard error, reduced in index order.
MeanEstimate sample_mean(std::span<const double> xs);

struct QuadratureNode {
    double x = 0.0;
    double weight = 0.0;
};

/// Physicists' Gauss-Hermite rule (nodes ascending, weights sum to sqrt(pi)).
std::vector<QuadratureNode> gauss_hermite(std::size_t n);

/// Nodes of E[f(S)] for S = s0 exp(-V/2 + sqrt(V) Z); weights sum to 1.
std::vector<QuadratureNode> lognormal_quadrature(double s0, double total_var, std::size_t n_nodes);

struct GyongyRow {
    double strike = 0.0;
    double mc_price = 0.0;
    double closed_form = 0.0;
    double se = 0.0;
    double z = 0.0;
    double rel_err = 0.0;
};

struct GyongyReport {
    double t = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<GyongyRow> rows;
};

/// Local-vol Monte Carlo calls from (0, s0) against the closed-form mixture
/// calls. A zero strike is model-free (price s0) and reported as such.
GyongyReport gyongy_report(const MixtureModel& model, const LocalVarSource& source, double t,
                           std::span<const double> strikes, std::size_t n_paths, std::size_t n_steps, RngSpec rng);

}  // namespace convexlab
