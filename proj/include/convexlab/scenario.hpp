#pragma once

// Scenario files, orchestration and artifact output for the command-line
// runner.
//
// Config format: `[section]` headers, `key = value` lines, `#` comments.
//
//   [scenario]  kind (simple | general | slv | term_structure), seed,
//               maturities (comma list), threads, out_dir, exact_locvol
//   [model]     s0, sigma0, tau, t1, and either sigma_up / sigma_down
//               (two-path model) or weights plus one `path = (t, v), ...`
//               line per path
//   [numerics]  n_quad_nodes, inner_paths, n_steps, n_strikes,
//               surface_nodes_per_segment, surface_x_points,
//               surface_logx_lo, surface_logx_hi, plot_t_points,
//               plot_x_points, plot_logx_lo, plot_logx_hi
//   [slv]       y_minus, y_plus, q_minus, ratio_cap, n_particles, dt,
//               horizon, inner_paths, grid_points, s_start, t2,
//               n_spots

#include <convexlab/model_core.hpp>
#include <convexlab/slv_calibrator.hpp>
#include <convexlab/vix_metrics.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace convexlab {

enum class ScenarioKind { simple, general, slv, term_structure };

const char* to_string(ScenarioKind k);

struct ModelSpec {
    double s0 = 1.0;
    double sigma0 = 0.2;
    double tau = kVixWindow;
    std::optional<double> t1;  // two-path model: defaults to first maturity + tau / 2
    std::optional<double> sigma_up;
    std::optional<double> sigma_down;
    std::vector<std::vector<std::pair<double, double>>> paths;  // (break, level) pairs
    std::vector<double> weights;

    bool operator==(const ModelSpec&) const = default;
};

struct NumericsSpec {
    std::size_t n_quad_nodes = 64;
    std::size_t inner_paths = 20000;
    std::size_t n_steps = 200;
    std::size_t n_strikes = 21;
    std::size_t surface_nodes_per_segment = 512;
    std::size_t surface_x_points = 601;
    double surface_logx_lo = -1.5;
    double surface_logx_hi = 1.5;
    std::size_t plot_t_points = 41;
    std::size_t plot_x_points = 81;
    double plot_logx_lo = -1.0;
    double plot_logx_hi = 1.0;

    bool operator==(const NumericsSpec&) const = default;
};

struct SlvSpec {
    double y_minus = 0.8;
    double y_plus = 1.2;
    double q_minus = 0.5;
    double ratio_cap = 3.0;
    std::size_t n_particles = 200000;
    std::optional<double> dt;       // default tau / 60
    std::optional<double> horizon;  // default t2 + 2 tau
    std::size_t inner_paths = 20000;
    std::size_t grid_points = 201;
    std::optional<double> s_start;  // slv kind; default model s0
    std::optional<double> t2;       // slv kind only; term_structure takes t2 from the model
    std::size_t n_spots = 5;        // term_structure: start-spot strata for VIX^2 at t2

    bool operator==(const SlvSpec&) const = default;
};

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::simple;
    std::optional<std::uint64_t> seed;
    std::vector<double> maturities;
    unsigned threads = 0;  // 0: CONVEXLAB_THREADS or hardware
    std::string out_dir;
    bool exact_locvol = false;
    ModelSpec model;
    NumericsSpec numerics;
    SlvSpec slv;

    bool operator==(const ScenarioConfig&) const = default;
};

struct ConfigIssue {
    int line = 0;  // 0 when the issue is not tied to a line
    std::string key;
    std::string message;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const { return issues_; }

private:
    std::vector<ConfigIssue> issues_;
};

class OutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses and validates; throws ConfigError listing every problem found.
ScenarioConfig parse_config(std::string_view text);

/// Checks cross-field invariants (also run by parse_config).
std::vector<ConfigIssue> validate_config(const ScenarioConfig& cfg);

/// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const ScenarioConfig& cfg);

/// The mixture model described by the config (simple and general kinds,
/// and the pre-t2 part of term_structure).
MixtureModel build_model(const ScenarioConfig& cfg);

struct MaturityReport {
    double T = 0.0;
    double vix2_stoch = 0.0;
    double ell = 0.0;
    LocVixResult loc;
    FuturesComparison futures;  // A = stochastic, B = local vol
    ConvexOrderReport report;
};

struct SlvReport {
    double t2 = 0.0;
    CalibrationResult calibration;
    std::vector<SlvVixResult> vix;  // one per start stratum (a single one for the slv kind)
    Vix2Distribution distribution;
    double mean_ratio = 0.0;
    double mean_ratio_se = 0.0;
    double atom_separation = 0.0;  // |y+ atom - y- atom| at the middle start spot
    double atom_separation_se = 0.0;
    ConvexOrderReport report;
};

struct ReportBundle {
    std::optional<ScenarioConfig> config;
    std::optional<MixtureModel> model;
    std::optional<LocalVolSurface> plot_surface;
    std::vector<MaturityReport> maturities;
    std::optional<SlvReport> slv;
};

ReportBundle run_scenario(const ScenarioConfig& cfg);

/// Writes the artifacts and returns the file names written, summary.json
/// first. Throws OutputError on I/O failure.
std::vector<std::string> emit_outputs(const ReportBundle& bundle, const std::filesystem::path& out_dir);

}  // namespace convexlab
