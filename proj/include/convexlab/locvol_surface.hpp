#pragma once

// Mixture local variance sigma_loc^2(t, x) = sum_n u_n g_n(t)^2 q_n(t, x),
// exact and gridded.

#include <convexlab/model_core.hpp>

#include <iosfwd>
#include <span>
#include <vector>

namespace convexlab {

/// Anything the local-vol simulator can query. Coordinates are time and
/// log-moneyness ln(x / s0).
class LocalVarSource {
public:
    virtual ~LocalVarSource() = default;
    virtual double value(double t, double log_moneyness, Side side) const = 0;
    virtual double s0() const = 0;
    /// Times in (t_min, t_max) where the variance may jump in t.
    virtual std::vector<double> jump_times() const = 0;
    virtual double t_min() const = 0;
    virtual double t_max() const = 0;
};

/// q_n(t, x) = p_n(t, x) / sum_m u_m p_m(t, x). Throws for t <= 0.
double weight_q(const MixtureModel& model, std::size_t n, double t, double x);
std::vector<double> weights_q(const MixtureModel& model, double t, double x);

/// Exact local variance; the side selects g_n(t) or g_n(t-).
double local_var(const MixtureModel& model, double t, double x, Side side = Side::right);
double local_var_logm(const MixtureModel& model, double t, double log_moneyness, Side side = Side::right);

/// Same as local_var_logm but also accepts t = 0 (right limit, all
/// densities coincide there).
double local_var_from_start(const MixtureModel& model, double t, double log_moneyness, Side side);

class ExactLocalVol final : public LocalVarSource {
public:
    explicit ExactLocalVol(MixtureModel model, double t_max = -1.0);

    double value(double t, double log_moneyness, Side side) const override;
    double s0() const override { return model_.s0; }
    std::vector<double> jump_times() const override;
    double t_min() const override { return 0.0; }
    double t_max() const override { return t_max_; }

    const MixtureModel& model() const { return model_; }

private:
    MixtureModel model_;
    double t_max_;
};

/// Grid rows for one time segment [t_lo, t_hi]. A node at t_hi holds the
/// left limit, every other node the right-continuous value.
struct SurfaceSegment {
    double t_lo = 0.0;
    double t_hi = 0.0;
    std::vector<double> t_nodes;
    std::vector<double> values;  // row-major, t_nodes.size() x logx_grid.size()
};

/// Bilinear in (t, ln x/s0) inside each segment; flat in t beyond the
/// segment's outer nodes and flat in x beyond the grid.
class LocalVolSurface final : public LocalVarSource {
public:
    LocalVolSurface(double s0, std::vector<double> logx_grid, std::vector<SurfaceSegment> segments);

    double value(double t, double log_moneyness, Side side) const override;
    double s0() const override { return s0_; }
    std::vector<double> jump_times() const override;
    double t_min() const override { return segments_.front().t_lo; }
    double t_max() const override { return segments_.back().t_hi; }

    /// Values at time t on the x grid (interpolated in t), for callers that
    /// evaluate many spots at one time.
    std::vector<double> time_row(double t, Side side) const;
    /// x interpolation of a row returned by time_row.
    double interp_row(const double* row, double log_moneyness) const { return interp_x(row, log_moneyness); }

    std::span<const double> logx_grid() const { return logx_; }
    std::span<const SurfaceSegment> segments() const { return segments_; }

private:
    double row_value(const SurfaceSegment& seg, std::size_t row, double log_moneyness) const;
    double interp_x(const double* row, double log_moneyness) const;

    double s0_;
    std::vector<double> logx_;
    std::vector<SurfaceSegment> segments_;
    bool uniform_x_ = false;
    double dx_ = 0.0;
};

/// Node-exact surface on the given nodes; nodes are grouped into the time
/// segments delimited by the model's breakpoints.
LocalVolSurface surface_grid(const MixtureModel& model, std::span<const double> t_grid,
                             std::span<const double> logx_grid);

/// Surface for simulation on [0, t_end]: every segment between breakpoints
/// and dominance switches gets `nodes_per_segment` + 1 nodes, clustered
/// quadratically towards its start, including both ends.
LocalVolSurface simulation_surface(const MixtureModel& model, double t_end, std::size_t nodes_per_segment,
                                   std::span<const double> logx_grid);

std::vector<double> uniform_grid(double lo, double hi, std::size_t n);

/// CSV with header t,x,sigma_loc_sq; one row per node, 17 significant digits.
void write_surface_csv(std::ostream& os, const LocalVolSurface& surface);

}  // namespace convexlab
