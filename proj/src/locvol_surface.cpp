#include "convexlab/locvol_surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace convexlab {

namespace {

struct MixtureTerms {
    std::vector<double> log_dens;  // log p_n up to a common additive constant
    bool all_equal = true;
};

// Log-densities in log-moneyness, dropping the -ln x - ln(2 pi)/2 shared by
// every path.
MixtureTerms mixture_terms(const MixtureModel& model, double t, double y)
{
    MixtureTerms out;
    out.log_dens.resize(model.size());
    const double sig0 = model.paths.front().cumulative_variance(t);
    for (std::size_t n = 0; n < model.size(); ++n) {
        const double sig = model.paths[n].cumulative_variance(t);
        out.all_equal = out.all_equal && sig == sig0;
        if (sig > 0.0) {
            const double sd = std::sqrt(sig);
            const double z = y / sd + 0.5 * sd;
            out.log_dens[n] = -0.5 * std::log(sig) - 0.5 * z * z;
        }
    }
    return out;
}

void require_positive_time(double t)
{
    if (!(t > 0.0)) throw std::domain_error("local volatility: t must be positive (degenerate marginal at t = 0)");
}

double mixture_local_var(const MixtureModel& model, double t, double y, Side side)
{
    const MixtureTerms terms = mixture_terms(model, t, y);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    double num = 0.0, den = 0.0;
    if (terms.all_equal) {
        for (std::size_t n = 0; n < model.size(); ++n) {
            const double g = model.paths[n].level(t, side);
            num += model.weights[n] * g * g;
            den += model.weights[n];
        }
        return num / den;
    }
    const double top = *std::max_element(terms.log_dens.begin(), terms.log_dens.end());
    for (std::size_t n = 0; n < model.size(); ++n) {
        const double g = model.paths[n].level(t, side);
        const double w = model.weights[n] * std::exp(terms.log_dens[n] - top);
        num += w * g * g;
        den += w;
        lo = std::min(lo, g * g);
        hi = std::max(hi, g * g);
    }
    return std::clamp(num / den, lo, hi);
}

}  // namespace

std::vector<double> weights_q(const MixtureModel& model, double t, double x)
{
    require_positive_time(t);
    if (!(x > 0.0)) throw std::domain_error("weights_q: x must be positive");
    const MixtureTerms terms = mixture_terms(model, t, std::log(x / model.s0));
    std::vector<double> q(model.size(), 1.0);
    if (terms.all_equal) return q;
    const double top = *std::max_element(terms.log_dens.begin(), terms.log_dens.end());
    double den = 0.0;
    for (std::size_t n = 0; n < model.size(); ++n) den += model.weights[n] * std::exp(terms.log_dens[n] - top);
    for (std::size_t n = 0; n < model.size(); ++n) q[n] = std::exp(terms.log_dens[n] - top) / den;
    return q;
}

double weight_q(const MixtureModel& model, std::size_t n, double t, double x)
{
    if (n >= model.size()) throw std::out_of_range("weight_q: path index out of range");
    return weights_q(model, t, x)[n];
}

double local_var_logm(const MixtureModel& model, double t, double log_moneyness, Side side)
{
    require_positive_time(t);
    return mixture_local_var(model, t, log_moneyness, side);
}

double local_var(const MixtureModel& model, double t, double x, Side side)
{
    if (!(x > 0.0)) throw std::domain_error("local_var: x must be positive");
    return local_var_logm(model, t, std::log(x / model.s0), side);
}

double local_var_from_start(const MixtureModel& model, double t, double log_moneyness, Side side)
{
    if (t < 0.0) throw std::domain_error("local_var_from_start: negative time");
    return mixture_local_var(model, t, log_moneyness, side);
}

// ---------------------------------------------------------------------------

ExactLocalVol::ExactLocalVol(MixtureModel model, double t_max)
    : model_(std::move(model)), t_max_(t_max < 0.0 ? model_.t2() : t_max)
{
}

double ExactLocalVol::value(double t, double log_moneyness, Side side) const
{
    return local_var_from_start(model_, t, log_moneyness, side);
}

std::vector<double> ExactLocalVol::jump_times() const { return model_.breakpoints(t_max_); }

// ---------------------------------------------------------------------------

LocalVolSurface::LocalVolSurface(double s0, std::vector<double> logx_grid, std::vector<SurfaceSegment> segments)
    : s0_(s0), logx_(std::move(logx_grid)), segments_(std::move(segments))
{
    if (logx_.empty()) throw std::invalid_argument("LocalVolSurface: empty log-moneyness grid");
    if (segments_.empty()) throw std::invalid_argument("LocalVolSurface: no time segments");
    for (std::size_t j = 1; j < logx_.size(); ++j)
        if (!(logx_[j] > logx_[j - 1])) throw std::invalid_argument("LocalVolSurface: log-moneyness grid must increase");
    for (const auto& seg : segments_) {
        if (seg.t_nodes.empty()) throw std::invalid_argument("LocalVolSurface: segment without nodes");
        if (seg.values.size() != seg.t_nodes.size() * logx_.size())
            throw std::invalid_argument("LocalVolSurface: segment value count mismatch");
    }
    if (logx_.size() > 1) {
        dx_ = (logx_.back() - logx_.front()) / static_cast<double>(logx_.size() - 1);
        uniform_x_ = true;
        for (std::size_t j = 0; j < logx_.size(); ++j) {
            const double expect = logx_.front() + dx_ * static_cast<double>(j);
            uniform_x_ = uniform_x_ && std::abs(logx_[j] - expect) <= 1e-12 * (1.0 + std::abs(expect));
        }
    }
}

double LocalVolSurface::interp_x(const double* row, double y) const
{
    const std::size_t nx = logx_.size();
    if (nx == 1 || y <= logx_.front()) return row[0];
    if (y >= logx_.back()) return row[nx - 1];
    std::size_t j;
    if (uniform_x_) {
        j = std::min(static_cast<std::size_t>((y - logx_.front()) / dx_), nx - 2);
    } else {
        j = static_cast<std::size_t>(std::upper_bound(logx_.begin(), logx_.end(), y) - logx_.begin()) - 1;
    }
    const double w = (y - logx_[j]) / (logx_[j + 1] - logx_[j]);
    return row[j] + w * (row[j + 1] - row[j]);
}

double LocalVolSurface::row_value(const SurfaceSegment& seg, std::size_t row, double y) const
{
    return interp_x(seg.values.data() + row * logx_.size(), y);
}

namespace {

struct TimeLocation {
    std::size_t segment = 0;
    std::size_t row = 0;
    double w = 0.0;  // weight of row + 1
};

TimeLocation locate(std::span<const SurfaceSegment> segments, double t, Side side)
{
    // right: t_lo <= t < t_hi, left: t_lo < t <= t_hi
    TimeLocation loc;
    std::size_t& k = loc.segment;
    if (side == Side::right) {
        while (k + 1 < segments.size() && t >= segments[k].t_hi) ++k;
    } else {
        while (k + 1 < segments.size() && t > segments[k].t_hi) ++k;
    }
    const auto& tn = segments[k].t_nodes;
    if (t <= tn.front()) return loc;
    if (t >= tn.back()) {
        loc.row = tn.size() - 1;
        return loc;
    }
    loc.row = static_cast<std::size_t>(std::upper_bound(tn.begin(), tn.end(), t) - tn.begin()) - 1;
    loc.w = (t - tn[loc.row]) / (tn[loc.row + 1] - tn[loc.row]);
    return loc;
}

}  // namespace

double LocalVolSurface::value(double t, double y, Side side) const
{
    if (t < t_min() || t > t_max()) throw std::out_of_range("LocalVolSurface: time outside the surface");
    const TimeLocation loc = locate(segments_, t, side);
    const auto& seg = segments_[loc.segment];
    if (loc.w == 0.0) return row_value(seg, loc.row, y);
    const double a = row_value(seg, loc.row, y), b = row_value(seg, loc.row + 1, y);
    return a + loc.w * (b - a);
}

std::vector<double> LocalVolSurface::time_row(double t, Side side) const
{
    if (t < t_min() || t > t_max()) throw std::out_of_range("LocalVolSurface: time outside the surface");
    const TimeLocation loc = locate(segments_, t, side);
    const auto& seg = segments_[loc.segment];
    const std::size_t nx = logx_.size();
    const double* a = seg.values.data() + loc.row * nx;
    std::vector<double> out(a, a + nx);
    if (loc.w == 0.0) return out;
    const double* b = a + nx;
    for (std::size_t j = 0; j < nx; ++j) out[j] = a[j] + loc.w * (b[j] - a[j]);
    return out;
}

std::vector<double> LocalVolSurface::jump_times() const
{
    std::vector<double> out;
    for (std::size_t k = 1; k < segments_.size(); ++k) out.push_back(segments_[k].t_lo);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

void fill_segment(const MixtureModel& model, SurfaceSegment& seg, std::span<const double> logx, bool last_is_left)
{
    seg.values.resize(seg.t_nodes.size() * logx.size());
    for (std::size_t i = 0; i < seg.t_nodes.size(); ++i) {
        const double t = seg.t_nodes[i];
        const Side side = last_is_left && i + 1 == seg.t_nodes.size() && t == seg.t_hi ? Side::left : Side::right;
        for (std::size_t j = 0; j < logx.size(); ++j)
            seg.values[i * logx.size() + j] = local_var_from_start(model, t, logx[j], side);
    }
}

void check_grid(std::span<const double> g, const char* what)
{
    if (g.empty()) throw std::invalid_argument(std::string("surface grid: empty ") + what);
    for (std::size_t i = 1; i < g.size(); ++i)
        if (!(g[i] > g[i - 1])) throw std::invalid_argument(std::string("surface grid: ") + what + " must increase");
}

}  // namespace

LocalVolSurface surface_grid(const MixtureModel& model, std::span<const double> t_grid, std::span<const double> logx_grid)
{
    check_grid(t_grid, "time grid");
    check_grid(logx_grid, "log-moneyness grid");
    if (!(t_grid.front() > 0.0)) throw std::invalid_argument("surface grid: times must be positive");

    std::vector<double> cuts{0.0};
    for (double b : model.breakpoints(t_grid.back())) cuts.push_back(b);
    cuts.push_back(std::max(t_grid.back(), cuts.back()));

    std::vector<SurfaceSegment> segments;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        SurfaceSegment seg{cuts[k], cuts[k + 1], {}, {}};
        const bool last = k + 2 == cuts.size();
        for (double t : t_grid)
            if (t >= seg.t_lo && (t < seg.t_hi || (last && t == seg.t_hi))) seg.t_nodes.push_back(t);
        if (seg.t_nodes.empty()) continue;
        fill_segment(model, seg, logx_grid, false);
        segments.push_back(std::move(seg));
    }
    // stretch segments over the gaps left by empty ones so lookups stay contiguous
    for (std::size_t k = 1; k < segments.size(); ++k) segments[k - 1].t_hi = segments[k].t_lo;
    return LocalVolSurface(model.s0, {logx_grid.begin(), logx_grid.end()}, std::move(segments));
}

LocalVolSurface simulation_surface(const MixtureModel& model, double t_end, std::size_t nodes_per_segment,
                                   std::span<const double> logx_grid)
{
    check_grid(logx_grid, "log-moneyness grid");
    if (!(t_end > 0.0)) throw std::invalid_argument("simulation_surface: t_end must be positive");
    if (nodes_per_segment == 0) throw std::invalid_argument("simulation_surface: need at least one node per segment");

    std::vector<double> cuts{0.0};
    for (double b : dominance_change_times(model, 0.0, t_end)) cuts.push_back(b);
    cuts.push_back(t_end);

    std::vector<SurfaceSegment> segments;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        SurfaceSegment seg{cuts[k], cuts[k + 1], {}, {}};
        const double len = seg.t_hi - seg.t_lo;
        for (std::size_t i = 0; i <= nodes_per_segment; ++i) {
            const double s = static_cast<double>(i) / static_cast<double>(nodes_per_segment);
            seg.t_nodes.push_back(i == nodes_per_segment ? seg.t_hi : seg.t_lo + len * s * s);
        }
        fill_segment(model, seg, logx_grid, true);
        segments.push_back(std::move(seg));
    }
    return LocalVolSurface(model.s0, {logx_grid.begin(), logx_grid.end()}, std::move(segments));
}

std::vector<double> uniform_grid(double lo, double hi, std::size_t n)
{
    if (n == 0) return {};
    if (n == 1) return {lo};
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    g.back() = hi;
    return g;
}

void write_surface_csv(std::ostream& os, const LocalVolSurface& surface)
{
    os << "t,x,sigma_loc_sq\n";
    const auto logx = surface.logx_grid();
    char buf[96];
    for (const auto& seg : surface.segments()) {
        for (std::size_t i = 0; i < seg.t_nodes.size(); ++i) {
            for (std::size_t j = 0; j < logx.size(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", seg.t_nodes[i], surface.s0() * std::exp(logx[j]),
                              seg.values[i * logx.size() + j]);
                os << buf;
            }
        }
    }
}

}  // namespace convexlab
