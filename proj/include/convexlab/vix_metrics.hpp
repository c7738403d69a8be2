#pragma once

// Squared VIX under the mixture model and under its local-volatility
// counterpart, and the convex-order comparison of the two laws.

#include <convexlab/locvol_surface.hpp>
#include <convexlab/model_core.hpp>
#include <convexlab/rng.hpp>
#include <convexlab/sim_engine.hpp>

#include <string>
#include <vector>

namespace convexlab {

/// Two-sided 99% normal quantile.
inline constexpr double kZ99 = 2.5758293035489004;

/// VIX^2_T, a.s. constant when T < t1: sum_n u_n (1/tau) int_T^{T+tau} g_n^2.
double vix2_stoch_constant(const MixtureModel& model, double T);

/// (1/tau) int_T^{T+tau} sigma_bar(t)^2 dt, the large-spot limit of psi.
double ell_bound(const MixtureModel& model, double T);

/// psi(x) = E[(1/tau) int_T^{T+tau} sigma_loc^2(t, S_t) dt | S_T = x].
MeanEstimate psi_at(const LocalVarSource& source, double T, double tau, double x, std::size_t inner_paths,
                    std::size_t n_steps, RngSpec rng);

struct PsiCurve {
    std::vector<double> x;
    std::vector<double> psi;
    std::vector<double> se;
    std::vector<std::size_t> inner_paths;
    double maturity = 0.0;
    double tau = 0.0;
};

enum class Provenance { stoch_constant, loc_quadrature, slv_two_point, slv_mixture, point_mass };

const char* to_string(Provenance p);

struct Vix2Atom {
    double value = 0.0;
    double weight = 0.0;
    double se = 0.0;  // Monte Carlo error of `value`; 0 for exact atoms
};

struct Vix2Distribution {
    std::vector<Vix2Atom> atoms;
    Provenance provenance = Provenance::point_mass;

    static Vix2Distribution point_mass(double value, Provenance p = Provenance::point_mass);

    MeanEstimate mean() const;  // se pools the atom errors
    double min_value() const;
    double max_value() const;
};

/// Throws if atoms are empty, negative, or weights are not a probability.
void check_distribution(const Vix2Distribution& d);

struct LocVixResult {
    Vix2Distribution distribution;
    PsiCurve psi;
};

/// Outer expectation by Gauss-Hermite over S_T ~ lognormal(sigma0^2 T),
/// exact because every path carries sigma0 before t1 > T. Node j uses
/// stream derive(rng, j).
LocVixResult vix2_loc_distribution(const LocalVarSource& source, const MixtureModel& model, double T,
                                   std::size_t n_quad_nodes, std::size_t inner_paths, std::size_t n_steps,
                                   RngSpec rng);

struct FuturesComparison {
    double mean_sqrt_a = 0.0;
    double mean_sqrt_b = 0.0;
    double gap = 0.0;  // E sqrt(A) - E sqrt(B)
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

/// Atom-weighted square-root means; atom errors propagated by the delta
/// method, 99% interval.
FuturesComparison vix_futures(const Vix2Distribution& a, const Vix2Distribution& b);

enum class Verdict { inverted, preserved, non_rankable, inconclusive, equal };

const char* to_string(Verdict v);

/// Which argument of convex_order_report is the local-volatility law.
enum class LocalVolRole { b_is_local, a_is_local };

struct StrikeGap {
    double strike = 0.0;
    double gap = 0.0;  // E(B - K)+ - E(A - K)+
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

struct ConvexOrderReport {
    std::vector<StrikeGap> gaps;
    double mean_gap = 0.0;  // E B - E A
    double mean_se = 0.0;
    double mean_ci_lo = 0.0;
    double mean_ci_hi = 0.0;
    bool mean_mismatch = false;  // |E B - E A| > 3 pooled SE
    double futures_gap = 0.0;    // E sqrt(B) - E sqrt(A)
    double futures_se = 0.0;
    double futures_ci_lo = 0.0;
    double futures_ci_hi = 0.0;
    int n_significant_positive = 0;
    int n_significant_negative = 0;
    Verdict verdict = Verdict::inconclusive;
    std::string note;
};

/// E(B - K)+ - E(A - K)+ and its standard error.
StrikeGap call_gap(const Vix2Distribution& a, const Vix2Distribution& b, double strike);

/// Lower p-quantile of the equal-weight pool of the two distributions.
double pooled_quantile(const Vix2Distribution& a, const Vix2Distribution& b, double p);

/// Calls on `n_strikes` strikes spanning the pooled 1%-99% quantiles, 99%
/// significance. B dominating A means "inverted" when B is the local-vol
/// law and "preserved" when A is.
ConvexOrderReport convex_order_report(const Vix2Distribution& a, const Vix2Distribution& b,
                                      std::size_t n_strikes = 21, LocalVolRole role = LocalVolRole::b_is_local);

}  // namespace convexlab
