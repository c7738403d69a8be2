#include "convexlab/scenario.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

namespace convexlab {

namespace {

using nlohmann::ordered_json;

std::string g17(double v) { return fmt::format("{:.17g}", v); }

ordered_json interval(double value, double se, double lo, double hi)
{
    return {{"value", value}, {"se", se}, {"ci_lo", lo}, {"ci_hi", hi}};
}

ordered_json report_json(const ConvexOrderReport& r)
{
    ordered_json j;
    j["verdict"] = to_string(r.verdict);
    j["n_strikes"] = r.gaps.size();
    j["n_significant_positive"] = r.n_significant_positive;
    j["n_significant_negative"] = r.n_significant_negative;
    j["mean_gap"] = interval(r.mean_gap, r.mean_se, r.mean_ci_lo, r.mean_ci_hi);
    j["mean_mismatch"] = r.mean_mismatch;
    j["futures_gap"] = interval(r.futures_gap, r.futures_se, r.futures_ci_lo, r.futures_ci_hi);
    if (!r.note.empty()) j["note"] = r.note;
    return j;
}

ordered_json atoms_json(const Vix2Distribution& d)
{
    ordered_json arr = ordered_json::array();
    for (const auto& a : d.atoms) arr.push_back({{"value", a.value}, {"weight", a.weight}, {"se", a.se}});
    return arr;
}

ordered_json maturity_json(const MaturityReport& m)
{
    const MeanEstimate loc_mean = m.loc.distribution.mean();
    double psi_max = 0.0, psi_min = 0.0;
    if (!m.loc.psi.psi.empty()) {
        psi_min = m.loc.distribution.min_value();
        psi_max = m.loc.distribution.max_value();
    }
    ordered_json j;
    j["T"] = m.T;
    j["vix2_stoch"] = m.vix2_stoch;
    j["vix_stoch"] = std::sqrt(m.vix2_stoch);
    j["ell"] = m.ell;
    j["vix2_loc_mean"] = {{"value", loc_mean.mean}, {"se", loc_mean.se}};
    j["psi_min"] = psi_min;
    j["psi_max"] = psi_max;
    j["futures"] = {{"mean_vix_stoch", m.futures.mean_sqrt_a},
                    {"mean_vix_loc", m.futures.mean_sqrt_b},
                    {"gap", m.futures.gap},
                    {"se", m.futures.se},
                    {"ci_lo", m.futures.ci_lo},
                    {"ci_hi", m.futures.ci_hi}};
    j["convex_order"] = report_json(m.report);
    return j;
}

ordered_json label_json(const LabelPsi& l)
{
    return {{"y", l.y},           {"weight", l.weight}, {"psi", l.psi},
            {"psi_se", l.psi_se}, {"vix2", l.vix2},     {"vix2_se", l.vix2_se}};
}

ordered_json slv_json(const SlvReport& s)
{
    const auto& c = s.calibration;
    ordered_json j;
    j["t2"] = s.t2;
    j["q_minus_hat"] = c.surface.q_minus_hat;
    j["n_particles"] = c.final_particles.size();
    j["n_leverage_rows"] = c.surface.rows.size();
    j["f_hat_range"] = {c.f_min, c.f_max};
    j["inst_var_range"] = {c.min_inst_var, c.max_inst_var};
    j["flatness"] = {{"max_rel_dev", c.flatness.max_rel_dev},
                     {"worst_t", c.flatness.worst_t},
                     {"steps_checked", c.flatness.steps_checked}};
    j["particle_psi"] = {{"minus", c.particle_psi_minus}, {"plus", c.particle_psi_plus}};
    ordered_json calls = ordered_json::array();
    for (const auto& k : c.calls)
        calls.push_back({{"strike", k.strike}, {"particle", k.particle_price}, {"bs", k.bs_price}, {"se", k.se}, {"z", k.z}});
    j["calls_at_t2_plus_tau"] = calls;
    ordered_json spots = ordered_json::array();
    for (const auto& v : s.vix)
        spots.push_back({{"spot", v.spot},
                         {"minus", label_json(v.minus)},
                         {"plus", label_json(v.plus)},
                         {"mean_ratio", v.mean_ratio},
                         {"mean_ratio_se", v.mean_ratio_se}});
    j["vix2_by_spot"] = spots;
    j["provenance"] = to_string(s.distribution.provenance);
    j["vix2_atoms"] = atoms_json(s.distribution);
    j["mean_ratio"] = {{"value", s.mean_ratio}, {"se", s.mean_ratio_se}};
    j["atom_separation"] = {{"value", s.atom_separation}, {"se", s.atom_separation_se}};
    j["convex_order"] = report_json(s.report);
    return j;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body)
{
    std::ostringstream buf;
    body(buf);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw OutputError(fmt::format("cannot open {} for writing", path.string()));
    const std::string s = buf.str();
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
    os.close();
    if (!os) throw OutputError(fmt::format("failed writing {}", path.string()));
}

}  // namespace

std::vector<std::string> emit_outputs(const ReportBundle& bundle, const std::filesystem::path& out_dir)
{
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw OutputError(fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

    std::vector<std::string> manifest{"summary.json"};
    std::vector<std::pair<std::string, std::function<void(std::ostream&)>>> files;

    if (bundle.plot_surface) {
        files.emplace_back("locvol_surface.csv", [&](std::ostream& os) { write_surface_csv(os, *bundle.plot_surface); });
    }
    const bool many = bundle.maturities.size() > 1;
    for (std::size_t k = 0; k < bundle.maturities.size(); ++k) {
        const MaturityReport& m = bundle.maturities[k];
        const std::string sfx = many ? fmt::format("_m{}", k + 1) : "";
        files.emplace_back("psi_curve" + sfx + ".csv", [&m](std::ostream& os) {
            os << "x,psi,se\n";
            for (std::size_t i = 0; i < m.loc.psi.x.size(); ++i)
                os << g17(m.loc.psi.x[i]) << ',' << g17(m.loc.psi.psi[i]) << ',' << g17(m.loc.psi.se[i]) << '\n';
        });
        files.emplace_back("vix2_atoms" + sfx + ".csv", [&m](std::ostream& os) {
            os << "value,weight\n";
            for (const auto& a : m.loc.distribution.atoms) os << g17(a.value) << ',' << g17(a.weight) << '\n';
        });
        files.emplace_back("convex_report" + sfx + ".csv", [&m](std::ostream& os) {
            os << "strike,gap,ci_lo,ci_hi\n";
            for (const auto& g : m.report.gaps)
                os << g17(g.strike) << ',' << g17(g.gap) << ',' << g17(g.ci_lo) << ',' << g17(g.ci_hi) << '\n';
        });
    }
    if (bundle.slv) {
        const SlvReport& s = *bundle.slv;
        files.emplace_back("leverage_surface.csv", [&s](std::ostream& os) { write_leverage_csv(os, s.calibration.surface); });
        files.emplace_back("slv_vix2_atoms.csv", [&s](std::ostream& os) {
            os << "value,weight\n";
            for (const auto& a : s.distribution.atoms) os << g17(a.value) << ',' << g17(a.weight) << '\n';
        });
        files.emplace_back("slv_convex_report.csv", [&s](std::ostream& os) {
            os << "strike,gap,ci_lo,ci_hi\n";
            for (const auto& g : s.report.gaps)
                os << g17(g.strike) << ',' << g17(g.gap) << ',' << g17(g.ci_lo) << ',' << g17(g.ci_hi) << '\n';
        });
    }
    for (const auto& f : files) manifest.push_back(f.first);

    ordered_json summary;
    if (bundle.config) {
        summary["scenario"] = to_string(bundle.config->kind);
        if (bundle.config->seed) summary["seed"] = *bundle.config->seed;
        summary["exact_locvol"] = bundle.config->exact_locvol;
    }
    if (bundle.model) {
        const MixtureModel& m = *bundle.model;
        summary["model"] = {{"s0", m.s0}, {"sigma0", m.sigma0}, {"t1", m.t1}, {"t2", m.t2()}, {"tau", m.tau}, {"n_paths", m.size()}};
    }
    if (!bundle.maturities.empty()) {
        ordered_json arr = ordered_json::array();
        for (const auto& m : bundle.maturities) arr.push_back(maturity_json(m));
        summary["maturities"] = arr;
    }
    if (bundle.slv) summary["slv"] = slv_json(*bundle.slv);
    summary["files"] = manifest;

    write_file(out_dir / "summary.json", [&](std::ostream& os) { os << summary.dump(2) << '\n'; });
    for (const auto& [name, body] : files) write_file(out_dir / name, body);
    return manifest;
}

}  // namespace convexlab
