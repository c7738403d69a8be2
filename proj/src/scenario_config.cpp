#include "convexlab/scenario.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <functional>
#include <map>
#include <set>

namespace convexlab {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

bool parse_double(std::string_view s, double& out)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_u64(std::string_view s, std::uint64_t& out)
{
    s = trim(s);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_path(std::string_view s, std::vector<std::pair<double, double>>& out)
{
    out.clear();
    s = trim(s);
    while (!s.empty()) {
        if (s.front() != '(') return false;
        const auto close = s.find(')');
        if (close == std::string_view::npos) return false;
        const auto parts = split(s.substr(1, close - 1), ',');
        double t = 0.0, v = 0.0;
        if (parts.size() != 2 || !parse_double(parts[0], t) || !parse_double(parts[1], v)) return false;
        out.emplace_back(t, v);
        s = trim(s.substr(close + 1));
        if (!s.empty()) {
            if (s.front() != ',') return false;
            s = trim(s.substr(1));
            if (s.empty()) return false;
        }
    }
    return !out.empty();
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

std::string fmt_list(const std::vector<double>& xs)
{
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + fmt_double(xs[i]);
    return out;
}

using LineMap = std::map<std::string, int>;

int line_of(const LineMap& lines, const std::string& key)
{
    const auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
}

bool two_path_model(const ScenarioConfig& cfg) { return cfg.model.paths.empty(); }

std::vector<ConfigIssue> validate(const ScenarioConfig& cfg, const LineMap& lines)
{
    std::vector<ConfigIssue> issues;
    auto add = [&](const std::string& key, std::string msg) {
        issues.push_back({line_of(lines, key), key, std::move(msg)});
    };
    const auto& m = cfg.model;
    const bool slv_only = cfg.kind == ScenarioKind::slv;
    const bool uses_slv = slv_only || cfg.kind == ScenarioKind::term_structure;

    if (!cfg.seed) add("scenario.seed", "missing required key 'seed' in [scenario]");
    if (!(m.s0 > 0.0)) add("model.s0", "s0 must be positive");
    if (!(m.sigma0 > 0.0)) add("model.sigma0", "sigma0 must be positive");
    if (!(m.tau > 0.0)) add("model.tau", "tau must be positive");

    const auto& nm = cfg.numerics;
    if (nm.surface_x_points < 2) add("numerics.surface_x_points", "surface_x_points must be at least 2");
    if (nm.plot_x_points < 2) add("numerics.plot_x_points", "plot_x_points must be at least 2");
    if (nm.plot_t_points < 2) add("numerics.plot_t_points", "plot_t_points must be at least 2");
    if (!(nm.surface_logx_lo < nm.surface_logx_hi))
        add("numerics.surface_logx_lo", "need surface_logx_lo < surface_logx_hi");
    if (!(nm.plot_logx_lo < nm.plot_logx_hi)) add("numerics.plot_logx_lo", "need plot_logx_lo < plot_logx_hi");

    if (slv_only) {
        if (!cfg.maturities.empty())
            add("scenario.maturities", "slv scenarios evaluate VIX at t2 only; remove 'maturities'");
        if (!m.paths.empty() || m.sigma_up || m.sigma_down || m.t1)
            add("model.t1", "slv scenarios take only s0, sigma0 and tau from [model]");
        if (!cfg.slv.t2) add("slv.t2", "missing required key 't2' in [slv]");
        else if (!(*cfg.slv.t2 > 0.0)) add("slv.t2", "t2 must be positive");
    } else {
        if (cfg.maturities.empty()) add("scenario.maturities", "missing required key 'maturities' in [scenario]");
        for (double T : cfg.maturities)
            if (!(T > 0.0)) add("scenario.maturities", fmt::format("maturity {} must be positive", T));
        if (!std::is_sorted(cfg.maturities.begin(), cfg.maturities.end()) ||
            std::adjacent_find(cfg.maturities.begin(), cfg.maturities.end()) != cfg.maturities.end())
            add("scenario.maturities", "maturities must be strictly increasing");

        const bool general_kind = cfg.kind == ScenarioKind::general;
        if (general_kind && m.paths.empty()) add("model.path", "general scenarios need 'path' lines in [model]");
        if (cfg.kind == ScenarioKind::simple && !m.paths.empty())
            add("model.path", "simple scenarios use sigma_up / sigma_down, not 'path' lines");
        if (two_path_model(cfg)) {
            if (!m.sigma_up) add("model.sigma_up", "missing required key 'sigma_up' in [model]");
            if (!m.sigma_down) add("model.sigma_down", "missing required key 'sigma_down' in [model]");
            if (!m.weights.empty()) add("model.weights", "weights apply only with 'path' lines");
        } else {
            if (m.sigma_up || m.sigma_down) add("model.sigma_up", "sigma_up / sigma_down cannot be combined with 'path' lines");
            if (!m.t1) add("model.t1", "missing required key 't1' in [model]");
        }
        if (cfg.slv.t2) add("slv.t2", "t2 is set by the model (t1 + tau) for this scenario kind");

        if (issues.empty()) {
            try {
                const MixtureModel model = build_model(cfg);
                for (const auto& v : validate_model(model).violations) add(two_path_model(cfg) ? "model.sigma_up" : "model.weights", v);
                for (double T : cfg.maturities)
                    if (!(T < model.t1))
                        add("scenario.maturities", fmt::format("maturity {} is not below t1 = {}", T, model.t1));
                if (!cfg.maturities.empty() && cfg.maturities.back() + model.tau > model.t2())
                    add("scenario.maturities", "VIX window exceeds t2");
            } catch (const std::exception& e) {
                add("model.path", e.what());
            }
        }
    }

    if (uses_slv) {
        const auto& s = cfg.slv;
        try {
            check_spec({s.y_minus, s.y_plus, s.q_minus}, s.ratio_cap);
        } catch (const std::exception& e) {
            add("slv.y_minus", e.what());
        }
        if (s.n_particles < kMinParticles)
            add("slv.n_particles", fmt::format("n_particles must be at least {}", kMinParticles));
        if (s.dt && !(*s.dt > 0.0)) add("slv.dt", "dt must be positive");
        if (s.s_start && !(*s.s_start > 0.0)) add("slv.s_start", "s_start must be positive");
        if (s.grid_points < 2) add("slv.grid_points", "grid_points must be at least 2");
        if (s.s_start && !slv_only) add("slv.s_start", "s_start applies to slv scenarios only");
        if (s.horizon) {
            double t2 = 0.0;
            if (slv_only && s.t2) t2 = *s.t2;
            else if (!slv_only && issues.empty()) t2 = build_model(cfg).t2();
            if (!(*s.horizon > t2 + m.tau)) add("slv.horizon", "horizon must exceed t2 + tau");
        }
    }
    return issues;
}

}  // namespace

const char* to_string(ScenarioKind k)
{
    switch (k) {
    case ScenarioKind::simple: return "simple";
    case ScenarioKind::general: return "general";
    case ScenarioKind::slv: return "slv";
    case ScenarioKind::term_structure: return "term_structure";
    }
    return "unknown";
}

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error([&] {
          std::string msg = "invalid config:";
          for (const auto& i : issues)
              msg += i.line ? fmt::format("\n  line {}: {}", i.line, i.message) : fmt::format("\n  {}", i.message);
          return msg;
      }()),
      issues_(std::move(issues))
{
}

std::vector<ConfigIssue> validate_config(const ScenarioConfig& cfg) { return validate(cfg, {}); }

ScenarioConfig parse_config(std::string_view text)
{
    ScenarioConfig cfg;
    std::vector<ConfigIssue> issues;
    LineMap lines;
    std::set<std::string> seen;
    std::string section;
    int line_no = 0;

    using Setter = std::function<bool(std::string_view)>;
    auto real = [](double& dst) { return Setter([&dst](std::string_view v) { return parse_double(v, dst); }); };
    auto opt_real = [](std::optional<double>& dst) {
        return Setter([&dst](std::string_view v) {
            double x = 0.0;
            if (!parse_double(v, x)) return false;
            dst = x;
            return true;
        });
    };
    auto count = [](std::size_t& dst) {
        return Setter([&dst](std::string_view v) {
            std::uint64_t x = 0;
            if (!parse_u64(v, x) || x == 0) return false;
            dst = static_cast<std::size_t>(x);
            return true;
        });
    };

    std::map<std::string, std::map<std::string, std::pair<Setter, const char*>>> table;
    auto& sc = table["scenario"];
    sc["kind"] = {[&](std::string_view v) {
                      for (auto k : {ScenarioKind::simple, ScenarioKind::general, ScenarioKind::slv, ScenarioKind::term_structure})
                          if (v == to_string(k)) {
                              cfg.kind = k;
                              return true;
                          }
                      return false;
                  },
                  "one of simple, general, slv, term_structure"};
    sc["seed"] = {[&](std::string_view v) {
                      std::uint64_t x = 0;
                      if (!parse_u64(v, x)) return false;
                      cfg.seed = x;
                      return true;
                  },
                  "an unsigned 64-bit integer"};
    sc["maturities"] = {[&](std::string_view v) {
                            cfg.maturities.clear();
                            for (auto part : split(v, ',')) {
                                double x = 0.0;
                                if (!parse_double(part, x)) return false;
                                cfg.maturities.push_back(x);
                            }
                            return true;
                        },
                        "a comma-separated list of numbers"};
    sc["threads"] = {[&](std::string_view v) {
                         std::uint64_t x = 0;
                         if (!parse_u64(v, x) || x > 4096) return false;
                         cfg.threads = static_cast<unsigned>(x);
                         return true;
                     },
                     "a thread count (0 for the default)"};
    sc["out_dir"] = {[&](std::string_view v) {
                         cfg.out_dir = std::string(v);
                         return true;
                     },
                     "a path"};
    sc["exact_locvol"] = {[&](std::string_view v) {
                              if (v != "true" && v != "false") return false;
                              cfg.exact_locvol = v == "true";
                              return true;
                          },
                          "true or false"};

    auto& md = table["model"];
    md["s0"] = {real(cfg.model.s0), "a number"};
    md["sigma0"] = {real(cfg.model.sigma0), "a number"};
    md["tau"] = {real(cfg.model.tau), "a number"};
    md["t1"] = {opt_real(cfg.model.t1), "a number"};
    md["sigma_up"] = {opt_real(cfg.model.sigma_up), "a number"};
    md["sigma_down"] = {opt_real(cfg.model.sigma_down), "a number"};
    md["weights"] = {[&](std::string_view v) {
                         cfg.model.weights.clear();
                         for (auto part : split(v, ',')) {
                             double x = 0.0;
                             if (!parse_double(part, x)) return false;
                             cfg.model.weights.push_back(x);
                         }
                         return true;
                     },
                     "a comma-separated list of numbers"};
    md["path"] = {[&](std::string_view v) {
                      std::vector<std::pair<double, double>> p;
                      if (!parse_path(v, p)) return false;
                      cfg.model.paths.push_back(std::move(p));
                      return true;
                  },
                  "a list of (time, level) pairs"};

    auto& nu = table["numerics"];
    auto& n = cfg.numerics;
    nu["n_quad_nodes"] = {count(n.n_quad_nodes), "a positive integer"};
    nu["inner_paths"] = {count(n.inner_paths), "a positive integer"};
    nu["n_steps"] = {count(n.n_steps), "a positive integer"};
    nu["n_strikes"] = {count(n.n_strikes), "a positive integer"};
    nu["surface_nodes_per_segment"] = {count(n.surface_nodes_per_segment), "a positive integer"};
    nu["surface_x_points"] = {count(n.surface_x_points), "a positive integer"};
    nu["surface_logx_lo"] = {real(n.surface_logx_lo), "a number"};
    nu["surface_logx_hi"] = {real(n.surface_logx_hi), "a number"};
    nu["plot_t_points"] = {count(n.plot_t_points), "a positive integer"};
    nu["plot_x_points"] = {count(n.plot_x_points), "a positive integer"};
    nu["plot_logx_lo"] = {real(n.plot_logx_lo), "a number"};
    nu["plot_logx_hi"] = {real(n.plot_logx_hi), "a number"};

    auto& sl = table["slv"];
    auto& s = cfg.slv;
    sl["y_minus"] = {real(s.y_minus), "a number"};
    sl["y_plus"] = {real(s.y_plus), "a number"};
    sl["q_minus"] = {real(s.q_minus), "a number"};
    sl["ratio_cap"] = {real(s.ratio_cap), "a number"};
    sl["n_particles"] = {count(s.n_particles), "a positive integer"};
    sl["dt"] = {opt_real(s.dt), "a number"};
    sl["horizon"] = {opt_real(s.horizon), "a number"};
    sl["inner_paths"] = {count(s.inner_paths), "a positive integer"};
    sl["grid_points"] = {count(s.grid_points), "a positive integer"};
    sl["s_start"] = {opt_real(s.s_start), "a number"};
    sl["t2"] = {opt_real(s.t2), "a number"};
    sl["n_spots"] = {count(s.n_spots), "a positive integer"};

    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        const std::string_view ln = trim(raw);
        if (ln.empty()) continue;
        if (ln.front() == '[') {
            if (ln.back() != ']') {
                issues.push_back({line_no, "", fmt::format("malformed section header '{}'", ln)});
                continue;
            }
            section = std::string(trim(ln.substr(1, ln.size() - 2)));
            if (!table.count(section)) {
                issues.push_back({line_no, section, fmt::format("unknown section [{}]", section)});
                section = "#invalid";
            }
            continue;
        }
        const auto eq = ln.find('=');
        if (eq == std::string_view::npos) {
            issues.push_back({line_no, "", fmt::format("expected 'key = value', got '{}'", ln)});
            continue;
        }
        const std::string key(trim(ln.substr(0, eq)));
        const std::string_view value = trim(ln.substr(eq + 1));
        if (section == "#invalid") continue;
        if (section.empty()) {
            issues.push_back({line_no, key, fmt::format("key '{}' appears before any section", key)});
            continue;
        }
        auto& keys = table[section];
        const auto it = keys.find(key);
        const std::string full = section + "." + key;
        if (it == keys.end()) {
            issues.push_back({line_no, full, fmt::format("unknown key '{}' in [{}]", key, section)});
            continue;
        }
        if (full != "model.path" && !seen.insert(full).second) {
            issues.push_back({line_no, full, fmt::format("duplicate key '{}' in [{}]", key, section)});
            continue;
        }
        if (!lines.count(full)) lines[full] = line_no;
        if (!it->second.first(value))
            issues.push_back({line_no, full, fmt::format("'{}' expects {}, got '{}'", key, it->second.second, value)});
    }

    if (issues.empty()) issues = validate(cfg, lines);
    if (!issues.empty()) throw ConfigError(std::move(issues));
    return cfg;
}

std::string to_text(const ScenarioConfig& cfg)
{
    std::string out;
    auto kv = [&out](const char* key, const std::string& v) { out += fmt::format("{} = {}\n", key, v); };
    auto opt = [&](const char* key, const std::optional<double>& v) {
        if (v) kv(key, fmt_double(*v));
    };

    out += "[scenario]\n";
    kv("kind", to_string(cfg.kind));
    if (cfg.seed) kv("seed", std::to_string(*cfg.seed));
    if (!cfg.maturities.empty()) kv("maturities", fmt_list(cfg.maturities));
    kv("threads", std::to_string(cfg.threads));
    if (!cfg.out_dir.empty()) kv("out_dir", cfg.out_dir);
    kv("exact_locvol", cfg.exact_locvol ? "true" : "false");

    const auto& m = cfg.model;
    out += "\n[model]\n";
    kv("s0", fmt_double(m.s0));
    kv("sigma0", fmt_double(m.sigma0));
    kv("tau", fmt_double(m.tau));
    opt("t1", m.t1);
    opt("sigma_up", m.sigma_up);
    opt("sigma_down", m.sigma_down);
    if (!m.weights.empty()) kv("weights", fmt_list(m.weights));
    for (const auto& p : m.paths) {
        std::string v;
        for (std::size_t i = 0; i < p.size(); ++i)
            v += fmt::format("{}({}, {})", i ? ", " : "", fmt_double(p[i].first), fmt_double(p[i].second));
        kv("path", v);
    }

    const auto& n = cfg.numerics;
    out += "\n[numerics]\n";
    kv("n_quad_nodes", std::to_string(n.n_quad_nodes));
    kv("inner_paths", std::to_string(n.inner_paths));
    kv("n_steps", std::to_string(n.n_steps));
    kv("n_strikes", std::to_string(n.n_strikes));
    kv("surface_nodes_per_segment", std::to_string(n.surface_nodes_per_segment));
    kv("surface_x_points", std::to_string(n.surface_x_points));
    kv("surface_logx_lo", fmt_double(n.surface_logx_lo));
    kv("surface_logx_hi", fmt_double(n.surface_logx_hi));
    kv("plot_t_points", std::to_string(n.plot_t_points));
    kv("plot_x_points", std::to_string(n.plot_x_points));
    kv("plot_logx_lo", fmt_double(n.plot_logx_lo));
    kv("plot_logx_hi", fmt_double(n.plot_logx_hi));

    const auto& s = cfg.slv;
    out += "\n[slv]\n";
    kv("y_minus", fmt_double(s.y_minus));
    kv("y_plus", fmt_double(s.y_plus));
    kv("q_minus", fmt_double(s.q_minus));
    kv("ratio_cap", fmt_double(s.ratio_cap));
    kv("n_particles", std::to_string(s.n_particles));
    opt("dt", s.dt);
    opt("horizon", s.horizon);
    kv("inner_paths", std::to_string(s.inner_paths));
    kv("grid_points", std::to_string(s.grid_points));
    opt("s_start", s.s_start);
    opt("t2", s.t2);
    kv("n_spots", std::to_string(s.n_spots));
    return out;
}

MixtureModel build_model(const ScenarioConfig& cfg)
{
    const auto& m = cfg.model;
    if (m.paths.empty()) {
        if (!m.sigma_up || !m.sigma_down) throw std::invalid_argument("two-path model needs sigma_up and sigma_down");
        if (!m.t1 && cfg.maturities.empty()) throw std::invalid_argument("t1 defaults to the first maturity + tau / 2");
        const double t1 = m.t1 ? *m.t1 : cfg.maturities.front() + 0.5 * m.tau;
        return coin_toss_model(m.sigma0, *m.sigma_up, *m.sigma_down, t1, m.tau, m.s0);
    }
    if (!m.t1) throw std::invalid_argument("general model needs t1");
    MixtureModel model;
    model.sigma0 = m.sigma0;
    model.t1 = *m.t1;
    model.tau = m.tau;
    model.s0 = m.s0;
    model.weights = m.weights;
    for (std::size_t k = 0; k < m.paths.size(); ++k) {
        std::vector<double> br, lv;
        for (const auto& [t, v] : m.paths[k]) {
            br.push_back(t);
            lv.push_back(v);
        }
        try {
            model.paths.emplace_back(std::move(br), std::move(lv));
        } catch (const std::exception& e) {
            throw std::invalid_argument(fmt::format("path {}: {}", k + 1, e.what()));
        }
    }
    return model;
}

}  // namespace convexlab
