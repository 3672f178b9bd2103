// commands.hpp: subcommand implementations behind the `eseem` executable

#pragma once

#include "eseem/cli/config.hpp"
#include "eseem/cli/io.hpp"
#include "eseem/cli/validation.hpp"

#include <json.hpp>

#include <filesystem>
#include <iostream>

namespace eseem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;

struct CommonOptions {
    std::optional<std::string> config;
    std::optional<std::string> preset;
    std::optional<std::string> out;
    std::optional<std::string> svg;
    std::string format = "csv";
    bool json = false;
};

struct SpectrumOptions {
    std::string input;
    std::optional<std::string> window;
    std::optional<int> zero_pad;
    std::optional<double> threshold;
    std::optional<std::string> detrend;
};

struct SweepOptions {
    std::string param = "theta2";  // theta2 (degrees) or sigma (rad)
    double from = 0.0;
    double to = 0.0;
    int points = 0;
    bool analytic = false;
};

struct FitOptions {
    std::string input;
    std::string model = "exp2cos";
};

struct ValidateOptions {
    std::vector<std::string> inject_failure;
    std::vector<int> criteria;
};

namespace detail {

using json = nlohmann::json;

inline RunConfig resolve_config(const CommonOptions& o) {
    if (o.format != "csv") throw ConfigError("--format", "only csv is supported");
    if (o.config && o.preset) throw ConfigError("", "give either --config or --preset, not both");
    if (o.config) return load_config(*o.config);
    if (o.preset) return preset_config(*o.preset);
    throw ConfigError("", "no configuration: pass --config PATH or --preset NAME");
}

inline std::string mi_label(double m_i) {
    std::ostringstream os;
    if (m_i > 0) os << '+';
    os << m_i;
    return os.str();
}

// Inserts "_mi<label>" before the extension when several lines are written.
inline std::string per_line_path(const std::string& path, double m_i, bool several) {
    if (!several) return path;
    const std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + "_mi" + mi_label(m_i) + p.extension().string())).string();
}

inline void write_file(const std::string& path, const std::function<void(std::ostream&)>& fn) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path + "'");
    fn(f);
    if (!f) throw IoError("write failed for '" + path + "'");
}

inline std::string join(const std::vector<double>& xs) {
    std::string s;
    for (std::size_t k = 0; k < xs.size(); ++k) s += (k ? "," : "") + format_value(xs[k]);
    return s;
}

// Emits one trace per detected line to files or stdout; returns the paths written.
inline int emit_traces(const std::string& command, const RunConfig& cfg, const CommonOptions& o,
                       const std::vector<std::pair<double, EchoTrace>>& traces, const CsvHeader& base,
                       std::ostream& out) {
    const std::optional<std::string> path = o.out ? o.out : cfg.output.trace;
    const std::optional<std::string> svg = o.svg ? o.svg : cfg.output.svg;
    const bool several = traces.size() > 1;
    if (!path && several) throw ConfigError("output.trace", "several detect_m_i values need an output path (--out)");
    json summary = {{"command", command}, {"files", json::array()}};
    for (const auto& [m_i, trace] : traces) {
        CsvHeader h = base;
        h.fields.emplace_back("detect_m_i", format_value(m_i));
        auto writer = [&](std::ostream& os) { write_trace_csv(os, trace, h, cfg.output.residual_column); };
        if (path) {
            const std::string p = per_line_path(*path, m_i, several);
            write_file(p, writer);
            summary["files"].push_back({{"path", p}, {"detect_m_i", m_i}, {"points", trace.size()}});
        } else {
            writer(out);
        }
        if (svg)
            write_file(per_line_path(*svg, m_i, several), [&](std::ostream& os) {
                write_svg(os, trace.tau_s, trace.v, "tau (s)", "V (arb. units)", "echo trace, M_I = " + mi_label(m_i));
            });
    }
    if (o.json && path) out << summary.dump(2) << "\n";
    return kExitOk;
}

inline CsvHeader header_for(const std::string& command, const RunConfig& cfg) {
    CsvHeader h;
    h.command = command;
    h.config_echo = echo_config(cfg);
    h.fields.emplace_back("delta_hz", format_value(delta_hz(cfg.system)));
    return h;
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const IoError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

inline std::vector<Peak> sorted_by_magnitude(const PeakList& peaks) {
    std::vector<Peak> p = peaks.peaks;
    std::sort(p.begin(), p.end(), [](const Peak& a, const Peak& b) { return a.magnitude > b.magnitude; });
    return p;
}

}  // namespace detail

// Numerical echo traces (one per detect_m_i), ensemble-averaged when sigma > 0.
inline int cmd_simulate(const CommonOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const RunConfig cfg = detail::resolve_config(o);
        std::vector<std::pair<double, EchoTrace>> traces;
        for (double m_i : cfg.detect_m_i) {
            const EchoExperiment e = cfg.experiment(m_i);
            EchoTrace t = cfg.ensemble.sigma_rad > 0.0 ? average_trace(e, cfg.distribution(), cfg.ensemble.shared_b1)
                                                       : run_two_pulse_echo(e);
            traces.emplace_back(m_i, std::move(t));
        }
        return detail::emit_traces("simulate", cfg, o, traces, detail::header_for("simulate", cfg), out);
    });
}

// Closed-form traces: the S = 3/2, I = 1 law (closed) or the perfect-refocusing
// sum for arbitrary S (general-s).
inline int cmd_analytic(const CommonOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const RunConfig cfg = detail::resolve_config(o);
        CsvHeader h = detail::header_for("analytic", cfg);
        std::vector<std::pair<double, EchoTrace>> traces;
        const double d = delta_hz(cfg.system);
        if (cfg.analytic_mode == AnalyticMode::Closed) {
            if (cfg.system.s.twice() != 3 || cfg.system.i.twice() != 2)
                throw ConfigError("system.s", "closed-form model covers S = 3/2, I = 1; set `analytic general-s`");
            if (cfg.pulse2.is_composite() || cfg.pulse1.is_composite())
                throw ConfigError("sequence.composite", "closed-form model needs plain rotations");
            const ModulationCoefficients c = coefficients(cfg.pulse2.angle);
            h.fields.emplace_back("model", "closed-form S = 3/2, I = 1");
            h.fields.emplace_back("coefficients (A0,A1,A2)", detail::join({c.a0, c.a1, c.a2}));
            for (double m_i : cfg.detect_m_i) {
                AnalyticEchoModel m;
                m.theta1 = cfg.pulse1.angle;
                m.theta2 = cfg.pulse2.angle;
                m.delta_hz = d;
                m.m_i = m_i;
                m.tau_grid = cfg.tau_grid();
                m.t2_s = cfg.t2_s;
                EchoTrace t = cfg.ensemble.sigma_rad > 0.0 ? average_trace(m, cfg.distribution(), cfg.ensemble.shared_b1)
                                                           : evaluate_analytic(m);
                traces.emplace_back(m_i, std::move(t));
            }
        } else {
            std::vector<double> ascending = general_coefficients(cfg.system.s);
            std::reverse(ascending.begin(), ascending.end());
            h.fields.emplace_back("model", "general-S perfect refocusing (theta1 = pi/2, theta2 = pi assumed)");
            h.fields.emplace_back("general_coefficients (M_S ascending)", detail::join(ascending));
            h.fields.emplace_back("signal", "real part of the complex sum");
            for (double m_i : cfg.detect_m_i) {
                EchoTrace t;
                t.tau_s = cfg.tau_grid();
                for (double tau : t.tau_s) {
                    const Complex v = v_general(cfg.system.s, m_i, tau, d);
                    t.v.push_back(v.real());
                    t.max_imag_residual = std::max(t.max_imag_residual, std::abs(v.imag()));
                }
                if (cfg.t2_s) t = apply_t2(std::move(t), *cfg.t2_s);
                t.set_meta("engine", "analytic-general-s");
                traces.emplace_back(m_i, std::move(t));
            }
        }
        return detail::emit_traces("analytic", cfg, o, traces, h, out);
    });
}

// Spectrum of a trace file plus a peak report (text or JSON).
inline int cmd_spectrum(const SpectrumOptions& s, const CommonOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        OutputConfig defaults;
        if (o.config || o.preset) defaults = detail::resolve_config(o).output;
        if (s.window) defaults.window = parse_window(*s.window);
        if (s.zero_pad) defaults.zero_pad = *s.zero_pad;
        if (s.threshold) defaults.peak_threshold = *s.threshold;
        if (s.detrend) defaults.detrend = parse_detrend(*s.detrend);
        if (defaults.zero_pad < 1) throw ConfigError("--zero-pad", "must be >= 1");
        if (!(defaults.peak_threshold >= 0.0 && defaults.peak_threshold <= 1.0))
            throw ConfigError("--threshold", "must lie in [0, 1]");

        const EchoTrace trace = read_trace_file(s.input);
        const Spectrum spec = spectrum_of(trace, defaults.detrend, defaults.window, defaults.zero_pad);
        const PeakList peaks = find_peaks(spec, defaults.peak_threshold);

        const std::optional<std::string> path = o.out ? o.out : defaults.spectrum;
        if (path) {
            CsvHeader h;
            h.command = "spectrum";
            h.fields = {{"source", s.input},
                        {"detrend", std::string(to_string(defaults.detrend))},
                        {"peak_threshold", format_value(defaults.peak_threshold)}};
            for (const Peak& p : peaks.peaks)
                h.fields.emplace_back("peak", format_value(p.freq_hz) + " Hz, magnitude " + format_value(p.magnitude));
            detail::write_file(*path, [&](std::ostream& os) { write_spectrum_csv(os, spec, h); });
        }
        if (o.svg)
            detail::write_file(*o.svg, [&](std::ostream& os) {
                write_svg(os, spec.freq_hz, spec.magnitude, "modulation frequency (Hz)", "|FT|", "echo spectrum");
            });

        if (o.json) {
            detail::json j = {{"source", s.input},
                              {"window", to_string(defaults.window)},
                              {"zero_pad_factor", defaults.zero_pad},
                              {"detrend", to_string(defaults.detrend)},
                              {"threshold", defaults.peak_threshold},
                              {"method", peaks.method},
                              {"peaks", detail::json::array()}};
            for (const Peak& p : peaks.peaks) j["peaks"].push_back({{"freq_hz", p.freq_hz}, {"magnitude", p.magnitude}});
            if (path) j["spectrum_file"] = *path;
            out << j.dump(2) << "\n";
        } else {
            out << "peaks (" << peaks.size() << ", threshold " << defaults.peak_threshold << " of max, detrend "
                << to_string(defaults.detrend) << "):\n";
            for (const Peak& p : peaks.peaks)
                out << "  " << std::fixed << std::setprecision(1) << p.freq_hz << " Hz  magnitude "
                    << std::setprecision(6) << std::defaultfloat << p.magnitude << "\n";
        }
        return kExitOk;
    });
}

// Grid over theta2 (degrees) or the B1 spread sigma (rad); reports the delta
// and 2 delta line magnitudes of each trace.
inline int cmd_sweep(const SweepOptions& s, const CommonOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const RunConfig base = detail::resolve_config(o);
        if (s.param != "theta2" && s.param != "sigma") throw ConfigError("--param", "expected theta2 or sigma");
        if (s.points < 2) throw ConfigError("--points", "need at least 2 points");
        const double d = delta_hz(base.system);
        const double m_i = base.detect_m_i.front();

        std::ostringstream csv;
        CsvHeader h = detail::header_for("sweep", base);
        h.fields.emplace_back("param", s.param == "theta2" ? "theta2_deg" : "sigma_rad");
        h.fields.emplace_back("path", s.analytic ? "analytic" : std::string(to_string(base.engine)));
        h.fields.emplace_back("detect_m_i", format_value(m_i));
        h.write(csv);
        csv << "value,i_delta,i_2delta,ratio,a0,a1,a2\n";

        for (int k = 0; k < s.points; ++k) {
            const double value = s.from + (s.to - s.from) * k / (s.points - 1);
            RunConfig cfg = base;
            if (s.param == "theta2") {
                const double angle = value * kPi / 180.0;
                if (!(angle > 0.0 && angle <= kTwoPi)) throw ConfigError("--from/--to", "theta2 must lie in (0, 360]");
                cfg.pulse2.angle = angle;
            } else {
                if (!(value >= 0.0)) throw ConfigError("--from/--to", "sigma must be non-negative");
                cfg.ensemble.sigma_rad = value;
            }
            EchoTrace t;
            if (s.analytic) {
                AnalyticEchoModel m;
                m.theta1 = cfg.pulse1.angle;
                m.theta2 = cfg.pulse2.angle;
                m.delta_hz = d;
                m.m_i = m_i;
                m.tau_grid = cfg.tau_grid();
                m.t2_s = cfg.t2_s;
                t = cfg.ensemble.sigma_rad > 0.0 ? average_trace(m, cfg.distribution(), cfg.ensemble.shared_b1)
                                                 : evaluate_analytic(m);
            } else {
                const EchoExperiment e = cfg.experiment(m_i);
                t = cfg.ensemble.sigma_rad > 0.0 ? average_trace(e, cfg.distribution(), cfg.ensemble.shared_b1)
                                                 : run_two_pulse_echo(e);
            }
            const Spectrum spec = spectrum_of(t, cfg.output.detrend, cfg.output.window, cfg.output.zero_pad);
            const double i1 = detail::magnitude_at(spec, d), i2 = detail::magnitude_at(spec, 2.0 * d);
            const ModulationCoefficients c = coefficients(cfg.pulse2.angle);
            csv << format_value(value) << "," << format_value(i1) << "," << format_value(i2) << ","
                << format_value(i2 > 0.0 ? i1 / i2 : INFINITY) << "," << format_value(c.a0) << "," << format_value(c.a1)
                << "," << format_value(c.a2) << "\n";
        }
        if (o.out)
            detail::write_file(*o.out, [&](std::ostream& os) { os << csv.str(); });
        else
            out << csv.str();
        return kExitOk;
    });
}

inline int cmd_fit(const FitOptions& f, const CommonOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const FitModel model = parse_fit_model(f.model);
        const EchoTrace trace = read_trace_file(f.input);
        const FitResult r = fit_decay(trace, model);
        if (o.json) {
            detail::json j = {{"model", to_string(r.model)}, {"t2_s", r.t2_s},           {"v0", r.v0},
                              {"residual_norm", r.residual_norm}, {"iterations", r.iterations},
                              {"converged", r.converged},       {"status", r.status}};
            if (model == FitModel::ExpTwoCosine) {
                j["delta_hz"] = r.delta_hz;
                j["amplitudes"] = {r.amplitudes[0], r.amplitudes[1], r.amplitudes[2]};
            }
            out << j.dump(2) << "\n";
        } else {
            out << "model: " << to_string(r.model) << "\n";
            out << "T2_s: " << format_value(r.t2_s) << "\n";
            if (model == FitModel::ExpTwoCosine) {
                out << "delta_hz: " << format_value(r.delta_hz) << "\n";
                out << "amplitudes (const, delta, 2 delta): " << detail::join({r.amplitudes[0], r.amplitudes[1], r.amplitudes[2]})
                    << "\n";
            } else {
                out << "v0: " << format_value(r.v0) << "\n";
            }
            out << "residual_norm: " << format_value(r.residual_norm) << "\n";
            out << "iterations: " << r.iterations << "\n";
            out << "converged: " << (r.converged ? "yes" : "no") << " (" << r.status << ")\n";
        }
        return r.converged ? kExitOk : kExitFailure;
    });
}

// Runs every check; exit 1 if any check fails other than a documented deviation.
inline int cmd_validate(const ValidateOptions& v, const CommonOptions& o, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        ValidationOptions opts;
        opts.inject_failure.insert(v.inject_failure.begin(), v.inject_failure.end());
        for (int c : v.criteria) {
            if (!criterion_titles().count(c)) throw ConfigError("--criterion", "unknown criterion " + std::to_string(c));
            opts.criteria.insert(c);
        }
        const std::vector<CriterionSummary> results = run_validation(opts);

        std::set<std::string> seen;
        for (const auto& s : results)
            for (const auto& c : s.checks) seen.insert(c.id);
        for (const auto& id : opts.inject_failure)
            if (!seen.count(id)) throw ConfigError("--inject-failure", "unknown check id '" + id + "'");

        std::vector<std::string> failed, deviations;
        for (const auto& s : results)
            for (const auto& c : s.checks) {
                if (c.passed) continue;
                (c.deviation ? deviations : failed).push_back(c.id);
            }

        if (o.json) {
            detail::json j = {{"passed", failed.empty()}, {"failed", failed}, {"deviations", deviations},
                              {"criteria", detail::json::array()}};
            for (const auto& s : results) {
                detail::json cj = {{"number", s.number}, {"title", s.title}, {"passed", s.passed()},
                                   {"seconds", s.seconds}, {"checks", detail::json::array()}};
                for (const auto& c : s.checks)
                    cj["checks"].push_back({{"id", c.id},
                                            {"description", c.description},
                                            {"value", std::isfinite(c.value) ? detail::json(c.value) : detail::json(nullptr)},
                                            {"tolerance", c.tolerance},
                                            {"compare", c.compare == Compare::AtMost ? "<=" : ">="},
                                            {"passed", c.passed},
                                            {"deviation", c.deviation},
                                            {"note", c.note}});
                j["criteria"].push_back(cj);
            }
            out << j.dump(2) << "\n";
        } else {
            out << std::left;
            for (const auto& s : results) {
                out << std::setw(3) << s.number << std::setw(30) << s.title
                    << (s.passed() ? "PASS" : s.only_deviations() ? "DEVIATION" : "FAIL") << "  (" << std::fixed
                    << std::setprecision(2) << s.seconds << " s)\n" << std::defaultfloat;
                for (const auto& c : s.checks) {
                    out << "     " << std::setw(26) << c.id << std::setw(10)
                        << (c.passed ? "ok" : c.deviation ? "deviation" : "FAILED") << std::setprecision(6) << c.value
                        << (c.compare == Compare::AtMost ? " <= " : " >= ") << c.tolerance << "  " << c.description
                        << "\n";
                    if (!c.passed && !c.note.empty()) out << "       note: " << c.note << "\n";
                }
            }
            out << "\nsummary: " << (failed.empty() ? "all checks pass" : std::to_string(failed.size()) + " failed");
            if (!deviations.empty()) out << ", " << deviations.size() << " documented deviation(s)";
            out << "\n";
            if (!failed.empty()) {
                out << "failed checks:";
                for (const auto& id : failed) out << " " << id;
                out << "\n";
            }
        }
        return failed.empty() ? kExitOk : kExitFailure;
    });
}

}  // namespace eseem::cli
