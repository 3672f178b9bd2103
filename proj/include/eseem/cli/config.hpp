// config.hpp: INFO-format run configuration parsed into a validated RunConfig

#pragma once

#include "eseem/ensemble.hpp"
#include "eseem/spectral.hpp"

#include <boost/property_tree/info_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace eseem::cli {

namespace pt = boost::property_tree;

// Schema violation; `path` is the dotted location of the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

enum class AnalyticMode { Closed, GeneralSpin };

struct EnsembleConfig {
    double sigma_rad = 0.0;
    int nodes = kDefaultQuadratureNodes;
    bool shared_b1 = false;
    QuadratureRule rule = QuadratureRule::GaussHermite;
    std::optional<std::uint64_t> seed;
    int samples = 4096;
};

struct OutputConfig {
    std::optional<std::string> trace;
    std::optional<std::string> spectrum;
    std::optional<std::string> svg;
    bool residual_column = false;
    Window window = Window::Hann;
    int zero_pad = kDefaultZeroPad;
    double peak_threshold = kDefaultPeakThreshold;
    Detrend detrend = Detrend::Exponential;
};

struct RunConfig {
    SpinSystemParams system = nc60_preset();
    std::optional<double> f_mw_hz;
    std::optional<double> resonance_offset_hz;
    PulseSpec pulse1 = PulseSpec::ideal(kPi / 2);
    PulseSpec pulse2 = PulseSpec::ideal(kPi);
    bool phase_cycle = true;
    double tau_start_s = 0.0;
    double tau_stop_s = 0.0;
    int tau_points = 0;
    EnsembleConfig ensemble;
    Engine engine = Engine::AverageHamiltonian;
    int steps_per_period = kDefaultStepsPerPeriod;
    std::vector<double> detect_m_i{1.0};
    std::optional<double> t2_s;
    AnalyticMode analytic_mode = AnalyticMode::Closed;
    OutputConfig output;
    pt::ptree tree;  // parsed source, echoed into output headers

    std::vector<double> tau_grid() const { return uniform_grid(tau_start_s, tau_stop_s, tau_points); }

    AngleDistribution distribution() const {
        AngleDistribution d = AngleDistribution::gaussian(pulse2_nominal_angle(), ensemble.sigma_rad, ensemble.nodes);
        d.rule = ensemble.rule;
        d.seed = ensemble.seed;
        d.samples = ensemble.samples;
        if (ensemble.sigma_rad == 0.0) d.kind = DistributionKind::Point;
        return d;
    }

    // Nominal refocusing angle; the B1 spread is relative to it and scales
    // every composite segment alike.
    double pulse2_nominal_angle() const { return pulse2.angle; }

    EchoExperiment experiment(double m_i) const {
        EchoExperiment e;
        e.system = system;
        if (f_mw_hz) {
            e.system.f_mw_hz = *f_mw_hz;
            e.resonance_offset_hz.reset();
        } else {
            e.resonance_offset_hz = resonance_offset_hz.value_or(0.0);
        }
        e.pulse1 = pulse1;
        e.pulse2 = pulse2;
        e.phase_cycle = phase_cycle;
        e.tau_grid = tau_grid();
        e.detect_m_i = m_i;
        e.engine = engine;
        e.t2_s = t2_s;
        e.steps_per_period = steps_per_period;
        return e;
    }
};

namespace detail {

inline double to_number(const std::string& path, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw ConfigError(path, "expected a number, got '" + text + "'");
    }
    if (used != text.size()) throw ConfigError(path, "expected a number, got '" + text + "'");
    if (!std::isfinite(v)) throw ConfigError(path, "value must be finite");
    return v;
}

// "1.5" or "3/2".
inline SpinQuantumNumber to_spin(const std::string& path, const std::string& text) {
    double value = 0.0;
    if (const auto slash = text.find('/'); slash != std::string::npos)
        value = to_number(path, text.substr(0, slash)) / to_number(path, text.substr(slash + 1));
    else
        value = to_number(path, text);
    try {
        return SpinQuantumNumber::from_value(value);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

inline bool to_bool(const std::string& path, const std::string& text) {
    if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
    if (text == "false" || text == "no" || text == "off" || text == "0") return false;
    throw ConfigError(path, "expected true/false, got '" + text + "'");
}

inline int to_int(const std::string& path, const std::string& text) {
    const double v = to_number(path, text);
    if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError(path, "expected an integer, got '" + text + "'");
    return static_cast<int>(v);
}

// Block view that tracks which keys were consumed so leftovers can be reported.
class Block {
public:
    Block(const pt::ptree& tree, std::string path) : tree_(tree), path_(std::move(path)) {}

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) const { return tree_.find(key) != tree_.not_found(); }

    const pt::ptree* child(const std::string& key) {
        const auto it = tree_.find(key);
        if (it == tree_.not_found()) return nullptr;
        seen_.insert(key);
        return &it->second;
    }

    std::optional<std::string> text(const std::string& key) {
        const pt::ptree* c = child(key);
        if (!c) return std::nullopt;
        if (!c->empty()) throw ConfigError(key_path(key), "expected a value, found a block");
        return c->data();
    }

    std::string required_text(const std::string& key) {
        auto t = text(key);
        if (!t) throw ConfigError(key_path(key), "missing required field");
        return *t;
    }

    std::optional<double> number(const std::string& key) {
        auto t = text(key);
        if (!t) return std::nullopt;
        return to_number(key_path(key), *t);
    }

    double required_number(const std::string& key) { return to_number(key_path(key), required_text(key)); }

    void finish() const {
        std::set<std::string> keys;
        for (const auto& [k, v] : tree_) keys.insert(k);
        for (const auto& k : keys)
            if (!seen_.count(k)) throw ConfigError(key_path(k), "unknown field");
        for (const auto& k : keys)
            if (tree_.count(k) > 1 && k != "segment") throw ConfigError(key_path(k), "field given more than once");
    }

private:
    const pt::ptree& tree_;
    std::string path_;
    std::set<std::string> seen_;
};

inline const pt::ptree& required_block(Block& root, const std::string& key) {
    const pt::ptree* c = root.child(key);
    if (!c) throw ConfigError(key, "missing required block");
    if (c->empty()) throw ConfigError(key, "expected a block");
    return *c;
}

inline PulseModel parse_model(const std::string& path, const std::string& text) {
    if (text == "ideal" || text == "ideal-instantaneous") return PulseModel::Ideal;
    if (text == "finite" || text == "finite-duration") return PulseModel::FiniteDuration;
    throw ConfigError(path, "unknown pulse model '" + text + "'");
}

inline double degrees(double deg) { return deg * kPi / 180.0; }

inline void parse_system(const pt::ptree& tree, RunConfig& cfg) {
    Block b(tree, "system");
    SpinSystemParams& p = cfg.system;
    if (auto s = b.text("s")) p.s = to_spin("system.s", *s);
    if (auto i = b.text("i")) p.i = to_spin("system.i", *i);
    p.a_hz = b.required_number("a_hz");
    p.f_e_hz = b.required_number("f_e_hz");
    if (!(p.f_e_hz > 0.0)) throw ConfigError("system.f_e_hz", "must be positive");
    p.g = b.number("g").value_or(2.0036);
    if (!(p.g > 0.0)) throw ConfigError("system.g", "must be positive");
    p.f_i_hz = b.number("f_i_hz").value_or(default_nitrogen_frequency(p.f_e_hz, p.g));
    cfg.f_mw_hz = b.number("f_mw_hz");
    cfg.resonance_offset_hz = b.number("resonance_offset_hz");
    if (cfg.f_mw_hz.has_value() == cfg.resonance_offset_hz.has_value())
        throw ConfigError("system", "give exactly one of f_mw_hz / resonance_offset_hz");
    if (cfg.f_mw_hz && !(*cfg.f_mw_hz > 0.0)) throw ConfigError("system.f_mw_hz", "must be positive");
    if (cfg.f_mw_hz) p.f_mw_hz = *cfg.f_mw_hz;
    b.finish();
}

inline std::vector<PulseSegment> parse_composite(Block& b) {
    const pt::ptree* c = b.child("composite");
    if (!c) return {};
    const std::string path = "sequence.composite";
    if (c->empty()) {
        const std::string name = c->data();
        if (name == "none") return {};
        if (name == "xyx" || name == "default") return PulseSpec::composite_pi().composite;
        throw ConfigError(path, "unknown composite '" + name + "' (use xyx, none, or segment blocks)");
    }
    std::vector<PulseSegment> segs;
    for (const auto& [key, node] : *c) {
        if (key != "segment") throw ConfigError(path + "." + key, "unknown field");
        Block seg(node, path + ".segment");
        const double angle = degrees(seg.required_number("angle_deg"));
        const double phase = degrees(seg.number("phase_deg").value_or(0.0));
        seg.finish();
        segs.push_back({angle, phase});
    }
    if (segs.empty()) throw ConfigError(path, "composite list must be non-empty");
    return segs;
}

inline void parse_sequence(const pt::ptree& tree, RunConfig& cfg) {
    Block b(tree, "sequence");
    const double theta1 = degrees(b.required_number("theta1_deg"));
    const double theta2 = degrees(b.required_number("theta2_deg"));
    const double phase = degrees(b.number("phase_deg").value_or(0.0));
    const auto p1 = b.number("phase1_deg"), p2 = b.number("phase2_deg");
    const double phase1 = p1 ? degrees(*p1) : phase;
    const double phase2 = p2 ? degrees(*p2) : phase;
    const PulseModel model = parse_model("sequence.model", b.text("model").value_or("ideal"));
    const std::vector<PulseSegment> composite = parse_composite(b);
    if (auto pc = b.text("phase_cycle")) cfg.phase_cycle = to_bool("sequence.phase_cycle", *pc);

    // Durations are read either way so ideal-model configs may keep them.
    const auto d1 = b.number("pulse1_duration_s");
    const auto d2 = b.number("pulse2_duration_s");
    if (model == PulseModel::Ideal) {
        cfg.pulse1 = PulseSpec::ideal(theta1, phase1);
        cfg.pulse2 = PulseSpec::ideal(theta2, phase2);
    } else {
        if (!d1) throw ConfigError("sequence.pulse1_duration_s", "finite model requires a duration");
        if (!d2) throw ConfigError("sequence.pulse2_duration_s", "finite model requires a duration");
        cfg.pulse1 = PulseSpec::finite(theta1, *d1, phase1);
        cfg.pulse2 = PulseSpec::finite(theta2, *d2, phase2);
    }
    // Segments replace the plain rotation; theta2 stays the nominal angle that
    // ensemble spreads are measured against.
    if (!composite.empty()) cfg.pulse2.composite = composite;
    b.finish();
    for (const auto& [name, pulse] : {std::pair{"pulse1", &cfg.pulse1}, std::pair{"pulse2", &cfg.pulse2}}) {
        try {
            pulse->validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("sequence.") + name, e.what());
        }
    }
}

inline void parse_tau(const pt::ptree& tree, RunConfig& cfg) {
    Block b(tree, "tau");
    cfg.tau_start_s = b.number("start_s").value_or(0.0);
    cfg.tau_stop_s = b.required_number("stop_s");
    cfg.tau_points = to_int("tau.points", b.required_text("points"));
    if (cfg.tau_points < 2) throw ConfigError("tau.points", "need at least 2 points");
    if (!(cfg.tau_start_s >= 0.0)) throw ConfigError("tau.start_s", "must be non-negative");
    if (!(cfg.tau_stop_s > cfg.tau_start_s)) throw ConfigError("tau.stop_s", "must exceed start_s");
    b.finish();
}

inline void parse_ensemble(const pt::ptree& tree, RunConfig& cfg) {
    Block b(tree, "ensemble");
    EnsembleConfig& e = cfg.ensemble;
    e.sigma_rad = b.number("sigma_rad").value_or(0.0);
    if (!(e.sigma_rad >= 0.0)) throw ConfigError("ensemble.sigma_rad", "must be non-negative");
    if (auto n = b.text("nodes")) e.nodes = to_int("ensemble.nodes", *n);
    if (e.nodes < 3 || e.nodes % 2 == 0) throw ConfigError("ensemble.nodes", "must be odd and >= 3");
    if (auto s = b.text("shared_b1")) e.shared_b1 = to_bool("ensemble.shared_b1", *s);
    if (auto r = b.text("rule")) {
        if (*r == "gauss-hermite") e.rule = QuadratureRule::GaussHermite;
        else if (*r == "monte-carlo") e.rule = QuadratureRule::MonteCarlo;
        else throw ConfigError("ensemble.rule", "unknown rule '" + *r + "'");
    }
    if (auto s = b.text("seed")) {
        const int v = to_int("ensemble.seed", *s);
        if (v < 0) throw ConfigError("ensemble.seed", "must be non-negative");
        e.seed = static_cast<std::uint64_t>(v);
    }
    if (auto s = b.text("samples")) e.samples = to_int("ensemble.samples", *s);
    if (e.rule == QuadratureRule::MonteCarlo && !e.seed)
        throw ConfigError("ensemble.seed", "monte-carlo rule requires a seed");
    if (e.samples < 1) throw ConfigError("ensemble.samples", "must be positive");
    b.finish();
}

inline void parse_output(const pt::ptree& tree, RunConfig& cfg) {
    Block b(tree, "output");
    OutputConfig& o = cfg.output;
    o.trace = b.text("trace");
    o.spectrum = b.text("spectrum");
    o.svg = b.text("svg");
    if (auto f = b.text("format"); f && *f != "csv") throw ConfigError("output.format", "only csv is supported");
    if (auto r = b.text("residual_column")) o.residual_column = to_bool("output.residual_column", *r);
    try {
        if (auto w = b.text("window")) o.window = parse_window(*w);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("output.window", e.what());
    }
    try {
        if (auto d = b.text("detrend")) o.detrend = parse_detrend(*d);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("output.detrend", e.what());
    }
    if (auto z = b.text("zero_pad")) o.zero_pad = to_int("output.zero_pad", *z);
    if (o.zero_pad < 1) throw ConfigError("output.zero_pad", "must be >= 1");
    if (auto t = b.number("peak_threshold")) o.peak_threshold = *t;
    if (!(o.peak_threshold >= 0.0 && o.peak_threshold <= 1.0))
        throw ConfigError("output.peak_threshold", "must lie in [0, 1]");
    b.finish();
}

}  // namespace detail

// Parses an INFO-format document (nested `key value` pairs and `{}` blocks,
// ';' comments). Required blocks: system, sequence, tau.
inline RunConfig parse_config(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_info(in, tree);
    } catch (const pt::info_parser_error& e) {
        throw ConfigError("", "parse error at line " + std::to_string(e.line()) + ": " + e.message());
    }
    RunConfig cfg;
    cfg.tree = tree;
    detail::Block root(tree, "");
    detail::parse_system(detail::required_block(root, "system"), cfg);
    detail::parse_sequence(detail::required_block(root, "sequence"), cfg);
    detail::parse_tau(detail::required_block(root, "tau"), cfg);
    if (const pt::ptree* e = root.child("ensemble")) detail::parse_ensemble(*e, cfg);
    if (const pt::ptree* o = root.child("output")) detail::parse_output(*o, cfg);

    if (auto e = root.text("engine")) {
        try {
            cfg.engine = parse_engine(*e);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError("engine", ex.what());
        }
    }
    if (auto s = root.text("steps_per_period")) {
        cfg.steps_per_period = detail::to_int("steps_per_period", *s);
        if (cfg.steps_per_period < kMinStepsPerPeriod)
            throw ConfigError("steps_per_period", "must be >= " + std::to_string(kMinStepsPerPeriod));
    }
    if (auto m = root.text("detect_m_i")) {
        cfg.detect_m_i.clear();
        // INFO values are single tokens: "-1,0" or a quoted "-1 0".
        std::string list = *m;
        std::replace(list.begin(), list.end(), ',', ' ');
        std::istringstream items(list);
        std::string item;
        while (items >> item) {
            const double v = detail::to_number("detect_m_i", item);
            try {
                cfg.system.i.index_of(v);
            } catch (const std::invalid_argument&) {
                throw ConfigError("detect_m_i", "'" + item + "' is not a valid projection for system.i");
            }
            cfg.detect_m_i.push_back(v);
        }
        if (cfg.detect_m_i.empty()) throw ConfigError("detect_m_i", "empty list");
    }
    if (auto t = root.number("t2_s")) {
        if (!(*t > 0.0)) throw ConfigError("t2_s", "must be positive");
        cfg.t2_s = *t;
    }
    if (auto m = root.text("analytic")) {
        if (*m == "closed") cfg.analytic_mode = AnalyticMode::Closed;
        else if (*m == "general-s") cfg.analytic_mode = AnalyticMode::GeneralSpin;
        else throw ConfigError("analytic", "expected closed or general-s, got '" + *m + "'");
    }
    root.finish();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

// Canonical INFO rendering of the parsed tree (for output headers).
inline std::string echo_config(const RunConfig& cfg) {
    std::ostringstream os;
    pt::write_info(os, cfg.tree, pt::info_writer_make_settings(' ', 4));
    return os.str();
}

// Built-in presets: N@C60 in CS2 at X band.
inline const std::map<std::string, std::string>& builtin_presets() {
    static const std::map<std::string, std::string> presets{
        {"nc60", R"(; N@C60 outer hyperfine line M_I = -1, realistic B1 spread and T2
system
{
    s 3/2
    i 1
    a_hz 15.8e6
    f_e_hz 9.67e9
    g 2.0036
    resonance_offset_hz 0
}
sequence
{
    theta1_deg 90
    theta2_deg 180
    model ideal
}
tau
{
    start_s 0
    stop_s 200e-6
    points 512
}
ensemble
{
    sigma_rad 0.31
    nodes 41
}
engine average-hamiltonian
detect_m_i -1
t2_s 210e-6
)"},
    };
    return presets;
}

inline RunConfig preset_config(const std::string& name) {
    const auto& presets = builtin_presets();
    const auto it = presets.find(name);
    if (it == presets.end()) throw ConfigError("preset", "unknown preset '" + name + "'");
    return parse_config(it->second);
}

}  // namespace eseem::cli
