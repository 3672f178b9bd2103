// validation.hpp: invariant and acceptance checks shared by `eseem validate` and the acceptance binary

#pragma once

#include "eseem/analytic_models.hpp"
#include "eseem/ensemble.hpp"
#include "eseem/hamiltonians.hpp"
#include "eseem/spectral.hpp"

#include <chrono>
#include <functional>
#include <map>
#include <random>
#include <set>

namespace eseem::cli {

enum class Compare { AtMost, AtLeast };

struct Check {
    std::string id;
    int criterion = 0;
    std::string description;
    double value = 0.0;
    double tolerance = 0.0;
    Compare compare = Compare::AtMost;
    bool passed = false;
    // Known conflict between a stated target and the model; reported, not hidden.
    bool deviation = false;
    std::string note;
    double seconds = 0.0;
};

struct CriterionSummary {
    int number = 0;
    std::string title;
    std::vector<Check> checks;
    double seconds = 0.0;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }
    // Every failing check is a documented deviation.
    bool only_deviations() const {
        return !passed() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed || c.deviation; });
    }
};

struct ValidationOptions {
    std::set<std::string> inject_failure;  // check ids forced to breach their tolerance
    std::set<int> criteria;                // empty: all
};

inline const std::map<int, std::string>& criterion_titles() {
    static const std::map<int, std::string> titles{
        {1, "delta reproduction"},        {2, "ideal-pulse modulation law"}, {3, "exact-oracle frequencies"},
        {4, "pulse-angle dependence"},    {5, "B1-inhomogeneity ratio"},     {6, "composite-pulse restoration"},
        {7, "general-S law"},             {8, "stick spectrum"},             {9, "property suites"},
        {10, "fit recovery"},
    };
    return titles;
}

namespace detail {

class Recorder {
public:
    Recorder(int criterion, const ValidationOptions& opts, std::vector<Check>& out)
        : criterion_(criterion), opts_(opts), out_(out) {}

    Check& add(std::string id, std::string description, double value, double tolerance,
               Compare compare = Compare::AtMost, std::string note = {}) {
        Check c;
        c.id = std::move(id);
        c.criterion = criterion_;
        c.description = std::move(description);
        c.value = value;
        c.tolerance = tolerance;
        c.compare = compare;
        c.note = std::move(note);
        if (opts_.inject_failure.count(c.id)) {
            // Breach: tighten the tolerance past the measured value.
            c.tolerance = compare == Compare::AtMost ? -std::abs(value) - 1.0 : std::abs(value) + 1.0;
            c.note = "injected failure";
        }
        c.passed = std::isfinite(c.value) &&
                   (c.compare == Compare::AtMost ? c.value <= c.tolerance : c.value >= c.tolerance);
        out_.push_back(std::move(c));
        return out_.back();
    }

private:
    int criterion_;
    const ValidationOptions& opts_;
    std::vector<Check>& out_;
};

inline double max_deviation(const std::vector<double>& a, const std::function<double(std::size_t)>& ref) {
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - ref(k)));
    return worst;
}

inline double spread(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
}

inline SpinSystemParams on_line(double m_i) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, m_i);
    return p;
}

inline EchoExperiment preset_echo(double m_i, int points, double tau_max) {
    EchoExperiment e;
    e.detect_m_i = m_i;
    e.tau_grid = uniform_grid(0.0, tau_max, points);
    return e;
}

inline double magnitude_at(const Spectrum& s, double f) {
    const double df = s.freq_hz[1] - s.freq_hz[0];
    const auto k = static_cast<std::size_t>(std::lround(f / df));
    return k < s.magnitude.size() ? s.magnitude[k] : 0.0;
}

inline double third_order_hz(const SpinSystemParams& p) { return std::pow(std::abs(p.a_hz), 3) / (p.f_e_hz * p.f_e_hz); }

// ------------------------------ criteria ------------------------------------

inline void criterion_delta(Recorder& r) {
    const SpinSystemParams p = nc60_preset();
    const double d = delta_hz(p);
    r.add("C1.delta-exact", "|delta - a^2/f_e| [Hz]", std::abs(d - 15.8e6 * 15.8e6 / 9.67e9), 1.0);
    r.add("C1.delta-rounded", "|delta - 25.82 kHz| [Hz] (value quoted to 10 Hz)", std::abs(d - 25820.0), 5.0);
}

inline void criterion_modulation(Recorder& r) {
    const double d = delta_hz(nc60_preset());
    double worst = 0.0;
    for (double m_i : {1.0, -1.0}) {
        const EchoTrace t = run_two_pulse_echo(preset_echo(m_i, 512, 200e-6));
        worst = std::max(worst, max_deviation(t.v, [&](std::size_t k) {
                             return 2.0 + 3.0 * std::cos(2.0 * kTwoPi * d * t.tau_s[k]);
                         }));
    }
    r.add("C2.outer-law", "max |V - (2 + 3 cos 2(2 pi delta tau))|, m_i = +-1, 512 points", worst, 1e-8);
    const EchoTrace c = run_two_pulse_echo(preset_echo(0.0, 512, 200e-6));
    r.add("C2.center-flat", "peak-to-peak variation of the m_i = 0 trace", spread(c.v), 1e-9);
    Check& level = r.add("C2.center-level", "max |V(m_i = 0) - 2|", max_deviation(c.v, [](std::size_t) { return 2.0; }),
                         1e-9, Compare::AtMost,
                         "engine gives the flat level 5 = 2 (A0 + A1 + A2), the outer lines' tau = 0 value; "
                         "a level of 2 is inconsistent with the outer-line law at tau = 0");
    level.deviation = true;
}

inline void criterion_exact_frequencies(Recorder& r) {
    // Imperfect refocusing (theta2 = 2 pi / 3) so both delta and 2 delta appear.
    const SpinSystemParams p = nc60_preset();
    const double d = delta_hz(p);
    EchoExperiment e = preset_echo(1.0, 512, 200e-6);
    e.engine = Engine::ExactLabFrame;
    e.pulse2 = PulseSpec::ideal(2.0 * kPi / 3.0);
    const PeakList peaks = find_peaks(fft_magnitude(run_two_pulse_echo(e)), kDefaultPeakThreshold);
    const auto low = peaks.near(d, 0.05), high = peaks.near(2.0 * d, 0.05);
    r.add("C3.exact-delta-peak", "|f_peak - delta| / delta, exact lab-frame engine",
          low ? std::abs(low->freq_hz - d) / d : INFINITY, 0.01);
    r.add("C3.exact-2delta-peak", "|f_peak - 2 delta| / 2 delta, exact lab-frame engine",
          high ? std::abs(high->freq_hz - 2.0 * d) / (2.0 * d) : INFINITY, 0.01);
}

inline void criterion_angle_dependence(Recorder& r) {
    const double d = delta_hz(nc60_preset());
    EchoExperiment e = preset_echo(1.0, 512, 200e-6);
    e.pulse2 = PulseSpec::ideal(2.0 * kPi / 3.0);
    const PeakList peaks = find_peaks(fft_magnitude(run_two_pulse_echo(e)), kDefaultPeakThreshold);
    const auto low = peaks.near(d, 0.05), high = peaks.near(2.0 * d, 0.05);
    const ModulationCoefficients c = coefficients(2.0 * kPi / 3.0);
    const double target = c.a1 / c.a2;
    const double ratio = low && high ? low->magnitude / high->magnitude : 0.0;
    r.add("C4.peak-ratio", "|I(delta)/I(2 delta) - A1/A2| / (A1/A2) at theta2 = 120 deg",
          std::abs(ratio - target) / target, 0.05);
}

inline void criterion_inhomogeneity(Recorder& r) {
    const double ratio = i1_i2_ratio(AngleDistribution::gaussian(kPi, 0.31, 41));
    r.add("C5.i1-i2", "|I1/I2 - 0.17| for sigma = 0.31 rad, 41 nodes", std::abs(ratio - 0.17), 0.03);
}

inline void criterion_composite(Recorder& r) {
    const double d = delta_hz(nc60_preset());
    const AngleDistribution dist = AngleDistribution::gaussian(kPi, 0.31, 41);
    EchoExperiment plain = preset_echo(-1.0, 512, 200e-6);
    EchoExperiment comp = plain;
    comp.pulse2 = PulseSpec::composite_pi();
    const Spectrum sp = fft_magnitude(average_trace(plain, dist));
    const Spectrum sc = fft_magnitude(average_trace(comp, dist));
    const double suppression = magnitude_at(sp, d) / magnitude_at(sc, d);
    r.add("C6.delta-suppression", "delta-line magnitude, plain pi / composite pi (sigma = 0.31)", suppression, 5.0,
          Compare::AtLeast);
}

inline void criterion_general_spin(Recorder& r) {
    const double d = delta_hz(nc60_preset());
    const std::vector<double> taus = uniform_grid(0.0, 100e-6, 128);
    double worst = 0.0, spin_half_spread = 0.0;
    for (int twice = 1; twice <= 5; ++twice) {
        const SpinQuantumNumber s(twice);
        for (double m_i : {1.0, 0.0, -1.0}) {
            EchoExperiment e = preset_echo(m_i, 2, 1e-6);
            e.system.s = s;
            e.tau_grid = taus;
            const EchoTrace t = run_two_pulse_echo(e);
            std::vector<double> g;
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < taus.size(); ++k) {
                g.push_back(v_general(s, m_i, taus[k], d).real());
                num += g.back() * t.v[k];
                den += g.back() * g.back();
            }
            const double scale = num / den;
            if (!(scale > 0.0)) worst = INFINITY;
            worst = std::max(worst, max_deviation(t.v, [&](std::size_t k) { return scale * g[k]; }));
            if (twice == 1) spin_half_spread = std::max(spin_half_spread, spread(t.v));
        }
    }
    r.add("C7.proportionality", "max residual after single-constant scaling, s = 1/2 .. 5/2", worst, 1e-8);
    r.add("C7.spin-half-flat", "peak-to-peak variation for s = 1/2", spin_half_spread, 1e-9);
}

inline void criterion_sticks(Recorder& r) {
    const SpinSystemParams p = nc60_preset();
    const double d = delta_hz(p);
    const auto lines = epr_stick_spectrum(p);
    double intensity_err = 0.0, split_err_hz = 0.0, split_err_ut = 0.0;
    for (double m_i : {1.0, -1.0}) {
        std::vector<StickLine> g;
        for (const auto& l : lines)
            if (l.m_i == m_i) g.push_back(l);
        if (g.size() != 3) {
            intensity_err = INFINITY;
            continue;
        }
        const double expected[3] = {3.0, 4.0, 3.0};
        for (int k = 0; k < 3; ++k) intensity_err = std::max(intensity_err, std::abs(g[k].intensity - expected[k]));
        for (int k = 0; k < 2; ++k) {
            split_err_hz = std::max(split_err_hz, std::abs(std::abs(g[k].offset_hz - g[k + 1].offset_hz) - d));
            split_err_ut = std::max(split_err_ut, std::abs(std::abs(g[k].field_offset_ut - g[k + 1].field_offset_ut) - 0.9));
        }
    }
    r.add("C8.intensities", "max |intensity - (3, 4, 3)|", intensity_err, 0.0);
    r.add("C8.split-hz", "max |outer splitting - delta| [Hz] (bound 4 a^3/f_e^2)", split_err_hz, 4.0 * third_order_hz(p));
    r.add("C8.split-ut", "max |outer splitting - 0.9 uT| [uT]", split_err_ut, 0.05);
}

inline void criterion_properties(Recorder& r) {
    // spin algebra
    double unitarity = 0.0, hermiticity = 0.0, casimir = 0.0, commutator = 0.0;
    for (int twice = 1; twice <= 10; ++twice) {
        const SpinQuantumNumber s(twice);
        const SpinMatrices m = spin_matrices(s);
        const double sv = s.value();
        const Complex i(0.0, 1.0);
        for (const ComplexMatrix* op : {&m.x, &m.y, &m.z}) hermiticity = std::max(hermiticity, hermiticity_residual(*op));
        casimir = std::max(casimir, max_abs(m.x * m.x + m.y * m.y + m.z * m.z - sv * (sv + 1.0) * identity(s.multiplicity())));
        commutator = std::max(commutator, max_abs(m.x * m.y - m.y * m.x - i * m.z));
        commutator = std::max(commutator, max_abs(m.y * m.z - m.z * m.y - i * m.x));
        commutator = std::max(commutator, max_abs(m.z * m.x - m.x * m.z - i * m.y));
        for (double angle : {0.3, kPi / 2, kPi, 5.9})
            unitarity = std::max(unitarity, unitarity_residual(electron_rotation(s, angle, 0.7)));
    }
    r.add("C9.spin-hermitian", "max Hermiticity residual of Sx, Sy, Sz (s <= 5)", hermiticity, 1e-12);
    r.add("C9.spin-casimir", "max |S^2 - S(S+1)|", casimir, 1e-10);
    r.add("C9.spin-commutators", "max |[Sa, Sb] - i eps Sc|", commutator, 1e-10);
    r.add("C9.rotation-unitary", "max unitarity residual of rotations", unitarity, 1e-10);

    // propagators
    double prop_unitarity = 0.0;
    const SpinSystemParams p = on_line(1.0);
    for (Engine e : {Engine::AverageHamiltonian, Engine::ExactLabFrame, Engine::SteppedRotatingFrame}) {
        const FreeEvolver ev(e, p);
        for (double tau : {1.7e-11, 3.3e-6, 97.1e-6})
            prop_unitarity = std::max(prop_unitarity, unitarity_residual(ev.propagator(tau, 1.23e-11)));
    }
    r.add("C9.propagator-unitary", "max unitarity residual, all engines", prop_unitarity, 1e-10);

    // off-resonance refocusing
    const EchoTrace ref = run_two_pulse_echo(preset_echo(1.0, 64, 100e-6));
    double offres = 0.0;
    for (double off : {-2e6, -0.5e6, 0.5e6, 2e6}) {
        EchoExperiment e = preset_echo(1.0, 64, 100e-6);
        e.resonance_offset_hz = off;
        const EchoTrace t = run_two_pulse_echo(e);
        offres = std::max(offres, max_deviation(t.v, [&](std::size_t k) { return ref.v[k]; }));
    }
    r.add("C9.off-resonance", "max |V(offset) - V(0)| over +-2 MHz", offres, 1e-9);

    // M_I symmetry
    double sym = 0.0;
    for (double th2 : {kPi, 2.0 * kPi / 3.0, 1.1}) {
        EchoExperiment a = preset_echo(1.0, 64, 100e-6), b = preset_echo(-1.0, 64, 100e-6);
        a.pulse2 = b.pulse2 = PulseSpec::ideal(th2);
        const EchoTrace ta = run_two_pulse_echo(a), tb = run_two_pulse_echo(b);
        sym = std::max(sym, max_deviation(ta.v, [&](std::size_t k) { return tb.v[k]; }));
    }
    r.add("C9.mi-symmetry", "max |V(+1) - V(-1)|", sym, 1e-9);

    // spin-1/2 null
    double null = 0.0;
    for (double m_i : {1.0, 0.0, -1.0}) {
        EchoExperiment e = preset_echo(m_i, 64, 100e-6);
        e.system.s = SpinQuantumNumber(1);
        e.pulse2 = PulseSpec::ideal(2.0 * kPi / 3.0);
        null = std::max(null, spread(run_two_pulse_echo(e).v));
    }
    r.add("C9.spin-half-null", "peak-to-peak variation, s = 1/2", null, 1e-9);

    // AHT agreement
    const AhtValidationReport aht = validate_aht(nc60_preset(), 100e-6, 40);
    r.add("C9.aht-frequency", "relative frequency deviation, stepped vs average Hamiltonian",
          aht.frequency_rel_deviation, aht.expected_rel_bound);
    r.add("C9.aht-frequency-1pct", "same, against the 1% target", aht.frequency_rel_deviation, 0.01);
    SpinSystemParams decoupled = nc60_preset();
    decoupled.a_hz = 0.0;
    const AhtValidationReport zero = validate_aht(decoupled, 20e-6, 10);
    r.add("C9.aht-decoupled", "max |V| deviation between engines at a = 0", zero.max_abs_v_deviation, 1e-10);

    // analytic vs numeric over theta2
    double analytic = 0.0;
    const double d = delta_hz(nc60_preset());
    const std::vector<double> taus = uniform_grid(0.0, 80e-6, 12);
    for (int k = 1; k <= 720; ++k) {
        const double th2 = kTwoPi * k / 720.0;
        EchoExperiment e = preset_echo(1.0, 2, 1e-6);
        e.tau_grid = taus;
        e.pulse2 = PulseSpec::ideal(th2);
        const EchoTrace t = run_two_pulse_echo(e);
        analytic = std::max(analytic, max_deviation(t.v, [&](std::size_t j) { return v_outer(taus[j], kPi / 2, th2, d); }));
    }
    r.add("C9.analytic-vs-engine", "max |engine - closed form| over 720 theta2 values", analytic, 1e-8);
}

inline EchoTrace synthetic_fit_trace(double noise_rel, std::uint64_t seed) {
    const double d = 25.8e3, t2 = 210e-6;
    EchoTrace t;
    t.tau_s = uniform_grid(0.0, 200e-6, 512);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_rel * 5.0);  // relative to the 5.0 full scale
    for (double tau : t.tau_s) {
        double v = v_outer(tau, kPi / 2, kPi, d) * std::exp(-2.0 * tau / t2);
        if (noise_rel > 0.0) v += noise(rng);
        t.v.push_back(v);
    }
    return t;
}

inline void criterion_fit(Recorder& r) {
    const double d = 25.8e3, t2 = 210e-6;
    const FitResult clean = fit_decay(synthetic_fit_trace(0.0, 0), FitModel::ExpTwoCosine);
    r.add("C10.noiseless-delta", "relative delta error, noiseless", std::abs(clean.delta_hz - d) / d, 1e-3);
    r.add("C10.noiseless-t2", "relative T2 error, noiseless", std::abs(clean.t2_s - t2) / t2, 1e-3);
    const FitResult noisy = fit_decay(synthetic_fit_trace(0.01, 20240917), FitModel::ExpTwoCosine);
    r.add("C10.noisy-delta", "relative delta error, 1% noise (seed 20240917)", std::abs(noisy.delta_hz - d) / d, 0.02);
    r.add("C10.noisy-t2", "relative T2 error, 1% noise (seed 20240917)", std::abs(noisy.t2_s - t2) / t2, 0.02);
}

}  // namespace detail

inline std::vector<CriterionSummary> run_validation(const ValidationOptions& opts = {}) {
    using Fn = void (*)(detail::Recorder&);
    const std::map<int, Fn> runners{
        {1, detail::criterion_delta},          {2, detail::criterion_modulation},
        {3, detail::criterion_exact_frequencies}, {4, detail::criterion_angle_dependence},
        {5, detail::criterion_inhomogeneity},  {6, detail::criterion_composite},
        {7, detail::criterion_general_spin},   {8, detail::criterion_sticks},
        {9, detail::criterion_properties},     {10, detail::criterion_fit},
    };
    std::vector<CriterionSummary> out;
    for (const auto& [n, fn] : runners) {
        if (!opts.criteria.empty() && !opts.criteria.count(n)) continue;
        CriterionSummary s;
        s.number = n;
        s.title = criterion_titles().at(n);
        detail::Recorder rec(n, opts, s.checks);
        const auto start = std::chrono::steady_clock::now();
        try {
            fn(rec);
        } catch (const std::exception& e) {
            Check& c = rec.add("C" + std::to_string(n) + ".exception", "criterion raised an exception", INFINITY, 0.0);
            c.note = e.what();
        }
        s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.push_back(std::move(s));
    }
    return out;
}

inline std::set<std::string> all_check_ids() {
    // Cheap criteria enumerate themselves by running; ids are stable strings.
    std::set<std::string> ids;
    for (const auto& s : run_validation())
        for (const auto& c : s.checks) ids.insert(c.id);
    return ids;
}

}  // namespace eseem::cli
