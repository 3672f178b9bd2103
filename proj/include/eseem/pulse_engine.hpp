// pulse_engine.hpp: two-pulse echo propagation of the deviation density matrix

#pragma once

#include "eseem/hamiltonians.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace eseem {

// ------------------------------- pulses -------------------------------------

enum class PulseModel { Ideal, FiniteDuration };

struct PulseSegment {
    double angle = 0.0;  // rad
    double phase = 0.0;  // rad, relative to the pulse phase
};

struct PulseSpec {
    double angle = kPi;
    double phase = 0.0;
    PulseModel model = PulseModel::Ideal;
    double duration_s = 0.0;
    std::vector<PulseSegment> composite;  // empty: single rectangular rotation

    static PulseSpec ideal(double angle, double phase = 0.0) {
        PulseSpec p;
        p.angle = angle;
        p.phase = phase;
        return p;
    }

    static PulseSpec finite(double angle, double duration_s, double phase = 0.0) {
        PulseSpec p = ideal(angle, phase);
        p.model = PulseModel::FiniteDuration;
        p.duration_s = duration_s;
        return p;
    }

    // (pi/2)_x (pi)_y (pi/2)_x
    static PulseSpec composite_pi(double phase = 0.0) {
        PulseSpec p = ideal(kPi, phase);
        p.composite = {{kPi / 2, 0.0}, {kPi, kPi / 2}, {kPi / 2, 0.0}};
        return p;
    }

    bool is_composite() const { return !composite.empty(); }

    // Segments in application order with absolute phases.
    std::vector<PulseSegment> segments() const {
        if (composite.empty()) return {{angle, phase}};
        std::vector<PulseSegment> out = composite;
        for (auto& seg : out) seg.phase += phase;
        return out;
    }

    // Same pulse under a B1 scale factor: every rotation angle scales, durations do not.
    PulseSpec scaled(double factor) const {
        PulseSpec p = *this;
        p.angle *= factor;
        for (auto& seg : p.composite) seg.angle *= factor;
        return p;
    }

    PulseSpec phase_shifted(double dphi) const {
        PulseSpec p = *this;
        p.phase += dphi;
        return p;
    }

    double elapsed_s() const { return model == PulseModel::FiniteDuration ? duration_s : 0.0; }

    void validate() const {
        if (!(angle > 0.0 && angle <= kTwoPi + 1e-12))
            throw std::invalid_argument("PulseSpec: angle must lie in (0, 2pi]");
        if (model == PulseModel::FiniteDuration && !(duration_s > 0.0))
            throw std::invalid_argument("PulseSpec: finite-duration pulse requires duration_s > 0");
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(10);
        os << (model == PulseModel::Ideal ? "ideal" : "finite");
        if (composite.empty()) {
            os << " angle=" << angle << " phase=" << phase;
        } else {
            os << " composite[";
            for (std::size_t k = 0; k < composite.size(); ++k)
                os << (k ? " " : "") << composite[k].angle << "@" << composite[k].phase;
            os << "] phase=" << phase;
        }
        if (model == PulseModel::FiniteDuration) os << " duration_s=" << duration_s;
        return os.str();
    }
};

// exp(-i theta (Sx cos phi + Sy sin phi)) on the electron space alone.
inline ComplexMatrix electron_rotation(SpinQuantumNumber s, double angle, double phase) {
    const SpinMatrices ops = spin_matrices(s);
    const ComplexMatrix axis = std::cos(phase) * ops.x + std::sin(phase) * ops.y;
    return expm_hermitian_generator(axis, angle);
}

// Full-space pulse propagator. Ideal pulses act as identity on the nucleus;
// finite pulses evolve under h_avg0 + h_avg1 + w1 (Sx cos phi + Sy sin phi).
inline ComplexMatrix rotation_operator(const PulseSpec& pulse, const SpinSystemParams& system) {
    const std::vector<PulseSegment> segs = pulse.segments();
    const int ni = system.i.multiplicity();
    if (pulse.model == PulseModel::Ideal) {
        ComplexMatrix r = identity(system.s.multiplicity());
        for (const auto& seg : segs) r = electron_rotation(system.s, seg.angle, seg.phase) * r;
        return kron(r, identity(ni));
    }
    if (!(pulse.duration_s > 0.0))
        throw std::invalid_argument("rotation_operator: finite-duration pulse requires duration_s > 0");
    double total_angle = 0.0;
    for (const auto& seg : segs) total_angle += std::abs(seg.angle);
    const double w1 = total_angle / pulse.duration_s;
    const PairOperators op(system.basis());
    const ComplexMatrix h0 = h_average(system);
    ComplexMatrix r = identity(op.dim());
    for (const auto& seg : segs) {
        const double sign = seg.angle < 0.0 ? -1.0 : 1.0;
        const ComplexMatrix h1 = sign * w1 * (std::cos(seg.phase) * op.s.x + std::sin(seg.phase) * op.s.y);
        r = expm_hermitian_generator(h0 + h1, std::abs(seg.angle) / w1) * r;
    }
    return r;
}

// ----------------------------- free evolution -------------------------------

enum class Engine { AverageHamiltonian, ExactLabFrame, SteppedRotatingFrame };

inline std::string_view to_string(Engine e) {
    switch (e) {
        case Engine::AverageHamiltonian: return "average-hamiltonian";
        case Engine::ExactLabFrame: return "exact-lab-frame";
        case Engine::SteppedRotatingFrame: return "stepped-rotating-frame";
    }
    return "unknown";
}

inline Engine parse_engine(std::string_view name) {
    for (Engine e : {Engine::AverageHamiltonian, Engine::ExactLabFrame, Engine::SteppedRotatingFrame})
        if (name == to_string(e)) return e;
    throw std::invalid_argument("unknown engine '" + std::string(name) + "'");
}

inline constexpr int kDefaultStepsPerPeriod = 40;
inline constexpr int kMinStepsPerPeriod = 20;

namespace detail {

// exp(i w Sz t) for the frame rotating at f_mw, diagonal in the product basis.
inline Eigen::VectorXcd frame_phases(const SpinSystemParams& p, double t) {
    const ProductBasis basis = p.basis();
    const double cycles = p.f_mw_hz * t;
    Eigen::VectorXcd d(basis.dim());
    for (int k = 0; k < basis.dim(); ++k) {
        const double turns = basis.m_s(k) * cycles;
        d(k) = std::polar(1.0, kTwoPi * (turns - std::floor(turns)));
    }
    return d;
}

}  // namespace detail

// Evolution under the diagonal average Hamiltonian h_avg0 + h_avg1.
class AverageHamiltonianEvolver {
public:
    explicit AverageHamiltonianEvolver(const SpinSystemParams& p) : evolution_(h_average(p)) {}
    ComplexMatrix propagator(double tau, double /*t_start*/) const { return evolution_.propagator(tau); }

private:
    HermitianEvolution evolution_;
};

// Exact lab-frame evolution expressed in the rotating frame:
// exp(i w Sz (t0 + tau)) exp(-i H0 tau) exp(-i w Sz t0).
class ExactLabFrameEvolver {
public:
    explicit ExactLabFrameEvolver(const SpinSystemParams& p) : params_(p), evolution_(h0_lab(p)) {}

    ComplexMatrix propagator(double tau, double t_start) const {
        const Eigen::VectorXcd enter = detail::frame_phases(params_, t_start).conjugate();
        const Eigen::VectorXcd leave = detail::frame_phases(params_, t_start + tau);
        return leave.asDiagonal() * evolution_.propagator(tau) * enter.asDiagonal();
    }

private:
    SpinSystemParams params_;
    HermitianEvolution evolution_;
};

// Piecewise-constant integration of h_rot_t with midpoint sampling on a uniform
// grid of steps_per_period substeps. The one-period propagator is diagonalised
// once, so whole periods cost O(1) regardless of tau.
class SteppedRotatingFrameEvolver {
public:
    SteppedRotatingFrameEvolver(const SpinSystemParams& p, int steps_per_period = kDefaultStepsPerPeriod)
        : params_(p), ops_(p.basis()), steps_(steps_per_period) {
        if (!(p.f_mw_hz > 0.0))
            throw std::invalid_argument("stepped-rotating-frame engine requires f_mw_hz > 0");
        if (steps_per_period < kMinStepsPerPeriod)
            throw std::invalid_argument("stepped-rotating-frame engine: substep exceeds 1/(20 f_mw)");
        period_ = 1.0 / p.f_mw_hz;
        dt_ = period_ / steps_;
        static_part_ = kTwoPi * ((p.f_e_hz - p.f_mw_hz) * ops_.s.z - p.f_i_hz * ops_.i.z +
                                 p.a_hz * ops_.s.z * ops_.i.z);
        cos_part_ = kTwoPi * p.a_hz * (ops_.s.x * ops_.i.x + ops_.s.y * ops_.i.y);
        sin_part_ = kTwoPi * p.a_hz * (ops_.s.x * ops_.i.y - ops_.s.y * ops_.i.x);

        prefix_.reserve(static_cast<std::size_t>(steps_) + 1);
        prefix_.push_back(identity(ops_.dim()));
        for (int k = 0; k < steps_; ++k)
            prefix_.push_back(substep(k * dt_, (k + 1) * dt_) * prefix_.back());

        Eigen::ComplexSchur<ComplexMatrix> schur(prefix_.back());
        schur_vectors_ = schur.matrixU();
        const auto& t = schur.matrixT();
        period_angles_.resize(t.rows());
        for (Eigen::Index k = 0; k < t.rows(); ++k) period_angles_(k) = std::arg(t(k, k));
    }

    ComplexMatrix hamiltonian(double t) const {
        const double phase = kTwoPi * params_.f_mw_hz * t;
        return static_part_ + std::cos(phase) * cos_part_ + std::sin(phase) * sin_part_;
    }

    ComplexMatrix propagator(double tau, double t_start) const {
        if (tau < 0.0) throw std::invalid_argument("free_evolution: tau must be non-negative");
        const double t_end = t_start + tau;
        const double n0 = std::floor(t_start / period_);
        const double n1 = std::floor(t_end / period_);
        const double r0 = std::clamp(t_start - n0 * period_, 0.0, period_);
        const double r1 = std::clamp(t_end - n1 * period_, 0.0, period_);
        if (n1 == n0) return within_period(r0, r1);
        const double whole = n1 - n0 - 1.0;
        return within_period(0.0, r1) * period_power(whole) * within_period(r0, period_);
    }

    int steps_per_period() const { return steps_; }

private:
    ComplexMatrix substep(double a, double b) const {
        return expm_hermitian_generator(hamiltonian(0.5 * (a + b)), b - a);
    }

    // Propagator from phase offset a to b (0 <= a <= b <= period) inside one period.
    ComplexMatrix within_period(double a, double b) const {
        const double eps = 1e-12 * dt_;
        if (b - a <= eps) return identity(ops_.dim());
        const int ka = static_cast<int>(std::ceil(a / dt_ - 1e-9));
        const int kb = static_cast<int>(std::floor(b / dt_ + 1e-9));
        if (ka > kb) return substep(a, b);
        ComplexMatrix u = prefix_[static_cast<std::size_t>(kb)] * prefix_[static_cast<std::size_t>(ka)].adjoint();
        if (ka * dt_ - a > eps) u = u * substep(a, ka * dt_);
        if (b - kb * dt_ > eps) u = substep(kb * dt_, b) * u;
        return u;
    }

    ComplexMatrix period_power(double n) const {
        if (n <= 0.0) return identity(ops_.dim());
        Eigen::VectorXcd phases(period_angles_.size());
        for (Eigen::Index k = 0; k < period_angles_.size(); ++k)
            phases(k) = std::polar(1.0, std::remainder(n * period_angles_(k), kTwoPi));
        return schur_vectors_ * phases.asDiagonal() * schur_vectors_.adjoint();
    }

    SpinSystemParams params_;
    PairOperators ops_;
    int steps_;
    double period_ = 0.0;
    double dt_ = 0.0;
    ComplexMatrix static_part_, cos_part_, sin_part_;
    std::vector<ComplexMatrix> prefix_;
    ComplexMatrix schur_vectors_;
    RealVector period_angles_;
};

class FreeEvolver {
public:
    FreeEvolver(Engine engine, const SpinSystemParams& p, int steps_per_period = kDefaultStepsPerPeriod)
        : engine_(engine), impl_(make(engine, p, steps_per_period)) {}

    ComplexMatrix propagator(double tau, double t_start = 0.0) const {
        if (tau < 0.0) throw std::invalid_argument("free_evolution: tau must be non-negative");
        return std::visit([&](const auto& e) { return e.propagator(tau, t_start); }, impl_);
    }

    Engine engine() const { return engine_; }

private:
    using Impl = std::variant<AverageHamiltonianEvolver, ExactLabFrameEvolver, SteppedRotatingFrameEvolver>;

    static Impl make(Engine engine, const SpinSystemParams& p, int steps) {
        switch (engine) {
            case Engine::AverageHamiltonian: return AverageHamiltonianEvolver(p);
            case Engine::ExactLabFrame: return ExactLabFrameEvolver(p);
            case Engine::SteppedRotatingFrame: return SteppedRotatingFrameEvolver(p, steps);
        }
        throw std::invalid_argument("unknown engine");
    }

    Engine engine_;
    Impl impl_;
};

inline ComplexMatrix free_evolution(Engine engine, const SpinSystemParams& system, double tau, double t_start,
                                    int steps_per_period = kDefaultStepsPerPeriod) {
    return FreeEvolver(engine, system, steps_per_period).propagator(tau, t_start);
}

// ------------------------------ detection -----------------------------------

inline ComplexMatrix detection_operator(const SpinSystemParams& system, double m_i) {
    return kron(spin_matrices(system.s).y, projector_mi(system.i, m_i));
}

// Tr[sigma D] with D = Sy (x) P_{M_I}; complex so callers can inspect the residual.
inline Complex detect_complex(const ComplexMatrix& sigma, const ComplexMatrix& detector) {
    return sigma.cwiseProduct(detector.transpose()).sum();
}

inline double detect(const ComplexMatrix& sigma, const SpinSystemParams& system, double m_i) {
    return detect_complex(sigma, detection_operator(system, m_i)).real();
}

// ------------------------------ experiment ----------------------------------

struct EchoExperiment {
    SpinSystemParams system = nc60_preset();
    PulseSpec pulse1 = PulseSpec::ideal(kPi / 2);
    PulseSpec pulse2 = PulseSpec::ideal(kPi);
    std::vector<double> tau_grid;
    double detect_m_i = 1.0;
    Engine engine = Engine::AverageHamiltonian;
    // When set, f_mw is placed this far below the centre of the detected line;
    // otherwise system.f_mw_hz is used as given.
    std::optional<double> resonance_offset_hz = 0.0;
    std::optional<double> t2_s;
    // 4-step cycle of the pulse-2 phase selecting the refocused echo pathway.
    bool phase_cycle = true;
    int steps_per_period = kDefaultStepsPerPeriod;

    SpinSystemParams effective_system() const {
        SpinSystemParams p = system;
        if (resonance_offset_hz) p.f_mw_hz = line_center_hz(system, detect_m_i) - *resonance_offset_hz;
        return p;
    }

    void validate() const {
        system.validate();
        pulse1.validate();
        pulse2.validate();
        validate_structure();
    }

    // Everything except the pulse angle range (ensemble nodes may leave it).
    void validate_structure() const {
        system.i.index_of(detect_m_i);
        for (std::size_t k = 0; k < tau_grid.size(); ++k) {
            if (!(tau_grid[k] >= 0.0)) throw std::invalid_argument("EchoExperiment: tau_grid must be non-negative");
            if (k > 0 && !(tau_grid[k] > tau_grid[k - 1]))
                throw std::invalid_argument("EchoExperiment: tau_grid must be strictly increasing");
        }
        if (t2_s && !(*t2_s > 0.0)) throw std::invalid_argument("EchoExperiment: t2_s must be positive");
        for (const PulseSpec* p : {&pulse1, &pulse2})
            if (p->model == PulseModel::FiniteDuration && !(p->duration_s > 0.0))
                throw std::invalid_argument("EchoExperiment: finite-duration pulse requires duration_s > 0");
    }
};

struct EchoTrace {
    std::vector<double> tau_s;
    std::vector<double> v;
    std::vector<std::pair<std::string, std::string>> metadata;
    double max_imag_residual = 0.0;

    std::size_t size() const { return tau_s.size(); }

    std::string meta(const std::string& key, const std::string& fallback = {}) const {
        for (const auto& [k, val] : metadata)
            if (k == key) return val;
        return fallback;
    }

    void set_meta(const std::string& key, const std::string& value) {
        for (auto& [k, val] : metadata)
            if (k == key) {
                val = value;
                return;
            }
        metadata.emplace_back(key, value);
    }
};

inline std::vector<double> uniform_grid(double start, double stop, int points) {
    if (points < 2) throw std::invalid_argument("uniform_grid: need at least 2 points");
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) g[static_cast<std::size_t>(k)] = start + (stop - start) * k / (points - 1);
    return g;
}

inline constexpr std::array<double, 4> kEchoCyclePhases{0.0, kPi / 2, kPi, 3 * kPi / 2};
inline constexpr std::array<double, 4> kEchoCycleWeights{1.0, -1.0, 1.0, -1.0};

namespace detail {

inline std::string format_double(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

inline EchoTrace simulate_echo(const EchoExperiment& exp) {
    exp.validate_structure();
    const SpinSystemParams p = exp.effective_system();
    const PairOperators op(p.basis());
    const FreeEvolver evolver(exp.engine, p, exp.steps_per_period);
    const ComplexMatrix detector = detection_operator(p, exp.detect_m_i);

    const ComplexMatrix r1 = rotation_operator(exp.pulse1, p);
    const ComplexMatrix sigma1 = r1 * op.s.z * r1.adjoint();

    const std::size_t ncycle = exp.phase_cycle ? kEchoCyclePhases.size() : 1;
    std::vector<ComplexMatrix> r2;
    for (std::size_t k = 0; k < ncycle; ++k)
        r2.push_back(rotation_operator(exp.pulse2.phase_shifted(kEchoCyclePhases[k]), p));

    EchoTrace trace;
    trace.tau_s = exp.tau_grid;
    trace.v.reserve(exp.tau_grid.size());
    const double d1 = exp.pulse1.elapsed_s();
    const double d2 = exp.pulse2.elapsed_s();
    for (double tau : exp.tau_grid) {
        const ComplexMatrix ua = evolver.propagator(tau, d1);
        const ComplexMatrix ub = evolver.propagator(tau, d1 + tau + d2);
        const ComplexMatrix defocused = ua * sigma1 * ua.adjoint();
        Complex signal = 0.0;
        for (std::size_t k = 0; k < ncycle; ++k) {
            const ComplexMatrix step = ub * r2[k];
            const Complex term = detect_complex(step * defocused * step.adjoint(), detector);
            signal += exp.phase_cycle ? kEchoCycleWeights[k] * term : term;
        }
        signal /= static_cast<double>(ncycle);
        trace.max_imag_residual = std::max(trace.max_imag_residual, std::abs(signal.imag()));
        double v = signal.real();
        if (exp.t2_s) v *= std::exp(-2.0 * tau / *exp.t2_s);
        trace.v.push_back(v);
    }

    trace.set_meta("engine", std::string(to_string(exp.engine)));
    trace.set_meta("pulse1", exp.pulse1.describe());
    trace.set_meta("pulse2", exp.pulse2.describe());
    trace.set_meta("detect_m_i", format_double(exp.detect_m_i));
    trace.set_meta("f_mw_hz", format_double(p.f_mw_hz));
    trace.set_meta("phase_cycle", exp.phase_cycle ? "4-step" : "none");
    if (exp.t2_s) trace.set_meta("t2_s", format_double(*exp.t2_s));
    trace.set_meta("max_imag_residual", format_double(trace.max_imag_residual));
    return trace;
}

}  // namespace detail

// V(tau) = Tr[sigma(2 tau) (Sy (x) P_{M_I})] after theta1 - tau - theta2 - tau,
// starting from sigma0 = Sz.
inline EchoTrace run_two_pulse_echo(const EchoExperiment& exp) {
    exp.validate();
    return detail::simulate_echo(exp);
}

// U_tau R U_tau for an ideal refocusing pulse.
inline ComplexMatrix echo_operator(const FreeEvolver& evolver, const ComplexMatrix& refocus, double tau) {
    return evolver.propagator(tau, tau) * refocus * evolver.propagator(tau, 0.0);
}

// Relative phase (rad) between the outermost (M_S = +-S) and next-inner
// (+-(S-1)) anti-diagonal elements of the echo operator in the M_I block.
// This is the accumulated SQ-coherence phase that drives the modulation.
inline double echo_outer_phase(const ComplexMatrix& echo_op, const SpinSystemParams& p, double m_i) {
    if (p.s.twice() < 2) return 0.0;
    const ProductBasis basis = p.basis();
    const double sv = p.s.value();
    const Complex outer = echo_op(basis.index(sv, m_i), basis.index(-sv, m_i));
    const Complex inner = echo_op(basis.index(sv - 1.0, m_i), basis.index(-(sv - 1.0), m_i));
    return std::arg(outer / inner);
}

// ---------------------------- AHT validation --------------------------------

struct AhtValidationReport {
    double max_abs_v_deviation = 0.0;
    double max_rel_v_deviation = 0.0;    // relative to max |V| of the average-Hamiltonian trace
    double max_phase_deviation = 0.0;    // rad, SQ-coherence phase
    double frequency_aht_hz = 0.0;       // modulation frequency of the outer coherences
    double frequency_stepped_hz = 0.0;
    double frequency_rel_deviation = 0.0;
    double expected_rel_bound = 0.0;     // perturbative bound on the relative frequency deviation
    bool perturbative_warning = false;
    bool within_bound = false;
};

namespace detail {

// Least-squares slope through the origin of an unwrapped phase track.
inline double phase_slope(const std::vector<double>& t, const std::vector<double>& phase) {
    std::vector<double> unwrapped(phase.size());
    double offset = 0.0;
    for (std::size_t k = 0; k < phase.size(); ++k) {
        if (k > 0) {
            const double jump = phase[k] - phase[k - 1];
            if (jump > kPi) offset -= kTwoPi;
            if (jump < -kPi) offset += kTwoPi;
        }
        unwrapped[k] = phase[k] + offset;
    }
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        num += t[k] * unwrapped[k];
        den += t[k] * t[k];
    }
    return den > 0.0 ? num / den : 0.0;
}

}  // namespace detail

// Compares the stepped rotating-frame integration against the average
// Hamiltonian on an ideal pi/2 - tau - pi - tau echo at line m_i. The
// frequency bound is the third-order scale 4|a|/f_e (second-order energies
// carry relative corrections of order a/we).
inline AhtValidationReport validate_aht(const SpinSystemParams& system, double tau_max, int n_points,
                                        double m_i = 1.0, int steps_per_period = kDefaultStepsPerPeriod) {
    if (n_points < 2) throw std::invalid_argument("validate_aht: need at least 2 points");
    SpinSystemParams p = system;
    p.f_mw_hz = line_center_hz(system, m_i);

    EchoExperiment exp;
    exp.system = p;
    exp.resonance_offset_hz.reset();
    exp.detect_m_i = m_i;
    exp.steps_per_period = steps_per_period;
    for (int k = 1; k <= n_points; ++k) exp.tau_grid.push_back(tau_max * k / n_points);

    exp.engine = Engine::AverageHamiltonian;
    const EchoTrace aht = run_two_pulse_echo(exp);
    exp.engine = Engine::SteppedRotatingFrame;
    const EchoTrace stepped = run_two_pulse_echo(exp);

    AhtValidationReport report;
    double vmax = 0.0;
    for (std::size_t k = 0; k < aht.size(); ++k) {
        vmax = std::max(vmax, std::abs(aht.v[k]));
        report.max_abs_v_deviation = std::max(report.max_abs_v_deviation, std::abs(aht.v[k] - stepped.v[k]));
    }
    report.max_rel_v_deviation = vmax > 0.0 ? report.max_abs_v_deviation / vmax : 0.0;

    const FreeEvolver ev_aht(Engine::AverageHamiltonian, p);
    const FreeEvolver ev_step(Engine::SteppedRotatingFrame, p, steps_per_period);
    const ComplexMatrix refocus = rotation_operator(PulseSpec::ideal(kPi), p);
    std::vector<double> phase_aht, phase_step;
    for (double tau : exp.tau_grid) {
        phase_aht.push_back(echo_outer_phase(echo_operator(ev_aht, refocus, tau), p, m_i));
        phase_step.push_back(echo_outer_phase(echo_operator(ev_step, refocus, tau), p, m_i));
        report.max_phase_deviation =
            std::max(report.max_phase_deviation, std::abs(std::remainder(phase_aht.back() - phase_step.back(), kTwoPi)));
    }
    report.frequency_aht_hz = std::abs(detail::phase_slope(exp.tau_grid, phase_aht)) / kTwoPi;
    report.frequency_stepped_hz = std::abs(detail::phase_slope(exp.tau_grid, phase_step)) / kTwoPi;
    if (report.frequency_aht_hz > 0.0)
        report.frequency_rel_deviation =
            std::abs(report.frequency_stepped_hz - report.frequency_aht_hz) / report.frequency_aht_hz;
    else
        report.frequency_rel_deviation = std::abs(report.frequency_stepped_hz);
    report.expected_rel_bound = std::max(1e-10, 4.0 * std::abs(p.a_hz) / p.f_e_hz);
    report.perturbative_warning = outside_perturbative_regime(p);
    report.within_bound = report.frequency_rel_deviation <= report.expected_rel_bound;
    return report;
}

}  // namespace eseem
