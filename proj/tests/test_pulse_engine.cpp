#include "eseem/pulse_engine.hpp"

#include <gtest/gtest.h>

using namespace eseem;

namespace {

const SpinQuantumNumber kS32 = SpinQuantumNumber::from_value(1.5);

ComplexMatrix anti_diagonal(const std::vector<Complex>& v) {
    const auto n = static_cast<Eigen::Index>(v.size());
    ComplexMatrix m = ComplexMatrix::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k) m(k, n - 1 - k) = v[static_cast<std::size_t>(k)];
    return m;
}

// min over global phases of max |a - e^{i g} b|
double distance_up_to_phase(const ComplexMatrix& a, const ComplexMatrix& b) {
    const Complex overlap = (b.adjoint() * a).trace();
    const Complex phase = std::abs(overlap) > 0.0 ? overlap / std::abs(overlap) : Complex(1.0);
    return max_abs(a - phase * b);
}

EchoExperiment ideal_echo(double m_i, int n = 512, double tau_max = 100e-6) {
    EchoExperiment exp;
    exp.detect_m_i = m_i;
    exp.tau_grid = uniform_grid(0.0, tau_max, n);
    return exp;
}

}  // namespace

TEST(Rotation, PerfectPiHasPaperForm) {
    const ComplexMatrix i_anti = anti_diagonal({Complex(0, -1), Complex(0, -1), Complex(0, -1), Complex(0, -1)});
    // exp(-i pi Sx) carries +i on the anti-diagonal; phase pi reproduces the -i form.
    EXPECT_LT(max_abs(electron_rotation(kS32, kPi, 0.0) + i_anti), 1e-12);
    EXPECT_LT(max_abs(electron_rotation(kS32, kPi, kPi) - i_anti), 1e-12);
    EXPECT_LT(distance_up_to_phase(electron_rotation(kS32, kPi, 0.0), i_anti), 1e-12);
}

TEST(Rotation, GeneralAngleMatchesClosedForm) {
    for (double th : {0.3, kPi / 2, 2 * kPi / 3, 2.9, 5.1}) {
        const double c3 = std::pow(std::cos(th / 2), 3), s3 = std::pow(std::sin(th / 2), 3);
        const double c3h = std::cos(1.5 * th), s3h = std::sin(1.5 * th);
        const double r3 = std::sqrt(3.0);
        const Complex i(0, 1);
        const Complex p = i / r3 * (s3 + s3h), q = -(c3 - c3h) / r3, r = -i / 3.0 * (s3 - 2 * s3h);
        const double d = (c3 + 2 * c3h) / 3.0;
        ComplexMatrix expected(4, 4);
        expected << c3, p, q, -i * s3,
                    p, d, r, q,
                    q, r, d, p,
                    -i * s3, q, p, c3;
        // Closed form corresponds to rotation sense exp(+i theta Sx), i.e. phase pi.
        EXPECT_LT(max_abs(electron_rotation(kS32, th, kPi) - expected), 1e-12) << "theta=" << th;
    }
}

TEST(Rotation, HalfPiCreatesInitialCoherences) {
    const SpinMatrices s = spin_matrices(kS32);
    const ComplexMatrix r = electron_rotation(kS32, kPi / 2, kPi);
    const ComplexMatrix sigma = r * s.z * r.adjoint();
    const double h = std::sqrt(3.0) / 2;
    ComplexMatrix expected = ComplexMatrix::Zero(4, 4);
    expected(0, 1) = Complex(0, -h);
    expected(1, 0) = Complex(0, h);
    expected(1, 2) = Complex(0, -1);
    expected(2, 1) = Complex(0, 1);
    expected(2, 3) = Complex(0, -h);
    expected(3, 2) = Complex(0, h);
    EXPECT_LT(max_abs(sigma - expected), 1e-12);
    EXPECT_LT(max_abs(sigma - s.y), 1e-12);
}

TEST(Rotation, CompositePiIsPiAboutY) {
    const SpinSystemParams p = nc60_preset();
    const ComplexMatrix comp = rotation_operator(PulseSpec::composite_pi(), p);
    const ComplexMatrix pi_y = rotation_operator(PulseSpec::ideal(kPi, kPi / 2), p);
    EXPECT_LT(distance_up_to_phase(comp, pi_y), 1e-10);
    EXPECT_LT(unitarity_residual(comp), 1e-10);
    // Direct product of the three segments.
    const ComplexMatrix direct = electron_rotation(kS32, kPi / 2, 0) * electron_rotation(kS32, kPi, kPi / 2) *
                                 electron_rotation(kS32, kPi / 2, 0);
    EXPECT_LT(max_abs(comp - kron(direct, identity(3))), 1e-12);
}

TEST(Rotation, IdealActsAsNuclearIdentity) {
    const SpinSystemParams p = nc60_preset();
    const ComplexMatrix r = rotation_operator(PulseSpec::ideal(1.1, 0.4), p);
    EXPECT_LT(max_abs(r - kron(electron_rotation(kS32, 1.1, 0.4), identity(3))), 1e-14);
    EXPECT_LT(unitarity_residual(r), 1e-10);
}

TEST(Rotation, FiniteDurationApproachesIdealForShortPulses) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, 1.0);
    const ComplexMatrix ideal = rotation_operator(PulseSpec::ideal(kPi), p);
    const ComplexMatrix finite = rotation_operator(PulseSpec::finite(kPi, 1e-13), p);
    EXPECT_LT(unitarity_residual(finite), 1e-10);
    EXPECT_LT(max_abs(ideal - finite), 1e-3);
    const ComplexMatrix realistic = rotation_operator(PulseSpec::finite(kPi, 112e-9), p);
    EXPECT_LT(unitarity_residual(realistic), 1e-10);
    EXPECT_GT(max_abs(ideal - realistic), 1e-3);
}

TEST(Rotation, InvalidPulsesRejected) {
    EXPECT_THROW(PulseSpec::ideal(0.0).validate(), std::invalid_argument);
    EXPECT_THROW(PulseSpec::ideal(7.0).validate(), std::invalid_argument);
    PulseSpec f = PulseSpec::finite(kPi, 1e-9);
    f.duration_s = 0.0;
    EXPECT_THROW(f.validate(), std::invalid_argument);
    EXPECT_THROW(rotation_operator(f, nc60_preset()), std::invalid_argument);
    EXPECT_NO_THROW(PulseSpec::ideal(2 * kPi).validate());
}

TEST(Engine, NamesRoundTrip) {
    for (Engine e : {Engine::AverageHamiltonian, Engine::ExactLabFrame, Engine::SteppedRotatingFrame})
        EXPECT_EQ(parse_engine(to_string(e)), e);
    EXPECT_THROW(parse_engine("magic"), std::invalid_argument);
}

TEST(FreeEvolution, ZeroTauIsIdentity) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, 1.0);
    for (Engine e : {Engine::AverageHamiltonian, Engine::ExactLabFrame, Engine::SteppedRotatingFrame})
        EXPECT_LT(max_abs(free_evolution(e, p, 0.0, 3.3e-9) - identity(12)), 1e-10) << to_string(e);
}

TEST(FreeEvolution, PropagatorsAreUnitary) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, -1.0);
    for (Engine e : {Engine::AverageHamiltonian, Engine::ExactLabFrame, Engine::SteppedRotatingFrame}) {
        const FreeEvolver ev(e, p);
        for (double tau : {1.7e-11, 2.5e-9, 3.3e-6, 97.1e-6})
            EXPECT_LT(unitarity_residual(ev.propagator(tau, 1.23e-11)), 1e-10) << to_string(e) << " tau=" << tau;
    }
}

TEST(FreeEvolution, AverageEngineIsDiagonalWithSecularPhases) {
    const SpinSystemParams p = nc60_preset();
    const double tau = 13.7e-6;
    const ComplexMatrix u = free_evolution(Engine::AverageHamiltonian, p, tau, 0.0);
    const ComplexMatrix h = h_avg0(p) + h_avg1(p);
    for (int j = 0; j < 12; ++j)
        for (int k = 0; k < 12; ++k) {
            const Complex expected = j == k ? std::polar(1.0, -h(j, j).real() * tau) : Complex(0.0);
            EXPECT_LT(std::abs(u(j, k) - expected), 1e-9);
        }
}

TEST(FreeEvolution, SteppedEngineComposesAcrossPeriods) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, 1.0);
    const FreeEvolver ev(Engine::SteppedRotatingFrame, p);
    const double period = 1.0 / p.f_mw_hz;
    const double t0 = 0.37 * period, t2 = 5.1e-6;
    // Split on the substep grid: identical substeps, so only round-off differs.
    const double t1 = 23000 * period + 5 * period / kDefaultStepsPerPeriod;
    const ComplexMatrix whole = ev.propagator(t2 - t0, t0);
    EXPECT_LT(max_abs(whole - ev.propagator(t2 - t1, t1) * ev.propagator(t1 - t0, t0)), 1e-9);
    // Off-grid split: partial substeps change, difference is discretisation error.
    const double t1_off = 23000.3 * period;
    EXPECT_LT(max_abs(whole - ev.propagator(t2 - t1_off, t1_off) * ev.propagator(t1_off - t0, t0)), 1e-5);
}

TEST(FreeEvolution, SteppedEngineRejectsCoarseSubsteps) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, 1.0);
    EXPECT_THROW(FreeEvolver(Engine::SteppedRotatingFrame, p, 19), std::invalid_argument);
    EXPECT_NO_THROW(FreeEvolver(Engine::SteppedRotatingFrame, p, 20));
    EXPECT_THROW(free_evolution(Engine::AverageHamiltonian, p, -1e-9, 0.0), std::invalid_argument);
}

TEST(FreeEvolution, ExactEngineReproducesSecondOrderPhases) {
    // Outer-vs-inner echo phase advances at 2 delta in both engines; they differ
    // only through higher-order terms.
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, 1.0);
    const FreeEvolver exact(Engine::ExactLabFrame, p);
    const FreeEvolver aht(Engine::AverageHamiltonian, p);
    const ComplexMatrix refocus = rotation_operator(PulseSpec::ideal(kPi), p);
    const double d = delta_hz(p);
    const double rel = std::abs(p.a_hz) / p.f_e_hz;
    for (int k = 1; k <= 20; ++k) {
        const double tau = 5e-6 * k;
        const double ph_exact = echo_outer_phase(echo_operator(exact, refocus, tau), p, 1.0);
        const double ph_aht = echo_outer_phase(echo_operator(aht, refocus, tau), p, 1.0);
        const double accumulated = 2.0 * kTwoPi * d * tau;
        EXPECT_LT(std::abs(std::remainder(ph_exact - ph_aht, kTwoPi)), 4.0 * rel * accumulated) << "tau=" << tau;
    }
}

TEST(Echo, IdealOuterLinesFollowCosineLaw) {
    for (double m_i : {1.0, -1.0}) {
        const EchoExperiment exp = ideal_echo(m_i);
        const EchoTrace trace = run_two_pulse_echo(exp);
        const double d = delta_hz(exp.system);
        ASSERT_EQ(trace.size(), 512u);
        for (std::size_t k = 0; k < trace.size(); ++k)
            EXPECT_NEAR(trace.v[k], 2.0 + 3.0 * std::cos(2.0 * kTwoPi * d * trace.tau_s[k]), 1e-9);
        EXPECT_LE(trace.max_imag_residual, 1e-9);
    }
}

TEST(Echo, CentralLineIsFlat) {
    // Only a linear Sz term survives in the M_I = 0 block, so the echo stays
    // at the outer lines' tau = 0 value 2 sin(t1) sin^2(t2/2) (A0 + A1 + A2).
    for (double th2 : {kPi, 2 * kPi / 3}) {
        EchoExperiment exp = ideal_echo(0.0);
        exp.pulse2 = PulseSpec::ideal(th2);
        const double expected = 5.0 * std::pow(std::sin(th2 / 2), 2);
        for (double v : run_two_pulse_echo(exp).v) EXPECT_NEAR(v, expected, 1e-9);
    }
}

TEST(Echo, SignChangesAtQuarterPeriod) {
    EchoExperiment exp = ideal_echo(1.0);
    exp.tau_grid = {0.25 / delta_hz(exp.system)};
    EXPECT_NEAR(run_two_pulse_echo(exp).v[0], -1.0, 1e-9);
}

TEST(Echo, OffResonanceIsRefocused) {
    const EchoTrace ref = run_two_pulse_echo(ideal_echo(1.0, 64));
    for (double off : {-2e6, -0.7e6, 0.3e6, 2e6}) {
        EchoExperiment exp = ideal_echo(1.0, 64);
        exp.resonance_offset_hz = off;
        const EchoTrace t = run_two_pulse_echo(exp);
        for (std::size_t k = 0; k < t.size(); ++k) EXPECT_NEAR(t.v[k], ref.v[k], 1e-9) << "offset=" << off;
    }
}

TEST(Echo, OuterLinesAreSymmetric) {
    for (double th2 : {kPi, 2 * kPi / 3, 1.1}) {
        EchoExperiment plus = ideal_echo(1.0, 128), minus = ideal_echo(-1.0, 128);
        plus.pulse2 = minus.pulse2 = PulseSpec::ideal(th2);
        const EchoTrace a = run_two_pulse_echo(plus), b = run_two_pulse_echo(minus);
        for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.v[k], b.v[k], 1e-9);
    }
}

TEST(Echo, EchoOperatorHasOuterPhaseStructure) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, 1.0);
    const FreeEvolver ev(Engine::AverageHamiltonian, p);
    const ComplexMatrix refocus = rotation_operator(PulseSpec::ideal(kPi, kPi), p);
    const ProductBasis b = p.basis();
    for (double tau : {3e-6, 11e-6, 42e-6}) {
        const ComplexMatrix full = echo_operator(ev, refocus, tau);
        ComplexMatrix block(4, 4);
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) block(j, k) = full(b.index(1.5 - j, 1.0), b.index(1.5 - k, 1.0));
        // exp(-iH tau) with the +delta outer diagonal gives e^{-2i phi}.
        const Complex outer = std::polar(1.0, -2.0 * kTwoPi * delta_hz(p) * tau);
        const ComplexMatrix expected = Complex(0, -1) * anti_diagonal({outer, 1.0, 1.0, outer});
        EXPECT_LT(distance_up_to_phase(block, expected), 1e-9) << "tau=" << tau;
        EXPECT_NEAR(std::abs(std::remainder(echo_outer_phase(full, p, 1.0), kTwoPi)),
                    std::abs(std::remainder(2.0 * kTwoPi * delta_hz(p) * tau, kTwoPi)), 1e-9);
    }
}

TEST(Echo, SpinHalfShowsNoModulation) {
    for (double th2 : {kPi, 2 * kPi / 3}) {
        for (double m_i : {1.0, 0.0, -1.0}) {
            EchoExperiment exp = ideal_echo(m_i, 128);
            exp.system.s = SpinQuantumNumber(1);
            exp.pulse2 = PulseSpec::ideal(th2);
            const EchoTrace t = run_two_pulse_echo(exp);
            const auto [lo, hi] = std::minmax_element(t.v.begin(), t.v.end());
            EXPECT_LE(*hi - *lo, 1e-9);
            EXPECT_GT(std::abs(*hi), 0.1);
        }
    }
}

TEST(Echo, DensityMatrixInvariantsPreserved) {
    SpinSystemParams p = nc60_preset();
    p.f_mw_hz = line_center_hz(p, 1.0);
    const PairOperators op(p.basis());
    const ComplexMatrix r1 = rotation_operator(PulseSpec::ideal(kPi / 2), p);
    const ComplexMatrix r2 = rotation_operator(PulseSpec::ideal(2.0), p);
    for (Engine e : {Engine::AverageHamiltonian, Engine::ExactLabFrame, Engine::SteppedRotatingFrame}) {
        const FreeEvolver ev(e, p);
        const ComplexMatrix u = ev.propagator(7.3e-6, 7.3e-6) * r2 * ev.propagator(7.3e-6, 0.0) * r1;
        const ComplexMatrix sigma = u * op.s.z * u.adjoint();
        EXPECT_LT(hermiticity_residual(sigma), 1e-10);
        EXPECT_NEAR(std::abs(sigma.trace()), 0.0, 1e-10);
        EXPECT_NEAR((sigma * sigma).trace().real(), (op.s.z * op.s.z).trace().real(), 1e-9);
    }
}

TEST(Echo, TransverseDecayMultipliesTrace) {
    EchoExperiment exp = ideal_echo(1.0, 32);
    const EchoTrace bare = run_two_pulse_echo(exp);
    exp.t2_s = 210e-6;
    const EchoTrace damped = run_two_pulse_echo(exp);
    for (std::size_t k = 0; k < bare.size(); ++k)
        EXPECT_NEAR(damped.v[k], bare.v[k] * std::exp(-2.0 * bare.tau_s[k] / 210e-6), 1e-12);
    EXPECT_EQ(damped.meta("engine"), "average-hamiltonian");
    EXPECT_FALSE(damped.meta("t2_s").empty());
}

TEST(Echo, InvalidExperimentsRejected) {
    EchoExperiment exp = ideal_echo(1.0, 8);
    exp.tau_grid = {0.0, 2e-6, 1e-6};
    EXPECT_THROW(run_two_pulse_echo(exp), std::invalid_argument);
    exp.tau_grid = {-1e-6, 0.0};
    EXPECT_THROW(run_two_pulse_echo(exp), std::invalid_argument);
    exp = ideal_echo(0.5, 8);
    EXPECT_THROW(run_two_pulse_echo(exp), std::invalid_argument);
    exp = ideal_echo(1.0, 8);
    exp.t2_s = -1.0;
    EXPECT_THROW(run_two_pulse_echo(exp), std::invalid_argument);
}

TEST(Detect, ClosedFormValues) {
    const SpinSystemParams p = nc60_preset();
    const PairOperators op(p.basis());
    const ComplexMatrix sy_p = kron(spin_matrices(p.s).y, projector_mi(p.i, 1.0));
    EXPECT_NEAR(detect(sy_p, p, 1.0), 5.0, 1e-12);
    EXPECT_NEAR(detect(op.s.z, p, 1.0), 0.0, 1e-12);
    for (double m_i : {1.0, 0.0, -1.0}) {
        for (double phase : {kPi, 0.0}) {
            const ComplexMatrix r = rotation_operator(PulseSpec::ideal(kPi / 2, phase), p);
            const double v = detect(r * op.s.z * r.adjoint(), p, m_i);
            EXPECT_NEAR(v, phase == 0.0 ? -5.0 : 5.0, 1e-12);
        }
    }
}

TEST(Detect, MatchesEchoAtZeroDelay) {
    // 2 sin(t1) sin^2(t2/2) (A0 + A1 + A2) = 5 at tau = 0 for (pi/2, pi).
    EchoExperiment exp = ideal_echo(1.0, 2);
    EXPECT_NEAR(run_two_pulse_echo(exp).v[0], 5.0, 1e-12);
}

TEST(Aht, PresetFrequenciesAgree) {
    const AhtValidationReport r = validate_aht(nc60_preset(), 100e-6, 40);
    EXPECT_LT(r.frequency_rel_deviation, 0.01);
    EXPECT_TRUE(r.within_bound);
    EXPECT_FALSE(r.perturbative_warning);
    EXPECT_NEAR(r.frequency_aht_hz, 2.0 * delta_hz(nc60_preset()), 1e-6 * delta_hz(nc60_preset()));
}

TEST(Aht, DecoupledEnginesIdentical) {
    SpinSystemParams p = nc60_preset();
    p.a_hz = 0.0;
    const AhtValidationReport r = validate_aht(p, 20e-6, 10);
    EXPECT_LE(r.max_abs_v_deviation, 1e-10);
    EXPECT_LE(r.max_phase_deviation, 1e-10);
}

TEST(Aht, StrongCouplingFlagsWarning) {
    SpinSystemParams p = nc60_preset();
    p.a_hz = 0.1 * p.f_e_hz;
    EXPECT_TRUE(outside_perturbative_regime(p));
    const AhtValidationReport r = validate_aht(p, 10e-9, 4);
    EXPECT_TRUE(r.perturbative_warning);
}
