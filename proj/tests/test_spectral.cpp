#include "eseem/ensemble.hpp"
#include "eseem/spectral.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace eseem;

namespace {

const double kDelta = 25815.93;

template <class F>
EchoTrace synthetic(int n, double tau_max, F&& f) {
    EchoTrace t;
    t.tau_s = uniform_grid(0.0, tau_max, n);
    for (double tau : t.tau_s) t.v.push_back(f(tau));
    return t;
}

EchoTrace damped_ideal(int n = 512, double tau_max = 200e-6, double t2 = 210e-6) {
    return synthetic(n, tau_max, [&](double tau) {
        return (2.0 + 3.0 * std::cos(2.0 * kTwoPi * kDelta * tau)) * std::exp(-2.0 * tau / t2);
    });
}

double peak_near(const PeakList& peaks, double f) {
    const auto p = peaks.near(f, 0.05);
    return p ? p->magnitude : 0.0;
}

}  // namespace

TEST(Fft, SingleToneLandsOnItsBin) {
    const EchoTrace t = synthetic(512, 200e-6, [](double tau) { return std::cos(kTwoPi * 51.6e3 * tau); });
    const Spectrum s = fft_magnitude(t, Window::Hann, 4);
    const PeakList peaks = find_peaks(s, 0.05);
    ASSERT_EQ(peaks.size(), 1u);
    const double df = s.freq_hz[1] - s.freq_hz[0];
    EXPECT_NEAR(peaks.peaks[0].freq_hz, 51.6e3, df);
    EXPECT_EQ(s.fft_length, 2048u);
    EXPECT_NEAR(s.freq_hz.back(), 0.5 * 511 / 200e-6, 1e-6);
}

TEST(Fft, ConstantTraceHasNoPeaks) {
    const EchoTrace t = synthetic(256, 100e-6, [](double) { return 2.0; });
    const Spectrum s = fft_magnitude(t);
    for (double m : s.magnitude) EXPECT_GE(m, 0.0);
    EXPECT_TRUE(find_peaks(s, 0.05).empty());
}

TEST(Fft, DampedIdealEchoPeaksAtTwiceDelta) {
    const PeakList peaks = find_peaks(fft_magnitude(damped_ideal()), 0.05);
    ASSERT_FALSE(peaks.empty());
    const auto top = *std::max_element(peaks.peaks.begin(), peaks.peaks.end(),
                                       [](const Peak& a, const Peak& b) { return a.magnitude < b.magnitude; });
    EXPECT_NEAR(top.freq_hz, 2.0 * kDelta, 0.01 * 2.0 * kDelta);
}

TEST(Fft, RejectsNonUniformGrid) {
    EchoTrace t = synthetic(64, 10e-6, [](double tau) { return tau; });
    t.tau_s[10] += 1e-9;
    EXPECT_THROW(fft_magnitude(t), std::invalid_argument);
    EXPECT_THROW(fft_magnitude(t, Window::Hann, 0), std::invalid_argument);
    t.tau_s[10] -= 1e-9;
    t.tau_s[10] *= 1.0 + 1e-12;  // within tolerance
    EXPECT_NO_THROW(fft_magnitude(t));
}

TEST(Fft, ParsevalRectangular) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    for (int pad : {1, 2, 4}) {
        const EchoTrace t = synthetic(300, 80e-6, [&](double) { return normal(rng); });
        const Spectrum s = fft_magnitude(t, Window::Rectangular, pad);
        EXPECT_NEAR(spectrum_energy(s), s.windowed_energy, 1e-9 * s.windowed_energy);
    }
}

TEST(Fft, WindowNames) {
    EXPECT_EQ(parse_window("hann"), Window::Hann);
    EXPECT_EQ(parse_window(to_string(Window::Rectangular)), Window::Rectangular);
    EXPECT_THROW(parse_window("kaiser"), std::invalid_argument);
}

TEST(Peaks, InterpolatedFrequencyAccuracy) {
    for (int n : {256, 512}) {
        for (double f : {40e3, 51.6e3, 77.7e3, 123.4e3, 201.1e3}) {
            for (Window w : {Window::Hann, Window::Rectangular}) {
                const EchoTrace t = synthetic(n, 200e-6, [&](double tau) { return 1.0 + std::cos(kTwoPi * f * tau + 0.3); });
                const PeakList peaks = find_peaks(fft_magnitude(t, w, 4), 0.5);
                ASSERT_FALSE(peaks.empty());
                EXPECT_NEAR(peaks.peaks.back().freq_hz, f, 0.002 * f) << "n=" << n << " f=" << f;
            }
        }
    }
}

TEST(Peaks, SortedStrictMaximaAboveThreshold) {
    const EchoTrace t = synthetic(512, 200e-6, [](double tau) {
        return std::cos(kTwoPi * 30e3 * tau) + 0.5 * std::cos(kTwoPi * 90e3 * tau) + 0.07 * std::cos(kTwoPi * 150e3 * tau);
    });
    const Spectrum s = fft_magnitude(t, Window::Hann, 4);
    const PeakList peaks = find_peaks(s, 0.1);
    ASSERT_EQ(peaks.size(), 2u);
    EXPECT_LT(peaks.peaks[0].freq_hz, peaks.peaks[1].freq_hz);
    EXPECT_NEAR(peaks.peaks[1].magnitude / peaks.peaks[0].magnitude, 0.5, 0.02);
    EXPECT_EQ(find_peaks(s, 0.05).size(), 3u);  // Hann sidelobes stay below 3%
    EXPECT_TRUE(find_peaks(s, 1.01).empty());
}

TEST(Peaks, InhomogeneousEnsembleShowsBothLines) {
    AnalyticEchoModel m;
    m.delta_hz = kDelta;
    m.tau_grid = uniform_grid(0.0, 200e-6, 512);
    m.t2_s = 210e-6;
    const EchoTrace avg = average_trace(m, AngleDistribution::gaussian(kPi, 0.31));
    // The decaying baseline also leaves a low-frequency hump below delta.
    const PeakList peaks = find_peaks(fft_magnitude(avg), 0.05);
    const auto low = peaks.near(kDelta, 0.01), high = peaks.near(2 * kDelta, 0.01);
    ASSERT_TRUE(low && high);
    EXPECT_GT(high->magnitude, low->magnitude);
    for (const Peak& p : peaks.peaks) EXPECT_LT(p.freq_hz, 2.5 * kDelta);
}

TEST(Peaks, ImperfectRefocusingFavoursLowLine) {
    const EchoTrace t = synthetic(512, 200e-6, [](double tau) { return v_outer(tau, kPi / 2, 2 * kPi / 3, kDelta); });
    const PeakList peaks = find_peaks(fft_magnitude(t), 0.05);
    const double low = peak_near(peaks, kDelta), high = peak_near(peaks, 2 * kDelta);
    ASSERT_GT(high, 0.0);
    EXPECT_GT(low, high);
    EXPECT_NEAR(low / high, 1.875 / 0.28125, 0.05 * 1.875 / 0.28125);
}

TEST(Fit, NoiselessTwoCosineRecovery) {
    const FitResult r = fit_decay(damped_ideal(), FitModel::ExpTwoCosine);
    EXPECT_TRUE(r.converged) << r.status;
    EXPECT_NEAR(r.delta_hz, kDelta, 1e-3 * kDelta);
    EXPECT_NEAR(r.t2_s, 210e-6, 1e-3 * 210e-6);
    EXPECT_NEAR(r.amplitudes[0], 2.0, 1e-6);
    EXPECT_NEAR(r.amplitudes[1], 0.0, 1e-6);
    EXPECT_NEAR(r.amplitudes[2], 3.0, 1e-6);
    EXPECT_LT(r.residual_norm, 1e-8);
}

TEST(Fit, NoisyTwoCosineRecovery) {
    std::mt19937_64 rng(20240917);
    std::normal_distribution<double> noise(0.0, 0.05);  // 1% of the 5.0 full scale
    EchoTrace t = damped_ideal();
    for (double& v : t.v) v += noise(rng);
    const FitResult r = fit_decay(t, FitModel::ExpTwoCosine);
    EXPECT_TRUE(r.converged) << r.status;
    EXPECT_NEAR(r.delta_hz, kDelta, 0.02 * kDelta);
    EXPECT_NEAR(r.t2_s, 210e-6, 0.02 * 210e-6);
}

TEST(Fit, ImperfectRefocusingRecovery) {
    const EchoTrace t = synthetic(512, 200e-6, [](double tau) {
        return v_outer(tau, kPi / 2, 2 * kPi / 3, kDelta) * std::exp(-2.0 * tau / 150e-6);
    });
    const FitResult r = fit_decay(t, FitModel::ExpTwoCosine);
    const ModulationCoefficients c = coefficients(2 * kPi / 3);
    const double pref = echo_prefactor(kPi / 2, 2 * kPi / 3);
    EXPECT_NEAR(r.delta_hz, kDelta, 1e-3 * kDelta);
    EXPECT_NEAR(r.t2_s, 150e-6, 1e-3 * 150e-6);
    EXPECT_NEAR(r.amplitudes[1], pref * c.a1, 1e-6);
    EXPECT_NEAR(r.amplitudes[2], pref * c.a2, 1e-6);
}

TEST(Fit, PureExponential) {
    const EchoTrace t = synthetic(128, 300e-6, [](double tau) { return 2.0 * std::exp(-2.0 * tau / 210e-6); });
    const FitResult r = fit_decay(t, FitModel::Exponential);
    EXPECT_TRUE(r.converged) << r.status;
    EXPECT_NEAR(r.t2_s, 210e-6, 1e-3 * 210e-6);
    EXPECT_NEAR(r.v0, 2.0, 1e-6);
}

TEST(Fit, ResidualNeverIncreases) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.2);
    EchoTrace t = damped_ideal(256);
    for (double& v : t.v) v += noise(rng);
    const FitResult r = fit_decay(t, FitModel::ExpTwoCosine);
    ASSERT_GE(r.residual_history.size(), 2u);
    for (std::size_t k = 1; k < r.residual_history.size(); ++k)
        EXPECT_LE(r.residual_history[k], r.residual_history[k - 1] * (1.0 + 1e-12));
    EXPECT_LE(r.iterations, kFitMaxIterations);
}

TEST(Fit, DegenerateInputsRejected) {
    EXPECT_THROW(fit_decay(synthetic(64, 1e-4, [](double) { return 0.0; }), FitModel::Exponential), std::invalid_argument);
    EXPECT_THROW(fit_decay(synthetic(15, 1e-4, [](double) { return 1.0; }), FitModel::Exponential), std::invalid_argument);
    EXPECT_THROW(fit_decay(synthetic(39, 1e-4, [](double) { return 1.0; }), FitModel::ExpTwoCosine), std::invalid_argument);
    EXPECT_THROW(parse_fit_model("gauss"), std::invalid_argument);
    EXPECT_EQ(parse_fit_model("exp2cos"), FitModel::ExpTwoCosine);
}

TEST(Fit, EngineTraceGivesDelta) {
    EchoExperiment exp;
    exp.tau_grid = uniform_grid(0.0, 200e-6, 400);
    exp.t2_s = 210e-6;
    const FitResult r = fit_decay(run_two_pulse_echo(exp), FitModel::ExpTwoCosine);
    const double d = delta_hz(exp.system);
    EXPECT_NEAR(r.delta_hz, d, 0.01 * d);
}

TEST(Detrend, RemovesDecayHump) {
    const EchoTrace t = damped_ideal();
    const PeakList raw = find_peaks(spectrum_of(t, Detrend::Mean), 0.05);
    const PeakList clean = find_peaks(spectrum_of(t, Detrend::Exponential), 0.05);
    ASSERT_EQ(clean.size(), 1u);
    EXPECT_NEAR(clean.peaks[0].freq_hz, 2 * kDelta, 0.01 * 2 * kDelta);
    EXPECT_GT(raw.size(), clean.size());
    // Degenerate records come back untouched.
    const EchoTrace zero = synthetic(8, 1e-6, [](double) { return 0.0; });
    EXPECT_EQ(detrend_exponential(zero).v, zero.v);
    EXPECT_TRUE(find_peaks(spectrum_of(synthetic(64, 1e-4, [](double) { return 2.0; }), Detrend::Exponential)).empty());
    EXPECT_EQ(parse_detrend("exp"), Detrend::Exponential);
}
