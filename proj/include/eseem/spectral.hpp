// spectral.hpp: echo-trace spectra, peak picking and decay fitting

#pragma once

#include "eseem/pulse_engine.hpp"

#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/LevenbergMarquardt>

#include <algorithm>
#include <array>
#include <numeric>

namespace eseem {

enum class Window { Rectangular, Hann };

inline std::string_view to_string(Window w) { return w == Window::Hann ? "hann" : "rectangular"; }

inline Window parse_window(std::string_view name) {
    if (name == "hann") return Window::Hann;
    if (name == "rectangular") return Window::Rectangular;
    throw std::invalid_argument("unknown window '" + std::string(name) + "'");
}

inline constexpr int kDefaultZeroPad = 4;
inline constexpr double kDefaultPeakThreshold = 0.05;

struct Spectrum {
    std::vector<double> freq_hz;     // 0 .. Nyquist, uniform
    std::vector<double> magnitude;   // |X_k|
    Window window = Window::Hann;
    int zero_pad_factor = kDefaultZeroPad;
    std::size_t fft_length = 0;
    double windowed_energy = 0.0;    // sum of squared windowed, mean-subtracted samples
    double reference_scale = 0.0;    // magnitude a full-scale tone of the record would reach
};

struct Peak {
    double freq_hz = 0.0;
    double magnitude = 0.0;
};

struct PeakList {
    std::vector<Peak> peaks;  // ascending frequency
    std::string method = "parabolic-interpolation local maxima";

    bool empty() const { return peaks.empty(); }
    std::size_t size() const { return peaks.size(); }

    // Peak nearest to freq within rel_tol * freq, if any.
    std::optional<Peak> near(double freq, double rel_tol) const {
        std::optional<Peak> best;
        for (const Peak& p : peaks)
            if (std::abs(p.freq_hz - freq) <= rel_tol * freq &&
                (!best || std::abs(p.freq_hz - freq) < std::abs(best->freq_hz - freq)))
                best = p;
        return best;
    }
};

inline double uniform_step(const std::vector<double>& grid, double rel_tol = 1e-9) {
    if (grid.size() < 2) throw std::invalid_argument("fft_magnitude: need at least two samples");
    const double step = (grid.back() - grid.front()) / static_cast<double>(grid.size() - 1);
    if (!(step > 0.0)) throw std::invalid_argument("fft_magnitude: tau grid must be increasing");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (std::abs(grid[k] - grid[k - 1] - step) > rel_tol * std::max(step, std::abs(grid[k])))
            throw std::invalid_argument("fft_magnitude: tau grid is not uniform");
    return step;
}

inline std::vector<double> window_coefficients(Window w, std::size_t n) {
    std::vector<double> c(n, 1.0);
    if (w == Window::Hann && n > 1)
        for (std::size_t k = 0; k < n; ++k) c[k] = 0.5 * (1.0 - std::cos(kTwoPi * k / static_cast<double>(n - 1)));
    return c;
}

// Mean-subtracted, windowed, zero-padded one-sided magnitude spectrum. The
// frequency axis is modulation frequency in cycles per unit tau.
inline Spectrum fft_magnitude(const EchoTrace& trace, Window window = Window::Hann,
                              int zero_pad_factor = kDefaultZeroPad) {
    if (zero_pad_factor < 1) throw std::invalid_argument("fft_magnitude: zero_pad_factor must be >= 1");
    if (trace.v.size() != trace.tau_s.size()) throw std::invalid_argument("fft_magnitude: length mismatch");
    const double step = uniform_step(trace.tau_s);
    const std::size_t n = trace.v.size();
    const double mean = std::accumulate(trace.v.begin(), trace.v.end(), 0.0) / static_cast<double>(n);
    const std::vector<double> w = window_coefficients(window, n);

    Spectrum spec;
    spec.window = window;
    spec.zero_pad_factor = zero_pad_factor;
    spec.fft_length = n * static_cast<std::size_t>(zero_pad_factor);
    std::vector<double> padded(spec.fft_length, 0.0);
    double peak_abs = 0.0;
    double window_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        padded[k] = (trace.v[k] - mean) * w[k];
        spec.windowed_energy += padded[k] * padded[k];
        peak_abs = std::max(peak_abs, std::abs(trace.v[k]));
        window_sum += w[k];
    }
    spec.reference_scale = 0.5 * peak_abs * window_sum;

    Eigen::FFT<double> fft;
    std::vector<Complex> bins;
    fft.fwd(bins, padded);
    const std::size_t half = spec.fft_length / 2;
    const double df = 1.0 / (static_cast<double>(spec.fft_length) * step);
    for (std::size_t k = 0; k <= half; ++k) {
        spec.freq_hz.push_back(static_cast<double>(k) * df);
        spec.magnitude.push_back(std::abs(bins[k]));
    }
    return spec;
}

// Energy recovered from the one-sided spectrum (Parseval, even FFT length).
inline double spectrum_energy(const Spectrum& spec) {
    if (spec.magnitude.empty()) return 0.0;
    double sum = 0.0;
    const std::size_t last = spec.magnitude.size() - 1;
    for (std::size_t k = 0; k <= last; ++k) {
        const double m2 = spec.magnitude[k] * spec.magnitude[k];
        const bool edge = k == 0 || (k == last && spec.fft_length % 2 == 0);
        sum += edge ? m2 : 2.0 * m2;
    }
    return sum / static_cast<double>(spec.fft_length);
}

// Strict local maxima at or above rel_threshold * max, refined by a parabola
// through the three bins around each maximum.
inline PeakList find_peaks(const Spectrum& spec, double rel_threshold = kDefaultPeakThreshold) {
    PeakList out;
    const auto& m = spec.magnitude;
    if (m.size() < 3) return out;
    const double top = *std::max_element(m.begin(), m.end());
    if (!(top > 1e-9 * spec.reference_scale) || top == 0.0) return out;
    const double df = spec.freq_hz[1] - spec.freq_hz[0];
    for (std::size_t k = 1; k + 1 < m.size(); ++k) {
        if (!(m[k] > m[k - 1] && m[k] > m[k + 1]) || m[k] < rel_threshold * top) continue;
        const double a = m[k - 1], b = m[k], c = m[k + 1];
        const double denom = a - 2.0 * b + c;
        const double shift = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
        out.peaks.push_back({spec.freq_hz[k] + shift * df, b - 0.25 * (a - c) * shift});
    }
    return out;
}

// ------------------------------- fitting ------------------------------------

enum class FitModel { Exponential, ExpTwoCosine };

inline std::string_view to_string(FitModel m) { return m == FitModel::Exponential ? "exp" : "exp2cos"; }

inline FitModel parse_fit_model(std::string_view name) {
    if (name == "exp") return FitModel::Exponential;
    if (name == "exp2cos" || name == "exp-two-cosine") return FitModel::ExpTwoCosine;
    throw std::invalid_argument("unknown fit model '" + std::string(name) + "'");
}

struct FitResult {
    FitModel model = FitModel::Exponential;
    double v0 = 0.0;                           // exp model amplitude
    double t2_s = 0.0;
    double delta_hz = 0.0;                     // exp2cos only
    std::array<double, 3> amplitudes{};        // constant, delta, 2 delta (exp2cos only)
    double residual_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string status;
    std::vector<double> residual_history;      // residual norm after each accepted iteration
};

inline constexpr int kFitMaxIterations = 200;
inline constexpr double kFitTolerance = 1e-10;

namespace detail {

// Model in normalised time u = tau / tau_max.
// exp:     x = (v0, r)                    v = v0 e^{-r u}
// exp2cos: x = (c0, c1, c2, w, r)         v = (c0 + c1 cos(w u) + c2 cos(2 w u)) e^{-r u}
struct DecayFunctor : Eigen::DenseFunctor<double> {
    FitModel model;
    std::vector<double> u, y;

    DecayFunctor(FitModel m, std::vector<double> uu, std::vector<double> yy)
        : Eigen::DenseFunctor<double>(m == FitModel::Exponential ? 2 : 5, static_cast<int>(uu.size())),
          model(m), u(std::move(uu)), y(std::move(yy)) {}

    int operator()(const InputType& x, ValueType& f) const {
        for (std::size_t k = 0; k < u.size(); ++k) {
            const double e = std::exp(-x(model == FitModel::Exponential ? 1 : 4) * u[k]);
            double v;
            if (model == FitModel::Exponential) {
                v = x(0) * e;
            } else {
                v = (x(0) + x(1) * std::cos(x(3) * u[k]) + x(2) * std::cos(2.0 * x(3) * u[k])) * e;
            }
            f(static_cast<Eigen::Index>(k)) = v - y[k];
        }
        return 0;
    }

    int df(const InputType& x, JacobianType& j) const {
        for (std::size_t k = 0; k < u.size(); ++k) {
            const auto r = static_cast<Eigen::Index>(k);
            const double t = u[k];
            if (model == FitModel::Exponential) {
                const double e = std::exp(-x(1) * t);
                j(r, 0) = e;
                j(r, 1) = -t * x(0) * e;
            } else {
                const double e = std::exp(-x(4) * t);
                const double c1 = std::cos(x(3) * t), c2 = std::cos(2.0 * x(3) * t);
                const double s1 = std::sin(x(3) * t), s2 = std::sin(2.0 * x(3) * t);
                j(r, 0) = e;
                j(r, 1) = c1 * e;
                j(r, 2) = c2 * e;
                j(r, 3) = (-x(1) * t * s1 - 2.0 * x(2) * t * s2) * e;
                j(r, 4) = -t * (x(0) + x(1) * c1 + x(2) * c2) * e;
            }
        }
        return 0;
    }
};

// Log-linear fit log|y| = b - r u over the given samples; returns (b, r).
inline std::pair<double, double> log_linear(const std::vector<double>& u, const std::vector<double>& y) {
    double su = 0, sy = 0, suu = 0, suy = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (!(std::abs(y[k]) > 0.0)) continue;
        const double ly = std::log(std::abs(y[k]));
        su += u[k];
        sy += ly;
        suu += u[k] * u[k];
        suy += u[k] * ly;
        ++n;
    }
    if (n < 2) return {n == 1 ? sy : 0.0, 0.0};
    const double dn = static_cast<double>(n);
    const double den = dn * suu - su * su;
    if (den == 0.0) return {sy / dn, 0.0};
    const double slope = (dn * suy - su * sy) / den;
    return {(sy - slope * su) / dn, -slope};
}

// Modulation frequency guess from the spectrum: the lower of a ~1:2 pair, or
// half the dominant peak (the 2 delta line dominates under good refocusing).
inline double initial_delta(const EchoTrace& trace) {
    const PeakList peaks = find_peaks(fft_magnitude(trace, Window::Hann, 8), 0.02);
    if (peaks.empty()) return 0.0;
    const Peak top = *std::max_element(peaks.peaks.begin(), peaks.peaks.end(),
                                       [](const Peak& a, const Peak& b) { return a.magnitude < b.magnitude; });
    for (const Peak& p : peaks.peaks)
        if (std::abs(top.freq_hz - 2.0 * p.freq_hz) <= 0.05 * top.freq_hz) return p.freq_hz;
    for (const Peak& p : peaks.peaks)
        if (std::abs(p.freq_hz - 2.0 * top.freq_hz) <= 0.05 * p.freq_hz) return top.freq_hz;
    return 0.5 * top.freq_hz;
}

}  // namespace detail

// Nonlinear least squares (Levenberg-Marquardt) fit of a decay model.
inline FitResult fit_decay(const EchoTrace& trace, FitModel model) {
    const std::size_t n = trace.v.size();
    const std::size_t nparams = model == FitModel::Exponential ? 2 : 5;
    if (trace.tau_s.size() != n) throw std::invalid_argument("fit_decay: length mismatch");
    if (n < 8 * nparams) throw std::invalid_argument("fit_decay: need at least 8 samples per parameter");
    double vmax = 0.0;
    for (double v : trace.v) {
        if (!std::isfinite(v)) throw std::invalid_argument("fit_decay: degenerate data (non-finite samples)");
        vmax = std::max(vmax, std::abs(v));
    }
    if (vmax == 0.0) throw std::invalid_argument("fit_decay: degenerate data (all samples zero)");
    const double tau_max = trace.tau_s.back();
    if (!(tau_max > 0.0)) throw std::invalid_argument("fit_decay: degenerate data (zero tau span)");

    std::vector<double> u(n);
    for (std::size_t k = 0; k < n; ++k) u[k] = trace.tau_s[k] / tau_max;

    Eigen::VectorXd x(static_cast<Eigen::Index>(nparams));
    if (model == FitModel::Exponential) {
        const auto [b, r] = detail::log_linear(u, trace.v);
        const double sign = std::accumulate(trace.v.begin(), trace.v.end(), 0.0) < 0.0 ? -1.0 : 1.0;
        x << sign * std::exp(b), r;
    } else {
        const double delta0 = detail::initial_delta(trace);
        // Envelope from local maxima of v.
        std::vector<double> um, ym;
        for (std::size_t k = 0; k < n; ++k) {
            const bool left = k == 0 || trace.v[k] >= trace.v[k - 1];
            const bool right = k + 1 == n || trace.v[k] >= trace.v[k + 1];
            if (left && right && trace.v[k] > 0.0) {
                um.push_back(u[k]);
                ym.push_back(trace.v[k]);
            }
        }
        const double r0 = um.size() >= 2 ? std::max(0.0, detail::log_linear(um, ym).second) : 0.0;
        const double w0 = kTwoPi * delta0 * tau_max;
        // Linear amplitudes for the fixed (w0, r0).
        Eigen::MatrixXd a(static_cast<Eigen::Index>(n), 3);
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (std::size_t k = 0; k < n; ++k) {
            const double e = std::exp(-r0 * u[k]);
            const auto r = static_cast<Eigen::Index>(k);
            a(r, 0) = e;
            a(r, 1) = std::cos(w0 * u[k]) * e;
            a(r, 2) = std::cos(2.0 * w0 * u[k]) * e;
            y(r) = trace.v[k];
        }
        const Eigen::Vector3d c = a.colPivHouseholderQr().solve(y);
        x << c(0), c(1), c(2), w0, r0;
    }

    detail::DecayFunctor functor(model, u, trace.v);
    Eigen::LevenbergMarquardt<detail::DecayFunctor> lm(functor);
    lm.setXtol(kFitTolerance);
    lm.setFtol(kFitTolerance);
    lm.setMaxfev(100 * kFitMaxIterations);

    FitResult result;
    result.model = model;
    auto status = lm.minimizeInit(x);
    if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters)
        throw std::invalid_argument("fit_decay: improper input to the solver");
    result.residual_history.push_back(lm.fnorm());
    status = Eigen::LevenbergMarquardtSpace::Running;
    while (status == Eigen::LevenbergMarquardtSpace::Running && lm.iterations() < kFitMaxIterations) {
        status = lm.minimizeOneStep(x);
        result.residual_history.push_back(lm.fnorm());
    }

    using namespace Eigen::LevenbergMarquardtSpace;
    switch (status) {
        case RelativeReductionTooSmall: result.status = "relative reduction below tolerance"; break;
        case RelativeErrorTooSmall: result.status = "step below tolerance"; break;
        case RelativeErrorAndReductionTooSmall: result.status = "step and reduction below tolerance"; break;
        case CosinusTooSmall: result.status = "residual orthogonal to Jacobian"; break;
        case FtolTooSmall: result.status = "residual at machine precision"; break;
        case XtolTooSmall: result.status = "step at machine precision"; break;
        case GtolTooSmall: result.status = "gradient at machine precision"; break;
        case TooManyFunctionEvaluation: result.status = "too many function evaluations"; break;
        case Running: result.status = "iteration limit reached"; break;
        default: result.status = "solver failure"; break;
    }
    result.converged = status != Running && status != TooManyFunctionEvaluation &&
                       status != ImproperInputParameters && status != UserAsked;
    result.iterations = static_cast<int>(lm.iterations());
    result.residual_norm = lm.fnorm();

    const double rate = x(model == FitModel::Exponential ? 1 : 4);
    result.t2_s = rate > 0.0 ? 2.0 * tau_max / rate : std::numeric_limits<double>::infinity();
    if (model == FitModel::Exponential) {
        result.v0 = x(0);
    } else {
        result.delta_hz = std::abs(x(3)) / (kTwoPi * tau_max);
        result.amplitudes = {x(0), x(1), x(2)};
        result.v0 = x(0) + x(1) + x(2);
    }
    return result;
}

// ----------------------------- detrending ----------------------------------

enum class Detrend { Mean, Exponential };

inline std::string_view to_string(Detrend d) { return d == Detrend::Exponential ? "exp" : "mean"; }

inline Detrend parse_detrend(std::string_view name) {
    if (name == "exp") return Detrend::Exponential;
    if (name == "mean" || name == "none") return Detrend::Mean;
    throw std::invalid_argument("unknown detrend '" + std::string(name) + "'");
}

// Subtracts a fitted v0 exp(-2 tau / T2) baseline so the decay does not show up
// as a low-frequency hump. Traces too short or degenerate for the fit are
// returned unchanged (fft_magnitude still removes the mean).
inline EchoTrace detrend_exponential(EchoTrace trace) {
    FitResult f;
    try {
        f = fit_decay(trace, FitModel::Exponential);
    } catch (const std::invalid_argument&) {
        return trace;
    }
    if (!std::isfinite(f.v0)) return trace;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        const double e = std::isfinite(f.t2_s) ? std::exp(-2.0 * trace.tau_s[k] / f.t2_s) : 1.0;
        trace.v[k] -= f.v0 * e;
    }
    return trace;
}

inline Spectrum spectrum_of(const EchoTrace& trace, Detrend detrend = Detrend::Mean, Window window = Window::Hann,
                            int zero_pad_factor = kDefaultZeroPad) {
    if (detrend == Detrend::Mean) return fft_magnitude(trace, window, zero_pad_factor);
    Spectrum spec = fft_magnitude(detrend_exponential(trace), window, zero_pad_factor);
    // The noise floor follows the raw record: a trace that is all decay leaves
    // only rounding residue, which must not pass as lines.
    spec.reference_scale = std::max(spec.reference_scale, fft_magnitude(trace, window, zero_pad_factor).reference_scale);
    return spec;
}

}  // namespace eseem
