// hamiltonians.hpp: isotropic electron-nuclear Hamiltonians, average Hamiltonians, stick spectrum

#pragma once

#include "eseem/spin_algebra.hpp"

#include <algorithm>
#include <vector>

namespace eseem {

namespace constants {
inline constexpr double kPlanck = 6.62607015e-34;          // J s
inline constexpr double kBohrMagneton = 9.2740100783e-24;  // J/T
inline constexpr double kGamma14N = 3.0777e6;              // Hz/T, 14N nuclear Larmor frequency per tesla
}  // namespace constants

// Coupled pair parameters. All frequencies linear (Hz); Hamiltonians are
// returned in angular units (rad/s).
struct SpinSystemParams {
    SpinQuantumNumber s{3};
    SpinQuantumNumber i{2};
    double a_hz = 15.8e6;
    double f_e_hz = 9.67e9;
    double f_i_hz = 0.0;
    double g = 2.0036;
    double f_mw_hz = 9.67e9;

    ProductBasis basis() const { return {s, i}; }

    // Static field implied by the electron Zeeman frequency.
    double b0_tesla() const { return constants::kPlanck * f_e_hz / (g * constants::kBohrMagneton); }

    // Electron Larmor frequency per tesla for this g.
    double gamma_e_hz_per_t() const { return g * constants::kBohrMagneton / constants::kPlanck; }

    void validate() const {
        if (!(f_e_hz > 0.0)) throw std::invalid_argument("SpinSystemParams: f_e_hz must be positive");
        if (!(g > 0.0)) throw std::invalid_argument("SpinSystemParams: g must be positive");
    }
};

// 14N nuclear Zeeman frequency at the field where the electron resonates at f_e.
inline double default_nitrogen_frequency(double f_e_hz, double g) {
    SpinSystemParams p;
    p.f_e_hz = f_e_hz;
    p.g = g;
    return constants::kGamma14N * p.b0_tesla();
}

// N@C60 in CS2: S = 3/2, I = 1 (14N), a = 15.8 MHz, X-band 9.67 GHz, g = 2.0036.
inline SpinSystemParams nc60_preset() {
    SpinSystemParams p;
    p.s = SpinQuantumNumber(3);
    p.i = SpinQuantumNumber(2);
    p.a_hz = 15.8e6;
    p.f_e_hz = 9.67e9;
    p.g = 2.0036;
    p.f_i_hz = default_nitrogen_frequency(p.f_e_hz, p.g);
    p.f_mw_hz = p.f_e_hz;
    return p;
}

// Second-order hyperfine shift a^2 / f_e, in Hz.
inline double delta_hz(const SpinSystemParams& p) {
    if (!(p.f_e_hz > 0.0)) throw std::invalid_argument("delta: f_e_hz must be positive");
    return p.a_hz * p.a_hz / p.f_e_hz;
}

inline bool outside_perturbative_regime(const SpinSystemParams& p, double max_ratio = 0.05) {
    return std::abs(p.a_hz) / p.f_e_hz > max_ratio;
}

// Centre of the hyperfine line m_i under h_avg0 + h_avg1 (first + second order).
inline double line_center_hz(const SpinSystemParams& p, double m_i) {
    const double iv = p.i.value();
    return p.f_e_hz + p.a_hz * m_i + 0.5 * delta_hz(p) * (iv * (iv + 1.0) - m_i * m_i);
}

// ---------------------------------------------------------------------------

// we Sz - wI Iz + a S.I
inline ComplexMatrix h0_lab(const SpinSystemParams& p) {
    const PairOperators op(p.basis());
    const ComplexMatrix sdoti = op.s.x * op.i.x + op.s.y * op.i.y + op.s.z * op.i.z;
    return kTwoPi * (p.f_e_hz * op.s.z - p.f_i_hz * op.i.z + p.a_hz * sdoti);
}

// Secular (zeroth-order average) Hamiltonian in the frame rotating at f_mw.
inline ComplexMatrix h_avg0(const SpinSystemParams& p) {
    const PairOperators op(p.basis());
    return kTwoPi * ((p.f_e_hz - p.f_mw_hz) * op.s.z - p.f_i_hz * op.i.z + p.a_hz * op.s.z * op.i.z);
}

// First-order average Hamiltonian correction
// (delta/2)[(I(I+1) - Iz^2) Sz - (S(S+1) - Sz^2) Iz].
inline ComplexMatrix h_avg1(const SpinSystemParams& p) {
    const PairOperators op(p.basis());
    const int n = op.dim();
    const double sv = p.s.value();
    const double iv = p.i.value();
    const ComplexMatrix one = identity(n);
    const ComplexMatrix term = (iv * (iv + 1.0) * one - op.i.z * op.i.z) * op.s.z -
                               (sv * (sv + 1.0) * one - op.s.z * op.s.z) * op.i.z;
    return kTwoPi * 0.5 * delta_hz(p) * term;
}

inline ComplexMatrix h_average(const SpinSystemParams& p) { return h_avg0(p) + h_avg1(p); }

// Rotating-frame Hamiltonian exp(i w Sz t) H0 exp(-i w Sz t) - w Sz, w = 2 pi f_mw.
// The flip-flop part of a S.I keeps both transverse products at every t:
// a[Sz Iz + (Sx Ix + Sy Iy) cos(wt) + (Sx Iy - Sy Ix) sin(wt)].
inline ComplexMatrix h_rot_t(const SpinSystemParams& p, double t) {
    const PairOperators op(p.basis());
    const double phase = kTwoPi * p.f_mw_hz * t;
    const double c = std::cos(phase);
    const double s = std::sin(phase);
    const ComplexMatrix coupling = op.s.z * op.i.z + c * (op.s.x * op.i.x + op.s.y * op.i.y) +
                                   s * (op.s.x * op.i.y - op.s.y * op.i.x);
    return kTwoPi * ((p.f_e_hz - p.f_mw_hz) * op.s.z - p.f_i_hz * op.i.z + p.a_hz * coupling);
}

// (2s+1)-dimensional block of H at nuclear projection m_i. H must not couple
// different M_I manifolds.
inline ComplexMatrix reduced_block(const ComplexMatrix& h, const SpinSystemParams& p, double m_i,
                                   double tol = kDefaultTolerances.hermitian) {
    const ProductBasis basis = p.basis();
    if (h.rows() != basis.dim() || h.cols() != basis.dim())
        throw std::invalid_argument("reduced_block: matrix dimension does not match the spin system");
    const double scale = std::max(1.0, max_abs(h));
    for (int r = 0; r < basis.dim(); ++r)
        for (int c = 0; c < basis.dim(); ++c)
            if (basis.m_i(r) != basis.m_i(c) && std::abs(h(r, c)) > tol * scale)
                throw std::invalid_argument("reduced_block: Hamiltonian couples different M_I manifolds");
    const int ns = p.s.multiplicity();
    const int k = p.i.index_of(m_i);
    ComplexMatrix block(ns, ns);
    for (int r = 0; r < ns; ++r)
        for (int c = 0; c < ns; ++c)
            block(r, c) = h(r * p.i.multiplicity() + k, c * p.i.multiplicity() + k);
    return block;
}

// Exact lab-frame energies (Hz) labelled by the product state of largest overlap;
// entry k belongs to basis index k.
inline std::vector<double> labelled_lab_levels_hz(const SpinSystemParams& p) {
    const HermitianEvolution eig(h0_lab(p));
    const int n = p.basis().dim();
    std::vector<double> levels(static_cast<std::size_t>(n), 0.0);
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int col = 0; col < n; ++col) {
        Eigen::Index row = 0;
        eig.eigenvectors().col(col).cwiseAbs2().maxCoeff(&row);
        if (taken[static_cast<std::size_t>(row)])
            throw std::runtime_error("labelled_lab_levels: ambiguous eigenstate labelling (strong mixing)");
        taken[static_cast<std::size_t>(row)] = true;
        levels[static_cast<std::size_t>(row)] = eig.eigenvalues()(col) / kTwoPi;
    }
    return levels;
}

// Second-order perturbative lab-frame energies: diagonal of h_avg0 + h_avg1 + w_mw Sz, in Hz.
inline std::vector<double> perturbative_lab_levels_hz(const SpinSystemParams& p) {
    const PairOperators op(p.basis());
    const ComplexMatrix h = h_average(p) + kTwoPi * p.f_mw_hz * op.s.z;
    std::vector<double> levels(static_cast<std::size_t>(op.dim()));
    for (int k = 0; k < op.dim(); ++k) levels[static_cast<std::size_t>(k)] = h(k, k).real() / kTwoPi;
    return levels;
}

// ------------------------------ stick spectrum ------------------------------

struct StickLine {
    double m_i = 0.0;
    double m_s_lower = 0.0;     // transition M_S -> M_S + 1
    double offset_hz = 0.0;     // transition frequency minus f_e
    double field_offset_ut = 0.0;  // offset_hz expressed as an equivalent field, microtesla
    double intensity = 0.0;     // |<M_S+1|S+|M_S>|^2
};

// Allowed transitions dM_S = 1 at fixed M_I with positions from exact h0_lab
// eigenvalues. Lines are ordered by M_I descending, then M_S descending.
inline std::vector<StickLine> epr_stick_spectrum(const SpinSystemParams& p) {
    p.validate();
    const ProductBasis basis = p.basis();
    const std::vector<double> levels = labelled_lab_levels_hz(p);
    const double sv = p.s.value();
    const double hz_to_ut = 1e6 / p.gamma_e_hz_per_t();
    std::vector<StickLine> lines;
    for (int ki = 0; ki < p.i.multiplicity(); ++ki) {
        const double m_i = p.i.projection(ki);
        for (int ks = p.s.multiplicity() - 1; ks >= 1; --ks) {
            const double m_s = p.s.projection(ks);
            const double upper = levels[static_cast<std::size_t>(basis.index(m_s + 1.0, m_i))];
            const double lower = levels[static_cast<std::size_t>(basis.index(m_s, m_i))];
            StickLine line;
            line.m_i = m_i;
            line.m_s_lower = m_s;
            line.offset_hz = upper - lower - p.f_e_hz;
            line.field_offset_ut = line.offset_hz * hz_to_ut;
            line.intensity = (sv - m_s) * (sv + m_s + 1.0);
            lines.push_back(line);
        }
    }
    std::stable_sort(lines.begin(), lines.end(), [](const StickLine& x, const StickLine& y) {
        return x.m_i != y.m_i ? x.m_i > y.m_i : x.m_s_lower > y.m_s_lower;
    });
    return lines;
}

}  // namespace eseem
