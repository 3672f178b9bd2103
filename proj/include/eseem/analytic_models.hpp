// analytic_models.hpp: closed-form two-pulse ESEEM for isotropic hyperfine coupling

#pragma once

#include "eseem/spin_algebra.hpp"

#include <vector>

namespace eseem {

struct ModulationCoefficients {
    double a0 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    double theta2 = 0.0;
};

// Amplitudes of the constant, delta and 2 delta terms for the S = 3/2, I = 1
// outer lines, as functions of the refocusing angle.
inline ModulationCoefficients coefficients(double theta2) {
    const double c2 = std::pow(std::cos(theta2 / 2), 2);
    const double s2 = std::pow(std::sin(theta2 / 2), 2);
    return {1.0 - 6.0 * c2 + 13.5 * c2 * c2, 6.0 * c2 * (2.0 - 3.0 * c2), 1.5 * s2 * (1.0 - 3.0 * c2), theta2};
}

inline double echo_prefactor(double theta1, double theta2) {
    return 2.0 * std::sin(theta1) * std::pow(std::sin(theta2 / 2), 2);
}

// Outer (M_I = +-1) line: 2 sin(t1) sin^2(t2/2)[A0 + A1 cos(2 pi d tau) + A2 cos(4 pi d tau)].
inline double v_outer(double tau, double theta1, double theta2, double delta_hz) {
    const ModulationCoefficients c = coefficients(theta2);
    const double w = kTwoPi * delta_hz * tau;
    return echo_prefactor(theta1, theta2) * (c.a0 + c.a1 * std::cos(w) + c.a2 * std::cos(2.0 * w));
}

// Central (M_I = 0) line: no modulation, 2 sin(t1) sin^2(t2/2).
inline double v_center(double /*tau*/, double theta1, double theta2) { return echo_prefactor(theta1, theta2); }

// Central-line level with the same normalisation as v_outer. A0 + A1 + A2 = 5/2
// for every theta2, so this is v_outer at tau = 0 and 5/2 times v_center.
inline double central_line_amplitude(double theta1, double theta2) {
    const ModulationCoefficients c = coefficients(theta2);
    return echo_prefactor(theta1, theta2) * (c.a0 + c.a1 + c.a2);
}

// Weights (S - M_S)(S + M_S + 1) for M_S = S, S-1, ..., -S.
inline std::vector<double> general_coefficients(SpinQuantumNumber s) {
    std::vector<double> out;
    const double sv = s.value();
    for (int k = 0; k < s.multiplicity(); ++k) {
        const double m = s.projection(k);
        out.push_back((sv - m) * (sv + m + 1.0));
    }
    return out;
}

// Perfect-refocusing law for arbitrary S:
// sum_{M_S} (S - M_S)(S + M_S + 1) exp(i (1 + 2 M_S) M_I 2 pi d tau).
// Defined up to a positive constant (theta1 = pi/2, theta2 = pi assumed);
// the real part is the physical signal.
inline Complex v_general(SpinQuantumNumber s, double m_i, double tau, double delta_hz) {
    const std::vector<double> w = general_coefficients(s);
    Complex sum = 0.0;
    for (int k = 0; k < s.multiplicity(); ++k) {
        const double m = s.projection(k);
        sum += w[static_cast<std::size_t>(k)] * std::polar(1.0, (1.0 + 2.0 * m) * m_i * kTwoPi * delta_hz * tau);
    }
    return sum;
}

}  // namespace eseem
