// spin_algebra.hpp: dense complex matrices, angular-momentum operators, product basis

#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace eseem {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// Absolute entrywise tolerances for operators of order unity. Checks on
// large-scale generators (lab-frame Hamiltonians in rad/s) scale them by
// max(1, max|M|).
struct Tolerances {
    double hermitian = 1e-12;
    double unitary = 1e-10;
};

inline constexpr Tolerances kDefaultTolerances{};

// --------------------------- spin quantum numbers ---------------------------

// Spin quantum number stored as 2s so half-integers stay exact.
class SpinQuantumNumber {
public:
    constexpr SpinQuantumNumber() = default;
    constexpr explicit SpinQuantumNumber(int twice_s) : twice_s_(twice_s) {
        if (twice_s < 0) throw std::invalid_argument("SpinQuantumNumber: 2s must be non-negative");
    }

    static SpinQuantumNumber from_value(double s) {
        const double twice = 2.0 * s;
        const long r = std::lround(twice);
        if (s < 0.0 || std::abs(twice - static_cast<double>(r)) > 1e-9)
            throw std::invalid_argument("SpinQuantumNumber: " + std::to_string(s) +
                                        " is not a non-negative multiple of 1/2");
        return SpinQuantumNumber(static_cast<int>(r));
    }

    constexpr int twice() const { return twice_s_; }
    constexpr double value() const { return 0.5 * twice_s_; }
    constexpr int multiplicity() const { return twice_s_ + 1; }

    // Projection of the k-th basis state, k = 0 .. 2s (descending).
    constexpr double projection(int k) const { return value() - k; }

    // Basis index of projection m; throws on invalid projections.
    int index_of(double m) const {
        const double k = value() - m;
        const long r = std::lround(k);
        if (std::abs(k - static_cast<double>(r)) > 1e-9 || r < 0 || r > twice_s_)
            throw std::invalid_argument("projection " + std::to_string(m) + " invalid for spin " +
                                        std::to_string(value()));
        return static_cast<int>(r);
    }

    friend constexpr bool operator==(SpinQuantumNumber, SpinQuantumNumber) = default;

private:
    int twice_s_ = 1;
};

// Electron-major product basis, projections descending:
// index = (s - M_S)(2i + 1) + (i - M_I).
struct ProductBasis {
    SpinQuantumNumber s;
    SpinQuantumNumber i;

    int dim() const { return s.multiplicity() * i.multiplicity(); }
    int index(double m_s, double m_i) const {
        return s.index_of(m_s) * i.multiplicity() + i.index_of(m_i);
    }
    double m_s(int index) const { return s.projection(index / i.multiplicity()); }
    double m_i(int index) const { return i.projection(index % i.multiplicity()); }
};

// --------------------------- operators --------------------------------------

struct SpinMatrices {
    ComplexMatrix x, y, z;

    ComplexMatrix raising() const { return x + Complex(0.0, 1.0) * y; }
    ComplexMatrix lowering() const { return x - Complex(0.0, 1.0) * y; }
};

// Ladder-operator construction: <m+1|S+|m> = sqrt(s(s+1) - m(m+1)).
inline SpinMatrices spin_matrices(SpinQuantumNumber s) {
    const int n = s.multiplicity();
    const double sv = s.value();
    ComplexMatrix plus = ComplexMatrix::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        const double m = s.projection(k);
        plus(k - 1, k) = std::sqrt(sv * (sv + 1.0) - m * (m + 1.0));
    }
    const ComplexMatrix minus = plus.adjoint();
    SpinMatrices ops;
    ops.x = 0.5 * (plus + minus);
    ops.y = Complex(0.0, -0.5) * (plus - minus);
    ops.z = ComplexMatrix::Zero(n, n);
    for (int k = 0; k < n; ++k) ops.z(k, k) = s.projection(k);
    return ops;
}

inline ComplexMatrix identity(int n) { return ComplexMatrix::Identity(n, n); }

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    return Eigen::kroneckerProduct(a, b).eval();
}

inline double max_abs(const ComplexMatrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

inline double hermiticity_residual(const ComplexMatrix& m) {
    return max_abs(m - m.adjoint());
}

inline double unitarity_residual(const ComplexMatrix& m) {
    return max_abs(m * m.adjoint() - identity(static_cast<int>(m.rows())));
}

inline bool is_hermitian(const ComplexMatrix& m, double tol = kDefaultTolerances.hermitian) {
    return m.rows() == m.cols() && hermiticity_residual(m) <= tol * std::max(1.0, max_abs(m));
}

// Spectral decomposition of a Hermitian generator, reusable for many times t.
class HermitianEvolution {
public:
    explicit HermitianEvolution(const ComplexMatrix& h, const Tolerances& tol = kDefaultTolerances) {
        if (!is_hermitian(h, tol.hermitian))
            throw std::invalid_argument("expm_hermitian_generator: generator is not Hermitian");
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("expm_hermitian_generator: eigendecomposition failed");
        values_ = solver.eigenvalues();
        vectors_ = solver.eigenvectors();
    }

    // exp(-i H t)
    ComplexMatrix propagator(double t) const {
        Eigen::VectorXcd phases(values_.size());
        for (Eigen::Index k = 0; k < values_.size(); ++k)
            phases(k) = std::polar(1.0, -values_(k) * t);
        return vectors_ * phases.asDiagonal() * vectors_.adjoint();
    }

    const RealVector& eigenvalues() const { return values_; }
    const ComplexMatrix& eigenvectors() const { return vectors_; }

private:
    RealVector values_;
    ComplexMatrix vectors_;
};

// exp(-i H t) via eigendecomposition, H Hermitian.
inline ComplexMatrix expm_hermitian_generator(const ComplexMatrix& h, double t,
                                              const Tolerances& tol = kDefaultTolerances) {
    return HermitianEvolution(h, tol).propagator(t);
}

// Nuclear projector |m_i><m_i| in the (2i+1)-dimensional space.
inline ComplexMatrix projector_mi(SpinQuantumNumber i, double m_i) {
    const int k = i.index_of(m_i);
    ComplexMatrix p = ComplexMatrix::Zero(i.multiplicity(), i.multiplicity());
    p(k, k) = 1.0;
    return p;
}

// Operators of the coupled electron-nuclear pair in the product basis.
struct PairOperators {
    ProductBasis basis;
    SpinMatrices s;  // electron, embedded as S (x) 1
    SpinMatrices i;  // nucleus, embedded as 1 (x) I
    SpinMatrices s_local;
    SpinMatrices i_local;

    explicit PairOperators(ProductBasis b) : basis(b) {
        s_local = spin_matrices(b.s);
        i_local = spin_matrices(b.i);
        const ComplexMatrix one_s = identity(b.s.multiplicity());
        const ComplexMatrix one_i = identity(b.i.multiplicity());
        s = {kron(s_local.x, one_i), kron(s_local.y, one_i), kron(s_local.z, one_i)};
        i = {kron(one_s, i_local.x), kron(one_s, i_local.y), kron(one_s, i_local.z)};
    }

    int dim() const { return basis.dim(); }
};

}  // namespace eseem
