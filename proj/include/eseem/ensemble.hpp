// ensemble.hpp: averaging over refocusing-angle distributions (B1 inhomogeneity), T2 damping

#pragma once

#include "eseem/analytic_models.hpp"
#include "eseem/pulse_engine.hpp"

#include <atomic>
#include <cstdint>
#include <exception>
#include <optional>
#include <random>
#include <span>
#include <thread>

namespace eseem {

enum class DistributionKind { Point, Gaussian };
enum class QuadratureRule { GaussHermite, MonteCarlo };

inline constexpr int kDefaultQuadratureNodes = 41;

struct AngleNode {
    double angle = 0.0;
    double weight = 0.0;
};

// Probabilists' Gauss-Hermite rule (weight exp(-x^2/2)) by Golub-Welsch;
// weights normalised to sum to one.
inline std::vector<AngleNode> gauss_hermite_rule(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite_rule: need at least one node");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
    std::vector<AngleNode> rule(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int k = 0; k < n; ++k) {
        const double v0 = solver.eigenvectors()(0, k);
        rule[static_cast<std::size_t>(k)] = {solver.eigenvalues()(k), v0 * v0};
        total += v0 * v0;
    }
    for (auto& node : rule) node.weight /= total;
    // Symmetrise so the odd rule contains the mean exactly and is mirror-exact.
    for (int k = 0; k < n / 2; ++k) {
        auto& lo = rule[static_cast<std::size_t>(k)];
        auto& hi = rule[static_cast<std::size_t>(n - 1 - k)];
        const double x = 0.5 * (hi.angle - lo.angle);
        const double w = 0.5 * (hi.weight + lo.weight);
        lo = {-x, w};
        hi = {x, w};
    }
    if (n % 2 == 1) rule[static_cast<std::size_t>(n / 2)].angle = 0.0;
    return rule;
}

// Order-independent summation for deterministic ensemble accumulation.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct AngleDistribution {
    DistributionKind kind = DistributionKind::Point;
    double mean = kPi;
    double sigma = 0.0;
    int quadrature_nodes = kDefaultQuadratureNodes;
    QuadratureRule rule = QuadratureRule::GaussHermite;
    std::optional<std::uint64_t> seed;  // required for Monte Carlo
    int samples = 4096;                 // Monte Carlo only

    static AngleDistribution point(double mean) {
        AngleDistribution d;
        d.mean = mean;
        return d;
    }

    static AngleDistribution gaussian(double mean, double sigma, int nodes = kDefaultQuadratureNodes) {
        AngleDistribution d;
        d.kind = DistributionKind::Gaussian;
        d.mean = mean;
        d.sigma = sigma;
        d.quadrature_nodes = nodes;
        return d;
    }

    static AngleDistribution monte_carlo(double mean, double sigma, int samples, std::uint64_t seed) {
        AngleDistribution d = gaussian(mean, sigma);
        d.rule = QuadratureRule::MonteCarlo;
        d.samples = samples;
        d.seed = seed;
        return d;
    }

    void validate() const {
        if (!(sigma >= 0.0)) throw std::invalid_argument("AngleDistribution: sigma must be non-negative");
        if (kind == DistributionKind::Gaussian && rule == QuadratureRule::GaussHermite &&
            (quadrature_nodes < 3 || quadrature_nodes % 2 == 0))
            throw std::invalid_argument("AngleDistribution: quadrature_nodes must be odd and >= 3");
        if (rule == QuadratureRule::MonteCarlo && !seed)
            throw std::invalid_argument("AngleDistribution: Monte Carlo averaging requires a seed");
        if (rule == QuadratureRule::MonteCarlo && samples < 1)
            throw std::invalid_argument("AngleDistribution: Monte Carlo needs at least one sample");
    }

    std::vector<AngleNode> nodes() const {
        validate();
        if (kind == DistributionKind::Point || sigma == 0.0) return {{mean, 1.0}};
        std::vector<AngleNode> out;
        if (rule == QuadratureRule::MonteCarlo) {
            std::mt19937_64 rng(*seed);
            std::normal_distribution<double> normal(mean, sigma);
            const double w = 1.0 / samples;
            for (int k = 0; k < samples; ++k) out.push_back({normal(rng), w});
            return out;
        }
        for (const AngleNode& n : gauss_hermite_rule(quadrature_nodes)) out.push_back({mean + sigma * n.angle, n.weight});
        return out;
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(10);
        if (kind == DistributionKind::Point || sigma == 0.0) {
            os << "point mean=" << mean;
        } else if (rule == QuadratureRule::GaussHermite) {
            os << "gaussian mean=" << mean << " sigma=" << sigma << " rule=gauss-hermite nodes=" << quadrature_nodes;
        } else {
            os << "gaussian mean=" << mean << " sigma=" << sigma << " rule=monte-carlo samples=" << samples
               << " seed=" << *seed;
        }
        return os.str();
    }
};

// Closed-form echo model for S = 3/2, I = 1: outer lines for m_i = +-1; for
// m_i = 0 the flat level normalised like the outer lines (central_line_amplitude).
struct AnalyticEchoModel {
    double theta1 = kPi / 2;
    double theta2 = kPi;
    double delta_hz = 0.0;
    double m_i = 1.0;
    std::vector<double> tau_grid;
    std::optional<double> t2_s;
};

inline EchoTrace evaluate_analytic(const AnalyticEchoModel& m) {
    EchoTrace trace;
    trace.tau_s = m.tau_grid;
    for (double tau : m.tau_grid) {
        double v = m.m_i == 0.0 ? central_line_amplitude(m.theta1, m.theta2) : v_outer(tau, m.theta1, m.theta2, m.delta_hz);
        if (m.t2_s) v *= std::exp(-2.0 * tau / *m.t2_s);
        trace.v.push_back(v);
    }
    trace.set_meta("engine", "analytic");
    const ModulationCoefficients c = coefficients(m.theta2);
    trace.set_meta("coefficients", detail::format_double(c.a0) + "," + detail::format_double(c.a1) + "," +
                                       detail::format_double(c.a2));
    return trace;
}

namespace detail {

// Nodes are evaluated on worker threads; each writes only its own slot and the
// sum runs in node order afterwards, so results do not depend on scheduling.
template <class Evaluate>
EchoTrace weighted_average(const std::vector<AngleNode>& nodes, std::size_t n_tau, Evaluate&& evaluate) {
    std::vector<EchoTrace> traces(nodes.size());
    std::vector<std::exception_ptr> errors(nodes.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t j; (j = next.fetch_add(1)) < nodes.size();) {
            try {
                traces[j] = evaluate(nodes[j].angle);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    const std::size_t workers =
        std::min<std::size_t>(nodes.size(), std::max(1u, std::thread::hardware_concurrency()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
        work();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<double> column(nodes.size());
    EchoTrace out = std::move(traces.front());
    for (std::size_t k = 0; k < n_tau; ++k) {
        for (std::size_t j = 0; j < nodes.size(); ++j)
            column[j] = nodes[j].weight * (j == 0 ? out.v[k] : traces[j].v[k]);
        out.v[k] = pairwise_sum(column);
    }
    return out;
}

}  // namespace detail

// Expectation of the numerical echo trace over a distribution of the
// refocusing angle. Each node scales pulse 2 (all composite segments) by
// angle/mean; with shared_b1 pulse 1 is scaled by the same factor.
inline EchoTrace average_trace(const EchoExperiment& exp, const AngleDistribution& dist, bool shared_b1 = false) {
    exp.validate();
    if (!(dist.mean > 0.0)) throw std::invalid_argument("average_trace: distribution mean must be positive");
    const std::vector<AngleNode> nodes = dist.nodes();
    EchoTrace out = detail::weighted_average(nodes, exp.tau_grid.size(), [&](double angle) {
        EchoExperiment e = exp;
        const double factor = angle / dist.mean;
        e.pulse2 = exp.pulse2.scaled(factor);
        if (shared_b1) e.pulse1 = exp.pulse1.scaled(factor);
        return detail::simulate_echo(e);
    });
    out.set_meta("pulse2", exp.pulse2.describe());
    out.set_meta("pulse1", exp.pulse1.describe());
    out.set_meta("ensemble", dist.describe() + (shared_b1 ? " shared_b1" : ""));
    return out;
}

inline EchoTrace average_trace(const AnalyticEchoModel& model, const AngleDistribution& dist, bool shared_b1 = false) {
    if (!(dist.mean > 0.0)) throw std::invalid_argument("average_trace: distribution mean must be positive");
    const std::vector<AngleNode> nodes = dist.nodes();
    EchoTrace out = detail::weighted_average(nodes, model.tau_grid.size(), [&](double angle) {
        AnalyticEchoModel m = model;
        const double factor = angle / dist.mean;
        m.theta2 = model.theta2 * factor;
        if (shared_b1) m.theta1 = model.theta1 * factor;
        return evaluate_analytic(m);
    });
    out.set_meta("ensemble", dist.describe() + (shared_b1 ? " shared_b1" : ""));
    const ModulationCoefficients c = coefficients(model.theta2);
    out.set_meta("coefficients", detail::format_double(c.a0) + "," + detail::format_double(c.a1) + "," +
                                     detail::format_double(c.a2));
    return out;
}

// Ratio of the delta and 2 delta cosine amplitudes of the ensemble-averaged
// outer-line echo: |E[sin^2(t/2) A1(t)]| / |E[sin^2(t/2) A2(t)]|.
inline double i1_i2_ratio(const AngleDistribution& dist) {
    std::vector<double> low, high;
    for (const AngleNode& n : dist.nodes()) {
        const ModulationCoefficients c = coefficients(n.angle);
        const double pref = std::pow(std::sin(n.angle / 2), 2);
        low.push_back(n.weight * pref * c.a1);
        high.push_back(n.weight * pref * c.a2);
    }
    const double denom = std::abs(pairwise_sum(high));
    if (denom == 0.0) throw std::domain_error("i1_i2_ratio: 2 delta amplitude vanishes");
    return std::abs(pairwise_sum(low)) / denom;
}

// v(tau) exp(-2 tau / T2)
inline EchoTrace apply_t2(EchoTrace trace, double t2_s) {
    if (!(t2_s > 0.0)) throw std::invalid_argument("apply_t2: t2_s must be positive");
    for (std::size_t k = 0; k < trace.size(); ++k) trace.v[k] *= std::exp(-2.0 * trace.tau_s[k] / t2_s);
    trace.set_meta("t2_s", detail::format_double(t2_s));
    return trace;
}

}  // namespace eseem
