#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "lchs/discretize.hpp"
#include "lchs/errors.hpp"
#include "lchs/grid.hpp"
#include "lchs/qubit_operator.hpp"
#include "lchs/tensor_train.hpp"

namespace lchs {

// Classical ground-truth engines: dense matrix exponentials, the Hamiltonian
// quadrature evaluated with dense exponentials, and explicit stencil time
// stepping of the two supported PDE families. These never touch the quantum
// circuit path, so disagreements between the two routes are meaningful.

using DenseMatrix = Eigen::MatrixXcd;

inline constexpr Eigen::Index kDenseDimensionCap = Eigen::Index(1) << 13;

// State snapshots with their Euclidean norms at increasing sample times.
struct TimeSeries {
    std::vector<double> times;
    std::vector<std::vector<Complex>> states;
    std::vector<double> norms;

    void validate() const {
        if (states.size() != times.size() || norms.size() != times.size())
            throw ConfigError("time series: times, states and norms lengths disagree");
        for (std::size_t s = 1; s < times.size(); ++s)
            if (!(times[s] > times[s - 1]))
                throw ConfigError("time series: times must be strictly increasing");
    }
};

namespace reference_detail {

inline void requireSquare(const DenseMatrix& m, const char* name) {
    if (m.rows() != m.cols()) throw ConfigError(std::string(name) + ": matrix must be square");
    if (m.rows() > kDenseDimensionCap)
        throw CapError(std::string(name) + ": dimension exceeds the dense cap");
}

inline std::vector<Complex> toAmplitudes(const Eigen::VectorXcd& v) {
    return std::vector<Complex>(v.data(), v.data() + v.size());
}

} // namespace reference_detail

// Dense propagator application exp(-m*t)*v. The exponential itself is
// evaluated by Eigen's scaling-and-squaring Pade routine.
inline Eigen::VectorXcd expmMultiply(const DenseMatrix& m, double t, const Eigen::VectorXcd& v) {
    reference_detail::requireSquare(m, "expmMultiply");
    if (v.size() != m.rows()) throw ConfigError("expmMultiply: vector length mismatch");
    if (t == 0.0) return v;
    const DenseMatrix p = ((-t) * m).exp();
    return p * v;
}

// Cauchy quadrature weight c_a = 2^-nFrac / (pi (1 + k_a^2)) attached to the
// ancilla branch a of the Hamiltonian combination.
inline double quadratureWeight(std::uint64_t a, int nAnc, int nFrac) {
    const double k = integrationPoint(a, nAnc, nFrac);
    return std::ldexp(1.0, -nFrac) / (M_PI * (1.0 + k * k));
}

inline double quadratureWeightSum(int nAnc, int nFrac) {
    double sum = 0.0;
    const std::uint64_t branches = std::uint64_t(1) << nAnc;
    for (std::uint64_t a = 0; a < branches; ++a) sum += quadratureWeight(a, nAnc, nFrac);
    return sum;
}

// Trotter-free quadrature reference: sum_a c_a exp(-i (h + k_a l) T) w0 with
// every branch propagated by a dense exponential.
inline Eigen::VectorXcd lchsQuadratureDense(const DenseMatrix& l, const DenseMatrix& h, double T,
                                            int nAnc, int nFrac, const Eigen::VectorXcd& w0) {
    reference_detail::requireSquare(l, "lchsQuadratureDense");
    reference_detail::requireSquare(h, "lchsQuadratureDense");
    if (l.rows() != h.rows()) throw ConfigError("lchsQuadratureDense: operator sizes differ");
    if (w0.size() != l.rows()) throw ConfigError("lchsQuadratureDense: vector length mismatch");
    if (nAnc > 16) throw CapError("lchsQuadratureDense: ancilla count exceeds the dense cap");

    const Complex minusIT(0.0, -T);
    const std::uint64_t branches = std::uint64_t(1) << nAnc;
    Eigen::VectorXcd acc = Eigen::VectorXcd::Zero(w0.size());
    for (std::uint64_t a = 0; a < branches; ++a) {
        const double k = integrationPoint(a, nAnc, nFrac);
        const DenseMatrix gen = minusIT * (h + k * l);
        acc += quadratureWeight(a, nAnc, nFrac) * (gen.exp() * w0);
    }
    return acc;
}

// Norm trace ||exp(-a t_s) w0|| at equally spaced sample times covering
// [0, T]. One dense exponential for the sample spacing is reused across the
// whole trace.
inline TimeSeries normTrace(const QubitOperator& a, const Statevector& w0, double T,
                            int samples) {
    if (samples < 2) throw ConfigError("normTrace: need at least two samples");
    if (!(T > 0.0)) throw ConfigError("normTrace: horizon must be positive");
    if (a.nQubits() != w0.nQubits) throw ConfigError("normTrace: operator/state size mismatch");

    const DenseMatrix m = toDense(a);
    const double dt = T / (samples - 1);
    const DenseMatrix step = ((-dt) * m).exp();

    Eigen::VectorXcd w = Eigen::Map<const Eigen::VectorXcd>(
        w0.amp.data(), static_cast<Eigen::Index>(w0.amp.size()));
    TimeSeries ts;
    ts.times.reserve(std::size_t(samples));
    ts.states.reserve(std::size_t(samples));
    ts.norms.reserve(std::size_t(samples));
    for (int s = 0; s < samples; ++s) {
        ts.times.push_back(dt * s);
        ts.states.push_back(reference_detail::toAmplitudes(w));
        ts.norms.push_back(w.norm());
        if (s + 1 < samples) w = step * w;
    }
    return ts;
}

struct FdmOptions {
    double tau = 1.0e-3;
};

struct FdmDiagnostics {
    std::uint64_t steps = 0;
    double cflLimit = std::numeric_limits<double>::infinity();
    bool cflWarning = false;
};

// Snapshot bundle from the explicit stencil integrator. The velocity series
// is populated for the second-order family only; it carries the centered
// time-difference of u, which is what the block-0 register amplitudes encode
// (up to the density square root).
struct FdmResult {
    TimeSeries u;
    TimeSeries uDot;
    FdmOptions options;
    FdmDiagnostics diagnostics;
};

namespace reference_detail {

// Node-value stencil engine with ghost-node boundary handling: Dirichlet
// faces pin the ghost value to zero, Neumann faces zero the boundary flux
// (equivalently mirror the adjacent value), periodic axes wrap. Face
// conductivities are the arithmetic mean of the adjacent node values, with
// coefficients mirrored into ghosts.
class StencilGrid {
public:
    StencilGrid(const PdeProblem& p)
        : grid_(p.grid), boundary_(p.boundary), nodes_(p.grid.nodeCount()), h_(p.grid.h) {
        kappa_.resize(nodes_);
        alpha_.resize(nodes_);
        for (std::uint64_t j = 0; j < nodes_; ++j) {
            kappa_[j] = p.kappa.at(j);
            alpha_[j] = p.alpha.at(j);
        }
        if (p.family == PdeFamily::SecondOrder) {
            rho_.resize(nodes_);
            zeta_.resize(nodes_);
            for (std::uint64_t j = 0; j < nodes_; ++j) {
                rho_[j] = p.rho.at(j);
                zeta_[j] = p.zeta.at(j);
            }
        } else {
            beta_.assign(std::size_t(grid_.d), std::vector<double>(nodes_, 0.0));
            if (!p.beta.empty())
                for (int mu = 0; mu < grid_.d; ++mu)
                    for (std::uint64_t j = 0; j < nodes_; ++j)
                        beta_[std::size_t(mu)][j] = p.beta[std::size_t(mu)].at(j);
        }
    }

    std::uint64_t nodes() const { return nodes_; }
    const std::vector<double>& rho() const { return rho_; }
    const std::vector<double>& zeta() const { return zeta_; }
    const std::vector<double>& alpha() const { return alpha_; }

    // div(kappa grad u) - alpha u, the shared elliptic part of both
    // families. Face fluxes are oriented outward, so the divergence is
    // their sum.
    void ellipticApply(const std::vector<double>& u, std::vector<double>& out) const {
        const double invH2 = 1.0 / (h_ * h_);
        for (std::uint64_t j = 0; j < nodes_; ++j) {
            double acc = 0.0;
            for (int mu = 0; mu < grid_.d; ++mu) {
                acc += faceFlux(u, j, mu, +1) + faceFlux(u, j, mu, -1);
            }
            out[j] = acc * invH2 - alpha_[j] * u[j];
        }
    }

    // beta . grad u with centered differences and mirrored ghosts.
    void advectionApply(const std::vector<double>& u, std::vector<double>& out) const {
        const double inv2H = 1.0 / (2.0 * h_);
        for (std::uint64_t j = 0; j < nodes_; ++j) {
            double acc = 0.0;
            for (int mu = 0; mu < grid_.d; ++mu) {
                const double b = beta_[std::size_t(mu)][j];
                if (b == 0.0) continue;
                acc += b * (ghostValue(u, j, mu, +1) - ghostValue(u, j, mu, -1)) * inv2H;
            }
            out[j] = acc;
        }
    }

    // Gershgorin bound on the spectral radius of the update generator,
    // divided through by the density for the second-order family.
    double generatorBound(bool secondOrder) const {
        const double invH2 = 1.0 / (h_ * h_);
        const double inv2H = 1.0 / (2.0 * h_);
        double worst = 0.0;
        for (std::uint64_t j = 0; j < nodes_; ++j) {
            double row = alpha_[j];
            for (int mu = 0; mu < grid_.d; ++mu) {
                row += (faceKappa(j, mu, +1) + faceKappa(j, mu, -1)) * 2.0 * invH2;
                if (!secondOrder) row += 2.0 * std::abs(beta_[std::size_t(mu)][j]) * inv2H;
            }
            if (secondOrder) row /= rho_[j];
            worst = std::max(worst, row);
        }
        return worst;
    }

private:
    // Neighbor coordinate along an axis; reports ghosts past closed faces.
    std::uint64_t neighbor(std::uint64_t j, int mu, int dir, bool& outside) const {
        const int c = grid_.axisCoord(j, mu);
        const int size = grid_.axisSize(mu);
        int nc = c + dir;
        outside = false;
        if (nc < 0 || nc >= size) {
            if (boundary_.periodic(mu)) {
                nc = (nc + size) % size;
            } else {
                outside = true;
                return j;
            }
        }
        const std::uint64_t mask = (std::uint64_t(1) << grid_.nBitsPerAxis[std::size_t(mu)]) - 1;
        const int off = grid_.axisOffset(mu);
        return (j & ~(mask << off)) | (std::uint64_t(nc) << off);
    }

    double faceKappa(std::uint64_t j, int mu, int dir) const {
        bool outside = false;
        const std::uint64_t nb = neighbor(j, mu, dir, outside);
        return outside ? kappa_[j] : 0.5 * (kappa_[j] + kappa_[nb]);
    }

    // kappa_face * (u_neighbor - u_j); zero through Neumann faces, ghost
    // value zero past Dirichlet faces.
    double faceFlux(const std::vector<double>& u, std::uint64_t j, int mu, int dir) const {
        bool outside = false;
        const std::uint64_t nb = neighbor(j, mu, dir, outside);
        if (!outside) return 0.5 * (kappa_[j] + kappa_[nb]) * (u[nb] - u[j]);
        const BoundaryKind face =
            dir > 0 ? boundary_.axes[std::size_t(mu)].high : boundary_.axes[std::size_t(mu)].low;
        if (face == BoundaryKind::Neumann) return 0.0;
        return kappa_[j] * (0.0 - u[j]);
    }

    double ghostValue(const std::vector<double>& u, std::uint64_t j, int mu, int dir) const {
        bool outside = false;
        const std::uint64_t nb = neighbor(j, mu, dir, outside);
        if (!outside) return u[nb];
        const BoundaryKind face =
            dir > 0 ? boundary_.axes[std::size_t(mu)].high : boundary_.axes[std::size_t(mu)].low;
        return face == BoundaryKind::Neumann ? u[j] : 0.0;
    }

    Grid grid_;
    BoundarySpec boundary_;
    std::uint64_t nodes_;
    double h_;
    std::vector<double> kappa_;
    std::vector<double> alpha_;
    std::vector<double> rho_;
    std::vector<double> zeta_;
    std::vector<std::vector<double>> beta_;
};

inline std::vector<std::uint64_t> outputSteps(const std::vector<double>& outputTimes,
                                              double tau) {
    if (outputTimes.empty()) throw ConfigError("classicalFdm: no output times requested");
    std::vector<std::uint64_t> steps;
    steps.reserve(outputTimes.size());
    double prev = -1.0;
    for (double t : outputTimes) {
        if (t < 0.0) throw ConfigError("classicalFdm: output times must be nonnegative");
        if (!(t > prev)) throw ConfigError("classicalFdm: output times must be increasing");
        prev = t;
        const double ratio = t / tau;
        const double rounded = std::round(ratio);
        if (std::abs(ratio - rounded) > 1e-6 * std::max(1.0, ratio))
            throw ConfigError("classicalFdm: output times must be multiples of the step size");
        steps.push_back(static_cast<std::uint64_t>(rounded));
    }
    return steps;
}

inline void recordSnapshot(TimeSeries& ts, double t, const std::vector<double>& field) {
    ts.times.push_back(t);
    std::vector<Complex> state(field.size());
    double norm2 = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
        state[i] = field[i];
        norm2 += field[i] * field[i];
    }
    ts.states.push_back(std::move(state));
    ts.norms.push_back(std::sqrt(norm2));
}

} // namespace reference_detail

// Explicit classical integrator on node values: leapfrog time stepping for
// the second-order family, forward Euler for the first-order one, both over
// centered spatial stencils. Runs at its own step size (independent of the
// quantum product-formula step) and reports a stability-limit warning
// instead of failing when the step is too coarse.
inline FdmResult classicalFdm(const PdeProblem& p, const std::vector<double>& u0,
                              const std::vector<double>& uDot0,
                              const std::vector<double>& outputTimes,
                              const FdmOptions& options = {}) {
    p.validate();
    if (!(options.tau > 0.0)) throw ConfigError("classicalFdm: step size must be positive");
    const std::uint64_t nodes = p.grid.nodeCount();
    if (u0.size() != nodes) throw ConfigError("classicalFdm: u0 length mismatch");
    const bool secondOrder = p.family == PdeFamily::SecondOrder;
    if (secondOrder && uDot0.size() != nodes)
        throw ConfigError("classicalFdm: second-order stepping requires uDot0 node values");
    if (!secondOrder && !uDot0.empty())
        throw ConfigError("classicalFdm: uDot0 given for a first-order problem");

    const double tau = options.tau;
    const std::vector<std::uint64_t> marks = reference_detail::outputSteps(outputTimes, tau);
    const std::uint64_t lastStep = marks.back();

    const reference_detail::StencilGrid stencil(p);
    FdmResult result;
    result.options = options;
    result.diagnostics.steps = lastStep;
    const double bound = stencil.generatorBound(secondOrder);
    if (bound > 0.0) {
        result.diagnostics.cflLimit = secondOrder ? 2.0 / std::sqrt(bound) : 2.0 / bound;
        result.diagnostics.cflWarning = tau > result.diagnostics.cflLimit;
    }

    std::vector<double> work(nodes, 0.0);
    std::size_t nextMark = 0;
    auto emit = [&](std::uint64_t step, const std::vector<double>& u,
                    const std::vector<double>* uDot) {
        while (nextMark < marks.size() && marks[nextMark] == step) {
            reference_detail::recordSnapshot(result.u, outputTimes[nextMark], u);
            if (uDot) reference_detail::recordSnapshot(result.uDot, outputTimes[nextMark], *uDot);
            ++nextMark;
        }
    };

    if (!secondOrder) {
        std::vector<double> u = u0;
        emit(0, u, nullptr);
        for (std::uint64_t step = 1; step <= lastStep; ++step) {
            stencil.ellipticApply(u, work);
            std::vector<double> adv(nodes, 0.0);
            stencil.advectionApply(u, adv);
            for (std::uint64_t j = 0; j < nodes; ++j) u[j] += tau * (work[j] - adv[j]);
            emit(step, u, nullptr);
        }
        result.u.validate();
        return result;
    }

    // Damped leapfrog: (rho/tau^2 + zeta/2tau) u+ equals the elliptic force
    // plus the history terms; the emitted velocity is the centered
    // difference, so each snapshot needs the following step's field.
    const std::vector<double>& rho = stencil.rho();
    const std::vector<double>& zeta = stencil.zeta();
    std::vector<double> uPrev = u0;
    std::vector<double> uCur(nodes), uNext(nodes), vel(nodes);

    stencil.ellipticApply(uPrev, work);
    for (std::uint64_t j = 0; j < nodes; ++j)
        uCur[j] = uPrev[j] + tau * uDot0[j] +
                  0.5 * tau * tau * (work[j] - zeta[j] * uDot0[j]) / rho[j];
    emit(0, uPrev, &uDot0);

    for (std::uint64_t step = 1; step <= lastStep; ++step) {
        stencil.ellipticApply(uCur, work);
        for (std::uint64_t j = 0; j < nodes; ++j) {
            const double a = rho[j] / (tau * tau);
            const double b = zeta[j] / (2.0 * tau);
            uNext[j] = (work[j] + a * (2.0 * uCur[j] - uPrev[j]) + b * uPrev[j]) / (a + b);
        }
        for (std::uint64_t j = 0; j < nodes; ++j)
            vel[j] = (uNext[j] - uPrev[j]) / (2.0 * tau);
        emit(step, uCur, &vel);
        uPrev.swap(uCur);
        uCur.swap(uNext);
    }
    result.u.validate();
    result.uDot.validate();
    return result;
}

} // namespace lchs
