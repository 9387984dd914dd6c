#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lchs/difference.hpp"
#include "lchs/grid.hpp"
#include "lchs/logic_min.hpp"
#include "lchs/qubit_operator.hpp"

namespace lchs {

enum class PdeFamily { SecondOrder, FirstOrder };

// Problem definition for either family:
//   secondOrder: rho u_tt + zeta u_t - div(kappa grad u) + alpha u = 0
//   firstOrder:  u_t = div(kappa grad u)/... (diffusion) - beta.grad u - alpha u
// All coefficients are piecewise-constant node fields.
struct PdeProblem {
    PdeFamily family = PdeFamily::SecondOrder;
    Grid grid;
    BoundarySpec boundary;
    PiecewiseField rho = PiecewiseField::constant("rho", 1.0);
    PiecewiseField kappa = PiecewiseField::constant("kappa", 1.0);
    PiecewiseField zeta = PiecewiseField::constant("zeta", 0.0);
    PiecewiseField alpha = PiecewiseField::constant("alpha", 0.0);
    std::vector<PiecewiseField> beta; // firstOrder transport, one field per axis
    double T = 1.0;
    double tau = 0.1;

    int steps() const {
        const double r = T / tau;
        const long long n = std::llround(r);
        if (n < 1 || std::abs(r - double(n)) > 1e-9 * std::max(1.0, r))
            throw ConfigError("time: T must be an integer multiple of tau");
        return static_cast<int>(n);
    }

    void validate() const {
        grid.validate();
        boundary.validate(grid);
        rho.validate(grid);
        kappa.validate(grid);
        zeta.validate(grid);
        alpha.validate(grid);
        if (!beta.empty() && static_cast<int>(beta.size()) != grid.d)
            throw ConfigError("beta: need one field per axis or none");
        for (const auto& b : beta) b.validate(grid);
        const std::uint64_t nn = grid.nodeCount();
        auto requireRange = [&](const PiecewiseField& f, bool strict) {
            auto check = [&](double v) {
                if (strict ? !(v > 0.0) : (v < 0.0))
                    throw ConfigError("field " + f.name +
                                      (strict ? ": values must be positive"
                                              : ": values must be nonnegative"));
            };
            check(f.defaultValue);
            for (const auto& r : f.regions)
                if (!r.nodes.empty()) check(r.value);
            (void)nn;
        };
        if (family == PdeFamily::SecondOrder) requireRange(rho, true);
        requireRange(kappa, false);
        requireRange(zeta, false);
        requireRange(alpha, false);
        if (!(T > 0.0) || !(tau > 0.0)) throw ConfigError("time: T and tau must be positive");
        steps();
    }
};

// Register map: the system (node) qubits sit lowest, the block qubits (which
// distinguish the velocity, gradient and absorption components of the
// second-order rewriting) sit highest. First-order problems carry no block.
struct StateLayout {
    int systemQubits = 0;
    int blockQubits = 0;

    int totalQubits() const { return systemQubits + blockQubits; }
    int blockCount() const { return 1 << blockQubits; }

    std::uint64_t ampIndex(int block, std::uint64_t node) const {
        return (std::uint64_t(block) << systemQubits) | node;
    }

    static StateLayout forProblem(const PdeProblem& p) {
        StateLayout s;
        s.systemQubits = p.grid.totalBits();
        if (p.family == PdeFamily::SecondOrder) {
            int need = p.grid.d + 2, bits = 0;
            while ((1 << bits) < need) ++bits;
            s.blockQubits = bits;
        }
        return s;
    }
};

namespace detail {

inline const QubitOperator& requireOp(const std::map<std::string, QubitOperator>& ops,
                                      const std::string& key) {
    auto it = ops.find(key);
    if (it == ops.end()) throw ConfigError("assembly: missing diagonal operator '" + key + "'");
    return it->second;
}

// Embeds a system operator into block row b1, column b2 of the full register.
inline QubitOperator embedBlock(const QubitOperator& sysOp, int b1, int b2,
                                const StateLayout& layout) {
    QubitOperator out(layout.totalQubits());
    const int n = layout.systemQubits;
    for (const auto& term : sysOp.terms()) {
        FactorString f(layout.totalQubits(), SiteFactor::I);
        for (int s = 0; s < n; ++s) f[s] = term.factors[s];
        for (int k = 0; k < layout.blockQubits; ++k) {
            const bool row = (b1 >> k) & 1, col = (b2 >> k) & 1;
            f[n + k] = row ? (col ? SiteFactor::P11 : SiteFactor::P10)
                           : (col ? SiteFactor::P01 : SiteFactor::P00);
        }
        out.add(term.coef, f);
    }
    return out;
}

// Top-face row replacement along one axis: added to the forward difference it
// turns the last row into the backward stencil, (1/h)(2|F><F| - |F><F-1|).
inline QubitOperator topRowToBackward(const Grid& grid, int axis) {
    const int n = grid.nBitsPerAxis[axis];
    QubitOperator op(n);
    op.add(2.0 / grid.h, FactorString(n, SiteFactor::P11));
    FactorString f(n, SiteFactor::P11);
    f[0] = SiteFactor::P10;
    op.add(-1.0 / grid.h, f);
    return embedOnAxis(op, grid, axis);
}

// Bottom-face row replacement: added to the backward difference it turns the
// first row into the forward stencil, (1/h)(-2|0><0| + |0><1|).
inline QubitOperator bottomRowToForward(const Grid& grid, int axis) {
    const int n = grid.nBitsPerAxis[axis];
    QubitOperator op(n);
    op.add(-2.0 / grid.h, FactorString(n, SiteFactor::P00));
    FactorString f(n, SiteFactor::P00);
    f[0] = SiteFactor::P01;
    op.add(1.0 / grid.h, f);
    return embedOnAxis(op, grid, axis);
}

} // namespace detail

// Diagonal coefficient operators in minimized projector-string form, keyed by
// the names the assemblers look up.
inline std::map<std::string, QubitOperator> buildDiagonalOperators(const PdeProblem& p) {
    std::map<std::string, QubitOperator> ops;
    const Grid& g = p.grid;
    if (p.family == PdeFamily::SecondOrder) {
        ops.emplace("rho_inv", fieldToOperator(p.rho, g, [](double x) { return 1.0 / x; }));
        ops.emplace("rho_inv_half",
                    fieldToOperator(p.rho, g, [](double x) { return 1.0 / std::sqrt(x); }));
        ops.emplace("kappa_half", fieldToOperator(p.kappa, g, [](double x) { return std::sqrt(x); }));
        ops.emplace("alpha_half", fieldToOperator(p.alpha, g, [](double x) { return std::sqrt(x); }));
        ops.emplace("zeta", fieldToOperator(p.zeta, g, [](double x) { return x; }));
    } else {
        ops.emplace("kappa", fieldToOperator(p.kappa, g, [](double x) { return x; }));
        ops.emplace("alpha", fieldToOperator(p.alpha, g, [](double x) { return x; }));
        const PiecewiseField zeroBeta = PiecewiseField::constant("beta", 0.0);
        for (int mu = 0; mu < g.d; ++mu) {
            const PiecewiseField& b = p.beta.empty() ? zeroBeta : p.beta[mu];
            ops.emplace("beta_plus_" + std::to_string(mu),
                        fieldToOperator(b, g, [](double x) { return std::max(x, 0.0); }));
            ops.emplace("beta_minus_" + std::to_string(mu),
                        fieldToOperator(b, g, [](double x) { return std::min(x, 0.0); }));
        }
    }
    return ops;
}

// Generator of the first-order block system dw/dt = -A w for the wave-type
// family. Block 0 couples to the gradient blocks through scaled one-sided
// differences; the boundary rows are corrected so that a Dirichlet high face
// sees the backward stencil and a Neumann low face the forward one.
inline QubitOperator assembleSecondOrder(const PdeProblem& p,
                                         const std::map<std::string, QubitOperator>& diagOps) {
    if (p.family != PdeFamily::SecondOrder)
        throw ConfigError("assembleSecondOrder: problem family mismatch");
    const StateLayout layout = StateLayout::forProblem(p);
    const Grid& g = p.grid;
    const auto& rhoInv = detail::requireOp(diagOps, "rho_inv");
    const auto& rhoInvHalf = detail::requireOp(diagOps, "rho_inv_half");
    const auto& kappaHalf = detail::requireOp(diagOps, "kappa_half");
    const auto& alphaHalf = detail::requireOp(diagOps, "alpha_half");
    const auto& zeta = detail::requireOp(diagOps, "zeta");

    QubitOperator a(layout.totalQubits());
    a.add(detail::embedBlock(multiplyOperators(rhoInv, zeta), 0, 0, layout));

    for (int mu = 0; mu < g.d; ++mu) {
        const QubitOperator dPlus = differenceOperator(DiffScheme::Forward, mu, g, p.boundary);
        const QubitOperator dMinus = differenceOperator(DiffScheme::Backward, mu, g, p.boundary);
        const bool periodic = p.boundary.periodic(mu);

        QubitOperator top = dPlus;
        if (!periodic && p.boundary.axes[mu].high == BoundaryKind::Dirichlet)
            top.add(detail::topRowToBackward(g, mu));
        QubitOperator topBlock = multiplyOperators(rhoInvHalf, multiplyOperators(top, kappaHalf));
        a.add(detail::embedBlock(topBlock.scaled(-1.0), 0, mu + 1, layout));

        QubitOperator bottom = dMinus;
        if (!periodic && p.boundary.axes[mu].low == BoundaryKind::Neumann)
            bottom.add(detail::bottomRowToForward(g, mu));
        QubitOperator bottomBlock =
            multiplyOperators(kappaHalf, multiplyOperators(bottom, rhoInvHalf));
        a.add(detail::embedBlock(bottomBlock.scaled(-1.0), mu + 1, 0, layout));
    }

    const QubitOperator absorb = multiplyOperators(rhoInvHalf, alphaHalf);
    a.add(detail::embedBlock(absorb, 0, g.d + 1, layout));
    a.add(detail::embedBlock(absorb.scaled(-1.0), g.d + 1, 0, layout));
    return a;
}

// Generator for the diffusion-transport-absorption family in upwind form,
// with ghost-node boundary rows folded in through face-projector corrections.
inline QubitOperator assembleFirstOrder(const PdeProblem& p,
                                        const std::map<std::string, QubitOperator>& diagOps) {
    if (p.family != PdeFamily::FirstOrder)
        throw ConfigError("assembleFirstOrder: problem family mismatch");
    const Grid& g = p.grid;
    const double h = g.h;
    const auto& kappa = detail::requireOp(diagOps, "kappa");
    const auto& alpha = detail::requireOp(diagOps, "alpha");

    QubitOperator a(g.totalBits());
    for (int mu = 0; mu < g.d; ++mu) {
        const QubitOperator dPlus = differenceOperator(DiffScheme::Forward, mu, g, p.boundary);
        const QubitOperator dMinus = differenceOperator(DiffScheme::Backward, mu, g, p.boundary);

        QubitOperator diff = multiplyOperators(dPlus, multiplyOperators(kappa, dMinus));
        diff.add(multiplyOperators(dMinus, multiplyOperators(kappa, dPlus)));
        a.add(diff.scaled(-0.5));

        const auto& betaPlus = detail::requireOp(diagOps, "beta_plus_" + std::to_string(mu));
        const auto& betaMinus = detail::requireOp(diagOps, "beta_minus_" + std::to_string(mu));
        a.add(multiplyOperators(betaPlus, dMinus));
        a.add(multiplyOperators(betaMinus, dPlus));

        if (p.boundary.periodic(mu)) continue;
        const QubitOperator lowFace = faceProjector(g, mu, false);
        const QubitOperator highFace = faceProjector(g, mu, true);
        if (p.boundary.axes[mu].low == BoundaryKind::Neumann)
            a.add(multiplyOperators(dPlus, multiplyOperators(kappa, lowFace)).scaled(0.5 / h));
        if (p.boundary.axes[mu].high == BoundaryKind::Neumann)
            a.add(multiplyOperators(dMinus, multiplyOperators(kappa, highFace)).scaled(-0.5 / h));
        if (p.boundary.axes[mu].low == BoundaryKind::Dirichlet)
            a.add(multiplyOperators(kappa, lowFace).scaled(0.5 / (h * h)));
        if (p.boundary.axes[mu].high == BoundaryKind::Dirichlet)
            a.add(multiplyOperators(kappa, highFace).scaled(0.5 / (h * h)));
    }
    a.add(alpha);
    return a;
}

// Shifts the generator so its Hermitian part becomes positive semidefinite:
// aShifted = a + shift*I with shift = max(0, -lambda_min(L)). Recovered
// solutions must be rescaled by e^{+shift*t}. Uses a dense eigensolver on
// small registers and spectral lower bounds from the term data above that.
inline std::pair<QubitOperator, double> positiveShift(const QubitOperator& a) {
    const HermitianParts parts = hermitianSplit(a);
    const int n = a.nQubits();
    double lambdaMin = 0.0;

    if (n <= kDenseQubitCap) {
        const Eigen::MatrixXcd l = toDense(parts.l);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(l, Eigen::EigenvaluesOnly);
        lambdaMin = es.eigenvalues().minCoeff();
    } else if (n <= 20) {
        // Row-wise Gershgorin discs evaluated directly from the term list.
        std::vector<const OperatorTerm*> diag, ladder;
        for (const auto& t : parts.l.terms()) {
            const TermAction act = termAction(t);
            (act.flipMask == 0 ? diag : ladder).push_back(&t);
        }
        const std::uint64_t dim = std::uint64_t(1) << n;
        double worst = 0.0;
        for (std::uint64_t j = 0; j < dim; ++j) {
            double dj = 0.0, rj = 0.0;
            for (const auto* t : diag) {
                const TermAction act = termAction(*t);
                if ((j & act.constrMask) == act.constrVal) dj += t->coef.real();
            }
            for (const auto* t : ladder) {
                const TermAction act = termAction(*t);
                if ((j & act.constrMask) == act.constrVal) rj += std::abs(t->coef);
            }
            worst = std::min(worst, dj - rj);
        }
        lambdaMin = worst;
    } else {
        double diagLow = 0.0, offSum = 0.0;
        for (const auto& t : parts.l.terms()) {
            if (termAction(t).flipMask == 0)
                diagLow += std::min(t.coef.real(), 0.0);
            else
                offSum += std::abs(t.coef);
        }
        lambdaMin = diagLow - offSum;
    }

    const double shift = std::max(0.0, -lambdaMin);
    QubitOperator shifted = a;
    if (shift > 0.0)
        shifted.add(shift, FactorString(n, SiteFactor::I));
    return {std::move(shifted), shift};
}

// Packs the physical fields into the evolution register. Second order fills
// block 0 with sqrt(rho)*du/dt, blocks 1..d with sqrt(kappa) times backward
// differences of u, block d+1 with sqrt(alpha)*u. The result is intentionally
// not normalized; callers report its norm.
inline Statevector encodeInitialState(const PdeProblem& p, const std::vector<double>& u0,
                                      const std::vector<double>& uDot0 = {}) {
    const StateLayout layout = StateLayout::forProblem(p);
    const std::uint64_t nodes = p.grid.nodeCount();
    if (u0.size() != nodes) throw ConfigError("encodeInitialState: u0 length mismatch");

    Statevector v(layout.totalQubits());
    if (p.family == PdeFamily::FirstOrder) {
        if (!uDot0.empty()) throw ConfigError("encodeInitialState: uDot0 given for firstOrder");
        for (std::uint64_t j = 0; j < nodes; ++j) v.amp[j] = u0[j];
        return v;
    }

    if (uDot0.size() != nodes)
        throw ConfigError("encodeInitialState: secondOrder requires uDot0 of node length");

    for (std::uint64_t j = 0; j < nodes; ++j)
        v.amp[layout.ampIndex(0, j)] = std::sqrt(p.rho.at(j)) * uDot0[j];

    Statevector uVec(p.grid.totalBits());
    for (std::uint64_t j = 0; j < nodes; ++j) uVec.amp[j] = u0[j];
    for (int mu = 0; mu < p.grid.d; ++mu) {
        const QubitOperator dMinus =
            differenceOperator(DiffScheme::Backward, mu, p.grid, p.boundary);
        const Statevector grad = applyOperator(dMinus, uVec);
        for (std::uint64_t j = 0; j < nodes; ++j)
            v.amp[layout.ampIndex(mu + 1, j)] = std::sqrt(p.kappa.at(j)) * grad.amp[j].real();
    }
    for (std::uint64_t j = 0; j < nodes; ++j)
        v.amp[layout.ampIndex(p.grid.d + 1, j)] = std::sqrt(p.alpha.at(j)) * u0[j];
    return v;
}

enum class DecodeWhich { UDot, GradAxis, U, Raw };

// Extracts a physical field from the evolution register, undoing the
// coefficient square-root weighting per node. Raw returns the real parts of
// the amplitudes untouched. Fields are real; any imaginary residue from an
// approximate evolution is deliberately dropped here.
inline std::vector<double> decodeField(const Statevector& v, const PdeProblem& p,
                                       DecodeWhich which, int axis = 0) {
    const StateLayout layout = StateLayout::forProblem(p);
    if (v.nQubits != layout.totalQubits())
        throw ConfigError("decodeField: state size does not match problem layout");
    const std::uint64_t nodes = p.grid.nodeCount();

    if (which == DecodeWhich::Raw) {
        std::vector<double> out(v.amp.size());
        for (std::size_t i = 0; i < v.amp.size(); ++i) out[i] = v.amp[i].real();
        return out;
    }

    if (p.family == PdeFamily::FirstOrder) {
        if (which != DecodeWhich::U)
            throw ConfigError("decodeField: firstOrder state only carries the u field");
        std::vector<double> out(nodes);
        for (std::uint64_t j = 0; j < nodes; ++j) out[j] = v.amp[j].real();
        return out;
    }

    int block = 0;
    const PiecewiseField* weight = nullptr;
    switch (which) {
    case DecodeWhich::UDot:
        block = 0;
        weight = &p.rho;
        break;
    case DecodeWhich::GradAxis:
        if (axis < 0 || axis >= p.grid.d) throw ConfigError("decodeField: axis out of range");
        block = axis + 1;
        weight = &p.kappa;
        break;
    case DecodeWhich::U:
        if (p.alpha.uniform() && p.alpha.defaultValue == 0.0)
            throw ConfigError("decodeField: u block carries no data when alpha is zero");
        block = p.grid.d + 1;
        weight = &p.alpha;
        break;
    default:
        break;
    }

    double peak = 0.0;
    for (std::uint64_t j = 0; j < nodes; ++j)
        peak = std::max(peak, std::abs(v.amp[layout.ampIndex(block, j)]));

    std::vector<double> out(nodes, 0.0);
    for (std::uint64_t j = 0; j < nodes; ++j) {
        const double wgt = std::sqrt(weight->at(j));
        const Complex amp = v.amp[layout.ampIndex(block, j)];
        if (wgt == 0.0) {
            if (std::abs(amp) > 1e-12 * std::max(peak, 1.0))
                throw NumericalError("decodeField: nonzero amplitude where coefficient vanishes");
            continue;
        }
        out[j] = amp.real() / wgt;
    }
    return out;
}

// Quadratic observable concentrated on a node region of the velocity block,
// weighted by the squared sound-speed field.
inline double observableIntensity(const Statevector& v, const std::vector<std::uint64_t>& region,
                                  const PiecewiseField& cField, const PdeProblem& p) {
    if (p.family != PdeFamily::SecondOrder)
        throw ConfigError("observableIntensity: requires the second-order layout");
    const StateLayout layout = StateLayout::forProblem(p);
    if (v.nQubits != layout.totalQubits())
        throw ConfigError("observableIntensity: state size does not match problem layout");
    const std::uint64_t nodes = p.grid.nodeCount();
    double sum = 0.0;
    for (std::uint64_t j : region) {
        if (j >= nodes) throw ConfigError("observableIntensity: region index out of range");
        const double c = cField.at(j);
        sum += c * c * std::norm(v.amp[layout.ampIndex(0, j)]);
    }
    return sum;
}

} // namespace lchs
