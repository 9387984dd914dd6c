#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lchs/discretize.hpp"
#include "lchs/errors.hpp"
#include "lchs/grid.hpp"
#include "lchs/qubit_operator.hpp"
#include "lchs/tensor_train.hpp"

// Gate-level assembly and statevector execution of the solver pipeline:
// initial-state preparation circuits, the ancilla coefficient oracle built
// from a low-bond train, exact exponentials of Hermitian term groups, the
// Trotterized evolution and its ancilla-controlled select stage, and the
// post-selected end-to-end run.

namespace lchs {

inline constexpr double kGateUnitaryTol = 1e-12;
inline constexpr double kHermitianPairTol = 1e-12;
// Evolution operators are cached densely up to this register size.
inline constexpr int kEvolutionDenseCap = 9;

enum class TrotterOrder { First, Second };

enum class GateKind { OneQubit, TwoQubit, ControlledUnitaryBlock };

namespace circuit_detail {

inline void requireUnitary(const Eigen::MatrixXcd& m, const std::string& what) {
    const Eigen::MatrixXcd gram = m.adjoint() * m;
    const double err = (gram - Eigen::MatrixXcd::Identity(m.rows(), m.cols())).cwiseAbs().maxCoeff();
    if (err > kGateUnitaryTol)
        throw ConfigError(what + ": matrix is not unitary (defect " + std::to_string(err) + ")");
}

} // namespace circuit_detail

// A gate is either a dense one- or two-qubit unitary, or a controlled
// evolution block exp(-i * generator * time) realized by a substepped
// second-order product formula over the generator's Hermitian term groups.
// Two-qubit matrices are indexed by 2*bit(q1) + bit(q0); control < 0 applies
// a block unconditionally.
struct Gate {
    GateKind kind = GateKind::OneQubit;
    std::string name;
    int q0 = -1;
    int q1 = -1;
    int control = -1;
    Eigen::Matrix2cd m2 = Eigen::Matrix2cd::Identity();
    Eigen::Matrix4cd m4 = Eigen::Matrix4cd::Identity();
    QubitOperator generator;
    double time = 0.0;
    int substeps = 1;
    TrotterOrder order = TrotterOrder::Second;

    static Gate oneQubit(std::string name, int q, const Eigen::Matrix2cd& m) {
        circuit_detail::requireUnitary(m, "gate " + name);
        Gate g;
        g.kind = GateKind::OneQubit;
        g.name = std::move(name);
        g.q0 = q;
        g.m2 = m;
        return g;
    }

    static Gate twoQubit(std::string name, int qHigh, int qLow, const Eigen::Matrix4cd& m) {
        circuit_detail::requireUnitary(m, "gate " + name);
        if (qHigh == qLow) throw ConfigError("gate " + name + ": qubit pair must be distinct");
        Gate g;
        g.kind = GateKind::TwoQubit;
        g.name = std::move(name);
        g.q0 = qLow;
        g.q1 = qHigh;
        g.m4 = m;
        return g;
    }

    static Gate controlledBlock(std::string name, int control, QubitOperator generator,
                                double time, int substeps, TrotterOrder order) {
        if (substeps < 1) throw ConfigError("gate " + name + ": substeps must be positive");
        Gate g;
        g.kind = GateKind::ControlledUnitaryBlock;
        g.name = std::move(name);
        g.control = control;
        g.generator = std::move(generator);
        g.time = time;
        g.substeps = substeps;
        g.order = order;
        return g;
    }
};

// Register map: system qubits occupy the low indices, ancilla qubits the high
// ones. Standalone register circuits simply carry ancillaQubits = 0.
struct Circuit {
    int nQubits = 0;
    int ancillaQubits = 0;
    std::vector<Gate> gates;

    int systemQubits() const { return nQubits - ancillaQubits; }

    void validate() const {
        if (nQubits < 1) throw ConfigError("circuit: needs at least one qubit");
        if (ancillaQubits < 0 || ancillaQubits > nQubits)
            throw ConfigError("circuit: ancilla count out of range");
        for (const Gate& g : gates) {
            auto inRange = [&](int q) { return q >= 0 && q < nQubits; };
            switch (g.kind) {
            case GateKind::OneQubit:
                if (!inRange(g.q0)) throw ConfigError("circuit: gate target out of range");
                break;
            case GateKind::TwoQubit:
                if (!inRange(g.q0) || !inRange(g.q1) || g.q0 == g.q1)
                    throw ConfigError("circuit: gate targets out of range");
                break;
            case GateKind::ControlledUnitaryBlock:
                if (g.control >= nQubits) throw ConfigError("circuit: block control out of range");
                if (g.generator.nQubits() > nQubits)
                    throw ConfigError("circuit: block generator larger than register");
                break;
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Hermitian term grouping and exact group exponentials
// ---------------------------------------------------------------------------

namespace circuit_detail {

inline FactorString adjointString(const FactorString& f) {
    FactorString out(f.size());
    for (std::size_t s = 0; s < f.size(); ++s) out[s] = adjointFactor(f[s]);
    return out;
}

inline bool isDiagonalString(const FactorString& f) {
    for (SiteFactor x : f)
        if (x == SiteFactor::P01 || x == SiteFactor::P10) return false;
    return true;
}

} // namespace circuit_detail

// Partitions a Hermitian operator into Hermitian summands: every ladder
// string is paired with its adjoint string, and self-adjoint diagonal
// strings stand alone. Groups keep the original coefficients, so their sum
// reproduces the input term by term. Order is deterministic: diagonal
// groups first, then pair groups, each sorted by their leading string.
inline std::vector<QubitOperator> groupHermitianPairs(const QubitOperator& h) {
    const auto& terms = h.terms();
    const int n = h.nQubits();
    std::vector<bool> used(terms.size(), false);
    std::vector<QubitOperator> diagonal, pairs;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (used[i]) continue;
        used[i] = true;
        const OperatorTerm& t = terms[i];
        const double scale = std::max(1.0, std::abs(t.coef));
        if (circuit_detail::isDiagonalString(t.factors)) {
            if (std::abs(t.coef.imag()) > kHermitianPairTol * scale)
                throw ConfigError("groupHermitianPairs: diagonal coefficient is not real");
            QubitOperator g(n);
            g.add(t.coef, t.factors);
            diagonal.push_back(std::move(g));
            continue;
        }
        const FactorString adj = circuit_detail::adjointString(t.factors);
        auto it = std::lower_bound(terms.begin(), terms.end(), adj,
                                   [](const OperatorTerm& a, const FactorString& f) {
                                       return factorStringLess(a.factors, f);
                                   });
        if (it == terms.end() || it->factors != adj)
            throw ConfigError("groupHermitianPairs: ladder string lacks its adjoint partner");
        const std::size_t j = std::size_t(it - terms.begin());
        if (used[j])
            throw ConfigError("groupHermitianPairs: ladder string paired twice");
        if (std::abs(it->coef - std::conj(t.coef)) > kHermitianPairTol * scale)
            throw ConfigError("groupHermitianPairs: adjoint pair coefficients disagree");
        used[j] = true;
        QubitOperator g(n);
        g.add(t.coef, t.factors);
        g.add(it->coef, it->factors);
        pairs.push_back(std::move(g));
    }
    auto byLeadingString = [](const QubitOperator& a, const QubitOperator& b) {
        return factorStringLess(a.terms().front().factors, b.terms().front().factors);
    };
    std::sort(diagonal.begin(), diagonal.end(), byLeadingString);
    std::sort(pairs.begin(), pairs.end(), byLeadingString);
    std::vector<QubitOperator> out;
    out.reserve(diagonal.size() + pairs.size());
    for (auto& g : diagonal) out.push_back(std::move(g));
    for (auto& g : pairs) out.push_back(std::move(g));
    return out;
}

namespace circuit_detail {

// One Hermitian group compiled for kernel application on a register: either
// a diagonal projector string (a phase on its support) or a ladder pair,
// which rotates the two-dimensional invariant subspaces {|j>, |j^flip>}.
struct CompiledRotation {
    bool diagonal = true;
    double weight = 0.0;
    Complex coef{0.0, 0.0};
    std::uint64_t constrMask = 0;
    std::uint64_t constrVal = 0;
    std::uint64_t flipMask = 0;
    std::vector<int> freeBits;
};

inline CompiledRotation compileRotation(const QubitOperator& group, int registerQubits,
                                        std::uint64_t controlMask) {
    if (group.empty()) throw ConfigError("compileRotation: empty group");
    if (group.nQubits() > registerQubits)
        throw ConfigError("compileRotation: group larger than register");
    const OperatorTerm& t = group.terms().front();
    const TermAction act = termAction(t);
    if ((controlMask & (act.constrMask | act.flipMask)) != 0)
        throw ConfigError("compileRotation: control overlaps the generator support");

    CompiledRotation r;
    r.constrMask = act.constrMask | controlMask;
    r.constrVal = act.constrVal | controlMask;
    r.flipMask = act.flipMask;
    for (int b : act.freeBits)
        if (!((controlMask >> b) & 1u)) r.freeBits.push_back(b);
    for (int b = group.nQubits(); b < registerQubits; ++b)
        if (!((controlMask >> b) & 1u)) r.freeBits.push_back(b);

    if (act.flipMask == 0) {
        if (group.termCount() != 1)
            throw ConfigError("compileRotation: diagonal group must be a single term");
        r.diagonal = true;
        r.weight = t.coef.real();
    } else {
        if (group.termCount() != 2)
            throw ConfigError("compileRotation: ladder group must be an adjoint pair");
        r.diagonal = false;
        // Hermitian projection of the stored pair keeps the applied map
        // exactly unitary even if the coefficients carry rounding noise.
        r.coef = 0.5 * (t.coef + std::conj(group.terms().back().coef));
    }
    return r;
}

inline std::vector<CompiledRotation> compileRotations(const std::vector<QubitOperator>& groups,
                                                      int registerQubits,
                                                      std::uint64_t controlMask) {
    std::vector<CompiledRotation> out;
    out.reserve(groups.size());
    for (const QubitOperator& g : groups)
        out.push_back(compileRotation(g, registerQubits, controlMask));
    return out;
}

inline void applyRotation(const CompiledRotation& r, double theta, Statevector& v) {
    if (theta == 0.0) return;
    const std::uint64_t count = std::uint64_t(1) << r.freeBits.size();
    if (r.diagonal) {
        const Complex phase = std::exp(Complex(0.0, -theta * r.weight));
        for (std::uint64_t s = 0; s < count; ++s) {
            std::uint64_t j = r.constrVal;
            for (std::size_t b = 0; b < r.freeBits.size(); ++b)
                j |= ((s >> b) & 1u) << r.freeBits[b];
            v.amp[j] *= phase;
        }
        return;
    }
    const double mag = std::abs(r.coef);
    if (mag == 0.0) return;
    const double c = std::cos(theta * mag);
    const double sn = std::sin(theta * mag);
    const Complex up = Complex(0.0, -sn) * (std::conj(r.coef) / mag);
    const Complex dn = Complex(0.0, -sn) * (r.coef / mag);
    for (std::uint64_t s = 0; s < count; ++s) {
        std::uint64_t j = r.constrVal;
        for (std::size_t b = 0; b < r.freeBits.size(); ++b)
            j |= ((s >> b) & 1u) << r.freeBits[b];
        const std::uint64_t m = j ^ r.flipMask;
        const Complex vj = v.amp[j];
        const Complex vm = v.amp[m];
        v.amp[j] = c * vj + up * vm;
        v.amp[m] = c * vm + dn * vj;
    }
}

inline void applyTrotterStep(const std::vector<CompiledRotation>& rots, TrotterOrder order,
                             double dt, Statevector& v) {
    if (order == TrotterOrder::Second) {
        for (const auto& r : rots) applyRotation(r, dt * 0.5, v);
        for (auto it = rots.rbegin(); it != rots.rend(); ++it) applyRotation(*it, dt * 0.5, v);
    } else {
        for (const auto& r : rots) applyRotation(r, dt, v);
    }
}

inline Eigen::MatrixXcd denseEvolutionStep(const std::vector<CompiledRotation>& rots,
                                           TrotterOrder order, double dt, int nQubits) {
    const std::size_t dim = std::size_t(1) << nQubits;
    Eigen::MatrixXcd m(dim, dim);
    Statevector v(nQubits);
    for (std::size_t col = 0; col < dim; ++col) {
        std::fill(v.amp.begin(), v.amp.end(), Complex(0.0, 0.0));
        v.amp[col] = 1.0;
        applyTrotterStep(rots, order, dt, v);
        for (std::size_t row = 0; row < dim; ++row) m(row, col) = v.amp[row];
    }
    return m;
}

inline Eigen::MatrixXcd matrixPower(Eigen::MatrixXcd base, std::uint64_t e) {
    Eigen::MatrixXcd result = Eigen::MatrixXcd::Identity(base.rows(), base.cols());
    while (e != 0) {
        if (e & 1u) result = base * result;
        e >>= 1;
        if (e != 0) base = base * base;
    }
    return result;
}

} // namespace circuit_detail

// Exact exponential exp(-i * theta * group) of one Hermitian summand:
// diagonal strings apply phases on their support, ladder pairs rotate the
// matched two-level subspaces.
inline Statevector expGroupApply(const QubitOperator& group, double theta, const Statevector& v) {
    Statevector out = v;
    circuit_detail::applyRotation(circuit_detail::compileRotation(group, v.nQubits, 0), theta, out);
    return out;
}

// Product-formula plan for exp(-i * generator * stepSize): the grouping is a
// partition of the generator into Hermitian summands whose exponentials are
// applied exactly.
struct TrotterPlan {
    QubitOperator generator;
    std::vector<QubitOperator> groups;
    TrotterOrder order = TrotterOrder::Second;
    double stepSize = 0.0;

    void validate() const {
        QubitOperator sum(generator.nQubits());
        for (const QubitOperator& g : groups) sum.add(g);
        const auto& a = sum.terms();
        const auto& b = generator.terms();
        if (a.size() != b.size())
            throw ConfigError("trotter plan: groups do not partition the generator");
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].factors != b[i].factors || a[i].coef != b[i].coef)
                throw ConfigError("trotter plan: groups do not partition the generator");
    }
};

inline TrotterPlan makeTrotterPlan(const QubitOperator& h, TrotterOrder order, double stepSize) {
    TrotterPlan plan;
    plan.generator = h;
    plan.groups = groupHermitianPairs(h);
    plan.order = order;
    plan.stepSize = stepSize;
    plan.validate();
    return plan;
}

// One product-formula step of exp(-i * generator * stepSize). Second order
// applies half-angle factors forward and then reversed.
inline Statevector trotterStep(const TrotterPlan& plan, const Statevector& v) {
    if (plan.generator.nQubits() > v.nQubits)
        throw ConfigError("trotterStep: generator larger than state register");
    Statevector out = v;
    const auto rots = circuit_detail::compileRotations(plan.groups, v.nQubits, 0);
    circuit_detail::applyTrotterStep(rots, plan.order, plan.stepSize, out);
    return out;
}

// ---------------------------------------------------------------------------
// Statevector gate kernels and circuit execution
// ---------------------------------------------------------------------------

inline void applyOneQubitGate(Statevector& v, int q, const Eigen::Matrix2cd& u) {
    const std::uint64_t bit = std::uint64_t(1) << q;
    const std::uint64_t dim = v.size();
    for (std::uint64_t i = 0; i < dim; ++i) {
        if (i & bit) continue;
        const Complex a = v.amp[i];
        const Complex b = v.amp[i | bit];
        v.amp[i] = u(0, 0) * a + u(0, 1) * b;
        v.amp[i | bit] = u(1, 0) * a + u(1, 1) * b;
    }
}

inline void applyTwoQubitGate(Statevector& v, int qHigh, int qLow, const Eigen::Matrix4cd& u) {
    const std::uint64_t hi = std::uint64_t(1) << qHigh;
    const std::uint64_t lo = std::uint64_t(1) << qLow;
    const std::uint64_t dim = v.size();
    for (std::uint64_t i = 0; i < dim; ++i) {
        if (i & (hi | lo)) continue;
        Complex in[4] = {v.amp[i], v.amp[i | lo], v.amp[i | hi], v.amp[i | hi | lo]};
        for (int row = 0; row < 4; ++row) {
            Complex acc(0.0, 0.0);
            for (int col = 0; col < 4; ++col) acc += u(row, col) * in[col];
            v.amp[i | (row & 2 ? hi : 0) | (row & 1 ? lo : 0)] = acc;
        }
    }
}

inline Statevector executeCircuit(const Circuit& c, Statevector v) {
    c.validate();
    if (v.nQubits != c.nQubits)
        throw ConfigError("executeCircuit: state size does not match the circuit");
    for (const Gate& g : c.gates) {
        switch (g.kind) {
        case GateKind::OneQubit:
            applyOneQubitGate(v, g.q0, g.m2);
            break;
        case GateKind::TwoQubit:
            applyTwoQubitGate(v, g.q1, g.q0, g.m4);
            break;
        case GateKind::ControlledUnitaryBlock: {
            const std::uint64_t controlMask =
                g.control >= 0 ? (std::uint64_t(1) << g.control) : 0;
            const auto rots = circuit_detail::compileRotations(
                groupHermitianPairs(g.generator), c.nQubits, controlMask);
            const double dt = g.time / g.substeps;
            for (int s = 0; s < g.substeps; ++s)
                circuit_detail::applyTrotterStep(rots, g.order, dt, v);
            break;
        }
        }
    }
    return v;
}

// Adjoint circuit: gates reversed and inverted. Evolution blocks invert by
// negating the time; the palindromic second-order factor sequence makes that
// an exact inverse.
inline Circuit adjointCircuit(const Circuit& c) {
    Circuit out;
    out.nQubits = c.nQubits;
    out.ancillaQubits = c.ancillaQubits;
    out.gates.reserve(c.gates.size());
    for (auto it = c.gates.rbegin(); it != c.gates.rend(); ++it) {
        Gate g = *it;
        switch (g.kind) {
        case GateKind::OneQubit:
            g.m2 = Eigen::Matrix2cd(it->m2.adjoint());
            break;
        case GateKind::TwoQubit:
            g.m4 = Eigen::Matrix4cd(it->m4.adjoint());
            break;
        case GateKind::ControlledUnitaryBlock:
            g.time = -it->time;
            break;
        }
        out.gates.push_back(std::move(g));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Train-to-circuit conversion
// ---------------------------------------------------------------------------

namespace circuit_detail {

// Fills the unfilled columns of u with an orthonormal completion of the
// already-filled (orthonormal) columns. filledCount columns are taken from
// the front of `filled`.
inline void completeOrthonormalColumns(Eigen::MatrixXd& u, const std::vector<int>& filled) {
    const Eigen::Index dim = u.rows();
    const Eigen::Index k = static_cast<Eigen::Index>(filled.size());
    if (k == dim) return;
    Eigen::MatrixXd f(dim, k);
    for (Eigen::Index c = 0; c < k; ++c) f.col(c) = u.col(filled[std::size_t(c)]);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(f);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::Index next = k;
    for (Eigen::Index c = 0; c < dim; ++c) {
        if (std::find(filled.begin(), filled.end(), int(c)) != filled.end()) continue;
        u.col(c) = q.col(next++);
    }
}

inline Eigen::Matrix2d realGateMatrix(const Eigen::Matrix2cd& m, const std::string& what) {
    if (m.imag().cwiseAbs().maxCoeff() > kGateUnitaryTol)
        throw ConfigError(what + ": expected a real gate matrix");
    return m.real();
}

inline Eigen::Matrix4d realGateMatrix(const Eigen::Matrix4cd& m, const std::string& what) {
    if (m.imag().cwiseAbs().maxCoeff() > kGateUnitaryTol)
        throw ConfigError(what + ": expected a real gate matrix");
    return m.real();
}

// Applies a real two-qubit gate to the adjacent core pair (s, s+1); the gate
// basis index is 2 * (site s bit) + (site s+1 bit). Bonds are re-split by a
// relative-threshold SVD.
inline void applyPairGateToTrain(TensorTrainVector& t, int s, const Eigen::Matrix4d& g) {
    TrainCore& cs = t.cores[std::size_t(s)];
    TrainCore& ct = t.cores[std::size_t(s) + 1];
    const int xl = cs.left;
    const int xr = ct.right;
    train_detail::RowMajorMatrix block = Eigen::MatrixXd::Zero(xl * 2, 2 * xr);
    for (int bl = 0; bl < xl; ++bl)
        for (int i = 0; i < 2; ++i)
            for (int m = 0; m < cs.right; ++m)
                for (int j = 0; j < 2; ++j)
                    for (int br = 0; br < xr; ++br)
                        block(bl * 2 + i, j * xr + br) += cs.at(bl, i, m) * ct.at(m, j, br);
    train_detail::RowMajorMatrix rotated = Eigen::MatrixXd::Zero(xl * 2, 2 * xr);
    for (int bl = 0; bl < xl; ++bl)
        for (int ip = 0; ip < 2; ++ip)
            for (int jp = 0; jp < 2; ++jp)
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j) {
                        const double gv = g(ip * 2 + jp, i * 2 + j);
                        if (gv == 0.0) continue;
                        for (int br = 0; br < xr; ++br)
                            rotated(bl * 2 + ip, jp * xr + br) += gv * block(bl * 2 + i, j * xr + br);
                    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rotated, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(0) > 0.0 && sv(i) > sv(0) * kSingularDropRatio) ++r;
    r = std::max(1, r);
    train_detail::RowMajorMatrix u = svd.matrixU().leftCols(r);
    train_detail::RowMajorMatrix sVt = sv.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
    t.cores[std::size_t(s)] = train_detail::coreFromLeftMatrix(u, xl);
    t.cores[std::size_t(s) + 1] = train_detail::coreFromRightMatrix(sVt, xr);
}

inline void applySiteGateToTrain(TensorTrainVector& t, int s, const Eigen::Matrix2d& g) {
    TrainCore& c = t.cores[std::size_t(s)];
    TrainCore next(c.left, c.right);
    for (int bl = 0; bl < c.left; ++bl)
        for (int ip = 0; ip < 2; ++ip)
            for (int br = 0; br < c.right; ++br)
                next.at(bl, ip, br) = g(ip, 0) * c.at(bl, 0, br) + g(ip, 1) * c.at(bl, 1, br);
    c = next;
}

} // namespace circuit_detail

// Builds the staircase circuit that prepares a right-canonical train with
// bond dimension at most 2 exactly (up to normalization). Site 0 of the
// train holds the most significant qubit; interior cores fill the even
// columns of a two-qubit unitary via U[2a+b][2b'] = core(b', a, b) and the
// remaining columns are completed orthonormally. Cores with trivial bonds
// collapse to single-qubit gates.
inline Circuit mpsToCircuitChi2(const TensorTrainVector& t) {
    t.validate();
    const int n = t.nSites();
    if (n < 2) throw ConfigError("mpsToCircuitChi2: need at least two sites");
    if (t.maxBond() > 2) throw ConfigError("mpsToCircuitChi2: bond dimension exceeds 2");
    if (t.form != CanonicalForm::Right)
        throw ConfigError("mpsToCircuitChi2: train must be right canonical");
    const double nrm = trainNorm(t);
    if (nrm == 0.0) throw ConfigError("mpsToCircuitChi2: zero train");

    Circuit c;
    c.nQubits = n;
    for (int s = 0; s < n; ++s) {
        const TrainCore& k = t.cores[std::size_t(s)];
        const double scale = (s == 0) ? 1.0 / nrm : 1.0;
        const int q = n - 1 - s;
        if (k.left == 1 && k.right == 1) {
            Eigen::MatrixXd u = Eigen::MatrixXd::Zero(2, 2);
            u(0, 0) = k.at(0, 0, 0) * scale;
            u(1, 0) = k.at(0, 1, 0) * scale;
            circuit_detail::completeOrthonormalColumns(u, {0});
            c.gates.push_back(Gate::oneQubit("u2", q, u.cast<Complex>()));
        } else if (s == n - 1) {
            Eigen::MatrixXd u = Eigen::MatrixXd::Zero(2, 2);
            std::vector<int> filled;
            for (int bp = 0; bp < k.left; ++bp) {
                for (int a = 0; a < 2; ++a) u(a, bp) = k.at(bp, a, 0) * scale;
                filled.push_back(bp);
            }
            circuit_detail::completeOrthonormalColumns(u, filled);
            c.gates.push_back(Gate::oneQubit("u2", q, u.cast<Complex>()));
        } else {
            Eigen::MatrixXd u = Eigen::MatrixXd::Zero(4, 4);
            std::vector<int> filled;
            for (int bp = 0; bp < k.left; ++bp) {
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < k.right; ++b)
                        u(a * 2 + b, 2 * bp) = k.at(bp, a, b) * scale;
                filled.push_back(2 * bp);
            }
            circuit_detail::completeOrthonormalColumns(u, filled);
            c.gates.push_back(Gate::twoQubit("u4", q, q - 1, u.cast<Complex>()));
        }
    }
    return c;
}

// Approximates an arbitrary train by composing bond-2 staircase layers: each
// layer encodes the bond-2 truncation of the remaining state and its adjoint
// is applied to the train before the next layer. Layer circuits are emitted
// so that the deepest layer acts first.
inline Circuit mpsToCircuitLayered(const TensorTrainVector& t, int layers) {
    if (layers < 1) throw ConfigError("mpsToCircuitLayered: layers must be positive");
    TensorTrainVector cur = t.form == CanonicalForm::Right ? t : rightCanonicalize(t);
    const int n = cur.nSites();
    if (n < 2) throw ConfigError("mpsToCircuitLayered: need at least two sites");
    const double nrm = trainNorm(cur);
    if (nrm == 0.0) throw ConfigError("mpsToCircuitLayered: zero train");
    cur = scaleTrain(std::move(cur), 1.0 / nrm);

    std::vector<Circuit> layerCircuits;
    for (int layer = 0; layer < layers; ++layer) {
        TensorTrainVector trunc = cur.maxBond() <= 2 ? cur : rightCanonicalize(cur, 2);
        const double tn = trainNorm(trunc);
        if (tn == 0.0) throw NumericalError("mpsToCircuitLayered: truncated layer vanished");
        trunc = scaleTrain(std::move(trunc), 1.0 / tn);
        layerCircuits.push_back(mpsToCircuitChi2(trunc));
        if (layer + 1 == layers) break;

        const Circuit& cl = layerCircuits.back();
        cur.form = CanonicalForm::None;
        cur.orthoCenter = -1;
        for (auto it = cl.gates.rbegin(); it != cl.gates.rend(); ++it) {
            if (it->kind == GateKind::OneQubit) {
                const Eigen::Matrix2d g =
                    circuit_detail::realGateMatrix(it->m2, "mpsToCircuitLayered");
                circuit_detail::applySiteGateToTrain(cur, n - 1 - it->q0,
                                                     Eigen::Matrix2d(g.transpose()));
            } else {
                const Eigen::Matrix4d g =
                    circuit_detail::realGateMatrix(it->m4, "mpsToCircuitLayered");
                circuit_detail::applyPairGateToTrain(cur, n - 1 - it->q1,
                                                     Eigen::Matrix4d(g.transpose()));
            }
        }
        cur = rightCanonicalize(std::move(cur), std::numeric_limits<int>::max());
    }

    Circuit out;
    out.nQubits = n;
    for (auto it = layerCircuits.rbegin(); it != layerCircuits.rend(); ++it)
        out.gates.insert(out.gates.end(), it->gates.begin(), it->gates.end());
    return out;
}

// Coefficient oracle pair: the circuit that maps |0...0> to the normalized
// train state on the ancilla register, and its exact adjoint.
struct CoefficientOracle {
    Circuit prepare;
    Circuit unprepare;
};

inline CoefficientOracle coefficientOracle(const TensorTrainVector& phi, int layers = 1) {
    CoefficientOracle o;
    o.prepare = phi.maxBond() <= 2 ? mpsToCircuitChi2(phi) : mpsToCircuitLayered(phi, layers);
    o.unprepare = adjointCircuit(o.prepare);
    return o;
}

// ---------------------------------------------------------------------------
// Select oracle
// ---------------------------------------------------------------------------

// Duration and substep schedule of the controlled evolutions: ancilla bit m
// contributes weight 2^{m-nFrac} (the top bit negatively), and each factor is
// substepped so no product step exceeds the base step size.
struct SelectFactor {
    int bit = 0;
    double time = 0.0;
    int substeps = 1;
};

inline std::vector<SelectFactor> selectSchedule(double tau, int nAnc, int nFrac) {
    if (nAnc < 1) throw ConfigError("selectSchedule: need at least one ancilla qubit");
    if (nFrac < 0 || nFrac > nAnc - 1) throw ConfigError("selectSchedule: nFrac out of range");
    std::vector<SelectFactor> out;
    out.reserve(std::size_t(nAnc));
    for (int m = 0; m < nAnc; ++m) {
        const bool top = (m == nAnc - 1);
        const int p2 = m - nFrac;
        SelectFactor f;
        f.bit = m;
        f.time = std::ldexp(top ? -tau : tau, p2);
        f.substeps = p2 > 0 ? (1 << p2) : 1;
        out.push_back(f);
    }
    return out;
}

// Controlled select stage: applies the evolution exp(-i k L tau) to the
// system conditioned on each ancilla basis value, realized as one controlled
// evolution block per ancilla qubit with the top qubit carrying the negative
// weight. Every product factor inside a block is control-gated.
inline Circuit selectOracle(const QubitOperator& l, double tau, int nAnc, int nFrac,
                            const TrotterPlan& plan) {
    if (plan.generator.nQubits() != l.nQubits())
        throw ConfigError("selectOracle: plan generator does not match the operator");
    {
        const auto& a = plan.generator.terms();
        const auto& b = l.terms();
        if (a.size() != b.size())
            throw ConfigError("selectOracle: plan generator does not match the operator");
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].factors != b[i].factors || a[i].coef != b[i].coef)
                throw ConfigError("selectOracle: plan generator does not match the operator");
    }
    const int sysN = l.nQubits();
    Circuit c;
    c.nQubits = sysN + nAnc;
    c.ancillaQubits = nAnc;
    for (const SelectFactor& f : selectSchedule(tau, nAnc, nFrac))
        c.gates.push_back(Gate::controlledBlock("sel", sysN + f.bit, l, f.time, f.substeps,
                                                plan.order));
    return c;
}

// ---------------------------------------------------------------------------
// Box state preparation
// ---------------------------------------------------------------------------

namespace circuit_detail {

inline Eigen::Matrix2cd hadamardMatrix() {
    Eigen::Matrix2cd m;
    const double s = 1.0 / std::sqrt(2.0);
    m << s, s, s, -s;
    return m;
}

inline Eigen::Matrix2cd pauliXMatrix() {
    Eigen::Matrix2cd m;
    m << 0, 1, 1, 0;
    return m;
}

// Control on the high qubit of the pair, target on the low one.
inline Eigen::Matrix4cd cnotMatrix() {
    Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
    m(0, 0) = 1;
    m(1, 1) = 1;
    m(3, 2) = 1;
    m(2, 3) = 1;
    return m;
}

inline bool axisRangeExpressible(int lo, int hi) {
    const int len = hi - lo + 1;
    if (len < 1 || (len & (len - 1)) != 0) return false;
    if (lo % len == 0) return true;
    return len >= 2 && lo % len == len / 2;
}

} // namespace circuit_detail

inline bool boxPrepExpressible(const Box& box, const Grid& grid) {
    box.validate(grid);
    for (int axis = 0; axis < grid.d; ++axis)
        if (!circuit_detail::axisRangeExpressible(box.range[axis][0], box.range[axis][1]))
            return false;
    return true;
}

// Prepares the uniform superposition over an axis-aligned node box, with the
// block register fixed. Each axis interval must be a power-of-two length that
// is either aligned or offset by exactly half its length; the aligned case
// needs only H and X gates, the half-aligned case bridges two aligned halves
// with a CX fan. Boxes outside this family are rejected so callers can fall
// back to direct amplitude injection.
inline Circuit boxStatePrep(const Box& box, const Grid& grid, const StateLayout& layout,
                            int block = 0) {
    box.validate(grid);
    if (layout.systemQubits != grid.totalBits())
        throw ConfigError("boxStatePrep: layout does not match the grid");
    if (block < 0 || block >= layout.blockCount())
        throw ConfigError("boxStatePrep: block index out of range");

    Circuit c;
    c.nQubits = layout.totalQubits();
    const Eigen::Matrix2cd h = circuit_detail::hadamardMatrix();
    const Eigen::Matrix2cd x = circuit_detail::pauliXMatrix();
    const Eigen::Matrix4cd cx = circuit_detail::cnotMatrix();

    for (int axis = 0; axis < grid.d; ++axis) {
        const int lo = box.range[axis][0];
        const int hi = box.range[axis][1];
        const int len = hi - lo + 1;
        const int off = grid.axisOffset(axis);
        const int bits = grid.nBitsPerAxis[axis];
        if (!circuit_detail::axisRangeExpressible(lo, hi))
            throw ConfigError("boxStatePrep: axis " + std::to_string(axis) +
                              " range is not an aligned or half-aligned power-of-two interval");
        int k = 0;
        while ((1 << k) < len) ++k;
        if (lo % len == 0) {
            const int prefix = len == (1 << bits) ? 0 : lo >> k;
            for (int b = k; b < bits; ++b)
                if ((prefix >> (b - k)) & 1) c.gates.push_back(Gate::oneQubit("x", off + b, x));
            for (int b = 0; b < k; ++b) c.gates.push_back(Gate::oneQubit("h", off + b, h));
        } else {
            // Two aligned half-blocks with prefixes p0 (odd) and p0 + 1: put
            // the shared high bits down with X, superpose the carry bit with
            // H, preload the trailing ones, and copy the carry down with CX.
            const int p0 = lo >> (k - 1);
            int trail = 0;
            while ((p0 >> trail) & 1) ++trail;
            for (int b = trail + 1; b < bits - (k - 1); ++b)
                if ((p0 >> b) & 1) c.gates.push_back(Gate::oneQubit("x", off + (k - 1) + b, x));
            for (int b = 0; b < k - 1; ++b) c.gates.push_back(Gate::oneQubit("h", off + b, h));
            for (int b = 0; b < trail; ++b)
                c.gates.push_back(Gate::oneQubit("x", off + (k - 1) + b, x));
            c.gates.push_back(Gate::oneQubit("h", off + (k - 1) + trail, h));
            for (int b = 0; b < trail; ++b)
                c.gates.push_back(Gate::twoQubit("cx", off + (k - 1) + trail, off + (k - 1) + b, cx));
        }
    }
    for (int b = 0; b < layout.blockQubits; ++b)
        if ((block >> b) & 1)
            c.gates.push_back(Gate::oneQubit("x", layout.systemQubits + b, x));
    return c;
}

// ---------------------------------------------------------------------------
// End-to-end run
// ---------------------------------------------------------------------------

// Dense statevector of a train (for cap-bounded registers).
inline Statevector prepareTrainState(const TensorTrainVector& t) {
    const std::vector<double> v = contractToVector(t);
    Statevector out(t.nSites());
    for (std::size_t i = 0; i < v.size(); ++i) out.amp[i] = Complex(v[i], 0.0);
    return out;
}

struct LchsRunResult {
    Statevector state;
    double successProbability = 0.0;
    double shift = 0.0;
    int steps = 0;
    std::size_t lGroupCount = 0;
    std::size_t hGroupCount = 0;
    std::uint64_t selectSubstepsPerStep = 0;
};

// Runs the full pipeline: the normalized initial state enters the system
// register, the coefficient state weights the ancilla register, each time
// step applies the Hermitian-part evolution followed by the select stage,
// the coefficient oracle is inverted, and the ancilla register is projected
// onto |0...0>. Returns the renormalized projected state and the projection
// probability; no amplitude amplification is applied.
//
// The evolution between the coefficient oracles is block diagonal over
// ancilla basis states, so the engine evolves one system slice per ancilla
// value in the literal per-step gate order; this is algebraically identical
// to executing the controlled gates on the joint register (pinned by tests).
// On small registers each select factor's substep run is cached as one dense
// matrix and the slices are batched into a column block, so a factor acts on
// the contiguous column runs whose ancilla bit is set at matrix-matrix
// speed. The ancilla amplitudes come from the exact train contraction, which
// matches the staircase circuit exactly for bond dimension 2 and the layered
// encoding in its converged limit.
inline LchsRunResult runLchs(const PdeProblem& p, const QubitOperator& a,
                             const TensorTrainVector& phi, const Statevector& w0, int nFrac,
                             TrotterOrder order = TrotterOrder::Second) {
    p.validate();
    const StateLayout layout = StateLayout::forProblem(p);
    const int sysN = layout.totalQubits();
    if (a.nQubits() != sysN) throw ConfigError("runLchs: operator does not match the layout");
    if (w0.nQubits != sysN) throw ConfigError("runLchs: initial state does not match the layout");
    const int nAnc = phi.nSites();
    const int r = p.steps();
    const double tau = p.tau;

    const double w0n = w0.norm();
    if (w0n == 0.0) throw ConfigError("runLchs: initial state has zero norm");

    std::vector<double> phiAmp = contractToVector(phi);
    {
        double n2 = 0.0;
        for (double x : phiAmp) n2 += x * x;
        const double nrm = std::sqrt(n2);
        if (std::abs(nrm - 1.0) > 1e-6)
            throw ConfigError("runLchs: coefficient train is not normalized");
        for (double& x : phiAmp) x /= nrm;
    }

    const HermitianParts parts = hermitianSplit(a);
    const auto shifted = positiveShift(parts.l);
    const QubitOperator& l = shifted.first;

    const std::vector<QubitOperator> lGroups = groupHermitianPairs(l);
    const std::vector<QubitOperator> hGroups = groupHermitianPairs(parts.h);
    const bool hasL = !lGroups.empty();
    const bool hasH = !hGroups.empty();
    const auto lRots = circuit_detail::compileRotations(lGroups, sysN, 0);
    const auto hRots = circuit_detail::compileRotations(hGroups, sysN, 0);
    const std::vector<SelectFactor> schedule = selectSchedule(tau, nAnc, nFrac);

    LchsRunResult result;
    result.shift = shifted.second;
    result.steps = r;
    result.lGroupCount = lGroups.size();
    result.hGroupCount = hGroups.size();
    for (const SelectFactor& f : schedule) result.selectSubstepsPerStep += std::uint64_t(f.substeps);

    Statevector w0unit = w0;
    w0unit.scale(1.0 / w0n);

    const std::size_t dim = std::size_t(1) << sysN;
    Statevector acc(sysN);

    if (!hasL) {
        // Every ancilla branch sees the same unitary evolution, so the
        // projection collapses and succeeds with certainty.
        Statevector s = std::move(w0unit);
        for (int step = 0; step < r; ++step)
            circuit_detail::applyTrotterStep(hRots, order, tau, s);
        double weight = 0.0;
        for (double x : phiAmp) weight += x * x;
        for (std::size_t i = 0; i < dim; ++i) acc.amp[i] = weight * s.amp[i];
    } else {
        const std::uint64_t branches = std::uint64_t(1) << nAnc;
        const bool dense = sysN <= kEvolutionDenseCap &&
                           dim * branches <= (std::uint64_t(1) << 22);
        if (dense) {
            std::vector<Eigen::MatrixXcd> stepPow;
            stepPow.reserve(schedule.size());
            for (const SelectFactor& f : schedule)
                stepPow.push_back(circuit_detail::matrixPower(
                    circuit_detail::denseEvolutionStep(lRots, order, f.time / f.substeps, sysN),
                    std::uint64_t(f.substeps)));
            Eigen::MatrixXcd hStep;
            if (hasH) hStep = circuit_detail::denseEvolutionStep(hRots, order, tau, sysN);

            const Eigen::Index d = static_cast<Eigen::Index>(dim);
            Eigen::MatrixXcd slices(d, static_cast<Eigen::Index>(branches));
            const Eigen::Map<const Eigen::VectorXcd> w0vec(w0unit.amp.data(), d);
            for (std::uint64_t b = 0; b < branches; ++b)
                slices.col(static_cast<Eigen::Index>(b)) = w0vec;
            Eigen::MatrixXcd scratch(d, slices.cols());
            for (int step = 0; step < r; ++step) {
                if (hasH) {
                    scratch.noalias() = hStep * slices;
                    slices.swap(scratch);
                }
                // The columns whose ancilla bit is set form contiguous runs,
                // so each factor applies as a few in-place block products.
                for (std::size_t f = 0; f < schedule.size(); ++f) {
                    const Eigen::Index run = Eigen::Index(1) << schedule[f].bit;
                    for (Eigen::Index start = run; start < slices.cols(); start += 2 * run) {
                        scratch.leftCols(run).noalias() =
                            stepPow[f] * slices.middleCols(start, run);
                        slices.middleCols(start, run) = scratch.leftCols(run);
                    }
                }
            }
            for (std::uint64_t b = 0; b < branches; ++b) {
                const double w2 = phiAmp[b] * phiAmp[b];
                for (std::size_t i = 0; i < dim; ++i)
                    acc.amp[i] += w2 * slices(static_cast<Eigen::Index>(i),
                                              static_cast<Eigen::Index>(b));
            }
        } else {
            Statevector slice(sysN);
            for (std::uint64_t b = 0; b < branches; ++b) {
                const double w = phiAmp[b];
                if (w == 0.0) continue;
                slice.amp = w0unit.amp;
                for (int step = 0; step < r; ++step) {
                    if (hasH) circuit_detail::applyTrotterStep(hRots, order, tau, slice);
                    for (std::size_t f = 0; f < schedule.size(); ++f) {
                        if (!((b >> schedule[f].bit) & 1u)) continue;
                        const double dt = schedule[f].time / schedule[f].substeps;
                        for (int s = 0; s < schedule[f].substeps; ++s)
                            circuit_detail::applyTrotterStep(lRots, order, dt, slice);
                    }
                }
                const double w2 = w * w;
                for (std::size_t i = 0; i < dim; ++i) acc.amp[i] += w2 * slice.amp[i];
            }
        }
    }

    const double accNorm = acc.norm();
    result.successProbability = accNorm * accNorm;
    if (accNorm == 0.0)
        throw NumericalError("runLchs: projected state vanished");
    acc.scale(1.0 / accNorm);
    result.state = std::move(acc);
    return result;
}

// ---------------------------------------------------------------------------
// Plain-text export
// ---------------------------------------------------------------------------

inline void writeCircuitText(std::ostream& os, const Circuit& c) {
    c.validate();
    char buf[96];
    auto entry = [&](Complex z) {
        std::snprintf(buf, sizeof(buf), "(%.17g,%.17g)", z.real(), z.imag());
        return std::string(buf);
    };
    os << "circuit qubits " << c.nQubits << " ancilla " << c.ancillaQubits << " gates "
       << c.gates.size() << "\n";
    for (const Gate& g : c.gates) {
        switch (g.kind) {
        case GateKind::OneQubit:
            os << "gate " << g.name << " q" << g.q0 << "\n";
            for (int row = 0; row < 2; ++row)
                os << "matrix " << entry(g.m2(row, 0)) << " " << entry(g.m2(row, 1)) << "\n";
            break;
        case GateKind::TwoQubit:
            os << "gate " << g.name << " q" << g.q1 << " q" << g.q0 << "\n";
            for (int row = 0; row < 4; ++row) {
                os << "matrix";
                for (int col = 0; col < 4; ++col) os << " " << entry(g.m4(row, col));
                os << "\n";
            }
            break;
        case GateKind::ControlledUnitaryBlock:
            std::snprintf(buf, sizeof(buf), "%.17g", g.time);
            os << "block " << g.name << " control ";
            if (g.control >= 0)
                os << "q" << g.control;
            else
                os << "none";
            os << " time " << buf << " substeps " << g.substeps << " order "
               << (g.order == TrotterOrder::Second ? 2 : 1) << "\n";
            {
                std::istringstream terms(toDebugText(g.generator));
                std::string line;
                while (std::getline(terms, line)) os << "term " << line << "\n";
            }
            break;
        }
    }
    os << "end\n";
}

inline std::string circuitToText(const Circuit& c) {
    std::ostringstream os;
    writeCircuitText(os, c);
    return os.str();
}

} // namespace lchs
