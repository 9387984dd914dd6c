#pragma once

#include "lchs/grid.hpp"
#include "lchs/qubit_operator.hpp"

namespace lchs {

// Places an operator acting on the qubits of one axis into the full register,
// with identities on every other axis.
inline QubitOperator embedOnAxis(const QubitOperator& axisOp, const Grid& grid, int axis) {
    if (axis < 0 || axis >= grid.d) throw ConfigError("embedOnAxis: axis out of range");
    if (axisOp.nQubits() != grid.nBitsPerAxis[axis])
        throw ConfigError("embedOnAxis: operator width does not match axis");
    const int total = grid.totalBits();
    const int off = grid.axisOffset(axis);
    QubitOperator out(total);
    for (const auto& term : axisOp.terms()) {
        FactorString f(total, SiteFactor::I);
        for (int s = 0; s < axisOp.nQubits(); ++s) f[off + s] = term.factors[s];
        out.add(term.coef, f);
    }
    return out;
}

enum class DiffScheme { Forward, Backward, Central4 };

// Projector onto one face of an axis: all axis bits 0 (low face) or all 1
// (high face), embedded into the full register.
inline QubitOperator faceProjector(const Grid& grid, int axis, bool highFace) {
    const int n = grid.nBitsPerAxis[axis];
    QubitOperator proj(n);
    proj.add(1.0, FactorString(n, highFace ? SiteFactor::P11 : SiteFactor::P00));
    return embedOnAxis(proj, grid, axis);
}

// Finite-difference operator along one axis, scaled by the grid spacing.
// Forward  D+ = (S- - I)/h, backward D- = (I - S+)/h; the shift closure is
// periodic exactly when the axis is periodic. The fourth-order central
// stencil (-S-^2 + 8 S- - 8 S+ + S+^2)/(12 h) is only meaningful with
// periodic wrap-around and is rejected otherwise.
inline QubitOperator differenceOperator(DiffScheme scheme, int axis, const Grid& grid,
                                        const BoundarySpec& boundary) {
    if (axis < 0 || axis >= grid.d) throw ConfigError("differenceOperator: axis out of range");
    const int n = grid.nBitsPerAxis[axis];
    const bool periodic = boundary.periodic(axis);
    const double h = grid.h;

    QubitOperator axisOp(n);
    switch (scheme) {
    case DiffScheme::Forward: {
        axisOp = shiftMinus(n, periodic) - QubitOperator::identity(n);
        axisOp = axisOp.scaled(1.0 / h);
        break;
    }
    case DiffScheme::Backward: {
        axisOp = QubitOperator::identity(n) - shiftPlus(n, periodic);
        axisOp = axisOp.scaled(1.0 / h);
        break;
    }
    case DiffScheme::Central4: {
        if (!periodic)
            throw ConfigError("differenceOperator: central4 requires a periodic axis");
        const QubitOperator sm = shiftMinus(n, true);
        const QubitOperator sp = shiftPlus(n, true);
        const QubitOperator sm2 = multiplyOperators(sm, sm);
        const QubitOperator sp2 = multiplyOperators(sp, sp);
        axisOp = sm.scaled(8.0) - sp.scaled(8.0) - sm2 + sp2;
        axisOp = axisOp.scaled(1.0 / (12.0 * h));
        break;
    }
    }
    return embedOnAxis(axisOp, grid, axis);
}

} // namespace lchs
