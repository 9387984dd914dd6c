#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lchs/errors.hpp"

namespace lchs {

// Regular lattice with 2^{n_mu} nodes per axis and spacing h. Axis 0 occupies
// the least-significant qubits of the node index.
struct Grid {
    int d = 0;
    std::vector<int> nBitsPerAxis;
    double h = 1.0;

    void validate() const {
        if (d < 1 || static_cast<int>(nBitsPerAxis.size()) != d)
            throw ConfigError("grid: dimension and per-axis bit list disagree");
        for (int n : nBitsPerAxis)
            if (n < 1) throw ConfigError("grid: every axis needs at least one qubit");
        if (!(h > 0.0)) throw ConfigError("grid: spacing h must be positive");
    }

    int totalBits() const {
        int n = 0;
        for (int b : nBitsPerAxis) n += b;
        return n;
    }

    std::uint64_t nodeCount() const { return std::uint64_t(1) << totalBits(); }

    int axisOffset(int axis) const {
        int off = 0;
        for (int m = 0; m < axis; ++m) off += nBitsPerAxis[m];
        return off;
    }

    int axisSize(int axis) const { return 1 << nBitsPerAxis[axis]; }

    int axisCoord(std::uint64_t node, int axis) const {
        return static_cast<int>((node >> axisOffset(axis)) & ((1u << nBitsPerAxis[axis]) - 1));
    }

    std::uint64_t nodeIndex(const std::vector<int>& coords) const {
        std::uint64_t j = 0;
        for (int axis = 0; axis < d; ++axis)
            j |= std::uint64_t(coords[axis]) << axisOffset(axis);
        return j;
    }
};

enum class BoundaryKind { Dirichlet, Neumann, Periodic };

inline std::string boundaryName(BoundaryKind k) {
    switch (k) {
    case BoundaryKind::Dirichlet: return "dirichlet";
    case BoundaryKind::Neumann:   return "neumann";
    case BoundaryKind::Periodic:  return "periodic";
    }
    return "?";
}

inline BoundaryKind boundaryFromName(const std::string& s) {
    if (s == "dirichlet") return BoundaryKind::Dirichlet;
    if (s == "neumann") return BoundaryKind::Neumann;
    if (s == "periodic") return BoundaryKind::Periodic;
    throw ConfigError("unknown boundary kind '" + s + "'");
}

// Per-axis boundary pair (low face B-, high face B+). Periodic axes must be
// periodic on both faces.
struct BoundarySpec {
    struct AxisFaces {
        BoundaryKind low = BoundaryKind::Dirichlet;
        BoundaryKind high = BoundaryKind::Dirichlet;
    };
    std::vector<AxisFaces> axes;

    void validate(const Grid& g) const {
        if (static_cast<int>(axes.size()) != g.d)
            throw ConfigError("boundary: need one face pair per axis");
        for (const auto& a : axes) {
            const bool pl = a.low == BoundaryKind::Periodic;
            const bool ph = a.high == BoundaryKind::Periodic;
            if (pl != ph)
                throw ConfigError("boundary: periodic must apply to both faces of an axis");
        }
    }

    bool periodic(int axis) const { return axes[axis].low == BoundaryKind::Periodic; }
};

// Axis-aligned box of nodes, inclusive per-axis ranges.
struct Box {
    std::vector<std::array<int, 2>> range; // [lo, hi] per axis

    void validate(const Grid& g) const {
        if (static_cast<int>(range.size()) != g.d)
            throw ConfigError("box: need one range per axis");
        for (int axis = 0; axis < g.d; ++axis) {
            if (range[axis][0] < 0 || range[axis][1] >= g.axisSize(axis) ||
                range[axis][0] > range[axis][1])
                throw ConfigError("box: range out of bounds on axis " + std::to_string(axis));
        }
    }

    std::vector<std::uint64_t> nodes(const Grid& g) const {
        validate(g);
        std::vector<std::uint64_t> out;
        std::vector<int> coord(g.d);
        for (int axis = 0; axis < g.d; ++axis) coord[axis] = range[axis][0];
        while (true) {
            out.push_back(g.nodeIndex(coord));
            int axis = 0;
            while (axis < g.d) {
                if (++coord[axis] <= range[axis][1]) break;
                coord[axis] = range[axis][0];
                ++axis;
            }
            if (axis == g.d) break;
        }
        std::sort(out.begin(), out.end());
        return out;
    }
};

// Piecewise-constant scalar field: a default value plus disjoint regions of
// nodes carrying their own values.
struct PiecewiseField {
    struct Region {
        std::vector<std::uint64_t> nodes; // sorted, unique
        double value = 0.0;
    };

    std::string name;
    double defaultValue = 0.0;
    std::vector<Region> regions;

    void validate(const Grid& g) const {
        std::vector<std::uint64_t> seen;
        for (const auto& r : regions) {
            for (std::uint64_t j : r.nodes) {
                if (j >= g.nodeCount())
                    throw ConfigError("field " + name + ": node index out of range");
                seen.push_back(j);
            }
        }
        std::sort(seen.begin(), seen.end());
        if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
            throw ConfigError("field " + name + ": regions overlap");
    }

    double at(std::uint64_t node) const {
        for (const auto& r : regions)
            if (std::binary_search(r.nodes.begin(), r.nodes.end(), node)) return r.value;
        return defaultValue;
    }

    bool uniform() const {
        for (const auto& r : regions)
            if (!r.nodes.empty() && r.value != defaultValue) return false;
        return true;
    }

    static PiecewiseField constant(std::string name, double value) {
        PiecewiseField f;
        f.name = std::move(name);
        f.defaultValue = value;
        return f;
    }
};

} // namespace lchs
