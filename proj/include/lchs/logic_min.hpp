#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lchs/grid.hpp"
#include "lchs/qubit_operator.hpp"

namespace lchs {

// Product of sigma00/sigma11 projectors over the cared positions, identity on
// the dashed ones. Bit i of mask/ones refers to qubit site i.
struct Cube {
    std::uint64_t mask = 0; // cared positions
    std::uint64_t ones = 0; // values on cared positions, subset of mask
    double value = 0.0;

    bool covers(std::uint64_t j) const { return ((j ^ ones) & mask) == 0; }
    int dashCount(int nBits) const { return nBits - std::popcount(mask); }

    std::string bitsString(int nBits) const {
        std::string s(nBits, '-');
        for (int i = 0; i < nBits; ++i) {
            const std::uint64_t b = std::uint64_t(1) << i;
            if (mask & b) s[nBits - 1 - i] = (ones & b) ? '1' : '0';
        }
        return s;
    }
};

// Parses the display form (leftmost character = highest site).
inline Cube cubeFromString(const std::string& s, double value = 0.0) {
    Cube c;
    c.value = value;
    const int n = static_cast<int>(s.size());
    for (int i = 0; i < n; ++i) {
        const char ch = s[n - 1 - i];
        const std::uint64_t b = std::uint64_t(1) << i;
        if (ch == '1') { c.mask |= b; c.ones |= b; }
        else if (ch == '0') { c.mask |= b; }
        else if (ch != '-') throw ConfigError("cube: characters must be 0, 1 or -");
    }
    return c;
}

struct ImplicantCover {
    int nBits = 0;
    std::vector<Cube> cubes;
    double defaultValue = 0.0;

    double at(std::uint64_t j) const {
        double v = defaultValue;
        for (const auto& c : cubes)
            if (c.covers(j)) v += c.value;
        return v;
    }
};

namespace detail {

// Expand-from-minterms heuristic: grow each uncovered on-set index into a
// maximal cube that stays inside the on-set, then drop redundant cubes.
inline std::vector<Cube> expandIrredundant(const std::vector<std::uint64_t>& onSet, int nBits) {
    std::unordered_set<std::uint64_t> members(onSet.begin(), onSet.end());
    std::unordered_set<std::uint64_t> covered;
    std::vector<Cube> cubes;

    std::vector<std::uint64_t> cubeIndices;
    for (std::uint64_t seed : onSet) {
        if (covered.count(seed)) continue;
        Cube c;
        c.mask = (nBits == 64) ? ~std::uint64_t(0) : ((std::uint64_t(1) << nBits) - 1);
        c.ones = seed;
        cubeIndices.assign(1, seed);
        for (int bitPos = 0; bitPos < nBits; ++bitPos) {
            const std::uint64_t b = std::uint64_t(1) << bitPos;
            if (!(c.mask & b)) continue;
            bool ok = true;
            for (std::uint64_t j : cubeIndices) {
                if (!members.count(j ^ b)) { ok = false; break; }
            }
            if (!ok) continue;
            const std::size_t half = cubeIndices.size();
            for (std::size_t t = 0; t < half; ++t) cubeIndices.push_back(cubeIndices[t] ^ b);
            c.mask &= ~b;
            c.ones &= ~b;
        }
        for (std::uint64_t j : cubeIndices) covered.insert(j);
        cubes.push_back(c);
    }

    // Irredundant pass: remove cubes whose on-set coverage is also provided
    // by the remaining cubes.
    std::unordered_map<std::uint64_t, int> count;
    auto enumerate = [&](const Cube& c, const std::function<void(std::uint64_t)>& fn) {
        std::vector<int> dash;
        for (int i = 0; i < nBits; ++i)
            if (!(c.mask & (std::uint64_t(1) << i))) dash.push_back(i);
        const std::uint64_t m = std::uint64_t(1) << dash.size();
        for (std::uint64_t t = 0; t < m; ++t) {
            std::uint64_t j = c.ones;
            for (std::size_t i = 0; i < dash.size(); ++i)
                if (t & (std::uint64_t(1) << i)) j |= std::uint64_t(1) << dash[i];
            fn(j);
        }
    };
    for (const auto& c : cubes) enumerate(c, [&](std::uint64_t j) { ++count[j]; });

    std::vector<std::size_t> order(cubes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::popcount(cubes[a].mask) > std::popcount(cubes[b].mask);
    });
    std::vector<bool> keep(cubes.size(), true);
    for (std::size_t idx : order) {
        bool removable = true;
        enumerate(cubes[idx], [&](std::uint64_t j) {
            if (count[j] < 2) removable = false;
        });
        if (removable) {
            keep[idx] = false;
            enumerate(cubes[idx], [&](std::uint64_t j) { --count[j]; });
        }
    }
    std::vector<Cube> out;
    for (std::size_t i = 0; i < cubes.size(); ++i)
        if (keep[i]) out.push_back(cubes[i]);
    return out;
}

// Quine-McCluskey prime implicant generation.
inline std::vector<Cube> primeImplicants(const std::vector<std::uint64_t>& onSet, int nBits) {
    std::vector<Cube> primes;
    std::map<std::uint64_t, std::unordered_set<std::uint64_t>> level;
    const std::uint64_t full = (std::uint64_t(1) << nBits) - 1;
    level[full] = std::unordered_set<std::uint64_t>(onSet.begin(), onSet.end());

    while (!level.empty()) {
        std::map<std::uint64_t, std::unordered_set<std::uint64_t>> next;
        for (const auto& [mask, onesSet] : level) {
            std::unordered_set<std::uint64_t> combined;
            for (std::uint64_t o : onesSet) {
                for (int bitPos = 0; bitPos < nBits; ++bitPos) {
                    const std::uint64_t b = std::uint64_t(1) << bitPos;
                    if (!(mask & b) || (o & b)) continue;
                    if (onesSet.count(o | b)) {
                        next[mask & ~b].insert(o);
                        combined.insert(o);
                        combined.insert(o | b);
                    }
                }
            }
            for (std::uint64_t o : onesSet)
                if (!combined.count(o)) primes.push_back(Cube{mask, o, 0.0});
        }
        level = std::move(next);
    }
    return primes;
}

struct CoverSelector {
    int nWords = 0;
    std::vector<std::vector<std::uint64_t>> rows;     // per candidate, minterm bitset
    std::vector<std::vector<int>> mintermRows;        // per minterm, covering candidates
    std::vector<std::uint64_t> target;
    std::size_t best = SIZE_MAX;
    std::vector<int> bestPick, pick;
    long nodeBudget = 200000;

    // Greedy cover establishes the initial upper bound, so an exhausted
    // budget can never return anything worse than greedy.
    void seedGreedy() {
        std::vector<std::uint64_t> have(nWords, 0);
        std::vector<int> picks;
        while (true) {
            int bestRow = -1, bestGain = 0;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                int gain = 0;
                for (int w = 0; w < nWords; ++w)
                    gain += std::popcount(rows[r][w] & target[w] & ~have[w]);
                if (gain > bestGain) { bestGain = gain; bestRow = static_cast<int>(r); }
            }
            if (bestRow < 0) break;
            for (int w = 0; w < nWords; ++w) have[w] |= rows[bestRow][w];
            picks.push_back(bestRow);
            bool full = true;
            for (int w = 0; w < nWords; ++w)
                if ((have[w] & target[w]) != target[w]) { full = false; break; }
            if (full) {
                best = picks.size();
                bestPick = picks;
                break;
            }
        }
    }

    int scarcestUncovered(const std::vector<std::uint64_t>& cov) const {
        int bestM = -1;
        std::size_t fewest = SIZE_MAX;
        for (int w = 0; w < nWords; ++w) {
            std::uint64_t miss = target[w] & ~cov[w];
            while (miss) {
                const int m = w * 64 + std::countr_zero(miss);
                miss &= miss - 1;
                if (mintermRows[m].size() < fewest) {
                    fewest = mintermRows[m].size();
                    bestM = m;
                }
            }
        }
        return bestM;
    }

    void search(std::vector<std::uint64_t>& cov) {
        const int m = scarcestUncovered(cov);
        if (m < 0) {
            if (pick.size() < best) {
                best = pick.size();
                bestPick = pick;
            }
            return;
        }
        if (pick.size() + 1 >= best) return; // any completion costs at least one more
        if (--nodeBudget < 0) return;
        for (int p : mintermRows[m]) {
            std::vector<std::uint64_t> cov2(cov);
            for (int w = 0; w < nWords; ++w) cov2[w] |= rows[p][w];
            pick.push_back(p);
            search(cov2);
            pick.pop_back();
        }
    }
};

inline std::vector<Cube> selectCover(const std::vector<Cube>& primes,
                                     const std::vector<std::uint64_t>& minterms) {
    const std::size_t nm = minterms.size();
    std::vector<std::vector<int>> coveringPrimes(nm);
    std::vector<std::vector<int>> primeMinterms(primes.size());
    for (std::size_t p = 0; p < primes.size(); ++p)
        for (std::size_t m = 0; m < nm; ++m)
            if (primes[p].covers(minterms[m])) {
                coveringPrimes[m].push_back(static_cast<int>(p));
                primeMinterms[p].push_back(static_cast<int>(m));
            }

    std::vector<bool> chosen(primes.size(), false), covered(nm, false);
    bool progress = true;
    while (progress) {
        progress = false;
        for (std::size_t m = 0; m < nm; ++m) {
            if (covered[m]) continue;
            int alive = 0, last = -1;
            for (int p : coveringPrimes[m])
                if (chosen[p]) { alive = -1; break; }
                else { ++alive; last = p; }
            if (alive == 1) {
                chosen[last] = true;
                for (int mm : primeMinterms[last]) covered[mm] = true;
                progress = true;
            } else if (alive == -1) {
                covered[m] = true;
            }
        }
    }

    std::vector<int> restM;
    for (std::size_t m = 0; m < nm; ++m)
        if (!covered[m]) restM.push_back(static_cast<int>(m));

    std::vector<Cube> out;
    for (std::size_t p = 0; p < primes.size(); ++p)
        if (chosen[p]) out.push_back(primes[p]);
    if (restM.empty()) return out;

    std::vector<int> restP;
    for (std::size_t p = 0; p < primes.size(); ++p) {
        if (chosen[p]) continue;
        for (int m : primeMinterms[p])
            if (!covered[m]) { restP.push_back(static_cast<int>(p)); break; }
    }

    CoverSelector sel;
    sel.nWords = static_cast<int>((restM.size() + 63) / 64);
    sel.target.assign(sel.nWords, 0);
    sel.mintermRows.assign(restM.size(), {});
    std::unordered_map<int, int> mPos;
    for (std::size_t i = 0; i < restM.size(); ++i) {
        mPos[restM[i]] = static_cast<int>(i);
        sel.target[i / 64] |= std::uint64_t(1) << (i % 64);
    }
    sel.rows.assign(restP.size(), std::vector<std::uint64_t>(sel.nWords, 0));
    for (std::size_t r = 0; r < restP.size(); ++r)
        for (int m : primeMinterms[restP[r]]) {
            auto it = mPos.find(m);
            if (it != mPos.end()) {
                sel.rows[r][it->second / 64] |= std::uint64_t(1) << (it->second % 64);
                sel.mintermRows[it->second].push_back(static_cast<int>(r));
            }
        }

    sel.seedGreedy();
    std::vector<std::uint64_t> cov(sel.nWords, 0);
    sel.search(cov);

    for (int r : sel.bestPick) out.push_back(primes[restP[r]]);
    return out;
}

} // namespace detail

// Minimal-ish sum-of-products cover of the on-set: exact Quine-McCluskey with
// essential-prime extraction and branch-and-bound cover selection up to 16
// bits, expand/irredundant heuristic above. The returned cubes cover the
// on-set exactly (never an off-set index) and never outnumber it.
inline std::vector<Cube> minimizeCover(const std::vector<std::uint64_t>& onSetIn, int nBits) {
    if (nBits < 1 || nBits > 63) throw ConfigError("minimizeCover: unsupported bit width");
    std::vector<std::uint64_t> onSet(onSetIn);
    std::sort(onSet.begin(), onSet.end());
    onSet.erase(std::unique(onSet.begin(), onSet.end()), onSet.end());
    const std::uint64_t space = std::uint64_t(1) << nBits;
    for (std::uint64_t j : onSet)
        if (j >= space) throw ConfigError("minimizeCover: index out of range");

    if (onSet.empty()) return {};
    if (onSet.size() == space) return {Cube{0, 0, 0.0}};

    if (nBits <= 16) {
        const auto primes = detail::primeImplicants(onSet, nBits);
        auto exact = detail::selectCover(primes, onSet);
        // On hard cyclic cores the bounded search may stop at its greedy
        // seed; the expand pass occasionally does better there, so keep
        // whichever cover is smaller.
        auto expanded = detail::expandIrredundant(onSet, nBits);
        return expanded.size() < exact.size() ? expanded : exact;
    }
    return detail::expandIrredundant(onSet, nBits);
}

// Rewrites a cover into pairwise-disjoint cubes over the same index set, so
// that summing cube values never double-counts a node. Fragments inherit the
// value of the cube they came from.
inline std::vector<Cube> resolveDuplicates(const std::vector<Cube>& cubes) {
    std::vector<Cube> result;
    for (const auto& cIn : cubes) {
        std::vector<Cube> frags{cIn};
        for (const auto& r : result) {
            std::vector<Cube> next;
            for (const auto& f : frags) {
                const std::uint64_t common = f.mask & r.mask;
                if ((f.ones ^ r.ones) & common) { // no overlap
                    next.push_back(f);
                    continue;
                }
                // Split f along positions where r is specified but f is not;
                // the fully-constrained remainder lies inside r and is dropped.
                Cube rem = f;
                std::uint64_t extra = r.mask & ~f.mask;
                while (extra) {
                    const std::uint64_t b = extra & (~extra + 1);
                    extra &= extra - 1;
                    Cube piece = rem;
                    piece.mask |= b;
                    piece.ones = (rem.ones & ~b) | (~r.ones & b);
                    next.push_back(piece);
                    rem.mask |= b;
                    rem.ones = (rem.ones & ~b) | (r.ones & b);
                }
            }
            frags = std::move(next);
            if (frags.empty()) break;
        }
        result.insert(result.end(), frags.begin(), frags.end());
    }
    return result;
}

inline FactorString cubeToFactors(const Cube& c, int nBits) {
    FactorString f(nBits, SiteFactor::I);
    for (int i = 0; i < nBits; ++i) {
        const std::uint64_t b = std::uint64_t(1) << i;
        if (c.mask & b) f[i] = (c.ones & b) ? SiteFactor::P11 : SiteFactor::P00;
    }
    return f;
}

// Builds the symbolic cover of a piecewise-constant field under a pointwise
// transform: one disjoint cube set per value class, carrying the transformed
// offsets from the default, plus the transformed default on identity.
inline ImplicantCover fieldToCover(const PiecewiseField& f, const Grid& grid,
                                   const std::function<double(double)>& transform) {
    f.validate(grid);
    const int nBits = grid.totalBits();
    auto apply = [&](double x) {
        const double y = transform(x);
        if (!std::isfinite(y))
            throw ConfigError("field " + f.name + ": transform undefined at value " +
                              std::to_string(x));
        return y;
    };

    ImplicantCover cover;
    cover.nBits = nBits;
    cover.defaultValue = apply(f.defaultValue);

    std::map<double, std::vector<std::uint64_t>> classes;
    for (const auto& r : f.regions) {
        if (r.nodes.empty() || r.value == f.defaultValue) continue;
        auto& ix = classes[r.value];
        ix.insert(ix.end(), r.nodes.begin(), r.nodes.end());
    }
    for (auto& [value, indices] : classes) {
        const double delta = apply(value) - cover.defaultValue;
        if (std::abs(delta) < kCoefZeroTol) continue;
        auto cubes = resolveDuplicates(minimizeCover(indices, nBits));
        for (auto& c : cubes) {
            c.value = delta;
            cover.cubes.push_back(c);
        }
    }
    return cover;
}

// Diagonal operator diag(transform(field value at node j)) in projector-string
// form. Exact by construction: minimization compresses but never approximates.
inline QubitOperator fieldToOperator(const PiecewiseField& f, const Grid& grid,
                                     const std::function<double(double)>& transform) {
    const ImplicantCover cover = fieldToCover(f, grid, transform);
    QubitOperator op(cover.nBits);
    if (std::abs(cover.defaultValue) >= kCoefZeroTol)
        op.add(cover.defaultValue, FactorString(cover.nBits, SiteFactor::I));
    for (const auto& c : cover.cubes)
        op.add(c.value, cubeToFactors(c, cover.nBits));
    return op;
}

} // namespace lchs
