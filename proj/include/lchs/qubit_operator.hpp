#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lchs/errors.hpp"

namespace lchs {

using Complex = std::complex<double>;

// Coefficients below this magnitude are dropped after merging.
inline constexpr double kCoefZeroTol = 1e-14;
// Dense realizations are a testing oracle only; refuse beyond this size.
inline constexpr int kDenseQubitCap = 12;

// Single-site operators: identity and the four matrix units
//   P00 = |0><0|, P11 = |1><1|, P10 = |1><0|, P01 = |0><1|.
enum class SiteFactor : std::uint8_t { I = 0, P00 = 1, P11 = 2, P10 = 3, P01 = 4 };

inline char factorChar(SiteFactor f) {
    switch (f) {
    case SiteFactor::I:   return 'I';
    case SiteFactor::P00: return '0';
    case SiteFactor::P11: return '1';
    case SiteFactor::P10: return '+';
    case SiteFactor::P01: return '-';
    }
    return '?';
}

inline SiteFactor factorFromChar(char c) {
    switch (c) {
    case 'I': return SiteFactor::I;
    case '0': return SiteFactor::P00;
    case '1': return SiteFactor::P11;
    case '+': return SiteFactor::P10;
    case '-': return SiteFactor::P01;
    default: throw ConfigError(std::string("unknown factor character '") + c + "'");
    }
}

// Product of two matrix units; nullopt encodes the zero operator.
// P(a,b) * P(c,d) = delta(b,c) * P(a,d).
inline std::optional<SiteFactor> multiplyFactors(SiteFactor a, SiteFactor b) {
    if (a == SiteFactor::I) return b;
    if (b == SiteFactor::I) return a;
    const auto row = [](SiteFactor f) { return f == SiteFactor::P11 || f == SiteFactor::P10; };
    const auto col = [](SiteFactor f) { return f == SiteFactor::P11 || f == SiteFactor::P01; };
    const auto unit = [](bool r, bool c) {
        if (r) return c ? SiteFactor::P11 : SiteFactor::P10;
        return c ? SiteFactor::P01 : SiteFactor::P00;
    };
    if (col(a) != row(b)) return std::nullopt;
    return unit(row(a), col(b));
}

inline SiteFactor adjointFactor(SiteFactor f) {
    if (f == SiteFactor::P01) return SiteFactor::P10;
    if (f == SiteFactor::P10) return SiteFactor::P01;
    return f;
}

// Factor string indexed by site; site 0 is the least-significant qubit
// (rightmost in the ket |j_{n-1} ... j_0> and in the debug format).
using FactorString = std::vector<SiteFactor>;

struct OperatorTerm {
    Complex coef;
    FactorString factors;
};

// Canonical ordering (site 0 last): compare strings from the highest site down.
inline bool factorStringLess(const FactorString& a, const FactorString& b) {
    return std::lexicographical_compare(a.rbegin(), a.rend(), b.rbegin(), b.rend(),
                                        [](SiteFactor x, SiteFactor y) {
                                            return static_cast<int>(x) < static_cast<int>(y);
                                        });
}

class QubitOperator {
public:
    QubitOperator() : nQubits_(0) {}
    explicit QubitOperator(int nQubits) : nQubits_(nQubits) {
        if (nQubits < 1) throw ConfigError("operator needs at least one qubit");
    }

    static QubitOperator identity(int nQubits) {
        QubitOperator op(nQubits);
        op.add(1.0, FactorString(nQubits, SiteFactor::I));
        return op;
    }

    int nQubits() const { return nQubits_; }
    const std::vector<OperatorTerm>& terms() const { return terms_; }
    std::size_t termCount() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }

    // Merge-on-insert; drops the term if the merged coefficient vanishes.
    void add(Complex coef, const FactorString& factors) {
        if (static_cast<int>(factors.size()) != nQubits_)
            throw ConfigError("factor string length does not match qubit count");
        auto it = std::lower_bound(terms_.begin(), terms_.end(), factors,
                                   [](const OperatorTerm& t, const FactorString& f) {
                                       return factorStringLess(t.factors, f);
                                   });
        if (it != terms_.end() && it->factors == factors) {
            it->coef += coef;
            if (std::abs(it->coef) < kCoefZeroTol) terms_.erase(it);
        } else if (std::abs(coef) >= kCoefZeroTol) {
            terms_.insert(it, OperatorTerm{coef, factors});
        }
    }

    void add(const QubitOperator& other) {
        requireSameSize(other);
        for (const auto& t : other.terms_) add(t.coef, t.factors);
    }

    QubitOperator scaled(Complex s) const {
        QubitOperator out(nQubits_);
        if (std::abs(s) < kCoefZeroTol) return out;
        out.terms_.reserve(terms_.size());
        for (const auto& t : terms_) {
            Complex c = s * t.coef;
            if (std::abs(c) >= kCoefZeroTol) out.terms_.push_back({c, t.factors});
        }
        return out;
    }

    friend QubitOperator operator+(const QubitOperator& a, const QubitOperator& b) {
        QubitOperator out = a;
        out.add(b);
        return out;
    }

    friend QubitOperator operator-(const QubitOperator& a, const QubitOperator& b) {
        QubitOperator out = a;
        out.add(b.scaled(-1.0));
        return out;
    }

private:
    void requireSameSize(const QubitOperator& other) const {
        if (other.nQubits_ != nQubits_) throw ConfigError("operator qubit counts differ");
    }

    int nQubits_;
    std::vector<OperatorTerm> terms_; // sorted by factorStringLess, unique strings
};

inline QubitOperator multiplyOperators(const QubitOperator& x, const QubitOperator& y) {
    if (x.nQubits() != y.nQubits()) throw ConfigError("operator qubit counts differ");
    const int n = x.nQubits();
    std::map<FactorString, Complex, bool (*)(const FactorString&, const FactorString&)>
        acc(&factorStringLess);
    FactorString prod(n);
    for (const auto& tx : x.terms()) {
        for (const auto& ty : y.terms()) {
            bool vanished = false;
            for (int s = 0; s < n; ++s) {
                auto f = multiplyFactors(tx.factors[s], ty.factors[s]);
                if (!f) {
                    vanished = true;
                    break;
                }
                prod[s] = *f;
            }
            if (!vanished) acc[prod] += tx.coef * ty.coef;
        }
    }
    QubitOperator out(n);
    for (const auto& [factors, coef] : acc) out.add(coef, factors);
    return out;
}

inline QubitOperator adjoint(const QubitOperator& x) {
    QubitOperator out(x.nQubits());
    FactorString adj;
    for (const auto& t : x.terms()) {
        adj = t.factors;
        for (auto& f : adj) f = adjointFactor(f);
        out.add(std::conj(t.coef), adj);
    }
    return out;
}

// A = L + iH with L = (A + A^dag)/2 Hermitian and H = (A - A^dag)/2i Hermitian.
struct HermitianParts {
    QubitOperator l;
    QubitOperator h;
};

inline HermitianParts hermitianSplit(const QubitOperator& a) {
    QubitOperator adj = adjoint(a);
    QubitOperator l = (a + adj).scaled(0.5);
    QubitOperator h = (a - adj).scaled(Complex(0.0, -0.5));
    return {std::move(l), std::move(h)};
}

// Down-shift S^-: maps |j> -> |j-1>, annihilating |0> unless periodic, in which
// case the cyclic closure |2^n-1><0| is appended.
inline QubitOperator shiftMinus(int nBits, bool periodic) {
    if (nBits < 1) throw ConfigError("shiftMinus needs nBits >= 1");
    QubitOperator op(nBits);
    for (int jp = 1; jp <= nBits; ++jp) {
        FactorString f(nBits, SiteFactor::I);
        for (int s = 0; s < jp - 1; ++s) f[s] = SiteFactor::P10;
        f[jp - 1] = SiteFactor::P01;
        op.add(1.0, f);
    }
    if (periodic) op.add(1.0, FactorString(nBits, SiteFactor::P10));
    return op;
}

inline QubitOperator shiftPlus(int nBits, bool periodic) {
    return adjoint(shiftMinus(nBits, periodic));
}

struct Statevector {
    int nQubits = 0;
    std::vector<Complex> amp;

    Statevector() = default;
    explicit Statevector(int n) : nQubits(n), amp(std::size_t(1) << n, Complex(0.0, 0.0)) {}

    std::size_t size() const { return amp.size(); }

    double norm() const {
        double s = 0.0;
        for (const auto& a : amp) s += std::norm(a);
        return std::sqrt(s);
    }

    void scale(Complex c) {
        for (auto& a : amp) a *= c;
    }
};

// Per-term action data: a ladder string is a partial permutation with weight.
struct TermAction {
    Complex coef;
    std::uint64_t constrMask = 0; // sites with a non-identity factor
    std::uint64_t constrVal = 0;  // required input bits on those sites
    std::uint64_t flipMask = 0;   // sites whose bit flips (P01/P10)
    std::vector<int> freeBits;    // identity sites
};

inline TermAction termAction(const OperatorTerm& t) {
    TermAction a;
    a.coef = t.coef;
    for (std::size_t s = 0; s < t.factors.size(); ++s) {
        const std::uint64_t bit = std::uint64_t(1) << s;
        switch (t.factors[s]) {
        case SiteFactor::I:
            a.freeBits.push_back(static_cast<int>(s));
            break;
        case SiteFactor::P00:
            a.constrMask |= bit;
            break;
        case SiteFactor::P11:
            a.constrMask |= bit;
            a.constrVal |= bit;
            break;
        case SiteFactor::P10: // |1><0|: input 0, output 1
            a.constrMask |= bit;
            a.flipMask |= bit;
            break;
        case SiteFactor::P01: // |0><1|: input 1, output 0
            a.constrMask |= bit;
            a.constrVal |= bit;
            a.flipMask |= bit;
            break;
        }
    }
    return a;
}

inline Statevector applyOperator(const QubitOperator& x, const Statevector& v) {
    if (x.nQubits() != v.nQubits) throw ConfigError("operator/state qubit counts differ");
    Statevector out(v.nQubits);
    for (const auto& t : x.terms()) {
        const TermAction a = termAction(t);
        const std::uint64_t count = std::uint64_t(1) << a.freeBits.size();
        for (std::uint64_t s = 0; s < count; ++s) {
            std::uint64_t j = a.constrVal;
            for (std::size_t b = 0; b < a.freeBits.size(); ++b)
                j |= ((s >> b) & 1u) << a.freeBits[b];
            out.amp[j ^ a.flipMask] += a.coef * v.amp[j];
        }
    }
    return out;
}

// Dense realization (testing oracle; capped).
inline Eigen::MatrixXcd toDense(const QubitOperator& x) {
    if (x.nQubits() > kDenseQubitCap)
        throw CapError("dense realization capped at " + std::to_string(kDenseQubitCap) +
                       " qubits");
    const std::size_t dim = std::size_t(1) << x.nQubits();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
    for (const auto& t : x.terms()) {
        const TermAction a = termAction(t);
        const std::uint64_t count = std::uint64_t(1) << a.freeBits.size();
        for (std::uint64_t s = 0; s < count; ++s) {
            std::uint64_t j = a.constrVal;
            for (std::size_t b = 0; b < a.freeBits.size(); ++b)
                j |= ((s >> b) & 1u) << a.freeBits[b];
            m(j ^ a.flipMask, j) += a.coef;
        }
    }
    return m;
}

// Debug text format: one term per line, "(re,im) <factors>", site 0 rightmost.
inline std::string toDebugText(const QubitOperator& x) {
    std::ostringstream os;
    char buf[64];
    for (const auto& t : x.terms()) {
        std::snprintf(buf, sizeof(buf), "(%.17g,%.17g) ", t.coef.real(), t.coef.imag());
        os << buf;
        for (int s = x.nQubits() - 1; s >= 0; --s) os << factorChar(t.factors[s]);
        os << '\n';
    }
    return os.str();
}

inline QubitOperator operatorFromDebugText(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    QubitOperator op;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        double re = 0.0, im = 0.0;
        int consumed = 0;
        if (std::sscanf(line.c_str(), " (%lg,%lg) %n", &re, &im, &consumed) < 2)
            throw ConfigError("malformed operator line: " + line);
        std::string chars = line.substr(consumed);
        while (!chars.empty() && std::isspace(static_cast<unsigned char>(chars.back())))
            chars.pop_back();
        if (chars.empty()) throw ConfigError("missing factor string: " + line);
        if (first) {
            op = QubitOperator(static_cast<int>(chars.size()));
            first = false;
        }
        if (static_cast<int>(chars.size()) != op.nQubits())
            throw ConfigError("inconsistent factor string length: " + line);
        FactorString f(chars.size());
        for (std::size_t i = 0; i < chars.size(); ++i)
            f[op.nQubits() - 1 - static_cast<int>(i)] = factorFromChar(chars[i]);
        op.add(Complex(re, im), f);
    }
    if (first) throw ConfigError("empty operator text");
    return op;
}

} // namespace lchs
