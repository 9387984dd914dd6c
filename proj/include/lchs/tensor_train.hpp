#pragma once

// Tensor-train (matrix product state) machinery for the LCU coefficient
// vector. Provides analytic trains for the integration grid k and for
// 1 + k^2, a Newton square-root iteration, MALS linear solves on trains,
// canonicalization, and text serialization used to cache solver results.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lchs/errors.hpp"

namespace lchs {

inline constexpr int kTrainDenseCap = 16;
inline constexpr int kTrainOperatorDenseCap = 12;
inline constexpr double kSingularDropRatio = 1e-14;

// One site of a train vector: a leftBond x 2 x rightBond tensor stored
// row-major as (left, physical, right).
struct TrainCore {
    int left = 1;
    int right = 1;
    std::vector<double> data;

    TrainCore() = default;
    TrainCore(int l, int r) : left(l), right(r), data(std::size_t(l) * 2 * r, 0.0) {}

    double& at(int b1, int a, int b2) {
        return data[(std::size_t(b1) * 2 + a) * right + b2];
    }
    double at(int b1, int a, int b2) const {
        return data[(std::size_t(b1) * 2 + a) * right + b2];
    }
};

// One site of a train operator: leftBond x 2 x 2 x rightBond, row-major as
// (left, row physical, column physical, right).
struct OpCore {
    int left = 1;
    int right = 1;
    std::vector<double> data;

    OpCore() = default;
    OpCore(int l, int r) : left(l), right(r), data(std::size_t(l) * 4 * r, 0.0) {}

    double& at(int b1, int i, int j, int b2) {
        return data[((std::size_t(b1) * 2 + i) * 2 + j) * right + b2];
    }
    double at(int b1, int i, int j, int b2) const {
        return data[((std::size_t(b1) * 2 + i) * 2 + j) * right + b2];
    }
};

enum class CanonicalForm { None, Left, Right, Mixed };

// Train factorization of a 2^nSites real vector. Core 0 carries the most
// significant bit of the vector index.
struct TensorTrainVector {
    std::vector<TrainCore> cores;
    CanonicalForm form = CanonicalForm::None;
    int orthoCenter = -1;

    int nSites() const { return int(cores.size()); }

    std::vector<int> bondProfile() const {
        std::vector<int> p;
        p.push_back(cores.empty() ? 1 : cores.front().left);
        for (const TrainCore& c : cores) p.push_back(c.right);
        return p;
    }

    int maxBond() const {
        int m = 1;
        for (const TrainCore& c : cores) m = std::max({m, c.left, c.right});
        return m;
    }

    void validate() const {
        if (cores.empty()) throw ConfigError("train: no cores");
        if (cores.front().left != 1 || cores.back().right != 1)
            throw ConfigError("train: boundary bonds must be 1");
        for (std::size_t s = 0; s < cores.size(); ++s) {
            const TrainCore& c = cores[s];
            if (c.left < 1 || c.right < 1)
                throw ConfigError("train: nonpositive bond dimension");
            if (c.data.size() != std::size_t(c.left) * 2 * c.right)
                throw ConfigError("train: core data size mismatch");
            if (s + 1 < cores.size() && c.right != cores[s + 1].left)
                throw ConfigError("train: adjacent bond dimensions differ");
        }
    }
};

struct TensorTrainOperator {
    std::vector<OpCore> cores;

    int nSites() const { return int(cores.size()); }

    void validate() const {
        if (cores.empty()) throw ConfigError("train operator: no cores");
        if (cores.front().left != 1 || cores.back().right != 1)
            throw ConfigError("train operator: boundary bonds must be 1");
        for (std::size_t s = 0; s < cores.size(); ++s) {
            const OpCore& c = cores[s];
            if (c.left < 1 || c.right < 1)
                throw ConfigError("train operator: nonpositive bond dimension");
            if (c.data.size() != std::size_t(c.left) * 4 * c.right)
                throw ConfigError("train operator: core data size mismatch");
            if (s + 1 < cores.size() && c.right != cores[s + 1].left)
                throw ConfigError("train operator: adjacent bond dimensions differ");
        }
    }
};

// Integration point for ancilla index a under the signed fractional binary
// encoding: the top bit carries weight -2^(nAnc-1), the rest their usual
// power of two, and the whole value is scaled by 2^-nFrac.
inline double integrationPoint(std::uint64_t a, int nAnc, int nFrac) {
    if (nAnc < 1 || nAnc > 62) throw ConfigError("integrationPoint: nAnc out of range");
    if (nFrac < 0) throw ConfigError("integrationPoint: nFrac must be nonnegative");
    if (a >= (std::uint64_t{1} << nAnc)) throw ConfigError("integrationPoint: index out of range");
    std::int64_t signedValue = std::int64_t(a);
    if (a & (std::uint64_t{1} << (nAnc - 1))) signedValue -= std::int64_t{1} << nAnc;
    return std::ldexp(double(signedValue), -nFrac);
}

namespace train_detail {

inline void requireBuildArgs(int nAnc, int nFrac, const char* name) {
    if (nAnc < 2) throw ConfigError(std::string(name) + ": need at least two sites");
    if (nAnc > 62) throw ConfigError(std::string(name) + ": nAnc out of range");
    if (nFrac < 0) throw ConfigError(std::string(name) + ": nFrac must be nonnegative");
}

} // namespace train_detail

// Exact train for the vector of integration points [k_0 ... k_{2^nAnc - 1}].
// Channel c of the bond space carries the contribution of one bit: the
// leftmost core deposits the negatively weighted sign bit on the last
// channel, interior core s deposits its bit weight on channel nAnc - 1 - s,
// and every other channel passes through unchanged. Max bond is nAnc.
inline TensorTrainVector buildKVector(int nAnc, int nFrac) {
    train_detail::requireBuildArgs(nAnc, nFrac, "buildKVector");
    TensorTrainVector t;
    t.cores.reserve(std::size_t(nAnc));

    TrainCore first(1, nAnc);
    for (int a = 0; a < 2; ++a)
        for (int c = 0; c < nAnc; ++c)
            first.at(0, a, c) = (c == nAnc - 1) ? -double(a) * std::ldexp(1.0, nAnc - 1 - nFrac) : 1.0;
    t.cores.push_back(std::move(first));

    for (int s = 1; s <= nAnc - 2; ++s) {
        const int m = nAnc - s;
        TrainCore mid(nAnc, nAnc);
        for (int c = 0; c < nAnc; ++c)
            for (int a = 0; a < 2; ++a)
                mid.at(c, a, c) = (c == m - 1) ? double(a) * std::ldexp(1.0, m - 1 - nFrac) : 1.0;
        t.cores.push_back(std::move(mid));
    }

    TrainCore last(nAnc, 1);
    for (int c = 0; c < nAnc; ++c)
        for (int a = 0; a < 2; ++a)
            last.at(c, a, 0) = (c == 0) ? double(a) * std::ldexp(1.0, -nFrac) : 1.0;
    t.cores.push_back(std::move(last));
    return t;
}

// Exact train for the vector [1 + k_a^2]. The bond space is the Kronecker
// square of the k-train bond space (pair channels multiply two independent
// copies of the k contraction, so their sum contributes k^2) plus one extra
// pass-through channel that contributes the constant 1. Max bond nAnc^2 + 1.
inline TensorTrainVector buildOnePlusKSquared(int nAnc, int nFrac) {
    train_detail::requireBuildArgs(nAnc, nFrac, "buildOnePlusKSquared");
    const TensorTrainVector k = buildKVector(nAnc, nFrac);
    const int nsq = nAnc * nAnc;
    const int dim = nsq + 1;

    TensorTrainVector t;
    t.cores.reserve(std::size_t(nAnc));

    const TrainCore& k0 = k.cores.front();
    TrainCore first(1, dim);
    for (int a = 0; a < 2; ++a) {
        for (int c = 0; c < nsq; ++c)
            first.at(0, a, c) = k0.at(0, a, c / nAnc) * k0.at(0, a, c % nAnc);
        first.at(0, a, nsq) = 1.0;
    }
    t.cores.push_back(std::move(first));

    for (int s = 1; s <= nAnc - 2; ++s) {
        const TrainCore& km = k.cores[std::size_t(s)];
        TrainCore mid(dim, dim);
        for (int c1 = 0; c1 < nsq; ++c1)
            for (int a = 0; a < 2; ++a)
                for (int c2 = 0; c2 < nsq; ++c2) {
                    const double v = km.at(c1 / nAnc, a, c2 / nAnc) * km.at(c1 % nAnc, a, c2 % nAnc);
                    if (v != 0.0) mid.at(c1, a, c2) = v;
                }
        for (int a = 0; a < 2; ++a) mid.at(nsq, a, nsq) = 1.0;
        t.cores.push_back(std::move(mid));
    }

    const TrainCore& kl = k.cores.back();
    TrainCore last(dim, 1);
    for (int c = 0; c < nsq; ++c)
        for (int a = 0; a < 2; ++a)
            last.at(c, a, 0) = kl.at(c / nAnc, a, 0) * kl.at(c % nAnc, a, 0);
    for (int a = 0; a < 2; ++a) last.at(nsq, a, 0) = 1.0;
    t.cores.push_back(std::move(last));
    return t;
}

// Rank-one train representing the constant vector value * [1, 1, ..., 1].
inline TensorTrainVector constantTrain(int nSites, double value) {
    if (nSites < 1) throw ConfigError("constantTrain: need at least one site");
    TensorTrainVector t;
    t.cores.assign(std::size_t(nSites), TrainCore(1, 1));
    for (TrainCore& c : t.cores) c.data = {1.0, 1.0};
    t.cores[0].data = {value, value};
    return t;
}

inline TensorTrainVector scaleTrain(TensorTrainVector t, double factor) {
    for (double& v : t.cores.front().data) v *= factor;
    return t;
}

// Full contraction to a dense vector (index bit 0 of core 0 is the MSB).
inline std::vector<double> contractToVector(const TensorTrainVector& t) {
    t.validate();
    if (t.nSites() > kTrainDenseCap)
        throw CapError("contractToVector: site count exceeds dense cap");
    std::vector<double> rows{1.0};
    std::size_t nRows = 1;
    int rowLen = 1;
    for (const TrainCore& c : t.cores) {
        if (c.left != rowLen) throw ConfigError("contractToVector: bond mismatch");
        std::vector<double> next(nRows * 2 * c.right, 0.0);
        for (std::size_t r = 0; r < nRows; ++r) {
            const double* in = rows.data() + r * std::size_t(rowLen);
            for (int a = 0; a < 2; ++a) {
                double* out = next.data() + (r * 2 + a) * std::size_t(c.right);
                for (int b1 = 0; b1 < c.left; ++b1) {
                    const double v = in[b1];
                    if (v == 0.0) continue;
                    const double* row = c.data.data() + (std::size_t(b1) * 2 + a) * c.right;
                    for (int b2 = 0; b2 < c.right; ++b2) out[b2] += v * row[b2];
                }
            }
        }
        rows = std::move(next);
        nRows *= 2;
        rowLen = c.right;
    }
    std::vector<double> result(nRows);
    for (std::size_t i = 0; i < nRows; ++i) result[i] = rows[i];
    return result;
}

// Dense realization of a train operator (row index from the first physical
// leg, column from the second; bit of core 0 is the MSB of both).
inline Eigen::MatrixXd operatorToDense(const TensorTrainOperator& op) {
    op.validate();
    const int n = op.nSites();
    if (n > kTrainOperatorDenseCap)
        throw CapError("operatorToDense: site count exceeds dense cap");
    std::vector<double> rows{1.0};
    std::size_t nRows = 1;
    int rowLen = 1;
    for (const OpCore& c : op.cores) {
        std::vector<double> next(nRows * 4 * c.right, 0.0);
        for (std::size_t r = 0; r < nRows; ++r) {
            const double* in = rows.data() + r * std::size_t(rowLen);
            for (int ij = 0; ij < 4; ++ij) {
                double* out = next.data() + (r * 4 + ij) * std::size_t(c.right);
                for (int b1 = 0; b1 < c.left; ++b1) {
                    const double v = in[b1];
                    if (v == 0.0) continue;
                    const double* row = c.data.data() + (std::size_t(b1) * 4 + ij) * c.right;
                    for (int b2 = 0; b2 < c.right; ++b2) out[b2] += v * row[b2];
                }
            }
        }
        rows = std::move(next);
        nRows *= 4;
        rowLen = c.right;
    }
    const std::uint64_t dim = std::uint64_t{1} << n;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(Eigen::Index(dim), Eigen::Index(dim));
    for (std::size_t p = 0; p < nRows; ++p) {
        std::uint64_t i = 0, j = 0;
        for (int s = 0; s < n; ++s) {
            const std::uint64_t pair = (p >> (2 * (n - 1 - s))) & 3;
            i = (i << 1) | (pair >> 1);
            j = (j << 1) | (pair & 1);
        }
        m(Eigen::Index(i), Eigen::Index(j)) = rows[p];
    }
    return m;
}

// Applies a train operator to a train vector; bond dimensions multiply.
inline TensorTrainVector applyToTrain(const TensorTrainOperator& op, const TensorTrainVector& v) {
    op.validate();
    v.validate();
    if (op.nSites() != v.nSites()) throw ConfigError("applyToTrain: site counts differ");
    TensorTrainVector out;
    out.cores.reserve(v.cores.size());
    for (int s = 0; s < v.nSites(); ++s) {
        const OpCore& o = op.cores[std::size_t(s)];
        const TrainCore& c = v.cores[std::size_t(s)];
        TrainCore r(o.left * c.left, o.right * c.right);
        for (int i1 = 0; i1 < o.left; ++i1)
            for (int j1 = 0; j1 < c.left; ++j1)
                for (int a = 0; a < 2; ++a)
                    for (int i2 = 0; i2 < o.right; ++i2)
                        for (int j2 = 0; j2 < c.right; ++j2) {
                            double acc = 0.0;
                            for (int ap = 0; ap < 2; ++ap)
                                acc += o.at(i1, a, ap, i2) * c.at(j1, ap, j2);
                            r.at(i1 * c.left + j1, a, i2 * c.right + j2) = acc;
                        }
        out.cores.push_back(std::move(r));
    }
    return out;
}

// Lifts a train vector to the diagonal train operator with that diagonal.
inline TensorTrainOperator diagonalLift(const TensorTrainVector& v) {
    v.validate();
    TensorTrainOperator op;
    op.cores.reserve(v.cores.size());
    for (const TrainCore& c : v.cores) {
        OpCore o(c.left, c.right);
        for (int b1 = 0; b1 < c.left; ++b1)
            for (int a = 0; a < 2; ++a)
                for (int b2 = 0; b2 < c.right; ++b2)
                    o.at(b1, a, a, b2) = c.at(b1, a, b2);
        op.cores.push_back(std::move(o));
    }
    return op;
}

inline TensorTrainOperator identityOperatorTrain(int nSites) {
    if (nSites < 1) throw ConfigError("identityOperatorTrain: need at least one site");
    TensorTrainOperator op;
    op.cores.assign(std::size_t(nSites), OpCore(1, 1));
    for (OpCore& c : op.cores) {
        c.at(0, 0, 0, 0) = 1.0;
        c.at(0, 1, 1, 0) = 1.0;
    }
    return op;
}

// Elementwise sum of the represented vectors via block-diagonal cores.
inline TensorTrainVector directSum(const TensorTrainVector& u, const TensorTrainVector& v) {
    u.validate();
    v.validate();
    if (u.nSites() != v.nSites()) throw ConfigError("directSum: site counts differ");
    const int n = u.nSites();
    if (n == 1) {
        TensorTrainVector t = u;
        for (int a = 0; a < 2; ++a) t.cores[0].at(0, a, 0) += v.cores[0].at(0, a, 0);
        t.form = CanonicalForm::None;
        return t;
    }
    TensorTrainVector t;
    t.cores.reserve(std::size_t(n));
    for (int s = 0; s < n; ++s) {
        const TrainCore& a = u.cores[std::size_t(s)];
        const TrainCore& b = v.cores[std::size_t(s)];
        const int l = (s == 0) ? 1 : a.left + b.left;
        const int r = (s == n - 1) ? 1 : a.right + b.right;
        TrainCore c(l, r);
        const int lOff = (s == 0) ? 0 : a.left;
        const int rOff = (s == n - 1) ? 0 : a.right;
        for (int p = 0; p < 2; ++p) {
            for (int b1 = 0; b1 < a.left; ++b1)
                for (int b2 = 0; b2 < a.right; ++b2)
                    c.at(b1, p, b2) += a.at(b1, p, b2);
            for (int b1 = 0; b1 < b.left; ++b1)
                for (int b2 = 0; b2 < b.right; ++b2)
                    c.at((s == 0) ? 0 : lOff + b1, p, (s == n - 1) ? 0 : rOff + b2) += b.at(b1, p, b2);
        }
        t.cores.push_back(std::move(c));
    }
    return t;
}

namespace train_detail {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Core as a (left * 2) x right matrix, rows ordered (bond, physical).
inline RowMajorMatrix coreAsLeftMatrix(const TrainCore& c) {
    return Eigen::Map<const RowMajorMatrix>(c.data.data(), std::size_t(c.left) * 2, c.right);
}

// Core as a left x (2 * right) matrix, columns ordered (physical, bond).
inline RowMajorMatrix coreAsRightMatrix(const TrainCore& c) {
    return Eigen::Map<const RowMajorMatrix>(c.data.data(), c.left, std::size_t(c.right) * 2);
}

inline TrainCore coreFromLeftMatrix(const RowMajorMatrix& m, int left) {
    TrainCore c(left, int(m.cols()));
    Eigen::Map<RowMajorMatrix>(c.data.data(), m.rows(), m.cols()) = m;
    return c;
}

inline TrainCore coreFromRightMatrix(const RowMajorMatrix& m, int right) {
    TrainCore c(int(m.rows()), right);
    Eigen::Map<RowMajorMatrix>(c.data.data(), m.rows(), m.cols()) = m;
    return c;
}

// QR-based left-orthogonalization sweep; the represented vector is unchanged
// and every core except the last gets orthonormal columns.
inline void leftOrthogonalizeInPlace(TensorTrainVector& t) {
    const int n = t.nSites();
    for (int s = 0; s < n - 1; ++s) {
        RowMajorMatrix m = coreAsLeftMatrix(t.cores[std::size_t(s)]);
        const Eigen::Index k = std::min(m.rows(), m.cols());
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), k);
        const Eigen::MatrixXd r =
            qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        t.cores[std::size_t(s)] = coreFromLeftMatrix(q, t.cores[std::size_t(s)].left);
        RowMajorMatrix nextM = r * coreAsRightMatrix(t.cores[std::size_t(s) + 1]);
        t.cores[std::size_t(s) + 1] = coreFromRightMatrix(nextM, t.cores[std::size_t(s) + 1].right);
    }
    t.form = CanonicalForm::Left;
    t.orthoCenter = n - 1;
}

inline void rightOrthogonalizeNoCapInPlace(TensorTrainVector& t) {
    const int n = t.nSites();
    for (int s = n - 1; s >= 1; --s) {
        RowMajorMatrix m = coreAsRightMatrix(t.cores[std::size_t(s)]);
        const Eigen::Index k = std::min(m.rows(), m.cols());
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m.transpose());
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m.cols(), k);
        const Eigen::MatrixXd rT =
            Eigen::MatrixXd(qr.matrixQR().topRows(k).triangularView<Eigen::Upper>()).transpose();
        t.cores[std::size_t(s)] = coreFromRightMatrix(q.transpose(), t.cores[std::size_t(s)].right);
        RowMajorMatrix prevM = coreAsLeftMatrix(t.cores[std::size_t(s) - 1]) * rT;
        t.cores[std::size_t(s) - 1] = coreFromLeftMatrix(prevM, t.cores[std::size_t(s) - 1].left);
    }
    t.form = CanonicalForm::Right;
    t.orthoCenter = 0;
}

inline void rightTruncateInPlace(TensorTrainVector& t, int chiCap) {
    const int n = t.nSites();
    for (int s = n - 1; s >= 1; --s) {
        RowMajorMatrix m = coreAsRightMatrix(t.cores[std::size_t(s)]);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        int r = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(i) > sv(0) * kSingularDropRatio) ++r;
        r = std::max(1, std::min(r, chiCap));
        RowMajorMatrix vT = svd.matrixV().leftCols(r).transpose();
        t.cores[std::size_t(s)] = coreFromRightMatrix(vT, t.cores[std::size_t(s)].right);
        const Eigen::MatrixXd carry =
            svd.matrixU().leftCols(r) * sv.head(r).asDiagonal();
        RowMajorMatrix prevM = coreAsLeftMatrix(t.cores[std::size_t(s) - 1]) * carry;
        t.cores[std::size_t(s) - 1] = coreFromLeftMatrix(prevM, t.cores[std::size_t(s) - 1].left);
    }
    t.form = CanonicalForm::Right;
    t.orthoCenter = 0;
}

} // namespace train_detail

// Right-canonicalizes a train: every core except the leftmost satisfies the
// right-orthogonality identity. Without a cap the represented vector is
// preserved exactly; with a cap, an orthogonalization pre-sweep makes each
// truncation discard the global Schmidt coefficients of the current vector.
inline TensorTrainVector rightCanonicalize(TensorTrainVector t, std::optional<int> chiCap = std::nullopt) {
    t.validate();
    if (chiCap && *chiCap < 1) throw ConfigError("rightCanonicalize: bond cap must be positive");
    if (chiCap) {
        train_detail::leftOrthogonalizeInPlace(t);
        train_detail::rightTruncateInPlace(t, *chiCap);
    } else {
        train_detail::rightOrthogonalizeNoCapInPlace(t);
    }
    return t;
}

// Norm of the represented vector via orthogonal sweeps; numerically stable
// even when the train encodes a small difference of large summands.
inline double trainNorm(const TensorTrainVector& t) {
    TensorTrainVector w = t;
    w.validate();
    train_detail::rightOrthogonalizeNoCapInPlace(w);
    double s = 0.0;
    for (double v : w.cores[0].data) s += v * v;
    return std::sqrt(s);
}

inline double innerProduct(const TensorTrainVector& u, const TensorTrainVector& v) {
    u.validate();
    v.validate();
    if (u.nSites() != v.nSites()) throw ConfigError("innerProduct: site counts differ");
    Eigen::MatrixXd e = Eigen::MatrixXd::Ones(1, 1);
    for (int s = 0; s < u.nSites(); ++s) {
        const TrainCore& a = u.cores[std::size_t(s)];
        const TrainCore& b = v.cores[std::size_t(s)];
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(a.right, b.right);
        for (int p = 0; p < 2; ++p) {
            Eigen::MatrixXd sa(a.left, a.right), sb(b.left, b.right);
            for (int b1 = 0; b1 < a.left; ++b1)
                for (int b2 = 0; b2 < a.right; ++b2) sa(b1, b2) = a.at(b1, p, b2);
            for (int b1 = 0; b1 < b.left; ++b1)
                for (int b2 = 0; b2 < b.right; ++b2) sb(b1, b2) = b.at(b1, p, b2);
            next.noalias() += sa.transpose() * e * sb;
        }
        e = std::move(next);
    }
    return e(0, 0);
}

inline double trainFidelity(const TensorTrainVector& u, const TensorTrainVector& v) {
    const double nu = trainNorm(u);
    const double nv = trainNorm(v);
    if (nu == 0.0 || nv == 0.0) throw NumericalError("trainFidelity: zero-norm train");
    return std::abs(innerProduct(u, v)) / (nu * nv);
}

// Exact factorization of a dense vector (size 2^n) into a train via
// successive thin SVDs; bonds are the numerical ranks of the unfoldings.
inline TensorTrainVector trainFromDense(const std::vector<double>& v) {
    std::size_t size = v.size();
    if (size < 2 || (size & (size - 1)) != 0)
        throw ConfigError("trainFromDense: size must be a power of two, at least 2");
    int n = 0;
    while ((std::size_t{1} << n) < size) ++n;
    if (n > kTrainDenseCap) throw CapError("trainFromDense: size exceeds dense cap");

    TensorTrainVector t;
    train_detail::RowMajorMatrix rest(1, size);
    for (std::size_t i = 0; i < size; ++i) rest(0, i) = v[i];
    int leftBond = 1;
    for (int s = 0; s < n - 1; ++s) {
        const Eigen::Index cols = rest.cols() / 2;
        train_detail::RowMajorMatrix m(leftBond * 2, cols);
        for (int b = 0; b < leftBond; ++b)
            for (int a = 0; a < 2; ++a)
                m.row(b * 2 + a) = rest.block(b, a * cols, 1, cols);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        int r = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(0) > 0.0 && sv(i) > sv(0) * kSingularDropRatio) ++r;
        r = std::max(1, r);
        train_detail::RowMajorMatrix q = svd.matrixU().leftCols(r);
        t.cores.push_back(train_detail::coreFromLeftMatrix(q, leftBond));
        rest = sv.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
        leftBond = r;
    }
    t.cores.push_back(train_detail::coreFromRightMatrix(rest, 1));
    t.form = CanonicalForm::Left;
    t.orthoCenter = n - 1;
    return t;
}

struct SolveReport {
    int iterations = 0;
    double residual = 0.0;
    double relativeResidual = 0.0;
    bool converged = false;
    std::vector<double> history;
};

namespace train_detail {

struct EnvA {
    int x1 = 1, a = 1, x2 = 1;
    std::vector<double> v;
    EnvA() : v(1, 1.0) {}
    EnvA(int nx1, int na, int nx2) : x1(nx1), a(na), x2(nx2),
        v(std::size_t(nx1) * na * nx2, 0.0) {}
    double& at(int i, int k, int j) { return v[(std::size_t(i) * a + k) * x2 + j]; }
    double at(int i, int k, int j) const { return v[(std::size_t(i) * a + k) * x2 + j]; }
};

struct EnvB {
    int x = 1, c = 1;
    std::vector<double> v;
    EnvB() : v(1, 1.0) {}
    EnvB(int nx, int nc) : x(nx), c(nc), v(std::size_t(nx) * nc, 0.0) {}
    double& at(int i, int k) { return v[std::size_t(i) * c + k]; }
    double at(int i, int k) const { return v[std::size_t(i) * c + k]; }
};

inline EnvA advanceEnvALeft(const EnvA& cur, const TrainCore& x, const OpCore& o) {
    EnvA next(x.right, o.right, x.right);
    // T(a, i2, k1, j1) = sum_i1 x(i1, a, i2) * cur(i1, k1, j1)
    std::vector<double> tmp(std::size_t(2) * x.right * o.left * cur.x2, 0.0);
    auto tAt = [&](int a, int i2, int k1, int j1) -> double& {
        return tmp[((std::size_t(a) * x.right + i2) * o.left + k1) * cur.x2 + j1];
    };
    for (int i1 = 0; i1 < x.left; ++i1)
        for (int a = 0; a < 2; ++a)
            for (int i2 = 0; i2 < x.right; ++i2) {
                const double xv = x.at(i1, a, i2);
                if (xv == 0.0) continue;
                for (int k1 = 0; k1 < o.left; ++k1)
                    for (int j1 = 0; j1 < cur.x2; ++j1)
                        tAt(a, i2, k1, j1) += xv * cur.at(i1, k1, j1);
            }
    // U(i2, k2, ap, j1) = sum_{k1, a} T(a, i2, k1, j1) * o(k1, a, ap, k2)
    std::vector<double> umm(std::size_t(x.right) * o.right * 2 * cur.x2, 0.0);
    auto uAt = [&](int i2, int k2, int ap, int j1) -> double& {
        return umm[((std::size_t(i2) * o.right + k2) * 2 + ap) * cur.x2 + j1];
    };
    for (int k1 = 0; k1 < o.left; ++k1)
        for (int a = 0; a < 2; ++a)
            for (int ap = 0; ap < 2; ++ap)
                for (int k2 = 0; k2 < o.right; ++k2) {
                    const double ov = o.at(k1, a, ap, k2);
                    if (ov == 0.0) continue;
                    for (int i2 = 0; i2 < x.right; ++i2)
                        for (int j1 = 0; j1 < cur.x2; ++j1)
                            uAt(i2, k2, ap, j1) += ov * tAt(a, i2, k1, j1);
                }
    for (int j1 = 0; j1 < x.left; ++j1)
        for (int ap = 0; ap < 2; ++ap)
            for (int j2 = 0; j2 < x.right; ++j2) {
                const double xv = x.at(j1, ap, j2);
                if (xv == 0.0) continue;
                for (int i2 = 0; i2 < x.right; ++i2)
                    for (int k2 = 0; k2 < o.right; ++k2)
                        next.at(i2, k2, j2) += xv * uAt(i2, k2, ap, j1);
            }
    return next;
}

inline EnvA advanceEnvARight(const EnvA& cur, const TrainCore& x, const OpCore& o) {
    EnvA next(x.left, o.left, x.left);
    std::vector<double> tmp(std::size_t(2) * x.left * o.right * cur.x2, 0.0);
    auto tAt = [&](int a, int i1, int k2, int j2) -> double& {
        return tmp[((std::size_t(a) * x.left + i1) * o.right + k2) * cur.x2 + j2];
    };
    for (int i1 = 0; i1 < x.left; ++i1)
        for (int a = 0; a < 2; ++a)
            for (int i2 = 0; i2 < x.right; ++i2) {
                const double xv = x.at(i1, a, i2);
                if (xv == 0.0) continue;
                for (int k2 = 0; k2 < o.right; ++k2)
                    for (int j2 = 0; j2 < cur.x2; ++j2)
                        tAt(a, i1, k2, j2) += xv * cur.at(i2, k2, j2);
            }
    std::vector<double> umm(std::size_t(x.left) * o.left * 2 * cur.x2, 0.0);
    auto uAt = [&](int i1, int k1, int ap, int j2) -> double& {
        return umm[((std::size_t(i1) * o.left + k1) * 2 + ap) * cur.x2 + j2];
    };
    for (int k1 = 0; k1 < o.left; ++k1)
        for (int a = 0; a < 2; ++a)
            for (int ap = 0; ap < 2; ++ap)
                for (int k2 = 0; k2 < o.right; ++k2) {
                    const double ov = o.at(k1, a, ap, k2);
                    if (ov == 0.0) continue;
                    for (int i1 = 0; i1 < x.left; ++i1)
                        for (int j2 = 0; j2 < cur.x2; ++j2)
                            uAt(i1, k1, ap, j2) += ov * tAt(a, i1, k2, j2);
                }
    for (int j1 = 0; j1 < x.left; ++j1)
        for (int ap = 0; ap < 2; ++ap)
            for (int j2 = 0; j2 < x.right; ++j2) {
                const double xv = x.at(j1, ap, j2);
                if (xv == 0.0) continue;
                for (int i1 = 0; i1 < x.left; ++i1)
                    for (int k1 = 0; k1 < o.left; ++k1)
                        next.at(i1, k1, j1) += xv * uAt(i1, k1, ap, j2);
            }
    return next;
}

inline EnvB advanceEnvBLeft(const EnvB& cur, const TrainCore& x, const TrainCore& b) {
    EnvB next(x.right, b.right);
    for (int i1 = 0; i1 < x.left; ++i1)
        for (int a = 0; a < 2; ++a)
            for (int i2 = 0; i2 < x.right; ++i2) {
                const double xv = x.at(i1, a, i2);
                if (xv == 0.0) continue;
                for (int c1 = 0; c1 < b.left; ++c1) {
                    const double ev = cur.at(i1, c1);
                    if (ev == 0.0) continue;
                    for (int c2 = 0; c2 < b.right; ++c2)
                        next.at(i2, c2) += xv * ev * b.at(c1, a, c2);
                }
            }
    return next;
}

inline EnvB advanceEnvBRight(const EnvB& cur, const TrainCore& x, const TrainCore& b) {
    EnvB next(x.left, b.left);
    for (int i1 = 0; i1 < x.left; ++i1)
        for (int a = 0; a < 2; ++a)
            for (int i2 = 0; i2 < x.right; ++i2) {
                const double xv = x.at(i1, a, i2);
                if (xv == 0.0) continue;
                for (int c2 = 0; c2 < b.right; ++c2) {
                    const double ev = cur.at(i2, c2);
                    if (ev == 0.0) continue;
                    for (int c1 = 0; c1 < b.left; ++c1)
                        next.at(i1, c1) += xv * b.at(c1, a, c2) * ev;
                }
            }
    return next;
}

inline Eigen::VectorXd solveLocalSystem(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() == Eigen::Success) {
        Eigen::VectorXd x = ldlt.solve(b);
        if (x.allFinite()) return x;
    }
    return Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(a).solve(b);
}

} // namespace train_detail

// Solves aOp * x = b by alternating least squares in two phases. The first
// phase optimizes adjacent core pairs and splits them with a truncated SVD,
// growing ranks adaptively up to rX. The second phase keeps the discovered
// ranks fixed and re-optimizes one core at a time, converging to a
// stationary point of the projected system on the fixed-rank manifold;
// for rank-limited solves this refinement is what settles the iterate.
// Sweep residuals use the cancellation-stable orthogonalization norm, and
// each phase stops early once the residual reaches tol or stalls.
inline TensorTrainVector malsSolve(const TensorTrainOperator& aOp, const TensorTrainVector& b,
                                   int rX, int sweeps = 10, double tol = 1e-6,
                                   SolveReport* report = nullptr) {
    aOp.validate();
    b.validate();
    if (aOp.nSites() != b.nSites()) throw ConfigError("malsSolve: site counts differ");
    if (rX < 1) throw ConfigError("malsSolve: bond cap must be positive");
    if (sweeps < 1) throw ConfigError("malsSolve: sweep count must be positive");
    const int n = b.nSites();

    SolveReport localReport;
    SolveReport& rep = report ? *report : localReport;
    rep = SolveReport{};

    const double bNorm = trainNorm(b);
    if (bNorm == 0.0) {
        rep.converged = true;
        TensorTrainVector zero = constantTrain(n, 0.0);
        return zero;
    }

    if (n == 1) {
        Eigen::Matrix2d a2;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) a2(i, j) = aOp.cores[0].at(0, i, j, 0);
        Eigen::Vector2d b2(b.cores[0].at(0, 0, 0), b.cores[0].at(0, 1, 0));
        Eigen::Vector2d x2 = Eigen::ColPivHouseholderQR<Eigen::Matrix2d>(a2).solve(b2);
        TensorTrainVector x = constantTrain(1, 0.0);
        x.cores[0].at(0, 0, 0) = x2(0);
        x.cores[0].at(0, 1, 0) = x2(1);
        rep.residual = (a2 * x2 - b2).norm();
        rep.relativeResidual = rep.residual / bNorm;
        rep.converged = rep.relativeResidual <= tol;
        rep.iterations = 1;
        rep.history.push_back(rep.relativeResidual);
        return x;
    }

    // Compressing b once keeps every frame contraction and residual cheap;
    // the truncation threshold is relative, so this is exact in practice.
    const TensorTrainVector bc = rightCanonicalize(b, std::numeric_limits<int>::max());

    TensorTrainVector x = rightCanonicalize(bc, rX);
    x.form = CanonicalForm::None;
    x.orthoCenter = -1;

    std::vector<train_detail::EnvA> envAL(std::size_t(n) + 1), envAR(std::size_t(n) + 1);
    std::vector<train_detail::EnvB> envBL(std::size_t(n) + 1), envBR(std::size_t(n) + 1);
    for (int s = n - 1; s >= 2; --s) {
        envAR[std::size_t(s)] = train_detail::advanceEnvARight(
            envAR[std::size_t(s) + 1], x.cores[std::size_t(s)], aOp.cores[std::size_t(s)]);
        envBR[std::size_t(s)] = train_detail::advanceEnvBRight(
            envBR[std::size_t(s) + 1], x.cores[std::size_t(s)], bc.cores[std::size_t(s)]);
    }

    auto solveBlock = [&](int s, bool moveRight) {
        const TrainCore& xs = x.cores[std::size_t(s)];
        const TrainCore& xt = x.cores[std::size_t(s) + 1];
        const OpCore& os = aOp.cores[std::size_t(s)];
        const OpCore& ot = aOp.cores[std::size_t(s) + 1];
        const TrainCore& bs = bc.cores[std::size_t(s)];
        const TrainCore& bt = bc.cores[std::size_t(s) + 1];
        const train_detail::EnvA& la = envAL[std::size_t(s)];
        const train_detail::EnvA& ra = envAR[std::size_t(s) + 2];
        const train_detail::EnvB& lb = envBL[std::size_t(s)];
        const train_detail::EnvB& rb = envBR[std::size_t(s) + 2];
        const int xl = xs.left;
        const int xr = xt.right;
        const int d = xl * 4 * xr;

        // m1(bl, i, bl', i', am) = sum_al la(bl, al, bl') * os(al, i, i', am)
        std::vector<double> m1(std::size_t(xl) * 2 * xl * 2 * os.right, 0.0);
        auto m1At = [&](int bl, int i, int blp, int ip, int am) -> double& {
            return m1[(((std::size_t(bl) * 2 + i) * xl + blp) * 2 + ip) * os.right + am];
        };
        for (int al = 0; al < os.left; ++al)
            for (int i = 0; i < 2; ++i)
                for (int ip = 0; ip < 2; ++ip)
                    for (int am = 0; am < os.right; ++am) {
                        const double ov = os.at(al, i, ip, am);
                        if (ov == 0.0) continue;
                        for (int bl = 0; bl < xl; ++bl)
                            for (int blp = 0; blp < xl; ++blp)
                                m1At(bl, i, blp, ip, am) += la.at(bl, al, blp) * ov;
                    }
        // m2(am, j, j', br, br') = sum_ar ot(am, j, j', ar) * ra(br, ar, br')
        std::vector<double> m2(std::size_t(ot.left) * 2 * 2 * xr * xr, 0.0);
        auto m2At = [&](int am, int j, int jp, int br, int brp) -> double& {
            return m2[(((std::size_t(am) * 2 + j) * 2 + jp) * xr + br) * xr + brp];
        };
        for (int am = 0; am < ot.left; ++am)
            for (int j = 0; j < 2; ++j)
                for (int jp = 0; jp < 2; ++jp)
                    for (int ar = 0; ar < ot.right; ++ar) {
                        const double ov = ot.at(am, j, jp, ar);
                        if (ov == 0.0) continue;
                        for (int br = 0; br < xr; ++br)
                            for (int brp = 0; brp < xr; ++brp)
                                m2At(am, j, jp, br, brp) += ov * ra.at(br, ar, brp);
                    }
        Eigen::MatrixXd localA = Eigen::MatrixXd::Zero(d, d);
        for (int bl = 0; bl < xl; ++bl)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int br = 0; br < xr; ++br) {
                        const int row = ((bl * 2 + i) * 2 + j) * xr + br;
                        for (int blp = 0; blp < xl; ++blp)
                            for (int ip = 0; ip < 2; ++ip)
                                for (int jp = 0; jp < 2; ++jp)
                                    for (int brp = 0; brp < xr; ++brp) {
                                        double acc = 0.0;
                                        for (int am = 0; am < os.right; ++am)
                                            acc += m1At(bl, i, blp, ip, am) * m2At(am, j, jp, br, brp);
                                        localA(row, ((blp * 2 + ip) * 2 + jp) * xr + brp) += acc;
                                    }
                    }

        // local rhs through the b environments
        std::vector<double> t1(std::size_t(xl) * 2 * bs.right, 0.0);
        auto t1At = [&](int bl, int i, int cm) -> double& {
            return t1[(std::size_t(bl) * 2 + i) * bs.right + cm];
        };
        for (int cl = 0; cl < bs.left; ++cl)
            for (int i = 0; i < 2; ++i)
                for (int cm = 0; cm < bs.right; ++cm) {
                    const double bv = bs.at(cl, i, cm);
                    if (bv == 0.0) continue;
                    for (int bl = 0; bl < xl; ++bl)
                        t1At(bl, i, cm) += lb.at(bl, cl) * bv;
                }
        Eigen::VectorXd localB = Eigen::VectorXd::Zero(d);
        for (int cm = 0; cm < bt.left; ++cm)
            for (int j = 0; j < 2; ++j)
                for (int cr = 0; cr < bt.right; ++cr) {
                    const double bv = bt.at(cm, j, cr);
                    if (bv == 0.0) continue;
                    for (int br = 0; br < xr; ++br) {
                        const double rv = rb.at(br, cr);
                        if (rv == 0.0) continue;
                        for (int bl = 0; bl < xl; ++bl)
                            for (int i = 0; i < 2; ++i)
                                localB(((bl * 2 + i) * 2 + j) * xr + br) += t1At(bl, i, cm) * bv * rv;
                    }
                }

        const Eigen::VectorXd sol = train_detail::solveLocalSystem(localA, localB);

        train_detail::RowMajorMatrix block(xl * 2, 2 * xr);
        for (int bl = 0; bl < xl; ++bl)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int br = 0; br < xr; ++br)
                        block(bl * 2 + i, j * xr + br) = sol(((bl * 2 + i) * 2 + j) * xr + br);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(block, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& sv = svd.singularValues();
        int r = 0;
        for (Eigen::Index i = 0; i < sv.size(); ++i)
            if (sv(0) > 0.0 && sv(i) > sv(0) * kSingularDropRatio) ++r;
        r = std::max(1, std::min(r, rX));

        if (moveRight) {
            train_detail::RowMajorMatrix u = svd.matrixU().leftCols(r);
            train_detail::RowMajorMatrix sVt =
                sv.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
            x.cores[std::size_t(s)] = train_detail::coreFromLeftMatrix(u, xl);
            x.cores[std::size_t(s) + 1] = train_detail::coreFromRightMatrix(sVt, xr);
            envAL[std::size_t(s) + 1] = train_detail::advanceEnvALeft(
                envAL[std::size_t(s)], x.cores[std::size_t(s)], os);
            envBL[std::size_t(s) + 1] = train_detail::advanceEnvBLeft(
                envBL[std::size_t(s)], x.cores[std::size_t(s)], bs);
        } else {
            train_detail::RowMajorMatrix uS = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal();
            train_detail::RowMajorMatrix vT = svd.matrixV().leftCols(r).transpose();
            x.cores[std::size_t(s)] = train_detail::coreFromLeftMatrix(uS, xl);
            x.cores[std::size_t(s) + 1] = train_detail::coreFromRightMatrix(vT, xr);
            envAR[std::size_t(s) + 1] = train_detail::advanceEnvARight(
                envAR[std::size_t(s) + 2], x.cores[std::size_t(s) + 1], ot);
            envBR[std::size_t(s) + 1] = train_detail::advanceEnvBRight(
                envBR[std::size_t(s) + 2], x.cores[std::size_t(s) + 1], bt);
        }
    };

    // One-site update: project the system onto the frame around a single
    // core and solve; ranks stay fixed.
    auto solveSite = [&](int s) {
        const TrainCore& xs = x.cores[std::size_t(s)];
        const OpCore& os = aOp.cores[std::size_t(s)];
        const TrainCore& bs = bc.cores[std::size_t(s)];
        const train_detail::EnvA& la = envAL[std::size_t(s)];
        const train_detail::EnvA& ra = envAR[std::size_t(s) + 1];
        const train_detail::EnvB& lb = envBL[std::size_t(s)];
        const train_detail::EnvB& rb = envBR[std::size_t(s) + 1];
        const int xl = xs.left;
        const int xr = xs.right;
        const int d = xl * 2 * xr;

        // m1(bl, i, bl', i', am) = sum_al la(bl, al, bl') * os(al, i, i', am)
        std::vector<double> m1(std::size_t(xl) * 2 * xl * 2 * os.right, 0.0);
        auto m1At = [&](int bl, int i, int blp, int ip, int am) -> double& {
            return m1[(((std::size_t(bl) * 2 + i) * xl + blp) * 2 + ip) * os.right + am];
        };
        for (int al = 0; al < os.left; ++al)
            for (int i = 0; i < 2; ++i)
                for (int ip = 0; ip < 2; ++ip)
                    for (int am = 0; am < os.right; ++am) {
                        const double ov = os.at(al, i, ip, am);
                        if (ov == 0.0) continue;
                        for (int bl = 0; bl < xl; ++bl)
                            for (int blp = 0; blp < xl; ++blp)
                                m1At(bl, i, blp, ip, am) += la.at(bl, al, blp) * ov;
                    }
        Eigen::MatrixXd localA = Eigen::MatrixXd::Zero(d, d);
        for (int bl = 0; bl < xl; ++bl)
            for (int i = 0; i < 2; ++i)
                for (int br = 0; br < xr; ++br) {
                    const int row = (bl * 2 + i) * xr + br;
                    for (int blp = 0; blp < xl; ++blp)
                        for (int ip = 0; ip < 2; ++ip)
                            for (int brp = 0; brp < xr; ++brp) {
                                double acc = 0.0;
                                for (int am = 0; am < os.right; ++am)
                                    acc += m1At(bl, i, blp, ip, am) * ra.at(br, am, brp);
                                localA(row, (blp * 2 + ip) * xr + brp) += acc;
                            }
                }

        Eigen::VectorXd localB = Eigen::VectorXd::Zero(d);
        for (int cl = 0; cl < bs.left; ++cl)
            for (int i = 0; i < 2; ++i)
                for (int cm = 0; cm < bs.right; ++cm) {
                    const double bv = bs.at(cl, i, cm);
                    if (bv == 0.0) continue;
                    for (int bl = 0; bl < xl; ++bl) {
                        const double lv = lb.at(bl, cl);
                        if (lv == 0.0) continue;
                        for (int br = 0; br < xr; ++br)
                            localB((bl * 2 + i) * xr + br) += lv * bv * rb.at(br, cm);
                    }
                }

        const Eigen::VectorXd sol = train_detail::solveLocalSystem(localA, localB);
        TrainCore& core = x.cores[std::size_t(s)];
        for (int bl = 0; bl < xl; ++bl)
            for (int i = 0; i < 2; ++i)
                for (int br = 0; br < xr; ++br)
                    core.at(bl, i, br) = sol((bl * 2 + i) * xr + br);
    };

    // Move the orthogonality center by one site and refresh the adjacent
    // environments; used between one-site updates.
    auto shiftCenterRight = [&](int s) {
        train_detail::RowMajorMatrix m = train_detail::coreAsLeftMatrix(x.cores[std::size_t(s)]);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
        const Eigen::Index k = std::min(m.rows(), m.cols());
        train_detail::RowMajorMatrix q =
            Eigen::MatrixXd(qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), k));
        const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        x.cores[std::size_t(s)] = train_detail::coreFromLeftMatrix(q, x.cores[std::size_t(s)].left);
        train_detail::RowMajorMatrix nextM =
            r * train_detail::coreAsRightMatrix(x.cores[std::size_t(s) + 1]);
        x.cores[std::size_t(s) + 1] =
            train_detail::coreFromRightMatrix(nextM, x.cores[std::size_t(s) + 1].right);
        envAL[std::size_t(s) + 1] = train_detail::advanceEnvALeft(
            envAL[std::size_t(s)], x.cores[std::size_t(s)], aOp.cores[std::size_t(s)]);
        envBL[std::size_t(s) + 1] = train_detail::advanceEnvBLeft(
            envBL[std::size_t(s)], x.cores[std::size_t(s)], bc.cores[std::size_t(s)]);
    };
    auto shiftCenterLeft = [&](int s) {
        train_detail::RowMajorMatrix m = train_detail::coreAsRightMatrix(x.cores[std::size_t(s)]);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(m.transpose());
        const Eigen::Index k = std::min(m.rows(), m.cols());
        train_detail::RowMajorMatrix q = Eigen::MatrixXd(
            (qr.householderQ() * Eigen::MatrixXd::Identity(m.cols(), k)).transpose());
        const Eigen::MatrixXd rT = Eigen::MatrixXd(
            qr.matrixQR().topRows(k).triangularView<Eigen::Upper>()).transpose();
        x.cores[std::size_t(s)] = train_detail::coreFromRightMatrix(q, x.cores[std::size_t(s)].right);
        train_detail::RowMajorMatrix prevM =
            train_detail::coreAsLeftMatrix(x.cores[std::size_t(s) - 1]) * rT;
        x.cores[std::size_t(s) - 1] =
            train_detail::coreFromLeftMatrix(prevM, x.cores[std::size_t(s) - 1].left);
        envAR[std::size_t(s)] = train_detail::advanceEnvARight(
            envAR[std::size_t(s) + 1], x.cores[std::size_t(s)], aOp.cores[std::size_t(s)]);
        envBR[std::size_t(s)] = train_detail::advanceEnvBRight(
            envBR[std::size_t(s) + 1], x.cores[std::size_t(s)], bc.cores[std::size_t(s)]);
    };

    auto sweepResidual = [&]() {
        const TensorTrainVector ax = applyToTrain(aOp, x);
        return trainNorm(directSum(ax, scaleTrain(bc, -1.0))) / bNorm;
    };

    const double stallRatio = 1e-7;
    double rel = std::numeric_limits<double>::infinity();
    double prevRel = rel;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        for (int s = 0; s <= n - 2; ++s) solveBlock(s, true);
        for (int s = n - 2; s >= 0; --s) solveBlock(s, false);
        ++rep.iterations;
        rel = sweepResidual();
        rep.history.push_back(rel);
        if (rel <= tol) break;
        if (sweep > 0 && std::abs(rel - prevRel) <= stallRatio * std::max(rel, prevRel)) break;
        prevRel = rel;
    }
    if (rel > tol) {
        prevRel = rel;
        for (int sweep = 0; sweep < sweeps; ++sweep) {
            for (int s = 0; s <= n - 1; ++s) {
                solveSite(s);
                if (s < n - 1) shiftCenterRight(s);
            }
            for (int s = n - 1; s >= 0; --s) {
                solveSite(s);
                if (s > 0) shiftCenterLeft(s);
            }
            ++rep.iterations;
            rel = sweepResidual();
            rep.history.push_back(rel);
            if (rel <= tol) break;
            if (std::abs(rel - prevRel) <= stallRatio * std::max(rel, prevRel)) break;
            prevRel = rel;
        }
    }
    rep.relativeResidual = rel;
    rep.residual = rel * bNorm;
    rep.converged = rel <= tol;
    // Both phases end on a right-to-left pass, so all cores right of the
    // first are right-orthonormal and the center sits at site 0.
    x.form = CanonicalForm::Right;
    x.orthoCenter = 0;
    return x;
}

// Newton iteration for the elementwise square root of a positive train:
// solves diag(psi) psi = target by repeated linearized updates
// 2 diag(psi) delta = target - diag(psi) psi, each solved with malsSolve.
// Starts from the all-ones rank-one train and keeps the best iterate.
inline TensorTrainVector newtonSqrt(const TensorTrainVector& target, int rPsi, double tol,
                                    SolveReport* report = nullptr) {
    target.validate();
    if (rPsi < 2) throw ConfigError("newtonSqrt: bond cap must be at least 2");
    if (tol <= 0.0) throw ConfigError("newtonSqrt: tolerance must be positive");
    const int n = target.nSites();

    SolveReport localReport;
    SolveReport& rep = report ? *report : localReport;
    rep = SolveReport{};

    // Analytic builders often carry overcomplete bonds; compressing the
    // target up front shrinks every residual and right-hand side below.
    const TensorTrainVector tgt = rightCanonicalize(target, std::numeric_limits<int>::max());

    auto residualOf = [&](const TensorTrainVector& psi) {
        const TensorTrainVector psiSq = applyToTrain(diagonalLift(psi), psi);
        return trainNorm(directSum(psiSq, scaleTrain(tgt, -1.0)));
    };

    TensorTrainVector psi = constantTrain(n, 1.0);
    double res = residualOf(psi);
    rep.history.push_back(res);

    TensorTrainVector best = psi;
    double bestRes = res;
    double prevRes = res;
    int growthStreak = 0;
    int stallStreak = 0;
    const int maxIterations = 60;

    while (bestRes > tol && rep.iterations < maxIterations) {
        TensorTrainOperator jac = diagonalLift(psi);
        for (double& v : jac.cores[0].data) v *= 2.0;
        const TensorTrainVector rhs =
            directSum(tgt, scaleTrain(applyToTrain(diagonalLift(psi), psi), -1.0));
        const TensorTrainVector delta = malsSolve(jac, rhs, rPsi, 10, 1e-6);
        psi = rightCanonicalize(directSum(psi, delta), rPsi);
        ++rep.iterations;

        res = residualOf(psi);
        rep.history.push_back(res);
        if (res < bestRes) {
            bestRes = res;
            best = psi;
        }
        if (res > prevRes * (1.0 + 1e-3)) {
            ++growthStreak;
            if (growthStreak >= 3)
                throw NumericalError("newtonSqrt: diverged, residual " + std::to_string(res) +
                                     " after " + std::to_string(rep.iterations) + " iterations");
        } else {
            growthStreak = 0;
        }
        if (std::abs(res - prevRes) <= 1e-3 * std::max(res, prevRes)) {
            ++stallStreak;
            if (stallStreak >= 3) break;
        } else {
            stallStreak = 0;
        }
        prevRes = res;
    }
    rep.residual = bestRes;
    const double targetNorm = trainNorm(tgt);
    rep.relativeResidual = targetNorm > 0.0 ? bestRes / targetNorm : bestRes;
    rep.converged = bestRes <= tol;
    return best;
}

// Solves diag(psi) phi = sqrt(2^nFrac / pi) * [1 ... 1] with bond cap rPhi
// and returns phi normalized to unit 2-norm. The unnormalized solution is
// 2^nFrac times the square-rooted Cauchy weights, a global factor that the
// normalization absorbs.
inline TensorTrainVector solveCoefficientTrain(const TensorTrainVector& psi, int nFrac, int rPhi,
                                               SolveReport* report = nullptr) {
    psi.validate();
    if (nFrac < 0) throw ConfigError("solveCoefficientTrain: nFrac must be nonnegative");
    if (rPhi < 1) throw ConfigError("solveCoefficientTrain: bond cap must be positive");
    const double constant = std::sqrt(std::ldexp(1.0, nFrac) / M_PI);
    const TensorTrainVector rhs = constantTrain(psi.nSites(), constant);
    TensorTrainVector phi = malsSolve(diagonalLift(psi), rhs, rPhi, 10, 1e-6, report);
    const double norm = trainNorm(phi);
    if (norm == 0.0) throw NumericalError("solveCoefficientTrain: zero solution");
    return scaleTrain(std::move(phi), 1.0 / norm);
}

// Normalized dense vector of square-rooted Cauchy quadrature weights
// sqrt(c_a), c_a = 2^-nFrac / (pi (1 + k_a^2)); reference for fidelities.
inline std::vector<double> denseCoefficientTarget(int nAnc, int nFrac) {
    if (nAnc < 1) throw ConfigError("denseCoefficientTarget: nAnc must be positive");
    if (nAnc > kTrainDenseCap) throw CapError("denseCoefficientTarget: nAnc exceeds dense cap");
    if (nFrac < 0) throw ConfigError("denseCoefficientTarget: nFrac must be nonnegative");
    const std::uint64_t size = std::uint64_t{1} << nAnc;
    std::vector<double> v(size);
    double norm2 = 0.0;
    for (std::uint64_t a = 0; a < size; ++a) {
        const double k = integrationPoint(a, nAnc, nFrac);
        v[a] = std::sqrt(std::ldexp(1.0, -nFrac) / (M_PI * (1.0 + k * k)));
        norm2 += v[a] * v[a];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

struct CoefficientOracleResult {
    TensorTrainVector phi;
    SolveReport newtonReport;
    SolveReport coefReport;
    double fidelity = std::numeric_limits<double>::quiet_NaN();
};

// Full classical pipeline for the coefficient state: build the 1 + k^2
// train, take its elementwise square root by Newton iteration, solve for
// the normalized square-rooted weights, and (at dense-checkable sizes)
// score the fidelity against the exact dense target.
inline CoefficientOracleResult solveCoefficientOracle(int nAnc, int nFrac, int rPsi, int rPhi,
                                                      double tol) {
    CoefficientOracleResult result;
    const TensorTrainVector target = buildOnePlusKSquared(nAnc, nFrac);
    const TensorTrainVector psi = newtonSqrt(target, rPsi, tol, &result.newtonReport);
    result.phi = solveCoefficientTrain(psi, nFrac, rPhi, &result.coefReport);
    if (nAnc <= kTrainDenseCap) {
        const std::vector<double> exact = denseCoefficientTarget(nAnc, nFrac);
        const std::vector<double> approx = contractToVector(result.phi);
        double dot = 0.0;
        for (std::size_t i = 0; i < exact.size(); ++i) dot += exact[i] * approx[i];
        result.fidelity = std::abs(dot);
    }
    return result;
}

// Text serialization: header with site count and bond profile, then each
// core's entries in row-major (left, physical, right) order.
inline void writeTrain(std::ostream& out, const TensorTrainVector& t) {
    t.validate();
    out.precision(17);
    out << "lchs-train 1\n";
    out << "sites " << t.nSites() << "\n";
    out << "bonds";
    for (int b : t.bondProfile()) out << ' ' << b;
    out << "\n";
    for (int s = 0; s < t.nSites(); ++s) {
        const TrainCore& c = t.cores[std::size_t(s)];
        out << "core " << s << ' ' << c.left << ' ' << c.right << "\n";
        for (std::size_t i = 0; i < c.data.size(); ++i)
            out << c.data[i] << ((i + 1) % 8 == 0 || i + 1 == c.data.size() ? '\n' : ' ');
    }
    out << "end\n";
}

inline TensorTrainVector readTrain(std::istream& in) {
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "lchs-train" || version != 1)
        throw ConfigError("readTrain: bad header");
    int nSites = 0;
    if (!(in >> word >> nSites) || word != "sites" || nSites < 1)
        throw ConfigError("readTrain: bad site count");
    if (!(in >> word) || word != "bonds") throw ConfigError("readTrain: missing bond profile");
    std::vector<int> bonds(std::size_t(nSites) + 1);
    for (int& b : bonds)
        if (!(in >> b) || b < 1) throw ConfigError("readTrain: bad bond profile");
    if (bonds.front() != 1 || bonds.back() != 1)
        throw ConfigError("readTrain: boundary bonds must be 1");
    TensorTrainVector t;
    t.cores.reserve(std::size_t(nSites));
    for (int s = 0; s < nSites; ++s) {
        int idx = -1, left = 0, right = 0;
        if (!(in >> word >> idx >> left >> right) || word != "core" || idx != s ||
            left != bonds[std::size_t(s)] || right != bonds[std::size_t(s) + 1])
            throw ConfigError("readTrain: bad core header");
        TrainCore c(left, right);
        for (double& v : c.data)
            if (!(in >> v)) throw ConfigError("readTrain: truncated core data");
        t.cores.push_back(std::move(c));
    }
    if (!(in >> word) || word != "end") throw ConfigError("readTrain: missing end marker");
    t.validate();
    return t;
}

} // namespace lchs
