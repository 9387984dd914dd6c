#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "lchs/tensor_train.hpp"

using namespace lchs;

namespace {

// Bit-loop evaluation of the signed fractional integration point, kept
// independent of the library's two's-complement shortcut.
double pointOracle(std::uint64_t a, int nAnc, int nFrac) {
    double sum = 0.0;
    for (int m = 0; m < nAnc - 1; ++m)
        if (a & (std::uint64_t{1} << m)) sum += std::ldexp(1.0, m);
    if (a & (std::uint64_t{1} << (nAnc - 1))) sum -= std::ldexp(1.0, nAnc - 1);
    return sum * std::ldexp(1.0, -nFrac);
}

TensorTrainVector randomTrain(std::mt19937_64& gen, const std::vector<int>& bonds) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    TensorTrainVector t;
    for (std::size_t s = 0; s + 1 < bonds.size(); ++s) {
        TrainCore c(bonds[s], bonds[s + 1]);
        for (double& v : c.data) v = dist(gen);
        t.cores.push_back(std::move(c));
    }
    return t;
}

std::vector<double> randomDense(std::mt19937_64& gen, int nSites, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(std::size_t{1} << nSites);
    for (double& x : v) x = dist(gen);
    return v;
}

double denseNorm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double fidelityAgainst(const TensorTrainVector& t, const std::vector<double>& reference) {
    const std::vector<double> v = contractToVector(t);
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * reference[i];
    return std::abs(dot) / (denseNorm(v) * denseNorm(reference));
}

} // namespace

TEST_CASE("integration points follow the signed fractional encoding", "[mps]") {
    CHECK(integrationPoint(0, 3, 1) == 0.0);
    CHECK(integrationPoint(4, 3, 1) == -2.0);
    CHECK(integrationPoint(3, 3, 1) == 1.5);

    for (int nAnc = 1; nAnc <= 10; ++nAnc)
        for (int nFrac : {0, 1, nAnc - 1})
            for (std::uint64_t a = 0; a < (std::uint64_t{1} << nAnc); ++a)
                REQUIRE(integrationPoint(a, nAnc, std::max(0, nFrac)) ==
                        pointOracle(a, nAnc, std::max(0, nFrac)));

    SECTION("grid range and spacing") {
        const int nAnc = 5, nFrac = 2;
        std::vector<double> pts;
        for (std::uint64_t a = 0; a < 32; ++a) pts.push_back(integrationPoint(a, nAnc, nFrac));
        std::sort(pts.begin(), pts.end());
        CHECK(pts.front() == -std::ldexp(1.0, nAnc - nFrac - 1));
        CHECK(pts.back() == std::ldexp(1.0, nAnc - nFrac - 1) - std::ldexp(1.0, -nFrac));
        for (std::size_t i = 1; i < pts.size(); ++i)
            CHECK(pts[i] - pts[i - 1] == std::ldexp(1.0, -nFrac));
    }

    SECTION("argument validation") {
        CHECK_THROWS_AS(integrationPoint(8, 3, 1), ConfigError);
        CHECK_THROWS_AS(integrationPoint(0, 0, 1), ConfigError);
        CHECK_THROWS_AS(integrationPoint(0, 3, -1), ConfigError);
    }
}

TEST_CASE("analytic k train contracts to the integration grid", "[mps]") {
    const std::vector<double> v = contractToVector(buildKVector(3, 1));
    const std::vector<double> expected{0.0, 0.5, 1.0, 1.5, -2.0, -1.5, -1.0, -0.5};
    REQUIRE(v.size() == expected.size());
    for (std::size_t i = 0; i < v.size(); ++i) REQUIRE(v[i] == expected[i]);

    for (int nAnc = 2; nAnc <= 12; ++nAnc) {
        for (int nFrac : {0, 1, nAnc - 1}) {
            const TensorTrainVector t = buildKVector(nAnc, nFrac);
            REQUIRE(t.maxBond() <= nAnc);
            const std::vector<double> w = contractToVector(t);
            for (std::uint64_t a = 0; a < w.size(); ++a)
                REQUIRE(std::abs(w[a] - pointOracle(a, nAnc, nFrac)) <= 1e-12);
        }
    }

    CHECK_THROWS_AS(buildKVector(1, 1), ConfigError);
    CHECK_THROWS_AS(buildKVector(4, -1), ConfigError);
}

TEST_CASE("analytic one plus k squared train is exact", "[mps]") {
    const TensorTrainVector t4 = buildOnePlusKSquared(4, 1);
    const std::vector<double> v4 = contractToVector(t4);
    for (std::uint64_t a = 0; a < v4.size(); ++a) {
        const double k = integrationPoint(a, 4, 1);
        REQUIRE(std::abs(v4[a] - (1.0 + k * k)) <= 1e-12);
    }
    CHECK(v4[0] == 1.0);

    for (int nAnc = 2; nAnc <= 12; ++nAnc) {
        for (int nFrac : {1, nAnc - 1}) {
            const TensorTrainVector t = buildOnePlusKSquared(nAnc, nFrac);
            REQUIRE(t.maxBond() <= nAnc * nAnc + 1);
            const std::vector<double> w = contractToVector(t);
            for (std::uint64_t a = 0; a < w.size(); ++a) {
                const double k = pointOracle(a, nAnc, nFrac);
                REQUIRE(std::abs(w[a] - (1.0 + k * k)) <= 1e-12);
            }
        }
    }
}

TEST_CASE("contraction, factorization, and size caps", "[mps]") {
    SECTION("single site train") {
        TensorTrainVector t = constantTrain(1, 1.0);
        t.cores[0].at(0, 0, 0) = 0.25;
        t.cores[0].at(0, 1, 0) = -3.0;
        const std::vector<double> v = contractToVector(t);
        REQUIRE(v == std::vector<double>{0.25, -3.0});
    }

    SECTION("factorization round trip") {
        std::mt19937_64 gen(411);
        for (int n : {1, 3, 6}) {
            const std::vector<double> v = randomDense(gen, n, -2.0, 2.0);
            const TensorTrainVector t = trainFromDense(v);
            const std::vector<double> w = contractToVector(t);
            REQUIRE(w.size() == v.size());
            for (std::size_t i = 0; i < v.size(); ++i)
                REQUIRE(std::abs(w[i] - v[i]) <= 1e-12 * denseNorm(v));
        }
    }

    SECTION("dense caps") {
        CHECK_THROWS_AS(contractToVector(constantTrain(17, 1.0)), CapError);
        CHECK_THROWS_AS(trainFromDense(std::vector<double>(std::size_t{1} << 17, 1.0)), CapError);
        CHECK_THROWS_AS(trainFromDense(std::vector<double>{1.0, 2.0, 3.0}), ConfigError);
    }
}

TEST_CASE("right canonicalization preserves the vector and orthogonality", "[mps]") {
    std::mt19937_64 gen(802);

    SECTION("no cap preserves the vector exactly") {
        const TensorTrainVector t = randomTrain(gen, {1, 3, 5, 4, 1});
        const std::vector<double> before = contractToVector(t);
        const TensorTrainVector c = rightCanonicalize(t);
        const std::vector<double> after = contractToVector(c);
        for (std::size_t i = 0; i < before.size(); ++i)
            REQUIRE(std::abs(after[i] - before[i]) <= 1e-12 * denseNorm(before));
        for (int s = 1; s < c.nSites(); ++s) {
            const TrainCore& core = c.cores[std::size_t(s)];
            for (int b1 = 0; b1 < core.left; ++b1)
                for (int b2 = 0; b2 < core.left; ++b2) {
                    double dot = 0.0;
                    for (int a = 0; a < 2; ++a)
                        for (int r = 0; r < core.right; ++r)
                            dot += core.at(b1, a, r) * core.at(b2, a, r);
                    REQUIRE(std::abs(dot - (b1 == b2 ? 1.0 : 0.0)) <= 1e-12);
                }
        }
        CHECK(c.form == CanonicalForm::Right);

        const TensorTrainVector c2 = rightCanonicalize(c);
        const std::vector<double> again = contractToVector(c2);
        for (std::size_t i = 0; i < before.size(); ++i)
            REQUIRE(std::abs(again[i] - before[i]) <= 1e-12 * denseNorm(before));
    }

    SECTION("capped truncation discards the smallest Schmidt weights") {
        const TensorTrainVector t = randomTrain(gen, {1, 2, 4, 2, 1});
        const std::vector<double> full = contractToVector(t);
        const TensorTrainVector cut = rightCanonicalize(t, 2);
        REQUIRE(cut.maxBond() <= 2);
        const std::vector<double> reduced = contractToVector(cut);

        double err2 = 0.0;
        for (std::size_t i = 0; i < full.size(); ++i)
            err2 += (full[i] - reduced[i]) * (full[i] - reduced[i]);

        Eigen::MatrixXd unfolding(4, 4);
        for (std::uint64_t i = 0; i < 16; ++i)
            unfolding(Eigen::Index(i >> 2), Eigen::Index(i & 3)) = full[i];
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(unfolding);
        const Eigen::VectorXd sv = svd.singularValues();
        const double expected = sv(2) * sv(2) + sv(3) * sv(3);
        REQUIRE(std::abs(err2 - expected) <= 1e-10 * std::max(1.0, expected));
    }
}

TEST_CASE("train arithmetic matches dense oracles", "[mps]") {
    std::mt19937_64 gen(555);
    const TensorTrainVector u = randomTrain(gen, {1, 2, 3, 2, 1});
    const TensorTrainVector v = randomTrain(gen, {1, 3, 2, 4, 1});
    const std::vector<double> du = contractToVector(u);
    const std::vector<double> dv = contractToVector(v);

    SECTION("direct sum adds the represented vectors") {
        const std::vector<double> sum = contractToVector(directSum(u, v));
        for (std::size_t i = 0; i < sum.size(); ++i)
            REQUIRE(std::abs(sum[i] - (du[i] + dv[i])) <= 1e-13);
    }

    SECTION("scaling multiplies the represented vector") {
        const std::vector<double> scaled = contractToVector(scaleTrain(u, -2.5));
        for (std::size_t i = 0; i < scaled.size(); ++i)
            REQUIRE(std::abs(scaled[i] - (-2.5 * du[i])) <= 1e-13);
    }

    SECTION("inner product and norm") {
        double dot = 0.0;
        for (std::size_t i = 0; i < du.size(); ++i) dot += du[i] * dv[i];
        REQUIRE(std::abs(innerProduct(u, v) - dot) <= 1e-12 * (1.0 + std::abs(dot)));
        REQUIRE(std::abs(trainNorm(u) - denseNorm(du)) <= 1e-12 * denseNorm(du));
    }

    SECTION("stable norm survives near-total cancellation") {
        const TensorTrainVector w = buildOnePlusKSquared(8, 1);
        const TensorTrainVector diff = directSum(w, scaleTrain(w, -1.0));
        REQUIRE(trainNorm(diff) <= 1e-9);
    }

    SECTION("diagonal lift acts as the elementwise product") {
        const TensorTrainVector prod = applyToTrain(diagonalLift(u), v);
        const std::vector<double> dp = contractToVector(prod);
        for (std::size_t i = 0; i < dp.size(); ++i)
            REQUIRE(std::abs(dp[i] - du[i] * dv[i]) <= 1e-12);
        const Eigen::MatrixXd dense = operatorToDense(diagonalLift(u));
        for (Eigen::Index i = 0; i < dense.rows(); ++i)
            for (Eigen::Index j = 0; j < dense.cols(); ++j)
                REQUIRE(std::abs(dense(i, j) - (i == j ? du[std::size_t(i)] : 0.0)) <= 1e-13);
    }

    SECTION("identity operator leaves trains unchanged") {
        const std::vector<double> same = contractToVector(applyToTrain(identityOperatorTrain(4), u));
        for (std::size_t i = 0; i < same.size(); ++i) REQUIRE(same[i] == du[i]);
    }
}

TEST_CASE("alternating solver handles diagonal systems", "[mps]") {
    std::mt19937_64 gen(9021);

    SECTION("identity system returns the right-hand side in one sweep") {
        const TensorTrainVector b = trainFromDense(randomDense(gen, 5, -1.0, 1.0));
        SolveReport rep;
        const TensorTrainVector x = malsSolve(identityOperatorTrain(5), b, 8, 10, 1e-10, &rep);
        CHECK(rep.converged);
        CHECK(rep.iterations == 1);
        const std::vector<double> dx = contractToVector(x);
        const std::vector<double> db = contractToVector(b);
        for (std::size_t i = 0; i < dx.size(); ++i)
            REQUIRE(std::abs(dx[i] - db[i]) <= 1e-10);
    }

    SECTION("positive diagonal system solves to elementwise division") {
        const int n = 6;
        const std::vector<double> diag = randomDense(gen, n, 0.5, 2.0);
        const std::vector<double> rhs = randomDense(gen, n, -1.0, 1.0);
        const TensorTrainOperator a = diagonalLift(trainFromDense(diag));
        SolveReport rep;
        const TensorTrainVector x = malsSolve(a, trainFromDense(rhs), 8, 10, 1e-10, &rep);
        CHECK(rep.converged);
        const std::vector<double> dx = contractToVector(x);
        for (std::size_t i = 0; i < dx.size(); ++i)
            REQUIRE(std::abs(dx[i] - rhs[i] / diag[i]) <= 1e-8);
        REQUIRE(x.maxBond() <= 8);
    }

    SECTION("bond caps are respected at every cut") {
        const std::vector<double> diag = randomDense(gen, 6, 0.5, 2.0);
        const TensorTrainVector x =
            malsSolve(diagonalLift(trainFromDense(diag)), trainFromDense(randomDense(gen, 6, -1.0, 1.0)), 3);
        for (int bond : x.bondProfile()) REQUIRE(bond <= 3);
    }
}

TEST_CASE("newton square root reproduces elementwise square roots", "[mps]") {
    SECTION("all-ones target is a fixed point") {
        SolveReport rep;
        const TensorTrainVector psi = newtonSqrt(constantTrain(5, 1.0), 10, 1e-6, &rep);
        CHECK(rep.iterations == 0);
        CHECK(rep.converged);
        for (double v : contractToVector(psi)) REQUIRE(v == 1.0);
    }

    SECTION("small grid square root is accurate and positive") {
        const TensorTrainVector target = buildOnePlusKSquared(4, 1);
        SolveReport rep;
        const TensorTrainVector psi = newtonSqrt(target, 10, 1e-6, &rep);
        CHECK(rep.converged);
        CHECK(rep.residual <= 1e-6);
        const std::vector<double> v = contractToVector(psi);
        for (std::uint64_t a = 0; a < v.size(); ++a) {
            const double k = integrationPoint(a, 4, 1);
            REQUIRE(std::abs(v[a] - std::sqrt(1.0 + k * k)) <= 1e-6);
            REQUIRE(v[a] > 0.0);
        }
    }

    SECTION("residual decreases monotonically on the quadrature target") {
        for (int nAnc : {8, 10}) {
            SolveReport rep;
            newtonSqrt(buildOnePlusKSquared(nAnc, 1), 10, 1e-6, &rep);
            REQUIRE(rep.history.size() >= 2);
            for (std::size_t i = 1; i + 1 < rep.history.size(); ++i)
                REQUIRE(rep.history[i + 1] <= rep.history[i] * (1.0 + 1e-3));
        }
    }
}

TEST_CASE("coefficient pipeline hits the published fidelities", "[mps]") {
    const int nAnc = 8, nFrac = 1;
    const TensorTrainVector target = buildOnePlusKSquared(nAnc, nFrac);
    SolveReport newtonRep;
    const TensorTrainVector psi = newtonSqrt(target, 10, 1e-6, &newtonRep);
    INFO("newton residual " << newtonRep.residual << " after " << newtonRep.iterations);
    CHECK(newtonRep.residual <= 1e-3 * trainNorm(target));
    for (double v : contractToVector(psi)) REQUIRE(v > 0.0);

    // Linearized update system at a mid-iteration state: one Newton step away
    // from the all-ones start.
    {
        const TensorTrainVector psi1 =
            rightCanonicalize(directSum(scaleTrain(constantTrain(nAnc, 1.0), 0.5),
                                        scaleTrain(target, 0.5)),
                              10);
        TensorTrainOperator jac = diagonalLift(psi1);
        for (double& v : jac.cores[0].data) v *= 2.0;
        const TensorTrainVector rhs =
            directSum(target, scaleTrain(applyToTrain(diagonalLift(psi1), psi1), -1.0));
        SolveReport rep;
        malsSolve(jac, rhs, 10, 10, 1e-6, &rep);
        REQUIRE(rep.relativeResidual <= 1e-6);
    }

    const std::vector<double> exact = denseCoefficientTarget(nAnc, nFrac);
    double previous = 0.0;
    for (int rPhi : {2, 3, 4, 8}) {
        const TensorTrainVector phi = solveCoefficientTrain(psi, nFrac, rPhi);
        REQUIRE(phi.maxBond() <= rPhi);
        REQUIRE(std::abs(trainNorm(phi) - 1.0) <= 1e-12);
        const double fid = fidelityAgainst(phi, exact);
        INFO("rPhi " << rPhi << " fidelity " << fid);
        if (rPhi == 2) REQUIRE(std::abs(fid - 0.98) <= 0.01);
        if (rPhi == 4) REQUIRE(fid > 0.999);
        REQUIRE(fid >= previous - 1e-12);
        previous = fid;
    }
}

TEST_CASE("full-rank coefficient solve is numerically exact", "[mps]") {
    const CoefficientOracleResult result = solveCoefficientOracle(6, 1, 10, 8, 1e-6);
    CHECK(result.newtonReport.converged);
    REQUIRE(result.fidelity >= 1.0 - 1e-10);
}

TEST_CASE("train serialization round trips", "[mps]") {
    const TensorTrainVector t = buildKVector(5, 2);
    std::stringstream buffer;
    writeTrain(buffer, t);
    const TensorTrainVector back = readTrain(buffer);
    REQUIRE(back.nSites() == t.nSites());
    for (int s = 0; s < t.nSites(); ++s) {
        REQUIRE(back.cores[std::size_t(s)].left == t.cores[std::size_t(s)].left);
        REQUIRE(back.cores[std::size_t(s)].right == t.cores[std::size_t(s)].right);
        REQUIRE(back.cores[std::size_t(s)].data == t.cores[std::size_t(s)].data);
    }

    SECTION("malformed input is rejected") {
        std::stringstream bad("lchs-train 2\nsites 1\n");
        CHECK_THROWS_AS(readTrain(bad), ConfigError);
        std::stringstream truncated("lchs-train 1\nsites 2\nbonds 1 2 1\ncore 0 1 2\n1 0");
        CHECK_THROWS_AS(readTrain(truncated), ConfigError);
    }
}
