#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lchs/discretize.hpp"
#include "lchs/reference.hpp"
#include "test_support.hpp"

using namespace lchs;

namespace {

Eigen::MatrixXcd randomDense(std::mt19937_64& gen, int dim, double scale) {
    std::normal_distribution<double> dist(0.0, scale);
    Eigen::MatrixXcd m(dim, dim);
    for (int r = 0; r < dim; ++r)
        for (int c = 0; c < dim; ++c) m(r, c) = Complex(dist(gen), dist(gen));
    return m;
}

Eigen::VectorXcd randomVector(std::mt19937_64& gen, int dim) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Eigen::VectorXcd v(dim);
    for (int r = 0; r < dim; ++r) v(r) = Complex(dist(gen), dist(gen));
    return v;
}

// Truncated Taylor series of exp(-m t) v, the independent propagator check.
Eigen::VectorXcd taylorExp(const Eigen::MatrixXcd& m, double t, const Eigen::VectorXcd& v,
                           int terms) {
    Eigen::VectorXcd acc = v;
    Eigen::VectorXcd power = v;
    for (int k = 1; k <= terms; ++k) {
        power = (m * power) * (-t / double(k));
        acc += power;
    }
    return acc;
}

PiecewiseField randomPiecewise(std::mt19937_64& gen, const Grid& g, const std::string& name,
                               double lo, double hi) {
    std::uniform_real_distribution<double> val(lo, hi);
    std::uniform_int_distribution<std::uint64_t> node(0, g.nodeCount() - 1);
    PiecewiseField f = PiecewiseField::constant(name, val(gen));
    PiecewiseField::Region region;
    const std::uint64_t limit = g.nodeCount() / 2;
    for (std::uint64_t j = 0; j < limit; ++j) {
        const std::uint64_t pick = node(gen);
        if (!std::binary_search(region.nodes.begin(), region.nodes.end(), pick)) {
            region.nodes.insert(
                std::lower_bound(region.nodes.begin(), region.nodes.end(), pick), pick);
        }
    }
    region.value = val(gen);
    f.regions.push_back(std::move(region));
    return f;
}

PdeProblem heatProblem(std::vector<int> nBits, double kappa) {
    PdeProblem p;
    p.family = PdeFamily::FirstOrder;
    p.grid.d = static_cast<int>(nBits.size());
    p.grid.nBitsPerAxis = std::move(nBits);
    p.grid.h = 1.0;
    p.boundary.axes.assign(std::size_t(p.grid.d), {});
    p.kappa = PiecewiseField::constant("kappa", kappa);
    p.T = 10.0;
    p.tau = 0.1;
    return p;
}

// 1D wave problem on the boundary pair that keeps the assembled generator
// anti-Hermitian: soft wall on the low face, hard wall on the high face.
PdeProblem waveProblem(int nBits) {
    PdeProblem p;
    p.family = PdeFamily::SecondOrder;
    p.grid.d = 1;
    p.grid.nBitsPerAxis = {nBits};
    p.grid.h = 1.0;
    p.boundary.axes.assign(1, {BoundaryKind::Dirichlet, BoundaryKind::Neumann});
    p.T = 4.0;
    p.tau = 0.01;
    return p;
}

double sumField(const std::vector<Complex>& state) {
    double s = 0.0;
    for (const auto& a : state) s += a.real();
    return s;
}

} // namespace

TEST_CASE("dense propagator matches an independent Taylor series", "[reference]") {
    auto gen = test::rng(2026u);

    SECTION("zero generator and zero horizon are the identity") {
        const Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(8, 8);
        const Eigen::VectorXcd v = randomVector(gen, 8);
        REQUIRE((expmMultiply(zero, 0.7, v) - v).norm() <= 1e-14 * v.norm());
        const Eigen::MatrixXcd m = randomDense(gen, 8, 1.0);
        REQUIRE((expmMultiply(m, 0.0, v) - v).norm() == 0.0);
    }

    SECTION("random dense generators against forty Taylor terms") {
        for (int rep = 0; rep < 20; ++rep) {
            const Eigen::MatrixXcd m = randomDense(gen, 8, 0.5);
            const Eigen::VectorXcd v = randomVector(gen, 8);
            const Eigen::VectorXcd viaTaylor = taylorExp(m, 0.7, v, 40);
            const Eigen::VectorXcd viaPade = expmMultiply(m, 0.7, v);
            REQUIRE((viaPade - viaTaylor).norm() <= 1e-9 * viaTaylor.norm());
        }
    }

    SECTION("skew-Hermitian generators preserve the norm") {
        for (int rep = 0; rep < 10; ++rep) {
            Eigen::MatrixXcd m = randomDense(gen, 16, 1.0);
            m = 0.5 * (m - m.adjoint().eval());
            const Eigen::VectorXcd v = randomVector(gen, 16);
            const Eigen::VectorXcd out = expmMultiply(m, 1.3, v);
            REQUIRE(out.norm() == Catch::Approx(v.norm()).epsilon(1e-10));
        }
    }

    SECTION("shape misuse is rejected") {
        const Eigen::MatrixXcd rect = Eigen::MatrixXcd::Zero(4, 6);
        const Eigen::VectorXcd v = randomVector(gen, 4);
        REQUIRE_THROWS_AS(expmMultiply(rect, 1.0, v), ConfigError);
        const Eigen::MatrixXcd square = Eigen::MatrixXcd::Zero(6, 6);
        REQUIRE_THROWS_AS(expmMultiply(square, 1.0, v), ConfigError);
    }
}

TEST_CASE("quadrature reference reduces to closed forms and converges", "[reference]") {
    auto gen = test::rng(40812u);

    SECTION("k-independent integrand factors into the weight sum") {
        const int dim = 8, nAnc = 5, nFrac = 1;
        Eigen::MatrixXcd h = randomDense(gen, dim, 0.6);
        h = 0.5 * (h + h.adjoint().eval());
        const Eigen::MatrixXcd zero = Eigen::MatrixXcd::Zero(dim, dim);
        const Eigen::VectorXcd w0 = randomVector(gen, dim);
        const double T = 1.7;

        const Eigen::VectorXcd quad = lchsQuadratureDense(zero, h, T, nAnc, nFrac, w0);
        const Eigen::MatrixXcd gen0 = (Complex(0.0, -T) * h).exp();
        const Eigen::VectorXcd expected = quadratureWeightSum(nAnc, nFrac) * (gen0 * w0);
        REQUIRE((quad - expected).norm() <= 1e-12 * expected.norm());

        const Eigen::VectorXcd atZero =
            lchsQuadratureDense(randomDense(gen, dim, 0.4), h, 0.0, nAnc, nFrac, w0);
        const Eigen::VectorXcd expectZero = quadratureWeightSum(nAnc, nFrac) * w0;
        REQUIRE((atZero - expectZero).norm() <= 1e-12 * expectZero.norm());
    }

    SECTION("heat problem error shrinks as the ancilla register grows") {
        PdeProblem p = heatProblem({3}, 0.1);
        const QubitOperator a = assembleFirstOrder(p, buildDiagonalOperators(p));
        const HermitianParts parts = hermitianSplit(a);
        const Eigen::MatrixXcd l = toDense(parts.l);
        const Eigen::MatrixXcd h = toDense(parts.h);
        const Eigen::MatrixXcd aDense = toDense(a);

        auto genState = test::randomState(gen, 3);
        const Eigen::VectorXcd w0 = test::toEigen(genState);
        const double T = 1.0;
        const Eigen::VectorXcd exact = expmMultiply(aDense, T, w0);

        std::vector<double> errs;
        for (int nAnc : {4, 6, 8}) {
            const Eigen::VectorXcd quad = lchsQuadratureDense(l, h, T, nAnc, 1, w0);
            errs.push_back((quad - exact).norm() / exact.norm());
        }
        REQUIRE(errs[1] < errs[0]);
        REQUIRE(errs[2] < errs[1]);
        REQUIRE(errs[2] < 0.05);
    }

    SECTION("mismatched operands and oversized registers are rejected") {
        const Eigen::MatrixXcd small = Eigen::MatrixXcd::Zero(4, 4);
        const Eigen::MatrixXcd big = Eigen::MatrixXcd::Zero(8, 8);
        const Eigen::VectorXcd v = randomVector(gen, 4);
        REQUIRE_THROWS_AS(lchsQuadratureDense(small, big, 1.0, 4, 1, v), ConfigError);
        REQUIRE_THROWS_AS(lchsQuadratureDense(small, small, 1.0, 17, 1, v), CapError);
    }
}

TEST_CASE("explicit stepping respects conservation and dissipation", "[reference]") {
    auto gen = test::rng(515253u);

    SECTION("uniform field under insulated faces stays exactly constant") {
        PdeProblem p = heatProblem({2, 2}, 0.0);
        for (auto& ax : p.boundary.axes) ax = {BoundaryKind::Neumann, BoundaryKind::Neumann};
        p.kappa = randomPiecewise(gen, p.grid, "kappa", 0.05, 1.0);
        const std::vector<double> u0(p.grid.nodeCount(), 0.75);
        const FdmResult run = classicalFdm(p, u0, {}, {0.0, 0.5, 1.0}, {1.0e-3});
        REQUIRE(run.u.times.size() == 3);
        for (const auto& state : run.u.states)
            for (std::size_t j = 0; j < state.size(); ++j) REQUIRE(state[j] == Complex(0.75));
    }

    SECTION("heat content drains monotonically through cold walls") {
        PdeProblem p = heatProblem({3, 3}, 0.1);
        std::vector<double> u0(p.grid.nodeCount(), 0.0);
        Box box;
        box.range = {{2, 5}, {2, 5}};
        for (std::uint64_t j : box.nodes(p.grid)) u0[j] = 1.0;
        std::vector<double> marks;
        for (int t = 0; t <= 10; ++t) marks.push_back(double(t));
        const FdmResult run = classicalFdm(p, u0, {}, marks, {1.0e-3});
        for (std::size_t s = 1; s < run.u.states.size(); ++s)
            REQUIRE(sumField(run.u.states[s]) < sumField(run.u.states[s - 1]));
        REQUIRE(sumField(run.u.states.back()) > 0.0);
    }

    SECTION("discrete energy is non-increasing per stable Euler step") {
        for (int rep = 0; rep < 12; ++rep) {
            std::uniform_int_distribution<int> dims(1, 2);
            const int d = dims(gen);
            std::vector<int> nBits(std::size_t(d), 2 + (rep % 2));
            PdeProblem p = heatProblem(nBits, 1.0);
            p.kappa = randomPiecewise(gen, p.grid, "kappa", 0.05, 1.0);
            if (rep % 3 == 0) p.alpha = randomPiecewise(gen, p.grid, "alpha", 0.0, 0.3);

            double kappaMax = p.kappa.defaultValue, alphaMax = p.alpha.defaultValue;
            for (const auto& r : p.kappa.regions) kappaMax = std::max(kappaMax, r.value);
            for (const auto& r : p.alpha.regions) alphaMax = std::max(alphaMax, r.value);
            const double h = p.grid.h;
            const double tau = 0.25 * h * h / (d * kappaMax + h * h * alphaMax + 1e-12);

            std::vector<double> u0(p.grid.nodeCount());
            std::normal_distribution<double> amp(0.0, 1.0);
            for (auto& x : u0) x = amp(gen);

            std::vector<double> marks;
            for (int s = 0; s <= 25; ++s) marks.push_back(s * tau);
            const FdmResult run = classicalFdm(p, u0, {}, marks, {tau});
            REQUIRE_FALSE(run.diagnostics.cflWarning);
            for (std::size_t s = 1; s < run.u.norms.size(); ++s)
                REQUIRE(run.u.norms[s] <= run.u.norms[s - 1] * (1.0 + 1e-13));
        }
    }

    SECTION("a step beyond the stability limit raises the warning flag") {
        PdeProblem p = heatProblem({3}, 1.0);
        const std::vector<double> u0(p.grid.nodeCount(), 1.0);
        const FdmResult safe = classicalFdm(p, u0, {}, {0.0, 0.1}, {1.0e-3});
        REQUIRE_FALSE(safe.diagnostics.cflWarning);
        REQUIRE(safe.diagnostics.cflLimit > 1.0e-3);
        const FdmResult coarse =
            classicalFdm(p, u0, {}, {0.0, 4.0 * safe.diagnostics.cflLimit},
                         {2.0 * safe.diagnostics.cflLimit});
        REQUIRE(coarse.diagnostics.cflWarning);
    }

    SECTION("input misuse is rejected") {
        PdeProblem heat = heatProblem({3}, 0.1);
        const std::vector<double> u0(heat.grid.nodeCount(), 1.0);
        REQUIRE_THROWS_AS(classicalFdm(heat, {1.0, 2.0}, {}, {0.0, 1.0}), ConfigError);
        REQUIRE_THROWS_AS(classicalFdm(heat, u0, u0, {0.0, 1.0}), ConfigError);
        REQUIRE_THROWS_AS(classicalFdm(heat, u0, {}, {}), ConfigError);
        REQUIRE_THROWS_AS(classicalFdm(heat, u0, {}, {0.0, 1.5e-4}), ConfigError);
        REQUIRE_THROWS_AS(classicalFdm(heat, u0, {}, {1.0, 0.5}), ConfigError);
        PdeProblem wave = waveProblem(3);
        const std::vector<double> w(wave.grid.nodeCount(), 0.0);
        REQUIRE_THROWS_AS(classicalFdm(wave, w, {}, {0.0, 1.0}), ConfigError);
    }
}

TEST_CASE("stencil integrator tracks the dense wave propagator", "[reference]") {
    PdeProblem p = waveProblem(5);
    const std::uint64_t nodes = p.grid.nodeCount();

    std::vector<double> u0(nodes), uDot0(nodes);
    auto pulse = [](double x) { return std::exp(-x * x / (2.0 * 2.5 * 2.5)); };
    for (std::uint64_t j = 0; j < nodes; ++j) u0[j] = pulse(double(j) - 10.0);
    for (std::uint64_t j = 0; j < nodes; ++j) {
        const double right = j + 1 < nodes ? u0[j + 1] : 0.0;
        const double left = j > 0 ? u0[j - 1] : 0.0;
        uDot0[j] = -0.5 * (right - left);
    }

    const FdmResult run = classicalFdm(p, u0, uDot0, {0.0, 2.0, 4.0}, {1.0e-3});
    REQUIRE(run.u.times.size() == 3);
    REQUIRE(run.uDot.times.size() == 3);
    REQUIRE_FALSE(run.diagnostics.cflWarning);

    const QubitOperator a = assembleSecondOrder(p, buildDiagonalOperators(p));
    const Statevector w0 = encodeInitialState(p, u0, uDot0);
    const Eigen::VectorXcd wT = expmMultiply(toDense(a), 4.0, test::toEigen(w0));

    const StateLayout layout = StateLayout::forProblem(p);
    const Eigen::Index dim = static_cast<Eigen::Index>(nodes);
    Eigen::VectorXd denseVel(dim), fdmVel(dim), vel0(dim);
    for (std::uint64_t j = 0; j < nodes; ++j) {
        denseVel(Eigen::Index(j)) = wT(Eigen::Index(layout.ampIndex(0, j))).real();
        fdmVel(Eigen::Index(j)) = run.uDot.states.back()[j].real();
    }
    REQUIRE((fdmVel - denseVel).norm() <= 0.02 * denseVel.norm());

    Eigen::Index peak0 = 0, peakT = 0;
    for (std::uint64_t j = 0; j < nodes; ++j) vel0(Eigen::Index(j)) = uDot0[j];
    vel0.cwiseAbs().maxCoeff(&peak0);
    fdmVel.cwiseAbs().maxCoeff(&peakT);
    const int moved = int(peakT - peak0);
    REQUIRE(moved >= 3);
    REQUIRE(moved <= 5);
}

TEST_CASE("norm traces follow the damping structure", "[reference]") {
    auto gen = test::rng(777001u);

    SECTION("undamped wave system holds its norm over a long horizon") {
        PdeProblem p;
        p.family = PdeFamily::SecondOrder;
        p.grid.d = 2;
        p.grid.nBitsPerAxis = {2, 2};
        p.grid.h = 1.0;
        p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Neumann},
                           {BoundaryKind::Periodic, BoundaryKind::Periodic}};
        p.rho = randomPiecewise(gen, p.grid, "rho", 0.5, 2.0);
        p.kappa = randomPiecewise(gen, p.grid, "kappa", 0.5, 2.0);
        p.alpha = randomPiecewise(gen, p.grid, "alpha", 0.0, 1.0);
        p.T = 20.0;
        p.tau = 0.1;

        const QubitOperator a = assembleSecondOrder(p, buildDiagonalOperators(p));
        const StateLayout layout = StateLayout::forProblem(p);
        const Statevector w0 = test::randomState(gen, layout.totalQubits());
        const TimeSeries trace = normTrace(a, w0, 20.0, 81);
        trace.validate();
        for (double n : trace.norms) REQUIRE(std::abs(n - trace.norms.front()) <= 1e-8);
    }

    SECTION("diffusion strictly erodes the norm") {
        PdeProblem p = heatProblem({2, 2}, 1.0);
        p.kappa = randomPiecewise(gen, p.grid, "kappa", 0.2, 1.0);
        const QubitOperator a = assembleFirstOrder(p, buildDiagonalOperators(p));
        const Statevector w0 = test::randomState(gen, p.grid.totalBits());
        const TimeSeries trace = normTrace(a, w0, 5.0, 11);
        for (std::size_t s = 1; s < trace.norms.size(); ++s)
            REQUIRE(trace.norms[s] < trace.norms[s - 1]);
    }

    SECTION("empty generator leaves the norm untouched") {
        const QubitOperator a(4);
        auto w0 = test::randomState(gen, 4);
        const TimeSeries trace = normTrace(a, w0, 3.0, 7);
        for (double n : trace.norms)
            REQUIRE(n == Catch::Approx(trace.norms.front()).margin(1e-13));
    }

    SECTION("misuse is rejected") {
        const QubitOperator a(4);
        auto w0 = test::randomState(gen, 4);
        REQUIRE_THROWS_AS(normTrace(a, w0, 3.0, 1), ConfigError);
        REQUIRE_THROWS_AS(normTrace(a, w0, -1.0, 5), ConfigError);
        REQUIRE_THROWS_AS(normTrace(QubitOperator(5), w0, 3.0, 5), ConfigError);
        REQUIRE_THROWS_AS(normTrace(QubitOperator(13), test::randomState(gen, 13), 1.0, 3),
                          CapError);
        TimeSeries bad;
        bad.times = {0.0, 1.0};
        bad.norms = {1.0};
        REQUIRE_THROWS_AS(bad.validate(), ConfigError);
    }
}
