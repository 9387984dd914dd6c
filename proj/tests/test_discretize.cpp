#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lchs/discretize.hpp"
#include "stencil_oracle.hpp"
#include "test_support.hpp"

using namespace lchs;

namespace {

PiecewiseField randomField(std::mt19937_64& gen, const Grid& g, const std::string& name,
                           double lo, double hi) {
    std::uniform_real_distribution<double> val(lo, hi);
    PiecewiseField f;
    f.name = name;
    f.defaultValue = val(gen);
    const int nRegions = int(gen() % 3);
    std::vector<std::uint64_t> pool;
    for (std::uint64_t j = 0; j < g.nodeCount(); ++j) pool.push_back(j);
    std::shuffle(pool.begin(), pool.end(), gen);
    std::size_t cursor = 0;
    for (int r = 0; r < nRegions; ++r) {
        PiecewiseField::Region region;
        region.value = val(gen);
        const std::size_t take = 1 + gen() % std::max<std::size_t>(1, g.nodeCount() / 4);
        for (std::size_t k = 0; k < take && cursor < pool.size(); ++k)
            region.nodes.push_back(pool[cursor++]);
        std::sort(region.nodes.begin(), region.nodes.end());
        f.regions.push_back(std::move(region));
    }
    return f;
}

BoundarySpec randomBoundary(std::mt19937_64& gen, const Grid& g) {
    BoundarySpec b;
    b.axes.resize(g.d);
    for (int axis = 0; axis < g.d; ++axis) {
        switch (gen() % 5) {
        case 0: b.axes[axis] = {BoundaryKind::Periodic, BoundaryKind::Periodic}; break;
        case 1: b.axes[axis] = {BoundaryKind::Dirichlet, BoundaryKind::Dirichlet}; break;
        case 2: b.axes[axis] = {BoundaryKind::Dirichlet, BoundaryKind::Neumann}; break;
        case 3: b.axes[axis] = {BoundaryKind::Neumann, BoundaryKind::Dirichlet}; break;
        default: b.axes[axis] = {BoundaryKind::Neumann, BoundaryKind::Neumann}; break;
        }
    }
    return b;
}

PdeProblem randomProblem(std::mt19937_64& gen, PdeFamily family) {
    PdeProblem p;
    p.family = family;
    p.grid.d = 1 + int(gen() % 2);
    p.grid.nBitsPerAxis.clear();
    for (int axis = 0; axis < p.grid.d; ++axis)
        p.grid.nBitsPerAxis.push_back(1 + int(gen() % 3));
    std::uniform_real_distribution<double> hDist(0.25, 2.0);
    p.grid.h = hDist(gen);
    p.boundary = randomBoundary(gen, p.grid);
    p.rho = randomField(gen, p.grid, "rho", 0.3, 3.0);
    p.kappa = randomField(gen, p.grid, "kappa", 0.1, 2.5);
    p.zeta = randomField(gen, p.grid, "zeta", 0.0, 1.5);
    p.alpha = randomField(gen, p.grid, "alpha", 0.0, 2.0);
    if (family == PdeFamily::FirstOrder) {
        p.beta.clear();
        for (int axis = 0; axis < p.grid.d; ++axis)
            p.beta.push_back(randomField(gen, p.grid, "beta", -1.5, 1.5));
    }
    p.T = 1.0;
    p.tau = 0.1;
    p.validate();
    return p;
}

} // namespace

TEST_CASE("assembly agrees with the dense stencil oracle", "[pde-discretize]") {
    auto gen = test::rng(31);
    for (int trial = 0; trial < 60; ++trial) {
        const PdeFamily family = (trial % 2 == 0) ? PdeFamily::SecondOrder
                                                  : PdeFamily::FirstOrder;
        const PdeProblem p = randomProblem(gen, family);
        const auto diagOps = buildDiagonalOperators(p);
        const QubitOperator a = (family == PdeFamily::SecondOrder)
                                    ? assembleSecondOrder(p, diagOps)
                                    : assembleFirstOrder(p, diagOps);
        const Eigen::MatrixXcd dense = test::denseOracle(a);
        const Eigen::MatrixXcd oracle = test::denseOracleFor(p);
        INFO("family " << (family == PdeFamily::SecondOrder ? "second" : "first") << " d "
                       << p.grid.d << " trial " << trial);
        REQUIRE((dense - oracle).norm() < 1e-12 * std::max(1.0, oracle.norm()));
    }
}

TEST_CASE("wave generator is anti-hermitian for pure acoustics", "[pde-discretize]") {
    PdeProblem p;
    p.family = PdeFamily::SecondOrder;
    p.grid.d = 2;
    p.grid.nBitsPerAxis = {3, 2};
    p.grid.h = 1.0;
    p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Neumann},
                       {BoundaryKind::Periodic, BoundaryKind::Periodic}};
    Box fast;
    fast.range = {{2, 5}, {1, 2}};
    p.rho.defaultValue = 1.0;
    p.rho.regions.push_back({fast.nodes(p.grid), 0.01}); // sound speed 10 inside the box
    p.kappa = PiecewiseField::constant("kappa", 1.0);
    p.zeta = PiecewiseField::constant("zeta", 0.0);
    p.alpha = PiecewiseField::constant("alpha", 0.0);
    p.validate();

    const auto diagOps = buildDiagonalOperators(p);
    const QubitOperator a = assembleSecondOrder(p, diagOps);
    const HermitianParts parts = hermitianSplit(a);
    CHECK(parts.l.terms().empty());

    // H = i * sum_mu (|0><mu+1| (x) cD+ + |mu+1><0| (x) D-c) with c = 1/sqrt(rho)
    const StateLayout layout = StateLayout::forProblem(p);
    const QubitOperator c = fieldToOperator(p.rho, p.grid,
                                            [](double x) { return 1.0 / std::sqrt(x); });
    QubitOperator expectH(layout.totalQubits());
    for (int mu = 0; mu < p.grid.d; ++mu) {
        const QubitOperator dPlus = differenceOperator(DiffScheme::Forward, mu, p.grid, p.boundary);
        const QubitOperator dMinus =
            differenceOperator(DiffScheme::Backward, mu, p.grid, p.boundary);
        expectH.add(detail::embedBlock(multiplyOperators(c, dPlus), 0, mu + 1, layout)
                        .scaled(Complex(0, 1)));
        expectH.add(detail::embedBlock(multiplyOperators(dMinus, c), mu + 1, 0, layout)
                        .scaled(Complex(0, 1)));
    }
    CHECK((test::denseOracle(parts.h) - test::denseOracle(expectH)).norm() < 1e-12);
}

TEST_CASE("two-node wave system matches a hand-assembled block matrix", "[pde-discretize]") {
    PdeProblem p;
    p.family = PdeFamily::SecondOrder;
    p.grid.d = 1;
    p.grid.nBitsPerAxis = {1};
    p.grid.h = 0.7;
    p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Dirichlet}};
    p.rho = PiecewiseField::constant("rho", 2.0);
    p.kappa = PiecewiseField::constant("kappa", 3.0);
    p.zeta = PiecewiseField::constant("zeta", 0.5);
    p.alpha = PiecewiseField::constant("alpha", 1.5);
    p.validate();

    const QubitOperator a = assembleSecondOrder(p, buildDiagonalOperators(p));
    const Eigen::MatrixXcd dense = test::denseOracle(a);

    const double h = 0.7, sr = 1.0 / std::sqrt(2.0), sk = std::sqrt(3.0);
    Eigen::MatrixXcd expect = Eigen::MatrixXcd::Zero(8, 8);
    expect(0, 0) = expect(1, 1) = 0.5 / 2.0;
    // forward difference, high Dirichlet row replaced by backward
    Eigen::Matrix2d dTop;
    dTop << -1 / h, 1 / h, -1 / h, 1 / h;
    // backward difference, plain low Dirichlet row
    Eigen::Matrix2d dBot;
    dBot << 1 / h, 0, -1 / h, 1 / h;
    expect.block(0, 2, 2, 2) = -(sr * sk) * dTop.cast<Complex>();
    expect.block(2, 0, 2, 2) = -(sk * sr) * dBot.cast<Complex>();
    const double absorb = std::sqrt(1.5 / 2.0);
    expect(0, 4) = absorb;
    expect(1, 5) = absorb;
    expect(4, 0) = -absorb;
    expect(5, 1) = -absorb;

    CHECK((dense - expect).norm() < 1e-13);
}

TEST_CASE("zero damping leaves the velocity diagonal block empty", "[pde-discretize]") {
    auto gen = test::rng(32);
    PdeProblem p = randomProblem(gen, PdeFamily::SecondOrder);
    p.zeta = PiecewiseField::constant("zeta", 0.0);
    const QubitOperator a = assembleSecondOrder(p, buildDiagonalOperators(p));
    const Eigen::MatrixXcd dense = test::denseOracle(a);
    const std::uint64_t nn = p.grid.nodeCount();
    CHECK(dense.block(0, 0, nn, nn).norm() == 0.0);
}

TEST_CASE("uniform diffusion generator is hermitian PSD", "[pde-discretize]") {
    PdeProblem p;
    p.family = PdeFamily::FirstOrder;
    p.grid.d = 2;
    p.grid.nBitsPerAxis = {3, 3};
    p.grid.h = 1.0;
    p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Dirichlet},
                       {BoundaryKind::Dirichlet, BoundaryKind::Dirichlet}};
    p.kappa = PiecewiseField::constant("kappa", 0.1);
    p.alpha = PiecewiseField::constant("alpha", 0.0);
    p.validate();

    const QubitOperator a = assembleFirstOrder(p, buildDiagonalOperators(p));
    const HermitianParts parts = hermitianSplit(a);
    CHECK(parts.h.terms().empty());

    // L = -(kappa/2) sum (D+D- + D-D+) plus the Dirichlet end-row corrections
    QubitOperator expectL(p.grid.totalBits());
    for (int mu = 0; mu < 2; ++mu) {
        const QubitOperator dPlus = differenceOperator(DiffScheme::Forward, mu, p.grid, p.boundary);
        const QubitOperator dMinus =
            differenceOperator(DiffScheme::Backward, mu, p.grid, p.boundary);
        QubitOperator pair = multiplyOperators(dPlus, dMinus);
        pair.add(multiplyOperators(dMinus, dPlus));
        expectL.add(pair.scaled(-0.05));
        expectL.add(faceProjector(p.grid, mu, false).scaled(0.05));
        expectL.add(faceProjector(p.grid, mu, true).scaled(0.05));
    }
    CHECK((test::denseOracle(parts.l) - test::denseOracle(expectL)).norm() < 1e-12);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(test::denseOracle(parts.l),
                                                       Eigen::EigenvaluesOnly);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("pure absorption gives a decaying diagonal generator", "[pde-discretize]") {
    PdeProblem p;
    p.family = PdeFamily::FirstOrder;
    p.grid.d = 1;
    p.grid.nBitsPerAxis = {2};
    p.grid.h = 1.0;
    p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Dirichlet}};
    p.kappa = PiecewiseField::constant("kappa", 0.0);
    p.alpha = PiecewiseField::constant("alpha", 0.8);
    p.validate();

    const QubitOperator a = assembleFirstOrder(p, buildDiagonalOperators(p));
    const Eigen::MatrixXcd dense = test::denseOracle(a);
    CHECK((dense - 0.8 * Eigen::MatrixXcd::Identity(4, 4)).norm() < 1e-14);
}

TEST_CASE("1D diffusion with fixed ends is the classic second-difference matrix",
          "[pde-discretize]") {
    PdeProblem p;
    p.family = PdeFamily::FirstOrder;
    p.grid.d = 1;
    p.grid.nBitsPerAxis = {2};
    p.grid.h = 0.5;
    p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Dirichlet}};
    p.kappa = PiecewiseField::constant("kappa", 1.3);
    p.validate();

    const QubitOperator a = assembleFirstOrder(p, buildDiagonalOperators(p));
    Eigen::MatrixXcd expect = Eigen::MatrixXcd::Zero(4, 4);
    const double s = 1.3 / 0.25;
    for (int i = 0; i < 4; ++i) {
        expect(i, i) = 2 * s;
        if (i > 0) expect(i, i - 1) = -s;
        if (i < 3) expect(i, i + 1) = -s;
    }
    CHECK((test::denseOracle(a) - expect).norm() < 1e-12);
}

TEST_CASE("missing diagonal operators and family mismatches are rejected", "[pde-discretize]") {
    auto gen = test::rng(33);
    const PdeProblem p = randomProblem(gen, PdeFamily::SecondOrder);
    std::map<std::string, QubitOperator> empty;
    CHECK_THROWS_AS(assembleSecondOrder(p, empty), ConfigError);
    CHECK_THROWS_AS(assembleFirstOrder(p, buildDiagonalOperators(p)), ConfigError);
}

TEST_CASE("spectral shift makes the hermitian part PSD", "[pde-discretize]") {
    SECTION("diffusion generators need no shift") {
        PdeProblem p;
        p.family = PdeFamily::FirstOrder;
        p.grid.d = 1;
        p.grid.nBitsPerAxis = {3};
        p.grid.h = 1.0;
        p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Neumann}};
        p.kappa = PiecewiseField::constant("kappa", 0.1);
        p.validate();
        const auto [shifted, shift] = positiveShift(assembleFirstOrder(p, buildDiagonalOperators(p)));
        CHECK(shift == 0.0);
    }
    SECTION("negative identity shifts to zero") {
        QubitOperator a(1);
        a.add(-1.0, FactorString{SiteFactor::I});
        const auto [shifted, shift] = positiveShift(a);
        CHECK(std::abs(shift - 1.0) < 1e-12);
        CHECK(shifted.terms().empty());
    }
    SECTION("random generators end up PSD") {
        auto gen = test::rng(34);
        for (int trial = 0; trial < 20; ++trial) {
            const QubitOperator a = test::randomOperator(gen, 4, 10);
            const auto [shifted, shift] = positiveShift(a);
            const HermitianParts parts = hermitianSplit(shifted);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(test::denseOracle(parts.l),
                                                               Eigen::EigenvaluesOnly);
            CHECK(es.eigenvalues().minCoeff() >= -1e-10);
        }
    }
    SECTION("large registers fall back to a spectral bound") {
        QubitOperator a(13);
        FactorString f(13, SiteFactor::I);
        f[4] = SiteFactor::P11;
        a.add(-2.0, f);
        const auto [shifted, shift] = positiveShift(a);
        CHECK(std::abs(shift - 2.0) < 1e-12);
    }
}

TEST_CASE("initial state encoding and decoding round-trip", "[pde-discretize]") {
    auto gen = test::rng(35);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    SECTION("second order recovers every block") {
        PdeProblem p = randomProblem(gen, PdeFamily::SecondOrder);
        p.alpha.defaultValue = std::max(p.alpha.defaultValue, 0.1); // keep u decodable
        for (auto& r : p.alpha.regions) r.value = std::max(r.value, 0.1);
        const std::uint64_t nn = p.grid.nodeCount();
        std::vector<double> u0(nn), uDot0(nn);
        for (auto& x : u0) x = dist(gen);
        for (auto& x : uDot0) x = dist(gen);

        const Statevector v = encodeInitialState(p, u0, uDot0);

        const auto uDotBack = decodeField(v, p, DecodeWhich::UDot);
        for (std::uint64_t j = 0; j < nn; ++j) CHECK(std::abs(uDotBack[j] - uDot0[j]) < 1e-12);

        const auto uBack = decodeField(v, p, DecodeWhich::U);
        for (std::uint64_t j = 0; j < nn; ++j) CHECK(std::abs(uBack[j] - u0[j]) < 1e-12);

        Statevector uVec(p.grid.totalBits());
        for (std::uint64_t j = 0; j < nn; ++j) uVec.amp[j] = u0[j];
        for (int mu = 0; mu < p.grid.d; ++mu) {
            const auto grad = applyOperator(
                differenceOperator(DiffScheme::Backward, mu, p.grid, p.boundary), uVec);
            const auto gradBack = decodeField(v, p, DecodeWhich::GradAxis, mu);
            for (std::uint64_t j = 0; j < nn; ++j)
                CHECK(std::abs(gradBack[j] - grad.amp[j].real()) < 1e-12);
        }
    }

    SECTION("first order stores the field directly") {
        PdeProblem p = randomProblem(gen, PdeFamily::FirstOrder);
        const std::uint64_t nn = p.grid.nodeCount();
        std::vector<double> u0(nn);
        for (auto& x : u0) x = dist(gen);
        const Statevector v = encodeInitialState(p, u0);
        const auto back = decodeField(v, p, DecodeWhich::U);
        for (std::uint64_t j = 0; j < nn; ++j) {
            CHECK(v.amp[j] == Complex(u0[j]));
            CHECK(back[j] == u0[j]);
        }
        const auto raw = decodeField(v, p, DecodeWhich::Raw);
        for (std::uint64_t j = 0; j < nn; ++j) CHECK(raw[j] == u0[j]);
    }

    SECTION("the u block is rejected when absorption vanishes") {
        PdeProblem p = randomProblem(gen, PdeFamily::SecondOrder);
        p.alpha = PiecewiseField::constant("alpha", 0.0);
        const std::uint64_t nn = p.grid.nodeCount();
        const std::vector<double> u0(nn, 0.5), uDot0(nn, 0.25);
        const Statevector v = encodeInitialState(p, u0, uDot0);
        CHECK_THROWS_AS(decodeField(v, p, DecodeWhich::U), ConfigError);
    }

    SECTION("length mismatches are rejected") {
        PdeProblem p = randomProblem(gen, PdeFamily::SecondOrder);
        CHECK_THROWS_AS(encodeInitialState(p, {1.0, 2.0}), ConfigError);
    }
}

TEST_CASE("box initial condition lands on the expected amplitudes", "[pde-discretize]") {
    PdeProblem p;
    p.family = PdeFamily::FirstOrder;
    p.grid.d = 2;
    p.grid.nBitsPerAxis = {4, 4};
    p.grid.h = 1.0;
    p.boundary.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Dirichlet},
                       {BoundaryKind::Dirichlet, BoundaryKind::Dirichlet}};
    p.kappa = PiecewiseField::constant("kappa", 0.1);
    p.validate();

    Box box;
    box.range = {{6, 7}, {6, 9}};
    std::vector<double> u0(p.grid.nodeCount(), 0.0);
    for (auto j : box.nodes(p.grid)) u0[j] = std::sqrt(2.0) / 4.0;

    const Statevector v = encodeInitialState(p, u0);
    CHECK(std::abs(v.norm() - 1.0) < 1e-12);
    for (std::uint64_t j = 0; j < p.grid.nodeCount(); ++j) {
        const int x0 = p.grid.axisCoord(j, 0), x1 = p.grid.axisCoord(j, 1);
        const bool inside = x0 >= 6 && x0 <= 7 && x1 >= 6 && x1 <= 9;
        CHECK(std::abs(v.amp[j] - Complex(inside ? std::sqrt(2.0) / 4.0 : 0.0)) < 1e-15);
    }
}

TEST_CASE("intensity observable reduces to known forms", "[pde-discretize]") {
    auto gen = test::rng(36);
    PdeProblem p = randomProblem(gen, PdeFamily::SecondOrder);
    const StateLayout layout = StateLayout::forProblem(p);
    const Statevector v = test::randomState(gen, layout.totalQubits());
    const std::uint64_t nn = p.grid.nodeCount();

    SECTION("uniform unit speed over all nodes gives the block norm") {
        std::vector<std::uint64_t> all;
        for (std::uint64_t j = 0; j < nn; ++j) all.push_back(j);
        double blockNorm = 0.0;
        for (std::uint64_t j = 0; j < nn; ++j)
            blockNorm += std::norm(v.amp[layout.ampIndex(0, j)]);
        const double got =
            observableIntensity(v, all, PiecewiseField::constant("c", 1.0), p);
        CHECK(std::abs(got - blockNorm) < 1e-12);
    }
    SECTION("empty region gives zero") {
        CHECK(observableIntensity(v, {}, PiecewiseField::constant("c", 1.0), p) == 0.0);
    }
    SECTION("random region equals the dense quadratic form") {
        PiecewiseField c = randomField(gen, p.grid, "c", 0.5, 3.0);
        std::vector<std::uint64_t> region;
        for (std::uint64_t j = 0; j < nn; ++j)
            if (gen() % 2) region.push_back(j);

        const Eigen::Index dim = Eigen::Index(1) << layout.totalQubits();
        Eigen::MatrixXcd obs = Eigen::MatrixXcd::Zero(dim, dim);
        for (std::uint64_t j : region) {
            const double cj = c.at(j);
            obs(layout.ampIndex(0, j), layout.ampIndex(0, j)) = cj * cj;
        }
        const Eigen::VectorXcd w = test::toEigen(v);
        const double expect = (w.adjoint() * obs * w)(0).real();
        CHECK(std::abs(observableIntensity(v, region, c, p) - expect) < 1e-10);
    }
    SECTION("out-of-range region indices are rejected") {
        CHECK_THROWS_AS(observableIntensity(v, {nn}, PiecewiseField::constant("c", 1.0), p),
                        ConfigError);
    }
}

TEST_CASE("difference operators act like stencils on fields", "[pde-discretize]") {
    Grid g;
    g.d = 1;
    g.nBitsPerAxis = {3};
    g.h = 1.0;
    BoundarySpec dirichlet;
    dirichlet.axes = {{BoundaryKind::Dirichlet, BoundaryKind::Dirichlet}};

    SECTION("forward difference of a constant field") {
        const QubitOperator d = differenceOperator(DiffScheme::Forward, 0, g, dirichlet);
        Statevector ones(3);
        for (auto& a : ones.amp) a = 1.0;
        const Statevector out = applyOperator(d, ones);
        for (int j = 0; j < 7; ++j) CHECK(std::abs(out.amp[j]) < 1e-15);
        CHECK(std::abs(out.amp[7] - Complex(-1.0)) < 1e-15);
    }
    SECTION("forward difference of a linear field") {
        const QubitOperator d = differenceOperator(DiffScheme::Forward, 0, g, dirichlet);
        Statevector lin(3);
        for (int j = 0; j < 8; ++j) lin.amp[j] = double(j);
        const Statevector out = applyOperator(d, lin);
        for (int j = 0; j < 7; ++j) CHECK(std::abs(out.amp[j] - Complex(1.0)) < 1e-15);
    }
    SECTION("wide periodic central stencil is antisymmetric") {
        BoundarySpec periodic;
        periodic.axes = {{BoundaryKind::Periodic, BoundaryKind::Periodic}};
        const Eigen::MatrixXcd d =
            test::denseOracle(differenceOperator(DiffScheme::Central4, 0, g, periodic));
        CHECK((d + d.transpose()).norm() < 1e-14);
        CHECK_THROWS_AS(differenceOperator(DiffScheme::Central4, 0, g, dirichlet), ConfigError);
    }
}
