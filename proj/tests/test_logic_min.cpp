#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "lchs/logic_min.hpp"
#include "test_support.hpp"

using namespace lchs;

namespace {

std::vector<int> coverageCounts(const std::vector<Cube>& cubes, int nBits) {
    std::vector<int> count(std::size_t(1) << nBits, 0);
    for (std::size_t j = 0; j < count.size(); ++j)
        for (const auto& c : cubes)
            if (c.covers(j)) ++count[j];
    return count;
}

std::vector<std::uint64_t> randomOnSet(std::mt19937_64& gen, int nBits, double density) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::vector<std::uint64_t> onSet;
    for (std::uint64_t j = 0; j < (std::uint64_t(1) << nBits); ++j)
        if (dist(gen) < density) onSet.push_back(j);
    return onSet;
}

} // namespace

TEST_CASE("cover of the full space is one dash cube", "[logic-min]") {
    std::vector<std::uint64_t> all;
    for (std::uint64_t j = 0; j < 16; ++j) all.push_back(j);
    const auto cubes = minimizeCover(all, 4);
    REQUIRE(cubes.size() == 1);
    CHECK(cubes[0].mask == 0);
    CHECK(cubes[0].bitsString(4) == "----");
}

TEST_CASE("shared literal is factored out", "[logic-min]") {
    const auto cubes = minimizeCover({2, 3}, 2);
    REQUIRE(cubes.size() == 1);
    CHECK(cubes[0].bitsString(2) == "1-");
}

TEST_CASE("single-cube on-sets stay single cubes", "[logic-min]") {
    const Cube seed = cubeFromString("10--1");
    std::vector<std::uint64_t> onSet;
    for (std::uint64_t j = 0; j < 32; ++j)
        if (seed.covers(j)) onSet.push_back(j);
    const auto cubes = minimizeCover(onSet, 5);
    REQUIRE(cubes.size() == 1);
    CHECK(cubes[0].mask == seed.mask);
    CHECK(cubes[0].ones == seed.ones);
}

TEST_CASE("aligned power-of-two boxes compress to one cube", "[logic-min]") {
    Grid g;
    g.d = 2;
    g.nBitsPerAxis = {4, 3};
    Box box;
    box.range = {{8, 11}, {4, 5}}; // offsets and extents both powers of two
    const auto cubes = minimizeCover(box.nodes(g), g.totalBits());
    CHECK(cubes.size() == 1);
}

TEST_CASE("cover never outnumbers the on-set and is exact", "[logic-min]") {
    auto gen = test::rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        const int nBits = 4 + int(gen() % 7);
        const auto onSet = randomOnSet(gen, nBits, 0.05 + 0.9 * double(gen() % 100) / 100.0);
        if (onSet.empty()) continue;
        const auto cubes = minimizeCover(onSet, nBits);
        CHECK(cubes.size() <= onSet.size());

        std::vector<bool> want(std::size_t(1) << nBits, false);
        for (auto j : onSet) want[j] = true;
        const auto count = coverageCounts(cubes, nBits);
        for (std::size_t j = 0; j < want.size(); ++j) {
            CHECK((count[j] > 0) == want[j]);
        }
    }
}

TEST_CASE("index out of range is rejected", "[logic-min]") {
    CHECK_THROWS_AS(minimizeCover({4}, 2), ConfigError);
}

TEST_CASE("duplicate resolution yields disjoint coverage of the same set", "[logic-min]") {
    SECTION("the overlapping pair from two literals") {
        const std::vector<Cube> in{cubeFromString("1-"), cubeFromString("-1")};
        const auto out = resolveDuplicates(in);
        const auto count = coverageCounts(out, 2);
        CHECK(count[0] == 0);
        CHECK(count[1] == 1);
        CHECK(count[2] == 1);
        CHECK(count[3] == 1);
    }
    SECTION("already-disjoint input keeps its coverage") {
        const std::vector<Cube> in{cubeFromString("1-"), cubeFromString("01")};
        const auto out = resolveDuplicates(in);
        REQUIRE(out.size() == 2);
        CHECK(coverageCounts(out, 2) == coverageCounts(in, 2));
    }
    SECTION("a single cube passes through") {
        const std::vector<Cube> in{cubeFromString("-0-")};
        const auto out = resolveDuplicates(in);
        REQUIRE(out.size() == 1);
        CHECK(out[0].mask == in[0].mask);
        CHECK(out[0].ones == in[0].ones);
    }
    SECTION("random overlapping covers") {
        auto gen = test::rng(22);
        for (int trial = 0; trial < 40; ++trial) {
            const int nBits = 3 + int(gen() % 6);
            std::vector<Cube> in;
            const int nCubes = 1 + int(gen() % 6);
            for (int c = 0; c < nCubes; ++c) {
                Cube cube;
                for (int b = 0; b < nBits; ++b) {
                    const int pick = int(gen() % 3);
                    if (pick == 0) continue;
                    cube.mask |= std::uint64_t(1) << b;
                    if (pick == 2) cube.ones |= std::uint64_t(1) << b;
                }
                in.push_back(cube);
            }
            const auto before = coverageCounts(in, nBits);
            const auto after = coverageCounts(resolveDuplicates(in), nBits);
            for (std::size_t j = 0; j < before.size(); ++j) {
                CHECK((after[j] > 0) == (before[j] > 0));
                CHECK(after[j] <= 1);
            }
        }
    }
}

TEST_CASE("heuristic cover matches exact coverage and is never smaller", "[logic-min]") {
    auto gen = test::rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const int nBits = 5 + int(gen() % 6);
        const auto onSet = randomOnSet(gen, nBits, 0.3);
        if (onSet.empty()) continue;
        const auto exact = minimizeCover(onSet, nBits);
        const auto heuristic = detail::expandIrredundant(onSet, nBits);
        CHECK(heuristic.size() >= exact.size());

        std::vector<bool> want(std::size_t(1) << nBits, false);
        for (auto j : onSet) want[j] = true;
        const auto count = coverageCounts(heuristic, nBits);
        for (std::size_t j = 0; j < want.size(); ++j) CHECK((count[j] > 0) == want[j]);
    }
}

TEST_CASE("uniform fields become a single identity term", "[logic-min]") {
    Grid g;
    g.d = 1;
    g.nBitsPerAxis = {4};
    const auto op = fieldToOperator(PiecewiseField::constant("c", 2.5), g,
                                    [](double x) { return x; });
    REQUIRE(op.terms().size() == 1);
    CHECK(op.terms()[0].factors == FactorString(4, SiteFactor::I));
    CHECK(std::abs(op.terms()[0].coef - Complex(2.5)) < 1e-15);
}

TEST_CASE("a lone cube maps to its projector string", "[logic-min]") {
    Grid g;
    g.d = 1;
    g.nBitsPerAxis = {3};
    PiecewiseField f;
    f.name = "c";
    f.defaultValue = 0.0;
    f.regions.push_back({{4, 6}, 1.75}); // bit2 = 1, bit0 = 0
    const auto op = fieldToOperator(f, g, [](double x) { return x; });
    REQUIRE(op.terms().size() == 1);
    FactorString expect{SiteFactor::P00, SiteFactor::I, SiteFactor::P11};
    CHECK(op.terms()[0].factors == expect);
    CHECK(std::abs(op.terms()[0].coef - Complex(1.75)) < 1e-15);
}

TEST_CASE("two-valued 32x32 field reconstructs exactly and compresses", "[logic-min]") {
    Grid g;
    g.d = 2;
    g.nBitsPerAxis = {5, 5};
    Box wall;
    wall.range = {{0, 7}, {8, 23}};
    PiecewiseField f;
    f.name = "rho";
    f.defaultValue = 1.0;
    f.regions.push_back({wall.nodes(g), 0.01});
    REQUIRE(f.regions[0].nodes.size() == 128);

    const auto op = fieldToOperator(f, g, [](double x) { return 1.0 / std::sqrt(x); });
    CHECK(op.terms().size() < 129);

    const Eigen::MatrixXcd dense = test::denseOracle(op);
    for (std::uint64_t j = 0; j < 1024; ++j) {
        CHECK(std::abs(dense(j, j).real() - 1.0 / std::sqrt(f.at(j))) < 1e-12);
        CHECK(std::abs(dense(j, j).imag()) < 1e-15);
    }
    CHECK((dense - Eigen::MatrixXcd(dense.diagonal().asDiagonal())).norm() < 1e-15);
}

TEST_CASE("multi-valued fields reconstruct exactly under transforms", "[logic-min]") {
    auto gen = test::rng(24);
    std::uniform_real_distribution<double> val(0.5, 4.0);
    for (int trial = 0; trial < 15; ++trial) {
        Grid g;
        g.d = 1;
        g.nBitsPerAxis = {8};
        PiecewiseField f;
        f.name = "c";
        f.defaultValue = val(gen);
        std::vector<std::uint64_t> pool;
        for (std::uint64_t j = 0; j < 256; ++j) pool.push_back(j);
        std::shuffle(pool.begin(), pool.end(), gen);
        std::size_t cursor = 0;
        for (int cls = 0; cls < 3; ++cls) {
            PiecewiseField::Region r;
            r.value = val(gen);
            const std::size_t take = 10 + gen() % 40;
            for (std::size_t k = 0; k < take && cursor < pool.size(); ++k)
                r.nodes.push_back(pool[cursor++]);
            std::sort(r.nodes.begin(), r.nodes.end());
            f.regions.push_back(std::move(r));
        }
        const auto transform = [](double x) { return 1.0 / x; };
        const auto op = fieldToOperator(f, g, transform);
        const Eigen::MatrixXcd dense = test::denseOracle(op);
        for (std::uint64_t j = 0; j < 256; ++j)
            CHECK(std::abs(dense(j, j).real() - transform(f.at(j))) < 1e-12);
    }
}

TEST_CASE("transform domain violations are reported", "[logic-min]") {
    Grid g;
    g.d = 1;
    g.nBitsPerAxis = {2};
    PiecewiseField f;
    f.name = "rho";
    f.defaultValue = 0.0;
    f.regions.push_back({{1}, 2.0});
    CHECK_THROWS_AS(fieldToOperator(f, g, [](double x) { return 1.0 / std::sqrt(x); }),
                    ConfigError);
}
