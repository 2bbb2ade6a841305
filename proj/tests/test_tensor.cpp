#include <catch2/catch_amalgamated.hpp>

#include "collab/rng.hpp"
#include "collab/tensor.hpp"

using namespace collab;

TEST_CASE("tensor shape and data length agree", "[tensor]") {
    Tensor t({2, 3, 4});
    REQUIRE(t.size() == 24);
    REQUIRE(t.rank() == 3);
    for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(t[i] == 0.0);

    REQUIRE_THROWS_AS(Tensor(Shape{}), DimensionError);
    REQUIRE_THROWS_AS(Tensor({1, 2, 3, 4, 5}), DimensionError);
    REQUIRE_THROWS_AS(Tensor({2, 0}), DimensionError);
    REQUIRE_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST_CASE("tensor indexing is row-major", "[tensor]") {
    Tensor t({2, 3});
    t.at(1, 2) = 7.0;
    REQUIRE(t[5] == 7.0);
    Tensor u({2, 2, 2});
    u.at(1, 0, 1) = 3.0;
    REQUIRE(u[5] == 3.0);
}

TEST_CASE("tensor finiteness check", "[tensor]") {
    Tensor t({2});
    REQUIRE(t.all_finite());
    t[1] = std::numeric_limits<double>::infinity();
    REQUIRE_FALSE(t.all_finite());
}

TEST_CASE("rng streams are deterministic and named substreams differ", "[tensor][rng]") {
    Rng a = Rng::substream(42, "training");
    Rng b = Rng::substream(42, "training");
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c = Rng::substream(42, "training");
    Rng d = Rng::substream(42, "selection");
    bool all_equal = true;
    for (int i = 0; i < 16; ++i) all_equal = all_equal && (c.next_u64() == d.next_u64());
    REQUIRE_FALSE(all_equal);
}

TEST_CASE("rng uniform stays in range and index covers the range", "[tensor][rng]") {
    Rng r(7);
    std::vector<bool> seen(5, false);
    for (int i = 0; i < 2000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        seen[r.index(5)] = true;
    }
    for (bool s : seen) REQUIRE(s);
    for (int i = 0; i < 200; ++i) {
        const int v = r.uniform_int(-2, 2);
        REQUIRE(v >= -2);
        REQUIRE(v <= 2);
    }
}

TEST_CASE("rng normal has roughly standard moments", "[tensor][rng]") {
    Rng r(123);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    REQUIRE(std::abs(sum / n) < 0.03);
    REQUIRE(std::abs(sq / n - 1.0) < 0.05);
}
