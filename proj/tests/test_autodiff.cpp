#include <catch2/catch_amalgamated.hpp>

#include "collab/autodiff.hpp"
#include "collab/grad_check.hpp"
#include "collab/rng.hpp"

using namespace collab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

// Reduce any value to a scalar: dot of the flattened tensor with ones.
Value sum_all(Tape& t, Value v) {
    const std::size_t n = t.value(v).size();
    return t.dot(t.reshape(v, {n}), t.input(Tensor::full({n}, 1.0)));
}

// Independent sliding-window convolution oracle; structured around explicit
// window coordinates rather than a padded buffer.
Tensor conv_oracle(const Tensor& x, const Tensor& k, const Tensor& b, int stride) {
    const std::size_t Ci = x.extent(0), H = x.extent(1), W = x.extent(2), Co = k.extent(0);
    const std::size_t Ho = (H + stride - 1) / stride, Wo = (W + stride - 1) / stride;
    Tensor y({Co, Ho, Wo});
    for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                double acc = b[co];
                for (std::size_t ci = 0; ci < Ci; ++ci)
                    for (int u = 0; u < 3; ++u)
                        for (int v = 0; v < 3; ++v) {
                            const long iy = static_cast<long>(oy) * stride + u - 1;
                            const long ix = static_cast<long>(ox) * stride + v - 1;
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) ||
                                ix >= static_cast<long>(W))
                                continue;
                            acc += k[((co * Ci + ci) * 3 + u) * 3 + v] *
                                   x.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        }
                y.at(co, oy, ox) = acc;
            }
    return y;
}

}  // namespace

TEST_CASE("linear forward matches hand-computed values", "[autodiff]") {
    Tape t;
    SECTION("identity weights pass input through") {
        Value y = t.linear(t.input(Tensor({1, 2}, {1, 2})),
                           t.input(Tensor({2, 2}, {1, 0, 0, 1})), t.input(Tensor({2}, {0, 0})));
        REQUIRE(t.value(y)[0] == 1.0);
        REQUIRE(t.value(y)[1] == 2.0);
    }
    SECTION("zero input passes bias") {
        Value y = t.linear(t.input(Tensor({1, 2}, {0, 0})),
                           t.input(Tensor({2, 2}, {5, -3, 2, 9})), t.input(Tensor({2}, {3, 4})));
        REQUIRE(t.value(y)[0] == 3.0);
        REQUIRE(t.value(y)[1] == 4.0);
    }
    SECTION("direct matrix-product oracle") {
        // [1,1] * [[2,3],[4,5]] + [1,1] = [7,9]
        Value y = t.linear(t.input(Tensor({1, 2}, {1, 1})),
                           t.input(Tensor({2, 2}, {2, 3, 4, 5})), t.input(Tensor({2}, {1, 1})));
        REQUIRE(t.value(y)[0] == 7.0);
        REQUIRE(t.value(y)[1] == 9.0);
    }
    SECTION("shape mismatch is a dimension error") {
        REQUIRE_THROWS_AS(t.linear(t.input(Tensor({1, 3})), t.input(Tensor({2, 2})),
                                   t.input(Tensor({2}))),
                          DimensionError);
    }
}

TEST_CASE("conv3x3 matches identities and the sliding-window oracle", "[autodiff]") {
    SECTION("center-delta kernel is the identity") {
        Tape t;
        Tensor k({1, 1, 3, 3});
        k.vec()[4] = 1.0;  // center tap
        Value y = t.conv3x3(t.input(Tensor::full({1, 3, 3}, 1.0)), t.input(k),
                            t.input(Tensor({1})), 1);
        for (std::size_t i = 0; i < 9; ++i) REQUIRE(t.value(y)[i] == 1.0);
    }
    SECTION("zero input broadcasts the bias") {
        Tape t;
        Rng rng(3);
        Value y = t.conv3x3(t.input(Tensor({2, 4, 4})), t.input(random_tensor({3, 2, 3, 3}, rng)),
                            t.input(Tensor({3}, {1.5, -2.0, 0.5})), 1);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t i = 0; i < 16; ++i)
                REQUIRE(t.value(y)[c * 16 + i] == t.value(y)[c * 16]);
        REQUIRE(t.value(y)[0] == 1.5);
    }
    SECTION("stride 2 against the oracle") {
        Rng rng(11);
        for (int trial = 0; trial < 5; ++trial) {
            Tensor x = random_tensor({2, 4, 4}, rng);
            Tensor k = random_tensor({2, 2, 3, 3}, rng);
            Tensor b = random_tensor({2}, rng);
            Tape t;
            Value y = t.conv3x3(t.input(x), t.input(k), t.input(b), 2);
            Tensor expect = conv_oracle(x, k, b, 2);
            REQUIRE(t.value(y).shape() == Shape{2, 2, 2});
            for (std::size_t i = 0; i < expect.size(); ++i)
                REQUIRE_THAT(t.value(y)[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
        }
    }
    SECTION("stride 1 against the oracle, odd extents") {
        Rng rng(12);
        Tensor x = random_tensor({1, 5, 3}, rng);
        Tensor k = random_tensor({2, 1, 3, 3}, rng);
        Tensor b = random_tensor({2}, rng);
        Tape t;
        Value y = t.conv3x3(t.input(x), t.input(k), t.input(b), 1);
        Tensor expect = conv_oracle(x, k, b, 1);
        REQUIRE(t.value(y).shape() == expect.shape());
        for (std::size_t i = 0; i < expect.size(); ++i)
            REQUIRE_THAT(t.value(y)[i], Catch::Matchers::WithinAbs(expect[i], 1e-12));
    }
    SECTION("invalid stride is a configuration error") {
        Tape t;
        REQUIRE_THROWS_AS(t.conv3x3(t.input(Tensor({1, 4, 4})), t.input(Tensor({1, 1, 3, 3})),
                                    t.input(Tensor({1})), 3),
                          ConfigError);
    }
}

TEST_CASE("elementwise and pooling ops", "[autodiff]") {
    Tape t;
    SECTION("relu clamps negatives") {
        Value y = t.relu(t.input(Tensor({2}, {-1, 2})));
        REQUIRE(t.value(y)[0] == 0.0);
        REQUIRE(t.value(y)[1] == 2.0);
    }
    SECTION("global average pool of a constant map") {
        Value y = t.global_avg_pool(t.input(Tensor::full({3, 4, 4}, 2.5)));
        for (std::size_t c = 0; c < 3; ++c) REQUIRE(t.value(y)[c] == 2.5);
    }
    SECTION("softmax of a constant row is uniform") {
        Value y = t.softmax_rows(t.input(Tensor({4})));
        for (std::size_t i = 0; i < 4; ++i) REQUIRE(t.value(y)[i] == 0.25);
    }
    SECTION("nearest upsample repeats each cell") {
        Value y = t.upsample2x(t.input(Tensor({1, 2, 2}, {1, 2, 3, 4})));
        const Tensor& v = t.value(y);
        REQUIRE(v.shape() == Shape{1, 4, 4});
        REQUIRE(v.at(0, 0, 0) == 1.0);
        REQUIRE(v.at(0, 0, 1) == 1.0);
        REQUIRE(v.at(0, 3, 3) == 4.0);
        REQUIRE(v.at(0, 2, 1) == 3.0);
    }
}

TEST_CASE("concat then channel-slice recovers inputs bit-exactly", "[autodiff]") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = random_tensor({2, 3, 3}, rng);
        Tensor b = random_tensor({3, 3, 3}, rng);
        Tape t;
        Value y = t.concat_channels({t.input(a), t.input(b)});
        const Tensor& v = t.value(y);
        REQUIRE(v.shape() == Shape{5, 3, 3});
        for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(v[i] == a[i]);
        for (std::size_t i = 0; i < b.size(); ++i) REQUIRE(v[a.size() + i] == b[i]);
    }
    Tape t;
    REQUIRE_THROWS_AS(t.concat_channels({t.input(Tensor({1, 2, 2})), t.input(Tensor({1, 3, 3}))}),
                      DimensionError);
}

TEST_CASE("forward passes are deterministic", "[autodiff]") {
    Rng rng(31);
    Tensor x = random_tensor({2, 8, 8}, rng);
    Tensor k = random_tensor({4, 2, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    auto run = [&] {
        Tape t;
        Value y = t.relu(t.conv3x3(t.input(x), t.input(k), t.input(b), 2));
        return t.value(y);
    };
    const Tensor first = run();
    const Tensor second = run();
    REQUIRE(first == second);
}

TEST_CASE("backward populates gradients and accumulates additively", "[autodiff]") {
    ParamStore ps;
    Rng rng(41);
    ps.create("w", {3, 2}) = random_tensor({3, 2}, rng);
    Tensor x = random_tensor({1, 3}, rng);

    SECTION("dL/dW of sum(xW) is x^T broadcast over columns") {
        Tape t;
        Value y = t.linear(t.input(x), t.param(ps, "w"), t.input(Tensor({2})));
        t.backward(sum_all(t, y));
        const Tensor& g = ps.grad("w");
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                REQUIRE_THAT(g.at(i, j), Catch::Matchers::WithinAbs(x[i], 1e-15));
    }
    SECTION("parameters outside the graph keep exactly zero gradient") {
        ps.create("unused", {4}) = random_tensor({4}, rng);
        Tape t;
        Value y = t.linear(t.input(x), t.param(ps, "w"), t.input(Tensor({2})));
        t.backward(sum_all(t, y));
        for (std::size_t i = 0; i < 4; ++i) REQUIRE(ps.grad("unused")[i] == 0.0);
    }
    SECTION("two backward calls double stored gradients exactly") {
        Tape t;
        Value y = t.linear(t.input(x), t.param(ps, "w"), t.input(Tensor({2})));
        Value loss = sum_all(t, y);
        t.backward(loss);
        const Tensor once = ps.grad("w");
        t.backward(loss);
        for (std::size_t i = 0; i < once.size(); ++i)
            REQUIRE(ps.grad("w")[i] == 2.0 * once[i]);
        ps.zero_grads();
        for (std::size_t i = 0; i < once.size(); ++i) REQUIRE(ps.grad("w")[i] == 0.0);
    }
}

TEST_CASE("backward before any forward is a state error", "[autodiff]") {
    Tape t;
    REQUIRE_THROWS_AS(t.backward(Value{}), StateError);
    Value v = t.input(Tensor({2, 2}));
    REQUIRE_THROWS_AS(t.backward(v), DimensionError);  // non-scalar root
    REQUIRE_THROWS_AS(t.backward(Value{57}), StateError);
    REQUIRE_THROWS_AS(t.grad(v), StateError);  // grad before backward
}

TEST_CASE("finite differences validate every layer type", "[autodiff]") {
    Rng seeds(5150);
    struct Case {
        const char* name;
        std::function<void(Tape&, ParamStore&)> build_params;
        std::function<Value(Tape&, ParamStore&)> forward;
    };

    auto check = [](const char* name, auto make_params, auto forward) {
        Rng rng(std::hash<std::string>{}(name) & 0xffff);
        for (int seed = 0; seed < 10; ++seed) {
            ParamStore ps;
            make_params(ps, rng);
            LossFn loss = [&](bool with_grads) {
                Tape t;
                Value l = forward(t, ps);
                if (with_grads) t.backward(l);
                return t.value(l)[0];
            };
            Rng pick(seed);
            const double err = finite_diff_check(ps, loss, 1e-5, pick);
            INFO(name << " seed " << seed);
            REQUIRE(err <= 1e-4);
        }
    };

    check(
        "linear",
        [](ParamStore& ps, Rng& rng) {
            ps.create("x", {2, 3}) = random_tensor({2, 3}, rng);
            ps.create("w", {3, 4}) = random_tensor({3, 4}, rng);
            ps.create("b", {4}) = random_tensor({4}, rng);
        },
        [](Tape& t, ParamStore& ps) {
            return sum_all(t, t.tanh_op(t.linear(t.param(ps, "x"), t.param(ps, "w"),
                                                 t.param(ps, "b"))));
        });

    check(
        "conv3x3-stride1",
        [](ParamStore& ps, Rng& rng) {
            ps.create("x", {2, 4, 4}) = random_tensor({2, 4, 4}, rng);
            ps.create("k", {3, 2, 3, 3}) = random_tensor({3, 2, 3, 3}, rng);
            ps.create("b", {3}) = random_tensor({3}, rng);
        },
        [](Tape& t, ParamStore& ps) {
            return sum_all(t, t.tanh_op(t.conv3x3(t.param(ps, "x"), t.param(ps, "k"),
                                                  t.param(ps, "b"), 1)));
        });

    check(
        "conv3x3-stride2-relu-pool",
        [](ParamStore& ps, Rng& rng) {
            ps.create("x", {2, 5, 5}) = random_tensor({2, 5, 5}, rng);
            ps.create("k", {3, 2, 3, 3}) = random_tensor({3, 2, 3, 3}, rng);
            ps.create("b", {3}) = random_tensor({3}, rng, 0.3);
        },
        [](Tape& t, ParamStore& ps) {
            Value y = t.relu(t.conv3x3(t.param(ps, "x"), t.param(ps, "k"), t.param(ps, "b"), 2));
            return sum_all(t, t.global_avg_pool(y));
        });

    check(
        "upsample-concat",
        [](ParamStore& ps, Rng& rng) {
            ps.create("a", {2, 2, 2}) = random_tensor({2, 2, 2}, rng);
            ps.create("b", {1, 4, 4}) = random_tensor({1, 4, 4}, rng);
        },
        [](Tape& t, ParamStore& ps) {
            Value up = t.upsample2x(t.param(ps, "a"));
            Value cat = t.concat_channels({up, t.param(ps, "b")});
            return sum_all(t, t.tanh_op(cat));
        });

    check(
        "softmax-weighted-sum",
        [](ParamStore& ps, Rng& rng) {
            ps.create("scores", {3}) = random_tensor({3}, rng, 2.0);
            ps.create("m0", {2, 2, 2}) = random_tensor({2, 2, 2}, rng);
            ps.create("m1", {2, 2, 2}) = random_tensor({2, 2, 2}, rng);
            ps.create("m2", {2, 2, 2}) = random_tensor({2, 2, 2}, rng);
        },
        [](Tape& t, ParamStore& ps) {
            Value w = t.softmax_rows(t.param(ps, "scores"));
            Value fused = t.weighted_sum(
                w, {t.param(ps, "m0"), t.param(ps, "m1"), t.param(ps, "m2")});
            return sum_all(t, t.tanh_op(fused));
        });

    check(
        "matvec-dot-add-scale",
        [](ParamStore& ps, Rng& rng) {
            ps.create("w", {3, 4}) = random_tensor({3, 4}, rng);
            ps.create("u", {4}) = random_tensor({4}, rng);
            ps.create("v", {3}) = random_tensor({3}, rng);
        },
        [](Tape& t, ParamStore& ps) {
            Value y = t.matvec(t.param(ps, "w"), t.param(ps, "u"));
            Value s = t.add(t.tanh_op(y), t.param(ps, "v"));
            return t.scale(t.dot(s, t.param(ps, "v")), 0.7);
        });

    check(
        "cross-entropy",
        [](ParamStore& ps, Rng& rng) {
            ps.create("logits", {3, 2, 2}) = random_tensor({3, 2, 2}, rng, 2.0);
        },
        [](Tape& t, ParamStore& ps) {
            LabelGrid labels(2, 2);
            labels.at(0, 0) = 0;
            labels.at(0, 1) = 2;
            labels.at(1, 0) = 1;
            labels.at(1, 1) = 2;
            return t.softmax_cross_entropy(t.param(ps, "logits"), labels);
        });

    (void)seeds;
}

TEST_CASE("finite_diff_check validates its inputs", "[autodiff]") {
    ParamStore ps;
    ps.create("w", {2});
    Rng rng(1);
    LossFn constant = [](bool) { return 5.0; };
    // Constant function: both gradients zero, error exactly 0.
    REQUIRE(finite_diff_check(ps, constant, 1e-5, rng) == 0.0);
    REQUIRE_THROWS_AS(finite_diff_check(ps, constant, 1e-2, rng), ConfigError);
    REQUIRE_THROWS_AS(finite_diff_check(ps, constant, 1e-8, rng), ConfigError);
}
