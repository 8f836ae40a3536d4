#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "vit4lpa/error.hpp"
#include "vit4lpa/grad_check.hpp"
#include "vit4lpa/ops.hpp"
#include "vit4lpa/rng.hpp"
#include "vit4lpa/tape.hpp"
#include "vit4lpa/tensor.hpp"

using namespace vit4lpa;
using namespace vit4lpa::num;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.values_mut()) v = scale * rng.normal();
    return t;
}

}  // namespace

TEST_CASE("tensor basics and invariants") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at(1, 2) == 6.0);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);

    Tensor handle = t;
    handle[0] = 42.0;
    CHECK(t[0] == 42.0);  // handles share storage

    Tensor deep = t.clone();
    deep[0] = 7.0;
    CHECK(t[0] == 42.0);
}

TEST_CASE("matmul: identity and forced values") {
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(11);
    Tensor x = random_tensor({3, 5}, rng);
    Tensor y = matmul(nullptr, eye, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-15));

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {1, 1});
    Tensor c = matmul(nullptr, a, b);
    CHECK(c[0] == 3.0);
    CHECK(c[1] == 7.0);
}

TEST_CASE("matmul: shape error names both shapes") {
    Tensor a({2, 3});
    Tensor b({2, 3});
    try {
        matmul(nullptr, a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
    }
}

TEST_CASE("matmul: gradient matches central finite differences (5x4 * 4x3)") {
    Rng rng(42);
    Tensor a = random_tensor({5, 4}, rng);
    Tensor b = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({5, 3}, rng);  // fixed weights make the loss scalar
    auto f = [&](Tape* tape) { return sum_all(tape, mul(tape, w, matmul(tape, a, b))); };
    CHECK(grad_check(f, {a, b}, 1e-5) < 1e-5);
}

TEST_CASE("softmax: symmetry, forced values, shift invariance") {
    Tensor z({1, 4}, {0, 0, 0, 0});
    Tensor s = softmax(nullptr, z);
    for (int i = 0; i < 4; ++i) CHECK(s[i] == doctest::Approx(0.25).epsilon(1e-15));

    Tensor two({1, 2}, {0.0, std::log(3.0)});
    Tensor s2 = softmax(nullptr, two);
    CHECK(s2[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s2[1] == doctest::Approx(0.75).epsilon(1e-12));

    Rng rng(3);
    Tensor x = random_tensor({4, 6}, rng, 3.0);
    Tensor shifted = x.clone();
    for (auto& v : shifted.values_mut()) v += 17.5;
    Tensor sa = softmax(nullptr, x);
    Tensor sb = softmax(nullptr, shifted);
    for (std::size_t i = 0; i < sa.size(); ++i) {
        CHECK(std::abs(sa[i] - sb[i]) < 1e-12);
    }
}

TEST_CASE("softmax: rows are stochastic over random inputs") {
    Rng rng(9);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor x = random_tensor({5, 7}, rng, 10.0);
        Tensor s = softmax(nullptr, x);
        for (int r = 0; r < 5; ++r) {
            double sum = 0.0;
            for (int c = 0; c < 7; ++c) {
                CHECK(s.at(r, c) >= 0.0);
                sum += s.at(r, c);
            }
            CHECK(std::abs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("layer_norm: constant row, forced two-point row, recomputation") {
    Tensor gain({4}, {1, 1, 1, 1});
    Tensor bias({4}, {0, 0, 0, 0});
    Tensor constant({1, 4}, {3, 3, 3, 3});
    Tensor out = layer_norm(nullptr, constant, gain, bias);
    for (int i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.0).epsilon(1e-12));

    Tensor g2({2}, {1, 1});
    Tensor b2({2}, {0, 0});
    Tensor two({1, 2}, {1, 3});
    Tensor o2 = layer_norm(nullptr, two, g2, b2);
    CHECK(o2[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(o2[1] == doctest::Approx(1.0).epsilon(1e-4));

    // direct recomputation oracle on an arbitrary row
    Rng rng(12);
    Tensor g8 = Tensor::full({8}, 1.0);
    Tensor b8 = Tensor::zeros({8});
    Tensor x = random_tensor({1, 8}, rng, 5.0);
    Tensor o = layer_norm(nullptr, x, g8, b8);
    double mean = 0.0, var = 0.0;
    for (int i = 0; i < 8; ++i) mean += o[i];
    mean /= 8;
    for (int i = 0; i < 8; ++i) var += (o[i] - mean) * (o[i] - mean);
    var /= 8;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-3);
}

TEST_CASE("gelu: fixed points, asymptotes, monotone grid") {
    Tensor x({3}, {0.0, 10.0, -10.0});
    Tensor y = gelu(nullptr, x);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(std::abs(y[2]) < 1e-6);

    // monotone above the dip at x ~ -0.75 (gelu is not monotone globally)
    double prev = -1e9;
    for (double v = -0.65; v <= 4.0; v += 0.05) {
        Tensor g = gelu(nullptr, Tensor({1}, {v}));
        CHECK(g[0] >= prev);
        prev = g[0];
    }
}

TEST_CASE("backward: sum, squares, fan-out accumulation, non-scalar loss") {
    {
        Tensor x({3}, {5, -1, 2});
        x.set_requires_grad(true);
        Tape tape;
        Tensor loss = sum_all(&tape, x);
        tape.backward(loss);
        for (int i = 0; i < 3; ++i) CHECK(x.grad()[i] == 1.0);
    }
    {
        Tensor x({2}, {1, 2});
        x.set_requires_grad(true);
        Tape tape;
        Tensor loss = sum_all(&tape, mul(&tape, x, x));
        tape.backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(2.0));
        CHECK(x.grad()[1] == doctest::Approx(4.0));
    }
    {
        // fan-out: loss = sum((x+x) * x) = sum(2 x^2), grad = 4x
        Tensor x({2}, {1.5, -2.0});
        x.set_requires_grad(true);
        Tape tape;
        Tensor loss = sum_all(&tape, mul(&tape, add(&tape, x, x), x));
        tape.backward(loss);
        CHECK(x.grad()[0] == doctest::Approx(6.0));
        CHECK(x.grad()[1] == doctest::Approx(-8.0));
        auto f = [&](Tape* t) { return sum_all(t, mul(t, add(t, x, x), x)); };
        CHECK(grad_check(f, {x}, 1e-5) < 1e-6);
    }
    {
        Tensor x({2, 2});
        x.set_requires_grad(true);
        Tape tape;
        Tensor y = scale(&tape, x, 2.0);
        CHECK_THROWS_AS(tape.backward(y), ContractError);
    }
}

TEST_CASE("backward: unused parameters keep zero gradients") {
    Tensor used({2}, {1, 2});
    Tensor unused({3}, {4, 5, 6});
    used.set_requires_grad(true);
    unused.set_requires_grad(true);
    used.ensure_grad();
    unused.ensure_grad();
    Tape tape;
    Tensor loss = sum_all(&tape, used);
    tape.backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(unused.grad()[i] == 0.0);
}

TEST_CASE("grad_check: quadratic form is exact to roundoff") {
    Rng rng(5);
    Tensor x = random_tensor({6}, rng);
    auto f = [&](Tape* t) { return sum_all(t, mul(t, x, x)); };
    CHECK(grad_check(f, {x}, 1e-4) < 1e-8);
}

TEST_CASE("grad_check: eps outside range rejected") {
    Tensor x({1}, {1.0});
    auto f = [&](Tape* t) { return sum_all(t, x); };
    CHECK_THROWS_AS(grad_check(f, {x}, 1e-8), ContractError);
    CHECK_THROWS_AS(grad_check(f, {x}, 1e-2), ContractError);
}

TEST_CASE("grad_check: corrupted backward rule is detected") {
    Rng rng(8);
    Tensor x = random_tensor({4}, rng);
    // y = 3x recorded with a wrong backward rule (uses factor 1 instead of 3)
    auto corrupted = [&](Tape* tape) {
        Tensor out(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = 3.0 * x[i];
        if (tape) {
            out.set_requires_grad(true);
            tape->record({{x}, out, [](const TapeNode& nd) {
                Tensor t = nd.inputs[0];
                auto g = t.grad_mut();
                const auto gout = nd.output.grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];  // wrong
            }});
        }
        return sum_all(tape, out);
    };
    CHECK(grad_check(corrupted, {x}, 1e-5) > 1e-2);
}

TEST_CASE("every composite op passes grad_check at 10 random points") {
    Rng rng(1234);
    for (int rep = 0; rep < 10; ++rep) {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({3, 4}, rng);
        Tensor m = random_tensor({4, 5}, rng);
        Tensor w35 = random_tensor({3, 5}, rng);
        Tensor v = random_tensor({5}, rng);
        Tensor gain = random_tensor({4}, rng, 0.5);
        Tensor bias = random_tensor({4}, rng, 0.5);
        for (auto& g : gain.values_mut()) g += 1.0;  // keep gains away from zero

        auto check = [&](const GradFn& f, std::vector<Tensor> point) {
            CHECK(grad_check(f, std::move(point), 1e-5) < 1e-4);
        };

        check([&](Tape* t) { return sum_all(t, add(t, a, b)); }, {a, b});
        check([&](Tape* t) { return sum_all(t, sub(t, a, b)); }, {a, b});
        check([&](Tape* t) { return sum_all(t, mul(t, a, b)); }, {a, b});
        check([&](Tape* t) { return sum_all(t, scale(t, a, -1.7)); }, {a});
        check([&](Tape* t) { return sum_all(t, mul(t, w35, matmul(t, a, m))); }, {a, m, w35});
        check([&](Tape* t) { return sum_all(t, add_row_vector(t, m, v)); }, {m, v});
        check([&](Tape* t) { return sum_all(t, mul(t, a, softmax(t, a))); }, {a});
        check([&](Tape* t) { return sum_all(t, mul(t, b, layer_norm(t, a, gain, bias))); },
              {a, gain, bias});
        check([&](Tape* t) { return sum_all(t, gelu(t, a)); }, {a});
        check([&](Tape* t) { return sum_all(t, sigmoid(t, a)); }, {a});
        check([&](Tape* t) { return sum_all(t, mul(t, a, transpose(t, transpose(t, a)))); }, {a});
        check([&](Tape* t) { return sum_all(t, reshape(t, a, {4, 3})); }, {a});
        check([&](Tape* t) { return mean_all(t, mul(t, a, a)); }, {a});
        check([&](Tape* t) { return sum_all(t, slice_rows(t, a, 1, 3)); }, {a});
        check([&](Tape* t) { return sum_all(t, mul(t, slice_cols(t, a, 1, 3), slice_cols(t, b, 0, 2))); },
              {a, b});
        check([&](Tape* t) { return sum_all(t, concat_rows(t, {a, b})); }, {a, b});
        check([&](Tape* t) { return sum_all(t, mul(t, concat_cols(t, {a, b}), concat_cols(t, {b, a}))); },
              {a, b});
        check([&](Tape* t) { return sum_all(t, gather_rows(t, m, {0, 2, 2, 1})); }, {m});

        Tensor labels({3, 4});
        for (auto& l : labels.values_mut()) l = rng.bernoulli(0.5) ? 1.0 : 0.0;
        check([&](Tape* t) { return bce_with_logits(t, a, labels); }, {a});

        // dropout with a reseeded generator is deterministic per evaluation
        check(
            [&](Tape* t) {
                Rng drop_rng(777);
                return sum_all(t, dropout(t, a, 0.4, true, drop_rng));
            },
            {a});
    }
}

TEST_CASE("dropout: identity in eval mode or at p=0, inverted scaling in train mode") {
    Rng rng(21);
    Tensor x = random_tensor({10, 10}, rng);
    Rng r1(5);
    Tensor eval_out = dropout(nullptr, x, 0.5, false, r1);
    CHECK(eval_out.data_ptr() == x.data_ptr());
    Rng r2(5);
    Tensor p0 = dropout(nullptr, x, 0.0, true, r2);
    CHECK(p0.data_ptr() == x.data_ptr());

    Rng r3(5);
    Tensor train_out = dropout(nullptr, x, 0.5, true, r3);
    int kept = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (train_out[i] != 0.0) {
            CHECK(train_out[i] == doctest::Approx(2.0 * x[i]));
            ++kept;
        }
    }
    CHECK(kept > 20);
    CHECK(kept < 80);
}

TEST_CASE("determinism: same seed gives bit-identical forward and gradients") {
    auto run = [](std::vector<double>& values, std::vector<double>& grads) {
        Rng rng(99);
        Tensor a = random_tensor({4, 4}, rng);
        Tensor w = random_tensor({4, 4}, rng);
        a.set_requires_grad(true);
        w.set_requires_grad(true);
        Tape tape;
        Tensor h = gelu(&tape, matmul(&tape, a, w));
        Tensor loss = mean_all(&tape, mul(&tape, h, h));
        tape.backward(loss);
        values.assign(h.values().begin(), h.values().end());
        values.push_back(loss[0]);
        grads.assign(a.grad().begin(), a.grad().end());
        grads.insert(grads.end(), w.grad().begin(), w.grad().end());
    };
    std::vector<double> v1, g1, v2, g2;
    run(v1, g1);
    run(v2, g2);
    CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("forward ops produce no NaN on finite inputs") {
    Rng rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor x = random_tensor({6, 8}, rng, 50.0);  // large magnitudes
        Tensor g = Tensor::full({8}, 1.0);
        Tensor b = Tensor::zeros({8});
        for (const Tensor& t :
             {softmax(nullptr, x), layer_norm(nullptr, x, g, b), gelu(nullptr, x),
              sigmoid(nullptr, x)}) {
            for (double v : t.values()) CHECK(std::isfinite(v));
        }
    }
}
