#include <doctest.h>

#include <cmath>
#include <limits>

#include "vit4lpa/adam.hpp"
#include "vit4lpa/error.hpp"
#include "vit4lpa/ops.hpp"
#include "vit4lpa/tape.hpp"

using namespace vit4lpa;
using namespace vit4lpa::num;

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Tensor w({3}, {1.0, -2.0, 0.5});
    w.set_requires_grad(true);
    w.ensure_grad();  // all zeros
    std::vector<NamedTensor> params{{"w", w}};
    AdamState state;
    adam_step(params, state);
    CHECK(w[0] == 1.0);
    CHECK(w[1] == -2.0);
    CHECK(w[2] == 0.5);
    CHECK(state.step_count() == 1);
}

TEST_CASE("adam: first step moves by -lr * sign(grad)") {
    Tensor w({2}, {0.0, 0.0});
    w.set_requires_grad(true);
    auto g = w.grad_mut();
    g[0] = 0.37;
    g[1] = -1200.0;
    std::vector<NamedTensor> params{{"w", w}};
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;
    AdamState state(cfg);
    adam_step(params, state);
    CHECK(w[0] == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(w[1] == doctest::Approx(1e-3).epsilon(1e-6));
}

TEST_CASE("adam: 100 steps on (w-3)^2 converge near 3 from 0 at lr=0.1") {
    Tensor w({1}, {0.0});
    w.set_requires_grad(true);
    std::vector<NamedTensor> params{{"w", w}};
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    AdamState state(cfg);
    for (int i = 0; i < 100; ++i) {
        w.zero_grad();
        w.grad_mut()[0] = 2.0 * (w[0] - 3.0);
        adam_step(params, state);
    }
    CHECK(std::abs(w[0] - 3.0) < 0.1);
    CHECK(state.step_count() == 100);
}

TEST_CASE("adam: NaN gradient aborts atomically and names the parameter") {
    Tensor a({2}, {1.0, 1.0});
    Tensor b({2}, {2.0, 2.0});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    a.grad_mut()[0] = 1.0;
    b.grad_mut()[1] = std::numeric_limits<double>::quiet_NaN();
    std::vector<NamedTensor> params{{"alpha", a}, {"beta", b}};
    AdamState state;
    try {
        adam_step(params, state);
        FAIL("expected Error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("beta") != std::string::npos);
    }
    // atomic: nothing moved, no step consumed
    CHECK(a[0] == 1.0);
    CHECK(b[0] == 2.0);
    CHECK(state.step_count() == 0);
}

TEST_CASE("adam: moment buffers match parameter length") {
    Tensor w({4}, {0, 0, 0, 0});
    w.set_requires_grad(true);
    w.grad_mut()[2] = 1.0;
    std::vector<NamedTensor> params{{"w", w}};
    AdamState state;
    adam_step(params, state);
    CHECK(state.first_moment("w").size() == 4);
    CHECK(state.second_moment("w").size() == 4);
    CHECK(state.first_moment("other").empty());
}
