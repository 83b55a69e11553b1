#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "evadekit/error.hpp"
#include "evadekit/geometry.hpp"
#include "evadekit/rng.hpp"

using namespace evadekit;

namespace {

Tensor random_image(CounterRng& rng, std::size_t n, bool on_grid) {
  Tensor t({n});
  for (double& v : t.values()) v = on_grid ? static_cast<double>(rng.below(256)) / 255.0 : rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("tensor shape and data agree") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.sample(1).shape() == Shape{3});
  CHECK(argmax(std::vector<double>{1, 3, 3, 2}) == 1);
  CHECK_THROWS_AS(require_finite(Tensor::from({1.0, NAN}), "t"), DomainError);
}

TEST_CASE("counter generator is deterministic and random access") {
  CounterRng a(42), b(42);
  for (int i = 0; i < 5; ++i) CHECK(a.next_u64() == b.next_u64());
  CounterRng c(42);
  CHECK(c.at(3) == CounterRng(42, 3).next_u64());
  CHECK(CounterRng(1).next_u64() != CounterRng(2).next_u64());
  CounterRng d(9);
  for (int i = 0; i < 1000; ++i) {
    const double u = d.uniform();
    CHECK((u >= 0.0 && u < 1.0));
  }
}

TEST_CASE("epsilon_ball examples") {
  const EpsilonBall a(Tensor::from({0.9}), 0.2);
  CHECK(a.upper()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(a.lower()[0] == doctest::Approx(0.7).epsilon(1e-12));
  const EpsilonBall b(Tensor::from({0.05}), 0.1);
  CHECK(b.upper()[0] == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(b.lower()[0] == 0.0);
  const EpsilonBall c(Tensor::from({0.5}), 8.0 / 255.0);
  CHECK(std::fabs(c.upper()[0] - 0.531373) < 1e-6);
  CHECK(std::fabs(c.lower()[0] - 0.468627) < 1e-6);
  CHECK_THROWS_AS(EpsilonBall(Tensor::from({1.2}), 0.1), DomainError);
  CHECK_THROWS_AS(EpsilonBall(Tensor::from({0.5}), 1.5), DomainError);
  CHECK_THROWS_AS(EpsilonBall(Tensor::from({-0.1}), 0.1), DomainError);
}

TEST_CASE("clip_to_ball examples") {
  const EpsilonBall ball(Tensor::from({0.9, 0.9}), 0.2);
  const Tensor out = clip_to_ball(Tensor::from({1.2, 0.65}), ball);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == ball.lower()[1]);
  const Tensor inside = Tensor::from({0.8, 0.95});
  CHECK(clip_to_ball(inside, ball) == inside);
  CHECK_THROWS_AS(clip_to_ball(Tensor::from({0.5}), ball), ShapeError);
}

TEST_CASE("overrun examples") {
  // U = 1.0, L = 0.7 around x = 0.9 with eps = 0.2
  const EpsilonBall ball(Tensor::from({0.9, 0.9, 0.9}), 0.2);
  const Tensor o = overrun(Tensor::from({1.3, 0.5, 0.8}), ball);
  CHECK(o[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(o[1] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(o[2] == 0.0);
  CHECK(max_overrun(Tensor::from({0.8, 0.9, 1.0}), ball) == 0.0);
}

TEST_CASE("quantize_round examples") {
  CHECK(quantize_round(Tensor::from({0.5039}))[0] == 128.0 / 255.0);
  CHECK(quantize_round(Tensor::from({0.0}))[0] == 0.0);
  CHECK(quantize_round(Tensor::from({1.0}))[0] == 1.0);
  CHECK(quantize_round(Tensor::from({0.5}))[0] == 128.0 / 255.0);
  CHECK_THROWS_AS(quantize_round(Tensor::from({NAN})), DomainError);
}

TEST_CASE("quantize_grad_aligned examples") {
  CHECK(quantize_grad_aligned(Tensor::from({0.5}), Tensor::from({1.0}))[0] == 128.0 / 255.0);
  CHECK(quantize_grad_aligned(Tensor::from({0.5}), Tensor::from({-3.0}))[0] == 127.0 / 255.0);
  CounterRng rng(5);
  const Tensor x = random_image(rng, 64, false);
  CHECK(quantize_grad_aligned(x, Tensor({64})) == quantize_round(x));
  CHECK(is_on_grid(quantize_grad_aligned(x, random_image(rng, 64, false))));
  CHECK_THROWS_AS(quantize_grad_aligned(x, Tensor({3})), ShapeError);
}

TEST_CASE("is_on_grid examples") {
  CounterRng rng(8);
  const Tensor x = random_image(rng, 32, true);
  const EpsilonBall ball(x, 8.0 / 255.0);
  CHECK(is_on_grid(clip_to_ball(quantize_round(random_image(rng, 32, false)), ball)));
  CHECK_FALSE(is_on_grid(Tensor::from({0.5})));
  CHECK_FALSE(is_on_grid(Tensor::from({1.0 + 1e-6})));
  CHECK(is_grid_aligned(16.0 / 255.0));
  CHECK_FALSE(is_grid_aligned(0.05));
}

TEST_CASE("property: clip idempotent and overrun of clipped point is zero") {
  CounterRng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const Tensor x = random_image(rng, 16, trial % 2 == 0);
    const double eps = rng.uniform();
    const EpsilonBall ball(x, eps);
    Tensor xp({16});
    for (double& v : xp.values()) v = rng.uniform(-1.0, 2.0);
    const Tensor once = clip_to_ball(xp, ball);
    CHECK(clip_to_ball(once, ball) == once);
    CHECK(max_overrun(once, ball) == 0.0);
    const Tensor o = overrun(xp, ball);
    for (std::size_t i = 0; i < 16; ++i) {
      const bool above = xp[i] > ball.upper()[i];
      const bool below = xp[i] < ball.lower()[i];
      CHECK(!(above && below));
      if (!above && !below) CHECK(o[i] == 0.0);
      CHECK(ball.lower()[i] <= x[i]);
      CHECK(x[i] <= ball.upper()[i]);
    }
  }
}

TEST_CASE("property: eps = 0 on the grid collapses every candidate to x") {
  CounterRng rng(78);
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor x = random_image(rng, 12, true);
    const EpsilonBall ball(x, 0.0);
    Tensor xp({12});
    for (double& v : xp.values()) v = rng.uniform(-3.0, 3.0);
    CHECK(clip_to_ball(quantize_round(xp), ball) == x);
  }
}

TEST_CASE("property: round then clip on a grid-aligned ball stays on the grid") {
  CounterRng rng(79);
  for (int trial = 0; trial < 300; ++trial) {
    const Tensor x = random_image(rng, 12, true);
    const double eps = static_cast<double>(rng.below(256)) / 255.0;
    const EpsilonBall ball(x, eps);
    Tensor xp({12});
    for (double& v : xp.values()) v = rng.uniform(-1.0, 2.0);
    const Tensor q = quantize_round(xp);
    for (std::size_t i = 0; i < 12; ++i) {
      if (xp[i] >= 0.0 && xp[i] <= 1.0) CHECK(std::fabs(q[i] - xp[i]) <= 0.5 / 255.0 + 1e-15);
    }
    const Tensor out = clip_to_ball(q, ball);
    CHECK(is_on_grid(out));
    CHECK(linf_distance(out, x) <= eps + 1e-9);
  }
}
