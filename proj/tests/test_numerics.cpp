#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "sctc/autodiff.hpp"
#include "sctc/error.hpp"
#include "sctc/layers.hpp"
#include "sctc/optim.hpp"
#include "test_util.hpp"

using namespace sctc;
using testing::fd_max_rel_error;
using testing::make_param;
using testing::random_tensor;
using testing::weighted_sum;

namespace {

constexpr double kOpTol = 1e-6;
constexpr std::uint64_t kSeeds[] = {7, 8, 9};

Tensor positive_tensor(Shape shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("tensor shape and data agree") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), DimensionError);
  CHECK(Tensor::scalar(4).item() == 4);
  CHECK(Tensor({2, 2, 3}).rows() == 4);
}

TEST_CASE("linear on hand examples") {
  Tape tape;
  Var x = tape.constant(Tensor::matrix({{1, 0}}));
  Var w = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b = tape.constant(Tensor::vector({0, 0}));
  CHECK(linear(x, w, b).value() == Tensor::matrix({{1, 0}}));

  Var x2 = tape.constant(Tensor::matrix({{1, 2}}));
  Var w2 = tape.constant(Tensor::matrix({{1}, {1}}));
  Var b2 = tape.constant(Tensor::vector({1}));
  CHECK(linear(x2, w2, b2).value() == Tensor::matrix({{4}}));

  Var bad = tape.constant(Tensor::matrix({{1, 2, 3}}));
  CHECK_THROWS_AS(linear(bad, w2, b2), DimensionError);
}

TEST_CASE("linear gradient matches finite differences") {
  for (std::uint64_t seed : kSeeds) {
    std::mt19937_64 rng(seed);
    Parameter x = make_param("x", random_tensor({3, 4}, rng));
    Parameter w = make_param("w", random_tensor({4, 2}, rng));
    Parameter b = make_param("b", random_tensor({2}, rng));
    const double err = fd_max_rel_error({&x, &w, &b}, [&](Tape& t) {
      return weighted_sum(linear(t.param(x), t.param(w), t.param(b)), seed);
    });
    CHECK(err < kOpTol);
  }
}

TEST_CASE("elementwise and reduction ops on hand examples") {
  Tape tape;
  Var a = tape.constant(Tensor::vector({1, 2, 3}));
  Var b = tape.constant(Tensor::vector({0, 1, 2}));
  CHECK(hadamard(a, b).value() == Tensor::vector({0, 2, 6}));
  CHECK(softmax(tape.constant(Tensor::vector({0, 0}))).value() == Tensor::vector({0.5, 0.5}));
  CHECK(sum(a).value().item() == 6);
  CHECK(mean(a).value().item() == 2);
  CHECK(relu(tape.constant(Tensor::vector({-1, 0, 2}))).value() == Tensor::vector({0, 0, 2}));
  CHECK(sigmoid(tape.constant(Tensor::scalar(0))).value().item() == 0.5);
  CHECK(concat({a, b}).value() == Tensor::vector({1, 2, 3, 0, 1, 2}));
  Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(matmul(m, m).value() == Tensor::matrix({{7, 10}, {15, 22}}));
  CHECK_THROWS_AS(hadamard(a, m), DimensionError);
  CHECK_THROWS_AS(matmul(m, tape.constant(Tensor::matrix({{1, 2, 3}}))), DimensionError);
}

TEST_CASE("softmax rows sum to one for large logits") {
  Tape tape;
  Var s = softmax(tape.constant(Tensor::matrix({{1000, 1001, 999}, {-5, 0, 5}})));
  for (std::size_t r = 0; r < 2; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 3; ++c) total += s.value().at(r, c);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("each op passes the finite-difference check") {
  for (std::uint64_t seed : kSeeds) {
    CAPTURE(seed);
    std::mt19937_64 rng(seed);
    Parameter a = make_param("a", random_tensor({3, 4}, rng));
    Parameter b = make_param("b", random_tensor({3, 4}, rng));
    Parameter c = make_param("c", random_tensor({4, 2}, rng));
    Parameter v = make_param("v", random_tensor({4}, rng));
    Parameter pos = make_param("pos", positive_tensor({3, 4}, rng));

    auto check = [&](const char* name, std::vector<Parameter*> ps, auto&& f) {
      CAPTURE(name);
      CHECK(fd_max_rel_error(ps, [&](Tape& t) { return weighted_sum(f(t), seed); }) < kOpTol);
    };
    check("add", {&a, &b}, [&](Tape& t) { return add(t.param(a), t.param(b)); });
    check("sub", {&a, &b}, [&](Tape& t) { return sub(t.param(a), t.param(b)); });
    check("hadamard", {&a, &b}, [&](Tape& t) { return hadamard(t.param(a), t.param(b)); });
    check("scale", {&a}, [&](Tape& t) { return scale(t.param(a), -1.7); });
    check("add_bias", {&a, &v}, [&](Tape& t) { return add_bias(t.param(a), t.param(v)); });
    check("matmul", {&a, &c}, [&](Tape& t) { return matmul(t.param(a), t.param(c)); });
    check("transpose", {&a}, [&](Tape& t) { return transpose(t.param(a)); });
    check("relu", {&a}, [&](Tape& t) { return relu(t.param(a)); });
    check("sigmoid", {&a}, [&](Tape& t) { return sigmoid(t.param(a)); });
    check("abs", {&a}, [&](Tape& t) { return abs(t.param(a)); });
    check("softmax", {&a}, [&](Tape& t) { return softmax(t.param(a)); });
    check("concat", {&a, &b}, [&](Tape& t) { return concat({t.param(a), t.param(b)}); });
    check("stack_rows", {&a, &b}, [&](Tape& t) { return stack_rows({t.param(a), t.param(b)}); });
    const std::size_t rows[] = {2, 0, 2};
    check("gather_rows", {&a}, [&](Tape& t) { return gather_rows(t.param(a), rows); });
    check("slice", {&a}, [&](Tape& t) { return slice(t.param(a), 1, 2, 1, 3); });
    check("reshape", {&a}, [&](Tape& t) { return reshape(t.param(a), {2, 6}); });
    check("layer_norm", {&a, &v}, [&](Tape& t) {
      return layer_norm(t.param(a), t.param(v), t.param(v));
    });
    check("sum", {&a}, [&](Tape& t) { return scale(sum(t.param(a)), 1.0); });
    check("mean", {&a}, [&](Tape& t) { return mean(hadamard(t.param(a), t.param(a))); });
    check("focal_loss", {&pos}, [&](Tape& t) {
      Tensor y({3, 4});
      for (std::size_t i = 0; i < y.size(); i += 3) y[i] = 1;
      return focal_loss(t.param(pos), y);
    });
  }
}

TEST_CASE("layer_norm gain and shift gradients") {
  std::mt19937_64 rng(7);
  Parameter x = make_param("x", random_tensor({3, 5}, rng));
  Parameter g = make_param("g", random_tensor({5}, rng));
  Parameter s = make_param("s", random_tensor({5}, rng));
  CHECK(fd_max_rel_error({&x, &g, &s}, [&](Tape& t) {
          return weighted_sum(layer_norm(t.param(x), t.param(g), t.param(s)), 3);
        }) < kOpTol);
}

TEST_CASE("mlp examples") {
  std::mt19937_64 rng(1);
  ParameterStore store;
  Mlp one = Mlp::create(store, "one", {2, 2}, rng);
  one.layers[0].weight->value = Tensor::matrix({{1, 0}, {0, 1}});
  one.layers[0].bias->value = Tensor::vector({0, 0});
  Tape tape;
  Var x = tape.constant(Tensor::matrix({{3, -4}}));
  CHECK(mlp(tape, x, one).value() == Tensor::matrix({{3, -4}}));

  // Layer 1 produces [3, -4]; relu zeroes the negative entry before layer 2.
  Mlp two = Mlp::create(store, "two", {2, 2, 1}, rng);
  two.layers[0].weight->value = Tensor::matrix({{1, 0}, {0, 1}});
  two.layers[0].bias->value = Tensor::vector({0, 0});
  two.layers[1].weight->value = Tensor::matrix({{1}, {1}});
  two.layers[1].bias->value = Tensor::vector({0});
  CHECK(mlp(tape, x, two).value() == Tensor::matrix({{3}}));

  CHECK_THROWS_AS(mlp(tape, x, Mlp{}), ConfigError);
  CHECK_THROWS_AS(Mlp::create(store, "bad", {4}, rng), ConfigError);
}

TEST_CASE("mlp gradient matches finite differences") {
  for (std::uint64_t seed : kSeeds) {
    std::mt19937_64 rng(seed);
    ParameterStore store;
    Mlp net = Mlp::create(store, "net", {3, 5, 2}, rng);
    Parameter x = make_param("x", random_tensor({4, 3}, rng));
    std::vector<Parameter*> ps{&x};
    for (const auto& p : store) ps.push_back(p.get());
    CHECK(fd_max_rel_error(ps, [&](Tape& t) {
            return weighted_sum(mlp(t, t.param(x), net), seed);
          }) < kOpTol);
  }
}

TEST_CASE("parameter names are unique") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  store.add("w", {2}, Init::kZeros, rng);
  CHECK_THROWS_AS(store.add("w", {3}, Init::kZeros, rng), ConfigError);
}

TEST_CASE("every parameter on the path receives a gradient") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  Mlp net = Mlp::create(store, "net", {3, 4, 1}, rng);
  Tape tape;
  Var y = mlp(tape, tape.constant(Tensor::matrix({{1, 2, 3}})), net);
  tape.backward(sum(y));
  for (const auto& p : store) CHECK(p->has_grad);
}

TEST_CASE("focal loss examples") {
  Tape tape;
  auto fl = [&](double p, double y, double gamma, double alpha) {
    return focal_loss(tape.constant(Tensor::vector({p})), Tensor::vector({y}), gamma, alpha)
        .value()[0];
  };
  CHECK(fl(0.999999, 1, 2, 0.25) == doctest::Approx(0).epsilon(1e-12));
  CHECK(fl(0.5, 1, 0, 1) == doctest::Approx(std::log(2.0)));
  // Hand evaluation: -(1 - 0.25) * 0.25^2 * log(0.75)
  const double expected = -(1 - 0.25) * 0.0625 * std::log(0.75);
  CHECK(fl(0.25, 0, 2, 0.25) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(focal_loss_scalar(0.25, 0, 2, 0.25) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("clamped focal loss is finite on the closed interval") {
  Tape tape;
  for (double y : {0.0, 1.0}) {
    for (int i = 0; i <= 1000; ++i) {
      const double p = i / 1000.0;
      Var v = tape.constant(Tensor::vector({p}));
      Var l = focal_loss(v, Tensor::vector({y}));
      CHECK(std::isfinite(l.value()[0]));
    }
  }
}

TEST_CASE("focal loss blocks gradient through an active clamp") {
  Parameter p = make_param("p", Tensor::vector({0.0, 1.0}));
  Tape tape;
  tape.backward(sum(focal_loss(tape.param(p), Tensor::vector({1, 0}))));
  CHECK(p.grad[0] == 0);
  CHECK(p.grad[1] == 0);
}

TEST_CASE("focal loss matches a scalar-loop oracle on random inputs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 6;
    Tensor p({n}), y({n});
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = u(rng);
      y[i] = u(rng) < 0.5 ? 1 : 0;
    }
    const double gamma = trial % 3, alpha = 0.1 + 0.8 * u(rng);
    Tape tape;
    Var l = focal_loss(tape.constant(p), y, gamma, alpha);
    for (std::size_t i = 0; i < n; ++i) {
      const double q = std::clamp(p[i], 1e-7, 1 - 1e-7);
      const double ref = y[i] == 1 ? -alpha * std::pow(1 - q, gamma) * std::log(q)
                                   : -(1 - alpha) * std::pow(q, gamma) * std::log(1 - q);
      CHECK(l.value()[i] == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(1e-3, 0, 10) == 1e-3);
  CHECK(cosine_lr(1e-3, 5, 10) == doctest::Approx(5e-4));
  CHECK(cosine_lr(1e-3, 10, 10) == 0);
  CHECK(cosine_lr(1e-3, 12, 10) == 0);
  const double e3 = 0.5 * (1 + std::cos(std::numbers::pi * 3 / 10));
  CHECK(cosine_lr(2.0, 3, 10) == doctest::Approx(2.0 * e3));
}

TEST_CASE("optimizer leaves parameters alone with zero gradients and no decay") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  Parameter& w = store.add("w", {3}, Init::kNormal, rng);
  const Tensor before = w.value;
  AdamW opt(store, {.base_lr = 0.1, .weight_decay = 0.0});
  w.accumulate_grad(Tensor({3}));
  opt.step(0);
  CHECK(w.value == before);
  CHECK(opt.steps() == 1);
}

TEST_CASE("optimizer step size is zero at the horizon") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  Parameter& w = store.add("w", {2}, Init::kNormal, rng);
  const Tensor before = w.value;
  AdamW opt(store, {.base_lr = 0.1, .horizon = 4});
  w.accumulate_grad(Tensor::vector({1, -1}));
  opt.step(4);
  CHECK(w.value == before);
}

TEST_CASE("one step on w^2 from w=1 decreases the objective") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  Parameter& w = store.add("w", {1}, Init::kZeros, rng);
  w.value[0] = 1.0;
  AdamW opt(store, {.base_lr = 0.1});
  Tape tape;
  Var x = tape.param(w);
  tape.backward(sum(hadamard(x, x)));
  CHECK(w.grad[0] == 2.0);
  opt.step(0);
  CHECK(w.value[0] * w.value[0] < 1.0);
  // First Adam step moves by lr * m_hat / (sqrt(v_hat) + eps) ~= lr, plus decay.
  CHECK(w.value[0] == doctest::Approx(1.0 - 0.1 * (2.0 / (2.0 + 1e-8) + 1e-4)).epsilon(1e-12));
  CHECK(opt.first_moment(0)[0] == doctest::Approx(0.2));
  CHECK(opt.second_moment(0)[0] == doctest::Approx(0.004));
}

TEST_CASE("step before backward raises a missing-gradient error") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  store.add("w", {2}, Init::kNormal, rng);
  AdamW opt(store, {});
  CHECK_THROWS_AS(opt.step(0), MissingGradientError);
}

TEST_CASE("frozen parameters do not need gradients") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  Parameter& w = store.add("w", {2}, Init::kNormal, rng);
  w.trainable = false;
  const Tensor before = w.value;
  AdamW opt(store, {});
  opt.step(0);
  CHECK(w.value == before);
}
