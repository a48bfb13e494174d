#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "rng.hpp"
#include "tensor.hpp"

using namespace sgw;

namespace {

Tensor random_tensor(const Shape& s, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(s);
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// values bounded away from zero, for ops with a kink or a pole there
Tensor random_tensor_away_from(const Shape& s, Rng& rng, double margin) {
  Tensor t = Tensor::zeros(s);
  for (double& x : t.v) {
    do {
      x = rng.uniform(-2.0, 2.0);
    } while (std::abs(x) < margin);
  }
  return t;
}

Tensor random_positive(const Shape& s, Rng& rng) {
  Tensor t = Tensor::zeros(s);
  for (double& x : t.v) x = rng.uniform(0.1, 2.0);
  return t;
}

// scalar probe: weighted sum with fixed coefficients so every output
// coordinate feeds the loss differently
Tensor probe(const Tensor& y, uint64_t seed) {
  Rng rng(seed);
  Tensor w = Tensor::zeros(y.shape);
  for (double& x : w.v) x = rng.uniform(-1.0, 1.0);
  return sum(mul(y, w));
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("softmax of uniform logits is uniform") {
  Tensor y = softmax(Tensor::vec({0, 0, 0}));
  for (double p : y.v) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("relu clamps negatives") {
  Tensor y = relu(Tensor::vec({-1, 0, 2}));
  CHECK(y.v == std::vector<double>({0, 0, 2}));
}

TEST_CASE("matmul of ones counts the inner extent") {
  Tensor y = matmul(Tensor::full({2, 3}, 1.0), Tensor::full({3, 1}, 1.0));
  CHECK(y.shape == Shape{2, 1});
  CHECK(y.v == std::vector<double>({3, 3}));
}

TEST_CASE("matmul shape mismatch names the op and extents") {
  CHECK_THROWS_WITH_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 1})),
                       doctest::Contains("matmul"), std::invalid_argument);
}

TEST_CASE("softmax over an empty axis fails") {
  CHECK_THROWS_AS(softmax(Tensor({0}, {})), std::invalid_argument);
}

TEST_CASE("softmax rows are nonnegative and sum to one") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    Tensor x = random_tensor({3, 5}, rng, -30.0, 30.0);
    Tensor p = softmax(x);
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int c = 0; c < 5; ++c) {
        CHECK(p.at(r, c) >= 0.0);
        s += p.at(r, c);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("backward of sum is all ones") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor::vec({1, -2, 3, 0.5}));
  Tensor loss = sum(x);
  Tensor g = tape.backward(loss).at(x);
  for (double v : g.v) CHECK(v == 1.0);
}

TEST_CASE("zero-scaled path gives zero gradient") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor::vec({1, 2, 3}));
  Tensor loss = sum(mul(Tensor::scalar(0.0), x));
  Tensor g = tape.backward(loss).at(x);
  for (double v : g.v) CHECK(v == 0.0);
}

TEST_CASE("gradient through sum of softmax vanishes") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor::vec({0.3, -1.2, 2.0, 0.7}));
  Tensor loss = sum(softmax(x));
  Tensor g = tape.backward(loss).at(x);
  for (double v : g.v) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("non-participating leaves read back as zeros") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor::vec({1, 2}));
  Tensor unused = tape.watch(Tensor::vec({5, 6, 7}));
  Tensor loss = sum(x);
  GradientMap g = tape.backward(loss);
  CHECK(g.at(unused).shape == Shape{3});
  for (double v : g.at(unused).v) CHECK(v == 0.0);
}

TEST_CASE("backward requires a scalar recorded on the same record") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = tape.watch(Tensor::vec({1, 2}));
  Tensor y = relu(x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);     // not scalar
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1)), std::invalid_argument);  // not recorded
}

TEST_CASE("backward consumes the record") {
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(tape);
    Tensor x = tape.watch(Tensor::vec({1, 2}));
    loss = sum(x);
  }
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::runtime_error);
}

TEST_CASE("tensors from one record cannot feed another") {
  Tape a;
  Tensor xa;
  {
    TapeScope scope(a);
    xa = a.watch(Tensor::vec({1, 2}));
  }
  Tape b;
  TapeScope scope(b);
  Tensor xb = b.watch(Tensor::vec({3, 4}));
  CHECK_THROWS_AS(add(xa, xb), std::runtime_error);
}

TEST_CASE("grad_check: sum of squares") {
  Rng rng(11);
  Tensor x = random_tensor({4}, rng);
  const double err = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check: softmax cross-entropy on 5 logits") {
  Rng rng(12);
  Tensor x = random_tensor({5}, rng);
  auto f = [](const Tensor& t) {
    Tensor p = softmax(t);
    return sub(Tensor::scalar(0.0), gather_rows(log(p), {2}));
  };
  CHECK(grad_check(f, x, 1e-5) < 1e-4);
}

TEST_CASE("grad_check: every op kind against central differences") {
  // 100 seeded instances spread over the op table; values in [-2,2], dims <= 8
  Rng rng(1234);
  double worst = 0.0;
  auto update = [&](double e) { worst = std::max(worst, e); };

  for (int round = 0; round < 10; ++round) {
    const uint64_t ps = 900 + static_cast<uint64_t>(round);

    {  // add / sub / mul, plain and scalar-broadcast
      Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
      Tensor s = random_tensor({1}, rng);
      update(grad_check([&](const Tensor& t) { return probe(add(t, b), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(sub(b, t), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(mul(t, b), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(add(t, s), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(mul(b, t), ps); }, s, 1e-5));
    }
    {  // matmul, both sides, vector forms
      Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
      Tensor v = random_tensor({4}, rng);
      update(grad_check([&](const Tensor& t) { return probe(matmul(t, b), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(matmul(a, t), ps); }, b, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(matmul(a, t), ps); }, v, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(matmul(t, b), ps); }, v, 1e-5));
    }
    {  // concat / slice / reshape / gather
      Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
      update(grad_check(
          [&](const Tensor& t) { return probe(concat({t, b}, 0), ps); }, a, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(concat({b, t}, 1), ps); }, a, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(slice_rows(t, 1, 2), ps); }, a, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(reshape(t, {3, 2}), ps); }, a, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(gather_rows(t, {1, 0, 1}), ps); }, a, 1e-5));
    }
    {  // relu family away from the kink, log away from the pole
      Tensor a = random_tensor_away_from({6}, rng, 1e-3);
      Tensor p = random_positive({6}, rng);
      update(grad_check([&](const Tensor& t) { return probe(relu(t), ps); }, a, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(leaky_relu(t, 0.2), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(log(t), ps); }, p, 1e-5));
    }
    {  // softmax / sum / mean
      Tensor a = random_tensor({2, 5}, rng);
      update(grad_check([&](const Tensor& t) { return probe(softmax(t), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return sum(t); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return probe(mean_rows(t), ps); }, a, 1e-5));
      update(grad_check([&](const Tensor& t) { return mean_all(t); }, a, 1e-5));
    }
    {  // lstm_cell, every input
      const int d = 3, in = 4;
      Tensor x = random_tensor({in}, rng);
      Tensor h = random_tensor({d}, rng), c = random_tensor({d}, rng);
      Tensor wih = random_tensor({in, 4 * d}, rng, -0.5, 0.5);
      Tensor whh = random_tensor({d, 4 * d}, rng, -0.5, 0.5);
      Tensor bias = random_tensor({4 * d}, rng, -0.5, 0.5);
      auto cell = [&](const Tensor& xx, const Tensor& hh, const Tensor& cc,
                      const Tensor& wi, const Tensor& wh, const Tensor& bb) {
        LstmState st = lstm_cell(xx, LstmState{hh, cc}, wi, wh, bb);
        return probe(concat({st.h, st.c}, 0), ps);
      };
      update(grad_check([&](const Tensor& t) { return cell(t, h, c, wih, whh, bias); }, x, 1e-5));
      update(grad_check([&](const Tensor& t) { return cell(x, t, c, wih, whh, bias); }, h, 1e-5));
      update(grad_check([&](const Tensor& t) { return cell(x, h, t, wih, whh, bias); }, c, 1e-5));
      update(grad_check([&](const Tensor& t) { return cell(x, h, c, t, whh, bias); }, wih, 1e-5));
      update(grad_check([&](const Tensor& t) { return cell(x, h, c, wih, t, bias); }, whh, 1e-5));
      update(grad_check([&](const Tensor& t) { return cell(x, h, c, wih, whh, t); }, bias, 1e-5));
    }
    {  // layer_norm, every input
      Tensor x = random_tensor({2, 6}, rng);
      Tensor g = random_tensor({6}, rng, 0.5, 1.5);
      Tensor b = random_tensor({6}, rng, -0.5, 0.5);
      update(grad_check(
          [&](const Tensor& t) { return probe(layer_norm(t, g, b), ps); }, x, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(layer_norm(x, t, b), ps); }, g, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(layer_norm(x, g, t), ps); }, b, 1e-5));
    }
    {  // scaled_dot_attention, every input
      Tensor q = random_tensor({3, 4}, rng), k = random_tensor({5, 4}, rng);
      Tensor v = random_tensor({5, 2}, rng);
      update(grad_check(
          [&](const Tensor& t) { return probe(scaled_dot_attention(t, k, v), ps); }, q, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(scaled_dot_attention(q, t, v), ps); }, k, 1e-5));
      update(grad_check(
          [&](const Tensor& t) { return probe(scaled_dot_attention(q, k, t), ps); }, v, 1e-5));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("grad_check: composed chain, not per-op only") {
  Rng rng(77);
  Tensor w1 = random_tensor({4, 6}, rng, -0.7, 0.7);
  Tensor w2 = random_tensor({6, 3}, rng, -0.7, 0.7);
  Tensor g = random_tensor({3}, rng, 0.5, 1.5);
  Tensor b = random_tensor({3}, rng, -0.2, 0.2);
  auto f = [&](const Tensor& x) {
    Tensor h = relu(matmul(x, w1));
    Tensor o = layer_norm(matmul(h, w2), g, b);
    return sum(mul(softmax(o), o));
  };
  Tensor x = random_tensor({4}, rng);
  CHECK(grad_check(f, x, 1e-5) < 1e-4);
}

TEST_CASE("replaying a record gives bitwise-identical gradients") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x0 = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    Tape tape;
    TapeScope scope(tape);
    Tensor x = tape.watch(x0);
    Tensor loss = sum(mul(softmax(matmul(x, w)), matmul(x, w)));
    return tape.backward(loss).at(x).v;
  };
  CHECK(run(5) == run(5));
}

TEST_CASE("grad_check validates epsilon") {
  CHECK_THROWS_AS(grad_check([](const Tensor& t) { return sum(t); },
                             Tensor::vec({1.0}), 1e-2),
                  std::invalid_argument);
}

TEST_SUITE_END();
