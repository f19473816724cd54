#include <doctest.h>

#include <cstring>

#include "cvt/tensor.hpp"
#include "cvt/tensor_ops.hpp"
#include "testing.hpp"

using namespace cvt;
using cvt::testing::check_gradients;
using cvt::testing::check_values;
using cvt::testing::rand_tensor;
using cvt::testing::weighted_sum;

TEST_CASE("tensor construction and access") {
  auto t = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(-1) == 3);
  CHECK(t.at({1, 2}) == 6.0);
  CHECK_THROWS_AS(Tensor<double>::from_data({2, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(t.value(), std::invalid_argument);
}

TEST_CASE("matmul forward oracles") {
  auto eye = Tensor<double>::from_data({2, 2}, {1, 0, 0, 1});
  auto m = Tensor<double>::from_data({2, 2}, {1, 2, 3, 4});
  check_values(matmul(eye, m), {1, 2, 3, 4});

  auto a = Tensor<double>::from_data({1, 2}, {1, 2});
  auto b = Tensor<double>::from_data({2, 1}, {3, 4});
  check_values(matmul(a, b), {11});
}

TEST_CASE("matmul shape error names both shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,5)") != std::string::npos);
  }
}

TEST_CASE("grad of sum(A@B) w.r.t. A equals ones*B^T") {
  Rng rng(11);
  auto a = rand_tensor({3, 4}, rng);
  auto b = rand_tensor({4, 2}, rng);
  a.set_requires_grad(true);
  {
    Tape<double> tape;
    auto loss = sum(matmul(a, b));
    tape.backward(loss);
  }
  // (ones(3,2) @ B^T)[i,j] = sum_n B[j,n]
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j) {
      double expect = 0.0;
      for (Index n = 0; n < 2; ++n) expect += b.at({j, n});
      CHECK(a.grad()(i * 4 + j) == doctest::Approx(expect).epsilon(1e-12));
    }
  a.clear_grad();
  check_gradients({a, b}, [&] { return sum(matmul(a, b)); }, 1e-6);
}

TEST_CASE("matmul gradients: batched and shared right operand") {
  Rng rng(12);
  auto a3 = rand_tensor({2, 3, 4}, rng);
  auto b3 = rand_tensor({2, 4, 2}, rng);
  check_gradients({a3, b3}, [&] { Rng w(13); return weighted_sum(matmul(a3, b3), w); });

  auto b2 = rand_tensor({4, 2}, rng);
  check_gradients({a3, b2}, [&] { Rng w(14); return weighted_sum(matmul(a3, b2), w); });
}

TEST_CASE("softmax forward oracles") {
  auto z = Tensor<double>::from_data({3}, {0, 0, 0});
  check_values(softmax(z, 0), {1.0 / 3, 1.0 / 3, 1.0 / 3});

  auto x = Tensor<double>::from_data({3}, {1, 2, 3});
  check_values(softmax(x, 0), {0.09003057, 0.24472847, 0.66524096}, 1e-4);

  // shift invariance
  auto shifted = Tensor<double>::from_data({3}, {1 + 17.5, 2 + 17.5, 3 + 17.5});
  auto p1 = softmax(x, 0), p2 = softmax(shifted, 0);
  for (Index i = 0; i < 3; ++i) CHECK(p1.array()(i) == doctest::Approx(p2.array()(i)).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(21);
  auto x = rand_tensor({4, 7}, rng, -30.0, 30.0);
  auto p = softmax(x, -1);
  for (Index r = 0; r < 4; ++r) {
    const double s = p.array().segment(r * 7, 7).sum();
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax gradients, both axes and inner>1 path") {
  Rng rng(22);
  auto x = rand_tensor({3, 4}, rng);
  check_gradients({x}, [&] { Rng w(23); return weighted_sum(softmax(x, -1), w); });
  check_gradients({x}, [&] { Rng w(24); return weighted_sum(softmax(x, 0), w); });
}

TEST_CASE("layer_norm forward oracles") {
  auto x = Tensor<double>::from_data({3}, {1, 2, 3});
  auto gain = Tensor<double>::full({3}, 1.0);
  auto bias = Tensor<double>::zeros({3});
  check_values(layer_norm(x, gain, bias, 1e-5), {-1.2247, 0.0, 1.2247}, 1e-3);

  auto c = Tensor<double>::full({4}, 3.7);
  auto g4 = Tensor<double>::full({4}, 1.0);
  auto b4 = Tensor<double>::zeros({4});
  check_values(layer_norm(c, g4, b4, 1e-5), {0, 0, 0, 0}, 1e-9);
}

TEST_CASE("layer_norm output has zero per-row mean pre-affine") {
  Rng rng(31);
  auto x = rand_tensor({5, 8}, rng, -3.0, 3.0);
  auto gain = Tensor<double>::full({8}, 1.0);
  auto bias = Tensor<double>::zeros({8});
  auto y = layer_norm(x, gain, bias);
  for (Index r = 0; r < 5; ++r) CHECK(std::abs(y.array().segment(r * 8, 8).mean()) < 1e-6);
}

TEST_CASE("layer_norm gradients") {
  Rng rng(32);
  auto x = rand_tensor({3, 5}, rng, -2.0, 2.0);
  auto gain = rand_tensor({5}, rng, 0.5, 1.5);
  auto bias = rand_tensor({5}, rng, -0.2, 0.2);
  check_gradients({x, gain, bias},
                  [&] { Rng w(33); return weighted_sum(layer_norm(x, gain, bias), w); });
}

TEST_CASE("attention forward oracles") {
  // single key/value: output equals v regardless of q
  Rng rng(41);
  auto q = rand_tensor({1, 2, 3}, rng);
  auto k = rand_tensor({1, 1, 3}, rng);
  auto v = Tensor<double>::from_data({1, 1, 2}, {5, -7});
  auto out = attention(q, k, v);
  check_values(out, {5, -7, 5, -7}, 1e-12);

  // two keys with equal logits: mean of the values
  auto k0 = Tensor<double>::zeros({1, 2, 3});
  auto v2 = Tensor<double>::from_data({1, 2, 2}, {1, 2, 3, 4});
  auto out2 = attention(q, k0, v2);
  check_values(slice(out2, 1, 0, 1), {2, 3}, 1e-12);

  // fully masked row except position j forces output v_j
  auto k2 = rand_tensor({1, 3, 3}, rng);
  auto v3 = rand_tensor({1, 3, 2}, rng);
  auto mask = Tensor<double>::zeros({1, 1, 3});
  const double ninf = -std::numeric_limits<double>::infinity();
  mask.array()(0) = ninf;
  mask.array()(2) = ninf;  // only key 1 visible
  auto out3 = attention(q, k2, v3, mask);
  for (Index t = 0; t < 2; ++t)
    for (Index d = 0; d < 2; ++d)
      CHECK(out3.at({0, t, d}) == doctest::Approx(v3.at({0, 1, d})).epsilon(1e-12));
}

TEST_CASE("attention gradients with mask") {
  Rng rng(42);
  auto q = rand_tensor({2, 3, 4}, rng);
  auto k = rand_tensor({2, 3, 4}, rng);
  auto v = rand_tensor({2, 3, 2}, rng);
  auto mask = Tensor<double>::zeros({1, 3, 3});
  const double ninf = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < 3; ++i)
    for (Index j = i + 1; j < 3; ++j) mask.array()(i * 3 + j) = ninf;
  check_gradients({q, k, v}, [&] { Rng w(43); return weighted_sum(attention(q, k, v, mask), w); });
}

TEST_CASE("elementwise op gradients") {
  Rng rng(51);
  auto a = rand_tensor({3, 4}, rng);
  auto b = rand_tensor({3, 4}, rng);
  auto suffix = rand_tensor({4}, rng);
  auto scalar = rand_tensor({1}, rng);

  check_gradients({a, b}, [&] { Rng w(52); return weighted_sum(add(a, b), w); });
  check_gradients({a, suffix}, [&] { Rng w(53); return weighted_sum(add(a, suffix), w); });
  check_gradients({a, scalar}, [&] { Rng w(54); return weighted_sum(add(a, scalar), w); });
  check_gradients({a, b}, [&] { Rng w(55); return weighted_sum(mul(a, b), w); });
  check_gradients({a, suffix}, [&] { Rng w(56); return weighted_sum(mul(a, suffix), w); });
  check_gradients({a, scalar}, [&] { Rng w(57); return weighted_sum(mul(a, scalar), w); });
  check_gradients({a, b}, [&] { Rng w(58); return weighted_sum(sub(a, b), w); });
  check_gradients({a}, [&] { Rng w(59); return weighted_sum(exp(a), w); });
  check_gradients({a}, [&] { Rng w(60); return weighted_sum(scale(a, -2.5), w); });
  check_gradients({a}, [&] { Rng w(61); return weighted_sum(add_scalar(a, 3.1), w); });

  auto pos = rand_tensor({3, 4}, rng, 0.5, 2.0);
  check_gradients({pos}, [&] { Rng w(62); return weighted_sum(log(pos), w); });

  auto away = rand_tensor({3, 4}, rng, 0.2, 1.0);
  for (Index i = 0; i < away.size(); ++i)
    if (i % 2) away.array()(i) = -away.array()(i);  // mixed signs, away from 0
  check_gradients({away}, [&] { Rng w(63); return weighted_sum(relu(away), w); });
}

TEST_CASE("reduction values and gradients") {
  auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(sum(x).value() == 21.0);
  CHECK(mean(x).value() == doctest::Approx(3.5));
  check_values(sum_axis(x, 0), {5, 7, 9});
  check_values(sum_axis(x, 1), {6, 15});
  check_values(mean_axis(x, 1), {2, 5});

  Rng rng(71);
  auto r = rand_tensor({2, 3, 2}, rng);
  check_gradients({r}, [&] { return sum(r); });
  check_gradients({r}, [&] { return mean(r); });
  check_gradients({r}, [&] { Rng w(72); return weighted_sum(sum_axis(r, 1), w); });
  check_gradients({r}, [&] { Rng w(73); return weighted_sum(mean_axis(r, 2), w); });
}

TEST_CASE("layout ops: values and gradients") {
  auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  check_values(transpose(x, 0, 1), {1, 4, 2, 5, 3, 6});
  check_values(reshape(x, {3, 2}), {1, 2, 3, 4, 5, 6});
  check_values(slice(x, 1, 1, 2), {2, 3, 5, 6});
  auto y = Tensor<double>::from_data({2, 1}, {9, 10});
  check_values(concat<double>({slice(x, 1, 0, 1), y}, 1), {1, 9, 4, 10});
  CHECK_THROWS_AS(reshape(x, {4, 2}), std::invalid_argument);
  CHECK_THROWS_AS(slice(x, 1, 2, 2), std::invalid_argument);

  Rng rng(81);
  auto r = rand_tensor({2, 3, 4}, rng);
  check_gradients({r}, [&] { Rng w(82); return weighted_sum(transpose(r, 0, 2), w); });
  check_gradients({r}, [&] { Rng w(83); return weighted_sum(transpose(r, 1, 2), w); });
  check_gradients({r}, [&] { Rng w(84); return weighted_sum(reshape(r, {6, 4}), w); });
  check_gradients({r}, [&] { Rng w(85); return weighted_sum(slice(r, 1, 1, 2), w); });
  auto r2 = rand_tensor({2, 2, 4}, rng);
  check_gradients({r, r2},
                  [&] { Rng w(86); return weighted_sum(concat<double>({r, r2}, 1), w); });
}

TEST_CASE("embedding gather and scatter-add gradient") {
  auto table = Tensor<double>::from_data({3, 2}, {0, 1, 10, 11, 20, 21});
  auto out = embedding(table, {2, 0, 2});
  check_values(out, {20, 21, 0, 1, 20, 21});
  CHECK_THROWS_AS(embedding(table, {3}), std::invalid_argument);

  Rng rng(91);
  auto t = rand_tensor({4, 3}, rng);
  std::vector<int> ids{1, 3, 1, 0};  // repeated id exercises accumulation
  check_gradients({t}, [&] { Rng w(92); return weighted_sum(embedding(t, ids), w); });
}

TEST_CASE("dropout: eval identity, train expectation, gradient") {
  Rng rng(101);
  auto x = rand_tensor({10}, rng);
  Rng r1(5);
  auto eval_out = dropout(x, 0.4, false, r1);
  CHECK(eval_out.node().get() == x.node().get());  // identity, same handle
  auto p0 = dropout(x, 0.0, true, r1);
  CHECK(p0.node().get() == x.node().get());

  // E[output] = input within 2% over >= 1e4 samples
  const double p = 0.3;
  Rng r2(6);
  auto ones = Tensor<double>::full({100}, 1.0);
  double acc = 0.0;
  const int reps = 200;  // 200 * 100 = 2e4 samples
  for (int i = 0; i < reps; ++i) acc += dropout(ones, p, true, r2).array().mean();
  CHECK(std::abs(acc / reps - 1.0) < 0.02);

  check_gradients({x}, [&] {
    Rng fixed(7);  // same mask on every evaluation
    Rng w(8);
    return weighted_sum(dropout(x, 0.25, true, fixed), w);
  });
}

TEST_CASE("add_mask broadcast rules and gradient") {
  Rng rng(111);
  auto scores = rand_tensor({4, 2, 3}, rng);  // e.g. batch 2 x heads 2
  auto mask = Tensor<double>::from_data({2, 1, 3}, {0, -1, 0, -2, 0, 0});
  auto out = add_mask(scores, mask);
  // group = 4/2 = 2: rows 0,1 use mask[0], rows 2,3 use mask[1]
  CHECK(out.at({0, 0, 1}) == doctest::Approx(scores.at({0, 0, 1}) - 1));
  CHECK(out.at({1, 1, 1}) == doctest::Approx(scores.at({1, 1, 1}) - 1));
  CHECK(out.at({2, 0, 0}) == doctest::Approx(scores.at({2, 0, 0}) - 2));
  CHECK(out.at({3, 1, 0}) == doctest::Approx(scores.at({3, 1, 0}) - 2));
  check_gradients({scores}, [&] { Rng w(112); return weighted_sum(add_mask(scores, mask), w); });
}

TEST_CASE("repeat_middle copies and accumulates") {
  auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  auto out = repeat_middle(x, 2);
  check_values(out, {1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6});
  Rng rng(121);
  auto r = rand_tensor({2, 3}, rng);
  check_gradients({r}, [&] { Rng w(122); return weighted_sum(repeat_middle(r, 4), w); });
}

TEST_CASE("backward determinism: bitwise-identical gradients") {
  auto run = [] {
    Rng rng(77);
    auto a = cvt::testing::rand_tensor({4, 4}, rng);
    auto b = cvt::testing::rand_tensor({4, 4}, rng);
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    Tape<double> tape;
    Rng drop(78);
    auto h = dropout(softmax(matmul(a, b), -1), 0.2, true, drop);
    auto loss = mean(mul(h, h));
    tape.backward(loss);
    std::vector<double> grads;
    for (Index i = 0; i < a.size(); ++i) grads.push_back(a.grad()(i));
    for (Index i = 0; i < b.size(); ++i) grads.push_back(b.grad()(i));
    return grads;
  };
  const auto g1 = run();
  const auto g2 = run();
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("the finite-difference harness detects a planted gradient error") {
  Rng rng(131);
  auto x = cvt::testing::rand_tensor({3}, rng, 0.5, 1.5);
  // analytic pass sees sum(x*x); finite differences see sum(x*x) + 0.1*x0
  bool analytic_phase = true;
  auto forward = [&]() -> Tensor<double> {
    auto loss = sum(mul(x, x));
    if (!analytic_phase) loss = Tensor<double>::scalar(loss.value() + 0.1 * x.array()(0));
    analytic_phase = false;
    return loss;
  };
  const auto report = cvt::testing::fd_gradient_report({x}, forward, 1e-4);
  CHECK_FALSE(report.ok);
  CHECK(report.max_rel_err > 1e-3);
}

TEST_CASE("tape semantics") {
  auto x = Tensor<double>::from_data({2}, {1, 2}, true);
  {
    Tape<double> tape;
    auto y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);  // non-scalar root
    auto loss = sum(y);
    tape.backward(loss);
    REQUIRE(x.has_grad());
    check_values(Tensor<double>::from_data({2}, {x.grad()(0), x.grad()(1)}), {2, 4}, 1e-12);
  }

  // ops outside any tape do not track
  auto z = mul(x, x);
  CHECK_FALSE(z.requires_grad());
}
