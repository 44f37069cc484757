#include <doctest.h>

#include <cmath>
#include <functional>

#include "abevo/rng.hpp"
#include "abevo/tensor.hpp"

using namespace abevo;
using namespace abevo::model;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

std::vector<double> mixing_weights(int64_t n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return w;
}

// central finite differences against autograd for every entry of every input
double max_grad_error(std::vector<Tensor> inputs, const std::function<Tensor()>& loss_fn) {
  Tensor loss = loss_fn();
  backward(loss);
  std::vector<std::vector<double>> autograd;
  for (auto& t : inputs) autograd.push_back(t.grad());
  const double h = 1e-6;
  double worst = 0.0;
  for (size_t k = 0; k < inputs.size(); ++k) {
    for (size_t i = 0; i < inputs[k].data().size(); ++i) {
      double saved = inputs[k].data()[i];
      inputs[k].data()[i] = saved + h;
      double lp = loss_fn().item();
      inputs[k].data()[i] = saved - h;
      double lm = loss_fn().item();
      inputs[k].data()[i] = saved;
      double fd = (lp - lm) / (2.0 * h);
      double ag = autograd[k].empty() ? 0.0 : autograd[k][i];
      worst = std::max(worst, std::fabs(fd - ag) / std::max(1e-4, std::fabs(fd) + std::fabs(ag)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul forward and gradients") {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == std::vector<int>{3, 5});
  double expect = 0.0;
  for (int k = 0; k < 4; ++k) expect += a.data()[1 * 4 + k] * b.data()[k * 5 + 2];
  CHECK(c.data()[1 * 5 + 2] == doctest::Approx(expect).epsilon(1e-12));

  double err = max_grad_error(
      {a, b}, [&]() { return sum_weighted(matmul(a, b), mixing_weights(15)); });
  CHECK(err < 1e-6);
}

TEST_CASE("layer_norm, gelu, bias and residual gradients") {
  Rng rng(2);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor g = random_tensor({6}, rng);
  Tensor b = random_tensor({6}, rng);
  Tensor w = random_tensor({6, 3}, rng);
  Tensor bias = random_tensor({3}, rng);
  double err = max_grad_error({x, g, b, w, bias}, [&]() {
    Tensor h = layer_norm(x, g, b);
    Tensor f = gelu(linear(h, w, bias));
    return sum_weighted(add(f, f), mixing_weights(12));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("attention forward properties: rows sum to 1, masked keys get exactly 0") {
  Rng rng(3);
  const int B = 2, T = 4, D = 8, H = 2;
  Tensor q = random_tensor({B, T, D}, rng);
  Tensor k = random_tensor({B, T, D}, rng);
  Tensor v = random_tensor({B, T, D}, rng);
  std::vector<double> mask = {1, 1, 1, 0, 1, 1, 0, 0};
  std::vector<double> probs;
  attention(q, k, v, mask, H, &probs);
  REQUIRE(probs.size() == static_cast<size_t>(B * H * T * T));
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      for (int i = 0; i < T; ++i) {
        const double* row = probs.data() + ((b * H + h) * T + i) * static_cast<size_t>(T);
        double sum = 0.0;
        for (int j = 0; j < T; ++j) {
          sum += row[j];
          if (mask[static_cast<size_t>(b * T + j)] == 0.0) CHECK(row[j] == 0.0);
        }
        CHECK(std::fabs(sum - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("single-token attention weight is exactly 1") {
  Rng rng(4);
  Tensor q = random_tensor({1, 1, 4}, rng);
  Tensor k = random_tensor({1, 1, 4}, rng);
  Tensor v = random_tensor({1, 1, 4}, rng);
  std::vector<double> probs;
  attention(q, k, v, {1.0}, 2, &probs);
  for (double p : probs) CHECK(p == 1.0);
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(5);
  const int B = 2, T = 3, D = 4, H = 2;
  Tensor q = random_tensor({B, T, D}, rng);
  Tensor k = random_tensor({B, T, D}, rng);
  Tensor v = random_tensor({B, T, D}, rng);
  std::vector<double> mask = {1, 1, 0, 1, 1, 1};
  double err = max_grad_error({q, k, v}, [&]() {
    Tensor ctx = attention(q, k, v, mask, H);
    return sum_weighted(mean_pool(ctx, mask), mixing_weights(B * D));
  });
  CHECK(err < 1e-5);
}

TEST_CASE("embedding, pooling and gather gradients") {
  Rng rng(6);
  Tensor tok = random_tensor({7, 4}, rng);
  Tensor pos = random_tensor({5, 4}, rng);
  Tensor seg = random_tensor({2, 4}, rng);
  std::vector<int> tokens = {1, 2, 3, 0, 4, 5, 6, 1};
  std::vector<int> segments = {0, 0, 1, 1, 0, 1, 1, 0};
  std::vector<double> mask = {1, 1, 1, 0, 1, 1, 1, 1};
  double err = max_grad_error({tok, pos, seg}, [&]() {
    Tensor e = embedding(tok, pos, seg, tokens, segments, 2, 4);
    Tensor rows = gather_rows(e, {0, 2, 5, 7});
    Tensor pooled = mean_pool(e, mask);
    Tensor joined = add(gather_rows(rows, {0, 1}), gather_rows(pooled, {0, 1}));
    return sum_weighted(joined, mixing_weights(8));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("embedding validates ids") {
  Rng rng(16);
  Tensor tok = random_tensor({4, 2}, rng);
  Tensor pos = random_tensor({3, 2}, rng);
  Tensor seg = random_tensor({2, 2}, rng);
  CHECK_THROWS_AS(embedding(tok, pos, seg, {9}, {0}, 1, 1), DataError);
  CHECK_THROWS_AS(embedding(tok, pos, seg, {1, 1, 1, 1}, {0, 0, 0, 0}, 1, 4), DataError);
}

TEST_CASE("xent_weighted equals a direct -log softmax computation") {
  Rng rng(7);
  Tensor logits = random_tensor({3, 5}, rng);
  std::vector<int> targets = {2, 0, 4};
  std::vector<double> weights = {0.5, 0.25, 0.25};
  Tensor loss = xent_weighted(logits, targets, weights);

  double expect = 0.0;
  for (int r = 0; r < 3; ++r) {
    double denom = 0.0, mx = -1e300;
    for (int c = 0; c < 5; ++c) mx = std::max(mx, logits.data()[r * 5 + c]);
    for (int c = 0; c < 5; ++c) denom += std::exp(logits.data()[r * 5 + c] - mx);
    double logp = logits.data()[r * 5 + targets[static_cast<size_t>(r)]] - mx - std::log(denom);
    expect -= weights[static_cast<size_t>(r)] * logp;
  }
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));

  double err =
      max_grad_error({logits}, [&]() { return xent_weighted(logits, targets, weights); });
  CHECK(err < 1e-6);
}

TEST_CASE("bce_weighted stable at large logits with correct gradients") {
  Tensor logits = Tensor::from_data({4}, {1000.0, -1000.0, 0.0, 2.5}, true);
  Tensor loss = bce_weighted(logits, {1.0, 0.0, 1.0, 0.0}, {0.25, 0.25, 0.25, 0.25});
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() ==
        doctest::Approx(0.25 * (std::log(2.0) + 2.5 + std::log1p(std::exp(-2.5))))
            .epsilon(1e-12));

  Rng rng(8);
  Tensor small = random_tensor({5}, rng);
  double err = max_grad_error({small}, [&]() {
    return bce_weighted(small, {1, 0, 1, 1, 0}, {0.1, 0.2, 0.3, 0.2, 0.2});
  });
  CHECK(err < 1e-6);
}

TEST_CASE("backward accumulates through shared subgraphs exactly once") {
  Tensor x = Tensor::from_data({2}, {0.3, -0.7}, true);
  Tensor doubled = add(x, x);
  Tensor loss = bce_weighted(doubled, {1.0, 0.0}, {1.0, 1.0});
  backward(loss);
  for (size_t i = 0; i < 2; ++i) {
    double z = 2.0 * x.data()[i];
    double sigma = 1.0 / (1.0 + std::exp(-z));
    double y = i == 0 ? 1.0 : 0.0;
    CHECK(x.grad()[i] == doctest::Approx(2.0 * (sigma - y)).epsilon(1e-12));
  }
}

TEST_CASE("dropout is identity at rate 0 and rescales otherwise") {
  Rng rng(9);
  Tensor x = random_tensor({50, 10}, rng);
  Rng drop_rng(11);
  Tensor same = dropout(x, 0.0, drop_rng);
  CHECK(same.node() == x.node());

  Rng drop_rng2(12);
  Tensor dropped = dropout(x, 0.4, drop_rng2);
  double kept = 0;
  for (size_t i = 0; i < dropped.data().size(); ++i) {
    if (dropped.data()[i] != 0.0) {
      ++kept;
      CHECK(dropped.data()[i] == doctest::Approx(x.data()[i] / 0.6).epsilon(1e-12));
    }
  }
  CHECK(kept / static_cast<double>(x.numel()) == doctest::Approx(0.6).epsilon(0.1));
}

TEST_CASE("no grad is recorded when nothing requires it") {
  Rng rng(10);
  Tensor a = random_tensor({2, 2}, rng, false);
  Tensor b = random_tensor({2, 2}, rng, false);
  Tensor c = matmul(a, b);
  CHECK(!c.requires_grad());
  Tensor loss = sum_weighted(c, mixing_weights(4));
  CHECK_NOTHROW(backward(loss));
  CHECK(a.grad().empty());
}
