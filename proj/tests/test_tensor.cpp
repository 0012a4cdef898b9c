#include <doctest.h>

#include <cmath>

#include "ipgdn/tensor.hpp"
#include "testutil.hpp"

using namespace ipgdn;
namespace tu = testutil;

TEST_CASE("matmul identity and hand-evaluated product") {
  ad::Tensor a(2, 2, {1, 2, 3, 4});
  ad::Tensor out = ad::matmul(ad::Tensor::identity(2), a);
  CHECK(out.at(0, 0) == 1.0);
  CHECK(out.at(0, 1) == 2.0);
  CHECK(out.at(1, 0) == 3.0);
  CHECK(out.at(1, 1) == 4.0);

  ad::Tensor row = ad::Tensor::row({1, 2});
  ad::Tensor col = ad::Tensor::column({3, 4});
  CHECK(ad::matmul(row, col).at(0, 0) == 11.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions naming both shapes") {
  ad::Tensor a(2, 3);
  ad::Tensor b(2, 2);
  CHECK_THROWS_WITH_AS(ad::matmul(a, b), doctest::Contains("2x3"), ShapeError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(11);
  auto a = tu::random_tensor(3, 4, rng);
  auto b = tu::random_tensor(4, 2, rng);
  auto check = tu::check_gradients([&]() { return ad::sum(ad::matmul(a, b)); }, {a, b}, 1e-6);
  CHECK(check.max_rel_err < 1e-6);
  CHECK(check.checked == 20);
}

TEST_CASE("relu forward and zero gradient on all-negative input") {
  ad::Tensor x = ad::Tensor::row({-1, 0, 2});
  ad::Tensor y = ad::relu(x);
  CHECK(y.at(0, 0) == 0.0);
  CHECK(y.at(0, 1) == 0.0);
  CHECK(y.at(0, 2) == 2.0);

  ad::Tensor neg = ad::Tensor::row({-3, -1, -0.5}, /*requires_grad=*/true);
  ad::Tape tape;
  {
    ad::TapeScope scope(tape);
    ad::Tensor out = ad::relu(neg);
    for (double v : out.value()) CHECK(v == 0.0);
    tape.backward(ad::sum(out));
  }
  for (double g : neg.grad()) CHECK(g == 0.0);
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(5);
  ad::Tensor x(2, 3);
  for (auto& v : x.mutable_value()) {
    do {
      v = rng.uniform(-1.0, 1.0);
    } while (std::abs(v) < 1e-3);
  }
  auto check = tu::check_gradients([&]() { return ad::sum(ad::relu(x)); }, {x}, 1e-6);
  CHECK(check.max_rel_err < 1e-6);
}

TEST_CASE("row_softmax equal logits and overflow stability") {
  ad::Tensor y = ad::row_softmax(ad::Tensor::row({0, 0, 0}));
  for (double v : y.value()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  ad::Tensor z = ad::row_softmax(ad::Tensor::row({1000, 0}));
  CHECK(std::isfinite(z.at(0, 0)));
  CHECK(z.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(z.at(0, 1) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("row_softmax rows sum to one") {
  Rng rng(17);
  auto x = tu::random_tensor(6, 5, rng, -4.0, 4.0);
  auto y = ad::row_softmax(x);
  for (int r = 0; r < y.rows(); ++r) {
    double total = 0.0;
    for (int c = 0; c < y.cols(); ++c) total += y.at(r, c);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("row_softmax gradient matches finite differences") {
  Rng rng(19);
  auto x = tu::random_tensor(3, 4, rng, -2.0, 2.0);
  auto w = tu::random_tensor(3, 4, rng);  // fixed readout weights
  auto check = tu::check_gradients(
      [&]() { return ad::sum(ad::mul(ad::row_softmax(x), w)); }, {x}, 1e-6);
  CHECK(check.max_rel_err < 1e-6);
}

TEST_CASE("row_l2_normalize hand value and zero-row guard") {
  ad::Tensor y = ad::row_l2_normalize(ad::Tensor::row({3, 4}));
  CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));

  ad::Tensor z = ad::row_l2_normalize(ad::Tensor::row({0, 0, 0}));
  for (double v : z.value()) {
    CHECK(v == 0.0);
    CHECK(!std::isnan(v));
  }
}

TEST_CASE("row_l2_normalize unit norm within 1e-12 on nonzero rows") {
  Rng rng(23);
  auto x = tu::random_tensor(8, 5, rng, -2.0, 2.0);
  auto y = ad::row_l2_normalize(x);
  for (int r = 0; r < y.rows(); ++r) {
    double norm = 0.0;
    for (int c = 0; c < y.cols(); ++c) norm += y.at(r, c) * y.at(r, c);
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-12);
  }
}

TEST_CASE("row_l2_normalize gradient on healthy-norm rows") {
  Rng rng(29);
  ad::Tensor x(4, 3);
  for (int r = 0; r < 4; ++r) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double v = rng.uniform(-1.0, 1.0);
        x.set(r, c, v);
        norm += v * v;
      }
    } while (std::sqrt(norm) < 0.1);
  }
  Rng wrng(31);
  auto w = tu::random_tensor(4, 3, wrng);
  auto check = tu::check_gradients(
      [&]() { return ad::sum(ad::mul(ad::row_l2_normalize(x), w)); }, {x}, 1e-6);
  CHECK(check.max_rel_err < 1e-6);
}

TEST_CASE("dropout: rate zero and eval mode are the identity") {
  Rng rng(37);
  auto x = tu::random_tensor(4, 4, rng);
  {
    Rng r2(1);
    auto y = ad::dropout(x, 0.0, /*training=*/true, r2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == x.value()[i]);
  }
  {
    Rng r2(1);
    auto y = ad::dropout(x, 0.7, /*training=*/false, r2);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value()[i] == x.value()[i]);
  }
}

TEST_CASE("dropout rejects rates outside [0,1)") {
  Rng rng(1);
  ad::Tensor x(2, 2, 1.0);
  CHECK_THROWS_AS(ad::dropout(x, 1.0, true, rng), ConfigError);
  CHECK_THROWS_AS(ad::dropout(x, -0.1, true, rng), ConfigError);
}

TEST_CASE("dropout is unbiased: empirical mean within 5% over 1e4 trials") {
  ad::Tensor x(1, 8, 1.0);
  Rng rng(41);
  std::vector<double> mean(8, 0.0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto y = ad::dropout(x, 0.5, /*training=*/true, rng);
    for (int c = 0; c < 8; ++c) mean[static_cast<std::size_t>(c)] += y.at(0, c);
  }
  for (double m : mean) CHECK(std::abs(m / trials - 1.0) < 0.05);
}

TEST_CASE("backward: analytic derivative of sum(x*x)") {
  ad::Tensor x = ad::Tensor::row({3}, /*requires_grad=*/true);
  ad::Tape tape;
  {
    ad::TapeScope scope(tape);
    ad::Tensor loss = ad::sum(ad::mul(x, x));
    CHECK(loss.value()[0] == 9.0);
    tape.backward(loss);
  }
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("backward twice without reset doubles leaf gradients exactly") {
  ad::Tensor x = ad::Tensor::row({3, -2}, /*requires_grad=*/true);
  ad::Tape tape;
  ad::Tensor loss;
  {
    ad::TapeScope scope(tape);
    loss = ad::sum(ad::mul(x, x));
    tape.backward(loss);
  }
  const double g0 = x.grad()[0];
  const double g1 = x.grad()[1];
  tape.backward(loss);
  CHECK(x.grad()[0] == 2.0 * g0);
  CHECK(x.grad()[1] == 2.0 * g1);
}

TEST_CASE("backward requires a scalar loss recorded on the tape") {
  ad::Tensor x(2, 2, 1.0, /*requires_grad=*/true);
  ad::Tape tape;
  ad::Tensor y;
  {
    ad::TapeScope scope(tape);
    y = ad::mul(x, x);
  }
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  ad::Tensor stray(1, 1, 0.0);
  CHECK_THROWS_AS(tape.backward(stray), ValidationError);
}

TEST_CASE("two-layer composition gradient matches finite differences") {
  Rng rng(43);
  auto x = tu::random_tensor(3, 4, rng);
  auto w1 = tu::random_tensor(4, 5, rng);
  auto b1 = tu::random_tensor(1, 5, rng);
  auto w2 = tu::random_tensor(5, 2, rng);
  auto loss = [&]() {
    return ad::sum(ad::matmul(ad::relu(ad::add(ad::matmul(x, w1), b1)), w2));
  };
  auto check = tu::check_gradients(loss, {x, w1, b1, w2}, 1e-6);
  CHECK(check.max_rel_err < 1e-5);
}

TEST_CASE("gather, segment_sum, rowwise_dot, scale_rows, concat, slice gradients") {
  Rng rng(47);
  auto x = tu::random_tensor(5, 3, rng);
  auto s = tu::random_tensor(4, 1, rng);
  auto y = tu::random_tensor(4, 3, rng);
  const std::vector<int> idx = {4, 0, 2, 2};
  const std::vector<int> seg = {1, 0, 1, 2};
  auto loss = [&]() {
    auto gathered = ad::gather_rows(x, idx);                    // 4x3
    auto scaled = ad::scale_rows(gathered, s);                  // 4x3
    auto dots = ad::rowwise_dot(scaled, y);                     // 4x1
    auto joined = ad::concat_cols(std::vector<ad::Tensor>{dots, ad::mul(dots, dots)});
    auto agg = ad::segment_sum(ad::concat_rows(std::vector<ad::Tensor>{joined, joined}),
                               {0, 1, 1, 2, 0, 0, 3, 3}, 4);
    return ad::sum(ad::slice_cols(agg, 0, 2));
  };
  auto check = tu::check_gradients(loss, {x, s, y}, 1e-6);
  CHECK(check.max_rel_err < 1e-6);
}

TEST_CASE("fused kernels match their composed equivalents including gradients") {
  Rng rng(53);
  auto a = tu::random_tensor(6, 3, rng);
  auto b = tu::random_tensor(4, 3, rng);
  auto w = tu::random_tensor(6, 2, rng);
  const std::vector<int> idx = {0, 3, 1, 1, 2, 0};
  const std::vector<int> seg = {2, 0, 1, 2, 2, 0};

  {
    auto fused = ad::indexed_rowwise_dot(a, b, idx);
    auto composed = ad::rowwise_dot(a, ad::gather_rows(b, idx));
    for (std::size_t i = 0; i < fused.size(); ++i)
      CHECK(fused.value()[i] == composed.value()[i]);
  }
  {
    auto fused = ad::weighted_segment_sum(a, w, 1, seg, 3);
    auto composed = ad::segment_sum(ad::scale_rows(a, ad::slice_cols(w, 1, 2)), seg, 3);
    for (std::size_t i = 0; i < fused.size(); ++i)
      CHECK(fused.value()[i] == composed.value()[i]);
  }

  auto check = tu::check_gradients(
      [&]() {
        auto dots = ad::indexed_rowwise_dot(a, b, idx);
        auto agg = ad::weighted_segment_sum(a, w, 0, seg, 3);
        return ad::add(ad::sum(ad::mul(dots, dots)), ad::sum_squares(agg));
      },
      {a, b, w}, 1e-6);
  CHECK(check.max_rel_err < 1e-6);
}

TEST_CASE("segment_sum validates ids and row counts") {
  ad::Tensor x(3, 2, 1.0);
  CHECK_THROWS_AS(ad::segment_sum(x, {0, 1}, 2), ShapeError);
  CHECK_THROWS_AS(ad::segment_sum(x, {0, 1, 5}, 2), ValidationError);
}

TEST_CASE("operations outside a tape do not record and produce detached outputs") {
  ad::Tensor x(2, 2, 2.0, /*requires_grad=*/true);
  ad::Tensor y = ad::mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("forward results are deterministic for identical inputs and seed") {
  Rng rng_a(3), rng_b(3);
  ad::Tensor x(3, 3, 0.5);
  auto a = ad::dropout(x, 0.4, true, rng_a);
  auto b = ad::dropout(x, 0.4, true, rng_b);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.value()[i] == b.value()[i]);
}
