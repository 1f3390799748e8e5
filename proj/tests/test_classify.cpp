#include <cmath>

#include "adaslstm/classify.hpp"
#include "adaslstm/errors.hpp"
#include "adaslstm/grad_check.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adaslstm;
using testing::random_tensor;
using T2 = Tensor<double>;

TEST_CASE("pool_head over packed sentences") {
  Rng rng(1);
  const std::size_t hid = 4;
  auto layout = make_layout({0, 3, 4});
  SlstmState<double> s{random_tensor({4, hid}, rng, 1.0, false), T2::zeros({4, hid}),
                       random_tensor({2, hid}, rng, 1.0, false), T2::zeros({2, hid}), 3};
  Tape<double> tape(false);
  auto v = pool_head(tape, s, layout);
  CHECK(v.shape() == Shape{2, 3 * hid});
  for (double x : v.values()) CHECK(x >= 0.0);
  // single-word sentence: max slice == mean slice
  for (std::size_t k = 0; k < hid; ++k) CHECK(v.at(1, k) == v.at(1, hid + k));
  // independent oracle for sentence 0
  for (std::size_t k = 0; k < hid; ++k) {
    const double a = s.h.at(0, k), b = s.h.at(1, k), c = s.h.at(2, k);
    CHECK(v.at(0, k) == doctest::Approx(std::max(0.0, std::max({a, b, c}))).epsilon(1e-15));
    CHECK(v.at(0, hid + k) == doctest::Approx(std::max(0.0, (a + b + c) / 3.0)).epsilon(1e-14));
    CHECK(v.at(0, 2 * hid + k) == doctest::Approx(std::max(0.0, s.g.at(0, k))).epsilon(1e-15));
  }
}

TEST_CASE("pool_head over a padded matrix ignores padding rows") {
  Rng rng(2);
  const std::size_t hid = 5;
  auto words = random_tensor({6, hid}, rng, 1.0, false);
  auto g = random_tensor({hid}, rng, 1.0, false);
  const std::vector<std::uint8_t> mask{0, 1, 1, 1, 0, 0};
  Tape<double> tape(false);
  auto base = pool_head(tape, words, std::span(mask), g);
  CHECK(base.shape() == Shape{3 * hid});
  for (int trial = 0; trial < 20; ++trial) {
    auto moved = words.detach();
    for (std::size_t r : {0, 4, 5})
      for (std::size_t k = 0; k < hid; ++k) moved.mutable_values()[r * hid + k] += 100.0 * (trial + 1);
    CHECK(testing::same_values(base, pool_head(tape, moved, std::span(mask), g)));
  }
  const std::vector<std::uint8_t> none(6, 0);
  CHECK_THROWS_AS(pool_head(tape, words, std::span(none), g), ArgumentError);

  // agrees with the packed form
  SlstmState<double> s{slice_rows(tape, words, 1, 3), T2::zeros({3, hid}), reshape(tape, g, {1, hid}),
                       T2::zeros({1, hid}), 1};
  auto packed = pool_head(tape, s, make_layout({0, 3}));
  for (std::size_t j = 0; j < 3 * hid; ++j) CHECK(packed.at(0, j) == doctest::Approx(base.values()[j]).epsilon(1e-14));
}

TEST_CASE("predict: uniform with zero parameters, normalized, shift invariant") {
  ClassifierParams<double> zero{T2::zeros({12, 4}), T2::zeros({4})};
  Tape<double> tape(false);
  Rng rng(3);
  auto logits = class_logits(tape, random_tensor({2, 12}, rng, 1.0, false), zero);
  for (const auto& p : predict(logits)) {
    for (double v : p.distribution) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(p.label == 0);
  }
  for (int trial = 0; trial < 200; ++trial) {
    auto l = random_tensor({3, 5}, rng, 4.0, false);
    auto shifted = l.detach();
    for (auto& v : shifted.mutable_values()) v += 123.0;
    auto a = predict(l), b = predict(shifted);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (double v : a[r].distribution) total += v;
      CHECK(std::abs(total - 1.0) <= 1e-9);
      CHECK(a[r].label == b[r].label);
    }
  }
  const std::vector<double> tie{1.0, 3.0, 3.0};
  CHECK(argmax(std::span<const double>(tie)) == 1);
  ParameterStore<double> store;
  CHECK_THROWS_AS(ClassifierParams<double>::create(store, 4, 1, rng), ArgumentError);
}

TEST_CASE("cross entropy: examples and the smoothing oracle") {
  Tape<double> tape(false);
  const std::vector<std::size_t> gold0{0};
  auto uniform = cross_entropy(tape, T2({1, 4}, {0.25, 0.25, 0.25, 0.25}), std::span(gold0), 0.0);
  CHECK(uniform.item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(uniform.item() == doctest::Approx(1.3863).epsilon(1e-4));
  auto perfect = cross_entropy(tape, T2({1, 3}, {1.0, 0.0, 0.0}), std::span(gold0), 0.0);
  CHECK(perfect.item() == doctest::Approx(0.0).epsilon(1e-12));
  auto saturated = cross_entropy(tape, T2({1, 2}, {0.0, 1.0}), std::span(gold0), 0.0);
  CHECK(saturated.item() == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto logits = random_tensor({1, 2}, rng, 3.0, false);
    std::uniform_int_distribution<std::size_t> pick(0, 1);
    const std::vector<std::size_t> gold{pick(rng)};
    const double a = logits.at(0, 0), b = logits.at(0, 1), m = std::max(a, b);
    const double lz = m + std::log(std::exp(a - m) + std::exp(b - m));
    const double logp[2] = {a - lz, b - lz};
    double want = 0.0;
    for (std::size_t k = 0; k < 2; ++k) {
      const double target = (k == gold[0] ? 0.9 : 0.0) + 0.1 / 2.0;
      want -= target * logp[k];
    }
    CHECK(softmax_cross_entropy(tape, logits, std::span(gold), 0.1).item() == doctest::Approx(want).epsilon(1e-9));
    CHECK(cross_entropy(tape, softmax(tape, logits, 1), std::span(gold), 0.1).item() ==
          doctest::Approx(want).epsilon(1e-9));
  }
  const std::vector<std::size_t> bad{3};
  CHECK_THROWS_AS(cross_entropy(tape, T2({1, 3}, {0.2, 0.3, 0.5}), std::span(bad), 0.0), ArgumentError);
  CHECK_THROWS_AS(softmax_cross_entropy(tape, T2({1, 3}, {0.2, 0.3, 0.5}), std::span(gold0), 1.0), ArgumentError);
}

TEST_CASE("cross entropy: monotone in p(gold) and gradient equals p - target") {
  Tape<double> tape(false);
  const std::vector<std::size_t> gold{1};
  double previous = std::numeric_limits<double>::infinity();
  for (int i = 1; i < 100; ++i) {
    const double p = i / 100.0;
    auto loss = cross_entropy(tape, T2({1, 3}, {(1 - p) / 2, p, (1 - p) / 2}), std::span(gold), 0.0).item();
    CHECK(loss >= 0.0);
    CHECK(loss < previous);
    previous = loss;
  }

  Rng rng(5);
  for (double eps : {0.0, 0.1}) {
    for (int trial = 0; trial < 100; ++trial) {
      auto logits = random_tensor({3, 4}, rng, 2.0);
      const std::vector<std::size_t> g{0, 3, 2};
      Tape<double> t;
      t.backward(softmax_cross_entropy(t, logits, std::span(g), eps));
      Tape<double> plain(false);
      auto p = softmax(plain, logits, 1);
      for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t k = 0; k < 4; ++k) {
          const double target = (k == g[r] ? 1.0 - eps : 0.0) + eps / 4.0;
          CHECK(std::abs(logits.grad()[r * 4 + k] - (p.at(r, k) - target) / 3.0) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("head gradient check") {
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t hid = 3;
    auto layout = make_layout({0, 2, 5});
    auto h = testing::random_away_from_zero({5, hid}, rng);
    auto g = testing::random_away_from_zero({2, hid}, rng);
    auto w = random_tensor({3 * hid, 3}, rng), b = random_tensor({3}, rng);
    const std::vector<std::size_t> gold{2, 0};
    ScalarFunction f = [=](Tape<double>& t) {
      SlstmState<double> s{h, h, g, g, 1};
      auto v = pool_head(t, s, layout);
      return softmax_cross_entropy(t, class_logits(t, v, ClassifierParams<double>{w, b}), std::span(gold), 0.1);
    };
    worst = std::max(worst, grad_check(f, {h, g, w, b}));
  }
  CHECK(worst < 1e-5);
}
