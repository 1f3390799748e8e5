#include <cmath>
#include <functional>
#include <numeric>

#include "adaslstm/errors.hpp"
#include "adaslstm/grad_check.hpp"
#include "adaslstm/ops.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adaslstm;
using testing::project;
using testing::random_away_from_zero;
using testing::random_tensor;

using T2 = Tensor<double>;

namespace {

// Runs grad_check on `instances` fresh random draws and returns the worst error.
double worst_over(std::size_t instances, Rng& rng,
                  const std::function<std::pair<ScalarFunction, std::vector<T2>>(Rng&)>& make) {
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    auto [f, inputs] = make(rng);
    worst = std::max(worst, grad_check(f, inputs));
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor construction checks the shape") {
  CHECK_THROWS_AS(T2({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(T2({1, 1, 1}, {1}), DimensionError);
  T2 t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK(T2::scalar(4).item() == 4);
}

TEST_CASE("linear: hand examples and shape errors") {
  Tape<double> tape;
  auto y = linear(tape, T2({2}, {1, 2}), T2({2, 2}, {1, 0, 0, 1}), T2({2}, {0, 0}));
  CHECK(y.values()[0] == 1);
  CHECK(y.values()[1] == 2);
  auto z = linear(tape, T2({2}, {1, 1}), T2({2, 1}, {2, 3}), T2({1}, {1}));
  CHECK(z.values()[0] == 6);
  try {
    linear(tape, T2({3}, {1, 1, 1}), T2({2, 1}, {2, 3}), T2({1}, {1}));
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[3]") != std::string::npos);
    CHECK(msg.find("[2, 1]") != std::string::npos);
  }
}

TEST_CASE("linear gradient matches central differences below 1e-6") {
  Rng rng(11);
  const double worst = worst_over(100, rng, [](Rng& r) {
    auto x = random_tensor({3, 4}, r), w = random_tensor({4, 2}, r), b = random_tensor({2}, r);
    auto proj = random_tensor({3, 2}, r, 1.0, false);
    ScalarFunction f = [=](Tape<double>& t) { return project(t, linear(t, x, w, b), proj); };
    return std::make_pair(f, std::vector<T2>{x, w, b});
  });
  CHECK(worst < 1e-6);
}

TEST_CASE("activations: values at the origin") {
  Tape<double> tape;
  CHECK(sigmoid(tape, T2({1}, {0})).values()[0] == 0.5);
  CHECK(tanh(tape, T2({1}, {0})).values()[0] == 0.0);
  CHECK(relu(tape, T2({1}, {-3})).values()[0] == 0.0);
  auto big = sigmoid(tape, T2({2}, {-800, 800}));
  CHECK(big.values()[0] >= 0.0);
  CHECK(big.values()[1] == doctest::Approx(1.0));
}

TEST_CASE("activation gradients below 1e-6") {
  Rng rng(12);
  for (auto kind : {Activation::Sigmoid, Activation::Tanh, Activation::Relu}) {
    const double worst = worst_over(100, rng, [kind](Rng& r) {
      auto x = random_away_from_zero({4, 3}, r);
      auto proj = random_tensor({4, 3}, r, 1.0, false);
      ScalarFunction f = [=](Tape<double>& t) { return project(t, activation(t, x, kind), proj); };
      return std::make_pair(f, std::vector<T2>{x});
    });
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("softmax: uniform, overflow-safe, normalized") {
  Tape<double> tape;
  auto u = softmax(tape, T2({3}, {0, 0, 0}), 0);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  auto s = softmax(tape, T2({2}, {1000, 0}), 0);
  CHECK(std::isfinite(s.values()[0]));
  CHECK(s.values()[0] == doctest::Approx(1.0));
  CHECK(s.values()[1] < 1e-300);
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto x = random_tensor({5}, rng, 20.0, false);
    auto p = softmax(tape, x, 0);
    const double total = std::accumulate(p.values().begin(), p.values().end(), 0.0);
    CHECK(std::abs(total - 1.0) <= 1e-9);
    for (double v : p.values()) CHECK(v >= 0.0);
  }
  auto m = random_tensor({4, 6}, rng, 5.0, false);
  auto rows = softmax(tape, m, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 6; ++c) total += rows.at(r, c);
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
  auto cols = softmax(tape, m, 0);
  for (std::size_t c = 0; c < 6; ++c) {
    double total = 0.0;
    for (std::size_t r = 0; r < 4; ++r) total += cols.at(r, c);
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
  CHECK_THROWS_AS(softmax(tape, m, 2), ArgumentError);
}

TEST_CASE("group_softmax: hand examples and elementwise sum") {
  Tape<double> tape;
  std::vector<T2> zeros(5, T2::zeros({4}));
  for (const auto& g : group_softmax(tape, zeros)) {
    for (double v : g.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  }
  auto two = group_softmax<double>(tape, {T2({1}, {std::log(2.0)}), T2({1}, {0.0})});
  CHECK(two[0].values()[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two[1].values()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(group_softmax<double>(tape, {}), ArgumentError);
  CHECK_THROWS_AS(group_softmax<double>(tape, {T2::zeros({2}), T2::zeros({3})}), DimensionError);

  Rng rng(5);
  std::vector<T2> gates;
  for (int k = 0; k < 5; ++k) gates.push_back(random_tensor({400}, rng, 3.0, false));
  auto out = group_softmax(tape, gates);
  for (std::size_t i = 0; i < 400; ++i) {
    double total = 0.0;
    for (const auto& g : out) total += g.values()[i];
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("pooling, concat and embedding lookup semantics") {
  Tape<double> tape;
  T2 x({2, 2}, {1, 5, 3, 2});
  auto mx = max_pool(tape, x);
  CHECK(mx.values()[0] == 3);
  CHECK(mx.values()[1] == 5);
  const std::vector<std::uint8_t> full{1, 1};
  auto mean = mean_pool(tape, x, full);
  CHECK(mean.values()[0] == 2);
  CHECK(mean.values()[1] == 3.5);
  const std::vector<std::uint8_t> first{1, 0};
  auto m1 = mean_pool(tape, x, first);
  CHECK(m1.values()[0] == 1);
  CHECK(m1.values()[1] == 5);
  const std::vector<std::uint8_t> none{0, 0};
  CHECK_THROWS_AS(max_pool(tape, x, none), ArgumentError);
  CHECK_THROWS_AS(mean_pool(tape, x, none), ArgumentError);

  auto c = concat<double>(tape, {T2({2}, {1, 2}), T2({1}, {3})}, 0);
  CHECK(c.shape() == Shape{3});
  auto rows = concat<double>(tape, {x, T2({1, 2}, {7, 8})}, 0);
  CHECK(rows.shape() == Shape{3, 2});
  CHECK(rows.at(2, 1) == 8);
  auto cols = concat<double>(tape, {x, T2({2, 1}, {7, 8})}, 1);
  CHECK(cols.shape() == Shape{2, 3});
  CHECK(cols.at(1, 2) == 8);

  T2 table({3, 2}, {0, 0, 1, 2, 3, 4});
  const std::vector<std::ptrdiff_t> ids{2, 1, -1};
  auto e = embedding_lookup(tape, table, std::span<const std::ptrdiff_t>(ids));
  CHECK(e.at(0, 1) == 4);
  CHECK(e.at(1, 0) == 1);
  CHECK(e.at(2, 0) == 0);

  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    auto m = random_tensor({5, 3}, rng, 1.0, false);
    auto a = max_pool(tape, m), b = mean_pool(tape, m);
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.values()[k] >= b.values()[k]);
  }
}

TEST_CASE("dropout: identity cases and Monte-Carlo statistics") {
  Tape<double> tape;
  Rng rng(21);
  auto x = random_tensor({10, 10}, rng);
  CHECK(dropout(tape, x, 0.0, rng, true).shares_storage(x));
  CHECK(dropout(tape, x, 0.5, rng, false).shares_storage(x));
  CHECK_THROWS_AS(dropout(tape, x, 1.0, rng, true), ArgumentError);
  CHECK_THROWS_AS(dropout(tape, x, -0.1, rng, true), ArgumentError);

  const std::size_t n = 1000000;
  T2 ones({n}, std::vector<double>(n, 1.0));
  auto y = dropout(tape, ones, 0.3, rng, true);
  std::size_t kept = 0;
  double total = 0.0;
  for (double v : y.values()) {
    if (v != 0.0) {
      ++kept;
      CHECK(v == doctest::Approx(1.0 / 0.7));
    }
    total += v;
  }
  CHECK(std::abs(static_cast<double>(kept) / n - 0.7) <= 0.01);
  CHECK(std::abs(total / n - 1.0) <= 0.01);
}

TEST_CASE("backward: sum, composite and constant losses") {
  {
    Tape<double> tape;
    T2 x({3}, {1, 2, 3}, true);
    tape.backward(sum(tape, x));
    for (double g : x.grad()) CHECK(g == 1.0);
    // accumulation across calls
    Tape<double> again;
    again.backward(sum(again, x));
    for (double g : x.grad()) CHECK(g == 2.0);
  }
  {
    Rng rng(4);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      auto w = random_tensor({4}, rng), x = random_tensor({4, 1}, rng, 1.0, false);
      ScalarFunction f = [=](Tape<double>& t) { return sum(t, sigmoid(t, matmul(t, w, x))); };
      worst = std::max(worst, grad_check(f, {w}));
    }
    CHECK(worst < 1e-5);
  }
  {
    Tape<double> tape;
    T2 w({2}, {1, 2}, true);
    w.mutable_grad();
    auto loss = T2::scalar(3.0);
    tape.backward(loss);
    for (double g : w.grad()) CHECK(g == 0.0);
  }
  {
    Tape<double> tape;
    T2 x({2}, {1, 2}, true);
    CHECK_THROWS_AS(tape.backward(scale(tape, x, 2.0)), ArgumentError);
  }
}

TEST_CASE("grad_check below 1e-5 for every differentiable op") {
  Rng rng(99);
  using Maker = std::function<std::pair<ScalarFunction, std::vector<T2>>(Rng&)>;
  auto unary = [](Shape shape, std::function<T2(Tape<double>&, const T2&)> op, bool away = false) -> Maker {
    return [=](Rng& r) {
      auto x = away ? random_away_from_zero(shape, r) : random_tensor(shape, r);
      Tape<double> probe(false);
      auto proj = random_tensor(op(probe, x).shape(), r, 1.0, false);
      ScalarFunction f = [=](Tape<double>& t) { return project(t, op(t, x), proj); };
      return std::make_pair(f, std::vector<T2>{x});
    };
  };
  auto binary = [](Shape sa, Shape sb, std::function<T2(Tape<double>&, const T2&, const T2&)> op) -> Maker {
    return [=](Rng& r) {
      auto a = random_tensor(sa, r), b = random_tensor(sb, r);
      Tape<double> probe(false);
      auto proj = random_tensor(op(probe, a, b).shape(), r, 1.0, false);
      ScalarFunction f = [=](Tape<double>& t) { return project(t, op(t, a, b), proj); };
      return std::make_pair(f, std::vector<T2>{a, b});
    };
  };
  const std::vector<std::size_t> offsets{0, 2, 5, 6};
  const std::vector<std::size_t> segment{0, 0, 1, 1, 1, 2};
  const std::vector<std::ptrdiff_t> gather{3, -1, 0, 3, 1};
  const std::vector<std::size_t> merge_idx{2, 0};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  const std::vector<std::size_t> gold{2, 0, 1};

  std::vector<std::pair<const char*, Maker>> cases{
      {"matmul", binary({3, 4}, {4, 2}, [](auto& t, auto& a, auto& b) { return matmul(t, a, b); })},
      {"matmul vector", binary({4}, {4, 3}, [](auto& t, auto& a, auto& b) { return matmul(t, a, b); })},
      {"add_bias", binary({3, 4}, {4}, [](auto& t, auto& a, auto& b) { return add_bias(t, a, b); })},
      {"add", binary({3, 4}, {3, 4}, [](auto& t, auto& a, auto& b) { return add(t, a, b); })},
      {"sub", binary({3, 4}, {3, 4}, [](auto& t, auto& a, auto& b) { return sub(t, a, b); })},
      {"mul", binary({3, 4}, {3, 4}, [](auto& t, auto& a, auto& b) { return mul(t, a, b); })},
      {"scale", unary({3, 4}, [](auto& t, auto& x) { return scale(t, x, 1.7); })},
      {"sum", unary({3, 4}, [](auto& t, auto& x) { return reshape(t, sum(t, x), {1}); })},
      {"sigmoid", unary({3, 4}, [](auto& t, auto& x) { return sigmoid(t, x); })},
      {"tanh", unary({3, 4}, [](auto& t, auto& x) { return tanh(t, x); })},
      {"relu", unary({3, 4}, [](auto& t, auto& x) { return relu(t, x); }, true)},
      {"softmax rows", unary({3, 4}, [](auto& t, auto& x) { return softmax(t, x, 1); })},
      {"softmax cols", unary({3, 4}, [](auto& t, auto& x) { return softmax(t, x, 0); })},
      {"softmax vector", unary({5}, [](auto& t, auto& x) { return softmax(t, x, 0); })},
      {"group_softmax",
       binary({3, 4}, {3, 4},
              [](auto& t, auto& a, auto& b) {
                auto g = group_softmax<double>(t, {a, b, mul(t, a, b)});
                return concat<double>(t, g, 1);
              })},
      {"concat rows", binary({2, 4}, {3, 4}, [](auto& t, auto& a, auto& b) { return concat<double>(t, {a, b}, 0); })},
      {"concat cols", binary({3, 2}, {3, 4}, [](auto& t, auto& a, auto& b) { return concat<double>(t, {a, b}, 1); })},
      {"slice_cols", unary({3, 5}, [](auto& t, auto& x) { return slice_cols(t, x, 1, 3); })},
      {"slice_rows", unary({5, 3}, [](auto& t, auto& x) { return slice_rows(t, x, 1, 3); })},
      {"transpose", unary({3, 5}, [](auto& t, auto& x) { return transpose(t, x); })},
      {"reshape", unary({3, 4}, [](auto& t, auto& x) { return reshape(t, x, {2, 6}); })},
      {"gather_rows",
       unary({4, 3}, [&](auto& t, auto& x) { return gather_rows(t, x, std::span<const std::ptrdiff_t>(gather)); })},
      {"merge_rows", binary({4, 3}, {2, 3},
                            [&](auto& t, auto& a, auto& b) {
                              return merge_rows(t, a, b, std::span<const std::size_t>(merge_idx));
                            })},
      {"select_rows", binary({4, 3}, {4, 3},
                             [&](auto& t, auto& a, auto& b) {
                               return select_rows(t, std::span<const std::uint8_t>(mask), a, b);
                             })},
      {"max_pool", unary({4, 3}, [&](auto& t, auto& x) { return max_pool(t, x, std::span<const std::uint8_t>(mask)); })},
      {"mean_pool",
       unary({4, 3}, [&](auto& t, auto& x) { return mean_pool(t, x, std::span<const std::uint8_t>(mask)); })},
      {"segment_max",
       unary({6, 3}, [&](auto& t, auto& x) { return segment_max(t, x, std::span<const std::size_t>(offsets)); })},
      {"segment_mean",
       unary({6, 3}, [&](auto& t, auto& x) { return segment_mean(t, x, std::span<const std::size_t>(offsets)); })},
      {"segment_sum",
       unary({6, 3}, [&](auto& t, auto& x) { return segment_sum(t, x, std::span<const std::size_t>(segment), 3); })},
      {"segment_softmax", unary({6, 3},
                                [&](auto& t, auto& x) {
                                  return segment_softmax(t, x, std::span<const std::size_t>(segment), 3);
                                })},
      {"dropout", unary({4, 5},
                        [](auto& t, auto& x) {
                          Rng fixed(5);
                          return dropout(t, x, 0.3, fixed, true);
                        })},
      {"cross_entropy", unary({3, 4},
                              [&](auto& t, auto& x) {
                                return reshape(t, cross_entropy(t, softmax(t, x, 1), std::span(gold), 0.1), {1});
                              })},
      {"softmax_cross_entropy", unary({3, 4},
                                      [&](auto& t, auto& x) {
                                        return reshape(t, softmax_cross_entropy(t, x, std::span(gold), 0.1), {1});
                                      })},
  };
  for (const auto& [name, make] : cases) {
    CAPTURE(name);
    CHECK(worst_over(100, rng, make) <= 1e-5);
  }
}

TEST_CASE("tensor-level invariants") {
  Rng rng(1);
  auto x = random_tensor({3, 2}, rng);
  CHECK(x.size() == x.values().size());
  x.mutable_grad();
  CHECK(x.grad().size() == x.size());
  Tape<double> tape;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(check_finite(T2({2}, {1.0, nan}), "test"), NumericalError);
}
