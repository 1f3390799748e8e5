#include <cmath>

#include "adaslstm/embed.hpp"
#include "adaslstm/errors.hpp"
#include "adaslstm/grad_check.hpp"
#include "adaslstm/sequential.hpp"
#include "adaslstm/slstm.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adaslstm;
using testing::project;
using testing::random_tensor;
using T2 = Tensor<double>;

namespace {

LstmParams<double> random_lstm(std::size_t in, std::size_t hidden, Rng& rng, double scale = 0.5) {
  return {random_tensor({in, 4 * hidden}, rng, scale), random_tensor({hidden, 4 * hidden}, rng, scale),
          random_tensor({4 * hidden}, rng, scale)};
}

}  // namespace

TEST_CASE("lstm_cell with zero weights yields a zero hidden state") {
  LstmParams<double> zero{T2::zeros({5, 12}), T2::zeros({3, 12}), T2::zeros({12})};
  Tape<double> tape;
  Rng rng(1);
  auto step = lstm_cell(tape, random_tensor({1, 5}, rng), T2::zeros({1, 3}), T2::zeros({1, 3}), zero);
  for (double v : step.hidden.values()) CHECK(v == 0.0);
  for (double v : step.cell.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(lstm_cell(tape, random_tensor({1, 5}, rng), T2::zeros({1, 3}), T2::zeros({1, 4}), zero),
                  DimensionError);
}

TEST_CASE("lstm_cell matches a scalar hand computation") {
  // one unit: gates i, f, o, u with pre-activations x*w + h*v + b
  LstmParams<double> p{T2({1, 4}, {0.5, -0.3, 0.8, 0.2}), T2({1, 4}, {0.1, 0.4, -0.2, 0.7}),
                       T2({4}, {0.05, 0.1, -0.1, 0.0})};
  const double x = 0.9, h = -0.4, c = 0.3;
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  const double i = sig(x * 0.5 + h * 0.1 + 0.05), f = sig(x * -0.3 + h * 0.4 + 0.1);
  const double o = sig(x * 0.8 + h * -0.2 - 0.1), u = std::tanh(x * 0.2 + h * 0.7);
  const double c_new = f * c + i * u;
  Tape<double> tape;
  auto step = lstm_cell(tape, T2({1, 1}, {x}), T2({1, 1}, {h}), T2({1, 1}, {c}), p);
  CHECK(step.cell.values()[0] == doctest::Approx(c_new).epsilon(1e-14));
  CHECK(step.hidden.values()[0] == doctest::Approx(o * std::tanh(c_new)).epsilon(1e-14));
}

TEST_CASE("lstm_cell gradient through three unrolled steps below 1e-4") {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = random_lstm(4, 3, rng);
    auto proj = random_tensor({2, 3}, rng, 1.0, false);
    auto x0 = random_tensor({2, 4}, rng), x1 = random_tensor({2, 4}, rng), x2 = random_tensor({2, 4}, rng);
    ScalarFunction f = [=](Tape<double>& t) {
      LstmStep<double> s{T2::zeros({2, 3}), T2::zeros({2, 3})};
      for (const auto& x : {x0, x1, x2}) s = lstm_cell(t, x, s.hidden, s.cell, p);
      return project(t, s.hidden, proj);
    };
    worst = std::max(worst, grad_check(f, {p.input_weight, p.hidden_weight, p.bias, x0, x1, x2}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("lstm hidden coordinates stay within [-1, 1]") {
  Rng rng(3);
  auto p = random_lstm(6, 5, rng, 3.0);
  Tape<double> tape(false);
  LstmStep<double> s{T2::zeros({4, 5}), T2::zeros({4, 5})};
  for (int step = 0; step < 30; ++step) {
    s = lstm_cell(tape, random_tensor({4, 6}, rng, 10.0, false), s.hidden, s.cell, p);
    for (double v : s.hidden.values()) CHECK(std::abs(v) <= 1.0);
  }
}

TEST_CASE("bilstm: reversal swaps directions under mirrored parameters") {
  Rng rng(4);
  const std::size_t in = 5, hid = 3;
  auto fwd = random_lstm(in, hid, rng), bwd = random_lstm(in, hid, rng);
  const auto offsets = testing::random_lengths(rng, 6, 7);
  auto layout = make_layout(offsets);
  auto x = random_tensor({layout.words(), in}, rng, 1.0, false);
  // reverse the words inside each sentence
  std::vector<std::ptrdiff_t> reversed(layout.words());
  for (std::size_t w = 0; w < layout.words(); ++w) {
    const auto b = layout.sentence_of_word[w];
    reversed[w] = static_cast<std::ptrdiff_t>(offsets[b] + offsets[b + 1] - 1 - w);
  }
  Tape<double> tape(false);
  auto xr = gather_rows(tape, x, std::span<const std::ptrdiff_t>(reversed));
  auto h = bilstm(tape, x, layout, fwd, bwd);
  auto hr = bilstm(tape, xr, layout, bwd, fwd);
  CHECK(h.shape() == Shape{layout.words(), 2 * hid});
  for (std::size_t w = 0; w < layout.words(); ++w) {
    const auto m = static_cast<std::size_t>(reversed[w]);
    for (std::size_t j = 0; j < hid; ++j) {
      CHECK(hr.at(w, j) == doctest::Approx(h.at(m, hid + j)).epsilon(1e-12));
      CHECK(hr.at(w, hid + j) == doctest::Approx(h.at(m, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("bilstm: length-1 sentences take one step each way") {
  Rng rng(5);
  auto fwd = random_lstm(4, 2, rng), bwd = random_lstm(4, 2, rng);
  auto layout = make_layout({0, 1, 4});
  auto x = random_tensor({4, 4}, rng, 1.0, false);
  Tape<double> tape(false);
  auto h = bilstm(tape, x, layout, fwd, bwd);
  auto row = slice_rows(tape, x, 0, 1);
  auto f1 = lstm_cell(tape, row, T2::zeros({1, 2}), T2::zeros({1, 2}), fwd);
  auto b1 = lstm_cell(tape, row, T2::zeros({1, 2}), T2::zeros({1, 2}), bwd);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(h.at(0, j) == doctest::Approx(f1.hidden.values()[j]).epsilon(1e-14));
    CHECK(h.at(0, 2 + j) == doctest::Approx(b1.hidden.values()[j]).epsilon(1e-14));
  }
  // a sentence is unaffected by its neighbours in the batch
  auto alone = bilstm(tape, slice_rows(tape, x, 1, 3), make_layout({0, 3}), fwd, bwd);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) CHECK(alone.at(r, j) == doctest::Approx(h.at(r + 1, j)).epsilon(1e-14));
}

TEST_CASE("bilstm: padding rows are zero when scattered to a padded grid") {
  Rng rng(6);
  auto fwd = random_lstm(3, 2, rng), bwd = random_lstm(3, 2, rng);
  auto layout = make_layout({0, 2, 5});
  Tape<double> tape(false);
  auto padded = to_padded(tape, bilstm(tape, random_tensor({5, 3}, rng, 1.0, false), layout, fwd, bwd), layout);
  CHECK(padded.shape() == Shape{6, 4});
  for (std::size_t j = 0; j < 4; ++j) CHECK(padded.at(2, j) == 0.0);
}

TEST_CASE("bilstm: every position sees every other position") {
  Rng rng(7);
  auto fwd = random_lstm(4, 3, rng), bwd = random_lstm(4, 3, rng);
  const std::size_t n = 6;
  auto layout = make_layout({0, n});
  auto x = random_tensor({n, 4}, rng, 1.0, false);
  Tape<double> tape(false);
  auto base = bilstm(tape, x, layout, fwd, bwd);
  for (std::size_t j = 0; j < n; ++j) {
    auto y = x.detach();
    y.mutable_values()[j * 4] += 0.5;
    auto moved = bilstm(tape, y, layout, fwd, bwd);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j) continue;
      double delta = 0.0;
      for (std::size_t k = 0; k < 6; ++k) delta += std::abs(moved.at(i, k) - base.at(i, k));
      CHECK(delta > 0.0);
    }
  }
}

TEST_CASE("position embeddings") {
  Tape<double> tape;
  const std::vector<std::size_t> zero{0};
  auto pe0 = position_embedding<double>(tape, std::span(zero), SequentialVariant::SinusoidalPosition, 16);
  for (std::size_t j = 0; j < 16; ++j) CHECK(pe0.at(0, j) == (j % 2 == 0 ? 0.0 : 1.0));

  std::vector<std::size_t> positions(512);
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
  auto all = position_embedding<double>(tape, std::span<const std::size_t>(positions),
                                        SequentialVariant::SinusoidalPosition, 64);
  for (std::size_t a = 0; a < positions.size(); ++a) {
    for (std::size_t b = a + 1; b < positions.size(); ++b) {
      double diff = 0.0;
      for (std::size_t j = 0; j < 64; ++j) diff += std::abs(all.at(a, j) - all.at(b, j));
      if (diff == 0.0) FAIL("positions " << a << " and " << b << " collide");
    }
  }
  auto direct = sinusoidal_embedding(37.0, 64);
  for (std::size_t j = 0; j < 64; ++j) CHECK(all.at(37, j) == doctest::Approx(direct[j]).epsilon(1e-14));

  Rng rng(8);
  auto table = random_tensor({10, 8}, rng);
  const std::vector<std::size_t> inside{3, 9};
  auto learned = position_embedding(tape, std::span(inside), SequentialVariant::LearnedPosition, 8, table);
  CHECK(learned.at(1, 5) == table.at(9, 5));
  const std::vector<std::size_t> outside{10};
  CHECK_THROWS_AS(position_embedding(tape, std::span(outside), SequentialVariant::LearnedPosition, 8, table),
                  ArgumentError);
  CHECK_THROWS_AS(parse_sequential_variant("gru"), ArgumentError);
  for (auto v : {SequentialVariant::BiLstm, SequentialVariant::SinusoidalPosition, SequentialVariant::LearnedPosition,
                 SequentialVariant::None})
    CHECK(parse_sequential_variant(to_string(v)) == v);
}

TEST_CASE("learned position table receives gradient") {
  ParameterStore<double> store;
  Rng rng(9);
  auto module = SequentialModule<double>::create(store, SequentialVariant::LearnedPosition, 6, 8, 20, rng);
  auto layout = make_layout({0, 3, 5});
  auto x = random_tensor({5, 6}, rng, 1.0, false);
  Tape<double> tape;
  auto out = module.forward(tape, x, layout);
  CHECK(out.tokens.shape() == Shape{5, 6});
  CHECK(out.features.shape() == Shape{5, 8});
  tape.backward(add(tape, sum(tape, out.features), sum(tape, out.tokens)));
  double used = 0.0, untouched = 0.0;
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t j = 0; j < 6; ++j) (r < 3 ? used : untouched) += std::abs(module.position_table.grad()[r * 6 + j]);
  CHECK(used > 0.0);
  CHECK(untouched == 0.0);
}

TEST_CASE("sequential module variants") {
  Rng rng(10);
  auto layout = make_layout({0, 4, 6});
  auto x = random_tensor({6, 6}, rng, 1.0, false);
  for (auto v : {SequentialVariant::BiLstm, SequentialVariant::SinusoidalPosition, SequentialVariant::LearnedPosition,
                 SequentialVariant::None}) {
    ParameterStore<double> store;
    auto module = SequentialModule<double>::create(store, v, 6, 8, 16, rng);
    Tape<double> tape(false);
    auto out = module.forward(tape, x, layout);
    CHECK(out.features.shape() == Shape{6, 8});
    const bool unchanged = testing::same_values(out.tokens, x);
    CHECK(unchanged == (v == SequentialVariant::BiLstm || v == SequentialVariant::None));
  }
  ParameterStore<double> store;
  CHECK_THROWS_AS(SequentialModule<double>::create(store, SequentialVariant::BiLstm, 6, 7, 16, rng), ArgumentError);
}

TEST_CASE("without order information distant words can be permuted freely") {
  // no Bi-LSTM, no position embedding, global coupling off: word i at depth d
  // only sees positions within d of itself
  Rng rng(11);
  const std::size_t in = 5, hid = 4, n = 12, depth = 2, i = 2;
  ParameterStore<double> store;
  auto module = SequentialModule<double>::create(store, SequentialVariant::None, in, hid, 16, rng);
  auto params = SlstmParams<double>::create(store, in, hid, rng);
  params.v = T2::zeros(params.v.shape());
  auto layout = make_layout({0, n});
  auto x = random_tensor({n, in}, rng, 1.0, false);

  auto run = [&](const T2& tokens) {
    Tape<double> tape(false);
    auto seq = module.forward(tape, tokens, layout);
    auto proj = project_inputs(tape, seq.tokens, params);
    auto state = initial_state<double>(layout, hid);
    for (std::size_t l = 0; l < depth; ++l) {
      state = slstm_layer(tape, proj, state, layout, params);
      state.g = T2::zeros(state.g.shape());
      state.cg = T2::zeros(state.cg.shape());
    }
    return state.h;
  };
  auto base = run(x);
  // shuffle positions 6..11, all farther than `depth` from i
  std::vector<std::ptrdiff_t> perm(n);
  for (std::size_t k = 0; k < n; ++k) perm[k] = static_cast<std::ptrdiff_t>(k);
  std::reverse(perm.begin() + 6, perm.end());
  Tape<double> tape(false);
  auto shuffled = run(gather_rows(tape, x, std::span<const std::ptrdiff_t>(perm)));
  for (std::size_t j = 0; j < hid; ++j) CHECK(shuffled.at(i, j) == base.at(i, j));
  // a word near the shuffled span does notice
  double delta = 0.0;
  for (std::size_t j = 0; j < hid; ++j) delta += std::abs(shuffled.at(5, j) - base.at(5, j));
  CHECK(delta > 0.0);
}
