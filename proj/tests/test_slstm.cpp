#include <cmath>

#include "adaslstm/errors.hpp"
#include "adaslstm/grad_check.hpp"
#include "adaslstm/slstm.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace adaslstm;
using testing::project;
using testing::random_tensor;
using T2 = Tensor<double>;

namespace {

SlstmParams<double> random_params(std::size_t in, std::size_t hid, Rng& rng, double scale = 0.5) {
  return {random_tensor({3 * hid, 7 * hid}, rng, scale), random_tensor({in, 7 * hid}, rng, scale),
          random_tensor({hid, 7 * hid}, rng, scale),     random_tensor({7 * hid}, rng, scale),
          random_tensor({hid, 3 * hid}, rng, scale),     random_tensor({hid, 2 * hid}, rng, scale),
          random_tensor({hid, hid}, rng, scale),         random_tensor({3 * hid}, rng, scale)};
}

SlstmParams<double> zero_params(std::size_t in, std::size_t hid) {
  return {T2::zeros({3 * hid, 7 * hid}), T2::zeros({in, 7 * hid}), T2::zeros({hid, 7 * hid}), T2::zeros({7 * hid}),
          T2::zeros({hid, 3 * hid}),     T2::zeros({hid, 2 * hid}), T2::zeros({hid, hid}),     T2::zeros({3 * hid})};
}

SlstmState<double> random_state(const SentenceLayout& layout, std::size_t hid, Rng& rng) {
  return {random_tensor({layout.words(), hid}, rng), random_tensor({layout.words(), hid}, rng),
          random_tensor({layout.sentences(), hid}, rng), random_tensor({layout.sentences(), hid}, rng), 0};
}

using Vec = std::vector<double>;
double sig(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Scalar reference of one layer for one sentence, written over an explicit
// (n + 2)-row padded grid: rows 0 and n + 1 are the zero padding words.
struct Reference {
  std::vector<Vec> h, c;
  Vec g, cg;
};

Reference reference_layer(const std::vector<Vec>& x, const std::vector<Vec>& h, const std::vector<Vec>& c,
                          const Vec& g, const Vec& cg, const SlstmParams<double>& p) {
  const std::size_t n = x.size(), hid = g.size(), in = x[0].size();
  std::vector<Vec> hp(n + 2, Vec(hid, 0.0)), cp(n + 2, Vec(hid, 0.0));
  for (std::size_t i = 0; i < n; ++i) hp[i + 1] = h[i], cp[i + 1] = c[i];
  Reference out{std::vector<Vec>(n, Vec(hid)), std::vector<Vec>(n, Vec(hid)), Vec(hid), Vec(hid)};
  for (std::size_t i = 1; i <= n; ++i) {
    Vec pre(7 * hid, 0.0);
    for (std::size_t col = 0; col < 7 * hid; ++col) {
      double s = p.b.values()[col];
      for (std::size_t k = 0; k < hid; ++k) {
        s += hp[i - 1][k] * p.w.at(k, col) + hp[i][k] * p.w.at(hid + k, col) + hp[i + 1][k] * p.w.at(2 * hid + k, col);
        s += g[k] * p.v.at(k, col);
      }
      for (std::size_t k = 0; k < in; ++k) s += x[i - 1][k] * p.u.at(k, col);
      pre[col] = s;
    }
    for (std::size_t k = 0; k < hid; ++k) {
      auto gate = [&](WordGate w) { return pre[static_cast<std::size_t>(w) * hid + k]; };
      const double l = std::exp(sig(gate(WordGate::Left))), r = std::exp(sig(gate(WordGate::Right)));
      const double f = std::exp(sig(gate(WordGate::Forget))), s = std::exp(sig(gate(WordGate::Sentence)));
      const double ig = std::exp(sig(gate(WordGate::Input)));
      const double z = l + r + f + s + ig;
      const double u = std::tanh(gate(WordGate::Candidate)), o = sig(gate(WordGate::Output));
      const double cell = (l * cp[i - 1][k] + f * cp[i][k] + r * cp[i + 1][k] + s * cg[k] + ig * u) / z;
      out.c[i - 1][k] = cell;
      out.h[i - 1][k] = o * std::tanh(cell);
    }
  }
  Vec mean(hid, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < hid; ++k) mean[k] += h[i][k] / static_cast<double>(n);
  for (std::size_t k = 0; k < hid; ++k) {
    double fg = p.global_b.values()[k], fo = p.global_b.values()[2 * hid + k], fw_g = p.global_b.values()[hid + k];
    for (std::size_t m = 0; m < hid; ++m) {
      fg += g[m] * p.global_w.at(m, k) + mean[m] * p.global_u_mean.at(m, k);
      fo += g[m] * p.global_w.at(m, 2 * hid + k) + mean[m] * p.global_u_mean.at(m, hid + k);
      fw_g += g[m] * p.global_w.at(m, hid + k);
    }
    Vec fw(n);
    double z = std::exp(sig(fg));
    for (std::size_t i = 0; i < n; ++i) {
      double s = fw_g;
      for (std::size_t m = 0; m < hid; ++m) s += h[i][m] * p.global_u_word.at(m, k);
      fw[i] = std::exp(sig(s));
      z += fw[i];
    }
    double cell = std::exp(sig(fg)) / z * cg[k];
    for (std::size_t i = 0; i < n; ++i) cell += fw[i] / z * c[i][k];
    out.cg[k] = cell;
    out.g[k] = sig(fo) * std::tanh(cell);
  }
  return out;
}

std::vector<Vec> rows_of(const T2& t, std::size_t begin, std::size_t count) {
  std::vector<Vec> out;
  for (std::size_t r = begin; r < begin + count; ++r) {
    Vec row(t.cols());
    for (std::size_t j = 0; j < t.cols(); ++j) row[j] = t.at(r, j);
    out.push_back(row);
  }
  return out;
}

}  // namespace

TEST_CASE("zero parameters give uniform gates and zero states") {
  const std::size_t hid = 6, in = 4;
  auto p = zero_params(in, hid);
  auto layout = make_layout({0, 3, 4});
  auto state = initial_state<double>(layout, hid);
  Rng rng(1);
  Tape<double> tape;
  auto proj = project_inputs(tape, random_tensor({4, in}, rng), p);
  auto words = word_transition(tape, proj, state, layout, p);
  REQUIRE(words.gates.size() == 5);
  for (const auto& g : words.gates)
    for (double v : g.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  for (double v : words.h.values()) CHECK(v == 0.0);
  for (double v : words.c.values()) CHECK(v == 0.0);

  auto global = global_transition(tape, state, layout, p);
  // sentence 1 has one word: a two-way split
  for (std::size_t j = 0; j < hid; ++j) {
    CHECK(global.global_gates.at(1, j) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(global.word_gates.at(3, j) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(global.global_gates.at(0, j) == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("one layer agrees with a scalar reference on padded grids") {
  Rng rng(2);
  const std::size_t hid = 3, in = 4;
  for (int trial = 0; trial < 10; ++trial) {
    auto p = random_params(in, hid, rng);
    const auto offsets = testing::random_lengths(rng, 4, 6);
    auto layout = make_layout(offsets);
    auto x = random_tensor({layout.words(), in}, rng);
    auto prev = random_state(layout, hid, rng);
    Tape<double> tape(false);
    auto next = slstm_layer(tape, project_inputs(tape, x, p), prev, layout, p);
    CHECK(next.layer == 1);
    for (std::size_t b = 0; b < layout.sentences(); ++b) {
      const auto n = layout.length(b), o = offsets[b];
      auto want = reference_layer(rows_of(x, o, n), rows_of(prev.h, o, n), rows_of(prev.c, o, n),
                                  rows_of(prev.g, b, 1)[0], rows_of(prev.cg, b, 1)[0], p);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < hid; ++k) {
          CHECK(next.h.at(o + i, k) == doctest::Approx(want.h[i][k]).epsilon(1e-12));
          CHECK(next.c.at(o + i, k) == doctest::Approx(want.c[i][k]).epsilon(1e-12));
        }
      }
      for (std::size_t k = 0; k < hid; ++k) {
        CHECK(next.g.at(b, k) == doctest::Approx(want.g[k]).epsilon(1e-12));
        CHECK(next.cg.at(b, k) == doctest::Approx(want.cg[k]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("gate sums are one elementwise") {
  Rng rng(3);
  const std::size_t hid = 5, in = 3;
  auto p = random_params(in, hid, rng, 2.0);
  auto layout = make_layout(testing::random_lengths(rng, 6, 9));
  auto prev = random_state(layout, hid, rng);
  Tape<double> tape(false);
  auto words = word_transition(tape, project_inputs(tape, random_tensor({layout.words(), in}, rng), p), prev, layout, p);
  for (std::size_t e = 0; e < layout.words() * hid; ++e) {
    double total = 0.0;
    for (const auto& g : words.gates) total += g.values()[e];
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
  auto global = global_transition(tape, prev, layout, p);
  for (std::size_t b = 0; b < layout.sentences(); ++b) {
    for (std::size_t k = 0; k < hid; ++k) {
      double total = global.global_gates.at(b, k);
      for (std::size_t w = layout.offsets[b]; w < layout.offsets[b + 1]; ++w) total += global.word_gates.at(w, k);
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("mean of identical word states is that state") {
  // with only U_mean active for the output gate, g = sigmoid(mean * U) * tanh(cg)
  const std::size_t hid = 2;
  auto p = zero_params(1, hid);
  p.global_u_mean = T2({hid, 2 * hid}, {0, 0, 1, 0, 0, 0, 0, 1});
  auto layout = make_layout({0, 4});
  SlstmState<double> s{T2({4, hid}, {0.3, -0.7, 0.3, -0.7, 0.3, -0.7, 0.3, -0.7}), T2({4, hid}, std::vector(8, 1.0)),
                       T2::zeros({1, hid}), T2::zeros({1, hid}), 0};
  Tape<double> tape(false);
  auto global = global_transition(tape, s, layout, p);
  for (std::size_t k = 0; k < hid; ++k) {
    const double mean = k == 0 ? 0.3 : -0.7;
    // five equal gates of 0.2, four words with cell 1
    CHECK(global.cg.at(0, k) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(global.g.at(0, k) == doctest::Approx(sig(mean) * std::tanh(0.8)).epsilon(1e-14));
  }
}

TEST_CASE("transition errors") {
  Rng rng(4);
  auto p = random_params(3, 4, rng);
  auto layout = make_layout({0, 2});
  Tape<double> tape(false);
  auto proj = project_inputs(tape, random_tensor({2, 3}, rng), p);
  SlstmState<double> bad{T2::zeros({2, 4}), T2::zeros({2, 5}), T2::zeros({1, 4}), T2::zeros({1, 4}), 0};
  CHECK_THROWS_AS(word_transition(tape, proj, bad, layout, p), DimensionError);
  auto wrong_width = initial_state<double>(layout, 5);
  CHECK_THROWS_AS(word_transition(tape, proj, wrong_width, layout, p), DimensionError);
  CHECK_THROWS_AS(global_transition(tape, wrong_width, layout, p), DimensionError);
  CHECK_THROWS_AS(full_stack(tape, random_tensor({2, 3}, rng), layout, 0, p, initial_state<double>(layout, 4)),
                  ArgumentError);
}

TEST_CASE("gradient check of the word and global transitions below 1e-4") {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t hid = 3, in = 2;
    auto p = random_params(in, hid, rng);
    auto layout = make_layout(testing::random_lengths(rng, 2, 4));
    auto prev = random_state(layout, hid, rng);
    auto x = random_tensor({layout.words(), in}, rng);
    auto wh = random_tensor({layout.words(), hid}, rng, 1.0, false);
    auto wc = random_tensor({layout.words(), hid}, rng, 1.0, false);
    auto wg = random_tensor({layout.sentences(), hid}, rng, 1.0, false);
    auto wcg = random_tensor({layout.sentences(), hid}, rng, 1.0, false);
    ScalarFunction f = [=](Tape<double>& t) {
      auto next = slstm_layer(t, project_inputs(t, x, p), prev, layout, p);
      auto s = add(t, project(t, next.h, wh), project(t, next.c, wc));
      return add(t, s, add(t, project(t, next.g, wg), project(t, next.cg, wcg)));
    };
    worst = std::max(worst, grad_check(f, {p.w, p.u, p.v, p.b, p.global_w, p.global_u_mean, p.global_u_word,
                                           p.global_b, x, prev.h, prev.c, prev.g, prev.cg}));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("full_stack: one layer is one synchronized update; runs are deterministic") {
  Rng rng(6);
  const std::size_t hid = 4, in = 3;
  auto p = random_params(in, hid, rng);
  auto layout = make_layout({0, 5, 7});
  auto x = random_tensor({7, in}, rng, 1.0, false);
  auto init = initial_state<double>(layout, hid);
  Tape<double> tape(false);
  auto one = full_stack(tape, x, layout, 1, p, init);
  auto manual = slstm_layer(tape, project_inputs(tape, x, p), init, layout, p);
  CHECK(testing::same_values(one.h, manual.h));
  CHECK(testing::same_values(one.g, manual.g));

  TransitionCounter counter;
  std::vector<SlstmState<double>> trace;
  auto deep = full_stack(tape, x, layout, 4, p, init, &counter, &trace);
  auto again = full_stack(tape, x, layout, 4, p, init);
  CHECK(testing::same_values(deep.h, again.h));
  CHECK(testing::same_values(deep.cg, again.cg));
  CHECK(counter.word == 4 * 7);
  CHECK(counter.global == 4 * 2);
  REQUIRE(trace.size() == 5);
  CHECK(trace[0].layer == 0);
  CHECK(testing::same_values(trace[4].h, deep.h));
}

TEST_CASE("receptive field grows by one word per layer") {
  Rng rng(7);
  const std::size_t hid = 3, in = 4, n = 11;
  auto p = random_params(in, hid, rng);
  p.v = T2::zeros(p.v.shape());
  auto layout = make_layout({0, n});
  auto x = random_tensor({n, in}, rng, 1.0, false);
  auto run = [&](const T2& tokens, std::size_t layers) {
    Tape<double> tape(false);
    auto proj = project_inputs(tape, tokens, p);
    auto state = initial_state<double>(layout, hid);
    for (std::size_t l = 0; l < layers; ++l) {
      state = slstm_layer(tape, proj, state, layout, p);
      state.g = T2::zeros(state.g.shape());  // global coupling off
      state.cg = T2::zeros(state.cg.shape());
    }
    return state.h;
  };
  for (std::size_t layers = 1; layers <= 3; ++layers) {
    auto base = run(x, layers);
    for (std::size_t j = 0; j < n; ++j) {
      auto y = x.detach();
      for (std::size_t k = 0; k < in; ++k) y.mutable_values()[j * in + k] += 1.0;
      auto moved = run(y, layers);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t dist = i > j ? i - j : j - i;
        double delta = 0.0;
        for (std::size_t k = 0; k < hid; ++k) delta += std::abs(moved.at(i, k) - base.at(i, k));
        // zero initial states: layer l reaches l - 1 neighbours, inside the bound of l
        if (dist > layers) CHECK(delta == 0.0);
        if (dist < layers) CHECK(delta > 0.0);
      }
    }
  }
}

TEST_CASE("simultaneity: row order inside a layer does not matter") {
  Rng rng(8);
  const std::size_t hid = 5, in = 3;
  auto p = random_params(in, hid, rng);
  auto layout = make_layout(testing::random_lengths(rng, 5, 8));
  auto prev = random_state(layout, hid, rng);
  auto x = random_tensor({layout.words(), in}, rng, 1.0, false);
  std::vector<std::size_t> forward(layout.words()), reverse(layout.words());
  for (std::size_t i = 0; i < layout.words(); ++i) forward[i] = i, reverse[i] = layout.words() - 1 - i;
  Tape<double> tape(false);
  auto proj = project_inputs(tape, x, p);
  auto a = word_transition(tape, proj, prev, layout, p, std::span<const std::size_t>(forward));
  auto b = word_transition(tape, proj, prev, layout, p, std::span<const std::size_t>(reverse));
  for (std::size_t i = 0; i < layout.words(); ++i) {
    const std::size_t j = layout.words() - 1 - i;
    for (std::size_t k = 0; k < hid; ++k) {
      CHECK(a.h.at(i, k) == b.h.at(j, k));
      CHECK(a.c.at(i, k) == b.c.at(j, k));
    }
  }
  // one row at a time, in reverse, matches the batched update too
  auto all = word_transition(tape, proj, prev, layout, p);
  for (std::size_t r : reverse) {
    const std::size_t one[] = {r};
    auto single = word_transition(tape, proj, prev, layout, p, std::span<const std::size_t>(one));
    for (std::size_t k = 0; k < hid; ++k) CHECK(single.h.at(0, k) == doctest::Approx(all.h.at(r, k)).epsilon(1e-14));
  }
}

TEST_CASE("padding rows stay zero at every layer") {
  Rng rng(9);
  const std::size_t hid = 4;
  auto p = random_params(3, hid, rng);
  auto layout = make_layout({0, 1, 4, 6});
  std::vector<SlstmState<double>> trace;
  Tape<double> tape(false);
  full_stack(tape, random_tensor({6, 3}, rng, 1.0, false), layout, 5, p, initial_state<double>(layout, hid), nullptr,
             &trace);
  for (const auto& s : trace) {
    for (std::size_t b = 0; b < layout.sentences(); ++b) {
      auto grid = padded_sentence(s.h, layout, b);
      auto cells = padded_sentence(s.c, layout, b);
      const auto n = layout.length(b);
      REQUIRE(grid.rows() == n + 2);
      CHECK(grid.shape() == cells.shape());
      for (std::size_t k = 0; k < hid; ++k) {
        CHECK(grid.at(0, k) == 0.0);
        CHECK(grid.at(n + 1, k) == 0.0);
        CHECK(cells.at(n + 1, k) == 0.0);
      }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < hid; ++k) CHECK(grid.at(i + 1, k) == s.h.at(layout.offsets[b] + i, k));
    }
  }
  CHECK_THROWS_AS(padded_sentence(trace[0].h, layout, 3), ArgumentError);
}

TEST_CASE("parameter memory does not depend on depth") {
  Rng rng(10);
  ParameterStore<double> store;
  auto p = SlstmParams<double>::create(store, 6, 4, rng);
  const auto before = store.scalar_count();
  CHECK(before == 3 * 4 * 28 + 6 * 28 + 4 * 28 + 28 + 4 * 12 + 4 * 8 + 16 + 12);
  auto layout = make_layout({0, 3});
  auto x = random_tensor({3, 6}, rng, 1.0, false);
  for (std::size_t L : {1, 3, 9}) {
    Tape<double> tape(false);
    full_stack(tape, x, layout, L, p, initial_state<double>(layout, 4));
    CHECK(store.scalar_count() == before);
  }
  // float instantiation runs too
  ParameterStore<float> fstore;
  auto fp = SlstmParams<float>::create(fstore, 6, 4, rng);
  Tape<float> ftape(false);
  auto out = full_stack(ftape, Tensor<float>::zeros({3, 6}), layout, 2, fp, initial_state<float>(layout, 4));
  CHECK(out.h.shape() == Shape{3, 4});
}
