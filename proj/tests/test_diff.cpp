#include <catch_amalgamated.hpp>

#include <cmath>

#include "aread/params.hpp"
#include "aread/rng.hpp"
#include "aread/tape.hpp"
#include "helpers.hpp"

using namespace aread;
using testutil::max_grad_rel_err;

namespace {

void randomize(ParameterStore& store, Rng& rng, double lo = -1.0,
               double hi = 1.0) {
  for (auto& [name, e] : store.entries())
    for (double& v : e.value.data) v = rng.uniform(lo, hi);
}

}  // namespace

TEST_CASE("relu worked example") {
  ParameterStore store;
  Array2& x = store.create("x", 1, 2);
  x.at(0, 0) = -1.0;
  x.at(0, 1) = 2.0;
  Tape t;
  Value y = t.relu(t.param(store, "x"));
  REQUIRE(t.val(y).at(0, 0) == 0.0);
  REQUIRE(t.val(y).at(0, 1) == 2.0);
  // upstream [[1,1]] through the sum
  t.backward(t.mean_all(t.scale(y, 2.0)));
  REQUIRE(store.entry("x").grad.at(0, 0) == 0.0);
  REQUIRE(store.entry("x").grad.at(0, 1) == 1.0);
}

TEST_CASE("softmax_columns symmetry and normalization") {
  ParameterStore store;
  store.create("x", 2, 1);
  Tape t;
  Value y = t.softmax_columns(t.param(store, "x"));
  REQUIRE_THAT(t.val(y).at(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));
  REQUIRE_THAT(t.val(y).at(1, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));

  ParameterStore s2;
  Rng rng(3);
  Array2& x = s2.create("x", 5, 4);
  for (double& v : x.data) v = rng.uniform(-3, 3);
  Tape t2;
  Value sm = t2.softmax_columns(t2.param(s2, "x"));
  for (int j = 0; j < 4; ++j) {
    double sum = 0.0;
    for (int i = 0; i < 5; ++i) {
      REQUIRE(t2.val(sm).at(i, j) >= 0.0);
      sum += t2.val(sm).at(i, j);
    }
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("matmul gradient matches finite differences tightly") {
  ParameterStore store;
  store.create("a", 3, 4);
  store.create("b", 4, 2);
  Rng rng(17);
  randomize(store, rng);
  double err = max_grad_rel_err(store, [&](Tape& t) {
    return t.mean_all(t.matmul(t.param(store, "a"), t.param(store, "b")));
  });
  REQUIRE(err < 1e-6);
}

TEST_CASE("bce worked values") {
  ParameterStore store;
  Array2& p = store.create("p", 1, 1);
  p.at(0, 0) = 0.5;
  {
    Tape t;
    Value l = t.bce(t.param(store, "p"), {1.0});
    REQUIRE_THAT(t.val(l).at(0, 0),
                 Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));
  }
  p.at(0, 0) = 1.0;  // exact hit is clamped
  {
    Tape t;
    Value l = t.bce(t.param(store, "p"), {1.0});
    REQUIRE(t.val(l).at(0, 0) <= -std::log(1.0 - 1e-7) + 1e-15);
    REQUIRE(t.val(l).at(0, 0) >= 0.0);
  }
  p.at(0, 0) = 0.3;
  double err = max_grad_rel_err(
      store,
      [&](Tape& t) { return t.mean_all(t.bce(t.param(store, "p"), {1.0})); },
      1e-7);
  REQUIRE(err < 1e-5);
}

TEST_CASE("every primitive matches finite differences") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    int r = 2 + rng.index(6), c = 2 + rng.index(6), k = 2 + rng.index(6);
    {
      ParameterStore s;
      s.create("a", r, k);
      s.create("b", k, c);
      randomize(s, rng);
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                return t.mean_all(
                    t.matmul(t.param(s, "a"), t.param(s, "b")));
              }) < 1e-4);
    }
    {
      ParameterStore s;
      s.create("x", r, c);
      s.create("bias", 1, c);
      randomize(s, rng);
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                return t.mean_all(t.sigmoid(
                    t.add_bias(t.param(s, "x"), t.param(s, "bias"))));
              }) < 1e-4);
    }
    {
      ParameterStore s;
      s.create("x", r, c);
      s.create("y", r, c);
      randomize(s, rng);
      // keep relu inputs away from the kink, where finite differences
      // are undefined
      Array2 &xv = s.entry("x").value, &yv = s.entry("y").value;
      for (size_t i = 0; i < xv.size(); ++i) {
        double pre = 1.7 * xv.data[i] + yv.data[i];
        if (std::abs(pre) < 1e-3) yv.data[i] += pre >= 0 ? 1e-3 : -1e-3;
      }
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                return t.mean_all(t.relu(
                    t.add(t.scale(t.param(s, "x"), 1.7), t.param(s, "y"))));
              }) < 1e-4);
    }
    {
      ParameterStore s;
      s.create("x", r, c);
      randomize(s, rng);
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                return t.mean_all(
                    t.sigmoid(t.softmax_columns(t.param(s, "x"))));
              }) < 1e-4);
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                return t.mean_all(
                    t.sigmoid(t.softmax_rows(t.param(s, "x"))));
              }) < 1e-4);
    }
    {
      ParameterStore s;
      s.create("x", r, c);
      s.create("y", r, k);
      randomize(s, rng);
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                Value cat = t.concat_cols({t.param(s, "x"), t.param(s, "y")});
                return t.mean_all(t.sigmoid(t.slice_cols(cat, 1, c + k - 1)));
              }) < 1e-4);
    }
    {
      ParameterStore s;
      s.create("tab", r + 2, c);
      randomize(s, rng);
      std::vector<int> idx;
      for (int i = 0; i < r; ++i) idx.push_back(rng.index(r + 2));
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                return t.mean_all(
                    t.sigmoid(t.gather_rows(t.param(s, "tab"), idx)));
              }) < 1e-4);
    }
    {
      ParameterStore s;
      s.create("x", r, c);
      s.create("col", r, 1);
      randomize(s, rng);
      // keep the divisor away from zero
      for (double& v : s.entry("col").value.data) v = 0.5 + std::abs(v);
      std::vector<double> w;
      for (int j = 0; j < c; ++j) w.push_back(rng.uniform(-1, 1));
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                Value m = t.mul_colvec(t.param(s, "x"), t.param(s, "col"));
                Value d = t.div_colvec(m, t.param(s, "col"));
                return t.mean_all(t.sigmoid(t.mul_const_rowvec(d, w)));
              }) < 1e-4);
    }
    {
      ParameterStore s;
      s.create("x", r, c);
      randomize(s, rng, 0.05, 0.95);
      std::vector<double> y;
      for (int i = 0; i < r; ++i) y.push_back(double(rng.index(2)));
      REQUIRE(max_grad_rel_err(s, [&](Tape& t) {
                Value p = t.sigmoid(t.row_sum(t.param(s, "x")));
                return t.mean_all(t.bce(p, y));
              }) < 1e-4);
    }
  }
}

TEST_CASE("gradients accumulate additively over reuse") {
  ParameterStore s;
  Array2& x = s.create("x", 1, 1);
  x.at(0, 0) = 0.7;
  Tape t;
  Value v = t.param(s, "x");
  t.backward(t.mean_all(t.add(v, v)));  // d/dx (2x) = 2
  REQUIRE_THAT(s.entry("x").grad.at(0, 0),
               Catch::Matchers::WithinAbs(2.0, 1e-12));
}

TEST_CASE("shape mismatches raise named errors") {
  ParameterStore s;
  s.create("a", 2, 3);
  s.create("b", 2, 3);
  Tape t;
  REQUIRE_THROWS_WITH(t.matmul(t.param(s, "a"), t.param(s, "b")),
                      Catch::Matchers::ContainsSubstring("matmul"));
  REQUIRE_THROWS_WITH(t.add_bias(t.param(s, "a"), t.param(s, "b")),
                      Catch::Matchers::ContainsSubstring("add_bias"));
  REQUIRE_THROWS_AS(t.backward(t.param(s, "a")), std::invalid_argument);
}

TEST_CASE("adam single-scalar hand trace") {
  ParameterStore s;
  s.create("w", 1, 1).at(0, 0) = 1.0;
  s.entry("w").grad.at(0, 0) = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  s.adam_step(cfg);
  // t=1: mhat = 1, vhat = 1 -> w' = 1 - 0.1 * 1/(1+eps)
  double expect = 1.0 - 0.1 * (1.0 / (1.0 + cfg.eps));
  REQUIRE_THAT(s.entry("w").value.at(0, 0),
               Catch::Matchers::WithinAbs(expect, 1e-15));
  REQUIRE(s.step_count() == 1);
  REQUIRE(s.entry("w").grad.at(0, 0) == 0.0);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  ParameterStore s;
  s.create("w", 2, 2).fill(0.5);
  AdamConfig cfg;
  s.adam_step(cfg);
  for (double v : s.entry("w").value.data) REQUIRE(v == 0.5);
}

TEST_CASE("adam two steps match an independent scalar oracle") {
  ParameterStore s;
  s.create("w", 1, 1).at(0, 0) = 2.0;
  AdamConfig cfg;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.01;

  // independent scalar re-implementation
  double w = 2.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    double g = 0.3 + 0.01 * w;  // grad 0.3 plus L2
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    double mhat = m / (1 - std::pow(cfg.beta1, t));
    double vhat = v / (1 - std::pow(cfg.beta2, t));
    w -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);

    s.entry("w").grad.at(0, 0) = 0.3;
    s.adam_step(cfg);
  }
  REQUIRE_THAT(s.entry("w").value.at(0, 0),
               Catch::Matchers::WithinAbs(w, 1e-14));
}

TEST_CASE("adam rejects non-finite gradients by name") {
  ParameterStore s;
  s.create("bad", 1, 1);
  s.entry("bad").grad.at(0, 0) = std::nan("");
  REQUIRE_THROWS_WITH(s.adam_step(AdamConfig{}),
                      Catch::Matchers::ContainsSubstring("bad"));
}

TEST_CASE("snapshot and restore are bitwise exact and idempotent") {
  ParameterStore s;
  Rng rng(31);
  s.create("a", 3, 3);
  s.create("b", 2, 5);
  randomize(s, rng);
  ParamSnapshot snap = s.snapshot();
  uint64_t h0 = s.state_hash();

  randomize(s, rng);
  s.entry("a").grad.fill(1.0);
  s.adam_step(AdamConfig{});
  REQUIRE(s.state_hash() != h0);

  s.restore(snap);
  REQUIRE(s.state_hash() == h0);
  REQUIRE(s.state_equals(snap));
  s.restore(snap);
  REQUIRE(s.state_hash() == h0);
}

TEST_CASE("restore rejects layout mismatches") {
  ParameterStore s;
  s.create("a", 2, 2);
  ParamSnapshot snap = s.snapshot();
  ParameterStore other;
  other.create("a", 2, 2);
  other.create("b", 1, 1);
  REQUIRE_THROWS_AS(other.restore(snap), std::runtime_error);
}

TEST_CASE("five training steps from a snapshot are deterministic") {
  auto run = [](ParameterStore& s, const ParamSnapshot& snap) {
    s.restore(snap);
    AdamConfig cfg;
    cfg.lr = 0.01;
    for (int i = 0; i < 5; ++i) {
      Tape t;
      Value loss = t.mean_all(
          t.bce(t.sigmoid(t.matmul(t.param(s, "a"), t.param(s, "b"))),
                {1.0, 0.0, 1.0}));
      t.backward(loss);
      s.adam_step(cfg);
    }
    return s.state_hash();
  };
  ParameterStore s;
  Rng rng(37);
  s.create("a", 3, 4);
  s.create("b", 4, 1);
  randomize(s, rng);
  ParamSnapshot snap = s.snapshot();
  REQUIRE(run(s, snap) == run(s, snap));
}

TEST_CASE("checkpoint round trip preserves values, moments, and meta") {
  std::string dir = testutil::tmpdir("aread_ck_test");
  ParameterStore s;
  Rng rng(41);
  s.create("w1", 4, 3);
  s.create("w2", 3, 1);
  randomize(s, rng);
  s.entry("w1").grad.fill(0.2);
  s.adam_step(AdamConfig{});
  nlohmann::json meta = {{"note", "x"}, {"k", 3}};
  s.save(dir + "/ck.bin", meta);

  ParameterStore l;
  nlohmann::json got = l.load(dir + "/ck.bin");
  REQUIRE(got == meta);
  REQUIRE(l.step_count() == s.step_count());
  REQUIRE(l.state_hash() == s.state_hash());
}

TEST_CASE("checkpoint rejects bad magic") {
  std::string dir = testutil::tmpdir("aread_ck_bad");
  {
    std::ofstream f(dir + "/bad.bin", std::ios::binary);
    f << "NOPE1234";
  }
  ParameterStore l;
  REQUIRE_THROWS_AS(l.load(dir + "/bad.bin"), std::runtime_error);
}
