#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seqforge/graph.hpp"
#include "seqforge/nn.hpp"
#include "seqforge/rng.hpp"

using namespace seqforge;

TEST_CASE("forward: sigmoid of w*x+b at zero is one half") {
  Graph g;
  Parameter w("w", Tensor::matrix(1, 1, {1.0}));
  Parameter b("b", Tensor::matrix(1, 1, {0.0}));
  int x = g.input();
  int out = g.sigmoid(g.add(g.matmul(g.param(w), x), g.param(b)));
  g.forward({{x, Tensor::matrix(1, 1, {0.0})}});
  CHECK(g.value(out)[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("forward: tanh(0) = 0") {
  Graph g;
  int x = g.input();
  int y = g.tanh(x);
  g.forward({{x, Tensor::scalar(0.0)}});
  CHECK(g.value(y)[0] == 0.0);
}

TEST_CASE("forward: softmax over logits (1,2,3)") {
  Graph g;
  int x = g.input();
  int y = g.softmax(x);
  g.forward({{x, Tensor::vec({1.0, 2.0, 3.0})}});
  CHECK(g.value(y)[0] == doctest::Approx(0.09003057317).epsilon(1e-5));
  CHECK(g.value(y)[1] == doctest::Approx(0.24472847106).epsilon(1e-5));
  CHECK(g.value(y)[2] == doctest::Approx(0.66524095578).epsilon(1e-5));
}

TEST_CASE("forward: unbound input reported") {
  Graph g;
  int x = g.input();
  int y = g.tanh(x);
  (void)y;
  CHECK_THROWS_WITH_AS(g.forward({}), doctest::Contains("unbound input"), Error);
}

TEST_CASE("forward: shape mismatch names the node") {
  Graph g;
  int a = g.input();
  int b = g.input();
  int c = g.matmul(a, b);
  CHECK_THROWS_WITH_AS(
      g.forward({{a, Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6})},
                 {b, Tensor::matrix(2, 2, {1, 0, 0, 1})}}),
      doctest::Contains(("node #" + std::to_string(c)).c_str()), Error);
}

TEST_CASE("backward: single hidden unit binary classifier gradients") {
  // mu = sigmoid(w * phi + b); Bernoulli cost. The output-layer gradients
  // must be (mu - y) * phi and (mu - y).
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    double phi = rng.uniform(-2, 2);
    double y = trial % 2 ? 1.0 : 0.0;
    Parameter w("w", Tensor::matrix(1, 1, {rng.uniform(-1, 1)}));
    Parameter b("b", Tensor::matrix(1, 1, {rng.uniform(-1, 1)}));
    Graph g;
    int x = g.input();
    int mu = g.sigmoid(g.add(g.matmul(g.param(w), x), g.param(b)));
    int cost = g.bernoulli_nll(mu, {y});
    g.forward({{x, Tensor::matrix(1, 1, {phi})}});
    g.backward(cost);
    double muv = g.value(mu)[0];
    CHECK(b.grad[0] == doctest::Approx(muv - y).epsilon(1e-12));
    CHECK(w.grad[0] == doctest::Approx((muv - y) * phi).epsilon(1e-12));
  }
}

TEST_CASE("backward: fan-out sums contributions, d(x+x)/dx = 2") {
  Graph g;
  int x = g.input();
  int y = g.add(x, x);
  int cost = g.sum_all(y);
  g.forward({{x, Tensor::scalar(1.5)}});
  g.backward(cost);
  CHECK(g.grad(x)[0] == 2.0);
}

TEST_CASE("backward: errors on misuse") {
  Graph g;
  int x = g.input();
  int y = g.tanh(x);
  CHECK_THROWS_AS(g.backward(y), Error);  // before forward
  g.forward({{x, Tensor::vec({1.0, 2.0})}});
  CHECK_THROWS_WITH_AS(g.backward(y), doctest::Contains("scalar"), Error);
}

TEST_CASE("backward: shared parameter across steps receives summed gradient") {
  // two applications of the same weight: cost = w*(w*x); dcost/dw = 2*w*x
  Parameter w("w", Tensor::matrix(1, 1, {3.0}));
  Graph g;
  int x = g.input();
  int wp = g.param(w);
  int h1 = g.matmul(wp, x);
  int h2 = g.matmul(wp, h1);
  int cost = g.sum_all(h2);
  g.forward({{x, Tensor::matrix(1, 1, {5.0})}});
  g.backward(cost);
  CHECK(w.grad[0] == doctest::Approx(2.0 * 3.0 * 5.0));
}

TEST_CASE("finite differences: exact for a linear graph") {
  Parameter w("w", Tensor::matrix(1, 1, {2.0}));
  Graph g;
  int x = g.input();
  int cost = g.sum_all(g.matmul(g.param(w), x));
  // power-of-two step keeps every intermediate exactly representable
  double err = finite_diff_check(g, {{x, Tensor::matrix(1, 1, {3.0})}}, cost,
                                 w, 0.25);
  CHECK(err == 0.0);
}

TEST_CASE("finite differences: sigmoid slope at zero") {
  Parameter b("b", Tensor::matrix(1, 1, {0.0}));
  Graph g;
  int cost = g.sum_all(g.sigmoid(g.param(b)));
  g.forward({});
  g.backward(cost);
  CHECK(b.grad[0] == doctest::Approx(0.25).epsilon(1e-12));
  double err = finite_diff_check(g, {}, cost, b, 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("finite differences: GRU step with random parameters") {
  Rng rng(11);
  nn::GruParams p;
  p.init("gru", 4, 4, rng);
  Graph g;
  int x = g.input();
  int h0 = g.constant(Tensor({4, 1}));
  auto out = nn::gru_step(g, p, x, h0);
  int cost = g.sum_all(out.h);
  Tensor xv({4, 1});
  for (size_t i = 0; i < 4; ++i) xv[i] = rng.uniform(-1, 1);
  for (Parameter* pp : p.parameters()) {
    double err = finite_diff_check(g, {{x, xv}}, cost, *pp, 1e-5);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("determinism: identical graph and bindings give identical results") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Parameter w("w", nn::init_weight(3, 3, rng));
    Parameter b("b", Tensor({3, 1}));
    Graph g;
    int x = g.input();
    int cost = g.sum_all(g.tanh(nn::affine(g, x, g.param(w), g.param(b))));
    Tensor xv({3, 1});
    for (size_t i = 0; i < 3; ++i) xv[i] = rng.uniform(-1, 1);
    g.forward({{x, xv}});
    g.backward(cost);
    return std::make_pair(g.value(cost)[0], w.grad);
  };
  auto [c1, g1] = run(42);
  auto [c2, g2] = run(42);
  CHECK(c1 == c2);
  REQUIRE(g1.size() == g2.size());
  for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("gradient accumulation across graphs sums into the parameter") {
  Parameter w("w", Tensor::matrix(1, 1, {1.0}));
  for (int i = 0; i < 3; ++i) {
    Graph g;
    int x = g.input();
    int cost = g.sum_all(g.matmul(g.param(w), x));
    g.forward({{x, Tensor::matrix(1, 1, {2.0})}});
    g.backward(cost);
  }
  CHECK(w.grad[0] == doctest::Approx(6.0));
  w.zero_grad();
  CHECK(w.grad[0] == 0.0);
}

TEST_CASE("gradient check across every node kind") {
  Rng rng(1234);
  auto randt = [&](std::vector<size_t> shape) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.5, 1.5);
    return t;
  };

  for (int seed = 0; seed < 8; ++seed) {
    // matmul in all four transpose variants
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        Parameter a("a", randt({3, 4}));
        Tensor bv = ta ? randt({3, 5}) : randt({4, 5});
        if (tb) bv = ta ? randt({5, 3}) : randt({5, 4});
        Graph g;
        int b = g.constant(bv);
        int cost = g.sum_all(g.matmul(g.param(a), b, ta, tb));
        CHECK(finite_diff_check(g, {}, cost, a, 1e-5) < 1e-4);
      }

    // unary / binary elementwise chain touching most kinds
    {
      Parameter a("a", randt({4, 3}));
      Parameter bias("bias", randt({4, 1}));
      Graph g;
      int ap = g.param(a);
      int t1 = g.add_bias(ap, g.param(bias));
      int t2 = g.mul(g.sigmoid(t1), g.one_minus(g.tanh(ap)));
      int t3 = g.add(g.scale(t2, 0.7), g.rect(ap));
      int t4 = g.softmax(t3);
      int cost = g.pick_nll(t4, {1, 0, 3});
      CHECK(finite_diff_check(g, {}, cost, a, 1e-5) < 1e-4);
      CHECK(finite_diff_check(g, {}, cost, bias, 1e-5) < 1e-4);
    }

    // structural ops
    {
      Parameter a("a", randt({2, 3}));
      Parameter b("b", randt({4, 3}));
      Graph g;
      int cat = g.concat_rows({g.param(a), g.param(b)});
      int sl = g.slice_rows(cat, 1, 5);
      int sc = g.sum_cols(sl);
      int bc = g.broadcast_cols(sc, 3);
      int cost = g.sum_all(g.tanh(g.mul(bc, sl)));
      CHECK(finite_diff_check(g, {}, cost, a, 1e-5) < 1e-4);
      CHECK(finite_diff_check(g, {}, cost, b, 1e-5) < 1e-4);
    }

    // row broadcast
    {
      Parameter a("a", randt({1, 4}));
      Graph g;
      int br = g.broadcast_rows(g.param(a), 3);
      int cost = g.sum_all(g.sigmoid(br));
      CHECK(finite_diff_check(g, {}, cost, a, 1e-5) < 1e-4);
    }

    // embedding gather
    {
      Parameter e("e", randt({5, 3}));
      Graph g;
      int emb = g.embed(g.param(e), {2, 0, 2, 4});
      int cost = g.sum_all(g.tanh(emb));
      CHECK(finite_diff_check(g, {}, cost, e, 1e-5) < 1e-4);
    }

    // fused cross entropy on logits
    {
      Parameter z("z", randt({5, 3}));
      Graph g;
      int cost = g.cross_entropy(g.param(z), {1, 4, 0}, {1.0, 0.5, 1.0});
      CHECK(finite_diff_check(g, {}, cost, z, 1e-5) < 1e-4);
    }

    // bernoulli and gaussian losses
    {
      Parameter a("a", randt({3, 1}));
      Graph g;
      int mu = g.sigmoid(g.param(a));
      int cost = g.bernoulli_nll(mu, {1.0, 0.0, 1.0});
      CHECK(finite_diff_check(g, {}, cost, a, 1e-5) < 1e-4);
    }
    {
      Parameter m("m", randt({3, 1}));
      Parameter s("s", randt({3, 1}));
      for (size_t i = 0; i < 3; ++i) s.tensor[i] = 0.5 + std::abs(s.tensor[i]);
      Graph g;
      int cost = g.gaussian_nll(g.param(m), g.param(s), {0.3, -0.2, 1.1});
      CHECK(finite_diff_check(g, {}, cost, m, 1e-5) < 1e-4);
      CHECK(finite_diff_check(g, {}, cost, s, 1e-5) < 1e-4);
    }

    // maxout with a safe margin between group members
    {
      Parameter a("a", randt({6, 2}));
      for (size_t grp = 0; grp < 3; ++grp)
        for (size_t j = 0; j < 2; ++j)
          a.tensor.at(grp * 2 + 1, j) = a.tensor.at(grp * 2, j) + 0.3;
      Graph g;
      int cost = g.sum_all(g.maxout(g.param(a), 2));
      CHECK(finite_diff_check(g, {}, cost, a, 1e-5) < 1e-4);
    }
  }
}

TEST_CASE("embed matches explicit one-hot multiplication") {
  Rng rng(5);
  Tensor e = nn::init_weight(4, 3, rng);
  Parameter ep("e", e);
  Graph g;
  int row = g.embed(g.param(ep), {2});
  g.forward({});
  // E^T w_i with w_i one-hot at position 2
  Tensor onehot({4, 1});
  onehot[2] = 1.0;
  Tensor viaMatmul = matmul(e, true, onehot, false);
  for (size_t i = 0; i < 3; ++i) CHECK(g.value(row).at(i, 0) == viaMatmul[i]);
}
