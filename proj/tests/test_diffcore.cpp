#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "vbb/diff/grad_check.hpp"
#include "vbb/diff/nn.hpp"
#include "vbb/diff/optim.hpp"
#include "vbb/diff/rng.hpp"
#include "vbb/diff/tape.hpp"

namespace vbb {
namespace {

// Test-local central differences on a plain function of a flat vector; kept
// apart from grad_check so it can serve as an oracle for it.
std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x, double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = x[i];
    x[i] = s + eps;
    const double up = f(x);
    x[i] = s - eps;
    const double down = f(x);
    x[i] = s;
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * (2 * rng.uniform() - 1);
  return t;
}

TEST(Tensor, ShapeInvariant) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({0, 2}), DimensionError);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
}

TEST(Matmul, HandArithmetic) {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var b = tape.constant(Tensor::matrix(2, 1, {1, 1}));
  Var c = ops::matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c.value()[0], 3.0);
  EXPECT_EQ(c.value()[1], 7.0);
}

TEST(Matmul, IdentityAndShapeErrors) {
  RngStream rng(3, 0);
  Tape tape;
  Tensor a = random_tensor({3, 3}, rng);
  Var av = tape.constant(a);
  Var id = tape.constant(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  EXPECT_TRUE(ops::matmul(av, id).value() == a);
  Var bad = tape.constant(Tensor({2, 2}));
  EXPECT_THROW(ops::matmul(av, bad), DimensionError);
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  RngStream rng(5, 0);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  Tape tape;
  Var av = tape.input(a);
  Var bv = tape.constant(b);
  tape.backward(ops::sum(ops::matmul(av, bv)));
  Tensor ga = tape.grad(av);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(ga.at(i, k), b.at(k, 0) + b.at(k, 1));

  auto f = [&](const std::vector<double>& x) {
    Tape t({.record = false});
    return ops::sum(ops::matmul(t.constant(Tensor({3, 4}, x)), t.constant(b))).value().item();
  };
  auto fd = finite_difference(f, a.storage());
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_LE(rel_err(ga[i], fd[i]), 1e-6);
}

TEST(Elementwise, PointValues) {
  Tape tape;
  Var zero = tape.input(Tensor::scalar(0.0));
  EXPECT_EQ(ops::sigmoid(zero).value().item(), 0.5);
  Var th = ops::tanh(zero);
  tape.backward(th);
  EXPECT_EQ(tape.grad(zero).item(), 1.0);
}

TEST(Elementwise, ReluSubgradient) {
  Tape tape;
  Var x = tape.input(Tensor::vector({-0.5, 0.0, 2.0}));
  tape.backward(ops::sum(ops::relu(x)));
  Tensor g = tape.grad(x);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 1.0);
}

TEST(Elementwise, LogDomainErrorInCheckedMode) {
  Tape tape;
  EXPECT_THROW(ops::log(tape.constant(Tensor::vector({1.0, 0.0}))), DomainError);
  EXPECT_THROW(ops::log(tape.constant(Tensor::vector({-1.0}))), DomainError);
  Tape unchecked({.record = true, .checked = false});
  EXPECT_NO_THROW(ops::log(unchecked.constant(Tensor::vector({1.0}))));
}

TEST(Elementwise, BinaryShapeMismatch) {
  Tape tape;
  EXPECT_THROW(ops::add(tape.constant(Tensor({2})), tape.constant(Tensor({3}))), DimensionError);
}

TEST(Softmax, UniformAndShiftInvariance) {
  Tape tape;
  auto r = ops::softmax_logits(tape.constant(Tensor::vector({0, 0, 0})));
  for (double p : r.probs.value().values()) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);

  RngStream rng(11, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({5}, rng, 4.0);
    Tensor shifted = x;
    for (double& v : shifted.values()) v += 100.0;
    auto a = ops::softmax_logits(tape.constant(x));
    auto b = ops::softmax_logits(tape.constant(shifted));
    double total = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(a.probs.value()[i], b.probs.value()[i], 1e-12);
      total += a.probs.value()[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Softmax, KnownValues) {
  // e^x_i / sum_j e^x_j evaluated at 30 significant digits.
  Tape tape;
  auto r = ops::softmax_logits(tape.constant(Tensor::vector({1, 2, 3})));
  EXPECT_NEAR(r.probs.value()[0], 0.0900305731703804580, 1e-12);
  EXPECT_NEAR(r.probs.value()[1], 0.2447284710547976525, 1e-12);
  EXPECT_NEAR(r.probs.value()[2], 0.6652409557748218895, 1e-12);
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  EXPECT_NEAR(r.logprobs.value()[0], 1.0 - lse, 1e-12);
}

TEST(GaussianSample, Moments) {
  RngStream rng(2024, 7);
  Tape tape({.record = false});
  Var mu = tape.constant(Tensor({100000}, 0.0));
  Var sigma = tape.constant(Tensor({100000}, 1.0));
  Var z = ops::gaussian_sample(mu, sigma, rng);
  double m = 0, v = 0;
  for (double x : z.value().values()) m += x;
  m /= 1e5;
  for (double x : z.value().values()) v += (x - m) * (x - m);
  v /= 1e5;
  EXPECT_NEAR(m, 0.0, 0.02);
  EXPECT_NEAR(v, 1.0, 0.05);
}

TEST(GaussianSample, ReparameterizationGradientAndDomain) {
  RngStream rng(1, 1);
  Tape tape;
  Var mu = tape.input(Tensor::vector({0.3, -1.0, 2.0}));
  Var sigma = tape.input(Tensor::vector({1.0, 0.5, 2.0}));
  Var z = ops::gaussian_sample(mu, sigma, rng);
  tape.backward(ops::sum(z));
  for (double g : tape.grad(mu).values()) EXPECT_EQ(g, 1.0);
  // d z / d sigma = eps = (z - mu) / sigma
  Tensor gs = tape.grad(sigma);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(gs[i], (z.value()[i] - mu.value()[i]) / sigma.value()[i], 1e-12);

  EXPECT_THROW(ops::gaussian_sample(mu, tape.constant(Tensor::vector({1, 0, 1})), rng), DomainError);
  Var zero_sigma = tape.constant(Tensor::vector({0, 0, 0}));
  Var exact = ops::gaussian_sample(mu, zero_sigma, rng, /*allow_zero_sigma=*/true);
  EXPECT_TRUE(exact.value() == mu.value());
}

TEST(BernoulliSample, EdgesFrequencyAndDomain) {
  RngStream rng(9, 3);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(bernoulli_sample(0.0, rng), 0);
    EXPECT_EQ(bernoulli_sample(1.0, rng), 1);
  }
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += bernoulli_sample(0.3, rng);
  EXPECT_GE(hits / 1e4, 0.28);
  EXPECT_LE(hits / 1e4, 0.32);
  EXPECT_THROW(bernoulli_sample(1.2, rng), DomainError);
  EXPECT_THROW(bernoulli_sample(-0.1, rng), DomainError);
}

TEST(RngStream, ReplayAndIndependence) {
  RngStream a(42, 1), b(42, 1), c(42, 2);
  std::vector<std::uint64_t> xa, xc;
  for (int i = 0; i < 100; ++i) {
    const auto v = a.next_u64();
    EXPECT_EQ(v, b.next_u64());
    xa.push_back(v);
    xc.push_back(c.next_u64());
  }
  EXPECT_NE(xa, xc);
  RngStream restored(a.state());
  EXPECT_EQ(restored.next_u64(), a.next_u64());

  // Crude independence check between adjacent streams: correlation of uniforms.
  RngStream s1(7, 10), s2(7, 11);
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = s1.uniform(), y = s2.uniform();
    sx += x, sy += y, sxy += x * y, sxx += x * x, syy += y * y;
  }
  const double cov = sxy / n - sx / n * sy / n;
  const double corr = cov / std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
  EXPECT_LT(std::abs(corr), 4.0 / std::sqrt(n));
}

TEST(Lstm, ZeroWeightsZeroState) {
  ParameterStore store;
  RngStream rng(1, 0);
  LstmCell cell(store, "lstm", 4, 128, rng);
  for (auto& p : store) p.value.fill(0.0);
  Tape tape;
  Var x = tape.constant(Tensor({1, 4}, 0.7));
  LstmState s{tape.constant(Tensor({1, 128})), tape.constant(Tensor({1, 128}))};
  LstmState next = lstm_step(tape, cell, x, s);
  for (double v : next.h.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : next.c.value().values()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, GatesInUnitIntervalAndShapeErrors) {
  ParameterStore store;
  RngStream rng(2, 0);
  LstmCell cell(store, "lstm", 6, 16, rng);
  Tape tape;
  for (int trial = 0; trial < 20; ++trial) {
    Var x = tape.constant(random_tensor({3, 6}, rng, 3.0));
    LstmState s{tape.constant(random_tensor({3, 16}, rng)), tape.constant(random_tensor({3, 16}, rng))};
    LstmGates gates;
    cell(tape, x, s, &gates);
    for (Var g : {gates.input, gates.forget, gates.output})
      for (double v : g.value().values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
  }
  Var bad = tape.constant(Tensor({3, 5}));
  LstmState s{tape.constant(Tensor({3, 16})), tape.constant(Tensor({3, 16}))};
  EXPECT_THROW(cell(tape, bad, s), DimensionError);
}

TEST(Lstm, FullCellJacobianMatchesFiniteDifferences) {
  ParameterStore store;
  RngStream rng(3, 0);
  LstmCell cell(store, "lstm", 5, 8, rng);
  Tensor x0 = random_tensor({2, 5}, rng), h0 = random_tensor({2, 8}, rng), c0 = random_tensor({2, 8}, rng);
  // Jacobian rows: gradients of each output element of (h', c') wrt inputs and state.
  // Output index < 8 selects h', otherwise c'; rows are weighted 1 and 0.5.
  for (std::size_t out = 0; out < 16; ++out) {
    Tape tape;
    Var x = tape.input(x0), h = tape.input(h0), c = tape.input(c0);
    LstmState n = cell(tape, x, {h, c});
    Tensor w({2, 8}, 0.0);
    w.at(0, out % 8) = 1.0;
    w.at(1, out % 8) = 0.5;
    Var y = out < 8 ? n.h : n.c;
    tape.backward(ops::sum(ops::mul(y, tape.constant(w))));
    std::vector<double> flat;
    for (const Tensor* t : {&x0, &h0, &c0}) flat.insert(flat.end(), t->values().begin(), t->values().end());
    auto f = [&](const std::vector<double>& v) {
      Tape t2({.record = false});
      Tensor xx({2, 5}, std::vector<double>(v.begin(), v.begin() + 10));
      Tensor hh({2, 8}, std::vector<double>(v.begin() + 10, v.begin() + 26));
      Tensor cc({2, 8}, std::vector<double>(v.begin() + 26, v.end()));
      LstmState s = cell(t2, t2.constant(xx), {t2.constant(hh), t2.constant(cc)});
      const Tensor& yy = out < 8 ? s.h.value() : s.c.value();
      return yy.at(0, out % 8) + 0.5 * yy.at(1, out % 8);
    };
    auto fd = finite_difference(f, flat);
    std::vector<double> an;
    for (Var v : {x, h, c}) {
      Tensor g = tape.grad(v);
      an.insert(an.end(), g.values().begin(), g.values().end());
    }
    for (std::size_t i = 0; i < fd.size(); ++i) ASSERT_LE(rel_err(an[i], fd[i]), 1e-4) << "output " << out << " i " << i;
  }
}

TEST(Backward, ProductRuleAndUnusedParameters) {
  Tape tape;
  Var x = tape.input(Tensor::scalar(2.0));
  Var y = tape.input(Tensor::scalar(3.0));
  Var unused = tape.input(Tensor::scalar(5.0));
  tape.backward(ops::mul(x, y));
  EXPECT_EQ(tape.grad(x).item(), 3.0);
  EXPECT_EQ(tape.grad(y).item(), 2.0);
  EXPECT_EQ(tape.grad(unused).item(), 0.0);

  ParameterStore store;
  Parameter& used = store.add("used", Tensor::scalar(1.5));
  Parameter& idle = store.add("idle", Tensor::scalar(-2.0));
  Tape t2;
  Var u = t2.parameter(used);
  (void)t2.parameter(idle);
  t2.backward(ops::square(u));
  EXPECT_EQ(used.grad.item(), 3.0);
  EXPECT_EQ(idle.grad.item(), 0.0);
}

TEST(Backward, RejectsNonScalarLossAndReuse) {
  Tape tape;
  Var x = tape.input(Tensor::vector({1, 2}));
  EXPECT_THROW(tape.backward(x), ContractError);
  Var s = ops::sum(x);
  tape.backward(s);
  EXPECT_THROW(tape.backward(s), ContractError);
}

TEST(Backward, CompositeTanhLayerMatchesFiniteDifferences) {
  RngStream rng(17, 0);
  for (int draw = 0; draw < 10; ++draw) {
    ParameterStore store;
    Linear layer(store, "fc", 4, 3, rng);
    Tensor x = random_tensor({2, 4}, rng);
    std::vector<Parameter*> ps = store.pointers();
    GradCheckReport rep = grad_check(
        [&](Tape& t) { return ops::sum(ops::tanh(layer(t, t.constant(x)))); }, ps, 1e-4);
    EXPECT_TRUE(rep.passed) << rep.worst_parameter << " " << rep.max_rel_error;
  }
}

TEST(RmsProp, HandEvaluatedUpdate) {
  Tensor theta = Tensor::scalar(1.0);
  RmsPropState state;
  rmsprop_update(theta, Tensor::scalar(1.0), state, 0.1, 0.9, 1e-8);
  EXPECT_NEAR(state.square_avg.item(), 0.1, 1e-15);
  EXPECT_NEAR(theta.item(), 0.68377224398316175, 1e-12);
}

TEST(RmsProp, ZeroGradientAndDeterminism) {
  Tensor theta = Tensor::vector({0.3, -0.2});
  RmsPropState state;
  state.square_avg = Tensor::vector({0.5, 0.1});
  Tensor before = theta;
  rmsprop_update(theta, Tensor::vector({0.0, 0.0}), state, 0.01, 0.99, 1e-8);
  EXPECT_TRUE(bitwise_equal(theta, before));

  Tensor a = Tensor::vector({1.0, 2.0}), b = a;
  RmsPropState sa, sb;
  rmsprop_update(a, Tensor::vector({0.1, -0.3}), sa, 7e-4, 0.99, 1e-8);
  rmsprop_update(b, Tensor::vector({0.1, -0.3}), sb, 7e-4, 0.99, 1e-8);
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_TRUE(bitwise_equal(sa.square_avg, sb.square_avg));
}

TEST(GradCheck, LinearFunctionIsExact) {
  ParameterStore store;
  Parameter& w = store.add("w", Tensor::vector({0.5, -1.25, 2.0}));
  Tensor c = Tensor::vector({3.0, 1.0, -2.0});
  auto rep = grad_check([&](Tape& t) { return ops::sum(ops::mul(t.parameter(w), t.constant(c))); }, {&w}, 1e-10);
  EXPECT_TRUE(rep.passed) << rep.max_rel_error;
  EXPECT_LE(rep.max_rel_error, 1e-10);
}

TEST(GradCheck, DetectsCorruptedAdjoint) {
  ParameterStore store;
  Parameter& w = store.add("w", Tensor::vector({0.3, 0.7}));
  auto broken = [&](Tape& t) {
    // Forward is sin, but the adjoint claims 1.3*cos.
    return ops::sum(ops::unary(
        t.parameter(w), [](double x) { return std::sin(x); },
        [](double x, double) { return 1.3 * std::cos(x); }, "broken_sin"));
  };
  auto rep = grad_check(broken, {&w}, 1e-4);
  EXPECT_FALSE(rep.passed);
  EXPECT_GT(rep.max_rel_error, 1e-2);
}

// Every differentiable primitive, >= 10 random draws each.
TEST(GradCheck, EveryPrimitive) {
  using Fn = std::function<Var(Tape&, Var, Var)>;
  const std::vector<std::pair<const char*, Fn>> cases = {
      {"add", [](Tape&, Var a, Var b) { return ops::add(a, b); }},
      {"sub", [](Tape&, Var a, Var b) { return ops::sub(a, b); }},
      {"mul", [](Tape&, Var a, Var b) { return ops::mul(a, b); }},
      {"tanh", [](Tape&, Var a, Var) { return ops::tanh(a); }},
      {"relu", [](Tape&, Var a, Var) { return ops::relu(a); }},
      {"sigmoid", [](Tape&, Var a, Var) { return ops::sigmoid(a); }},
      {"exp", [](Tape&, Var a, Var) { return ops::exp(a); }},
      {"log", [](Tape&, Var a, Var) { return ops::log(ops::add_scalar(ops::square(a), 0.5)); }},
      {"softplus", [](Tape&, Var a, Var) { return ops::softplus(a); }},
      {"logaddexp", [](Tape&, Var a, Var b) { return ops::logaddexp(a, b); }},
      {"clamp", [](Tape&, Var a, Var) { return ops::clamp(a, -0.6, 0.6); }},
      {"matmul", [](Tape&, Var a, Var b) { return ops::matmul(a, ops::slice_cols(b, 0, 3)); }},
      {"add_row", [](Tape&, Var a, Var b) { return ops::add_row(a, ops::slice_cols(b, 0, 1)); }},
      {"mul_col", [](Tape&, Var a, Var b) { return ops::mul_col(a, ops::slice_cols(b, 1, 1)); }},
      {"row_sum", [](Tape&, Var a, Var) { return ops::row_sum(a); }},
      {"concat", [](Tape&, Var a, Var b) { return ops::concat_cols(a, b); }},
      {"log_softmax", [](Tape&, Var a, Var) { return ops::log_softmax(a); }},
      {"softmax", [](Tape&, Var a, Var) { return ops::softmax_logits(a).probs; }},
      {"pick", [](Tape&, Var a, Var) { return ops::pick(a, {0, 2, 1}); }},
      {"select_rows", [](Tape&, Var a, Var b) { return ops::select_rows({true, false, true}, a, b); }},
  };
  RngStream rng(99, 0);
  for (const auto& [name, fn] : cases) {
    for (int draw = 0; draw < 10; ++draw) {
      ParameterStore store;
      Parameter& a = store.add("a", random_tensor({3, 3}, rng, 1.5));
      Parameter& b = store.add("b", random_tensor({3, 3}, rng, 1.5));
      // Keep clamp/relu probes away from their kinks.
      for (double& v : a.value.values())
        if (std::abs(v) < 0.05 || std::abs(std::abs(v) - 0.6) < 0.05) v += 0.2;
      Tensor weights = random_tensor({3, 6}, rng);
      auto loss = [&](Tape& t) {
        Var out = fn(t, t.parameter(a), t.parameter(b));
        Var w = t.constant(Tensor({out.rows(), out.cols()},
                                  std::vector<double>(weights.storage().begin(),
                                                      weights.storage().begin() + static_cast<long>(out.value().size()))));
        return ops::sum(ops::mul(out, w));
      };
      auto rep = grad_check(loss, {&a, &b}, 1e-4);
      EXPECT_TRUE(rep.passed) << name << " draw " << draw << " err " << rep.max_rel_error << " at "
                              << rep.worst_parameter << "[" << rep.worst_index << "]";
    }
  }
}

TEST(Determinism, IdenticalSeedsBitIdenticalTensors) {
  auto run = [] {
    ParameterStore store;
    RngStream rng(123, 4);
    Linear l1(store, "l1", 6, 8, rng);
    LstmCell cell(store, "cell", 8, 8, rng);
    Tape tape;
    Var x = tape.constant(random_tensor({2, 6}, rng));
    LstmState s{tape.constant(Tensor({2, 8})), tape.constant(Tensor({2, 8}))};
    s = cell(tape, ops::tanh(l1(tape, x)), s);
    Var z = ops::gaussian_sample(s.h, ops::add_scalar(ops::sigmoid(s.c), 0.1), rng);
    tape.backward(ops::sum(ops::square(z)));
    std::vector<Tensor> out{z.value()};
    for (auto& p : store) out.push_back(p.grad);
    return out;
  };
  auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bitwise_equal(a[i], b[i]));
}

TEST(ClipGradNorm, RescalesToMaxNorm) {
  ParameterStore store;
  Parameter& p = store.add("p", Tensor::vector({0, 0}));
  p.grad = Tensor::vector({3.0, 4.0});
  EXPECT_DOUBLE_EQ(clip_grad_norm(store, 0.5), 5.0);
  EXPECT_NEAR(p.grad[0], 0.3, 1e-15);
  EXPECT_NEAR(p.grad[1], 0.4, 1e-15);
}

}  // namespace
}  // namespace vbb
