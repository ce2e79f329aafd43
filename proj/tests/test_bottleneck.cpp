#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "vbb/bottleneck.hpp"
#include "vbb/diff/grad_check.hpp"

namespace vbb {
namespace {

using namespace bottleneck;

class FixedProvider : public PrivilegedProvider {
 public:
  explicit FixedProvider(std::vector<double> v) : v_(std::move(v)) {}
  std::size_t dim() const override { return v_.size(); }
  std::vector<double> v_;

 protected:
  std::vector<double> produce() override { return v_; }
};

class FailingProvider : public PrivilegedProvider {
 public:
  std::size_t dim() const override { return 2; }

 protected:
  std::vector<double> produce() override { throw ProviderError("planner unavailable"); }
};

Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = scale * (2 * rng.uniform() - 1);
  return t;
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

TEST(KlGaussian, ClosedFormValues) {
  std::vector<double> mu0{0.0}, s1{1.0}, mu1{1.0}, muh{0.5}, s08{0.8};
  EXPECT_DOUBLE_EQ(kl_gaussian(mu0, s1), 0.0);
  EXPECT_DOUBLE_EQ(kl_gaussian(mu1, s1), 0.5);
  // 0.5 * (0.25 + 0.64 - ln 0.64 - 1), 30-digit evaluation
  EXPECT_NEAR(kl_gaussian(muh, s08), 0.168143551314209756, 1e-12);
  std::vector<double> bad{0.0};
  EXPECT_THROW(kl_gaussian(mu0, bad), DomainError);
}

TEST(KlGaussian, TapeVersionGradientWrtMuIsMu) {
  Tape tape;
  Var mu = tape.input(Tensor::matrix(1, 3, {0.2, -1.5, 3.0}));
  Var sigma = tape.constant(Tensor({1, 3}, 1.0));
  Var kl = kl_gaussian(mu, sigma);
  EXPECT_NEAR(kl.value().item(), 0.5 * (0.04 + 2.25 + 9.0), 1e-12);
  tape.backward(ops::sum(kl));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(tape.grad(mu)[i], mu.value()[i], 1e-12);
}

TEST(KlMixture, EndpointsAndReferenceValue) {
  const std::vector<double> zero{0.0};
  // Closed at d = 1 and the d -> 0 limit ln N(0; 0, 1).
  EXPECT_EQ(kl_mixture_exact(1.0, log_std_normal(zero)), 0.0);
  EXPECT_NEAR(kl_mixture_exact(0.0, log_std_normal(zero)), -0.918938533204672742, 1e-12);
  // Independent 30-digit evaluation: 0.0658196954187569581...
  EXPECT_NEAR(kl_mixture(0.5, zero), 0.0658196954187569581, 1e-12);

  // Near the clamp the cost is O(1e-6 * (|ln p(f)| + |ln 1e-6|)): below 1e-5
  // for 64-dimensional codes, and small but not inside 1e-5 of zero in general.
  RngStream rng(5, 5);
  for (int i = 0; i < 100; ++i) {
    Tensor f = random_tensor({64}, rng, 3.0);
    const double near_one = kl_mixture(1.0 - 1e-6, f.values());
    EXPECT_LT(near_one, 1e-5);
    EXPECT_LE(std::abs(near_one), 1e-6 * (2.0 + std::abs(log_std_normal(f.values())) + 13.9));
    EXPECT_EQ(kl_mixture_exact(1.0, log_std_normal(f.values())), 0.0);
  }
}

TEST(KlMixture, ApproachesLogDensityAsCapacityVanishes) {
  RngStream rng(6, 0);
  Tensor f = random_tensor({8}, rng);
  const double lpf = log_std_normal(f.values());
  double prev_gap = INFINITY;
  for (double d : {1e-2, 1e-4, 1e-6, 1e-9}) {
    const double gap = std::abs(kl_mixture_exact(d, lpf) - lpf);
    EXPECT_LT(gap, prev_gap);
    prev_gap = gap;
  }
  EXPECT_LT(prev_gap, 1e-6);
}

TEST(KlMixture, TapeMatchesScalarAndIsFiniteAcrossTheInterval) {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor f = random_tensor({1, 64}, rng, 2.5);
    for (double d = 0.0; d <= 1.0; d += 0.01) {
      Tape tape;
      Var kl = kl_mixture(tape.constant(Tensor::matrix(1, 1, {d})), tape.constant(f));
      ASSERT_TRUE(std::isfinite(kl.value().item()));
      EXPECT_NEAR(kl.value().item(), kl_mixture(d, f.values()), 1e-9);
    }
  }
}

TEST(KlMixture, GradientCheckOnCapacityAndCode) {
  RngStream rng(8, 0);
  for (int draw = 0; draw < 10; ++draw) {
    ParameterStore store;
    Tensor d0({4, 1});
    for (double& v : d0.values()) v = 0.05 + 0.9 * rng.uniform();
    Parameter& d = store.add("d", d0);
    Parameter& f = store.add("f", random_tensor({4, 6}, rng, 1.5));
    auto rep = grad_check([&](Tape& t) { return ops::sum(kl_mixture(t.parameter(d), t.parameter(f))); }, {&d, &f}, 1e-4);
    EXPECT_TRUE(rep.passed) << rep.worst_parameter << " " << rep.max_rel_error;
  }
}

TEST(NatsToBits, Conversions) {
  EXPECT_EQ(nats_to_bits(0.0), 0.0);
  EXPECT_DOUBLE_EQ(nats_to_bits(std::log(2.0)), 1.0);
  EXPECT_NEAR(nats_to_bits(0.065820), 0.0949581876, 1e-9);
}

TEST(CapacityHead, ZeroWeightsSaturationAndRange) {
  ParameterStore store;
  RngStream rng(1, 0);
  CapacityHeadDirect head(store, "cap", 16, 128, rng);
  for (auto& p : store) p.value.fill(0.0);
  Tape tape;
  Var s = tape.constant(random_tensor({3, 16}, rng));
  for (double v : head(tape, s).value().values()) EXPECT_EQ(v, 0.5);
  head.output_layer().bias().value[0] = 10.0;
  Tape fresh;  // a tape snapshots parameter values on first use
  for (double v : head(fresh, fresh.constant(s.value())).value().values()) EXPECT_GT(v, 0.9999);

  ParameterStore store2;
  CapacityHeadDirect random_head(store2, "cap", 16, 128, rng);
  for (int i = 0; i < 50; ++i) {
    for (double v : random_head(tape, tape.constant(random_tensor({2, 16}, rng, 5.0))).value().values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(CapacityHeadGaussian, ClosedFormCases) {
  ParameterStore store;
  RngStream rng(2, 0);
  CapacityHeadGaussian head(store, "gcap", 4, 8, 1, rng);
  for (auto& p : store) p.value.fill(0.0);
  // softplus(b) + 1e-6 == 1  ->  b = ln(e^(1 - 1e-6) - 1)
  head.sigma_layer().bias().value[0] = std::log(std::exp(1.0 - 1e-6) - 1.0);
  Tape tape;
  Var s = tape.constant(random_tensor({1, 4}, rng));
  auto out = head.forward(tape, s);
  EXPECT_NEAR(out.capacity.value().item(), 0.0, 1e-12);
  EXPECT_NEAR(out.d_cap.value().item(), 0.5, 1e-12);

  head.mu_layer().bias().value[0] = 1.0;
  Tape fresh;
  out = head.forward(fresh, fresh.constant(s.value()));
  EXPECT_NEAR(out.capacity.value().item(), 0.5, 1e-12);
  EXPECT_NEAR(out.d_cap.value().item(), 0.622459331201854565, 1e-12);
}

TEST(CapacityHeadGaussian, OutputWithinClampBounds) {
  ParameterStore store;
  RngStream rng(3, 0);
  CapacityHeadGaussian head(store, "gcap", 4, 8, 3, rng);
  for (auto& p : store)
    for (double& v : p.value.values()) v *= 6.0;
  Tape tape;
  for (int i = 0; i < 200; ++i) {
    const double d = head(tape, tape.constant(random_tensor({1, 4}, rng, 4.0))).value().item();
    EXPECT_GE(d, 0.11920292202211755 - 1e-15);
    EXPECT_LE(d, 0.88079707797788244 + 1e-15);
  }
}

struct ToyChannel {
  ParameterStore store;
  Encoder encoder;
  explicit ToyChannel(double atom) {
    RngStream rng(4, 0);
    encoder = Encoder(store, "enc", 1, 1, 1, rng);
    for (auto& p : store) p.value.fill(0.0);
    encoder.layer().bias().value[0] = atom;
  }
};

TEST(SampleZ, OpenGateIsDeterministicEncoding) {
  ToyChannel toy(0.7);
  FixedProvider provider({1.0});
  RngStream rng(10, 0);
  PrivilegedProvider* providers[] = {&provider};
  for (int i = 0; i < 100; ++i) {
    Tape tape;
    Var s = tape.constant(Tensor({1, 1}, 0.3));
    auto out = sample_z(tape, toy.encoder, s, tape.constant(Tensor({1, 1}, 1.0)), providers, {&rng, 1},
                        {.mode = Mode::eval});
    EXPECT_EQ(out.accessed[0], 1);
    EXPECT_EQ(out.z.value().item(), 0.7);
  }
}

TEST(SampleZ, ClosedGateNeverQueriesInEval) {
  ToyChannel toy(0.7);
  FixedProvider provider({1.0});
  RngStream rng(11, 0);
  PrivilegedProvider* providers[] = {&provider};
  for (int i = 0; i < 500; ++i) {
    Tape tape({.record = false});
    auto out = sample_z(tape, toy.encoder, tape.constant(Tensor({1, 1}, 0.3)), tape.constant(Tensor({1, 1}, 0.0)),
                        providers, {&rng, 1}, {.mode = Mode::eval});
    EXPECT_EQ(out.accessed[0], 0);
    EXPECT_FALSE(out.record(0).kl_nats.has_value());
  }
  EXPECT_EQ(provider.invocations(), 0u);
}

TEST(SampleZ, TrainModeAlwaysQueriesAndReportsCost) {
  ToyChannel toy(0.0);
  FixedProvider provider({1.0});
  RngStream rng(12, 0);
  PrivilegedProvider* providers[] = {&provider};
  Tape tape;
  auto out = sample_z(tape, toy.encoder, tape.constant(Tensor({1, 1}, 0.3)), tape.constant(Tensor({1, 1}, 0.5)),
                      providers, {&rng, 1}, {.mode = Mode::train});
  EXPECT_EQ(provider.invocations(), 1u);
  ASSERT_TRUE(out.record(0).kl_nats.has_value());
  EXPECT_NEAR(*out.record(0).kl_nats, 0.0658196954187569581, 1e-12);
}

TEST(SampleZ, ProviderErrorPropagates) {
  ParameterStore store;
  RngStream rng(13, 0);
  Encoder enc(store, "enc", 2, 2, 3, rng);
  FailingProvider bad;
  PrivilegedProvider* providers[] = {&bad};
  Tape tape;
  EXPECT_THROW(sample_z(tape, enc, tape.constant(Tensor({1, 2})), tape.constant(Tensor({1, 1}, 1.0)), providers,
                        {&rng, 1}, {.mode = Mode::eval}),
               ProviderError);
}

// Monte-Carlo vs the analytic mixture 0.3 * delta(f) + 0.7 * N(0,1).
TEST(SampleZ, MixtureDistributionMatchesAnalytic) {
  const double atom = 0.7;
  ToyChannel toy(atom);
  FixedProvider provider({1.0});
  RngStream rng(14, 0);
  PrivilegedProvider* providers[] = {&provider};
  const int n = 10000;
  int atoms = 0;
  std::vector<double> continuous;
  for (int i = 0; i < n; ++i) {
    Tape tape({.record = false});
    auto out = sample_z(tape, toy.encoder, tape.constant(Tensor({1, 1}, 0.0)), tape.constant(Tensor({1, 1}, 0.3)),
                        providers, {&rng, 1}, {.mode = Mode::eval});
    const double z = out.z.value().item();
    if (out.accessed[0]) {
      ++atoms;
      EXPECT_EQ(z, atom);
    } else {
      continuous.push_back(z);
    }
  }
  EXPECT_NEAR(static_cast<double>(atoms) / n, 0.3, 0.02);
  EXPECT_EQ(provider.invocations(), static_cast<std::size_t>(atoms));
  std::sort(continuous.begin(), continuous.end());
  double ks = 0.0;
  const double m = static_cast<double>(continuous.size());
  for (std::size_t i = 0; i < continuous.size(); ++i) {
    const double cdf = std_normal_cdf(continuous[i]);
    ks = std::max({ks, std::abs(cdf - i / m), std::abs((i + 1) / m - cdf)});
  }
  EXPECT_LT(ks, 1.628 / std::sqrt(m));  // alpha = 0.01
}

TEST(SampleZ, SoftMixRoutesTaskGradientToCapacity) {
  ToyChannel toy(0.7);
  FixedProvider provider({1.0});
  RngStream rng(15, 0);
  PrivilegedProvider* providers[] = {&provider};
  for (auto estimator : {GateEstimator::none, GateEstimator::soft_mix}) {
    Tape tape;
    Var d = tape.input(Tensor({1, 1}, 0.4));
    auto out = sample_z(tape, toy.encoder, tape.constant(Tensor({1, 1}, 0.0)), d, providers, {&rng, 1},
                        {.mode = Mode::train, .estimator = estimator});
    const double z_hard = out.accessed[0] ? 0.7 : 0.0;
    if (out.accessed[0]) EXPECT_EQ(out.z.value().item(), z_hard);
    tape.backward(ops::sum(out.z));
    if (estimator == GateEstimator::none) {
      EXPECT_EQ(tape.grad(d).item(), 0.0);
    } else {
      EXPECT_NE(tape.grad(d).item(), 0.0);
    }
  }
}

TEST(VibSample, ZeroMeanUnitScaleIsPriorNoise) {
  ParameterStore store;
  RngStream rng(16, 0);
  VibChannel vib(store, "vib", 3, 2, 4, rng);
  for (auto& p : store) p.value.fill(0.0);
  for (double& b : vib.sigma_layer().bias().value.values()) b = std::log(std::exp(1.0 - 1e-6) - 1.0);
  FixedProvider provider({0.5, -0.5});
  PrivilegedProvider* providers[] = {&provider};
  RngStream noise_a(20, 0), noise_b(20, 0);
  Tape tape;
  auto out = vib_sample(tape, vib, tape.constant(Tensor({1, 3}, 0.1)), providers, {&noise_a, 1});
  EXPECT_NEAR(out.kl.value().item(), 0.0, 1e-12);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(out.z.value()[k], noise_b.normal(), 1e-5);

  auto det = vib_sample(tape, vib, tape.constant(Tensor({1, 3}, 0.1)), providers, {&noise_a, 1}, true);
  EXPECT_TRUE(det.z.value() == det.mu.value());
}

}  // namespace
}  // namespace vbb
