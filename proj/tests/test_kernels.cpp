#include <random>

#include <gtest/gtest.h>

#include "popctrl/kernels.hpp"

using namespace popctrl;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

// Sizes on both sides of the fork threshold.
class KernelParity : public ::testing::TestWithParam<int> {};

TEST_P(KernelParity, ParallelMatchesSerialBitForBit) {
  const int n = GetParam();
  std::mt19937_64 rng(n);
  const auto prev = random_vector(rng, n);
  const auto surv = random_vector(rng, n);
  const auto coef = random_vector(rng, n);
  const auto x = random_vector(rng, n);

  std::vector<double> a(n, 7.0), b(n, 7.0);
  kernels::transport_forward(prev, surv, a);
  kernels::serial::transport_forward(prev, surv, b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0], 7.0);

  kernels::transport_backward(prev, surv, a);
  kernels::serial::transport_backward(prev, surv, b);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.back(), 0.0);

  kernels::inject(a, coef, 0.3, x);
  kernels::serial::inject(b, coef, 0.3, x);
  EXPECT_EQ(a, b);

  kernels::add_scaled(a, coef, -1.7);
  kernels::serial::add_scaled(b, coef, -1.7);
  EXPECT_EQ(a, b);
}

INSTANTIATE_TEST_SUITE_P(Sizes, KernelParity, ::testing::Values(2, 65, kernels::kParallelThreshold + 17, 50000));

TEST(Kernels, BackwardIsTransposeOfForward) {
  std::mt19937_64 rng(3);
  const int n = 40;
  const auto x = random_vector(rng, n);
  const auto y = random_vector(rng, n);
  const auto s = random_vector(rng, n);
  std::vector<double> fx(n, 0.0), by(n, 0.0);
  kernels::transport_forward(x, s, fx);
  kernels::transport_backward(y, s, by);
  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < n; ++i) {
    lhs += fx[i] * y[i];
    rhs += x[i] * by[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-12);
}
