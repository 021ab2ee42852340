// Copyright 2026 The fedsilo Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fedsilo/privacy.hpp"

#include <gtest/gtest.h>

#include <random>

#include "fedsilo/error.hpp"
#include "oracles.hpp"

namespace fedsilo {
namespace {

PrivacyConfig laplace(double eps, double clip, std::optional<std::uint64_t> seed = 1) {
  PrivacyConfig p;
  p.mechanism = PrivacyMechanism::kLaplace;
  p.epsilon = eps;
  p.clip_norm = clip;
  p.noise_seed = seed;
  return p;
}

TEST(Privacy, NoneIsBitIdentity) {
  const auto v = make_vector({0.1, -3.0, 1e300, 5e-324});
  EXPECT_TRUE(apply_dp(v, PrivacyConfig{}).bit_equal(v));
}

TEST(Privacy, ClipHandExample) {
  const auto c = clip_l2(make_vector({6.0, 8.0}), 5.0);
  EXPECT_NEAR(c[0], 3.0, 1e-12);
  EXPECT_NEAR(c[1], 4.0, 1e-12);
  const auto small = make_vector({0.3, 0.4});
  EXPECT_TRUE(clip_l2(small, 5.0).bit_equal(small));
}

TEST(Privacy, ClipNeverExceedsBound) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 10.0);
  std::uniform_real_distribution<double> b(1e-6, 3.0);
  for (int t = 0; t < 2000; ++t) {
    std::vector<double> v(1 + rng() % 64);
    for (auto& x : v) x = g(rng);
    const double bound = b(rng);
    ASSERT_LE(l2_norm(clip_l2(make_vector(v), bound)), bound);
  }
}

TEST(Privacy, LaplaceVarianceMatchesScale) {
  const auto zero = ParameterVector::zeros(make_vector(std::vector<double>(100000, 0.0)).layout_ptr());
  const auto noisy = apply_dp(zero, laplace(1.0, 1.0, 42));
  const std::vector<double> xs(noisy.values().begin(), noisy.values().end());
  EXPECT_NEAR(oracle::sample_variance(xs), 2.0, 0.2);
}

TEST(Privacy, SeededNoiseIsReproducible) {
  const auto v = make_vector({1.0, 2.0, 3.0});
  EXPECT_TRUE(apply_dp(v, laplace(0.5, 1.0, 9)).bit_equal(apply_dp(v, laplace(0.5, 1.0, 9))));
  EXPECT_FALSE(apply_dp(v, laplace(0.5, 1.0, 9)).bit_equal(apply_dp(v, laplace(0.5, 1.0, 10))));
}

TEST(Privacy, HugeEpsilonIsNearlyClipOnly) {
  const auto v = make_vector({6.0, 8.0});
  const auto out = apply_dp(v, laplace(1e9, 5.0));
  EXPECT_NEAR(out[0], 3.0, 1e-6);
  EXPECT_NEAR(out[1], 4.0, 1e-6);
}

TEST(Privacy, Validation) {
  for (const auto& p : {laplace(0.0, 1.0), laplace(1.0, 0.0), laplace(-1.0, 1.0)}) {
    try {
      p.validate();
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidPrivacyConfig);
    }
  }
  EXPECT_THROW(privacy_mechanism_from_name("gaussian"), Error);
}

}  // namespace
}  // namespace fedsilo
